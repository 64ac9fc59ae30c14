import json
import socket
import threading

import pytest

from chaffsearch import attest, channel as channel_mod, wire
from chaffsearch.backend import BackendError
from chaffsearch.broker import ProxyError, ProtocolError, connect_and_attest
from chaffsearch.mock_engine import MockCorpus, search_mock
from chaffsearch.obfuscate import parse

from conftest import TOPIC_DOCS, RecordingTransport


MEASUREMENT = attest.compute_measurement()


def broker_for(handle, transport=None):
    return connect_and_attest(("127.0.0.1", handle.port), MEASUREMENT, transport=transport)


def corpus_from_docs():
    from chaffsearch.results import SearchResult

    return MockCorpus([SearchResult(**d) for d in TOPIC_DOCS])


class TestPipeline:
    def test_k0_identity_with_direct_mock(self, proxy_factory):
        handle = proxy_factory(k=0)
        corpus = corpus_from_docs()
        with broker_for(handle) as session:
            for text in ("jaguar speed", "chocolate cake", "enclave attestation"):
                resp = session.query(text)
                direct = search_mock(corpus, text)
                assert [r.to_dict() for r in resp.results] == [r.to_dict() for r in direct]
                assert resp.k_effective == 0

    def test_k2_disjoint_topics_keeps_only_real_topic(self, proxy_factory, tmp_path):
        seed = tmp_path / "seed.txt"
        seed.write_text("chocolate cake recipe\nsgx attestation\n", encoding="utf-8")
        handle = proxy_factory(k=2, seed_file=str(seed))
        corpus = corpus_from_docs()
        with broker_for(handle) as session:
            resp = session.query("jaguar speed")
        # decoys come from the off-topic seed pool, so filtering must leave
        # exactly the direct answer for the jaguar query
        direct = search_mock(corpus, "jaguar speed")
        assert [r.to_dict() for r in resp.results] == [r.to_dict() for r in direct]
        assert resp.k_effective == 2

    def test_k2_results_within_per_sub_query_union(self, proxy_factory, tmp_path):
        seed = tmp_path / "seed.txt"
        seed_queries = ["chocolate cake recipe", "sgx attestation"]
        seed.write_text("\n".join(seed_queries) + "\n", encoding="utf-8")
        handle = proxy_factory(k=2, seed_file=str(seed))
        corpus = corpus_from_docs()
        with broker_for(handle) as session:
            resp = session.query("jaguar habitat")
        union = set()
        for text in ["jaguar habitat"] + seed_queries:
            union |= {r.url for r in search_mock(corpus, text)}
        assert {r.url for r in resp.results} <= union

    def test_bootstrap_degradation_flagged(self, proxy_factory):
        handle = proxy_factory(k=3)  # no seed file: empty history
        with broker_for(handle) as session:
            resp = session.query("first ever query")
        assert resp.k_effective == 0
        assert resp.degraded

    def test_k_override_byte(self, proxy_factory, tmp_path):
        seed = tmp_path / "seed.txt"
        seed.write_text("alpha one\nbeta two\n", encoding="utf-8")
        handle = proxy_factory(k=0, seed_file=str(seed))
        with broker_for(handle) as session:
            assert session.query("plain default").k_effective == 0
            assert session.query("with override", k_override=2).k_effective == 2

    def test_engine_facing_payload_is_subqueries_only(self, proxy_factory, tmp_path):
        seed = tmp_path / "seed.txt"
        seed.write_text("alpha one\nbeta two\n", encoding="utf-8")
        handle = proxy_factory(k=2, seed_file=str(seed))
        engine_payloads = []
        ocalls = handle.service.ocalls
        original_send = ocalls.send

        def spying_send(sock, data):
            if sock >= 1_000_000:
                engine_payloads.append(bytes(data))
            original_send(sock, data)

        ocalls.send = spying_send
        with broker_for(handle) as session:
            resp = session.query("gamma three")
        (payload,) = engine_payloads
        serialized = payload[4:].decode("utf-8")
        subs = parse(serialized)
        assert len(subs) == resp.k_effective + 1
        assert "gamma three" in subs
        assert session.session_id not in serialized

    def test_backend_failure_keeps_query_in_history(self, proxy_factory):
        handle = proxy_factory(k=0)

        def failing_search(serialized):
            raise BackendError("engine down")

        handle.service.backend.search = failing_search
        with broker_for(handle) as session:
            with pytest.raises(ProxyError) as err:
                session.query("doomed query")
        assert err.value.kind == "backend"
        assert handle.service.enclave.store.entries()[-1] == "doomed query"

    def test_concurrent_sessions(self, proxy_factory):
        handle = proxy_factory(k=1)
        errors = []

        def worker(i):
            try:
                with broker_for(handle) as session:
                    for j in range(10):
                        resp = session.query(f"worker {i} query {j} jaguar")
                        assert resp.k_effective in (0, 1)
            except Exception as exc:
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert handle.service.enclave.store.snapshot_len() == 80

    def test_echo_mode_skips_pipeline(self, proxy_factory):
        handle = proxy_factory(echo=True)
        with broker_for(handle) as session:
            resp = session.query("echo does not store this")
        assert resp.k_effective == 0
        assert resp.results == []
        assert handle.service.enclave.store.snapshot_len() == 0


class TestSecurityInvariants:
    def test_no_plaintext_query_bytes_on_client_wire(self, proxy_factory):
        handle = proxy_factory(k=0)
        marker = "jaguar velocity plugh xyzzy"
        transport = RecordingTransport("127.0.0.1", handle.port)
        with connect_and_attest(
            ("127.0.0.1", handle.port), MEASUREMENT, transport=transport
        ) as session:
            resp = session.query(marker)
        assert resp.k_effective == 0
        for needle in marker.split():
            assert needle.encode() not in bytes(transport.sent)
            assert needle.encode() not in bytes(transport.received)

    def test_replayed_ciphertext_rejected_without_search(self, proxy_factory):
        handle = proxy_factory(k=0)
        searches = []
        original_search = handle.service.backend.search

        def counting_search(serialized):
            searches.append(serialized)
            return original_search(serialized)

        handle.service.backend.search = counting_search

        transport = RecordingTransport("127.0.0.1", handle.port)
        session = connect_and_attest(
            ("127.0.0.1", handle.port), MEASUREMENT, transport=transport
        )
        session.query("jaguar speed")
        assert len(searches) == 1

        reader = wire.FrameReader()
        frames = reader.feed(bytes(transport.sent))
        request_frames = [p for t, p in frames if t == wire.REQUEST]
        assert len(request_frames) == 1
        transport.sendall(wire.encode_frame(wire.REQUEST, request_frames[0]))

        from chaffsearch.broker import _read_frame

        ftype, payload = _read_frame(transport)
        assert ftype == wire.ERROR
        assert payload[0] == 0  # plaintext protocol error
        doc = json.loads(payload[1:].decode())
        assert doc["error"] == "protocol"
        assert len(searches) == 1  # replay never reached the engine
        session.close()

    def test_one_bit_measurement_change_fails_attestation(self, proxy_factory):
        handle = proxy_factory(k=0)
        flipped = bytes([MEASUREMENT[0] ^ 0x01]) + MEASUREMENT[1:]
        transport = RecordingTransport("127.0.0.1", handle.port)
        with pytest.raises(attest.MeasurementMismatch):
            connect_and_attest(("127.0.0.1", handle.port), flipped, transport=transport)
        frames = wire.FrameReader().feed(bytes(transport.sent))
        assert [t for t, _ in frames] == [wire.HANDSHAKE]  # no query ever sent

    def test_request_before_handshake_rejected(self, proxy_factory):
        handle = proxy_factory(k=0)
        sock = socket.create_connection(("127.0.0.1", handle.port), timeout=5)
        sock.sendall(wire.encode_frame(wire.REQUEST, b"\xff" + b"x" * 40))
        header = _recv_exact(sock, wire.HEADER_LEN)
        assert header[0] == wire.ERROR
        sock.close()

    def test_garbage_bytes_dropped(self, proxy_factory):
        handle = proxy_factory(k=0)
        sock = socket.create_connection(("127.0.0.1", handle.port), timeout=5)
        sock.sendall(b"\x00garbage that is not a frame at all")
        header = _recv_exact(sock, wire.HEADER_LEN)
        assert header[0] == wire.ERROR
        # proxy hangs up after the protocol error
        length = int.from_bytes(header[1:], "big")
        _recv_exact(sock, length)
        assert sock.recv(1) == b""
        sock.close()


def _recv_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise AssertionError(f"peer closed early ({len(buf)}/{n})")
        buf.extend(chunk)
    return bytes(buf)
