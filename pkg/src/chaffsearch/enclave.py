"""Trusted side of the proxy.

Everything that touches a plaintext query lives here: the secure
channel, the history of past queries, decoy padding, result filtering
and URL sanitizing. The runtime is reachable from the host through two
entry points only, ``init`` (construction) and ``request`` (bytes
arriving from a client socket), and reaches out only through the
four socket callbacks of an :class:`OcallTable`. In a hardware port
this module boundary becomes the enclave boundary; its measurement is
the digest of these modules' sources (see :mod:`chaffsearch.attest`).

Data crossing outward is ciphertext toward clients and the decoy-padded
serialized query toward the engine; nothing else leaves.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from typing import Protocol

from . import attest, channel as channel_mod, wire
from .filtering import filter_results
from .history import HistoryStore, Query, QueryError
from .obfuscate import obfuscate, serialize
from .results import results_from_dicts, results_to_dicts
from .sanitize import sanitize_results

log = logging.getLogger(__name__)

ENGINE_HOST = "engine"
ENGINE_PORT = 80

_LEN_PREFIX = 4
_MAX_ENGINE_REPLY = 8 * 1024 * 1024
_RECV_CHUNK = 65536


class OcallTable(Protocol):
    """Untrusted callbacks the trusted side may invoke."""

    def connect(self, host: str, port: int) -> int: ...

    def send(self, sock: int, data: bytes) -> None: ...

    def recv(self, sock: int, maxlen: int) -> bytes: ...

    def close(self, sock: int) -> None: ...


@dataclass
class EnclaveParams:
    k_default: int = 3
    history_capacity: int = 100_000
    redirect_param: str | None = None
    echo: bool = False
    seed_queries: list[str] = field(default_factory=list)
    rng_seed: int | None = None

    def __post_init__(self):
        if self.k_default < 0:
            raise ValueError("k_default must be >= 0")
        if self.history_capacity < 1:
            raise ValueError("history_capacity must be >= 1")


class EngineError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.message = message


class _Session:
    __slots__ = ("reader", "channel")

    def __init__(self):
        self.reader = wire.FrameReader()
        self.channel: channel_mod.SecureChannel | None = None


class EnclaveRuntime:
    """The trusted request pipeline, one instance per proxy process."""

    def __init__(self, params: EnclaveParams, ocalls: OcallTable):
        self._params = params
        self._ocalls = ocalls
        self._identity = attest.EnclaveIdentity()
        self._measurement = attest.compute_measurement()
        self._rng = random.Random(params.rng_seed)
        self._sessions: dict[int, _Session] = {}
        self.store = HistoryStore(params.history_capacity)
        for raw in params.seed_queries:
            raw = raw.strip()
            if not raw:
                continue
            try:
                self.store.push(Query(raw))
            except QueryError:
                continue
        self._echo_body = json.dumps({"k_effective": 0, "results": []}).encode()

    @property
    def measurement(self) -> bytes:
        return self._measurement

    # --- ecall surface -------------------------------------------------

    def request(self, sock: int, data: bytes) -> None:
        """Provision bytes arriving from a client socket.

        An empty ``data`` signals the socket is gone and tears down the
        session state.
        """
        if not data:
            self._sessions.pop(sock, None)
            return
        session = self._sessions.get(sock)
        if session is None:
            session = self._sessions[sock] = _Session()
        try:
            frames = session.reader.feed(data)
        except wire.FrameError as exc:
            self._protocol_error(sock, f"bad frame: {exc}")
            return
        for ftype, payload in frames:
            if ftype == wire.HANDSHAKE:
                self._on_handshake(sock, session, payload)
            elif ftype == wire.REQUEST:
                self._on_request(sock, session, payload)
            else:
                self._protocol_error(sock, f"unexpected frame type {ftype}")
                return

    # --- handshake and attestation --------------------------------------

    def _on_handshake(self, sock: int, session: _Session, payload: bytes) -> None:
        if len(payload) != 32:
            self._protocol_error(sock, "handshake payload must be a 32-byte key")
            return
        client_pub = payload
        priv, server_pub = channel_mod.generate_keypair()
        session.channel = channel_mod.server_channel(priv, client_pub, server_pub)
        evidence = attest.make_evidence(
            self._identity, self._measurement, server_pub, client_pub
        )
        self._ocalls.send(sock, wire.encode_frame(wire.HANDSHAKE, server_pub + evidence))

    # --- request handling ------------------------------------------------

    def _on_request(self, sock: int, session: _Session, payload: bytes) -> None:
        if session.channel is None:
            self._protocol_error(sock, "request before handshake")
            return
        if len(payload) < 1 + channel_mod.COUNTER_LEN:
            self._protocol_error(sock, "request payload too short")
            return
        k_byte = payload[0]
        try:
            plaintext = session.channel.decrypt(
                payload[1:], aad=bytes((wire.REQUEST, k_byte))
            )
        except channel_mod.ChannelError as exc:
            self._protocol_error(sock, f"request rejected: {exc}")
            return
        k = self._params.k_default if k_byte == wire.K_USE_DEFAULT else k_byte
        if self._params.echo:
            self._send_response(sock, session, self._echo_body)
            return
        self.handle_request(sock, session, plaintext.decode("utf-8", "replace"), k)

    def handle_request(self, sock: int, session: _Session, text: str, k: int) -> None:
        """Obfuscate, search, filter, sanitize, respond."""
        try:
            q = Query(text)
        except QueryError as exc:
            self._send_app_error(sock, session, "invalid_query", str(exc))
            return
        oq = obfuscate(q, k, self.store, self._rng)
        try:
            results, partial = self._query_engine(serialize(oq))
        except EngineError as exc:
            # q is already in the history: decoy freshness survives flaky engines
            self._send_app_error(sock, session, exc.kind, exc.message)
            return
        kept = filter_results(q, oq.decoys(), results)
        kept = sanitize_results(kept, self._params.redirect_param)
        body: dict = {
            "k_effective": oq.k_effective,
            "results": results_to_dicts(kept),
        }
        if oq.degraded:
            body["degraded"] = True
        if partial:
            body["partial"] = True
        self._send_response(sock, session, json.dumps(body).encode("utf-8"))

    # --- engine exchange ---------------------------------------------------

    def _query_engine(self, serialized: str):
        payload = serialized.encode("utf-8")
        try:
            esock = self._ocalls.connect(ENGINE_HOST, ENGINE_PORT)
        except OSError as exc:
            raise EngineError("network", f"connect failed: {exc}") from exc
        try:
            self._ocalls.send(esock, len(payload).to_bytes(_LEN_PREFIX, "big") + payload)
            reply = self._recv_reply(esock)
        except OSError as exc:
            raise EngineError("network", str(exc)) from exc
        finally:
            self._ocalls.close(esock)
        try:
            doc = json.loads(reply.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise EngineError("parse", f"bad engine reply: {exc}") from exc
        if "error" in doc:
            err = doc["error"]
            raise EngineError(str(err.get("kind", "backend")), str(err.get("message", "")))
        return results_from_dicts(doc.get("results", [])), bool(doc.get("partial"))

    def _recv_reply(self, esock: int) -> bytes:
        buf = bytearray()
        while len(buf) < _LEN_PREFIX:
            chunk = self._ocalls.recv(esock, _RECV_CHUNK)
            if not chunk:
                raise EngineError("network", "engine closed mid-reply")
            buf.extend(chunk)
        length = int.from_bytes(buf[:_LEN_PREFIX], "big")
        if length > _MAX_ENGINE_REPLY:
            raise EngineError("parse", f"engine reply of {length} bytes exceeds limit")
        while len(buf) < _LEN_PREFIX + length:
            chunk = self._ocalls.recv(esock, _RECV_CHUNK)
            if not chunk:
                raise EngineError("network", "engine closed mid-reply")
            buf.extend(chunk)
        return bytes(buf[_LEN_PREFIX : _LEN_PREFIX + length])

    # --- replies -----------------------------------------------------------

    def _send_response(self, sock: int, session: _Session, body: bytes) -> None:
        payload = session.channel.encrypt(body, aad=bytes((wire.RESPONSE,)))
        self._ocalls.send(sock, wire.encode_frame(wire.RESPONSE, payload))

    def _send_app_error(self, sock: int, session: _Session, kind: str, message: str) -> None:
        body = json.dumps({"error": kind, "message": message}).encode("utf-8")
        payload = b"\x01" + session.channel.encrypt(body, aad=bytes((wire.ERROR, 1)))
        self._ocalls.send(sock, wire.encode_frame(wire.ERROR, payload))

    def _protocol_error(self, sock: int, message: str) -> None:
        log.debug("protocol error on sock %d: %s", sock, message)
        body = json.dumps({"error": "protocol", "message": message}).encode("utf-8")
        try:
            self._ocalls.send(sock, wire.encode_frame(wire.ERROR, b"\x00" + body))
        finally:
            self._ocalls.close(sock)
            self._sessions.pop(sock, None)
