"""User-side broker: verifies the proxy before any query leaves the box.

The broker owns the client end of the encrypted channel. It connects,
performs the handshake, checks the attestation evidence against the
expected code measurement, and only then accepts queries. Queries are
serial: one in flight per session, responses correlate by frame order.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from dataclasses import dataclass, field

from . import channel as channel_mod, wire
from .attest import AttestationError, verify_evidence
from .results import SearchResult, results_from_dicts

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ATTESTATION = 2
EXIT_NETWORK = 3
EXIT_ENGINE = 4

_PUB_LEN = 32


class BrokerError(Exception):
    pass


class ProtocolError(BrokerError):
    pass


class NetworkError(BrokerError):
    pass


class ProxyError(BrokerError):
    """Structured error frame relayed by the proxy."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


class SocketTransport:
    """Thin blocking-socket wrapper; swap it out to observe the wire."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise NetworkError(f"cannot reach {host}:{port}: {exc}") from exc

    def sendall(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise NetworkError(str(exc)) from exc

    def recv(self, maxlen: int) -> bytes:
        try:
            return self._sock.recv(maxlen)
        except OSError as exc:
            raise NetworkError(str(exc)) from exc

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


@dataclass
class QueryResponse:
    results: list[SearchResult]
    k_effective: int
    degraded: bool = False
    partial: bool = False
    raw: dict = field(default_factory=dict)


class BrokerSession:
    def __init__(self, transport, channel: channel_mod.SecureChannel):
        self._transport = transport
        self._channel = channel
        self.session_id = channel.session_id

    def query(self, text: str, k_override: int | None = None) -> QueryResponse:
        """Submit one query and wait for its (decrypted) result set."""
        if not text or not text.strip():
            raise ValueError("query is empty")
        k_byte = wire.K_USE_DEFAULT if k_override is None else k_override
        if not 0 <= k_byte <= 255:
            raise ValueError(f"k override out of range: {k_override}")
        sealed = self._channel.encrypt(
            text.encode("utf-8"), aad=bytes((wire.REQUEST, k_byte))
        )
        self._transport.sendall(wire.encode_frame(wire.REQUEST, bytes([k_byte]) + sealed))
        ftype, payload = _read_frame(self._transport)
        if ftype == wire.ERROR:
            raise _decode_error(self._channel, payload)
        if ftype != wire.RESPONSE:
            raise ProtocolError(f"expected response frame, got type {ftype}")
        try:
            body = self._channel.decrypt(payload, aad=bytes((wire.RESPONSE,)))
        except channel_mod.ChannelError as exc:
            raise ProtocolError(f"cannot open response: {exc}") from exc
        doc = json.loads(body.decode("utf-8"))
        return QueryResponse(
            results=results_from_dicts(doc.get("results", [])),
            k_effective=int(doc.get("k_effective", 0)),
            degraded=bool(doc.get("degraded")),
            partial=bool(doc.get("partial")),
            raw=doc,
        )

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect_and_attest(
    addr: str | tuple[str, int],
    expected_measurement: bytes | str,
    timeout: float = 10.0,
    transport=None,
) -> BrokerSession:
    """Open a session; fails hard before any query on bad attestation."""
    if isinstance(expected_measurement, str):
        expected_measurement = bytes.fromhex(expected_measurement)
    if isinstance(addr, str):
        host, _, port = addr.rpartition(":")
        addr = (host or "127.0.0.1", int(port))
    if transport is None:
        transport = SocketTransport(addr[0], addr[1], timeout=timeout)

    priv, client_pub = channel_mod.generate_keypair()
    transport.sendall(wire.encode_frame(wire.HANDSHAKE, client_pub))
    ftype, payload = _read_frame(transport)
    if ftype == wire.ERROR:
        raise _plaintext_error(payload)
    if ftype != wire.HANDSHAKE:
        raise ProtocolError(f"expected handshake frame, got type {ftype}")
    if len(payload) <= _PUB_LEN:
        raise ProtocolError("handshake reply too short")
    server_pub, evidence = payload[:_PUB_LEN], payload[_PUB_LEN:]
    try:
        verify_evidence(evidence, expected_measurement, server_pub, client_pub)
    except AttestationError:
        transport.close()
        raise
    return BrokerSession(transport, channel_mod.client_channel(priv, client_pub, server_pub))


def _read_frame(transport) -> tuple[int, bytes]:
    header = _read_exact(transport, wire.HEADER_LEN)
    ftype = header[0]
    length = int.from_bytes(header[1:], "big")
    if length > wire.MAX_PAYLOAD:
        raise ProtocolError(f"oversized frame: {length} bytes")
    return ftype, _read_exact(transport, length)


def _read_exact(transport, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = transport.recv(n - len(buf))
        if not chunk:
            raise ProtocolError(f"connection closed mid-frame ({len(buf)}/{n} bytes)")
        buf.extend(chunk)
    return bytes(buf)


def _decode_error(channel: channel_mod.SecureChannel, payload: bytes) -> BrokerError:
    if not payload:
        return ProtocolError("empty error frame")
    if payload[0] == 0:
        return _plaintext_error(payload)
    try:
        body = channel.decrypt(payload[1:], aad=bytes((wire.ERROR, 1)))
        doc = json.loads(body.decode("utf-8"))
    except (channel_mod.ChannelError, ValueError) as exc:
        return ProtocolError(f"unreadable error frame: {exc}")
    return ProxyError(str(doc.get("error", "unknown")), str(doc.get("message", "")))


def _plaintext_error(payload: bytes) -> BrokerError:
    try:
        doc = json.loads(payload[1:].decode("utf-8"))
        return ProtocolError(f"{doc.get('error')}: {doc.get('message')}")
    except (ValueError, UnicodeDecodeError):
        return ProtocolError("malformed error frame")


def _print_human(resp: QueryResponse) -> None:
    print(f"# k_effective={resp.k_effective}"
          + (" degraded" if resp.degraded else "")
          + (" partial" if resp.partial else ""))
    for i, r in enumerate(resp.results, 1):
        print(f"{i:2d}. {r.title}")
        if r.desc:
            print(f"    {r.desc}")
        print(f"    {r.url}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chaff-broker", description="query a decoy-padding search proxy"
    )
    parser.add_argument("--proxy", required=True, help="proxy address host:port")
    parser.add_argument(
        "--measurement", required=True, help="expected trusted-side measurement (hex)"
    )
    parser.add_argument("--k", type=int, default=None, help="per-request decoy count override")
    parser.add_argument("--json", action="store_true", help="emit raw JSON")
    parser.add_argument("query", nargs="*", help="query text (stdin when omitted)")
    args = parser.parse_args(argv)

    text = " ".join(args.query).strip() or sys.stdin.read().strip()
    if not text:
        print("error: empty query", file=sys.stderr)
        return EXIT_USAGE

    try:
        session = connect_and_attest(args.proxy, args.measurement)
    except AttestationError as exc:
        print(f"attestation failed: {exc}", file=sys.stderr)
        return EXIT_ATTESTATION
    except (NetworkError, ProtocolError) as exc:
        print(f"connection failed: {exc}", file=sys.stderr)
        return EXIT_NETWORK

    try:
        with session:
            resp = session.query(text, k_override=args.k)
    except ProxyError as exc:
        print(f"proxy error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except (NetworkError, ProtocolError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_NETWORK

    if args.json:
        print(json.dumps(resp.raw, indent=2))
    else:
        _print_human(resp)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
