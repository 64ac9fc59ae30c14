"""Untrusted host of the proxy: sockets in, sockets out.

The host accepts client TCP connections and shovels raw bytes into the
trusted runtime's ``request`` entry point; everything the trusted side
wants to say goes back out through the socket callbacks it was given.
The host also implements those callbacks: client-socket sends become
transport writes, and "connections to the engine" are answered by the
configured backend (in-process mock corpus, or the live HTTP client).

With the mock backend (or echo mode) the trusted call runs inline on
the event loop; with the live backend it blocks on engine I/O, so each
connection's bytes are processed in order on a thread pool instead —
sessions stay serial, different sessions proceed in parallel.
"""

from __future__ import annotations

import argparse
import asyncio
import itertools
import json
import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor

from . import attest, live_engine
from .backend import BackendError, LiveBackend, MockBackend
from .config import ProxyConfig, load_config
from .enclave import EnclaveParams, EnclaveRuntime
from .mock_engine import MockCorpus

log = logging.getLogger(__name__)

_LEN_PREFIX = 4


class _BackendConn:
    """One simulated engine connection: serialized query in, JSON out."""

    def __init__(self, backend):
        self._backend = backend
        self._inbuf = bytearray()
        self._reply: bytes | None = None
        self._offset = 0

    def feed(self, data: bytes) -> None:
        self._inbuf.extend(data)

    def read(self, maxlen: int) -> bytes:
        if self._reply is None:
            self._reply = self._run()
        chunk = self._reply[self._offset : self._offset + maxlen]
        self._offset += len(chunk)
        return chunk

    def _run(self) -> bytes:
        if len(self._inbuf) < _LEN_PREFIX:
            return _encode_reply({"error": {"kind": "backend", "message": "short request"}})
        length = int.from_bytes(self._inbuf[:_LEN_PREFIX], "big")
        if len(self._inbuf) < _LEN_PREFIX + length:
            return _encode_reply({"error": {"kind": "backend", "message": "short request"}})
        serialized = bytes(self._inbuf[_LEN_PREFIX : _LEN_PREFIX + length]).decode(
            "utf-8", "replace"
        )
        try:
            results, partial = self._backend.search(serialized)
        except BackendError as exc:
            return _encode_reply({"error": {"kind": "backend", "message": str(exc)}})
        except live_engine.RateLimitError as exc:
            return _encode_reply({"error": {"kind": "rate_limit", "message": str(exc)}})
        except live_engine.LiveEngineError as exc:
            return _encode_reply({"error": {"kind": "http", "message": str(exc)}})
        except Exception as exc:
            log.exception("backend failure")
            return _encode_reply({"error": {"kind": "backend", "message": str(exc)}})
        doc = {"results": [r.to_dict() for r in results]}
        if partial:
            doc["partial"] = True
        return _encode_reply(doc)


def _encode_reply(doc: dict) -> bytes:
    body = json.dumps(doc).encode("utf-8")
    return len(body).to_bytes(_LEN_PREFIX, "big") + body


class _HostOcalls:
    """The four socket callbacks offered to the trusted runtime."""

    def __init__(self, service: "ProxyService"):
        self._service = service
        self._engine_conns: dict[int, _BackendConn] = {}
        self._ids = itertools.count(1_000_000)
        self._lock = threading.Lock()

    def connect(self, host: str, port: int) -> int:
        if host != "engine":
            raise OSError(f"unknown upstream {host}:{port}")
        conn = _BackendConn(self._service.backend)
        with self._lock:
            sock = next(self._ids)
            self._engine_conns[sock] = conn
        return sock

    def send(self, sock: int, data: bytes) -> None:
        conn = self._engine_conns.get(sock)
        if conn is not None:
            conn.feed(data)
            return
        self._service.write_client(sock, data)

    def recv(self, sock: int, maxlen: int) -> bytes:
        conn = self._engine_conns.get(sock)
        if conn is None:
            raise OSError(f"recv on unknown socket {sock}")
        return conn.read(maxlen)

    def close(self, sock: int) -> None:
        with self._lock:
            if self._engine_conns.pop(sock, None) is not None:
                return
        self._service.close_client(sock)


class _ClientProtocol(asyncio.Protocol):
    def __init__(self, service: "ProxyService"):
        self._service = service
        self._sock_id = 0
        self._queue: asyncio.Queue | None = None

    def connection_made(self, transport):
        self._sock_id = self._service.register_client(transport)
        if not self._service.inline:
            self._queue = asyncio.Queue()
            self._service.loop.create_task(self._drain())

    def data_received(self, data: bytes):
        if self._queue is None:
            self._service.enclave.request(self._sock_id, data)
        else:
            self._queue.put_nowait(data)

    def connection_lost(self, exc):
        self._service.unregister_client(self._sock_id)
        if self._queue is not None:
            self._queue.put_nowait(None)
        else:
            self._service.enclave.request(self._sock_id, b"")

    async def _drain(self):
        loop = self._service.loop
        while True:
            data = await self._queue.get()
            if data is None:
                await loop.run_in_executor(
                    self._service.executor, self._service.enclave.request, self._sock_id, b""
                )
                return
            await loop.run_in_executor(
                self._service.executor, self._service.enclave.request, self._sock_id, data
            )


class ProxyService:
    """Wires config, backend, trusted runtime and the TCP server together."""

    def __init__(self, config: ProxyConfig):
        self.config = config
        self.backend = _build_backend(config)
        seed_queries: list[str] = []
        if config.seed_file:
            with open(config.seed_file, encoding="utf-8") as fh:
                seed_queries = [line.strip() for line in fh if line.strip()]
        self.ocalls = _HostOcalls(self)
        self.enclave = EnclaveRuntime(
            EnclaveParams(
                k_default=config.k,
                history_capacity=config.history_capacity,
                redirect_param=config.redirect_param or None,
                echo=config.echo,
                seed_queries=seed_queries,
                rng_seed=config.rng_seed,
            ),
            self.ocalls,
        )
        # Inline trusted calls never block: echo skips the engine, and the
        # mock backend answers from memory.
        self.inline = config.echo or config.backend == "mock"
        self.executor = None if self.inline else ThreadPoolExecutor(
            max_workers=max(4, config.live_concurrency * 4)
        )
        self.loop: asyncio.AbstractEventLoop | None = None
        self._loop_thread: threading.Thread | None = None
        self._server: asyncio.AbstractServer | None = None
        self._clients: dict[int, asyncio.Transport] = {}
        self._client_ids = itertools.count(1)
        self._client_lock = threading.Lock()
        self.port: int | None = None

    # --- client socket registry (thread-safe: ocalls may run off-loop) ----

    def register_client(self, transport) -> int:
        with self._client_lock:
            sock_id = next(self._client_ids)
            self._clients[sock_id] = transport
        return sock_id

    def unregister_client(self, sock_id: int) -> None:
        with self._client_lock:
            self._clients.pop(sock_id, None)

    def write_client(self, sock_id: int, data: bytes) -> None:
        transport = self._clients.get(sock_id)
        if transport is None:
            return
        if threading.current_thread() is self._loop_thread:
            transport.write(data)
        else:
            self.loop.call_soon_threadsafe(transport.write, data)

    def close_client(self, sock_id: int) -> None:
        transport = self._clients.get(sock_id)
        if transport is None:
            return
        if threading.current_thread() is self._loop_thread:
            transport.close()
        else:
            self.loop.call_soon_threadsafe(transport.close)

    # --- lifecycle ---------------------------------------------------------

    async def start(self) -> None:
        self.loop = asyncio.get_running_loop()
        self._loop_thread = threading.current_thread()
        host, port = self.config.listen_host_port()
        self._server = await self.loop.create_server(
            lambda: _ClientProtocol(self), host, port
        )
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("proxy listening on %s:%d", host, self.port)

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        if self.executor is not None:
            self.executor.shutdown(wait=False)

    async def serve_forever(self) -> None:
        await self.start()
        print(f"listening {self.port}", flush=True)
        await self._server.serve_forever()


class ProxyHandle:
    """A proxy running on a daemon thread, for tests and tools."""

    def __init__(self, service: ProxyService):
        self.service = service
        self._loop = asyncio.new_event_loop()
        self._started = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        self._started.wait(timeout=10)

    def _run(self):
        asyncio.set_event_loop(self._loop)
        self._loop.run_until_complete(self.service.start())
        self._started.set()
        self._loop.run_forever()

    @property
    def port(self) -> int:
        return self.service.port

    def stop(self):
        asyncio.run_coroutine_threadsafe(self.service.stop(), self._loop).result(timeout=10)
        self._loop.call_soon_threadsafe(self._loop.stop)
        self._thread.join(timeout=10)


def run_proxy_in_thread(config: ProxyConfig) -> ProxyHandle:
    return ProxyHandle(ProxyService(config))


def _build_backend(config: ProxyConfig):
    if config.backend == "mock":
        if config.echo:
            return MockBackend(MockCorpus([]), config.per_query_limit)
        if not config.corpus_file:
            raise ValueError("mock backend needs corpus_file")
        return MockBackend(
            MockCorpus.from_json_file(config.corpus_file), config.per_query_limit
        )
    client = live_engine.EngineClient(
        base_url=config.engine_url,
        query_param=config.query_param,
        extractor=live_engine.extract_html if config.extractor == "html" else live_engine.extract_json,
        timeout=config.engine_timeout,
    )
    return LiveBackend(
        client,
        per_query_limit=config.per_query_limit,
        max_workers=config.live_concurrency,
        native_or=config.native_or,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chaff-proxy", description="decoy-padding private web search proxy"
    )
    parser.add_argument("--config", help="JSON or key=value config file")
    parser.add_argument(
        "--print-measurement",
        action="store_true",
        help="print the trusted-side code measurement and exit",
    )
    parser.add_argument("--listen", help="override listen address host:port")
    parser.add_argument("--echo", action="store_true", help="force echo mode")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    if args.print_measurement:
        print(attest.compute_measurement().hex())
        return 0

    config = load_config(args.config) if args.config else ProxyConfig(echo=True)
    if args.listen:
        config.listen_addr = args.listen
    if args.echo:
        config.echo = True

    service = ProxyService(config)
    try:
        asyncio.run(service.serve_forever())
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
