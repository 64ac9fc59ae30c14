import json

import pytest

from chaffsearch.broker import SocketTransport
from chaffsearch.config import ProxyConfig
from chaffsearch.proxy import run_proxy_in_thread

TOPIC_DOCS = [
    {"title": "jaguar top speed", "desc": "how fast the jaguar runs in short bursts", "url": "https://cats.example/speed"},
    {"title": "jaguar habitat rainforest", "desc": "where the jaguar lives and hunts", "url": "https://cats.example/habitat"},
    {"title": "chocolate cake recipe", "desc": "easy chocolate cake for beginners", "url": "https://food.example/cake"},
    {"title": "best chocolate brands", "desc": "tasting dark chocolate bars", "url": "https://food.example/brands"},
    {"title": "sgx enclave overview", "desc": "trusted execution on commodity cpus", "url": "https://sys.example/sgx"},
    {"title": "enclave attestation flow", "desc": "measuring and attesting trusted code", "url": "https://sys.example/attest"},
]


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps(TOPIC_DOCS), encoding="utf-8")
    return str(path)


@pytest.fixture
def proxy_factory(corpus_file):
    """Start proxies on ephemeral ports; all stopped at teardown."""
    handles = []

    def start(**overrides):
        kwargs = dict(
            k=0,
            backend="mock",
            corpus_file=corpus_file,
            listen_addr="127.0.0.1:0",
            rng_seed=1234,
        )
        kwargs.update(overrides)
        handle = run_proxy_in_thread(ProxyConfig(**kwargs))
        handles.append(handle)
        return handle

    yield start
    for handle in handles:
        handle.stop()


class RecordingTransport(SocketTransport):
    """Socket transport that keeps a copy of every byte in either direction."""

    def __init__(self, host, port, timeout=10.0):
        super().__init__(host, port, timeout)
        self.sent = bytearray()
        self.received = bytearray()

    def sendall(self, data):
        self.sent.extend(data)
        super().sendall(data)

    def recv(self, maxlen):
        data = super().recv(maxlen)
        self.received.extend(data)
        return data
