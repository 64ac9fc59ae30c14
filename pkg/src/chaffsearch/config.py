"""Proxy configuration, loadable from JSON or key=value files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

DEFAULT_LISTEN = "127.0.0.1:7700"


@dataclass
class ProxyConfig:
    k: int = 3
    history_capacity: int = 100_000
    backend: str = "mock"  # mock | live
    engine_url: str = ""
    query_param: str = "q"
    seed_file: str = ""
    listen_addr: str = DEFAULT_LISTEN
    redirect_param: str = ""
    corpus_file: str = ""
    per_query_limit: int = 20
    echo: bool = False
    native_or: bool = False
    live_concurrency: int = 4
    engine_timeout: float = 10.0
    rng_seed: int | None = None
    extractor: str = "json"  # json | html

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.history_capacity < 1:
            raise ValueError("history_capacity must be >= 1")
        if self.backend not in ("mock", "live"):
            raise ValueError(f"backend must be mock or live, got {self.backend!r}")

    def listen_host_port(self) -> tuple[str, int]:
        host, _, port = self.listen_addr.rpartition(":")
        return host or "127.0.0.1", int(port)


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def load_config(path: str | Path) -> ProxyConfig:
    """Read a config file; JSON when it starts with '{', key=value otherwise."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            raw[key.strip()] = value.strip()
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ProxyConfig:
    known = {f.name: f.type for f in fields(ProxyConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[key] = _coerce(key, value)
    return ProxyConfig(**kwargs)


def _coerce(key: str, value):
    default = getattr(ProxyConfig(), key)
    if isinstance(value, str):
        if isinstance(default, bool):
            low = value.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"config key {key!r}: not a boolean: {value!r}")
        if isinstance(default, int) and not isinstance(default, bool):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if default is None and key == "rng_seed":
            return int(value)
    return value
