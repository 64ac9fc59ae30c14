"""HTTP client for a real search engine.

One GET per query, with the query percent-encoded (RFC 3986, %20 for
spaces) into a configurable parameter. The response payload is turned
into result triples by a pluggable extractor, so engine markup drift
breaks only the extractor, never the client. Two reference extractors
ship: a JSON one and an HTML one for list-item result markup.
"""

from __future__ import annotations

import json
import os
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Callable
from urllib.parse import quote

from .results import SearchResult

Extractor = Callable[[bytes], "list[SearchResult]"]


class LiveEngineError(Exception):
    retriable = False


class EngineNetworkError(LiveEngineError):
    pass


class EngineHTTPError(LiveEngineError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(f"engine returned HTTP {status} {message}".rstrip())
        self.status = status


class RateLimitError(EngineHTTPError):
    retriable = True

    def __init__(self, message: str = ""):
        super().__init__(429, message)


class ExtractError(LiveEngineError):
    pass


def extract_json(payload: bytes) -> list[SearchResult]:
    """Parse a JSON array of result objects, or {"results": [...]}."""
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ExtractError(f"payload is not JSON: {exc}") from exc
    items = doc.get("results") if isinstance(doc, dict) else doc
    if not isinstance(items, list):
        raise ExtractError("no result array in payload")
    return [SearchResult.from_dict(d) for d in items if isinstance(d, dict)]


class _ResultHTMLParser(HTMLParser):
    """Collects <li class="result"><a href=URL>TITLE</a><p>DESC</p></li>."""

    def __init__(self):
        super().__init__()
        self.results: list[SearchResult] = []
        self._in_item = False
        self._capture: str | None = None  # "title" | "desc"
        self._url = ""
        self._title: list[str] = []
        self._desc: list[str] = []

    def handle_starttag(self, tag, attrs):
        attrs = dict(attrs)
        if tag == "li" and "result" in (attrs.get("class") or "").split():
            self._in_item = True
            self._url, self._title, self._desc = "", [], []
        elif self._in_item and tag == "a" and not self._url:
            self._url = attrs.get("href") or ""
            self._capture = "title"
        elif self._in_item and tag == "p":
            self._capture = "desc"

    def handle_endtag(self, tag):
        if tag in ("a", "p"):
            self._capture = None
        elif tag == "li" and self._in_item:
            self._in_item = False
            if self._url:
                self.results.append(
                    SearchResult(
                        title="".join(self._title).strip(),
                        desc="".join(self._desc).strip(),
                        url=self._url,
                    )
                )

    def handle_data(self, data):
        if self._capture == "title":
            self._title.append(data)
        elif self._capture == "desc":
            self._desc.append(data)


def extract_html(payload: bytes) -> list[SearchResult]:
    """Reference extractor for the list-item result markup."""
    parser = _ResultHTMLParser()
    try:
        parser.feed(payload.decode("utf-8", "replace"))
        parser.close()
    except Exception as exc:  # html.parser raises bare exceptions on bad markup
        raise ExtractError(f"unparseable HTML: {exc}") from exc
    return parser.results


@dataclass
class EngineClient:
    base_url: str
    query_param: str = "q"
    extractor: Extractor = extract_json
    timeout: float = 10.0
    api_key_env: str | None = None
    api_key_header: str = "Ocp-Apim-Subscription-Key"
    extra_params: dict[str, str] = field(default_factory=dict)

    def request_url(self, query_text: str) -> str:
        # urllib is fed the final URL so the engine sees exactly this
        # encoding: %20 for space, %26 for ampersand, and so on.
        pairs = [(self.query_param, query_text)] + sorted(self.extra_params.items())
        qs = "&".join(f"{quote(k, safe='')}={quote(v, safe='')}" for k, v in pairs)
        sep = "&" if "?" in self.base_url else "?"
        return f"{self.base_url}{sep}{qs}"


def fetch_engine(client: EngineClient, query_text: str) -> list[SearchResult]:
    """GET the engine and extract results. Raises a LiveEngineError kind."""
    request = urllib.request.Request(client.request_url(query_text))
    if client.api_key_env:
        key = os.environ.get(client.api_key_env)
        if key:
            request.add_header(client.api_key_header, key)
    try:
        with urllib.request.urlopen(request, timeout=client.timeout) as resp:
            payload = resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code == 429:
            raise RateLimitError(str(exc.reason)) from exc
        raise EngineHTTPError(exc.code, str(exc.reason)) from exc
    except (urllib.error.URLError, socket.timeout, OSError) as exc:
        raise EngineNetworkError(str(exc)) from exc
    return client.extractor(payload)
