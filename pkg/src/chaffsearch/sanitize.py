"""Strip analytics redirect wrappers from result URLs.

Engines often return results whose URL points at a tracking endpoint
carrying the real target in a query parameter. When a redirect
parameter is configured, such URLs are replaced by the percent-decoded
target before results leave the proxy. The decode happens exactly once:
a doubly-encoded target comes out still singly-encoded.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Iterable
from urllib.parse import parse_qs, unquote, urlsplit

from .results import SearchResult

log = logging.getLogger(__name__)


def sanitize_results(
    results: Iterable[SearchResult], redirect_param: str | None
) -> list[SearchResult]:
    """Replace wrapper URLs by their targets; everything else unchanged."""
    if not redirect_param:
        return list(results)
    out = []
    for r in results:
        target = _extract_target(r.url, redirect_param)
        if target is None:
            out.append(r)
        else:
            out.append(replace(r, url=target))
    return out


def _extract_target(url: str, redirect_param: str) -> str | None:
    try:
        parts = urlsplit(url)
    except ValueError:
        return None
    if not parts.query:
        return None
    # parse_qs already applies exactly one percent-decoding pass
    values = parse_qs(parts.query, keep_blank_values=True).get(redirect_param)
    if not values:
        return None
    target = values[0]
    if not _is_absolute_urlish(target):
        log.warning("redirect target %r is not an absolute URL, keeping %s", target, url)
        return None
    return target


def _is_absolute_urlish(value: str) -> bool:
    # The returned target gets exactly one decode (done by parse_qs); extra
    # encoding layers are the caller's business, but verify there is an
    # absolute http(s) URL somewhere underneath before rewriting anything.
    for _ in range(4):
        if value.startswith(("http://", "https://")):
            return True
        decoded = unquote(value)
        if decoded == value:
            return False
        value = decoded
    return value.startswith(("http://", "https://"))
