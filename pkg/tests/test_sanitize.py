import logging
import urllib.parse

from chaffsearch.results import SearchResult
from chaffsearch.sanitize import sanitize_results


def r(url):
    return SearchResult("t", "d", url)


class TestSanitize:
    def test_plain_url_unchanged(self):
        results = [r("https://site.org/page")]
        assert sanitize_results(results, "u") == results

    def test_wrapper_decoded(self):
        wrapped = r("https://r.engine.example/rd?u=https%3A%2F%2Fsite.org%2Fpage")
        (out,) = sanitize_results([wrapped], "u")
        assert out.url == "https://site.org/page"
        assert (out.title, out.desc) == ("t", "d")

    def test_no_param_configured_is_identity(self):
        results = [r("https://r.engine.example/rd?u=https%3A%2F%2Fsite.org")]
        assert sanitize_results(results, None) == results
        assert sanitize_results(results, "") == results

    def test_doubly_encoded_decodes_once_only(self):
        target = "https://site.org/a b"  # single encode -> %20, double -> %2520
        once = urllib.parse.quote(target, safe="")
        twice = urllib.parse.quote(once, safe="")
        wrapped = r(f"https://r.engine.example/rd?u={twice}")
        (out,) = sanitize_results([wrapped], "u")
        assert out.url == once  # oracle: exactly one decode undone

    def test_undecodable_target_kept_and_flagged(self, caplog):
        bad = r("https://r.engine.example/rd?u=not-an-absolute-url")
        with caplog.at_level(logging.WARNING, logger="chaffsearch.sanitize"):
            (out,) = sanitize_results([bad], "u")
        assert out == bad
        assert any("redirect target" in rec.message for rec in caplog.records)

    def test_other_params_ignored(self):
        plain = r("https://site.org/page?tracking=1&u2=x")
        assert sanitize_results([plain], "u") == [plain]
