import random

import numpy as np
import pytest

from tracetext.model import Span, Tier
from tracetext.resolve import (
    MatchPolicy,
    NoMatchError,
    default_abbreviations,
    resolve_span,
    segment_sentences,
    tokenize,
)


def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j - 1] + (ca != cb), prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[-1]


def brute_force_best(needle: str, haystack: str):
    """Score EVERY substring window by edit distance; global minimum wins,
    lexicographically smallest (start, end) among ties.

    Windows longer than 2*len(needle) can never tie the optimum (distance
    grows at least with the length difference), so they are skipped.
    """
    m, n = len(needle), len(haystack)
    codes = np.array([ord(c) for c in haystack], dtype=np.int64)
    ncodes = np.array([ord(c) for c in needle], dtype=np.int64)
    best = (m + n + 1, -1, -1)
    for s in range(n):
        length = min(n - s, 2 * m + 1)
        window = codes[s : s + length]
        row = np.arange(length + 1, dtype=np.int64)
        offsets = np.arange(length + 1, dtype=np.int64)
        for i in range(1, m + 1):
            stay = row[:-1] + (window != ncodes[i - 1])
            delete = row[1:] + 1
            merged = np.empty(length + 1, dtype=np.int64)
            merged[0] = row[0] + 1
            merged[1:] = np.minimum(stay, delete)
            row = np.minimum.accumulate(merged - offsets) + offsets
        j = int(np.argmin(row[1:])) + 1  # earliest end for this start
        d = int(row[j])
        if d < best[0]:
            best = (d, s, s + j)
    return best


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_bp_reading(self):
        tokens = tokenize("BP 140/90.")
        assert [t.text for t in tokens] == ["BP", "140", "90"]
        assert [(t.span.start, t.span.end) for t in tokens] == [(0, 2), (3, 6), (7, 9)]

    def test_spans_match_text(self):
        text = "Dose: 20 mg daily (增) w/ food_x"
        for token in tokenize(text):
            assert token.span.substring(text) == token.text

    def test_matches_reference_scan(self):
        rng = random.Random(7)
        alphabet = "ab1 ,.!-\n"
        for _ in range(200):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
            expected = []
            current = ""
            for ch in text:
                if ch.isalnum():
                    current += ch
                elif current:
                    expected.append(current)
                    current = ""
            if current:
                expected.append(current)
            assert [t.text for t in tokenize(text)] == expected

    def test_spans_strictly_increasing(self):
        tokens = tokenize("one two three four")
        starts = [t.span.start for t in tokens]
        assert starts == sorted(starts)
        for a, b in zip(tokens, tokens[1:]):
            assert a.span.end <= b.span.start


class TestSegmentSentences:
    def test_two_sentences(self):
        text = "She is stable. Follow up in 2 weeks."
        spans = segment_sentences(text)
        assert [s.substring(text) for s in spans] == [
            "She is stable.",
            "Follow up in 2 weeks.",
        ]

    def test_abbreviation_does_not_break(self):
        text = "Dr. Smith saw the patient."
        spans = segment_sentences(text)
        assert [s.substring(text) for s in spans] == ["Dr. Smith saw the patient."]

    def test_decimal_number_does_not_break(self):
        text = "BP was 140.5 today"
        spans = segment_sentences(text)
        assert [s.substring(text) for s in spans] == ["BP was 140.5 today"]

    def test_newline_breaks(self):
        text = "First line\nsecond line"
        spans = segment_sentences(text)
        assert [s.substring(text) for s in spans] == ["First line", "second line"]

    def test_question_and_exclamation(self):
        text = "Any pain? None reported! Good."
        spans = segment_sentences(text)
        assert len(spans) == 3

    def test_eg_abbreviation(self):
        text = "Avoid triggers, e.g. smoke and dust. Use the inhaler."
        spans = segment_sentences(text)
        assert len(spans) == 2
        assert spans[0].substring(text) == "Avoid triggers, e.g. smoke and dust."

    def test_spans_increasing_and_disjoint(self):
        text = "One. Two! Three? Four.\nFive."
        spans = segment_sentences(text)
        for a, b in zip(spans, spans[1:]):
            assert a.end <= b.start

    def test_custom_abbreviations(self):
        text = "Qty. remains unchanged."
        assert len(segment_sentences(text)) == 2
        assert len(segment_sentences(text, frozenset({"qty"}))) == 1

    def test_default_list_loaded(self):
        abbrevs = default_abbreviations()
        assert "dr" in abbrevs and "e.g" in abbrevs


class TestResolveExact:
    def test_known_offset(self):
        needle = "abnormal heart sound"
        haystack = ("z" * 120) + needle + (" filler" * 5)
        match = resolve_span(needle, haystack)
        assert match.span == Span(120, 140)
        assert match.tier is Tier.EXACT
        assert match.score == 1.0

    def test_earliest_occurrence_wins(self):
        haystack = "pain here and pain there"
        match = resolve_span("pain", haystack)
        assert match.span == Span(0, 4)
        assert match.candidates == 2

    def test_verbatim_needle_always_exact(self):
        rng = random.Random(21)
        text = " ".join(rng.choice(["alpha", "beta", "gamma", "delta"]) for _ in range(40))
        for _ in range(50):
            start = rng.randint(0, len(text) - 5)
            end = start + rng.randint(1, min(30, len(text) - start))
            needle = text[start:end]
            match = resolve_span(needle, text)
            assert match.tier is Tier.EXACT
            assert match.span.substring(text) == needle
            assert text.find(needle) == match.span.start

    def test_empty_needle_rejected(self):
        with pytest.raises(ValueError):
            resolve_span("", "text")

    def test_needle_longer_than_haystack(self):
        with pytest.raises(NoMatchError):
            resolve_span("a much longer needle", "short")


class TestResolveNormalized:
    def test_case_and_whitespace(self):
        haystack = "today a heart sound was noted"
        match = resolve_span("Heart  Sound", haystack)
        assert match.tier is Tier.NORMALIZED
        assert match.span.substring(haystack) == "heart sound"
        assert match.score == 1.0

    def test_punctuation_stripped(self):
        haystack = "dose was 20 mg, daily, with food"
        match = resolve_span("20 mg daily", haystack)
        assert match.tier is Tier.NORMALIZED
        assert match.span.substring(haystack) == "20 mg, daily"

    def test_normalization_can_be_disabled(self):
        policy = MatchPolicy(case_fold=False, collapse_whitespace=False, strip_punctuation=False)
        haystack = "the heart sound was clear enough today"
        match = resolve_span("Heart Sound", haystack, policy)
        assert match.tier is Tier.APPROXIMATE

    def test_mapped_span_normalizes_back_to_needle(self):
        haystack = "Rubs   II/VI, SEM at  apex noted"
        match = resolve_span("rubs ii/vi sem at apex", haystack)
        assert match.tier is Tier.NORMALIZED
        substring = match.span.substring(haystack)
        again = resolve_span(substring, haystack)
        assert again.span == match.span or again.tier is Tier.EXACT


class TestResolveApproximate:
    def test_one_token_drift(self):
        needle = "rubs II/IV SEM at apex"
        haystack = "exam notable for rubs II/VI SEM at apex radiating on."
        expected_window = "rubs II/VI SEM at apex"
        d, s, e = brute_force_best(needle, haystack)
        assert haystack[s:e] == expected_window
        assert d == levenshtein(needle, expected_window) == 2
        match = resolve_span(needle, haystack, MatchPolicy(max_edit_ratio=0.2))
        assert match.tier is Tier.APPROXIMATE
        assert match.span == Span(s, e)
        assert match.score == 1.0 - d / len(needle)

    def test_rejects_beyond_ratio(self):
        with pytest.raises(NoMatchError):
            resolve_span(
                "completely unrelated words",
                "zqx vbn mlk jhg fds apo iuy",
                MatchPolicy(max_edit_ratio=0.1),
            )

    def test_returned_distance_within_bound(self):
        rng = random.Random(5)
        policy = MatchPolicy(max_edit_ratio=0.3)
        alphabet = "abcdef "
        for _ in range(100):
            haystack = "".join(rng.choice(alphabet) for _ in range(rng.randint(30, 120)))
            start = rng.randint(0, len(haystack) - 10)
            needle = list(haystack[start : start + rng.randint(8, 20)])
            for _ in range(rng.randint(1, 3)):
                pos = rng.randrange(len(needle))
                needle[pos] = rng.choice("xyz")
            needle = "".join(needle)
            try:
                match = resolve_span(needle, haystack, policy)
            except NoMatchError:
                continue
            if match.tier is Tier.APPROXIMATE:
                observed = levenshtein(needle, match.span.substring(haystack))
                assert observed <= policy.max_edit_ratio * len(needle) + 1e-9
                assert match.score == 1.0 - observed / len(needle)

    def test_agrees_with_brute_force_oracle(self):
        rng = random.Random(99)
        policy = MatchPolicy(
            max_edit_ratio=0.5, case_fold=False, collapse_whitespace=False, strip_punctuation=False
        )
        for _ in range(120):
            haystack = "".join(rng.choice("abcab ") for _ in range(rng.randint(20, 90)))
            start = rng.randint(0, max(0, len(haystack) - 8))
            chunk = list(haystack[start : start + rng.randint(4, 16)])
            if not chunk:
                continue
            for _ in range(rng.randint(1, 2)):
                pos = rng.randrange(len(chunk))
                chunk[pos] = rng.choice("xyz")
            needle = "".join(chunk)
            d, s, e = brute_force_best(needle, haystack)
            if d > 0.5 * len(needle):
                with pytest.raises(NoMatchError):
                    resolve_span(needle, haystack, policy)
                continue
            match = resolve_span(needle, haystack, policy)
            observed = levenshtein(needle, match.span.substring(haystack))
            assert observed == d
            assert (match.span.start, match.span.end) == (s, e)

    def test_deterministic(self):
        needle = "rubs II/IV SEM at apex"
        haystack = "exam notable for rubs II/VI SEM at apex radiating on."
        results = {resolve_span(needle, haystack).span for _ in range(5)}
        assert len(results) == 1
