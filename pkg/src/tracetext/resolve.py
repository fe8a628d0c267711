"""Locate quoted phrases in a text.

Resolution is tiered: exact substring first, then exact after configurable
normalization (with offsets mapped back to the original text), then a
minimum-edit-distance search over all substrings. The returned span always
indexes the original haystack.

Also home to the tokenizer and sentence segmenter shared by the aligner and
the generation chain.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

from .model import Span, Tier


class NoMatchError(Exception):
    """No tier produced a span within the policy's tolerance."""


@dataclass(frozen=True)
class MatchPolicy:
    """Knobs for :func:`resolve_span`.

    ``max_edit_ratio`` bounds the approximate tier: Levenshtein distance
    divided by needle length. Beyond 0.5 matches stop meaning anything, so
    that is a hard cap.
    """

    max_edit_ratio: float = 0.2
    case_fold: bool = True
    collapse_whitespace: bool = True
    strip_punctuation: bool = True
    tie_break: str = "earliest"

    def __post_init__(self):
        if not 0.0 <= self.max_edit_ratio <= 0.5:
            raise ValueError("max_edit_ratio must be in [0, 0.5]")
        if self.tie_break != "earliest":
            raise ValueError(f"unknown tie_break {self.tie_break!r}")

    @property
    def normalizes(self) -> bool:
        return self.case_fold or self.collapse_whitespace or self.strip_punctuation


@dataclass(frozen=True)
class Token:
    text: str
    span: Span


@dataclass(frozen=True)
class ResolvedMatch:
    """A located span plus how it was found.

    ``candidates`` counts equally good alternatives, for diagnostics: the
    number of occurrences for the exact/normalized tiers, and the number of
    distinct end offsets achieving the best edit distance for the
    approximate tier. The earliest span always wins.
    """

    span: Span
    tier: Tier
    score: float
    candidates: int = 1


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[Token]:
    """Maximal runs of letters and digits, with their spans."""
    return [Token(m.group(), Span(m.start(), m.end())) for m in _TOKEN_RE.finditer(text)]


@lru_cache(maxsize=1)
def default_abbreviations() -> frozenset[str]:
    data = resources.files("tracetext").joinpath("data/abbreviations.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in data.splitlines() if line.strip())


def load_abbreviations(path: str) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


def _period_breaks(text: str, i: int, abbreviations: frozenset[str]) -> bool:
    """Whether the period at index i ends a sentence."""
    nxt = text[i + 1] if i + 1 < len(text) else ""
    # Periods glued to a following letter or digit are internal ("140.5",
    # "e.g.ware" style run-ons) and never break.
    if nxt and (nxt.isalpha() or nxt.isdigit()):
        return False
    # Abbreviation check: the run of letters/periods ending here.
    j = i
    while j > 0 and (text[j - 1].isalpha() or text[j - 1] == "."):
        j -= 1
    token = text[j:i].strip(".")
    if token and token.lower() in abbreviations:
        return False
    return True


def segment_sentences(text: str, abbreviations: frozenset[str] | None = None) -> list[Span]:
    """Sentence spans partitioning the non-whitespace content of ``text``.

    Boundaries fall after '.', '?', '!' and newlines, except periods that
    terminate a known abbreviation or sit inside a number. Spans are trimmed
    of surrounding whitespace.
    """
    if abbreviations is None:
        abbreviations = default_abbreviations()
    boundaries: list[int] = []
    for i, ch in enumerate(text):
        if ch == "\n":
            boundaries.append(i + 1)
        elif ch in "?!":
            boundaries.append(i + 1)
        elif ch == "." and _period_breaks(text, i, abbreviations):
            boundaries.append(i + 1)
    spans: list[Span] = []
    prev = 0
    for b in boundaries + [len(text)]:
        seg_start, seg_end = prev, b
        prev = b
        while seg_start < seg_end and text[seg_start].isspace():
            seg_start += 1
        while seg_end > seg_start and text[seg_end - 1].isspace():
            seg_end -= 1
        if seg_start < seg_end:
            spans.append(Span(seg_start, seg_end))
    return spans


# ---------------------------------------------------------------------------
# Normalization with an offset map back into the original text


def _normalize_with_map(text: str, policy: MatchPolicy) -> tuple[str, list[int], list[int]]:
    """Normalized text plus, per normalized char, the original [start, end) it came from."""
    chars: list[str] = []
    starts: list[int] = []
    ends: list[int] = []
    pending_ws_at: int | None = None
    for i, ch in enumerate(text):
        if policy.strip_punctuation and unicodedata.category(ch).startswith("P"):
            continue
        if ch.isspace():
            if policy.collapse_whitespace:
                if pending_ws_at is None:
                    pending_ws_at = i
                continue
            chars.append(ch)
            starts.append(i)
            ends.append(i + 1)
            continue
        if pending_ws_at is not None:
            if chars:  # leading whitespace is dropped entirely
                chars.append(" ")
                starts.append(pending_ws_at)
                ends.append(pending_ws_at + 1)
            pending_ws_at = None
        for piece in ch.casefold() if policy.case_fold else ch:
            chars.append(piece)
            starts.append(i)
            ends.append(i + 1)
    return "".join(chars), starts, ends


def _count_occurrences(haystack: str, needle: str) -> int:
    count = 0
    pos = haystack.find(needle)
    while pos >= 0:
        count += 1
        pos = haystack.find(needle, pos + 1)
    return count


# ---------------------------------------------------------------------------
# Approximate tier: exact minimum edit distance over all substrings.
#
# A forward pass computes, for every end offset, the best distance of the
# needle against any substring ending there (free start). The same pass over
# the reversed strings yields per-start bests, which pins down the earliest
# optimal start; a final anchored pass finds the earliest optimal end for it.


def _free_start_row(needle: str, haystack: str) -> list[int]:
    """row[j] = min over s of lev(needle, haystack[s:j])."""
    m = len(needle)
    prev = list(range(m + 1))
    out = [m]
    for hch in haystack:
        cur = [0] * (m + 1)
        for i in range(1, m + 1):
            cost = 0 if needle[i - 1] == hch else 1
            a = prev[i - 1] + cost
            b = prev[i] + 1
            c = cur[i - 1] + 1
            cur[i] = a if a <= b and a <= c else (b if b <= c else c)
        out.append(cur[m])
        prev = cur
    return out


def _earliest_end(needle: str, haystack: str, start: int, target: int) -> int:
    """Smallest end with lev(needle, haystack[start:end]) == target."""
    m = len(needle)
    # No optimal substring is longer than len(needle) + target.
    limit = min(len(haystack), start + m + target)
    window = haystack[start:limit]
    prev = list(range(len(window) + 1))
    for i in range(1, m + 1):
        nch = needle[i - 1]
        cur = [i] + [0] * len(window)
        for j in range(1, len(window) + 1):
            cost = 0 if nch == window[j - 1] else 1
            a = prev[j - 1] + cost
            b = prev[j] + 1
            c = cur[j - 1] + 1
            cur[j] = a if a <= b and a <= c else (b if b <= c else c)
        prev = cur
    for j in range(len(window) + 1):
        if prev[j] == target:
            return start + j
    raise AssertionError("no end attains the computed best distance")


def _approximate_best(needle: str, haystack: str) -> tuple[int, Span, int]:
    """Best (distance, span, tie_count) over every substring of haystack.

    The span is the lexicographically smallest (start, end) among all
    substrings attaining the minimum distance.
    """
    n = len(haystack)
    forward = _free_start_row(needle, haystack)
    best = min(forward)
    ties = sum(1 for j in range(1, n + 1) if forward[j] == best)
    backward = _free_start_row(needle[::-1], haystack[::-1])
    start = n - max(j for j, v in enumerate(backward) if v == best)
    end = _earliest_end(needle, haystack, start, best)
    return best, Span(start, end) if end > start else Span(start, start + 1), ties


def resolve_span(needle: str, haystack: str, policy: MatchPolicy | None = None) -> ResolvedMatch:
    """Find ``needle`` in ``haystack``, trying exact, normalized, then
    approximate matching. Raises :class:`NoMatchError` if every tier fails.
    """
    if policy is None:
        policy = MatchPolicy()
    if not needle:
        raise ValueError("needle must be nonempty")
    if len(needle) > len(haystack):
        raise NoMatchError(f"needle ({len(needle)} chars) longer than haystack ({len(haystack)})")

    pos = haystack.find(needle)
    if pos >= 0:
        return ResolvedMatch(
            span=Span(pos, pos + len(needle)),
            tier=Tier.EXACT,
            score=1.0,
            candidates=_count_occurrences(haystack, needle),
        )

    if policy.normalizes:
        nhay, starts, ends = _normalize_with_map(haystack, policy)
        nneedle, _, _ = _normalize_with_map(needle, policy)
        if nneedle:
            p = nhay.find(nneedle)
            if p >= 0:
                span = Span(starts[p], ends[p + len(nneedle) - 1])
                return ResolvedMatch(
                    span=span,
                    tier=Tier.NORMALIZED,
                    score=1.0,
                    candidates=_count_occurrences(nhay, nneedle),
                )

    distance, span, ties = _approximate_best(needle, haystack)
    ratio = distance / len(needle)
    if ratio <= policy.max_edit_ratio + 1e-12:
        return ResolvedMatch(
            span=span,
            tier=Tier.APPROXIMATE,
            score=1.0 - ratio,
            candidates=ties,
        )
    raise NoMatchError(
        f"best approximate match has edit ratio {ratio:.3f} > {policy.max_edit_ratio}"
    )
