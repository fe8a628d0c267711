"""Labeled hallucination fixtures for tests and demos.

Real generator hallucinations are not reproducible, so these are injected
by rule into an offline-generated document and logged in a manifest:

- contradiction: a numeric or polarity token inside one linked claim is
  altered in place; the link is kept, so it now points at evidence that
  refutes the altered text.
- extrapolation: a synthesized claim is appended to the summary with no
  link at all.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any

from .model import Claim, SourceDocument, Span, TraceableTextDocument, validate
from .resolve import tokenize

EXTRAPOLATION_SENTENCE = (
    "Steady improvement is expected to continue over the coming months."
)

# Swapped in either direction, first match wins.
_POLARITY_PAIRS = [
    ("stable", "unstable"),
    ("normal", "abnormal"),
    ("positive", "negative"),
    ("improved", "worsened"),
    ("improving", "worsening"),
    ("present", "absent"),
    ("increased", "decreased"),
    ("elevated", "reduced"),
    ("denies", "reports"),
    ("mild", "severe"),
    ("left", "right"),
]
POLARITY_SWAPS: dict[str, str] = {}
for _a, _b in _POLARITY_PAIRS:
    POLARITY_SWAPS[_a] = _b
    POLARITY_SWAPS[_b] = _a


class InjectionError(Exception):
    """The document offers nothing to inject into."""


def _match_case(template: str, replacement: str) -> str:
    if template[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


def _numeric_alternatives(token: str):
    """Same-length digit perturbations, most significant digit first."""
    for pos in range(len(token)):
        digit = int(token[pos])
        for delta in range(1, 10):
            new_digit = (digit + delta) % 10
            if pos == 0 and new_digit == 0:
                continue
            yield token[:pos] + str(new_digit) + token[pos + 1 :]


def _splice(text: str, start: int, end: int, replacement: str) -> str:
    return text[:start] + replacement + text[end:]


def _rebuild_claims(
    doc: TraceableTextDocument, new_summary: str, edit_at: int, delta: int
) -> tuple[Claim, ...]:
    claims = []
    for claim in doc.claims:
        span = claim.span
        if span.start > edit_at:
            span = Span(span.start + delta, span.end + delta)
        elif span.end > edit_at:
            span = Span(span.start, span.end + delta)
        claims.append(Claim(id=claim.id, span=span, text=span.substring(new_summary)))
    return tuple(claims)


def inject_contradiction(
    doc: TraceableTextDocument, source: SourceDocument
) -> tuple[TraceableTextDocument, dict[str, Any]]:
    """Alter one token of one linked claim so the linked passage refutes it.

    The altered token is guaranteed absent from the text the link covers.
    """
    for claim in doc.claims:
        link = doc.link_for_claim(claim.id)
        if link is None:
            continue
        linked_text = " ".join(span.substring(source.text) for span in link.source_spans)
        for token in tokenize(claim.text):
            alternatives = None
            if token.text.isdigit():
                alternatives = _numeric_alternatives(token.text)
            elif token.text.lower() in POLARITY_SWAPS:
                alternatives = iter(
                    [_match_case(token.text, POLARITY_SWAPS[token.text.lower()])]
                )
            if alternatives is None:
                continue
            for altered in alternatives:
                if altered.lower() in linked_text.lower():
                    continue
                at = claim.span.start + token.span.start
                delta = len(altered) - len(token.text)
                new_summary = _splice(doc.summary_text, at, at + len(token.text), altered)
                new_doc = replace(
                    doc,
                    summary_text=new_summary,
                    claims=_rebuild_claims(doc, new_summary, at, delta),
                )
                manifest = {
                    "kind": "contradiction",
                    "claim_id": claim.id,
                    "original_token": token.text,
                    "altered_token": altered,
                    "summary_offset": at,
                }
                _check(new_doc, source)
                return new_doc, manifest
    raise InjectionError("no linked claim contains a numeric or polarity token to alter")


def inject_extrapolation(
    doc: TraceableTextDocument, source: SourceDocument
) -> tuple[TraceableTextDocument, dict[str, Any]]:
    """Append a synthesized claim with no link."""
    existing = {claim.id for claim in doc.claims}
    n = len(existing) + 1
    while f"c{n}" in existing:
        n += 1
    claim_id = f"c{n}"
    new_summary = doc.summary_text + " " + EXTRAPOLATION_SENTENCE
    span = Span(len(doc.summary_text) + 1, len(new_summary))
    new_doc = replace(
        doc,
        summary_text=new_summary,
        claims=doc.claims + (Claim(id=claim_id, span=span, text=EXTRAPOLATION_SENTENCE),),
    )
    manifest = {
        "kind": "extrapolation",
        "claim_id": claim_id,
        "claim_text": EXTRAPOLATION_SENTENCE,
    }
    _check(new_doc, source)
    return new_doc, manifest


def inject(
    doc: TraceableTextDocument, source: SourceDocument, kind: str
) -> tuple[TraceableTextDocument, dict[str, Any]]:
    if kind == "contradiction":
        return inject_contradiction(doc, source)
    if kind == "extrapolation":
        return inject_extrapolation(doc, source)
    raise ValueError(f"unknown fixture kind {kind!r}")


def _check(doc: TraceableTextDocument, source: SourceDocument) -> None:
    violations = validate(doc, source)
    if violations:
        raise InjectionError(
            "injection produced an invalid document: "
            + "; ".join(f"{v.code}: {v.message}" for v in violations)
        )
