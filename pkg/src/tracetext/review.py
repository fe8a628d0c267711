"""Expert review workflow: coverage and accuracy metrics, applying review
verdicts and fixes to documents, portable review bundles, and a cross-check
of model links against the offline aligner.

A review bundle embeds a full snapshot of the document under review, so the
review stays reproducible even if the stored document changes later.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Any, Sequence

from .model import (
    Claim,
    LinkStatus,
    MalformedInputError,
    ReviewAnnotation,
    SourceDocument,
    Span,
    Tier,
    TraceableTextDocument,
    Verdict,
    annotation_from_dict,
    annotation_to_dict,
    document_from_dict,
    document_to_dict,
)
from .offline import AlignConfig, CandidateAlignment, IdfWeights, align_claim, score_window
from .resolve import MatchPolicy, NoMatchError, resolve_span, tokenize

BUNDLE_FORMAT_VERSION = 1


class UnknownTargetError(Exception):
    """Annotation references a link or claim that is not in the document."""


class InvalidProposedSpanError(Exception):
    """Proposed source spans are out of bounds or overlap each other."""


class UngroundableClaimTextError(Exception):
    """Proposed claim text cannot be located in the summary, or the located
    span would collide with another claim."""


class TargetMismatchError(Exception):
    """Bundle annotations reference targets missing from the embedded snapshot."""


# ---------------------------------------------------------------------------
# Metrics


def compute_coverage(doc: TraceableTextDocument) -> float:
    """Fraction of summary characters inside claim spans. Claims are
    disjoint by invariant, so this never double-counts."""
    if not doc.summary_text:
        return 0.0
    covered = sum(len(claim.span) for claim in doc.claims)
    return covered / len(doc.summary_text)


@dataclass(frozen=True)
class AccuracyReport:
    correct: int
    semantic_issue: int
    incorrect: int
    missing_coverage: int
    unreviewed: int
    total_links: int
    correct_rate: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "counts": {
                "correct": self.correct,
                "semantic_issue": self.semantic_issue,
                "incorrect": self.incorrect,
                "missing_coverage": self.missing_coverage,
                "unreviewed": self.unreviewed,
            },
            "total_links": self.total_links,
            "correct_rate": self.correct_rate,
        }

    def as_table(self) -> str:
        rows = [
            ("correct", self.correct),
            ("semantic_issue", self.semantic_issue),
            ("incorrect", self.incorrect),
            ("missing_coverage", self.missing_coverage),
            ("unreviewed", self.unreviewed),
            ("total_links", self.total_links),
        ]
        lines = [f"{name:<18} {value}" for name, value in rows]
        rate = "n/a" if self.correct_rate is None else f"{self.correct_rate:.4f}"
        lines.append(f"{'correct_rate':<18} {rate}")
        return "\n".join(lines)


def _rate(correct: int, semantic: int, incorrect: int) -> float | None:
    reviewed = correct + semantic + incorrect
    if reviewed == 0:
        return None
    return correct / reviewed


def accuracy_report(target: "TraceableTextDocument | ReviewBundle") -> AccuracyReport:
    """Tally verdicts. For a document, link statuses are counted; for a
    bundle, the last annotation per target wins and links the bundle's
    snapshot never mentions count as unreviewed."""
    if isinstance(target, TraceableTextDocument):
        buckets = {status: 0 for status in LinkStatus}
        for link in target.links:
            buckets[link.status] += 1
        return AccuracyReport(
            correct=buckets[LinkStatus.CORRECT],
            semantic_issue=buckets[LinkStatus.SEMANTIC_ISSUE],
            incorrect=buckets[LinkStatus.INCORRECT],
            missing_coverage=0,
            unreviewed=buckets[LinkStatus.UNREVIEWED],
            total_links=len(target.links),
            correct_rate=_rate(
                buckets[LinkStatus.CORRECT],
                buckets[LinkStatus.SEMANTIC_ISSUE],
                buckets[LinkStatus.INCORRECT],
            ),
        )

    last_verdicts: dict[tuple[str, str], Verdict] = {}
    for ann in target.annotations:
        last_verdicts[(ann.target_kind, ann.target_id)] = ann.verdict
    buckets = {verdict: 0 for verdict in Verdict}
    for verdict in last_verdicts.values():
        buckets[verdict] += 1
    reviewed_links = {tid for kind, tid in last_verdicts if kind == "link"}
    unreviewed = sum(1 for link in target.document.links if link.claim_id not in reviewed_links)
    return AccuracyReport(
        correct=buckets[Verdict.CORRECT],
        semantic_issue=buckets[Verdict.SEMANTIC_ISSUE],
        incorrect=buckets[Verdict.INCORRECT],
        missing_coverage=buckets[Verdict.MISSING_COVERAGE],
        unreviewed=unreviewed,
        total_links=len(target.document.links),
        correct_rate=_rate(
            buckets[Verdict.CORRECT],
            buckets[Verdict.SEMANTIC_ISSUE],
            buckets[Verdict.INCORRECT],
        ),
    )


# ---------------------------------------------------------------------------
# Applying annotations


_STATUS_FOR_VERDICT = {
    Verdict.CORRECT: LinkStatus.CORRECT,
    Verdict.SEMANTIC_ISSUE: LinkStatus.SEMANTIC_ISSUE,
    Verdict.INCORRECT: LinkStatus.INCORRECT,
    # MISSING_COVERAGE marks unsummarized source content; the link status
    # enum has no bucket for it, so it lives in bundles and reports only.
}


def _checked_spans(spans: Sequence[Span], source: SourceDocument) -> tuple[Span, ...]:
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    n = len(source.text)
    for span in ordered:
        if span.end > n:
            raise InvalidProposedSpanError(
                f"proposed span [{span.start}, {span.end}) exceeds source length {n}"
            )
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise InvalidProposedSpanError("proposed spans overlap")
    return tuple(ordered)


def apply_annotation(
    doc: TraceableTextDocument,
    ann: ReviewAnnotation,
    source: SourceDocument,
    match_policy: MatchPolicy | None = None,
) -> TraceableTextDocument:
    """Record a verdict and apply any proposed fix, returning a new document.

    Link targets: the verdict lands on the link's status; proposed spans
    replace the link's source spans at the reviewed tier with score 1.0.
    Claim targets: proposed claim text is re-grounded in the summary and the
    claim's span and text are updated. Applying the same annotation twice
    yields the same document as applying it once.
    """
    if ann.link_id is not None:
        link = doc.link_for_claim(ann.link_id)
        if link is None:
            raise UnknownTargetError(f"no link for claim {ann.link_id!r}")
        status = _STATUS_FOR_VERDICT.get(ann.verdict, link.status)
        new_link = replace(link, status=status)
        if ann.proposed_spans is not None and ann.verdict is not Verdict.MISSING_COVERAGE:
            new_link = replace(
                new_link,
                source_spans=_checked_spans(ann.proposed_spans, source),
                tier=Tier.REVIEWED,
                score=1.0,
            )
        links = tuple(new_link if l.claim_id == ann.link_id else l for l in doc.links)
        return replace(doc, links=links)

    claim = doc.claim_by_id(ann.claim_id)
    if claim is None:
        raise UnknownTargetError(f"no claim {ann.claim_id!r}")
    if ann.proposed_claim_text is None:
        return doc  # verdict lives in the bundle; claims carry no status
    try:
        match = resolve_span(ann.proposed_claim_text, doc.summary_text, match_policy)
    except (NoMatchError, ValueError) as exc:
        raise UngroundableClaimTextError(
            f"proposed text for claim {ann.claim_id!r} not found in summary: {exc}"
        ) from exc
    new_claim = Claim(id=claim.id, span=match.span, text=match.span.substring(doc.summary_text))
    for other in doc.claims:
        if other.id != claim.id and other.span.overlaps(new_claim.span):
            raise UngroundableClaimTextError(
                f"proposed text for claim {ann.claim_id!r} lands on claim {other.id!r}"
            )
    claims = tuple(
        sorted(
            (new_claim if c.id == claim.id else c for c in doc.claims),
            key=lambda c: (c.span.start, c.span.end),
        )
    )
    return replace(doc, claims=claims)


# ---------------------------------------------------------------------------
# Review bundles


@dataclass(frozen=True)
class ReviewBundle:
    document: TraceableTextDocument
    annotations: tuple[ReviewAnnotation, ...]
    reviewer: str
    created_at: str
    updated_at: str

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))


def new_bundle(
    doc: TraceableTextDocument, reviewer: str, created_at: str | None = None
) -> ReviewBundle:
    stamp = created_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    return ReviewBundle(
        document=doc, annotations=(), reviewer=reviewer, created_at=stamp, updated_at=stamp
    )


def _check_target(ann: ReviewAnnotation, doc: TraceableTextDocument) -> None:
    if ann.link_id is not None and doc.link_for_claim(ann.link_id) is None:
        raise TargetMismatchError(f"annotation targets missing link {ann.link_id!r}")
    if ann.claim_id is not None and doc.claim_by_id(ann.claim_id) is None:
        raise TargetMismatchError(f"annotation targets missing claim {ann.claim_id!r}")


def add_annotation(
    bundle: ReviewBundle, ann: ReviewAnnotation, updated_at: str | None = None
) -> ReviewBundle:
    _check_target(ann, bundle.document)
    stamp = updated_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    return replace(bundle, annotations=bundle.annotations + (ann,), updated_at=stamp)


def export_bundle(bundle: ReviewBundle) -> bytes:
    payload = {
        "bundle_format_version": BUNDLE_FORMAT_VERSION,
        "reviewer": bundle.reviewer,
        "created_at": bundle.created_at,
        "updated_at": bundle.updated_at,
        "document": document_to_dict(bundle.document),
        "annotations": [annotation_to_dict(a) for a in bundle.annotations],
    }
    return (json.dumps(payload, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def import_bundle(data: bytes | str) -> ReviewBundle:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedInputError(f"bundle is not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"bundle is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedInputError("bundle must be a JSON object")
    expected = {
        "bundle_format_version",
        "reviewer",
        "created_at",
        "updated_at",
        "document",
        "annotations",
    }
    if obj.keys() != expected:
        raise MalformedInputError(f"bundle must have exactly keys {sorted(expected)}")
    if obj["bundle_format_version"] != BUNDLE_FORMAT_VERSION:
        raise MalformedInputError(
            f"unsupported bundle_format_version {obj['bundle_format_version']!r}"
        )
    for key in ("reviewer", "created_at", "updated_at"):
        if not isinstance(obj[key], str):
            raise MalformedInputError(f"bundle {key} must be a string")
    document = document_from_dict(obj["document"])
    if not isinstance(obj["annotations"], list):
        raise MalformedInputError("bundle annotations must be an array")
    annotations = tuple(annotation_from_dict(a) for a in obj["annotations"])
    for ann in annotations:
        _check_target(ann, document)
    return ReviewBundle(
        document=document,
        annotations=annotations,
        reviewer=obj["reviewer"],
        created_at=obj["created_at"],
        updated_at=obj["updated_at"],
    )


def apply_bundle(
    doc: TraceableTextDocument, bundle: ReviewBundle, source: SourceDocument
) -> TraceableTextDocument:
    """Apply a bundle's annotations to ``doc`` in order."""
    for ann in bundle.annotations:
        doc = apply_annotation(doc, ann, source)
    return doc


# ---------------------------------------------------------------------------
# Cross-checking model links against the offline aligner


@dataclass(frozen=True)
class CrossCheckEntry:
    claim_id: str
    linked: bool
    model_span_score: float | None  # offline score of the text the link covers
    offline_best: CandidateAlignment | None
    disagree: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "linked": self.linked,
            "model_span_score": self.model_span_score,
            "offline_best": None
            if self.offline_best is None
            else {
                "start": self.offline_best.span.start,
                "end": self.offline_best.span.end,
                "score": self.offline_best.score,
            },
            "disagree": self.disagree,
        }


def cross_check(
    doc: TraceableTextDocument,
    source: SourceDocument,
    cfg: AlignConfig,
    weights: IdfWeights,
) -> list[CrossCheckEntry]:
    """Compare each claim's link against the offline aligner's best candidate.

    A linked claim is flagged when the offline top candidate shares no
    overlap with any of the link's spans. The document is never mutated.
    """
    out = []
    for claim in doc.claims:
        link = doc.link_for_claim(claim.id)
        candidates = align_claim(claim.text, source, cfg, weights)
        best = candidates[0] if candidates else None
        claim_tokens = [t.text for t in tokenize(claim.text)]
        if link is not None:
            linked_text = " ".join(span.substring(source.text) for span in link.source_spans)
            model_score = (
                score_window(claim_tokens, [t.text for t in tokenize(linked_text)], weights)
                if claim_tokens
                else None
            )
            disagree = best is not None and not any(
                best.span.overlaps(span) for span in link.source_spans
            )
            out.append(
                CrossCheckEntry(
                    claim_id=claim.id,
                    linked=True,
                    model_span_score=model_score,
                    offline_best=best,
                    disagree=disagree,
                )
            )
        else:
            out.append(
                CrossCheckEntry(
                    claim_id=claim.id,
                    linked=False,
                    model_span_score=None,
                    offline_best=best,
                    disagree=False,
                )
            )
    return out
