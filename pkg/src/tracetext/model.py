"""Core data model: source documents, traceable-text documents, and their
canonical JSON encoding.

All offsets are Unicode code point indices into the text they annotate, and
all spans are half-open ``[start, end)`` intervals. Every type here is an
immutable value; edits produce new values (see :func:`dataclasses.replace`).

Canonical JSON layout (stable key order, UTF-8, 2-space indent, trailing
newline)::

    {
      "format_version": 1,
      "source_id": "...",
      "summary_text": "...",
      "generator_info": {"backend": "...", "model_id": "...", "timestamp": "..."},
      "claims": [{"id": "...", "start": 0, "end": 10, "text": "..."}],
      "links": [{"claim_id": "...",
                 "source_spans": [{"start": 0, "end": 5}],
                 "tier": "exact", "score": 1.0, "status": "unreviewed"}]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import pairwise
from typing import Any, Iterable, Mapping

FORMAT_VERSION = 1


class MalformedInputError(ValueError):
    """Bytes are not a well-formed encoding of a document."""


class VersionMismatchError(ValueError):
    """format_version is not one this build understands."""


class InvariantViolationError(ValueError):
    """A structurally well-formed document breaks a model invariant."""

    def __init__(self, violations: Iterable["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in self.violations))


class Tier(str, Enum):
    """How a span was grounded, strongest to weakest, plus expert-confirmed."""

    EXACT = "exact"
    NORMALIZED = "normalized"
    APPROXIMATE = "approximate"
    REVIEWED = "reviewed"


# Higher is stronger; a link's tier is the weakest tier among its spans.
TIER_STRENGTH = {
    Tier.REVIEWED: 4,
    Tier.EXACT: 3,
    Tier.NORMALIZED: 2,
    Tier.APPROXIMATE: 1,
}


class LinkStatus(str, Enum):
    UNREVIEWED = "unreviewed"
    CORRECT = "correct"
    SEMANTIC_ISSUE = "semantic_issue"
    INCORRECT = "incorrect"


class Verdict(str, Enum):
    """Reviewer judgment on a link or claim."""

    CORRECT = "correct"
    SEMANTIC_ISSUE = "semantic_issue"
    INCORRECT = "incorrect"
    MISSING_COVERAGE = "missing_coverage"


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        for name in ("start", "end"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeError(f"span {name} must be an int, got {type(v).__name__}")
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.start < other.end and other.start < self.end

    def substring(self, text: str) -> str:
        return text[self.start : self.end]


@dataclass(frozen=True)
class SourceDocument:
    id: str
    text: str
    title: str | None = None
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("source id must be nonempty")
        if not self.text:
            raise ValueError("source text must be nonempty")
        object.__setattr__(self, "metadata", dict(self.metadata))


@dataclass(frozen=True)
class Claim:
    """A contiguous span of the summary asserting one granular statement."""

    id: str
    span: Span
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("claim id must be nonempty")


@dataclass(frozen=True)
class Link:
    """Grounding of one claim in one or more source spans."""

    claim_id: str
    source_spans: tuple[Span, ...]
    tier: Tier
    score: float
    status: LinkStatus = LinkStatus.UNREVIEWED

    def __post_init__(self):
        object.__setattr__(self, "source_spans", tuple(self.source_spans))
        if not self.source_spans:
            raise ValueError(f"link for claim {self.claim_id!r} has no source spans")
        score = float(self.score)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"link score {score} outside [0, 1]")
        object.__setattr__(self, "score", score)


@dataclass(frozen=True)
class GeneratorInfo:
    backend: str
    model_id: str
    timestamp: str


@dataclass(frozen=True)
class TraceableTextDocument:
    """A summary plus the claims and verified source links that trace it.

    Claims without a link are permitted: that is how an ungrounded
    (potentially hallucinated) claim is represented.
    """

    source_id: str
    summary_text: str
    claims: tuple[Claim, ...]
    links: tuple[Link, ...]
    generator_info: GeneratorInfo
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "claims", tuple(self.claims))
        object.__setattr__(self, "links", tuple(self.links))

    def claim_by_id(self, claim_id: str) -> Claim | None:
        for claim in self.claims:
            if claim.id == claim_id:
                return claim
        return None

    def link_for_claim(self, claim_id: str) -> Link | None:
        for link in self.links:
            if link.claim_id == claim_id:
                return link
        return None

    def linked_claim_ids(self) -> set[str]:
        return {link.claim_id for link in self.links}


@dataclass(frozen=True)
class ReviewAnnotation:
    """An expert verdict on one link or one claim, with an optional fix.

    Exactly one of ``link_id`` / ``claim_id`` must be set. Links are keyed
    by the id of the claim they ground, so ``link_id`` holds that claim id.
    """

    verdict: Verdict
    link_id: str | None = None
    claim_id: str | None = None
    note: str | None = None
    proposed_spans: tuple[Span, ...] | None = None
    proposed_claim_text: str | None = None

    def __post_init__(self):
        if (self.link_id is None) == (self.claim_id is None):
            raise ValueError("exactly one of link_id / claim_id must be set")
        if self.proposed_spans is not None:
            object.__setattr__(self, "proposed_spans", tuple(self.proposed_spans))

    @property
    def target_kind(self) -> str:
        return "link" if self.link_id is not None else "claim"

    @property
    def target_id(self) -> str:
        return self.link_id if self.link_id is not None else self.claim_id  # type: ignore[return-value]


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


# ---------------------------------------------------------------------------
# Validation


def _internal_violations(doc: TraceableTextDocument) -> list[Violation]:
    """Invariants checkable from the document alone (no source text)."""
    out: list[Violation] = []
    n = len(doc.summary_text)

    seen_ids: set[str] = set()
    for claim in doc.claims:
        if claim.span.end > n:
            out.append(
                Violation(
                    "ClaimSpanOutOfBounds",
                    f"claim {claim.id}: span [{claim.span.start}, {claim.span.end}) "
                    f"exceeds summary length {n}",
                )
            )
        elif claim.span.substring(doc.summary_text) != claim.text:
            out.append(
                Violation(
                    "ClaimTextMismatch",
                    f"claim {claim.id}: text does not equal the summary substring at "
                    f"[{claim.span.start}, {claim.span.end})",
                )
            )
        if claim.id in seen_ids:
            out.append(Violation("DuplicateClaimId", f"claim id {claim.id} appears twice"))
        seen_ids.add(claim.id)

    for prev, cur in pairwise(doc.claims):
        if cur.span.start < prev.span.start:
            out.append(
                Violation("ClaimOrder", f"claim {cur.id} starts before claim {prev.id}")
            )
        elif cur.span.start < prev.span.end:
            out.append(
                Violation("ClaimOverlap", f"claims {prev.id} and {cur.id} overlap")
            )

    claim_ids = {c.id for c in doc.claims}
    linked: set[str] = set()
    for link in doc.links:
        if link.claim_id not in claim_ids:
            out.append(
                Violation("UnknownClaim", f"link targets unknown claim {link.claim_id}")
            )
        if link.claim_id in linked:
            out.append(
                Violation("DuplicateLink", f"claim {link.claim_id} has more than one link")
            )
        linked.add(link.claim_id)
        for prev, cur in pairwise(link.source_spans):
            if cur.start < prev.start:
                out.append(
                    Violation(
                        "SourceSpanOrder",
                        f"link for claim {link.claim_id}: source spans out of order",
                    )
                )
            elif cur.start < prev.end:
                out.append(
                    Violation(
                        "SourceSpanOverlap",
                        f"link for claim {link.claim_id}: source spans overlap",
                    )
                )
    return out


def validate(doc: TraceableTextDocument, source: SourceDocument) -> list[Violation]:
    """Check every model invariant, including span bounds against the source.

    Violations are returned as data; an empty list means the document is valid
    against this source.
    """
    out = _internal_violations(doc)
    if doc.source_id != source.id:
        out.append(
            Violation(
                "SourceIdMismatch",
                f"document references source {doc.source_id!r}, got {source.id!r}",
            )
        )
    n = len(source.text)
    for link in doc.links:
        for span in link.source_spans:
            if span.end > n:
                out.append(
                    Violation(
                        "SpanOutOfBounds",
                        f"link for claim {link.claim_id}: source span "
                        f"[{span.start}, {span.end}) exceeds source length {n}",
                    )
                )
    return out


# ---------------------------------------------------------------------------
# Canonical JSON


def _span_to_dict(span: Span) -> dict[str, int]:
    return {"start": span.start, "end": span.end}


def document_to_dict(doc: TraceableTextDocument) -> dict[str, Any]:
    return {
        "format_version": doc.format_version,
        "source_id": doc.source_id,
        "summary_text": doc.summary_text,
        "generator_info": {
            "backend": doc.generator_info.backend,
            "model_id": doc.generator_info.model_id,
            "timestamp": doc.generator_info.timestamp,
        },
        "claims": [
            {"id": c.id, "start": c.span.start, "end": c.span.end, "text": c.text}
            for c in doc.claims
        ],
        "links": [
            {
                "claim_id": l.claim_id,
                "source_spans": [_span_to_dict(s) for s in l.source_spans],
                "tier": l.tier.value,
                "score": l.score,
                "status": l.status.value,
            }
            for l in doc.links
        ],
    }


def serialize(doc: TraceableTextDocument) -> bytes:
    """Encode a valid document as canonical JSON bytes."""
    return (json.dumps(document_to_dict(doc), ensure_ascii=False, indent=2) + "\n").encode(
        "utf-8"
    )


def _expect_keys(obj: dict, keys: set[str], ctx: str) -> None:
    missing = keys - obj.keys()
    extra = obj.keys() - keys
    if missing:
        raise MalformedInputError(f"{ctx}: missing keys {sorted(missing)}")
    if extra:
        raise MalformedInputError(f"{ctx}: unexpected keys {sorted(extra)}")


def _expect_str(obj: dict, key: str, ctx: str) -> str:
    v = obj.get(key)
    if not isinstance(v, str):
        raise MalformedInputError(f"{ctx}: {key} must be a string")
    return v


def _expect_int(obj: dict, key: str, ctx: str) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise MalformedInputError(f"{ctx}: {key} must be an integer")
    return v


def _span_from_dict(obj: Any, ctx: str) -> Span:
    if not isinstance(obj, dict):
        raise MalformedInputError(f"{ctx}: span must be an object")
    _expect_keys(obj, {"start", "end"}, ctx)
    start = _expect_int(obj, "start", ctx)
    end = _expect_int(obj, "end", ctx)
    try:
        return Span(start, end)
    except ValueError as exc:
        raise InvariantViolationError([Violation("InvalidSpan", f"{ctx}: {exc}")]) from exc


def document_from_dict(obj: Any) -> TraceableTextDocument:
    if not isinstance(obj, dict):
        raise MalformedInputError("document must be a JSON object")
    if "format_version" not in obj:
        raise MalformedInputError("missing format_version")
    version = obj["format_version"]
    if isinstance(version, bool) or not isinstance(version, int):
        raise MalformedInputError("format_version must be an integer")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"unsupported format_version {version}, expected {FORMAT_VERSION}"
        )
    _expect_keys(
        obj,
        {"format_version", "source_id", "summary_text", "generator_info", "claims", "links"},
        "document",
    )
    source_id = _expect_str(obj, "source_id", "document")
    summary_text = _expect_str(obj, "summary_text", "document")

    gi = obj["generator_info"]
    if not isinstance(gi, dict):
        raise MalformedInputError("generator_info must be an object")
    _expect_keys(gi, {"backend", "model_id", "timestamp"}, "generator_info")
    generator_info = GeneratorInfo(
        backend=_expect_str(gi, "backend", "generator_info"),
        model_id=_expect_str(gi, "model_id", "generator_info"),
        timestamp=_expect_str(gi, "timestamp", "generator_info"),
    )

    claims_raw = obj["claims"]
    links_raw = obj["links"]
    if not isinstance(claims_raw, list) or not isinstance(links_raw, list):
        raise MalformedInputError("claims and links must be arrays")

    claims = []
    for i, c in enumerate(claims_raw):
        ctx = f"claims[{i}]"
        if not isinstance(c, dict):
            raise MalformedInputError(f"{ctx}: must be an object")
        _expect_keys(c, {"id", "start", "end", "text"}, ctx)
        span = _span_from_dict({"start": c.get("start"), "end": c.get("end")}, ctx)
        try:
            claims.append(Claim(id=_expect_str(c, "id", ctx), span=span, text=_expect_str(c, "text", ctx)))
        except ValueError as exc:
            raise InvariantViolationError([Violation("InvalidClaim", f"{ctx}: {exc}")]) from exc

    links = []
    for i, l in enumerate(links_raw):
        ctx = f"links[{i}]"
        if not isinstance(l, dict):
            raise MalformedInputError(f"{ctx}: must be an object")
        _expect_keys(l, {"claim_id", "source_spans", "tier", "score", "status"}, ctx)
        spans_raw = l["source_spans"]
        if not isinstance(spans_raw, list):
            raise MalformedInputError(f"{ctx}: source_spans must be an array")
        spans = tuple(_span_from_dict(s, f"{ctx}.source_spans[{j}]") for j, s in enumerate(spans_raw))
        try:
            tier = Tier(l["tier"])
            status = LinkStatus(l["status"])
        except ValueError as exc:
            raise MalformedInputError(f"{ctx}: {exc}") from exc
        score = l["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise MalformedInputError(f"{ctx}: score must be a number")
        try:
            links.append(
                Link(
                    claim_id=_expect_str(l, "claim_id", ctx),
                    source_spans=spans,
                    tier=tier,
                    score=float(score),
                    status=status,
                )
            )
        except ValueError as exc:
            raise InvariantViolationError([Violation("InvalidLink", f"{ctx}: {exc}")]) from exc

    doc = TraceableTextDocument(
        source_id=source_id,
        summary_text=summary_text,
        claims=tuple(claims),
        links=tuple(links),
        generator_info=generator_info,
        format_version=version,
    )
    violations = _internal_violations(doc)
    if violations:
        raise InvariantViolationError(violations)
    return doc


def deserialize(data: bytes | str) -> TraceableTextDocument:
    """Decode document bytes, enforcing every invariant checkable without the source."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedInputError(f"not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"not valid JSON: {exc}") from exc
    return document_from_dict(obj)


# ---------------------------------------------------------------------------
# Source document encoding (store and service wire format)


def source_to_dict(source: SourceDocument) -> dict[str, Any]:
    return {
        "id": source.id,
        "title": source.title,
        "text": source.text,
        "metadata": dict(source.metadata),
    }


def source_from_dict(obj: Any) -> SourceDocument:
    if not isinstance(obj, dict):
        raise MalformedInputError("source must be a JSON object")
    _expect_keys(obj, {"id", "title", "text", "metadata"}, "source")
    title = obj["title"]
    if title is not None and not isinstance(title, str):
        raise MalformedInputError("source title must be a string or null")
    metadata = obj["metadata"]
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise MalformedInputError("source metadata must map strings to strings")
    try:
        return SourceDocument(
            id=_expect_str(obj, "id", "source"),
            text=_expect_str(obj, "text", "source"),
            title=title,
            metadata=metadata,
        )
    except ValueError as exc:
        raise MalformedInputError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Review annotation encoding (bundles and service wire format)


def annotation_to_dict(ann: ReviewAnnotation) -> dict[str, Any]:
    out: dict[str, Any] = {"verdict": ann.verdict.value}
    if ann.link_id is not None:
        out["link_id"] = ann.link_id
    if ann.claim_id is not None:
        out["claim_id"] = ann.claim_id
    if ann.note is not None:
        out["note"] = ann.note
    if ann.proposed_spans is not None:
        out["proposed_spans"] = [_span_to_dict(s) for s in ann.proposed_spans]
    if ann.proposed_claim_text is not None:
        out["proposed_claim_text"] = ann.proposed_claim_text
    return out


def annotation_from_dict(obj: Any) -> ReviewAnnotation:
    if not isinstance(obj, dict):
        raise MalformedInputError("annotation must be a JSON object")
    allowed = {"verdict", "link_id", "claim_id", "note", "proposed_spans", "proposed_claim_text"}
    extra = obj.keys() - allowed
    if extra:
        raise MalformedInputError(f"annotation: unexpected keys {sorted(extra)}")
    try:
        verdict = Verdict(obj.get("verdict"))
    except ValueError as exc:
        raise MalformedInputError(f"annotation: {exc}") from exc
    spans = None
    if "proposed_spans" in obj:
        raw = obj["proposed_spans"]
        if not isinstance(raw, list):
            raise MalformedInputError("annotation: proposed_spans must be an array")
        spans = tuple(_span_from_dict(s, f"proposed_spans[{i}]") for i, s in enumerate(raw))
    for key in ("link_id", "claim_id", "note", "proposed_claim_text"):
        if key in obj and not isinstance(obj[key], str):
            raise MalformedInputError(f"annotation: {key} must be a string")
    try:
        return ReviewAnnotation(
            verdict=verdict,
            link_id=obj.get("link_id"),
            claim_id=obj.get("claim_id"),
            note=obj.get("note"),
            proposed_spans=spans,
            proposed_claim_text=obj.get("proposed_claim_text"),
        )
    except ValueError as exc:
        raise MalformedInputError(f"annotation: {exc}") from exc
