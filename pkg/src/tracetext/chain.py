"""Three-stage generation chain: summarize the source, segment the summary
into claims, and map each claim to supporting source passages.

Stages talk to a pluggable completion backend. Stage outputs are structured
as JSON; on a parse failure the prompt is re-sent once per retry with a
reformat instruction appended. Everything the generator returns is then
grounded with :func:`tracetext.resolve.resolve_span` and assembled into a
document that is guaranteed to validate. Claims whose quotes cannot be
grounded in the source are kept without a link, so a reader can still see
them; nothing is dropped silently, every drop lands in the ChainReport.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from typing import Protocol, Sequence, runtime_checkable

from .model import (
    Claim,
    GeneratorInfo,
    Link,
    LinkStatus,
    SourceDocument,
    Span,
    Tier,
    TIER_STRENGTH,
    TraceableTextDocument,
    validate,
)
from .resolve import MatchPolicy, NoMatchError, resolve_span

# Marker lines the default templates wrap payloads in. The offline backend
# relies on them to recover the payload from a filled prompt.
BEGIN_SOURCE = "BEGIN SOURCE"
END_SOURCE = "END SOURCE"
BEGIN_SUMMARY = "BEGIN SUMMARY"
END_SUMMARY = "END SUMMARY"
BEGIN_CLAIMS = "BEGIN CLAIMS"
END_CLAIMS = "END CLAIMS"

DETERMINISTIC_TIMESTAMP = "1970-01-01T00:00:00+00:00"

_REFORMAT_SUFFIX = (
    "\n\nYour previous reply could not be parsed. "
    "Reply again with ONLY the requested output, no commentary."
)


class ChainError(Exception):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(message)


class GeneratorFailure(ChainError):
    """The backend raised after exhausting retries."""


class EmptyOutput(ChainError):
    """The backend kept returning nothing usable."""


class UnparseableOutput(ChainError):
    """The backend kept returning output that does not parse."""


class NoClaimsResolved(ChainError):
    """Every claim quote failed to ground in the summary."""


@runtime_checkable
class Generator(Protocol):
    """A completion backend. ``deterministic`` declares whether identical
    prompts always yield identical completions."""

    name: str
    model_id: str
    deterministic: bool

    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class ChainTemplates:
    summarize: str
    segment: str
    map: str

    def __post_init__(self):
        required = {
            "summarize": ("{{source}}",),
            "segment": ("{{summary}}",),
            "map": ("{{claims}}", "{{source}}"),
        }
        for name, placeholders in required.items():
            template = getattr(self, name)
            for placeholder in placeholders:
                if placeholder not in template:
                    raise ValueError(f"{name} template is missing {placeholder}")


@lru_cache(maxsize=1)
def default_templates() -> ChainTemplates:
    pkg = resources.files("tracetext").joinpath("templates")
    return ChainTemplates(
        summarize=pkg.joinpath("summarize.txt").read_text("utf-8"),
        segment=pkg.joinpath("segment.txt").read_text("utf-8"),
        map=pkg.joinpath("map.txt").read_text("utf-8"),
    )


@dataclass(frozen=True)
class ChainConfig:
    max_retries: int = 2
    min_claim_chars: int = 8
    match_policy: MatchPolicy = field(default_factory=MatchPolicy)
    templates: ChainTemplates | None = None  # None means the packaged defaults
    timestamp: str | None = None  # None: epoch for deterministic backends, now otherwise

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.min_claim_chars < 1:
            raise ValueError("min_claim_chars must be positive")

    def resolved_templates(self) -> ChainTemplates:
        return self.templates or default_templates()


@dataclass
class ChainReport:
    """What happened during one chain run: attempts per stage and every
    claim or quote that was dropped along the way."""

    stage_attempts: dict[str, int] = field(default_factory=dict)
    claims_dropped: list[dict] = field(default_factory=list)
    unresolved_quotes: list[dict] = field(default_factory=list)
    stray_map_claims: list[str] = field(default_factory=list)

    def drop_claim(self, claim_text: str, reason: str) -> None:
        self.claims_dropped.append({"claim_text": claim_text, "reason": reason})

    def drop_quote(self, claim_id: str, quote: str, reason: str) -> None:
        self.unresolved_quotes.append({"claim_id": claim_id, "quote": quote, "reason": reason})

    def to_dict(self) -> dict:
        return {
            "stage_attempts": dict(self.stage_attempts),
            "claims_dropped": list(self.claims_dropped),
            "unresolved_quotes": list(self.unresolved_quotes),
            "stray_map_claims": list(self.stray_map_claims),
        }


def extract_block(prompt: str, kind: str) -> str:
    """Payload between the BEGIN/END marker lines for ``kind``."""
    begin, end = f"BEGIN {kind}", f"END {kind}"
    try:
        start = prompt.index(begin) + len(begin)
        stop = prompt.rindex(end)
    except ValueError as exc:
        raise RuntimeError(f"prompt has no {kind} block") from exc
    return prompt[start:stop].strip("\n")


def fill(template: str, **values: str) -> str:
    for key, value in values.items():
        template = template.replace("{{" + key + "}}", value)
    return template


class _RetryableParse(Exception):
    def __init__(self, error: ChainError):
        self.error = error


def _strip_code_fence(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        if lines and lines[0].startswith("```"):
            lines = lines[1:]
        if lines and lines[-1].strip() == "```":
            lines = lines[:-1]
        text = "\n".join(lines).strip()
    return text


def _run_stage(generator: Generator, stage: str, prompt: str, parse, cfg: ChainConfig, report: ChainReport):
    """Call the backend, parse, retry up to max_retries, raise the last error."""
    attempts = 0
    last_error: ChainError | None = None
    current_prompt = prompt
    for _ in range(cfg.max_retries + 1):
        attempts += 1
        report.stage_attempts[stage] = attempts
        try:
            raw = generator.complete(current_prompt)
        except Exception as exc:
            last_error = GeneratorFailure(stage, f"backend error in stage {stage}: {exc}")
            continue
        try:
            return parse(raw)
        except _RetryableParse as exc:
            last_error = exc.error
            current_prompt = prompt + _REFORMAT_SUFFIX
    assert last_error is not None
    raise last_error


def stage_summarize(
    source: SourceDocument,
    generator: Generator,
    cfg: ChainConfig,
    report: ChainReport | None = None,
) -> str:
    report = report if report is not None else ChainReport()
    prompt = fill(cfg.resolved_templates().summarize, source=source.text)

    def parse(raw: str) -> str:
        summary = raw.strip()
        if not summary:
            raise _RetryableParse(EmptyOutput("summarize", "backend returned an empty summary"))
        return summary

    return _run_stage(generator, "summarize", prompt, parse, cfg, report)


def stage_segment(
    summary: str,
    generator: Generator,
    cfg: ChainConfig,
    report: ChainReport | None = None,
) -> list[str]:
    if not summary:
        raise ValueError("summary must be nonempty")
    report = report if report is not None else ChainReport()
    prompt = fill(cfg.resolved_templates().segment, summary=summary)

    def parse(raw: str) -> list[str]:
        try:
            data = json.loads(_strip_code_fence(raw))
        except json.JSONDecodeError as exc:
            raise _RetryableParse(
                UnparseableOutput("segment", f"claims output is not JSON: {exc}")
            )
        if not isinstance(data, list) or not all(isinstance(c, str) for c in data):
            raise _RetryableParse(
                UnparseableOutput("segment", "claims output is not a JSON array of strings")
            )
        kept = []
        dropped = []
        for claim in data:
            if len(claim) < cfg.min_claim_chars:
                dropped.append(claim)
            else:
                kept.append(claim)
        if not kept:
            raise _RetryableParse(
                EmptyOutput("segment", "no claims met the minimum length")
            )
        for claim in dropped:
            report.drop_claim(claim, "below_min_chars")
        return kept

    return _run_stage(generator, "segment", prompt, parse, cfg, report)


def stage_map(
    claims: Sequence[str],
    source: SourceDocument,
    generator: Generator,
    cfg: ChainConfig,
    report: ChainReport | None = None,
) -> list[tuple[str, list[str]]]:
    if not claims:
        raise ValueError("claims must be nonempty")
    report = report if report is not None else ChainReport()
    prompt = fill(
        cfg.resolved_templates().map,
        claims=json.dumps(list(claims), ensure_ascii=False),
        source=source.text,
    )

    def parse(raw: str) -> dict[str, list[str]]:
        try:
            data = json.loads(_strip_code_fence(raw))
        except json.JSONDecodeError as exc:
            raise _RetryableParse(UnparseableOutput("map", f"mapping output is not JSON: {exc}"))
        mapping: dict[str, list[str]] = {}
        if isinstance(data, dict):
            items = data.items()
        elif isinstance(data, list):
            items = []
            for entry in data:
                if not isinstance(entry, dict) or "claim" not in entry or "quotes" not in entry:
                    raise _RetryableParse(
                        UnparseableOutput("map", "each mapping entry needs claim and quotes")
                    )
                items.append((entry["claim"], entry["quotes"]))
        else:
            raise _RetryableParse(
                UnparseableOutput("map", "mapping output is not a JSON object or array")
            )
        for claim, quotes in items:
            if not isinstance(claim, str) or not isinstance(quotes, list) or not all(
                isinstance(q, str) for q in quotes
            ):
                raise _RetryableParse(
                    UnparseableOutput("map", "mapping pairs claims with lists of quoted strings")
                )
            if claim not in mapping:  # first entry wins on duplicates
                mapping[claim] = quotes
        return mapping

    mapping = _run_stage(generator, "map", prompt, parse, cfg, report)

    pairs: list[tuple[str, list[str]]] = []
    consumed: set[str] = set()
    for claim in claims:
        quotes = mapping.get(claim)
        if quotes is None:
            quotes = mapping.get(claim.strip(), [])
            if claim.strip() in mapping:
                consumed.add(claim.strip())
        else:
            consumed.add(claim)
        pairs.append((claim, list(quotes)))
    report.stray_map_claims.extend(sorted(set(mapping) - consumed))
    return pairs


def assemble(
    source: SourceDocument,
    summary: str,
    mapped_pairs: Sequence[tuple[str, Sequence[str]]],
    cfg: ChainConfig,
    generator: Generator,
    report: ChainReport | None = None,
) -> TraceableTextDocument:
    """Ground every claim and quote, repair overlaps, and build a document
    that passes validation. Ungroundable source quotes leave their claim
    unlinked; ungroundable claims are dropped and recorded.
    """
    report = report if report is not None else ChainReport()

    resolved: list[tuple[Span, Sequence[str]]] = []
    for claim_quote, source_quotes in mapped_pairs:
        try:
            match = resolve_span(claim_quote, summary, cfg.match_policy)
        except (NoMatchError, ValueError):
            report.drop_claim(claim_quote, "unresolved_in_summary")
            continue
        resolved.append((match.span, source_quotes))

    resolved.sort(key=lambda item: (item[0].start, item[0].end))
    kept: list[tuple[Span, Sequence[str]]] = []
    last_end = 0
    for span, source_quotes in resolved:
        if span.start >= last_end:
            kept.append((span, source_quotes))
            last_end = span.end
        else:
            report.drop_claim(span.substring(summary), "overlap")
    if not kept:
        raise NoClaimsResolved("assemble", "no claim could be grounded in the summary")

    claims: list[Claim] = []
    links: list[Link] = []
    for idx, (span, source_quotes) in enumerate(kept, start=1):
        claim_id = f"c{idx}"
        claims.append(Claim(id=claim_id, span=span, text=span.substring(summary)))

        spans_found: list[tuple[Span, Tier, float, str]] = []
        for quote in source_quotes:
            try:
                match = resolve_span(quote, source.text, cfg.match_policy)
            except (NoMatchError, ValueError):
                report.drop_quote(claim_id, quote, "no_match")
                continue
            spans_found.append((match.span, match.tier, match.score, quote))

        spans_found.sort(key=lambda item: (item[0].start, item[0].end))
        kept_spans: list[tuple[Span, Tier, float]] = []
        span_end = 0
        for sspan, tier, score, quote in spans_found:
            if sspan.start >= span_end:
                kept_spans.append((sspan, tier, score))
                span_end = sspan.end
            else:
                report.drop_quote(claim_id, quote, "overlap")
        if kept_spans:
            weakest = min((tier for _, tier, _ in kept_spans), key=TIER_STRENGTH.get)
            links.append(
                Link(
                    claim_id=claim_id,
                    source_spans=tuple(s for s, _, _ in kept_spans),
                    tier=weakest,
                    score=min(score for _, _, score in kept_spans),
                    status=LinkStatus.UNREVIEWED,
                )
            )

    if cfg.timestamp is not None:
        timestamp = cfg.timestamp
    elif generator.deterministic:
        timestamp = DETERMINISTIC_TIMESTAMP
    else:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")

    doc = TraceableTextDocument(
        source_id=source.id,
        summary_text=summary,
        claims=tuple(claims),
        links=tuple(links),
        generator_info=GeneratorInfo(
            backend=generator.name, model_id=generator.model_id, timestamp=timestamp
        ),
    )
    violations = validate(doc, source)
    if violations:  # grounding guarantees this never fires; fail loudly if it does
        raise RuntimeError(
            "assembled document failed validation: "
            + "; ".join(f"{v.code}: {v.message}" for v in violations)
        )
    return doc


def run_chain(
    source: SourceDocument,
    generator: Generator,
    cfg: ChainConfig | None = None,
) -> tuple[TraceableTextDocument, ChainReport]:
    """Summarize, segment, map, then assemble a validated document."""
    cfg = cfg or ChainConfig()
    report = ChainReport()
    summary = stage_summarize(source, generator, cfg, report)
    claims = stage_segment(summary, generator, cfg, report)
    pairs = stage_map(claims, source, generator, cfg, report)
    doc = assemble(source, summary, pairs, cfg, generator, report)
    return doc, report
