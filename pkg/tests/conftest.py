import random
import socket
from pathlib import Path

import pytest

from tracetext.model import (
    Claim,
    GeneratorInfo,
    Link,
    LinkStatus,
    SourceDocument,
    Span,
    Tier,
    TraceableTextDocument,
)

NOTES_DIR = Path(__file__).parent / "fixtures" / "notes"


@pytest.fixture
def notes_dir() -> Path:
    return NOTES_DIR


def note_paths() -> list[Path]:
    return sorted(NOTES_DIR.glob("note*.txt"))


def free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


GEN_INFO = GeneratorInfo(backend="test", model_id="fixed", timestamp="1970-01-01T00:00:00+00:00")


def make_source(text: str, source_id: str = "src-1") -> SourceDocument:
    return SourceDocument(id=source_id, text=text, title="fixture")


def make_doc(
    summary: str,
    claims: list[tuple[str, int, int]],
    links: list[tuple[str, list[tuple[int, int]]]] | None = None,
    source_id: str = "src-1",
) -> TraceableTextDocument:
    """Build a document from (id, start, end) claims and (claim_id, spans) links."""
    claim_objs = tuple(
        Claim(id=cid, span=Span(start, end), text=summary[start:end])
        for cid, start, end in claims
    )
    link_objs = tuple(
        Link(
            claim_id=cid,
            source_spans=tuple(Span(s, e) for s, e in spans),
            tier=Tier.EXACT,
            score=1.0,
            status=LinkStatus.UNREVIEWED,
        )
        for cid, spans in (links or [])
    )
    return TraceableTextDocument(
        source_id=source_id,
        summary_text=summary,
        claims=claim_objs,
        links=link_objs,
        generator_info=GEN_INFO,
    )


_WORDS = [
    "pressure", "reading", "clinic", "follow", "dose", "daily", "visit", "normal",
    "stable", "weeks", "panel", "ordered", "morning", "patient", "review", "plan",
    "heart", "breathing", "sodium", "walking", "tablet", "scan", "result", "mild",
]


def random_document(rng: random.Random, source_len: int = 400) -> tuple[TraceableTextDocument, SourceDocument]:
    """A structurally valid random document plus a source it validates against."""
    source_text = " ".join(rng.choice(_WORDS) for _ in range(max(10, source_len // 8)))
    summary_words = [rng.choice(_WORDS) for _ in range(rng.randint(6, 30))]
    summary = " ".join(summary_words) + "."
    claims = []
    links = []
    cursor = 0
    idx = 1
    while cursor < len(summary) - 2 and idx <= 6:
        start = cursor + rng.randint(0, 3)
        end = min(len(summary), start + rng.randint(2, 25))
        if end <= start:
            break
        cid = f"c{idx}"
        claims.append((cid, start, end))
        if rng.random() < 0.8:
            spans = []
            scursor = rng.randint(0, 40)
            for _ in range(rng.randint(1, 3)):
                s = scursor + rng.randint(0, 10)
                e = min(len(source_text), s + rng.randint(1, 30))
                if e <= s or e > len(source_text):
                    break
                spans.append((s, e))
                scursor = e + rng.randint(1, 5)
            if spans:
                links.append((cid, spans))
        cursor = end + rng.randint(1, 4)
        idx += 1
    doc = make_doc(summary, claims, links)
    return doc, make_source(source_text)
