"""tracetext: summaries whose claims carry verified links into their source."""

from .model import (
    Claim,
    GeneratorInfo,
    Link,
    LinkStatus,
    ReviewAnnotation,
    SourceDocument,
    Span,
    Tier,
    TraceableTextDocument,
    Verdict,
    deserialize,
    serialize,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "Claim",
    "GeneratorInfo",
    "Link",
    "LinkStatus",
    "ReviewAnnotation",
    "SourceDocument",
    "Span",
    "Tier",
    "TraceableTextDocument",
    "Verdict",
    "deserialize",
    "serialize",
    "validate",
    "__version__",
]
