/**
 * Pure highlight model: what to emphasize given (document, hovered,
 * revealAll). The view layer only applies the result to the DOM, so the
 * same state always renders the same highlight set, and both link
 * directions are derived from the same link records.
 */

import type { DocumentJson, LinkJson, SpanJson } from "./types.js";

export type Hover =
  | { kind: "claim"; claimId: string }
  | { kind: "source"; offset: number }
  | null;

/** Base look of a summary claim, or "active" while it is part of a hover. */
export type ClaimEmphasis = "linked" | "unlinked" | "active";

export interface SourceHighlight {
  start: number;
  end: number;
  emphasis: "light" | "deep";
}

export interface Highlights {
  /** One entry per claim in the document. */
  claims: Record<string, ClaimEmphasis>;
  /** Source spans to paint, sorted by (start, end); empty means hidden. */
  source: SourceHighlight[];
  /** Span to scroll into view (first linked span of a hovered claim). */
  scrollTarget: SpanJson | null;
}

export function linkForClaim(doc: DocumentJson, claimId: string): LinkJson | undefined {
  return doc.links.find((link) => link.claim_id === claimId);
}

/**
 * The first link (in document order) with a source span containing the
 * offset. Spans of different links may overlap; first one wins,
 * deterministically.
 */
export function linkAtOffset(
  doc: DocumentJson,
  offset: number,
): { link: LinkJson; span: SpanJson } | undefined {
  for (const link of doc.links) {
    for (const span of link.source_spans) {
      if (span.start <= offset && offset < span.end) {
        return { link, span };
      }
    }
  }
  return undefined;
}

/** Distinct linked source spans, in (start, end) order. */
export function distinctLinkedSpans(doc: DocumentJson): SpanJson[] {
  const seen = new Set<string>();
  const spans: SpanJson[] = [];
  for (const link of doc.links) {
    for (const span of link.source_spans) {
      const key = `${span.start}:${span.end}`;
      if (!seen.has(key)) {
        seen.add(key);
        spans.push({ start: span.start, end: span.end });
      }
    }
  }
  spans.sort((a, b) => a.start - b.start || a.end - b.end);
  return spans;
}

export function computeHighlights(
  doc: DocumentJson,
  hovered: Hover,
  revealAll: boolean,
): Highlights {
  const claims: Record<string, ClaimEmphasis> = {};
  const linked = new Set(doc.links.map((link) => link.claim_id));
  for (const claim of doc.claims) {
    claims[claim.id] = linked.has(claim.id) ? "linked" : "unlinked";
  }

  // keyed by "start:end" so a deep hover emphasis wins over reveal-all
  const source = new Map<string, SourceHighlight>();
  const paint = (span: SpanJson, emphasis: "light" | "deep") => {
    const key = `${span.start}:${span.end}`;
    const existing = source.get(key);
    if (!existing || (existing.emphasis === "light" && emphasis === "deep")) {
      source.set(key, { start: span.start, end: span.end, emphasis });
    }
  };

  if (revealAll) {
    for (const span of distinctLinkedSpans(doc)) {
      paint(span, "light");
    }
  }

  let scrollTarget: SpanJson | null = null;
  if (hovered?.kind === "claim") {
    const link = linkForClaim(doc, hovered.claimId);
    if (link) {
      claims[hovered.claimId] = "active";
      for (const span of link.source_spans) {
        paint(span, "deep");
      }
      scrollTarget = link.source_spans[0] ?? null;
    }
    // An unlinked claim hover changes nothing here: there is no passage to
    // show, which is exactly the signal; the view adds a tooltip.
  } else if (hovered?.kind === "source") {
    const hit = linkAtOffset(doc, hovered.offset);
    if (hit) {
      claims[hit.link.claim_id] = "active";
      paint(hit.span, "deep");
    }
  }

  const highlights = [...source.values()];
  highlights.sort((a, b) => a.start - b.start || a.end - b.end);
  return { claims, source: highlights, scrollTarget };
}
