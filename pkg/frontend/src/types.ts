/**
 * Wire types mirroring the service's JSON (see docs/schema.md in the repo
 * root). Offsets are Unicode code point indices; spans are half-open.
 */

export interface SpanJson {
  start: number;
  end: number;
}

export interface ClaimJson {
  id: string;
  start: number;
  end: number;
  text: string;
}

export type LinkTier = "exact" | "normalized" | "approximate" | "reviewed";
export type LinkStatus = "unreviewed" | "correct" | "semantic_issue" | "incorrect";

export interface LinkJson {
  claim_id: string;
  source_spans: SpanJson[];
  tier: LinkTier;
  score: number;
  status: LinkStatus;
}

export interface GeneratorInfoJson {
  backend: string;
  model_id: string;
  timestamp: string;
}

export interface DocumentJson {
  format_version: number;
  source_id: string;
  summary_text: string;
  generator_info: GeneratorInfoJson;
  claims: ClaimJson[];
  links: LinkJson[];
}

/** GET /v1/sources/{id}/traceable */
export interface TraceableEnvelope {
  revision: number;
  document: DocumentJson;
}

/** GET /v1/sources/{id} */
export interface SourceJson {
  id: string;
  title: string | null;
  text: string;
  metadata: Record<string, string>;
}
