import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { DocumentJson, SourceJson, TraceableEnvelope } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));

export const FIXTURE_NAMES = ["plain", "extrapolation", "contradiction"] as const;
export type FixtureName = (typeof FIXTURE_NAMES)[number];

export function loadDocument(name: FixtureName): DocumentJson {
  const raw = readFileSync(join(here, "fixtures", `${name}.doc.json`), "utf-8");
  return (JSON.parse(raw) as TraceableEnvelope).document;
}

export function loadSource(name: FixtureName): SourceJson {
  const raw = readFileSync(join(here, "fixtures", `${name}.source.json`), "utf-8");
  return JSON.parse(raw) as SourceJson;
}
