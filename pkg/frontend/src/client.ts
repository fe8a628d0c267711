/** Read-only client for the tracetext service (this app never writes). */

import type { SourceJson, TraceableEnvelope } from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url, { headers: { Accept: "application/json" } });
  if (!response.ok) {
    let code = "unknown";
    let message = `${response.status} from ${url}`;
    try {
      const body = (await response.json()) as { code?: string; message?: string };
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      // non-JSON error body; keep the fallback message
    }
    throw new ApiError(response.status, code, message);
  }
  return (await response.json()) as T;
}

export function fetchSource(baseUrl: string, sourceId: string): Promise<SourceJson> {
  return getJson<SourceJson>(`${baseUrl}/v1/sources/${encodeURIComponent(sourceId)}`);
}

export function fetchTraceable(
  baseUrl: string,
  sourceId: string,
): Promise<TraceableEnvelope> {
  return getJson<TraceableEnvelope>(
    `${baseUrl}/v1/sources/${encodeURIComponent(sourceId)}/traceable`,
  );
}
