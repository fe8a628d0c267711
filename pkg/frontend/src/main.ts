/**
 * Bootstrap: read ?api=...&source=... from the URL, fetch the source text
 * and its traceable document, and mount the reader. Shows an inline error
 * with a retry button if either fetch fails.
 */

import { fetchSource, fetchTraceable } from "./client.js";
import { ReaderView } from "./view.js";

function params(): { api: string; sourceId: string | null } {
  const query = new URLSearchParams(window.location.search);
  return {
    api: query.get("api") ?? "http://127.0.0.1:8787",
    sourceId: query.get("source"),
  };
}

async function boot(root: HTMLElement): Promise<void> {
  const { api, sourceId } = params();
  if (!sourceId) {
    root.innerHTML =
      '<p class="notice">Add <code>?source=&lt;id&gt;</code> to the URL ' +
      "(and optionally <code>&amp;api=&lt;service url&gt;</code>).</p>";
    return;
  }
  root.innerHTML = '<p class="notice">Loading…</p>';
  try {
    const [source, envelope] = await Promise.all([
      fetchSource(api, sourceId),
      fetchTraceable(api, sourceId),
    ]);
    new ReaderView(root, envelope.document, source).mount();
  } catch (error) {
    root.innerHTML = "";
    const notice = document.createElement("p");
    notice.className = "notice error";
    notice.textContent = `Could not load the document: ${String(error)} `;
    const retry = document.createElement("button");
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void boot(root));
    notice.appendChild(retry);
    root.appendChild(notice);
  }
}

const root = document.getElementById("app");
if (root) {
  void boot(root);
}
