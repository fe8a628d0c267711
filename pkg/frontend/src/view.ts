/**
 * DOM layer: renders the two panels once, then re-applies the computed
 * highlight model on every state change. Summary on the left, source on
 * the right. The document is never mutated here; this is a read-only view.
 */

import { computeHighlights, type Hover } from "./highlight.js";
import { buildSegments, type Mark } from "./segments.js";
import type { DocumentJson, SourceJson } from "./types.js";

export interface ViewOptions {
  /** Scroll the first linked passage into view when hovering a claim. */
  scrollIntoView?: boolean;
  /** Key that reveals all linked passages while held. */
  modifierKey?: string;
}

const NO_PASSAGE_TOOLTIP = "no supporting passage found";

export class ReaderView {
  private hovered: Hover = null;
  private revealAll = false;
  private readonly scrollIntoView: boolean;
  private readonly modifierKey: string;
  private claimNodes = new Map<string, HTMLElement[]>();
  private sourceNodes: { start: number; end: number; element: HTMLElement }[] = [];
  private keyDownListener: (event: KeyboardEvent) => void;
  private keyUpListener: (event: KeyboardEvent) => void;

  constructor(
    private readonly root: HTMLElement,
    private readonly doc: DocumentJson,
    private readonly source: SourceJson,
    options: ViewOptions = {},
  ) {
    this.scrollIntoView = options.scrollIntoView ?? true;
    this.modifierKey = options.modifierKey ?? "Alt";
    this.keyDownListener = (event) => {
      if (event.key === this.modifierKey && !this.revealAll) {
        this.revealAll = true;
        this.update();
      }
    };
    this.keyUpListener = (event) => {
      if (event.key === this.modifierKey) {
        this.revealAll = false;
        this.update();
      }
    };
  }

  mount(): void {
    this.root.innerHTML = "";
    this.claimNodes = new Map();
    this.sourceNodes = [];
    this.root.appendChild(this.buildPanel("summary", this.doc.summary_text, this.claimMarks()));
    this.root.appendChild(this.buildPanel("source", this.source.text, this.sourceMarks()));
    document.addEventListener("keydown", this.keyDownListener);
    document.addEventListener("keyup", this.keyUpListener);
    this.update();
  }

  unmount(): void {
    document.removeEventListener("keydown", this.keyDownListener);
    document.removeEventListener("keyup", this.keyUpListener);
    this.root.innerHTML = "";
  }

  private claimMarks(): Mark[] {
    return this.doc.claims.map((claim) => ({
      key: claim.id,
      start: claim.start,
      end: claim.end,
    }));
  }

  private sourceMarks(): Mark[] {
    const marks: Mark[] = [];
    this.doc.links.forEach((link, i) => {
      link.source_spans.forEach((span, j) => {
        marks.push({ key: `${i}:${j}`, start: span.start, end: span.end });
      });
    });
    return marks;
  }

  private buildPanel(kind: "summary" | "source", text: string, marks: Mark[]): HTMLElement {
    const panel = document.createElement("section");
    panel.className = `panel panel-${kind}`;
    const heading = document.createElement("h2");
    heading.textContent =
      kind === "summary" ? "Summary" : this.source.title ?? "Source";
    panel.appendChild(heading);
    const body = document.createElement("div");
    body.className = "panel-body";
    for (const segment of buildSegments(text, marks)) {
      const node = document.createElement("span");
      node.textContent = segment.text;
      if (kind === "summary" && segment.keys.length > 0) {
        const claimId = segment.keys[0]!;
        node.dataset.claimId = claimId;
        node.addEventListener("mouseenter", () => this.setHover({ kind: "claim", claimId }));
        node.addEventListener("mouseleave", () => this.setHover(null));
        const nodes = this.claimNodes.get(claimId) ?? [];
        nodes.push(node);
        this.claimNodes.set(claimId, nodes);
      }
      if (kind === "source" && segment.keys.length > 0) {
        const offset = segment.start;
        node.addEventListener("mouseenter", () => this.setHover({ kind: "source", offset }));
        node.addEventListener("mouseleave", () => this.setHover(null));
        this.sourceNodes.push({ start: segment.start, end: segment.end, element: node });
      }
      body.appendChild(node);
    }
    panel.appendChild(body);
    return panel;
  }

  setHover(hovered: Hover): void {
    this.hovered = hovered;
    this.update();
  }

  setRevealAll(revealAll: boolean): void {
    this.revealAll = revealAll;
    this.update();
  }

  private update(): void {
    const highlights = computeHighlights(this.doc, this.hovered, this.revealAll);
    for (const [claimId, nodes] of this.claimNodes) {
      const emphasis = highlights.claims[claimId] ?? "unlinked";
      for (const node of nodes) {
        node.className = `claim claim-${emphasis}`;
        if (emphasis === "unlinked") {
          node.title = NO_PASSAGE_TOOLTIP;
        } else {
          node.removeAttribute("title");
        }
      }
    }
    for (const { start, end, element } of this.sourceNodes) {
      const hit = highlights.source.find(
        (span) => span.start <= start && end <= span.end,
      );
      element.className = hit ? `passage passage-${hit.emphasis}` : "passage";
    }
    if (highlights.scrollTarget && this.scrollIntoView) {
      const target = this.sourceNodes.find(
        (node) => node.start >= highlights.scrollTarget!.start,
      );
      target?.element.scrollIntoView({ block: "nearest", behavior: "smooth" });
    }
  }
}
