/**
 * Split a text into contiguous render segments at span boundaries, so each
 * segment is covered by a fixed set of marks and can become one DOM node.
 * Marks may overlap (source spans of different links do); claim marks
 * never do.
 */

export interface Mark {
  key: string;
  start: number;
  end: number;
}

export interface Segment {
  start: number;
  end: number;
  text: string;
  /** Keys of every mark covering this whole segment, in input order. */
  keys: string[];
}

export function buildSegments(text: string, marks: Mark[]): Segment[] {
  const boundaries = new Set<number>([0, text.length]);
  for (const mark of marks) {
    if (mark.start < 0 || mark.end > text.length || mark.start >= mark.end) {
      throw new RangeError(`mark ${mark.key} [${mark.start}, ${mark.end}) out of bounds`);
    }
    boundaries.add(mark.start);
    boundaries.add(mark.end);
  }
  const cuts = [...boundaries].sort((a, b) => a - b);
  const segments: Segment[] = [];
  for (let i = 0; i + 1 < cuts.length; i++) {
    const start = cuts[i]!;
    const end = cuts[i + 1]!;
    const keys = marks
      .filter((mark) => mark.start <= start && end <= mark.end)
      .map((mark) => mark.key);
    segments.push({ start, end, text: text.slice(start, end), keys });
  }
  return segments;
}
