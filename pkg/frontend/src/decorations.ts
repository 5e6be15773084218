/** Mapping from review state to display decorations, and underline spans. */

import type { ChunkState, ChunkView } from "./types.js";

/** Conflict degree colors: red for direct, pink for ambiguous; proposals green. */
export function colorFor(state: ChunkState): "red" | "pink" | "green" | "none" {
  switch (state) {
    case "direct_conflict":
      return "red";
    case "ambiguous_conflict":
      return "pink";
    case "proposed_edit":
    case "proposed_add":
    case "proposed_delete":
      return "green";
    default:
      return "none";
  }
}

export interface TextPiece {
  text: string;
  underlined: boolean;
}

/**
 * Split chunk text into underlined and plain pieces. Spans are byte offsets
 * into the UTF-8 encoding, as the service reports them.
 */
export function underlinePieces(chunk: ChunkView): TextPiece[] {
  if (chunk.underlined_spans.length === 0) {
    return [{ text: chunk.text, underlined: false }];
  }
  const bytes = new TextEncoder().encode(chunk.text);
  const decoder = new TextDecoder();
  const pieces: TextPiece[] = [];
  let cursor = 0;
  for (const [start, end] of chunk.underlined_spans) {
    if (start > cursor) {
      pieces.push({ text: decoder.decode(bytes.subarray(cursor, start)), underlined: false });
    }
    pieces.push({ text: decoder.decode(bytes.subarray(start, end)), underlined: true });
    cursor = end;
  }
  if (cursor < bytes.length) {
    pieces.push({ text: decoder.decode(bytes.subarray(cursor)), underlined: false });
  }
  return pieces.filter((p) => p.text.length > 0);
}
