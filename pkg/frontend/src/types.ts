/** Wire types mirroring the service JSON API. */

export type ChunkState =
  | "neutral"
  | "direct_conflict"
  | "ambiguous_conflict"
  | "proposed_edit"
  | "proposed_add"
  | "proposed_delete";

export interface Verdict {
  class: "direct" | "ambiguous" | "none";
  reasoning: string;
}

export interface ChunkView {
  id: string;
  ordinal: number;
  text: string;
  proposed_text: string | null;
  state: ChunkState;
  verdict: Verdict | null;
  underlined_spans: [number, number][];
  origin: "user" | "ai";
}

export interface Flag {
  chunk_id: string;
  class: "direct" | "ambiguous";
  reasoning: string;
  score: number;
}

export type ChangeAction = "add" | "change" | "edit";

export interface ChangeBody {
  action: ChangeAction;
  new_info: string;
  target?: string | null;
  steer?: string | null;
  clarification?: string | null;
}

export interface ChunksResponse {
  chunks: ChunkView[];
  warnings?: string[];
}

export interface ChangeResponse extends ChunksResponse {
  flags?: Flag[];
  latency_ms?: number;
  clarification_needed?: string;
  rewrite_failed?: boolean;
}

export interface StrategiesResponse {
  strategies: string[];
}

export interface SpecResponse {
  version: number;
  chunks: ChunkView[];
}
