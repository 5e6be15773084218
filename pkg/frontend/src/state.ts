/** Application state: the server's chunk list plus transient UI concerns. */

import type { ChangeBody, ChunkView, Flag } from "./types.js";

export interface Settings {
  /** Dotted-red conflict-word underlines (experimental feature toggle). */
  showUnderlines: boolean;
  /** Modulate highlight intensity by retrieval score (off by default). */
  scoreIntensity: boolean;
}

export interface PendingClarification {
  question: string;
  body: ChangeBody;
  kind: "check" | "apply";
}

export interface AppState {
  chunks: ChunkView[];
  flags: Map<string, Flag>;
  strategies: Map<string, string[]>;
  editing: string | null;
  busy: boolean;
  toasts: string[];
  clarification: PendingClarification | null;
  settings: Settings;
}

export function initialState(chunks: ChunkView[] = []): AppState {
  return {
    chunks,
    flags: new Map(),
    strategies: new Map(),
    editing: null,
    busy: false,
    toasts: [],
    clarification: null,
    settings: { showUnderlines: true, scoreIntensity: false },
  };
}
