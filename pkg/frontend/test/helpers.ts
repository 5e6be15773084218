import type { ServiceApi } from "../src/api.js";
import type {
  ChangeBody,
  ChangeResponse,
  ChunkState,
  ChunksResponse,
  ChunkView,
  SpecResponse,
  StrategiesResponse,
} from "../src/types.js";

export function makeChunk(
  id: string,
  ordinal: number,
  text: string,
  state: ChunkState = "neutral",
  extra: Partial<ChunkView> = {},
): ChunkView {
  return {
    id,
    ordinal,
    text,
    proposed_text: null,
    state,
    verdict: null,
    underlined_spans: [],
    origin: "user",
    ...extra,
  };
}

/** Records every call and replays queued responses per method. */
export class StubApi implements ServiceApi {
  calls: { method: string; args: unknown[] }[] = [];
  private queues = new Map<string, unknown[]>();
  chunks: ChunkView[] = [];

  queue(method: string, response: unknown): void {
    const list = this.queues.get(method) ?? [];
    list.push(response);
    this.queues.set(method, list);
  }

  private answer<T>(method: string, args: unknown[], fallback: () => T): Promise<T> {
    this.calls.push({ method, args });
    const list = this.queues.get(method);
    if (list && list.length > 0) {
      const next = list.shift();
      if (next instanceof Error) {
        return Promise.reject(next);
      }
      if (next instanceof Promise) {
        return next as Promise<T>;
      }
      return Promise.resolve(next as T);
    }
    return Promise.resolve(fallback());
  }

  callsTo(method: string): { method: string; args: unknown[] }[] {
    return this.calls.filter((c) => c.method === method);
  }

  private chunksResponse(): ChunksResponse {
    return { chunks: this.chunks };
  }

  getSpec(): Promise<SpecResponse> {
    return this.answer("getSpec", [], () => ({ version: 1, chunks: this.chunks }));
  }
  checkChange(body: ChangeBody): Promise<ChangeResponse> {
    return this.answer("checkChange", [body], () => this.chunksResponse());
  }
  applyChange(body: ChangeBody): Promise<ChangeResponse> {
    return this.answer("applyChange", [body], () => this.chunksResponse());
  }
  addInfo(text: string): Promise<ChunksResponse> {
    return this.answer("addInfo", [text], () => this.chunksResponse());
  }
  localRewrite(chunkId: string, steer?: string): Promise<ChunksResponse> {
    return this.answer("localRewrite", [chunkId, steer], () => this.chunksResponse());
  }
  strategies(chunkId: string): Promise<StrategiesResponse> {
    return this.answer("strategies", [chunkId], () => ({ strategies: [] }));
  }
  underline(chunkId: string): Promise<ChunksResponse> {
    return this.answer("underline", [chunkId], () => this.chunksResponse());
  }
  proposeEdit(chunkId: string, text: string): Promise<ChunksResponse> {
    return this.answer("proposeEdit", [chunkId, text], () => this.chunksResponse());
  }
  resolve(chunkId: string): Promise<ChunksResponse> {
    return this.answer("resolve", [chunkId], () => this.chunksResponse());
  }
  revert(chunkId: string): Promise<ChunksResponse> {
    return this.answer("revert", [chunkId], () => this.chunksResponse());
  }
  clear(chunkId: string): Promise<ChunksResponse> {
    return this.answer("clear", [chunkId], () => this.chunksResponse());
  }
  deleteChunk(chunkId: string): Promise<ChunksResponse> {
    return this.answer("deleteChunk", [chunkId], () => this.chunksResponse());
  }
  revertAll(): Promise<ChunksResponse> {
    return this.answer("revertAll", [], () => this.chunksResponse());
  }
  clearConflicts(): Promise<ChunksResponse> {
    return this.answer("clearConflicts", [], () => this.chunksResponse());
  }
}

export function tick(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

export function click(root: HTMLElement, action: string): void {
  const node = root.querySelector<HTMLButtonElement>(`[data-action="${action}"]`);
  if (!node) {
    throw new Error(`no button with data-action=${action}`);
  }
  node.click();
}

export function chunkTexts(root: HTMLElement): string[] {
  return [...root.querySelectorAll<HTMLElement>(".chunk-text")].map((n) => n.textContent ?? "");
}
