/** Thin client over the review service; one method per endpoint. */

import type {
  ChangeBody,
  ChangeResponse,
  ChunksResponse,
  SpecResponse,
  StrategiesResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

/** The service surface the app consumes; tests substitute a stub. */
export interface ServiceApi {
  getSpec(): Promise<SpecResponse>;
  checkChange(body: ChangeBody): Promise<ChangeResponse>;
  applyChange(body: ChangeBody): Promise<ChangeResponse>;
  addInfo(text: string): Promise<ChunksResponse>;
  localRewrite(chunkId: string, steer?: string): Promise<ChunksResponse>;
  strategies(chunkId: string): Promise<StrategiesResponse>;
  underline(chunkId: string): Promise<ChunksResponse>;
  proposeEdit(chunkId: string, text: string): Promise<ChunksResponse>;
  resolve(chunkId: string): Promise<ChunksResponse>;
  revert(chunkId: string): Promise<ChunksResponse>;
  clear(chunkId: string): Promise<ChunksResponse>;
  deleteChunk(chunkId: string): Promise<ChunksResponse>;
  revertAll(): Promise<ChunksResponse>;
  clearConflicts(): Promise<ChunksResponse>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient implements ServiceApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "Content-Type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof (payload as { detail?: unknown }).detail === "string"
          ? (payload as { detail: string }).detail
          : `request failed with status ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  getSpec(): Promise<SpecResponse> {
    return this.request("GET", "/spec");
  }

  checkChange(body: ChangeBody): Promise<ChangeResponse> {
    return this.request("POST", "/change/check", body);
  }

  applyChange(body: ChangeBody): Promise<ChangeResponse> {
    return this.request("POST", "/change/apply", body);
  }

  addInfo(text: string): Promise<ChunksResponse> {
    return this.request("POST", "/chunks", { text });
  }

  localRewrite(chunkId: string, steer?: string): Promise<ChunksResponse> {
    return this.request("POST", `/chunks/${chunkId}/local-rewrite`, { steer: steer ?? null });
  }

  strategies(chunkId: string): Promise<StrategiesResponse> {
    return this.request("POST", `/chunks/${chunkId}/strategies`);
  }

  underline(chunkId: string): Promise<ChunksResponse> {
    return this.request("POST", `/chunks/${chunkId}/underline`);
  }

  proposeEdit(chunkId: string, text: string): Promise<ChunksResponse> {
    return this.request("POST", `/chunks/${chunkId}/propose-edit`, { text });
  }

  resolve(chunkId: string): Promise<ChunksResponse> {
    return this.request("POST", `/chunks/${chunkId}/resolve`);
  }

  revert(chunkId: string): Promise<ChunksResponse> {
    return this.request("POST", `/chunks/${chunkId}/revert`);
  }

  clear(chunkId: string): Promise<ChunksResponse> {
    return this.request("POST", `/chunks/${chunkId}/clear`);
  }

  deleteChunk(chunkId: string): Promise<ChunksResponse> {
    return this.request("DELETE", `/chunks/${chunkId}`);
  }

  revertAll(): Promise<ChunksResponse> {
    return this.request("POST", "/revert-all");
  }

  clearConflicts(): Promise<ChunksResponse> {
    return this.request("POST", "/clear-conflicts");
  }
}
