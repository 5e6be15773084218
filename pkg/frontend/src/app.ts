/** Controller: every state change round-trips the service; one in-flight
 * mutation at a time; the server's chunk list is the sole source of truth. */

import { ApiError, type ServiceApi } from "./api.js";
import { initialState, type AppState } from "./state.js";
import { renderApp, type Handlers } from "./render.js";
import type { ChangeBody, ChangeResponse, ChunksResponse, ChunkView } from "./types.js";

export class App {
  readonly state: AppState;

  constructor(
    private readonly api: ServiceApi,
    private readonly root: HTMLElement,
    chunks: ChunkView[] = [],
  ) {
    this.state = initialState(chunks);
  }

  static async boot(api: ServiceApi, root: HTMLElement): Promise<App> {
    const spec = await api.getSpec();
    const app = new App(api, root, spec.chunks);
    app.render();
    return app;
  }

  render(): void {
    this.root.replaceChildren(renderApp(this.state, this.handlers));
  }

  private toast(message: string): void {
    this.state.toasts.push(message);
  }

  private absorb(response: ChunksResponse | ChangeResponse): void {
    if (Array.isArray(response.chunks)) {
      this.state.chunks = response.chunks;
    }
    for (const warning of response.warnings ?? []) {
      this.toast(warning);
    }
    const change = response as ChangeResponse;
    if (Array.isArray(change.flags)) {
      this.state.flags = new Map(change.flags.map((f) => [f.chunk_id, f]));
    }
    if (change.rewrite_failed) {
      this.toast("The global rewrite failed; conflict flags were kept.");
    }
  }

  /** Run one mutation with the busy lock held; ignored if one is in flight. */
  private async mutate(work: () => Promise<ChunksResponse | ChangeResponse>): Promise<void> {
    if (this.state.busy) {
      return;
    }
    this.state.busy = true;
    this.state.toasts = [];
    this.render();
    try {
      this.absorb(await work());
    } catch (error) {
      this.toast(error instanceof ApiError ? error.message : `request failed: ${String(error)}`);
    } finally {
      this.state.busy = false;
      this.render();
    }
  }

  private async runChange(kind: "check" | "apply", body: ChangeBody): Promise<void> {
    await this.mutate(async () => {
      const response =
        kind === "check" ? await this.api.checkChange(body) : await this.api.applyChange(body);
      if (response.clarification_needed) {
        this.state.clarification = { question: response.clarification_needed, body, kind };
      }
      return response;
    });
  }

  readonly handlers: Handlers = {
    onCheck: (body) => void this.runChange("check", body),
    onApply: (body) => void this.runChange("apply", body),
    onAddInfo: (text) => void this.mutate(() => this.api.addInfo(text)),
    onRevertAll: () => void this.mutate(() => this.api.revertAll()),
    onClearConflicts: () => void this.mutate(() => this.api.clearConflicts()),
    onLocalRewrite: (id, steer) => void this.mutate(() => this.api.localRewrite(id, steer)),
    onStrategies: (id) =>
      void this.mutate(async () => {
        const response = await this.api.strategies(id);
        this.state.strategies.set(id, response.strategies);
        return {} as ChunksResponse;
      }),
    onUnderline: (id) => void this.mutate(() => this.api.underline(id)),
    onResolve: (id) => void this.mutate(() => this.api.resolve(id)),
    onRevert: (id) => void this.mutate(() => this.api.revert(id)),
    onClear: (id) => void this.mutate(() => this.api.clear(id)),
    onDelete: (id) => void this.mutate(() => this.api.deleteChunk(id)),
    onEditStart: (id) => {
      this.state.editing = id;
      this.render();
    },
    onEditSave: (id, text) => {
      this.state.editing = null;
      void this.mutate(() => this.api.proposeEdit(id, text));
    },
    onEditCancel: () => {
      this.state.editing = null;
      this.render();
    },
    onClarificationSubmit: (answer) => {
      const pending = this.state.clarification;
      if (!pending) {
        return;
      }
      this.state.clarification = null;
      void this.runChange(pending.kind, { ...pending.body, clarification: answer });
    },
    onClarificationCancel: () => {
      this.state.clarification = null;
      this.render();
    },
    onToggleUnderlines: () => {
      this.state.settings.showUnderlines = !this.state.settings.showUnderlines;
      this.render();
    },
    onToggleIntensity: () => {
      this.state.settings.scoreIntensity = !this.state.settings.scoreIntensity;
      this.render();
    },
  };
}
