/** DOM rendering: a pure function of state; all behavior goes via handlers. */

import { colorFor, underlinePieces } from "./decorations.js";
import { wordDiff } from "./diff.js";
import type { AppState } from "./state.js";
import type { ChangeBody, ChunkView } from "./types.js";

export interface Handlers {
  onCheck(body: ChangeBody): void;
  onApply(body: ChangeBody): void;
  onAddInfo(text: string): void;
  onRevertAll(): void;
  onClearConflicts(): void;
  onLocalRewrite(chunkId: string, steer?: string): void;
  onStrategies(chunkId: string): void;
  onUnderline(chunkId: string): void;
  onResolve(chunkId: string): void;
  onRevert(chunkId: string): void;
  onClear(chunkId: string): void;
  onDelete(chunkId: string): void;
  onEditStart(chunkId: string): void;
  onEditSave(chunkId: string, text: string): void;
  onEditCancel(): void;
  onClarificationSubmit(answer: string): void;
  onClarificationCancel(): void;
  onToggleUnderlines(): void;
  onToggleIntensity(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function button(label: string, action: string, disabled: boolean, onClick: () => void): HTMLButtonElement {
  const node = el("button", { "data-action": action, type: "button" }, [label]);
  node.disabled = disabled;
  node.addEventListener("click", onClick);
  return node;
}

function chunkTextContent(chunk: ChunkView, state: AppState): HTMLElement {
  const container = el("div", { class: "chunk-text" });
  if (chunk.state === "proposed_edit") {
    // inline diff: removed words struck through, added words underlined
    for (const segment of wordDiff(chunk.text, chunk.proposed_text ?? "")) {
      if (segment.kind === "same") {
        container.append(segment.text);
      } else if (segment.kind === "removed") {
        container.append(el("del", { class: "diff-removed" }, [segment.text]));
      } else {
        container.append(el("ins", { class: "diff-added" }, [segment.text]));
      }
    }
    return container;
  }
  if (chunk.state === "proposed_delete") {
    container.append(el("del", { class: "diff-removed" }, [chunk.text]));
    return container;
  }
  if (chunk.state === "proposed_add") {
    container.append(el("ins", { class: "diff-added" }, [chunk.proposed_text ?? ""]));
    return container;
  }
  if (state.settings.showUnderlines && chunk.underlined_spans.length > 0) {
    for (const piece of underlinePieces(chunk)) {
      container.append(
        piece.underlined ? el("u", { class: "conflict-word" }, [piece.text]) : piece.text,
      );
    }
    return container;
  }
  container.append(chunk.text);
  return container;
}

function chunkActions(chunk: ChunkView, state: AppState, handlers: Handlers): HTMLElement {
  const busy = state.busy;
  const actions = el("div", { class: "chunk-actions" });
  const flagged = chunk.state === "direct_conflict" || chunk.state === "ambiguous_conflict";
  const proposed =
    chunk.state === "proposed_edit" ||
    chunk.state === "proposed_add" ||
    chunk.state === "proposed_delete";

  if (flagged) {
    actions.append(
      button("Let AI Propose Change", "local-rewrite", busy, () => handlers.onLocalRewrite(chunk.id)),
    );
    const steer = el("input", {
      class: "steer-input",
      placeholder: "Steer a rewrite...",
      "aria-label": "Steer a rewrite",
    }) as HTMLInputElement;
    actions.append(steer);
    actions.append(
      button("Rewrite with steering", "steer-rewrite", busy, () =>
        handlers.onLocalRewrite(chunk.id, steer.value || undefined),
      ),
    );
    actions.append(button("Strategies", "strategies", busy, () => handlers.onStrategies(chunk.id)));
    actions.append(button("Underline", "underline", busy, () => handlers.onUnderline(chunk.id)));
    actions.append(button("Clear", "clear", busy, () => handlers.onClear(chunk.id)));
  }
  if (flagged || proposed) {
    actions.append(button("Resolve", "resolve", busy, () => handlers.onResolve(chunk.id)));
  }
  if (proposed) {
    actions.append(button("Revert", "revert", busy, () => handlers.onRevert(chunk.id)));
  }
  if (!proposed) {
    actions.append(button("Edit", "edit-start", busy, () => handlers.onEditStart(chunk.id)));
    actions.append(button("Delete", "delete", busy, () => handlers.onDelete(chunk.id)));
  }

  const strategies = state.strategies.get(chunk.id);
  if (strategies && strategies.length > 0) {
    actions.append(
      el(
        "ul",
        { class: "strategies" },
        strategies.map((s) => el("li", {}, [s])),
      ),
    );
  }
  return actions;
}

function chunkRow(chunk: ChunkView, state: AppState, handlers: Handlers): HTMLElement {
  const color = colorFor(chunk.state);
  const attrs: Record<string, string> = {
    class: `chunk state-${chunk.state}`,
    "data-id": chunk.id,
    "data-color": color,
    tabindex: "0",
  };
  if (state.settings.scoreIntensity) {
    const flag = state.flags.get(chunk.id);
    if (flag) {
      attrs["data-score"] = flag.score.toFixed(4);
    }
  }
  const row = el("li", attrs);

  if (chunk.verdict && chunk.verdict.class !== "none") {
    // hover affordance: native tooltip plus a CSS-revealed reasoning line
    row.title = chunk.verdict.reasoning;
    row.append(el("div", { class: "reasoning" }, [chunk.verdict.reasoning]));
  }

  if (state.editing === chunk.id) {
    const editor = el("textarea", { class: "chunk-editor" }) as HTMLTextAreaElement;
    editor.value = chunk.text;
    row.append(editor);
    row.append(button("Save", "edit-save", state.busy, () => handlers.onEditSave(chunk.id, editor.value)));
    row.append(button("Cancel", "edit-cancel", false, () => handlers.onEditCancel()));
    return row;
  }

  row.append(chunkTextContent(chunk, state));
  row.append(chunkActions(chunk, state, handlers));

  row.addEventListener("keydown", (event) => {
    if (state.busy || event.target !== row) {
      return;
    }
    if (event.key === "r" && chunk.state !== "neutral") {
      handlers.onResolve(chunk.id);
    } else if (
      event.key === "v" &&
      (chunk.state === "proposed_edit" || chunk.state === "proposed_add" || chunk.state === "proposed_delete")
    ) {
      handlers.onRevert(chunk.id);
    }
  });
  return row;
}

function readChangeBody(bar: HTMLElement): ChangeBody {
  const newInfo = (bar.querySelector("#new-info") as HTMLTextAreaElement).value;
  const action = (bar.querySelector("#action-select") as HTMLSelectElement).value as ChangeBody["action"];
  const target = (bar.querySelector("#target-input") as HTMLInputElement).value;
  const steer = (bar.querySelector("#global-steer") as HTMLInputElement).value;
  return {
    action,
    new_info: newInfo,
    target: action === "edit" ? target || null : null,
    steer: steer || null,
  };
}

function actionBar(state: AppState, handlers: Handlers): HTMLElement {
  const bar = el("div", { class: "action-bar" });
  bar.append(
    el("textarea", {
      id: "new-info",
      placeholder: "Describe the new information or change...",
      "aria-label": "New information",
    }),
  );
  const select = el("select", { id: "action-select", "aria-label": "Action" });
  for (const value of ["add", "change", "edit"]) {
    select.append(el("option", { value }, [value]));
  }
  bar.append(select);
  bar.append(el("input", { id: "target-input", placeholder: "Target chunk id (edit)" }));
  bar.append(el("input", { id: "global-steer", placeholder: "Steer detection/rewrite..." }));

  bar.append(
    button("Check for Conflicts", "check", state.busy, () => handlers.onCheck(readChangeBody(bar))),
  );
  bar.append(button("Make Change", "apply", state.busy, () => handlers.onApply(readChangeBody(bar))));
  bar.append(
    button("Add Info", "add-info", state.busy, () =>
      handlers.onAddInfo((bar.querySelector("#new-info") as HTMLTextAreaElement).value),
    ),
  );
  bar.append(button("Revert All", "revert-all", state.busy, () => handlers.onRevertAll()));
  bar.append(
    button("Clear All Conflicts", "clear-conflicts", state.busy, () => handlers.onClearConflicts()),
  );

  const settings = el("span", { class: "settings" });
  const underlineToggle = button(
    state.settings.showUnderlines ? "Underlines: on" : "Underlines: off",
    "toggle-underlines",
    false,
    () => handlers.onToggleUnderlines(),
  );
  const intensityToggle = button(
    state.settings.scoreIntensity ? "Score intensity: on" : "Score intensity: off",
    "toggle-intensity",
    false,
    () => handlers.onToggleIntensity(),
  );
  settings.append(underlineToggle, intensityToggle);
  bar.append(settings);
  return bar;
}

function clarificationModal(state: AppState, handlers: Handlers): HTMLElement | null {
  if (!state.clarification) {
    return null;
  }
  const modal = el("div", { class: "modal", role: "dialog", "aria-modal": "true" });
  modal.append(el("p", { class: "modal-question" }, [state.clarification.question]));
  const answer = el("textarea", { class: "modal-answer", "aria-label": "Clarification" }) as HTMLTextAreaElement;
  modal.append(answer);
  modal.append(
    button("Continue", "clarification-submit", state.busy, () =>
      handlers.onClarificationSubmit(answer.value),
    ),
  );
  modal.append(button("Cancel", "clarification-cancel", false, () => handlers.onClarificationCancel()));
  return modal;
}

export function renderApp(state: AppState, handlers: Handlers): HTMLElement {
  const root = el("div", { class: state.busy ? "app busy" : "app" });
  root.append(actionBar(state, handlers));
  root.append(
    el(
      "ul",
      { class: "chunk-list" },
      [...state.chunks].sort((a, b) => a.ordinal - b.ordinal).map((c) => chunkRow(c, state, handlers)),
    ),
  );
  const modal = clarificationModal(state, handlers);
  if (modal) {
    root.append(modal);
  }
  if (state.toasts.length > 0) {
    root.append(
      el(
        "div",
        { class: "toasts", role: "status" },
        state.toasts.map((t) => el("div", { class: "toast" }, [t])),
      ),
    );
  }
  return root;
}
