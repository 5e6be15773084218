import { ApiClient } from "./api.js";
import { App } from "./app.js";

declare global {
  interface Window {
    SPECMERGE_BASE_URL?: string;
  }
}

const baseUrl =
  new URLSearchParams(window.location.search).get("service") ?? window.SPECMERGE_BASE_URL ?? "";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}

App.boot(new ApiClient(baseUrl), root).catch((error) => {
  // full-screen retry state on a failed initial fetch
  root.innerHTML = "";
  const message = document.createElement("p");
  message.className = "fetch-error";
  message.textContent = `Could not load the spec: ${String(error)}`;
  const retry = document.createElement("button");
  retry.textContent = "Retry";
  retry.addEventListener("click", () => window.location.reload());
  root.append(message, retry);
});
