import { ReqrankApi, resolveApiBase } from "./api.js";
import { initConsole } from "./app.js";

function boot(): void {
  const base = resolveApiBase(window.location.search, globalThis as Record<string, unknown>);
  const api = new ReqrankApi(base);
  void initConsole(document, api);
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}
