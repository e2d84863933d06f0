/** Application bootstrap: wire the store to the DOM and keep them in sync. */

import { Client } from "./api.js";
import { render } from "./render.js";
import { SessionStore } from "./state.js";

export interface AppOptions {
  baseUrl: string;
  sessionId: string;
  fetchFn?: typeof fetch;
}

export async function mount(container: HTMLElement, options: AppOptions): Promise<SessionStore> {
  const client = new Client(options.baseUrl, options.fetchFn);
  const store = new SessionStore(client, options.sessionId);
  store.subscribe((state) => render(container, store, state));
  await store.refresh();
  return store;
}

/** Browser entry point: ?session=<id>[&api=<service url>]; the API defaults
 * to the page's own origin. */
export async function bootstrap(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session");
  const container = document.getElementById("app");
  if (!container) throw new Error("missing #app container");
  if (!sessionId) {
    container.textContent = "add ?session=<id> to the URL";
    return;
  }
  await mount(container, { baseUrl: params.get("api") ?? "", sessionId });
}
