/** Browser bootstrap: wire the poll loop to the reducer and re-render.
 *
 * Reconnection is free because the reducer drops already-seen seqs: on any
 * fetch failure we show a banner, wait, and resume from `state.lastSeq + 1`.
 */

import { GatewayClient } from "./api.js";
import { applyEvents, initialState, type UiState } from "./model.js";
import { renderApp } from "./render.js";

const POLL_TIMEOUT_SEC = 25;
const RECONNECT_DELAY_MS = 1000;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function run(root: HTMLElement): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? "";
  const name = params.get("name") ?? "Eason";
  const client = new GatewayClient(base);

  let state: UiState = initialState();
  const view = document.createElement("div");
  view.className = "app";
  const banner = document.createElement("div");
  banner.className = "banner";
  banner.hidden = true;
  const form = document.createElement("form");
  form.className = "composer";
  const input = document.createElement("input");
  input.placeholder = "instruction or small talk";
  input.autofocus = true;
  const button = document.createElement("button");
  button.textContent = "send";
  form.append(input, button);
  root.append(banner, view, form);

  const sessionId = await client.createSession(name);

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = input.value.trim();
    if (!text) return;
    input.value = "";
    client.postMessage(sessionId, text).catch((err) => {
      banner.hidden = false;
      banner.textContent = `send failed: ${String(err)}`;
    });
  });

  for (;;) {
    try {
      const page = await client.pollEvents(
        sessionId,
        state.lastSeq + 1,
        POLL_TIMEOUT_SEC,
      );
      banner.hidden = true;
      if (page.events.length > 0) {
        state = applyEvents(state, page.events);
        view.innerHTML = renderApp(state);
      }
    } catch (err) {
      banner.hidden = false;
      banner.textContent = `connection lost, retrying (${String(err)})`;
      await sleep(RECONNECT_DELAY_MS);
    }
  }
}

const root = document.getElementById("app");
if (root) {
  run(root).catch((err) => {
    root.textContent = `failed to start: ${String(err)}`;
  });
}
