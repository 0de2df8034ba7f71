/** HTML templates.
 *
 * Every function maps UiState to a string with no side effects, so snapshot
 * tests can assert on rendered panes without a DOM.  A panel that trips over
 * an unexpected payload shape falls back to raw JSON instead of breaking the
 * page.
 */

import type { FsmView, UiState } from "./model.js";

export function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function rawFallback(label: string, data: unknown): string {
  return `<pre class="raw" data-panel="${esc(label)}">${esc(
    JSON.stringify(data, null, 1),
  )}</pre>`;
}

function panel(label: string, data: unknown, body: () => string): string {
  try {
    return body();
  } catch {
    return rawFallback(label, data);
  }
}

export function renderChat(state: UiState): string {
  const bubbles = state.bubbles
    .map(
      (b) =>
        `<div class="bubble ${esc(b.role)} ${esc(b.kind)}"` +
        (b.status ? ` data-status="${esc(b.status)}"` : "") +
        `>${esc(b.text)}</div>`,
    )
    .join("\n");
  return `<div class="chat">\n${bubbles}\n</div>`;
}

export function renderTrace(state: UiState): string {
  const rows = state.trace
    .map(
      (t) =>
        `<div class="trace-row"><span class="who">${esc(t.role)}</span> ${esc(
          t.text,
        )}</div>`,
    )
    .join("\n");
  return `<details class="trace"><summary>internal dialog (${state.trace.length})</summary>\n${rows}\n</details>`;
}

export function renderPhase(state: UiState): string {
  const cache = state.cacheHit
    ? ` <span class="chip cache-hit" title="${esc(state.cacheHit.summary)}">cache hit ${state.cacheHit.score.toFixed(2)}</span>`
    : "";
  return `<div class="phase" data-phase="${esc(state.phase)}">${esc(state.phase)}${cache}</div>`;
}

function fsmBody(fsm: FsmView): string {
  const items = fsm.states
    .map((name) => {
      const classes = ["state"];
      if (fsm.visited.includes(name)) classes.push("visited");
      if (name === fsm.current) classes.push("current");
      if (fsm.terminals.includes(name)) classes.push("terminal");
      if (name === fsm.initial) classes.push("initial");
      return `<li class="${classes.join(" ")}">${esc(name)}</li>`;
    })
    .join("\n");
  return (
    `<ol class="fsm-states" data-visited="${esc(fsm.visited.join(","))}">\n` +
    `${items}\n</ol>`
  );
}

export function renderFsmPanel(state: UiState): string {
  if (!state.fsm) return `<div class="panel fsm empty">no program</div>`;
  const fsm = state.fsm;
  return panel(
    "fsm",
    fsm,
    () => `<div class="panel fsm">\n${fsmBody(fsm)}\n</div>`,
  );
}

export function renderRouterPanel(state: UiState): string {
  const router = state.devices?.["router"];
  if (!router) return `<div class="panel router empty">no router</div>`;
  return panel("router", router, () => {
    const doc = router as {
      total_mbps: number;
      users: Record<string, { tier: string; mbps: number }>;
    };
    if (typeof doc.total_mbps !== "number" || typeof doc.users !== "object") {
      throw new TypeError("unexpected router payload");
    }
    let used = 0;
    const bars = Object.entries(doc.users)
      .map(([name, u]) => {
        used += u.mbps;
        const width = Math.round((u.mbps / doc.total_mbps) * 100);
        return (
          `<div class="bar" data-user="${esc(name)}" data-tier="${esc(u.tier)}">` +
          `<span class="fill" style="width:${width}%"></span>` +
          `${esc(name)}: ${esc(u.tier)} ${u.mbps} Mbps</div>`
        );
      })
      .join("\n");
    const rejection = state.rejection
      ? `\n<div class="rejection">rejected: ${state.rejection.projected}/${state.rejection.limit} Mbps` +
        `<div class="reason">${esc(state.rejection.reason)}</div></div>`
      : "";
    return (
      `<div class="panel router">\n${bars}\n` +
      `<div class="total">&Sigma; ${used}/${doc.total_mbps} Mbps</div>${rejection}\n</div>`
    );
  });
}

export function renderRoomGrid(state: UiState): string {
  const grid = state.devices?.["grid"];
  if (!grid) return `<div class="panel room empty">no scene</div>`;
  return panel("room", state.devices, () => {
    const g = grid as { width: number; height: number; obstacles: number[][] };
    const mark = new Map<string, string>();
    for (const ob of g.obstacles) mark.set(`${ob[0]},${ob[1]}`, "#");
    const persons = state.devices?.["persons"];
    if (Array.isArray(persons)) {
      for (const p of persons) {
        const pos = (p as { position: number[] }).position;
        mark.set(`${pos[0]},${pos[1]}`, "P");
      }
    }
    const cameras = state.devices?.["cameras"];
    if (Array.isArray(cameras)) {
      for (const c of cameras) {
        const pos = (c as { position: number[] }).position;
        mark.set(`${pos[0]},${pos[1]}`, "C");
      }
    }
    const robot = state.devices?.["robot"];
    if (robot) {
      const pos = (robot as { position: number[] }).position;
      mark.set(`${pos[0]},${pos[1]}`, "R");
    }
    const rows: string[] = [];
    for (let y = 0; y < g.height; y += 1) {
      const cells: string[] = [];
      for (let x = 0; x < g.width; x += 1) {
        const glyph = mark.get(`${x},${y}`) ?? "";
        cells.push(`<td class="cell" data-xy="${x},${y}">${glyph}</td>`);
      }
      rows.push(`<tr>${cells.join("")}</tr>`);
    }
    return `<table class="panel room">\n${rows.join("\n")}\n</table>`;
  });
}

export function renderApp(state: UiState): string {
  return [
    renderPhase(state),
    renderChat(state),
    renderTrace(state),
    renderFsmPanel(state),
    renderRouterPanel(state),
    renderRoomGrid(state),
  ].join("\n");
}
