import { describe, expect, it } from "vitest";

import { applyEvents, initialState } from "../src/model.js";
import {
  esc,
  renderApp,
  renderChat,
  renderFsmPanel,
  renderRoomGrid,
  renderRouterPanel,
} from "../src/render.js";
import type { ExecutionView } from "../src/types.js";
import { loadTranscript } from "./fixtures.js";

const scenario1 = loadTranscript("scenario1");
const scenario2 = loadTranscript("scenario2");
const state1 = applyEvents(initialState(), scenario1);
const state2 = applyEvents(initialState(), scenario2);

function lastBubbleHtml(html: string): string {
  const bubbles = html.match(/<div class="bubble[^>]*>.*?<\/div>/gs) ?? [];
  return bubbles.at(-1) ?? "";
}

describe("chat pane", () => {
  it("final bubble carries the five assertion tokens", () => {
    const bubble = lastBubbleHtml(renderChat(state1));
    for (const token of ["5", "Mike", "Ada", "Joe", "[10, 1]", "[12, 5]"]) {
      expect(bubble).toContain(esc(token));
    }
    expect(bubble).toContain('data-status="success"');
  });

  it("escapes markup in message text", () => {
    const state = applyEvents(initialState(), [
      { seq: 1, kind: "message", role: "user", text: "<script>alert(1)</script>" },
    ]);
    const html = renderChat(state);
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("fsm panel", () => {
  it("visited order equals the transcript's visited_states", () => {
    const execution = scenario1
      .filter((e) => e.kind === "report")
      .map((e) => e.payload!.execution as ExecutionView)[0]!;
    const html = renderFsmPanel(state1);
    const visited = /data-visited="([^"]*)"/.exec(html)![1]!;
    expect(visited.split(",")).toEqual(execution.visited_states);
  });

  it("marks visited states in document order", () => {
    const html = renderFsmPanel(state1);
    const states = [...html.matchAll(/<li class="([^"]*)">([^<]*)<\/li>/g)];
    const visitedNames = states
      .filter(([, cls]) => cls!.includes("visited"))
      .map(([, , name]) => name);
    expect(visitedNames).toEqual(["scan_room", "analyze", "visit_next", "wrap_up"]);
  });

  it("idle session renders an empty panel", () => {
    expect(renderFsmPanel(initialState())).toContain("empty");
  });
});

describe("router panel", () => {
  it("renders the 120/100 rejected projection with the reason", () => {
    const html = renderRouterPanel(state2);
    expect(html).toContain("rejected: 120/100 Mbps");
    expect(html).toContain("projected total 120 Mbps exceeds the 100 Mbps limit");
  });

  it("shows per-user bars and the 100/100 total", () => {
    const html = renderRouterPanel(state2);
    expect(html).toContain('data-user="Eason" data-tier="Normal"');
    expect(html).toContain("&Sigma; 100/100 Mbps");
  });

  it("scenario 1 has no router", () => {
    expect(renderRouterPanel(state1)).toContain("empty");
  });

  it("malformed router payload falls back to raw JSON", () => {
    const broken = { ...state2, devices: { router: { nonsense: true } } };
    const html = renderRouterPanel(broken);
    expect(html).toContain('class="raw"');
    expect(html).toContain("nonsense");
  });
});

describe("room grid", () => {
  it("draws the scenario 1 room with robot, persons and cameras", () => {
    const html = renderRoomGrid(state1);
    expect(html).toContain("<table");
    expect((html.match(/<td/g) ?? []).length).toBe(16 * 10);
    expect(html).toContain(">R</td>");
    expect(html).toContain(">P</td>");
    expect(html).toContain(">C</td>");
    expect(html).toContain(">#</td>");
  });

  it("idle session renders an empty panel", () => {
    expect(renderRoomGrid(initialState())).toContain("empty");
  });
});

describe("full page", () => {
  it("is a pure function of the state", () => {
    expect(renderApp(state1)).toBe(renderApp(state1));
    expect(renderApp(state1)).not.toBe(renderApp(state2));
  });

  it("casual chat leaves the workflow panels untouched", () => {
    const hello = applyEvents(initialState(), [
      { seq: 1, kind: "message", role: "user", text: "Hello" },
      { seq: 2, kind: "message", role: "housekeeper", text: "Hello! How can I help you today?" },
    ]);
    const html = renderApp(hello);
    expect(html).toContain("Hello! How can I help you today?");
    expect(renderFsmPanel(hello)).toContain("empty");
    expect(html).toContain('data-phase="idle"');
  });
});
