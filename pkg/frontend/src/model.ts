/** Event-stream reducer.
 *
 * The whole UI is a pure function of the ordered event stream: `applyEvent`
 * takes the previous state and one gateway event and returns the next state,
 * never mutating its input.  Events at or below `lastSeq` are ignored, so a
 * reconnect can replay an overlapping page without duplicating bubbles.
 */

import type { ExecutionView, UiEvent } from "./types.js";

export interface Bubble {
  seq: number;
  role: string;
  text: string;
  kind: "message" | "report" | "error";
  status?: string;
}

export interface TraceRow {
  seq: number;
  role: string;
  text: string;
}

export interface FsmView {
  states: string[];
  initial: string;
  terminals: string[];
  current: string | null;
  visited: string[];
}

export interface Rejection {
  projected: number;
  limit: number;
  reason: string;
}

export interface CacheHitView {
  summary: string;
  score: number;
}

export type Phase =
  | "idle"
  | "generating"
  | "retrying"
  | "executing"
  | "reporting";

export interface UiState {
  lastSeq: number;
  phase: Phase;
  bubbles: Bubble[];
  trace: TraceRow[];
  fsm: FsmView | null;
  devices: Record<string, unknown> | null;
  rejection: Rejection | null;
  cacheHit: CacheHitView | null;
}

export function initialState(): UiState {
  return {
    lastSeq: 0,
    phase: "idle",
    bubbles: [],
    trace: [],
    fsm: null,
    devices: null,
    rejection: null,
    cacheHit: null,
  };
}

function asRecord(value: unknown): Record<string, unknown> {
  return typeof value === "object" && value !== null
    ? (value as Record<string, unknown>)
    : {};
}

function fsmFromProgram(payload: Record<string, unknown>): FsmView | null {
  const program = asRecord(payload.program);
  const states = Array.isArray(program.states)
    ? program.states.map((s) => String(asRecord(s).name))
    : null;
  if (!states || typeof program.initial !== "string") return null;
  return {
    states,
    initial: program.initial,
    terminals: Array.isArray(program.terminals)
      ? program.terminals.map(String)
      : [],
    current: null,
    visited: [],
  };
}

function rejectionFromExecution(execution: ExecutionView): Rejection | null {
  for (const entry of execution.logs ?? []) {
    const payload = asRecord(entry.payload);
    if (
      typeof payload.projected_total === "number" &&
      typeof payload.limit === "number"
    ) {
      return {
        projected: payload.projected_total,
        limit: payload.limit,
        reason: execution.reason ?? entry.message,
      };
    }
  }
  return null;
}

export function applyEvent(state: UiState, event: UiEvent): UiState {
  if (event.seq <= state.lastSeq) return state;
  const next: UiState = { ...state, lastSeq: event.seq };
  const payload = asRecord(event.payload);
  const text = event.text ?? "";
  const role = event.role ?? "";

  switch (event.kind) {
    case "message":
      next.bubbles = [
        ...state.bubbles,
        { seq: event.seq, role, text, kind: "message" },
      ];
      if (role === "user") {
        // a new instruction clears the previous task's outcome chips
        next.rejection = null;
        next.cacheHit = null;
        next.phase = "idle";
      }
      return next;
    case "trace":
      next.trace = [...state.trace, { seq: event.seq, role, text }];
      return next;
    case "generating":
      next.phase = "generating";
      return next;
    case "retry":
      next.phase = "retrying";
      return next;
    case "cache_hit":
      next.cacheHit = {
        summary: String(payload.summary ?? ""),
        score: Number(payload.score ?? 0),
      };
      return next;
    case "executing":
      next.phase = "executing";
      return next;
    case "fsm":
      next.fsm = fsmFromProgram(payload);
      return next;
    case "snapshot": {
      const stateName = typeof payload.state === "string" ? payload.state : null;
      if (next.fsm && stateName) {
        next.fsm = {
          ...next.fsm,
          current: stateName,
          visited: [...next.fsm.visited, stateName],
        };
      }
      if (payload.devices !== undefined) {
        next.devices = asRecord(payload.devices);
      }
      return next;
    }
    case "reporting":
      next.phase = "reporting";
      return next;
    case "report": {
      next.phase = "idle";
      const status = typeof payload.status === "string" ? payload.status : "";
      next.bubbles = [
        ...state.bubbles,
        { seq: event.seq, role: role || "housekeeper", text, kind: "report", status },
      ];
      const execution = payload.execution as ExecutionView | undefined;
      if (execution && next.fsm) {
        // snapshots approximate progress live; the report is authoritative
        const visited = Array.isArray(execution.visited_states)
          ? execution.visited_states.map(String)
          : next.fsm.visited;
        next.fsm = { ...next.fsm, visited, current: null };
      }
      if (execution) {
        next.rejection = rejectionFromExecution(execution);
      }
      return next;
    }
    case "error":
      next.phase = "idle";
      next.bubbles = [
        ...state.bubbles,
        { seq: event.seq, role: role || "housekeeper", text, kind: "error" },
      ];
      return next;
    default:
      // unknown kinds advance the cursor but render nothing
      return next;
  }
}

export function applyEvents(state: UiState, events: UiEvent[]): UiState {
  return events.reduce(applyEvent, state);
}
