/** Wire types, mirroring the gateway's JSON exactly. */

export interface UiEvent {
  seq: number;
  kind: string;
  role?: string;
  text?: string;
  payload?: Record<string, unknown>;
}

export interface EventsPage {
  events: UiEvent[];
  next_seq: number;
  session_state: string;
  queued: number;
}

export interface SessionStatus {
  id: string;
  user_name: string;
  state: string;
  queued: number;
  events: number;
}

/** Subset of the execution report the dashboard cares about. */
export interface ExecutionView {
  status: string;
  visited_states: string[];
  reason?: string;
  logs?: Array<{
    level: string;
    source: string;
    message: string;
    payload?: Record<string, unknown>;
  }>;
}
