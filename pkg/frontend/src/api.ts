/** HTTP client for the gateway; nothing here knows about rendering. */

import type { EventsPage, SessionStatus } from "./types.js";

export class GatewayError extends Error {
  constructor(
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "GatewayError";
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  const body = (await response.json()) as Record<string, unknown>;
  if (!response.ok || body.error) {
    const err = (body.error ?? {}) as { code?: string; message?: string };
    throw new GatewayError(
      err.code ?? `HTTP${response.status}`,
      err.message ?? response.statusText,
    );
  }
  return body as T;
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = globalThis.fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async createSession(userName: string, id?: string): Promise<string> {
    const response = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(id ? { user_name: userName, id } : { user_name: userName }),
    });
    const body = await unwrap<{ id: string }>(response);
    return body.id;
  }

  async postMessage(sessionId: string, text: string): Promise<number> {
    const response = await this.fetchFn(
      this.url(`/sessions/${encodeURIComponent(sessionId)}/messages`),
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ text }),
      },
    );
    const body = await unwrap<{ seq: number }>(response);
    return body.seq;
  }

  /** Long-poll one page of events; `fromSeq` is the first seq wanted. */
  async pollEvents(
    sessionId: string,
    fromSeq: number,
    timeoutSec = 25,
  ): Promise<EventsPage> {
    const query = `?from_seq=${fromSeq}&mode=poll&timeout=${timeoutSec}`;
    const response = await this.fetchFn(
      this.url(`/sessions/${encodeURIComponent(sessionId)}/events${query}`),
    );
    return unwrap<EventsPage>(response);
  }

  async status(sessionId: string): Promise<SessionStatus> {
    const response = await this.fetchFn(
      this.url(`/sessions/${encodeURIComponent(sessionId)}`),
    );
    return unwrap<SessionStatus>(response);
  }
}
