/** HTTP + websocket access to the session service.  This module is the
 * only place that talks to the network; everything above it works on the
 * returned payloads. */

import type {
  ConditionConfig,
  CreateBody,
  Descriptor,
  ResultPayload,
  StreamFrame,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** Minimal surface of a WebSocket, so tests can inject the node "ws"
 * implementation while the browser build uses the global one. */
export interface SocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type SocketCtor = new (url: string) => SocketLike;

export interface StreamHandle {
  close(): void;
}

async function parseDetail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return res.statusText || `http ${res.status}`;
  }
}

export class ServiceClient {
  private readonly base: string;
  private readonly socketCtor: SocketCtor;

  constructor(base: string, socketCtor?: SocketCtor) {
    this.base = base.replace(/\/+$/, "");
    const ctor =
      socketCtor ??
      (globalThis as { WebSocket?: SocketCtor }).WebSocket;
    if (!ctor) throw new Error("no WebSocket implementation available");
    this.socketCtor = ctor;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!res.ok) throw new ApiError(res.status, await parseDetail(res));
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string; sessions: number }> {
    return this.request("/healthz");
  }

  create(body: CreateBody): Promise<Descriptor> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  describe(id: string): Promise<Descriptor> {
    return this.request(`/sessions/${id}`);
  }

  advance(id: string, stride: number | null = null): Promise<Descriptor> {
    return this.request(`/sessions/${id}/advance`, {
      method: "POST",
      body: JSON.stringify({ stride }),
    });
  }

  select(id: string, branch: number): Promise<Descriptor> {
    return this.request(`/sessions/${id}/select`, {
      method: "POST",
      body: JSON.stringify({ branch }),
    });
  }

  editCondition(id: string, condition: ConditionConfig): Promise<Descriptor> {
    return this.request(`/sessions/${id}/condition`, {
      method: "POST",
      body: JSON.stringify(condition),
    });
  }

  result(id: string, branch: number): Promise<ResultPayload> {
    return this.request(`/sessions/${id}/result?branch=${branch}`);
  }

  /** Open the event stream.  The server replays the full backlog first,
   * then follows live; `onFrame` sees every frame in order. */
  openEvents(
    id: string,
    onFrame: (frame: StreamFrame) => void,
    onClose?: () => void,
  ): StreamHandle {
    const wsBase = this.base.replace(/^http/, "ws");
    const socket = new this.socketCtor(`${wsBase}/sessions/${id}/events`);
    let closed = false;
    socket.onmessage = (ev) => {
      const text = typeof ev.data === "string" ? ev.data : String(ev.data);
      onFrame(JSON.parse(text) as StreamFrame);
    };
    socket.onclose = () => {
      if (!closed) onClose?.();
    };
    socket.onerror = () => {
      // close follows; nothing useful in the error event itself
    };
    return {
      close() {
        closed = true;
        socket.close();
      },
    };
  }
}
