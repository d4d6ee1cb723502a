/** View-state machine for one steering session.
 *
 * All state changes come from server responses and stream frames; there is
 * no client-side simulation and no extrapolated NFE counting.  One mutation
 * may be in flight at a time: while `busy` every action is suppressed, so a
 * double click issues a single request.
 */

import { ApiError, ServiceClient, StreamHandle } from "./client";
import type {
  ConditionConfig,
  CreateBody,
  Descriptor,
  EventFrame,
  SessionView,
  StreamFrame,
} from "./types";

const TRAIL_LIMIT = 200;

function emptyView(): SessionView {
  return {
    descriptor: null,
    panels: [],
    backlog: [],
    busy: false,
    finished: false,
    message: null,
    selected: null,
    stream: "idle",
    auto: false,
    axes: [0, 1],
  };
}

export class SessionController {
  readonly view: SessionView = emptyView();
  onChange: (() => void) | null = null;
  private stream: StreamHandle | null = null;

  constructor(private readonly client: ServiceClient) {}

  private notify(): void {
    this.onChange?.();
  }

  private applyDescriptor(d: Descriptor): void {
    this.view.descriptor = d;
    this.view.finished = d.phase === "finished";
    if (this.view.panels.length !== d.n_branches) {
      this.view.panels = Array.from({ length: d.n_branches }, (_, i) => ({
        branch: i,
        latest: null,
        nfe: 0,
        trail: [],
      }));
    }
  }

  get sessionId(): string | null {
    return this.view.descriptor?.id ?? null;
  }

  get canStep(): boolean {
    return (
      !this.view.busy && this.view.descriptor !== null && !this.view.finished
    );
  }

  /** Branch selection and condition edits exist only at outer boundaries. */
  get canSteer(): boolean {
    return (
      !this.view.busy &&
      this.view.descriptor?.phase === "at_outer_boundary"
    );
  }

  async create(body: CreateBody): Promise<void> {
    this.applyDescriptor(await this.client.create(body));
    this.view.message = null;
    this.openStream();
    this.notify();
  }

  /** Attach to an existing session: GET status, then (re)build from the
   * replayed stream. */
  async attach(id: string): Promise<void> {
    this.applyDescriptor(await this.client.describe(id));
    this.view.message = null;
    this.openStream();
    this.notify();
  }

  /** Reconnect path: the server replays the whole backlog on a fresh
   * socket, so local event state starts over. */
  private openStream(): void {
    const id = this.sessionId;
    if (id === null) return;
    this.stream?.close();
    this.view.backlog = [];
    for (const p of this.view.panels) {
      p.latest = null;
      p.nfe = 0;
      p.trail = [];
    }
    this.view.stream = "open";
    this.stream = this.client.openEvents(
      id,
      (frame) => this.handleFrame(frame),
      () => {
        if (!this.view.finished) {
          this.view.stream = "dropped";
          this.view.message = "event stream dropped";
          this.notify();
        }
      },
    );
  }

  handleFrame(frame: StreamFrame): void {
    if (frame.type === "event") {
      this.applyEvent(frame);
    } else if (frame.type === "end") {
      this.view.finished = true;
      this.view.stream = "idle";
      if (this.view.descriptor) {
        this.view.descriptor.nfe_count = frame.nfe_count;
        this.view.descriptor.phase = "finished";
      }
    } else {
      this.view.message = frame.detail;
      this.view.stream = "dropped";
    }
    this.notify();
  }

  private applyEvent(frame: EventFrame): void {
    this.view.backlog.push(frame);
    const panel = this.view.panels[frame.branch];
    if (!panel) return;
    if (panel.latest) {
      panel.trail.push(panel.latest);
      if (panel.trail.length > TRAIL_LIMIT) panel.trail.shift();
    }
    panel.latest = frame.values;
    panel.nfe = frame.nfe;
  }

  /** Run one mutation with the in-flight guard.  Returns false when the
   * action was suppressed (busy or wrong phase). */
  private async mutate(
    allowed: boolean,
    call: (id: string) => Promise<Descriptor>,
  ): Promise<boolean> {
    const id = this.sessionId;
    if (!allowed || id === null) return false;
    this.view.busy = true;
    this.view.message = null;
    this.notify();
    try {
      this.applyDescriptor(await call(id));
      return true;
    } catch (err) {
      // conflicts and rejections re-enable the controls with a message
      this.view.message =
        err instanceof ApiError ? err.message : String(err);
      return false;
    } finally {
      this.view.busy = false;
      this.notify();
    }
  }

  step(stride: number | null = null): Promise<boolean> {
    return this.mutate(this.canStep, (id) =>
      this.client.advance(id, stride),
    );
  }

  select(branch: number): Promise<boolean> {
    const done = this.mutate(this.canSteer, (id) =>
      this.client.select(id, branch),
    );
    return done.then((ok) => {
      if (ok) {
        this.view.selected = branch;
        this.notify();
      }
      return ok;
    });
  }

  editCondition(condition: ConditionConfig): Promise<boolean> {
    return this.mutate(this.canSteer, (id) =>
      this.client.editCondition(id, condition),
    );
  }

  setAuto(enabled: boolean): void {
    this.view.auto = enabled;
    this.notify();
  }

  setAxes(x: number, y: number): void {
    this.view.axes = [x, y];
    this.notify();
  }

  close(): void {
    this.stream?.close();
    this.stream = null;
    this.view.stream = "idle";
  }
}
