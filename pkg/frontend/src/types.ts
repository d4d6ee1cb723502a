/** Wire types mirrored from the session service (docs/api.md). */

export type Phase = "awaiting_inner" | "at_outer_boundary" | "finished";

export interface KindConfig {
  variant: string;
  eta: number;
}

export interface ConditionConfig {
  kind: string;
  label?: number;
  scale?: number;
}

export interface PlanConfig {
  outer_grid: number[];
  inner_steps: number[];
  outer: KindConfig;
  inner: KindConfig;
  condition: ConditionConfig[];
  terminal_alpha_bar: number | null;
}

export interface Descriptor {
  id: string;
  plan: PlanConfig;
  n_branches: number;
  nfe_count: number;
  phase: Phase;
  outer_index: number;
  created_at: string;
}

export interface CreateBody {
  prior: unknown;
  schedule: unknown;
  plan: unknown;
  branches: number;
  seed: number;
}

export interface ResultPayload {
  nfe_count: number;
  branch: number;
  values: number[];
}

export interface EventFrame {
  type: "event";
  session: string;
  branch: number;
  nfe: number;
  outer_step: number;
  t: number;
  values: number[];
  boundary: boolean;
}

export interface EndFrame {
  type: "end";
  nfe_count: number;
}

export interface ErrorFrame {
  type: "error";
  detail: string;
}

export type StreamFrame = EventFrame | EndFrame | ErrorFrame;

/** One branch's display state: latest server-reported prediction plus a
 * short trail of earlier ones for the scatter. */
export interface BranchPanel {
  branch: number;
  latest: number[] | null;
  nfe: number;
  trail: number[][];
}

export type StreamState = "idle" | "open" | "dropped";

/** Everything the renderer needs.  Derived solely from server responses
 * and stream frames; the client never simulates. */
export interface SessionView {
  descriptor: Descriptor | null;
  panels: BranchPanel[];
  backlog: EventFrame[];
  busy: boolean;
  finished: boolean;
  message: string | null;
  selected: number | null;
  stream: StreamState;
  auto: boolean;
  axes: [number, number];
}

export function totalBudget(d: Descriptor): number {
  return d.n_branches * d.plan.inner_steps.reduce((a, b) => a + b, 0);
}

export function stateDim(view: SessionView): number {
  for (const p of view.panels) if (p.latest) return p.latest.length;
  return 2;
}
