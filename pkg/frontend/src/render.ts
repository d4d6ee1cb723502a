/** DOM rendering.  Pure function of the view: wipes and rebuilds the root
 * each call.  The displayed NFE counter is always the server-reported
 * value from the current descriptor. */

import type { SessionView } from "./types";
import { stateDim, totalBudget } from "./types";

export interface Handlers {
  onStep(stride: number | null): void;
  onAuto(enabled: boolean): void;
  onSelect(branch: number): void;
  onEdit(label: number): void;
  onAxes(x: number, y: number): void;
  onRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

const BRANCH_COLORS = [
  "#5b8dd6",
  "#6cc570",
  "#e8b84a",
  "#c06ad6",
  "#d4552b",
  "#4ac5b8",
];

function branchColor(branch: number): string {
  return BRANCH_COLORS[branch % BRANCH_COLORS.length] ?? "#5b8dd6";
}

function drawScatter(
  canvas: HTMLCanvasElement,
  branch: number,
  points: number[][],
  latest: number[] | null,
  axes: [number, number],
): void {
  // the test DOM has no raster backend and logs loudly when asked for one
  if (typeof CanvasRenderingContext2D === "undefined") return;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const all = latest ? [...points, latest] : points;
  let bound = 1;
  for (const p of all) {
    bound = Math.max(
      bound,
      Math.abs(p[axes[0]] ?? 0),
      Math.abs(p[axes[1]] ?? 0),
    );
  }
  bound *= 1.1;
  const px = (v: number) => ((v + bound) / (2 * bound)) * w;
  const py = (v: number) => h - ((v + bound) / (2 * bound)) * h;
  ctx.globalAlpha = 0.4;
  ctx.fillStyle = branchColor(branch);
  for (const p of points) {
    ctx.beginPath();
    ctx.arc(px(p[axes[0]] ?? 0), py(p[axes[1]] ?? 0), 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.globalAlpha = 1;
  if (latest) {
    ctx.fillStyle = branchColor(branch);
    ctx.beginPath();
    ctx.arc(
      px(latest[axes[0]] ?? 0),
      py(latest[axes[1]] ?? 0),
      5,
      0,
      2 * Math.PI,
    );
    ctx.fill();
  }
}

function header(view: SessionView, handlers: Handlers): HTMLElement {
  const bar = el("header", "topbar");
  const d = view.descriptor;
  const phase = el("span", "phase", d ? d.phase : "disconnected");
  phase.dataset.phase = d ? d.phase : "none";
  bar.append(phase);

  const nfe = el("span", "nfe");
  nfe.id = "nfe";
  const budget = d ? totalBudget(d) : 0;
  nfe.textContent = d ? `${d.nfe_count} / ${budget} NFE` : "-";
  bar.append(nfe);

  const progress = el("div", "progress");
  const fill = el("div", "progress-fill");
  const frac = d && budget > 0 ? d.nfe_count / budget : 0;
  fill.style.width = `${Math.round(frac * 100)}%`;
  progress.append(fill);
  bar.append(progress);

  if (view.stream === "dropped") {
    const retry = el("button", "retry", "reconnect");
    retry.id = "retry";
    retry.onclick = () => handlers.onRetry();
    bar.append(retry);
  }
  return bar;
}

function controls(view: SessionView, handlers: Handlers): HTMLElement {
  const box = el("section", "controls");
  const busyOrDone =
    view.busy || view.finished || view.descriptor === null;

  const step = el("button", "step", "step");
  step.id = "step";
  step.disabled = busyOrDone;
  const strideInput = el("input") as HTMLInputElement;
  strideInput.id = "stride";
  strideInput.type = "number";
  strideInput.min = "1";
  strideInput.placeholder = "to boundary";
  step.onclick = () => {
    const raw = strideInput.value.trim();
    handlers.onStep(raw === "" ? null : Number(raw));
  };
  box.append(step, strideInput);

  const auto = el("input") as HTMLInputElement;
  auto.type = "checkbox";
  auto.id = "auto";
  auto.checked = view.auto;
  auto.onchange = () => handlers.onAuto(auto.checked);
  const autoLabel = el("label", "auto-label", "auto advance");
  autoLabel.prepend(auto);
  box.append(autoLabel);

  // steering is a boundary-only affordance
  const atBoundary =
    view.descriptor?.phase === "at_outer_boundary" && !view.busy;
  const editLabel = el("input") as HTMLInputElement;
  editLabel.id = "condition-label";
  editLabel.type = "number";
  editLabel.placeholder = "class label";
  editLabel.disabled = !atBoundary;
  const edit = el("button", "edit", "set condition");
  edit.id = "edit";
  edit.disabled = !atBoundary;
  edit.onclick = () => {
    const raw = editLabel.value.trim();
    if (raw !== "") handlers.onEdit(Number(raw));
  };
  box.append(editLabel, edit);

  const dim = stateDim(view);
  if (dim > 2) {
    for (const [axisIdx, name] of [
      [0, "x"],
      [1, "y"],
    ] as const) {
      const sel = el("select") as HTMLSelectElement;
      sel.id = `axis-${name}`;
      for (let c = 0; c < dim; c += 1) {
        const opt = el("option", undefined, `coord ${c}`) as HTMLOptionElement;
        opt.value = String(c);
        if (view.axes[axisIdx] === c) opt.selected = true;
        sel.append(opt);
      }
      sel.onchange = () => {
        const x = axisIdx === 0 ? Number(sel.value) : view.axes[0];
        const y = axisIdx === 1 ? Number(sel.value) : view.axes[1];
        handlers.onAxes(x, y);
      };
      box.append(sel);
    }
  }
  return box;
}

function panels(view: SessionView, handlers: Handlers): HTMLElement {
  const grid = el("section", "panels");
  const canSelect =
    view.descriptor?.phase === "at_outer_boundary" && !view.busy;
  for (const panel of view.panels) {
    const fig = el("figure", "panel");
    fig.dataset.branch = String(panel.branch);
    if (view.selected === panel.branch) fig.classList.add("selected");

    const canvas = el("canvas") as HTMLCanvasElement;
    canvas.width = 220;
    canvas.height = 220;
    drawScatter(canvas, panel.branch, panel.trail, panel.latest, view.axes);
    fig.append(canvas);

    const caption = el(
      "figcaption",
      "panel-caption",
      panel.latest
        ? `branch ${panel.branch} @ nfe ${panel.nfe}`
        : `branch ${panel.branch} (no prediction yet)`,
    );
    fig.append(caption);

    const pick = el("button", "select", "propagate this");
    pick.disabled = !canSelect;
    pick.onclick = () => handlers.onSelect(panel.branch);
    fig.append(pick);
    grid.append(fig);
  }
  return grid;
}

export function renderView(
  root: HTMLElement,
  view: SessionView,
  handlers: Handlers,
): void {
  root.textContent = "";
  root.append(header(view, handlers));
  if (view.message !== null) {
    const banner = el("div", "banner", view.message);
    banner.id = "banner";
    root.append(banner);
  }
  root.append(panels(view, handlers));
  root.append(controls(view, handlers));
}
