/** Entry point: connection form, controller wiring, auto-advance pacing. */

import { ServiceClient } from "./client";
import { SessionController } from "./controller";
import { renderView } from "./render";
import type { CreateBody } from "./types";

const DEFAULT_BODY: CreateBody = {
  prior: {
    components: [
      { weight: 0.5, mean: [-4.0, 0.0], cov: 0.25, label: 0 },
      { weight: 0.5, mean: [4.0, 0.0], cov: 0.25, label: 1 },
    ],
  },
  schedule: { kind: "linear", T: 1000 },
  plan: {
    outer_steps: 3,
    inner_steps: 10,
    condition: { kind: "class", label: 0 },
  },
  branches: 4,
  seed: 0,
};

function appRoot(): HTMLElement {
  const node = document.getElementById("app");
  if (!node) throw new Error("missing #app element");
  return node;
}

function connectForm(onDone: (c: SessionController) => void): void {
  const root = appRoot();
  root.textContent = "";
  const form = document.createElement("form");
  form.className = "connect";
  form.innerHTML = `
    <label>server <input id="server" value="${location.origin}"></label>
    <label>session id (blank for new) <input id="session"></label>
    <label>new-session body
      <textarea id="body" rows="14"></textarea>
    </label>
    <button type="submit">connect</button>
    <div id="connect-error" class="banner" hidden></div>
  `;
  const bodyBox = form.querySelector("#body") as HTMLTextAreaElement;
  bodyBox.value = JSON.stringify(DEFAULT_BODY, null, 2);
  form.onsubmit = async (ev) => {
    ev.preventDefault();
    const server = (form.querySelector("#server") as HTMLInputElement).value;
    const sid = (form.querySelector("#session") as HTMLInputElement).value;
    const errBox = form.querySelector("#connect-error") as HTMLElement;
    try {
      const controller = new SessionController(new ServiceClient(server));
      if (sid.trim() !== "") {
        await controller.attach(sid.trim());
      } else {
        await controller.create(JSON.parse(bodyBox.value) as CreateBody);
      }
      onDone(controller);
    } catch (err) {
      errBox.hidden = false;
      errBox.textContent = `cannot connect: ${String(err)}`;
    }
  };
  root.append(form);
}

function runConsole(controller: SessionController): void {
  const root = appRoot();
  let autoTimer: ReturnType<typeof setTimeout> | null = null;

  const handlers = {
    onStep: (stride: number | null) => void controller.step(stride),
    onAuto: (enabled: boolean) => controller.setAuto(enabled),
    onSelect: (branch: number) => void controller.select(branch),
    onEdit: (label: number) =>
      void controller.editCondition({ kind: "class", label }),
    onAxes: (x: number, y: number) => controller.setAxes(x, y),
    onRetry: () => {
      const id = controller.sessionId;
      if (id) void controller.attach(id);
    },
  };

  const maybeAuto = () => {
    if (autoTimer !== null) return;
    if (controller.view.auto && controller.canStep) {
      autoTimer = setTimeout(() => {
        autoTimer = null;
        void controller.step();
      }, 120);
    }
  };

  controller.onChange = () => {
    renderView(root, controller.view, handlers);
    maybeAuto();
  };
  renderView(root, controller.view, handlers);
}

connectForm(runConsole);
