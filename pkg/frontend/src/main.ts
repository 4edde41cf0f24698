/** DOM wiring for the labeling UI. All logic lives in the other modules. */

import { LabelClient } from "./api.js";
import { LabelSession, type SessionView } from "./state.js";
import { actionForKey, shortcutFor, type KeyAction } from "./keyboard.js";
import { windowPlot, type PlotMode } from "./plot.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element: #${id}`);
  return node as T;
}

const session = new LabelSession(new LabelClient());
let mode: PlotMode = "residual";

function renderProgress(view: SessionView): void {
  const { total, labeled, other_fraction } = view.progress;
  const pct = total === 0 ? 0 : Math.round((100 * labeled) / total);
  el("progress-bar").style.width = `${pct}%`;
  const otherPct = Math.round(100 * other_fraction);
  el("progress-text").textContent =
    `${labeled} / ${total} labeled (${pct}%), ${otherPct}% marked other`;
}

function renderMeta(view: SessionView): void {
  const record = view.current;
  if (record === null) return;
  const bits = [
    `window ${view.position + 1} of ${view.count}`,
    `id ${record.id}`,
    `series ${record.series_id}`,
    `fold ${record.fold}`,
    `samples [${record.start}, ${record.end})`,
  ];
  if (record.noise_bin !== null) bits.push(`noise bin ${record.noise_bin}`);
  if (record.sigma !== null) bits.push(`sigma ${record.sigma}`);
  if (record.padded) bits.push("edge-padded");
  el("meta").textContent = bits.join(" | ");
}

function renderLabels(view: SessionView): void {
  const container = el("labels");
  container.textContent = "";
  const vocabulary = session.vocabulary;
  vocabulary.forEach((label, index) => {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "label-button";
    const key = shortcutFor(index, vocabulary.length);
    button.textContent = key === null ? label : `${key} ${label}`;
    button.setAttribute("aria-pressed", String(view.pending.includes(label)));
    button.addEventListener("click", () => {
      session.toggle(label);
      render();
    });
    container.appendChild(button);
  });
}

function render(): void {
  const view = session.view();

  const banner = el("banner");
  banner.hidden = view.status !== "unreachable";
  if (view.status === "unreachable") {
    el("banner-text").textContent = view.error ?? "labeling service unreachable";
  }

  renderProgress(view);

  const workspace = el("workspace");
  const message = el("message");
  workspace.hidden = view.status !== "ready";
  message.hidden = view.status === "ready" || view.status === "unreachable";
  if (view.status === "loading") {
    message.textContent = "Loading windows...";
  } else if (view.status === "empty") {
    message.textContent =
      "No unlabeled windows. Point the service at a detector output with windows to label.";
  } else if (view.status === "done") {
    message.textContent =
      "All windows labeled. Labels are saved on disk; press Backspace to revisit.";
  }

  if (view.status !== "ready") return;

  renderMeta(view);
  const record = view.current;
  if (record !== null) {
    el("plot").innerHTML = windowPlot(record, mode);
    const modeButton = el<HTMLButtonElement>("mode");
    modeButton.textContent = `View: ${mode} (r)`;
    modeButton.disabled = record.raw_values === null;
  }
  renderLabels(view);

  const error = el("error");
  error.hidden = view.error === null;
  error.textContent = view.error ?? "";
}

async function act(action: KeyAction): Promise<void> {
  if (action === null) return;
  switch (action.type) {
    case "toggle":
      session.toggle(action.label);
      break;
    case "commit":
      await session.commit();
      break;
    case "undo":
      session.undo();
      break;
    case "view":
      mode = mode === "residual" ? "raw" : "residual";
      break;
  }
  render();
}

function wire(): void {
  el("retry").addEventListener("click", () => {
    void session.retry().then(render);
    render();
  });
  el("mode").addEventListener("click", () => {
    void act({ type: "view" });
  });
  el("undo").addEventListener("click", () => {
    void act({ type: "undo" });
  });
  el("commit").addEventListener("click", () => {
    void act({ type: "commit" });
  });
  document.addEventListener("keydown", (event) => {
    if (event.defaultPrevented || event.ctrlKey || event.metaKey || event.altKey) return;
    const action = actionForKey(event.key, session.vocabulary);
    if (action === null) return;
    event.preventDefault();
    void act(action);
  });
}

async function start(): Promise<void> {
  wire();
  render();
  await session.load();
  render();
}

document.addEventListener("DOMContentLoaded", () => {
  void start();
});
