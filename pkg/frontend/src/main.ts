/**
 * Browser entry point: a minimal annotation workbench.
 *
 * Connect to a running service, pick an annotation tier, see the waveform
 * with segment lanes under it, drag edges, relabel with digit hotkeys,
 * sweep the confidence slider, and fire the CML actions. All state flows
 * through the pure modules; this file only wires DOM events to them.
 */

import { ServiceClient } from "./api";
import { completeTier, confusionHeatmap, runJob } from "./cml";
import { flaggedSegments, highlightOpacity } from "./confidence";
import { TierEditor, hotkeyClass } from "./editing";
import { TimelineView, hitTest } from "./timeline";
import { WaveformLoader } from "./waveform";
import type { EvaluationResult, SchemeDoc, Tier } from "./types";

interface AppState {
  client: ServiceClient;
  editor: TierEditor;
  user: string;
  tier: Tier | null;
  scheme: SchemeDoc | null;
  view: TimelineView;
  waveform: WaveformLoader | null;
  selected: number | null;
  drag: { index: number; side: "left" | "right" } | null;
}

const WIDTH = 960;
const WAVE_HEIGHT = 120;
const LANE_HEIGHT = 42;

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function status(text: string, isError = false): void {
  const bar = element<HTMLDivElement>("status");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

async function refreshTier(state: AppState, tierId: string): Promise<void> {
  state.tier = await state.client.tier(tierId);
  state.scheme = await state.client.scheme(state.tier.header.scheme);
  render(state);
}

function classColor(state: AppState, classId: number): string {
  const entry = state.scheme?.classes.find((c) => c.id === classId);
  return entry?.color ?? "#999999";
}

async function render(state: AppState): Promise<void> {
  const canvas = element<HTMLCanvasElement>("timeline");
  const context = canvas.getContext("2d");
  if (!context || !state.tier) return;
  context.clearRect(0, 0, canvas.width, canvas.height);

  if (state.waveform) {
    try {
      const peaks = await state.waveform.peaks(
        state.view.zoom.startS, state.view.zoom.endS, WIDTH);
      context.fillStyle = "#3a6ea5";
      peaks.forEach((peak, x) => {
        const mid = WAVE_HEIGHT / 2;
        const top = mid - peak.max * mid;
        const bottom = mid - peak.min * mid;
        context.fillRect(x, top, 1, Math.max(1, bottom - top));
      });
    } catch {
      context.fillText("waveform unavailable", 8, 20);
    }
  }

  const threshold = state.view.confidenceThreshold;
  const laneTop = WAVE_HEIGHT + 8;
  for (const index of state.view.visibleSegments(state.tier.segments)) {
    const segment = state.tier.segments[index];
    const x0 = state.view.timeToPixel(segment.from);
    const x1 = state.view.timeToPixel(segment.to);
    context.fillStyle = classColor(state, segment.id);
    context.fillRect(x0, laneTop, Math.max(1, x1 - x0), LANE_HEIGHT);
    const opacity = highlightOpacity(segment, threshold, "binary");
    if (opacity > 0) {
      context.fillStyle = `rgba(220, 40, 40, ${0.45 * opacity})`;
      for (let x = x0; x < x1; x += 6) {
        context.fillRect(x, laneTop, 3, LANE_HEIGHT);
      }
    }
    if (index === state.selected) {
      context.strokeStyle = "#111";
      context.lineWidth = 2;
      context.strokeRect(x0, laneTop, x1 - x0, LANE_HEIGHT);
    }
  }

  const playheadX = state.view.timeToPixel(state.view.playheadS);
  context.strokeStyle = "#d02020";
  context.beginPath();
  context.moveTo(playheadX, 0);
  context.lineTo(playheadX, laneTop + LANE_HEIGHT);
  context.stroke();

  const flagged = flaggedSegments(state.tier.segments, threshold).flagged.length;
  element<HTMLSpanElement>("flag-count").textContent =
    `${flagged} segment(s) below ${threshold.toFixed(2)}`;
}

function renderConfusion(result: EvaluationResult): void {
  const heatmap = confusionHeatmap(result);
  const table = element<HTMLTableElement>("confusion");
  table.innerHTML = "";
  const head = table.insertRow();
  head.insertCell().textContent = "truth \\ pred";
  heatmap.labels.forEach((label) => (head.insertCell().textContent = label));
  head.insertCell().textContent = "recall";
  heatmap.labels.forEach((label, row) => {
    const tr = table.insertRow();
    tr.insertCell().textContent = label;
    heatmap.labels.forEach((_, column) => {
      const cell = heatmap.cells.find((c) => c.row === row && c.column === column);
      const td = tr.insertCell();
      td.textContent = String(cell?.count ?? 0);
      td.style.background = `rgba(58, 110, 165, ${cell?.intensity ?? 0})`;
    });
    const recall = heatmap.recalls[row];
    tr.insertCell().textContent = recall === null ? "-" : recall.toFixed(3);
  });
  status(`evaluation UA ${heatmap.ua.toFixed(3)}`);
}

export function boot(): void {
  const connect = element<HTMLButtonElement>("connect");
  connect.addEventListener("click", async () => {
    const base = element<HTMLInputElement>("base-url").value;
    const token = element<HTMLInputElement>("token").value;
    const db = element<HTMLInputElement>("db").value;
    const user = element<HTMLInputElement>("user").value;
    const client = new ServiceClient(base, token, db);
    const state: AppState = {
      client,
      editor: new TierEditor(client, user),
      user,
      tier: null,
      scheme: null,
      view: new TimelineView(60, WIDTH),
      waveform: null,
      selected: null,
      drag: null,
    };
    try {
      const ids = await client.listIds("annotations");
      const picker = element<HTMLSelectElement>("tier-picker");
      picker.innerHTML = "";
      ids.forEach((id) => picker.add(new Option(id, id)));
      status(`connected, ${ids.length} annotation(s)`);
      wire(state);
    } catch (error) {
      status(`connect failed: ${(error as Error).message}`, true);
    }
  });
}

function wire(state: AppState): void {
  const canvas = element<HTMLCanvasElement>("timeline");
  const picker = element<HTMLSelectElement>("tier-picker");
  const slider = element<HTMLInputElement>("threshold");

  picker.addEventListener("change", async () => {
    await refreshTier(state, picker.value);
    const streamId = element<HTMLInputElement>("stream-id").value;
    state.waveform = streamId ? new WaveformLoader(state.client, streamId) : null;
    status(`loaded ${picker.value}`);
  });

  slider.addEventListener("input", () => {
    state.view.confidenceThreshold = Number(slider.value);
    render(state);
  });

  canvas.addEventListener("pointerdown", (event) => {
    if (!state.tier) return;
    const time = state.view.pixelToTime(event.offsetX);
    const hit = hitTest(state.tier.segments, time,
                        state.view.pixelToTime(6) - state.view.pixelToTime(0));
    if (hit.kind === "edge") {
      state.drag = { index: hit.index, side: hit.side };
    } else if (hit.kind === "segment") {
      state.selected = hit.index;
      render(state);
    } else {
      state.view.playheadS = time;
      render(state);
    }
  });

  canvas.addEventListener("pointerup", async (event) => {
    if (!state.tier || !state.drag) return;
    const drag = state.drag;
    state.drag = null;
    const outcome = await state.editor.edit(state.tier, {
      kind: "resize", index: drag.index, side: drag.side,
      toTime: state.view.pixelToTime(event.offsetX),
    });
    if (outcome.error) {
      status(outcome.error, true);
    } else {
      state.tier = outcome.tier;
      if (outcome.switchedToCopy) status(`editing your copy ${outcome.tier.id}`);
    }
    render(state);
  });

  window.addEventListener("keydown", async (event) => {
    if (!state.tier || !state.scheme || state.selected === null) return;
    if (event.key >= "1" && event.key <= "9") {
      const classId = hotkeyClass(state.scheme, Number(event.key));
      if (classId === null) return;
      const outcome = await state.editor.edit(state.tier, {
        kind: "relabel", index: state.selected, classId,
      });
      outcome.error ? status(outcome.error, true) : (state.tier = outcome.tier);
      render(state);
    }
    if (event.key === "Delete" || event.key === "Backspace") {
      const outcome = await state.editor.edit(state.tier, {
        kind: "delete", index: state.selected,
      });
      outcome.error ? status(outcome.error, true) : (state.tier = outcome.tier);
      state.selected = null;
      render(state);
    }
  });

  element<HTMLButtonElement>("complete").addEventListener("click", async () => {
    if (!state.tier) return;
    status("completing session...");
    const { job, tier } = await completeTier(
      state.client, state.tier, state.view.confidenceThreshold,
      ({ state: jobState }) => status(`complete: ${jobState.status}`));
    if (job.status === "failed" || !tier) {
      status(`completion failed: ${job.error}`, true);
      return;
    }
    state.tier = tier;
    status(`completed into ${tier.id}`);
    render(state);
  });

  element<HTMLButtonElement>("evaluate").addEventListener("click", async () => {
    if (!state.tier) return;
    const params = {
      model: element<HTMLInputElement>("model-ref").value,
      sessions: [state.tier.header.session],
      scheme: state.tier.header.scheme,
      role: state.tier.header.role,
      annotator: state.tier.header.annotator,
    };
    const job = await runJob(state.client, "evaluate", params,
                             ({ state: jobState }) => status(`evaluate: ${jobState.status}`));
    if (job.status === "done" && job.result) {
      renderConfusion(job.result as unknown as EvaluationResult);
    } else {
      status(`evaluation failed: ${job.error}`, true);
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("connect")) {
  boot();
}
