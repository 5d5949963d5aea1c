/**
 * One-click CML actions: submit a job, poll its status, refresh the tier.
 *
 * Polling never blocks editing; callers get progress callbacks and the
 * final job state. Evaluation results are turned into a heatmap view model
 * for the confusion-matrix table.
 */

import { ServiceClient } from "./api";
import type { EvaluationResult, JobState, Tier } from "./types";

export type CmlAction = "complete" | "transfer" | "train" | "evaluate";

export interface JobProgress {
  state: JobState;
  elapsedMs: number;
}

export async function runJob(
  client: ServiceClient,
  action: CmlAction,
  params: Record<string, unknown>,
  onProgress?: (progress: JobProgress) => void,
  pollMs = 250,
  timeoutMs = 120_000,
): Promise<JobState> {
  const started = Date.now();
  const { id } = await client.submitJob(action, params);
  for (;;) {
    const state = await client.jobStatus(id);
    onProgress?.({ state, elapsedMs: Date.now() - started });
    if (state.status === "done" || state.status === "failed") {
      return state;
    }
    if (Date.now() - started > timeoutMs) {
      throw new Error(`job ${id} still ${state.status} after ${timeoutMs} ms`);
    }
    await new Promise((resolve) => setTimeout(resolve, pollMs));
  }
}

/** Complete a tier and return the refreshed result tier. */
export async function completeTier(
  client: ServiceClient,
  tier: Tier,
  threshold: number,
  onProgress?: (progress: JobProgress) => void,
): Promise<{ job: JobState; tier: Tier | null }> {
  const job = await runJob(client, "complete",
                           { annotation: tier.id, threshold }, onProgress);
  if (job.status !== "done" || !job.result) {
    return { job, tier: null };
  }
  const resultId = job.result["annotation"] as string;
  return { job, tier: await client.tier(resultId) };
}

export interface HeatmapCell {
  row: number;
  column: number;
  count: number;
  /** share of the row's mass, drives the cell shade */
  intensity: number;
}

export interface ConfusionHeatmap {
  labels: string[];
  cells: HeatmapCell[];
  recalls: (number | null)[];
  ua: number;
}

/** View model for rendering an evaluation as a shaded confusion table. */
export function confusionHeatmap(result: EvaluationResult): ConfusionHeatmap {
  const cells: HeatmapCell[] = [];
  result.counts.forEach((rowCounts, row) => {
    const total = rowCounts.reduce((a, b) => a + b, 0);
    rowCounts.forEach((count, column) => {
      cells.push({ row, column, count, intensity: total ? count / total : 0 });
    });
  });
  const recalls = result.class_ids.map((cid) => result.recalls[String(cid)] ?? null);
  return { labels: result.labels, cells, recalls, ua: result.ua };
}
