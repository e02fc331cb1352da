/**
 * Thin client for the audit service's HTTP endpoints.
 *
 * Every function takes an injectable fetch so tests can stub the network.
 */

import type {
  FetchLike,
  JudgmentBody,
  NextTask,
  TaskWire,
  UiTaskView,
  Verdict,
} from "./types.js";
import { FIELD_LABELS, VERDICTS } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function asVerdict(value: string | undefined): Verdict | null {
  return (VERDICTS as readonly string[]).includes(value ?? "") ? (value as Verdict) : null;
}

/** Map the wire payload to the render model, preserving field order. */
export function viewFromWire(wire: TaskWire): UiTaskView {
  return {
    taskId: wire.taskId,
    audioUrl: wire.mediaUrl,
    fields: wire.fields.map(([path, value]) => ({
      path,
      label: FIELD_LABELS[path] ?? path,
      value,
      verdict: asVerdict(wire.currentVerdicts[path]),
    })),
    progress: wire.progress,
  };
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

export async function fetchNextTask(
  baseUrl: string,
  annotatorId: string,
  fetchImpl: FetchLike,
): Promise<NextTask> {
  const url = `${baseUrl}/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`;
  const response = await fetchImpl(url);
  if (response.status === 204) return { kind: "done" };
  if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
  const wire = (await response.json()) as TaskWire;
  return { kind: "task", view: viewFromWire(wire) };
}

export async function postJudgment(
  baseUrl: string,
  body: JudgmentBody,
  fetchImpl: FetchLike,
): Promise<void> {
  const response = await fetchImpl(`${baseUrl}/api/judgments`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) throw new ApiError(response.status, await errorDetail(response));
}

/**
 * Post one judgment per field and report which field paths failed.
 *
 * Judgments are idempotent overwrites server-side, so callers retry by
 * resending exactly the returned paths.
 */
export async function submitJudgments(
  baseUrl: string,
  bodies: JudgmentBody[],
  fetchImpl: FetchLike,
): Promise<string[]> {
  const outcomes = await Promise.allSettled(
    bodies.map((body) => postJudgment(baseUrl, body, fetchImpl)),
  );
  const failed: string[] = [];
  outcomes.forEach((outcome, index) => {
    if (outcome.status === "rejected") failed.push(bodies[index]!.fieldPath);
  });
  return failed;
}
