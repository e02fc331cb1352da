/**
 * Shared types for the annotation console.
 *
 * The wire shapes mirror the audit service's JSON exactly; the view shapes
 * are what the page renders from.
 */

export type Verdict = "Correct" | "Incorrect" | "Unsure";

export const VERDICTS: readonly Verdict[] = ["Correct", "Incorrect", "Unsure"];

/** Display names in the service's canonical nine-field order. */
export const FIELD_LABELS: Record<string, string> = {
  "paralinguistics.age": "Age",
  "paralinguistics.gender": "Gender",
  "paralinguistics.emotion": "Emotion",
  "paralinguistics.accent": "Accent",
  "paralinguistics.prosody": "Prosody",
  "paralinguistics.timbre": "Timbre",
  "nonLinguisticEvents.description": "Description",
  "nonLinguisticEvents.discreteEvents": "Discrete Events",
  "nonLinguisticEvents.continuousEvents": "Continuous Events",
};

export interface TaskProgress {
  judgedTasks: number;
  totalTasks: number;
}

/** GET /api/tasks/next 200 payload. */
export interface TaskWire {
  taskId: string;
  entryId: string;
  audioRef: string;
  fields: [string, string][];
  assignedAnnotators: string[];
  mediaUrl: string;
  currentVerdicts: Record<string, string>;
  progress: TaskProgress;
}

export interface TaskFieldView {
  path: string;
  label: string;
  value: string;
  verdict: Verdict | null;
}

export interface UiTaskView {
  taskId: string;
  audioUrl: string;
  fields: TaskFieldView[];
  progress: TaskProgress;
}

export type NextTask = { kind: "task"; view: UiTaskView } | { kind: "done" };

/** POST /api/judgments body. */
export interface JudgmentBody {
  taskId: string;
  annotatorId: string;
  fieldPath: string;
  verdict: Verdict;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The subset of Storage the app uses, so tests can pass a plain map. */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}
