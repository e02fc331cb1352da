/**
 * Annotation console page logic.
 *
 * One task at a time: audio on top, nine field rows below, each with three
 * mutually exclusive verdict buttons. Submit stays disabled until every row
 * has a verdict; a failed submit can be retried and resends only the
 * judgments that did not reach the server.
 */

import { fetchNextTask, submitJudgments } from "./api.js";
import type {
  FetchLike,
  JudgmentBody,
  KeyValueStore,
  UiTaskView,
  Verdict,
} from "./types.js";
import { VERDICTS } from "./types.js";

export const ANNOTATOR_STORAGE_KEY = "uas.annotatorId";

export function allJudged(view: UiTaskView): boolean {
  return view.fields.every((field) => field.verdict !== null);
}

export function withVerdict(view: UiTaskView, path: string, verdict: Verdict): UiTaskView {
  return {
    ...view,
    fields: view.fields.map((field) =>
      field.path === path ? { ...field, verdict } : field,
    ),
  };
}

/** Bodies for the chosen verdicts; `only` restricts to a retry subset. */
export function judgmentBodies(
  view: UiTaskView,
  annotatorId: string,
  only?: readonly string[],
): JudgmentBody[] {
  const wanted = only === undefined ? null : new Set(only);
  const bodies: JudgmentBody[] = [];
  for (const field of view.fields) {
    if (field.verdict === null) continue;
    if (wanted !== null && !wanted.has(field.path)) continue;
    bodies.push({
      taskId: view.taskId,
      annotatorId,
      fieldPath: field.path,
      verdict: field.verdict,
    });
  }
  return bodies;
}

export interface AppOptions {
  fetchImpl?: FetchLike;
  storage?: KeyValueStore;
}

type Banner = { text: string; retry: () => void } | null;

export class AnnotationApp {
  private readonly fetchImpl: FetchLike;
  private readonly storage: KeyValueStore | null;
  private annotatorId: string | null = null;
  private view: UiTaskView | null = null;
  private done = false;
  private banner: Banner = null;
  private failedPaths: string[] | null = null;
  private submitting = false;
  private touched = false;
  private pending: Promise<void> = Promise.resolve();

  constructor(
    private readonly root: HTMLElement,
    private readonly baseUrl: string = "",
    options: AppOptions = {},
  ) {
    this.fetchImpl =
      options.fetchImpl ?? ((input, init) => globalThis.fetch(input, init));
    this.storage = options.storage ?? root.ownerDocument.defaultView?.localStorage ?? null;
    const win = root.ownerDocument.defaultView;
    win?.addEventListener("beforeunload", (event) => {
      if (this.touched) {
        // unsubmitted verdicts live only in the page
        event.preventDefault();
      }
    });
  }

  /** Resolves when every action started so far has settled. */
  settled(): Promise<void> {
    return this.pending;
  }

  hasUnsubmittedVerdicts(): boolean {
    return this.touched;
  }

  start(): Promise<void> {
    this.annotatorId = this.storage?.getItem(ANNOTATOR_STORAGE_KEY) ?? null;
    if (this.annotatorId) return this.loadNext();
    this.render();
    return this.pending;
  }

  private track(operation: () => Promise<void>): Promise<void> {
    const next = this.pending.then(operation);
    this.pending = next.catch(() => undefined);
    return this.pending;
  }

  private loadNext(): Promise<void> {
    return this.track(async () => {
      this.banner = null;
      this.view = null;
      this.done = false;
      this.failedPaths = null;
      this.touched = false;
      try {
        const next = await fetchNextTask(this.baseUrl, this.annotatorId ?? "", this.fetchImpl);
        if (next.kind === "done") {
          this.done = true;
        } else {
          this.view = next.view;
        }
      } catch {
        this.banner = {
          text: "Could not reach the annotation service.",
          retry: () => void this.loadNext(),
        };
      }
      this.render();
    });
  }

  private identify(id: string): void {
    const trimmed = id.trim();
    if (!trimmed) return;
    this.annotatorId = trimmed;
    this.storage?.setItem(ANNOTATOR_STORAGE_KEY, trimmed);
    void this.loadNext();
  }

  private switchAnnotator(): void {
    this.storage?.removeItem(ANNOTATOR_STORAGE_KEY);
    this.annotatorId = null;
    this.view = null;
    this.done = false;
    this.banner = null;
    this.touched = false;
    this.render();
  }

  private chooseVerdict(path: string, verdict: Verdict): void {
    if (!this.view || this.submitting) return;
    this.view = withVerdict(this.view, path, verdict);
    this.touched = true;
    this.render();
  }

  private submit(): Promise<void> {
    return this.track(async () => {
      if (!this.view || !this.annotatorId || this.submitting) return;
      if (!allJudged(this.view)) return;
      this.submitting = true;
      this.banner = null;
      this.render();
      const bodies = judgmentBodies(this.view, this.annotatorId, this.failedPaths ?? undefined);
      const failed = await submitJudgments(this.baseUrl, bodies, this.fetchImpl);
      this.submitting = false;
      if (failed.length > 0) {
        this.failedPaths = failed;
        this.banner = {
          text: `${failed.length} of ${bodies.length} judgments did not reach the server.`,
          retry: () => void this.submit(),
        };
        this.render();
        return;
      }
      this.failedPaths = null;
      this.touched = false;
      await this.loadNextInline();
    });
  }

  // loadNext without re-entering track(), for use inside a tracked action
  private async loadNextInline(): Promise<void> {
    this.banner = null;
    this.view = null;
    try {
      const next = await fetchNextTask(this.baseUrl, this.annotatorId ?? "", this.fetchImpl);
      if (next.kind === "done") {
        this.done = true;
      } else {
        this.view = next.view;
      }
    } catch {
      this.banner = {
        text: "Could not reach the annotation service.",
        retry: () => void this.loadNext(),
      };
    }
    this.render();
  }

  // --- rendering -----------------------------------------------------------

  private render(): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    this.root.appendChild(this.renderMasthead(doc));
    if (this.banner) this.root.appendChild(this.renderBanner(doc, this.banner));
    if (!this.annotatorId) {
      this.root.appendChild(this.renderIdentify(doc));
    } else if (this.done) {
      this.root.appendChild(this.renderCompletion(doc));
    } else if (this.view) {
      this.root.appendChild(this.renderTask(doc, this.view));
    }
  }

  private renderMasthead(doc: Document): HTMLElement {
    const header = doc.createElement("header");
    header.className = "masthead";
    const title = doc.createElement("h1");
    title.textContent = "Audio annotation console";
    header.appendChild(title);
    if (this.annotatorId) {
      const line = doc.createElement("div");
      line.className = "annotator-line";
      line.append(`Annotator: ${this.annotatorId} `);
      const change = doc.createElement("button");
      change.type = "button";
      change.className = "switch-annotator";
      change.textContent = "switch";
      change.addEventListener("click", () => this.switchAnnotator());
      line.appendChild(change);
      header.appendChild(line);
    }
    return header;
  }

  private renderBanner(doc: Document, banner: { text: string; retry: () => void }): HTMLElement {
    const box = doc.createElement("div");
    box.className = "banner";
    box.setAttribute("role", "alert");
    const text = doc.createElement("span");
    text.textContent = banner.text;
    const retry = doc.createElement("button");
    retry.type = "button";
    retry.className = "retry-button";
    retry.textContent = "Retry";
    retry.addEventListener("click", banner.retry);
    box.append(text, retry);
    return box;
  }

  private renderIdentify(doc: Document): HTMLElement {
    const form = doc.createElement("form");
    form.className = "identify";
    form.id = "annotator-form";
    const label = doc.createElement("label");
    label.htmlFor = "annotator-input";
    label.textContent = "Who is annotating?";
    const input = doc.createElement("input");
    input.id = "annotator-input";
    input.name = "annotator";
    input.placeholder = "annotator id";
    input.autocomplete = "off";
    const button = doc.createElement("button");
    button.type = "submit";
    button.textContent = "Start annotating";
    form.append(label, input, button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      this.identify(input.value);
    });
    return form;
  }

  private renderCompletion(doc: Document): HTMLElement {
    const box = doc.createElement("section");
    box.className = "completion";
    const heading = doc.createElement("h2");
    heading.textContent = "All tasks complete";
    const detail = doc.createElement("p");
    detail.textContent = "Every assigned task has all nine verdicts. Thank you.";
    box.append(heading, detail);
    return box;
  }

  private renderTask(doc: Document, view: UiTaskView): HTMLElement {
    const section = doc.createElement("section");
    section.className = "task";
    section.dataset.taskId = view.taskId;

    const progress = doc.createElement("p");
    progress.className = "progress";
    progress.textContent =
      `Task ${Math.min(view.progress.judgedTasks + 1, view.progress.totalTasks)} ` +
      `of ${view.progress.totalTasks}`;
    section.appendChild(progress);

    const player = doc.createElement("div");
    player.className = "player-card";
    const audio = doc.createElement("audio");
    audio.controls = true;
    audio.preload = "none";
    audio.src = this.baseUrl + view.audioUrl;
    player.appendChild(audio);
    section.appendChild(player);

    const table = doc.createElement("div");
    table.className = "field-table";
    for (const field of view.fields) {
      table.appendChild(this.renderFieldRow(doc, field.path, field.label, field.value, field.verdict));
    }
    section.appendChild(table);

    const submitRow = doc.createElement("div");
    submitRow.className = "submit-row";
    const submit = doc.createElement("button");
    submit.type = "button";
    submit.className = "submit-button";
    submit.id = "submit-button";
    submit.textContent = this.submitting ? "Submitting…" : "Submit judgments";
    submit.disabled = !allJudged(view) || this.submitting;
    submit.addEventListener("click", () => void this.submit());
    submitRow.appendChild(submit);
    section.appendChild(submitRow);

    if (this.touched) {
      const hint = doc.createElement("p");
      hint.className = "unsaved-hint";
      hint.textContent = "Verdicts are saved when you submit; reloading now would discard them.";
      section.appendChild(hint);
    }
    return section;
  }

  private renderFieldRow(
    doc: Document,
    path: string,
    label: string,
    value: string,
    verdict: Verdict | null,
  ): HTMLElement {
    const row = doc.createElement("div");
    row.className = "field-row";
    row.dataset.fieldPath = path;

    const name = doc.createElement("span");
    name.className = "field-label";
    name.textContent = label;

    const shown = doc.createElement("span");
    shown.className = value === "null" ? "field-value is-null" : "field-value";
    shown.textContent = value;

    const group = doc.createElement("div");
    group.className = "verdict-group";
    for (const candidate of VERDICTS) {
      const button = doc.createElement("button");
      button.type = "button";
      button.className = "verdict-button";
      button.textContent = candidate;
      button.dataset.verdict = candidate;
      button.dataset.selected = String(candidate === verdict);
      button.addEventListener("click", () => this.chooseVerdict(path, candidate));
      group.appendChild(button);
    }

    row.append(name, shown, group);
    return row;
  }
}
