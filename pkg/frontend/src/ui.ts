/**
 * DOM layer: trajectory browser and step reviewer. All mutations go through
 * the ApiClient; keyboard shortcuts keep annotation throughput high
 * (r = right, w = wrong, f = flip judge label, enter = submit refinement).
 */

import { ApiClient, ApiError, TrajectoryDetail, Verdict } from "./api.js";
import {
  MODULE_GUIDANCE,
  allAnnotated,
  annotatedCount,
  flippedJudgeLabel,
  llmStepIndices,
  nextUnannotated,
  prepareSubmission,
} from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class Console {
  private root: HTMLElement;
  private client: ApiClient;
  private detail: TrajectoryDetail | null = null;
  private currentStep: number | null = null;
  private goldAnswers = new Map<string, string>(); // question_id -> answer
  private keyHandler = (e: KeyboardEvent) => this.onKey(e);

  constructor(root: HTMLElement, client: ApiClient) {
    this.root = root;
    this.client = client;
    document.addEventListener("keydown", this.keyHandler);
  }

  async showBrowser(): Promise<void> {
    this.detail = null;
    this.currentStep = null;
    this.root.replaceChildren(el("p", "status", "loading pending trajectories..."));
    let list;
    try {
      list = await this.client.listTrajectories("pending");
    } catch (err) {
      this.showRetryBanner(err, () => this.showBrowser());
      return;
    }
    const container = el("div", "browser");
    container.append(el("h1", undefined, "Pending trajectories"));
    container.append(this.goldLoader());
    if (list.items.length === 0) {
      container.append(el("p", "empty", "Queue is empty: nothing awaits annotation."));
    }
    for (const item of list.items) {
      const row = el("div", "traj-row");
      const progress = el("span", "badge", `${item.annotated}/${item.llm_steps}`);
      const label = el("span", "question", item.question || item.question_id);
      row.append(progress, label);
      row.addEventListener("click", () => this.openTrajectory(item.trajectory_id));
      container.append(row);
    }
    this.root.replaceChildren(container);
  }

  /** Optional gold-annotation file: pre-fills complete-step refinements. */
  private goldLoader(): HTMLElement {
    const wrap = el("div", "gold-loader");
    const label = el(
      "label",
      undefined,
      this.goldAnswers.size
        ? `gold answers loaded for ${this.goldAnswers.size} questions `
        : "load gold answers (optional) ",
    );
    const input = el("input") as HTMLInputElement;
    input.type = "file";
    input.accept = ".jsonl,.json";
    input.addEventListener("change", async () => {
      const file = input.files?.[0];
      if (!file) return;
      const text = await file.text();
      for (const line of text.split("\n")) {
        if (!line.trim()) continue;
        try {
          const record = JSON.parse(line);
          if (record.question_id && record.answer !== undefined) {
            this.goldAnswers.set(record.question_id, String(record.answer));
          }
        } catch {
          /* skip malformed lines */
        }
      }
      label.textContent = `gold answers loaded for ${this.goldAnswers.size} questions `;
    });
    label.append(input);
    wrap.append(label);
    return wrap;
  }

  async openTrajectory(id: string): Promise<void> {
    try {
      this.detail = await this.client.getTrajectory(id);
    } catch (err) {
      this.showRetryBanner(err, () => this.openTrajectory(id));
      return;
    }
    this.currentStep = nextUnannotated(this.detail) ?? llmStepIndices(this.detail.steps)[0];
    this.renderReviewer();
  }

  private renderReviewer(): void {
    const detail = this.detail;
    if (!detail || this.currentStep === null) return;
    const step = detail.steps[this.currentStep];
    const container = el("div", "reviewer");

    const header = el("div", "header");
    const back = el("button", "back", "< list");
    back.addEventListener("click", () => this.showBrowser());
    header.append(
      back,
      el("h2", undefined, detail.question),
      el(
        "span",
        "progress",
        `annotated ${annotatedCount(detail)} of ${llmStepIndices(detail.steps).length} steps`,
      ),
    );
    container.append(header);

    const stepBox = el("div", "step");
    stepBox.append(
      el("h3", undefined, `step ${this.currentStep}: ${step.module} (${step.state})`),
      el("p", "guidance", MODULE_GUIDANCE[step.module] ?? ""),
    );
    const render = el("pre", "input-render");
    render.textContent = step.input_render; // exactly what the model saw
    stepBox.append(el("h4", undefined, "Module input"), render);

    const output = el("pre", "raw-output");
    if (step.token && step.raw_output.startsWith(step.token)) {
      const tokenSpan = el("span", "branch-token", step.token);
      output.append(tokenSpan, document.createTextNode(step.raw_output.slice(step.token.length)));
    } else {
      output.textContent = step.raw_output;
    }
    stepBox.append(el("h4", undefined, "Module output"), output);

    const existing = detail.feedback[String(this.currentStep)];
    if (existing) {
      stepBox.append(
        el(
          "p",
          "existing",
          `current verdict: ${existing.verdict}` +
            (existing.refinement ? ` -> ${existing.refinement}` : ""),
        ),
      );
    }

    const controls = el("div", "controls");
    const rightBtn = el("button", "right", "right (r)");
    rightBtn.addEventListener("click", () => this.submit("right"));
    const wrongBtn = el("button", "wrong", "wrong (w)");
    wrongBtn.addEventListener("click", () => this.submit("wrong"));
    controls.append(rightBtn, wrongBtn);

    if (step.module === "judge") {
      const flipBtn = el("button", "flip", `refine: ${flippedJudgeLabel(step.raw_output)} (f)`);
      flipBtn.addEventListener("click", () =>
        this.submit("refine", flippedJudgeLabel(step.raw_output)),
      );
      controls.append(flipBtn);
    } else {
      const refineBox = el("input", "refine-text") as HTMLInputElement;
      refineBox.placeholder =
        step.module === "complete" ? "corrected final answer" : "corrected output";
      refineBox.id = "refine-input";
      const gold = this.goldAnswers.get(detail.question_id);
      if (step.module === "complete" && gold !== undefined) {
        refineBox.value = gold;
      }
      const refineBtn = el("button", "refine", "refine (enter)");
      refineBtn.addEventListener("click", () => this.submit("refine", refineBox.value));
      refineBox.addEventListener("keydown", (e) => {
        if (e.key === "Enter") this.submit("refine", refineBox.value);
        e.stopPropagation();
      });
      controls.append(refineBox, refineBtn);
    }
    stepBox.append(controls);

    const nav = el("div", "nav");
    for (const i of llmStepIndices(detail.steps)) {
      const dot = el(
        "button",
        detail.feedback[String(i)] ? "dot done" : "dot",
        String(i),
      );
      if (i === this.currentStep) dot.classList.add("current");
      dot.addEventListener("click", () => {
        this.currentStep = i;
        this.renderReviewer();
      });
      nav.append(dot);
    }
    stepBox.append(nav);

    const finalize = el(
      "button",
      "finalize",
      allAnnotated(detail) ? "finalize trajectory" : "finalize (steps pending)",
    );
    (finalize as HTMLButtonElement).disabled = !allAnnotated(detail);
    finalize.addEventListener("click", () => this.finalize());
    stepBox.append(finalize);

    container.append(stepBox);
    const error = el("p", "error");
    error.id = "inline-error";
    container.append(error);
    this.root.replaceChildren(container);
  }

  private async submit(verdict: Verdict, refinement?: string): Promise<void> {
    const detail = this.detail;
    if (!detail || this.currentStep === null) return;
    const step = detail.steps[this.currentStep];
    const prepared = prepareSubmission(step, this.currentStep, verdict, refinement);
    if (typeof prepared === "string") {
      this.showInlineError(prepared);
      return;
    }
    try {
      await this.client.submitFeedback(
        detail.trajectory_id,
        prepared.stepIndex,
        prepared.verdict,
        prepared.refinement,
      );
    } catch (err) {
      // 409 means someone else wrote this step: refresh to show the truth
      if (err instanceof ApiError && err.status === 409) {
        await this.openTrajectory(detail.trajectory_id);
        return;
      }
      this.showInlineError(err instanceof Error ? err.message : String(err));
      return;
    }
    detail.feedback[String(prepared.stepIndex)] = {
      verdict: prepared.verdict,
      refinement: prepared.refinement ?? null,
    };
    const next = nextUnannotated(detail, prepared.stepIndex);
    this.currentStep = next ?? prepared.stepIndex;
    this.renderReviewer();
  }

  private async finalize(): Promise<void> {
    const detail = this.detail;
    if (!detail) return;
    try {
      await this.client.finalize(detail.trajectory_id);
    } catch (err) {
      this.showInlineError(err instanceof Error ? err.message : String(err));
      return;
    }
    await this.showBrowser();
  }

  private onKey(e: KeyboardEvent): void {
    if (!this.detail || this.currentStep === null) return;
    if ((e.target as HTMLElement | null)?.tagName === "INPUT") return;
    const step = this.detail.steps[this.currentStep];
    if (e.key === "r") this.submit("right");
    else if (e.key === "w") this.submit("wrong");
    else if (e.key === "f" && step.module === "judge") {
      this.submit("refine", flippedJudgeLabel(step.raw_output));
    }
  }

  private showInlineError(message: string): void {
    const node = document.getElementById("inline-error");
    if (node) node.textContent = message;
  }

  private showRetryBanner(err: unknown, retry: () => void): void {
    const banner = el("div", "retry-banner");
    banner.append(
      el("p", undefined, `gateway unreachable: ${err instanceof Error ? err.message : err}`),
    );
    const btn = el("button", undefined, "retry");
    btn.addEventListener("click", retry);
    banner.append(btn);
    this.root.replaceChildren(banner);
  }
}
