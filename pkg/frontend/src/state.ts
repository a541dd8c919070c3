/**
 * Annotation-session logic, kept free of DOM so it is unit-testable:
 * which step to review next, per-module review guidance and refinement
 * rules, and client-side validation of refinement text.
 */

import type { Step, StepFeedback, TrajectoryDetail, Verdict } from "./api.js";

/** Review guidance shown to the annotator, per LLM module. */
export const MODULE_GUIDANCE: Record<string, string> = {
  decompose:
    "[Next] q: right if q is a reasonable next sub-query for solving the main question. " +
    "[Finish]: right if no more sub-queries are required. Refine by typing a better output.",
  judge:
    "Right if the emitted label matches whether the snippet's document is relevant " +
    "to the sub-query; otherwise submit the opposite label.",
  answer:
    "[Answerable]: right if the answer is correct for the sub-query and evidenced by the " +
    "cited passage. [Unanswerable]: right if the passages cannot answer it.",
  complete:
    "Right if the evidence passages support this final answer; refine with the correct " +
    "answer if the evidence supports a different one.",
};

/** Branch tokens a refinement must start with, per module; complete is free text. */
export const REFINEMENT_TOKENS: Record<string, string[]> = {
  decompose: ["[Next]", "[Finish]"],
  judge: ["[Relevant]", "[Irrelevant]"],
  answer: ["[Answerable]", "[Unanswerable]"],
  complete: [],
};

export function llmStepIndices(steps: Step[]): number[] {
  const out: number[] = [];
  steps.forEach((s, i) => {
    if (s.is_llm) out.push(i);
  });
  return out;
}

export function annotatedCount(detail: TrajectoryDetail): number {
  return llmStepIndices(detail.steps).filter((i) => detail.feedback[String(i)] !== undefined)
    .length;
}

/** First LLM step without feedback, or null when fully annotated. */
export function nextUnannotated(detail: TrajectoryDetail, after = -1): number | null {
  for (const i of llmStepIndices(detail.steps)) {
    if (i > after && detail.feedback[String(i)] === undefined) return i;
  }
  return null;
}

export function allAnnotated(detail: TrajectoryDetail): boolean {
  return nextUnannotated(detail) === null;
}

/** The flipped judge label, used as the judge refinement shortcut. */
export function flippedJudgeLabel(rawOutput: string): string {
  if (rawOutput.trim().startsWith("[Relevant]")) return "[Irrelevant]";
  if (rawOutput.trim().startsWith("[Irrelevant]")) return "[Relevant]";
  throw new Error(`not a judge output: ${rawOutput.slice(0, 40)}`);
}

/**
 * Client-side refinement validation: token-bearing modules must start with
 * a legal branch token; free-text modules just need non-empty text.
 */
export function validateRefinement(module: string, text: string): string | null {
  if (!text.trim()) return "refinement text is empty";
  const tokens = REFINEMENT_TOKENS[module];
  if (tokens === undefined) return `unknown module: ${module}`;
  if (tokens.length === 0) return null;
  if (!tokens.some((t) => text.trim().startsWith(t))) {
    return `${module} refinement must start with one of: ${tokens.join(", ")}`;
  }
  return null;
}

export interface PendingSubmission {
  stepIndex: number;
  verdict: Verdict;
  refinement?: string;
}

/** Validate and shape a submission; returns an error message or the payload. */
export function prepareSubmission(
  step: Step,
  stepIndex: number,
  verdict: Verdict,
  refinement?: string,
): PendingSubmission | string {
  if (!step.is_llm) return "tool steps are not annotated";
  if (verdict === "refine") {
    const problem = validateRefinement(step.module, refinement ?? "");
    if (problem) return problem;
    return { stepIndex, verdict, refinement: refinement?.trim() };
  }
  return { stepIndex, verdict };
}

/** Local echo of a submission, so the UI advances without a refetch. */
export function applyFeedbackLocally(
  detail: TrajectoryDetail,
  submission: PendingSubmission,
): TrajectoryDetail {
  const feedback: Record<string, StepFeedback> = {
    ...detail.feedback,
    [String(submission.stepIndex)]: {
      verdict: submission.verdict,
      refinement: submission.refinement ?? null,
    },
  };
  return { ...detail, feedback };
}
