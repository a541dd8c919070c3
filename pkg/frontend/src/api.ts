/**
 * Typed client for the gateway's annotation API. This is the only channel
 * through which the console reads or mutates anything.
 */

export type Verdict = "right" | "wrong" | "refine";

export interface TrajectorySummary {
  trajectory_id: string;
  question_id: string;
  question: string;
  run_status: string;
  iteration: number | null;
  status: "pending" | "finalized" | "skipped";
  llm_steps: number;
  annotated: number;
}

export interface TrajectoryList {
  items: TrajectorySummary[];
  total: number;
  page: number;
  page_size: number;
}

export interface PassageRef {
  doc_id: string;
  index: number;
}

export interface StepSnapshot {
  history: [string, string][];
  evidence: PassageRef[];
  sub_query: string | null;
  snippet: PassageRef | null;
  passages: PassageRef[] | null;
}

export interface Step {
  state: string;
  module: string;
  input_render: string;
  raw_output: string;
  token: string;
  is_llm: boolean;
  payload: Record<string, unknown>;
  snapshot: StepSnapshot;
}

export interface StepFeedback {
  verdict: Verdict;
  refinement: string | null;
}

export interface TrajectoryDetail {
  trajectory_id: string;
  question_id: string;
  question: string;
  steps: Step[];
  final_answer: string;
  status: string;
  annotation: TrajectorySummary;
  feedback: Record<string, StepFeedback>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public body: unknown = null,
  ) {
    super(message);
  }
}

export interface ApiConfig {
  baseUrl: string;
  token?: string;
}

export class ApiClient {
  constructor(private config: ApiConfig) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.config.token) h["X-Auth-Token"] = this.config.token;
    return h;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(`${this.config.baseUrl}${path}`, init);
    const text = await resp.text();
    let body: unknown = text;
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      /* non-JSON body, keep the text */
    }
    if (!resp.ok) {
      const detail =
        body && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : resp.statusText;
      throw new ApiError(resp.status, detail, body);
    }
    return body as T;
  }

  listTrajectories(status = "pending", page = 1, pageSize = 50): Promise<TrajectoryList> {
    return this.request(
      `/api/trajectories?status=${encodeURIComponent(status)}&page=${page}&page_size=${pageSize}`,
    );
  }

  getTrajectory(id: string): Promise<TrajectoryDetail> {
    return this.request(`/api/trajectories/${encodeURIComponent(id)}`);
  }

  submitFeedback(
    id: string,
    stepIndex: number,
    verdict: Verdict,
    refinement?: string,
  ): Promise<{ ok: boolean; seq: number }> {
    return this.request(
      `/api/trajectories/${encodeURIComponent(id)}/steps/${stepIndex}/feedback`,
      {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ verdict, refinement: refinement ?? null }),
      },
    );
  }

  finalize(id: string): Promise<{ ok: boolean }> {
    return this.request(`/api/trajectories/${encodeURIComponent(id)}/finalize`, {
      method: "POST",
      headers: this.headers(),
    });
  }

  skip(id: string): Promise<{ ok: boolean }> {
    return this.request(`/api/trajectories/${encodeURIComponent(id)}/skip`, {
      method: "POST",
      headers: this.headers(),
    });
  }

  /** Labeled-step export as raw JSONL text. */
  async exportJsonl(iteration?: number): Promise<string> {
    const query = iteration === undefined ? "" : `?iteration=${iteration}`;
    const resp = await fetch(`${this.config.baseUrl}/api/export${query}`);
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
    return resp.text();
  }
}
