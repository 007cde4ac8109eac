/**
 * Typed client for the trial conductor HTTP API.
 *
 * Every response keeps its raw body text alongside the parsed value so the
 * view layer can render server numbers verbatim. Configuration is a single
 * base URL plus bearer token.
 */

import { RawMap, rawLeaves } from "./rawjson.js";

export interface ConsoleConfig {
  baseUrl: string;
  token: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public field: string | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Parsed body plus the verbatim text it came from. */
export interface Raw<T> {
  data: T;
  text: string;
  raw: RawMap;
}

export type ThresholdValue = number | "inf";

export interface Snapshot {
  trial_id: string;
  version: number;
  phase: "phase1" | "phase2" | "terminated";
  n_enrolled: number;
  m: number;
  max_n: number;
  analysis_at: number[];
  analyses_run: number;
  pending: { patient_idx: number; dose: number } | null;
  estimates: {
    eta_hat: number;
    level_index: number | null;
    eta_mle_phase1: number;
  } | null;
  response: unknown;
  levels: { dose: number; n: number; tox: number; eff: number }[] | null;
  analyses: AnalysisRow[];
  thresholds: {
    b: ThresholdValue;
    b_tilde: ThresholdValue;
    c: ThresholdValue;
    p0: number;
    p1: number;
  };
  verdicts: VerdictRow[];
  advisory: { analyses: AnalysisRow[] } | null;
  config: Record<string, unknown>;
  events_count: number;
}

export interface AnalysisRow {
  k: number;
  n: number;
  eta_hat: number;
  l0: number;
  l1: number;
  p_hat: number;
}

export interface VerdictRow {
  k: number;
  verdict: string;
  rule: string;
  at: string;
  advisory: boolean;
}

export interface TrialEvent {
  seq: number;
  kind: string;
  at: string;
  actor: string;
  payload: Record<string, unknown>;
}

export interface Projection {
  projected: true;
  n_hypothetical: number;
  analyses: AnalysisRow[];
  decision: { verdict: string; rule: string; k: number } | null;
  next_dose: number | null;
}

export interface OutcomeBody {
  patient_idx: number;
  tox: number;
  eff: number;
  version: number;
  amend?: boolean;
}

type FetchLike = typeof fetch;

export class Client {
  private fetchImpl: FetchLike;

  constructor(
    private cfg: ConsoleConfig,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? fetch;
  }

  private async req<T>(method: string, path: string, body?: unknown): Promise<Raw<T>> {
    const res = await this.fetchImpl(this.cfg.baseUrl + path, {
      method,
      headers: {
        Authorization: `Bearer ${this.cfg.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await res.text();
    if (!res.ok) {
      let code = "http_error";
      let message = text || res.statusText;
      let field: string | null = null;
      try {
        const err = JSON.parse(text);
        code = err.code ?? code;
        message = err.message ?? message;
        field = err.field ?? null;
      } catch {
        // non-JSON error body, keep defaults
      }
      throw new ApiError(res.status, code, message, field);
    }
    return { data: JSON.parse(text) as T, text, raw: rawLeaves(text) };
  }

  health(): Promise<Raw<{ status: string }>> {
    return this.req("GET", "/health");
  }

  listTrials(): Promise<Raw<{ trials: { trial_id: string; phase: string }[] }>> {
    return this.req("GET", "/trials");
  }

  createTrial(config: unknown, trialId?: string): Promise<Raw<Snapshot>> {
    const body: Record<string, unknown> = { config };
    if (trialId !== undefined) body.trial_id = trialId;
    return this.req("POST", "/trials", body);
  }

  snapshot(trialId: string): Promise<Raw<Snapshot>> {
    return this.req("GET", `/trials/${encodeURIComponent(trialId)}`);
  }

  events(trialId: string): Promise<Raw<{ trial_id: string; events: TrialEvent[] }>> {
    return this.req("GET", `/trials/${encodeURIComponent(trialId)}/events`);
  }

  postOutcome(trialId: string, body: OutcomeBody): Promise<Raw<Snapshot>> {
    return this.req("POST", `/trials/${encodeURIComponent(trialId)}/outcomes`, body);
  }

  project(
    trialId: string,
    outcomes: { tox: number; eff: number }[],
  ): Promise<Raw<Projection>> {
    return this.req("POST", `/trials/${encodeURIComponent(trialId)}/project`, {
      outcomes,
    });
  }

  startCalibration(trialId: string, spec: Record<string, unknown>): Promise<Raw<{ job_id: string }>> {
    return this.req("POST", `/trials/${encodeURIComponent(trialId)}/calibrate`, spec);
  }

  calibrationJob(trialId: string, jobId: string): Promise<Raw<Record<string, unknown>>> {
    return this.req(
      "GET",
      `/trials/${encodeURIComponent(trialId)}/calibrate/${encodeURIComponent(jobId)}`,
    );
  }
}
