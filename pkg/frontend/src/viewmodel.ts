/**
 * Snapshot + event log -> everything the screen shows.
 *
 * No statistic is ever computed here: statistic and estimate fields carry
 * the server's verbatim text (from the raw leaf map), and numeric parses
 * are used only for presentation geometry (bar fractions, scale choice).
 * Decision banners are derived from the event log, not from client state,
 * so they survive reloads.
 */

import { Raw, Snapshot, ThresholdValue, TrialEvent } from "./api.js";
import { rawAt } from "./rawjson.js";

export interface GaugeRow {
  label: string;
  statRaw: string | null; // null before the first analysis
  thresholdRaw: string;
  scale: "log" | "linear";
  fraction: number; // bar fill in [0, 1]
  crossed: boolean;
}

export interface Banner {
  seq: number;
  k: number;
  verdict: string;
  rule: string;
  at: string;
  text: string;
}

export interface AnalysisRowView {
  k: number;
  n: number;
  etaRaw: string;
  l0Raw: string;
  l1Raw: string;
  pHatRaw: string;
}

export interface LevelRowView {
  doseRaw: string;
  n: number;
  tox: number;
  eff: number;
}

export interface TrialViewModel {
  trialId: string;
  version: number;
  phase: string;
  terminated: boolean;
  enrolled: number;
  maxN: number;
  m: number;
  analysisAt: number[];
  analysesRun: number;
  pending: { patientIdx: number; doseRaw: string } | null;
  etaHatRaw: string | null; // current estimate
  etaSeries: { k: number; etaRaw: string }[]; // phase 1 closeout is k = 0
  gauges: GaugeRow[];
  analyses: AnalysisRowView[];
  levels: LevelRowView[] | null;
  thresholds: { bRaw: string; bTildeRaw: string; cRaw: string; p0Raw: string; p1Raw: string };
  verdicts: { k: number; verdict: string; rule: string; advisory: boolean }[];
  banners: Banner[];
  hasAdvisory: boolean;
  whatIfEnabled: boolean;
  eventsCount: number;
}

const LOG_SCALE_ABOVE = 20;

function gaugeRow(
  label: string,
  statRaw: string | null,
  statValue: number | null,
  thresholdRaw: string,
  threshold: ThresholdValue,
): GaugeRow {
  const thr = threshold === "inf" ? Infinity : threshold;
  const stat = statValue ?? 0;
  const scale: "log" | "linear" =
    Math.max(stat, Number.isFinite(thr) ? thr : 0) > LOG_SCALE_ABOVE ? "log" : "linear";
  let fraction = 0;
  if (statValue !== null && Number.isFinite(thr) && thr > 0) {
    fraction =
      scale === "log"
        ? Math.min(Math.log1p(stat) / Math.log1p(thr), 1)
        : Math.min(stat / thr, 1);
  }
  return {
    label,
    statRaw,
    thresholdRaw,
    scale,
    fraction,
    crossed: statValue !== null && statValue >= thr,
  };
}

export function buildBanners(events: TrialEvent[]): Banner[] {
  const out: Banner[] = [];
  for (const e of events) {
    if (e.kind !== "decision") continue;
    const k = Number(e.payload.k);
    const verdict = String(e.payload.verdict);
    const rule = String(e.payload.rule);
    const what = verdict === "reject_h0" ? "EFFICACY ESTABLISHED (reject H0)" : "FUTILITY (accept H0)";
    out.push({
      seq: e.seq,
      k,
      verdict,
      rule,
      at: e.at,
      text: `${what} at analysis ${k} by ${rule.replace(/_/g, " ")}`,
    });
  }
  return out;
}

export function buildViewModel(
  snap: Raw<Snapshot>,
  events: Raw<{ trial_id: string; events: TrialEvent[] }>,
): TrialViewModel {
  const s = snap.data;
  const raw = snap.raw;
  const terminated = s.phase === "terminated";

  const analyses: AnalysisRowView[] = s.analyses.map((a, i) => ({
    k: a.k,
    n: a.n,
    etaRaw: rawAt(raw, `analyses.${i}.eta_hat`),
    l0Raw: rawAt(raw, `analyses.${i}.l0`),
    l1Raw: rawAt(raw, `analyses.${i}.l1`),
    pHatRaw: rawAt(raw, `analyses.${i}.p_hat`),
  }));

  const etaSeries: { k: number; etaRaw: string }[] = [];
  if (s.estimates !== null) {
    etaSeries.push({ k: 0, etaRaw: rawAt(raw, "estimates.eta_mle_phase1") });
  }
  for (const row of analyses) etaSeries.push({ k: row.k, etaRaw: row.etaRaw });

  const last = s.analyses.length > 0 ? s.analyses[s.analyses.length - 1]! : null;
  const lastView = analyses.length > 0 ? analyses[analyses.length - 1]! : null;
  const nAnalyses = s.analysis_at.length;
  // which boundary the NEXT analysis will use for efficacy
  const nextIsFinal = !terminated && s.analyses_run >= nAnalyses - 1;

  const gauges: GaugeRow[] = [
    gaugeRow(
      nextIsFinal ? "efficacy (final, vs c)" : "efficacy (vs b)",
      lastView ? lastView.l0Raw : null,
      last ? last.l0 : null,
      nextIsFinal ? rawAt(raw, "thresholds.c") : rawAt(raw, "thresholds.b"),
      nextIsFinal ? s.thresholds.c : s.thresholds.b,
    ),
    gaugeRow(
      "futility (vs b_tilde)",
      lastView ? lastView.l1Raw : null,
      last ? last.l1 : null,
      rawAt(raw, "thresholds.b_tilde"),
      s.thresholds.b_tilde,
    ),
  ];

  const levels: LevelRowView[] | null = s.levels
    ? s.levels.map((lv, i) => ({
        doseRaw: rawAt(raw, `levels.${i}.dose`),
        n: lv.n,
        tox: lv.tox,
        eff: lv.eff,
      }))
    : null;

  return {
    trialId: s.trial_id,
    version: s.version,
    phase: s.phase,
    terminated,
    enrolled: s.n_enrolled,
    maxN: s.max_n,
    m: s.m,
    analysisAt: s.analysis_at,
    analysesRun: s.analyses_run,
    pending: s.pending
      ? { patientIdx: s.pending.patient_idx, doseRaw: rawAt(raw, "pending.dose") }
      : null,
    etaHatRaw: s.estimates ? rawAt(raw, "estimates.eta_hat") : null,
    etaSeries,
    gauges,
    analyses,
    levels,
    thresholds: {
      bRaw: rawAt(raw, "thresholds.b"),
      bTildeRaw: rawAt(raw, "thresholds.b_tilde"),
      cRaw: rawAt(raw, "thresholds.c"),
      p0Raw: rawAt(raw, "thresholds.p0"),
      p1Raw: rawAt(raw, "thresholds.p1"),
    },
    verdicts: s.verdicts.map((v) => ({
      k: v.k,
      verdict: v.verdict,
      rule: v.rule,
      advisory: v.advisory,
    })),
    banners: buildBanners(events.data.events),
    hasAdvisory: s.advisory !== null,
    whatIfEnabled: !terminated,
    eventsCount: s.events_count,
  };
}
