/**
 * Coordinator workflow around one trial: refresh, outcome entry with the
 * optimistic version token, conflict recovery, 2 s polling, and the
 * read-only what-if projection.
 */

import { ApiError, Client, Projection, Raw } from "./api.js";
import { buildViewModel, TrialViewModel } from "./viewmodel.js";

export type SubmitResult =
  | { ok: true; vm: TrialViewModel }
  | { ok: false; conflict: true; message: string }
  | { ok: false; conflict: false; error: ApiError };

export interface FlowEvents {
  onUpdate?: (vm: TrialViewModel) => void;
  /** Version conflict: state was refreshed, the entry must be re-confirmed. */
  onConflict?: (message: string, vm: TrialViewModel) => void;
}

export const POLL_INTERVAL_MS = 2000;

export class ConsoleFlow {
  vm: TrialViewModel | null = null;
  /** Verbatim bodies behind the current view, for audit and comparison. */
  lastSnapshotText: string | null = null;
  lastEventsText: string | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private busy = false;

  constructor(
    private client: Client,
    readonly trialId: string,
    private events: FlowEvents = {},
  ) {}

  async refresh(): Promise<TrialViewModel> {
    const [snap, ev] = await Promise.all([
      this.client.snapshot(this.trialId),
      this.client.events(this.trialId),
    ]);
    this.vm = buildViewModel(snap, ev);
    this.lastSnapshotText = snap.text;
    this.lastEventsText = ev.text;
    this.events.onUpdate?.(this.vm);
    return this.vm;
  }

  /**
   * Record the pending patient's outcome using the current version token.
   * On a version conflict the trial is refreshed and the caller is asked to
   * re-enter; nothing is retried automatically.
   */
  async submitOutcome(tox: number, eff: number, amend = false): Promise<SubmitResult> {
    if (this.vm === null) await this.refresh();
    const vm = this.vm!;
    if (vm.pending === null) {
      return {
        ok: false,
        conflict: false,
        error: new ApiError(409, "already_terminated", "no patient awaiting an outcome"),
      };
    }
    this.busy = true;
    try {
      await this.client.postOutcome(this.trialId, {
        patient_idx: vm.pending.patientIdx,
        tox,
        eff,
        version: vm.version,
        ...(amend ? { amend: true } : {}),
      });
      // re-read snapshot AND events so new decisions surface as banners
      const fresh = await this.refresh();
      return { ok: true, vm: fresh };
    } catch (err) {
      if (err instanceof ApiError && err.code === "version_conflict") {
        const fresh = await this.refresh();
        const message =
          "Trial changed since this screen loaded (version conflict). " +
          "State refreshed, please re-enter the outcome.";
        this.events.onConflict?.(message, fresh);
        return { ok: false, conflict: true, message };
      }
      if (err instanceof ApiError) {
        return { ok: false, conflict: false, error: err };
      }
      throw err;
    } finally {
      this.busy = false;
    }
  }

  /**
   * Read-only projection; never mutates trial state. Non-binding.
   * An empty hypothetical list means the current statistics apply, so no
   * request is made and null is returned.
   */
  async whatIf(outcomes: { tox: number; eff: number }[]): Promise<Raw<Projection> | null> {
    if (outcomes.length === 0) return null;
    return this.client.project(this.trialId, outcomes);
  }

  startPolling(intervalMs = POLL_INTERVAL_MS, schedule = setInterval): void {
    if (this.timer !== null) return;
    this.timer = schedule(() => {
      if (this.busy) return; // never interleave with a submission
      void this.refresh().catch(() => {
        // transient poll failures are invisible; the next tick retries
      });
    }, intervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
