/**
 * Pure view-model layer: snapshot JSON in, plain render descriptions out.
 * No model quantities are computed here beyond presentation scaling
 * (bar fractions), which keeps the UI contract-testable without a DOM.
 */

import type { PendingPair, Snapshot } from './types.js';

export interface BarView {
  label: string;
  value: number;
  /** 0..1 width of the bar, scaled per objective across the two cards */
  fraction: number;
  rawValue?: number;
}

export interface OutcomeCardView {
  title: string;
  choice: 'first' | 'second';
  bars: BarView[];
}

export interface PairView {
  nonce: string;
  note: string;
  cards: [OutcomeCardView, OutcomeCardView];
}

export interface EtaPoint {
  iteration: number;
  eta: number[];
}

export interface HeatmapView {
  objectiveLabels: string[];
  rows: { component: number; etaShare: number; cells: number[] }[];
}

export interface StatusView {
  phase: Snapshot['status'];
  canAnswer: boolean;
  progressText: string;
}

export function statusView(snap: Snapshot): StatusView {
  const progressText = `iteration ${snap.iteration} of ${snap.total_iterations}`;
  return {
    phase: snap.status,
    canAnswer: snap.status === 'awaiting_answer' && snap.pending !== null,
    progressText,
  };
}

/** Bar fractions are scaled per objective over the two candidates. */
export function pairView(pending: PendingPair, objectiveLabels: string[]): PairView {
  const bars = (values: number[], raw?: number[]): BarView[] =>
    values.map((value, idx) => {
      const other = idx < pending.second.length ? pending.second[idx] : 0;
      const first = idx < pending.first.length ? pending.first[idx] : 0;
      const span = Math.max(Math.abs(first), Math.abs(other), 1e-12);
      return {
        label: objectiveLabels[idx] ?? `f${idx + 1}`,
        value,
        fraction: Math.min(Math.abs(value) / span, 1),
        rawValue: raw ? raw[idx] : undefined,
      };
    });
  return {
    nonce: pending.nonce,
    note: 'lower is better on every objective',
    cards: [
      { title: 'Option A', choice: 'first', bars: bars(pending.first, pending.first_raw) },
      { title: 'Option B', choice: 'second', bars: bars(pending.second, pending.second_raw) },
    ],
  };
}

/** Append the snapshot's mixture-weight means to the trajectory (immutably). */
export function updateEtaHistory(history: EtaPoint[], snap: Snapshot): EtaPoint[] {
  if (!snap.posterior) return history;
  const point = { iteration: snap.iteration, eta: [...snap.posterior.eta_mean] };
  const existing = history.findIndex((p) => p.iteration === point.iteration);
  if (existing >= 0) {
    const copy = history.slice();
    copy[existing] = point;
    return copy;
  }
  return [...history, point].sort((a, b) => a.iteration - b.iteration);
}

export function heatmapView(snap: Snapshot): HeatmapView | null {
  if (!snap.posterior) return null;
  return {
    objectiveLabels: snap.problem.objective_labels,
    rows: snap.posterior.archetype_means.map((cells, component) => ({
      component,
      etaShare: snap.posterior!.eta_mean[component] ?? 0,
      cells: [...cells],
    })),
  };
}

export interface BestOutcomeView {
  values: { label: string; value: number }[];
  utility: number;
}

export function bestView(snap: Snapshot): BestOutcomeView | null {
  if (!snap.best) return null;
  return {
    values: snap.best.outcome.map((value, idx) => ({
      label: snap.problem.objective_labels[idx] ?? `f${idx + 1}`,
      value,
    })),
    utility: snap.best.utility,
  };
}

export interface SummaryView {
  headline: string;
  etaFinal: number[];
  iterations: number;
}

export function summaryView(snap: Snapshot): SummaryView {
  return {
    headline: `session finished after ${snap.history_length} answered queries`,
    etaFinal: snap.posterior ? [...snap.posterior.eta_mean] : [],
    iterations: snap.history_length,
  };
}
