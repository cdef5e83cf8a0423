/**
 * Wire types for the elicitation service (mirror of the JSON snapshot schema).
 * The UI is a pure view over these payloads; unknown fields are ignored.
 */

export type SessionStatus = 'computing' | 'awaiting_answer' | 'finished';

export type Choice = 'first' | 'second';

export interface PendingPair {
  nonce: string;
  i: number;
  j: number;
  first: number[];
  second: number[];
  /** Original-unit values, present for tabular problems only */
  first_raw?: number[];
  second_raw?: number[];
}

export interface PosteriorView {
  eta_mean: number[];
  archetype_means: number[][];
}

export interface BestView {
  outcome: number[];
  utility: number;
}

export interface Snapshot {
  id: string;
  status: SessionStatus;
  iteration: number;
  total_iterations: number;
  history_length: number;
  problem: { id: string; objective_labels: string[] };
  pending: PendingPair | null;
  posterior?: PosteriorView;
  best?: BestView;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string;
}

export interface ProblemInfo {
  id: string;
  n_objectives: number;
  n_variables: number;
  objective_labels: string[];
}
