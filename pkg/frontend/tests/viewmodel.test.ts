import { describe, expect, it } from 'vitest';

import type { PendingPair, Snapshot } from '../src/types.js';
import {
  bestView,
  heatmapView,
  pairView,
  statusView,
  summaryView,
  updateEtaHistory,
} from '../src/viewmodel.js';

const pending: PendingPair = {
  nonce: 'abc-t3',
  i: 0,
  j: 4,
  first: [0.2, 0.8, 0.5],
  second: [0.4, 0.4, 1.0],
};

function snapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    id: 'abc',
    status: 'awaiting_answer',
    iteration: 3,
    total_iterations: 20,
    history_length: 2,
    problem: { id: 'dtlz2', objective_labels: ['f1', 'f2', 'f3'] },
    pending,
    posterior: {
      eta_mean: [0.6, 0.3, 0.1],
      archetype_means: [
        [0.5, 0.3, 0.2],
        [0.2, 0.5, 0.3],
        [0.3, 0.3, 0.4],
      ],
    },
    best: { outcome: [0.1, 0.2, 0.3], utility: -0.42 },
    ...overrides,
  };
}

describe('statusView', () => {
  it('awaiting state enables answers', () => {
    const view = statusView(snapshot());
    expect(view.phase).toBe('awaiting_answer');
    expect(view.canAnswer).toBe(true);
    expect(view.progressText).toBe('iteration 3 of 20');
  });

  it('computing disables inputs', () => {
    const view = statusView(snapshot({ status: 'computing', pending: null }));
    expect(view.canAnswer).toBe(false);
  });
});

describe('pairView', () => {
  it('renders both outcomes field-for-field', () => {
    const view = pairView(pending, ['f1', 'f2', 'f3']);
    expect(view.nonce).toBe('abc-t3');
    expect(view.cards[0].bars.map((b) => b.value)).toEqual(pending.first);
    expect(view.cards[1].bars.map((b) => b.value)).toEqual(pending.second);
    expect(view.cards[0].bars.map((b) => b.label)).toEqual(['f1', 'f2', 'f3']);
    expect(view.cards[0].choice).toBe('first');
    expect(view.cards[1].choice).toBe('second');
  });

  it('scales bars per objective across the two cards', () => {
    const view = pairView(pending, ['f1', 'f2', 'f3']);
    expect(view.cards[0].bars[0].fraction).toBeCloseTo(0.2 / 0.4);
    expect(view.cards[1].bars[0].fraction).toBeCloseTo(1.0);
    expect(view.cards[0].bars[1].fraction).toBeCloseTo(1.0);
  });

  it('carries raw values when the service provides them', () => {
    const withRaw = { ...pending, first_raw: [10, 20, 30], second_raw: [5, 5, 5] };
    const view = pairView(withRaw, ['f1', 'f2', 'f3']);
    expect(view.cards[0].bars[2].rawValue).toBe(30);
  });

  it('falls back to generic labels', () => {
    const view = pairView(pending, []);
    expect(view.cards[0].bars[0].label).toBe('f1');
  });
});

describe('updateEtaHistory', () => {
  it('appends new iterations in order', () => {
    let history = updateEtaHistory([], snapshot({ iteration: 1 }));
    history = updateEtaHistory(history, snapshot({ iteration: 2 }));
    expect(history.map((p) => p.iteration)).toEqual([1, 2]);
  });

  it('replaces a repeated iteration instead of duplicating it', () => {
    let history = updateEtaHistory([], snapshot({ iteration: 1 }));
    history = updateEtaHistory(history, snapshot({ iteration: 1 }));
    expect(history).toHaveLength(1);
  });

  it('ignores snapshots without a posterior', () => {
    const snap = snapshot();
    delete snap.posterior;
    expect(updateEtaHistory([], snap)).toHaveLength(0);
  });
});

describe('heatmap and best views', () => {
  it('one row per component with eta share', () => {
    const view = heatmapView(snapshot());
    expect(view).not.toBeNull();
    expect(view!.rows).toHaveLength(3);
    expect(view!.rows[0].etaShare).toBeCloseTo(0.6);
    expect(view!.rows[1].cells).toEqual([0.2, 0.5, 0.3]);
  });

  it('best outcome pairs labels with values', () => {
    const view = bestView(snapshot());
    expect(view!.values[2]).toEqual({ label: 'f3', value: 0.3 });
    expect(view!.utility).toBeCloseTo(-0.42);
  });

  it('summary reports answered queries', () => {
    const view = summaryView(snapshot({ status: 'finished', history_length: 20 }));
    expect(view.headline).toContain('20');
  });
});
