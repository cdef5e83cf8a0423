/**
 * Round-trip against a live service instance: the rendered pair matches the
 * API payload field-for-field, a submitted choice advances the iteration by
 * exactly one, and duplicate clicks produce exactly one recorded answer.
 */

import { spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { AnswerGate, ElicitClient } from '../src/client.js';
import { pairView, statusView } from '../src/viewmodel.js';

const PORT = 8799;
const BASE = `http://127.0.0.1:${PORT}`;

const FAST_CONFIG = {
  problem: 'dtlz2',
  n_iterations: 3,
  n_init: 4,
  svi_steps: 20,
  svi_mc_samples: 4,
  ei_mc_samples: 4,
  ei_restarts: 2,
  ei_max_evals: 30,
  ubest_samples: 8,
  policy_samples: 8,
  pair_subsample: 10,
  gp_restarts: 2,
  ref_samples: 10,
  seed: 0,
};

let server: ChildProcess;

async function waitForService(timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/api/v1/problems`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error('service did not come up');
}

beforeAll(async () => {
  const storage = mkdtempSync(join(tmpdir(), 'maobo-ui-'));
  const code = [
    'import uvicorn',
    'from maobo.elicit import create_app',
    `uvicorn.run(create_app(storage_dir=${JSON.stringify(storage)}),`,
    `           host="127.0.0.1", port=${PORT}, log_level="warning")`,
  ].join('\n');
  server = spawn('python3', ['-c', code], { stdio: 'ignore' });
  await waitForService();
}, 90_000);

afterAll(() => {
  server?.kill();
});

describe('UI round-trip against the live service', () => {
  it('renders the pending pair field-for-field and advances by one per answer', async () => {
    const client = new ElicitClient(BASE);
    const snap = await client.createSession(FAST_CONFIG);
    expect(snap.status).toBe('awaiting_answer');
    expect(statusView(snap).canAnswer).toBe(true);

    const pending = snap.pending!;
    const view = pairView(pending, snap.problem.objective_labels);
    expect(view.nonce).toBe(pending.nonce);
    expect(view.cards[0].bars.map((b) => b.value)).toEqual(pending.first);
    expect(view.cards[1].bars.map((b) => b.value)).toEqual(pending.second);
    expect(view.cards[0].bars.map((b) => b.label)).toEqual(
      snap.problem.objective_labels,
    );
    expect(pending.first).toHaveLength(6);
    expect(pending.second).toHaveLength(6);

    const next = await client.postAnswer(snap.id, pending.nonce, 'first');
    expect(next.iteration).toBe(snap.iteration + 1);
    expect(next.history_length).toBe(1);
  }, 120_000);

  it('coalesces duplicate clicks into exactly one recorded answer', async () => {
    const client = new ElicitClient(BASE);
    const gate = new AnswerGate(client);
    const snap = await client.createSession(FAST_CONFIG);
    const nonce = snap.pending!.nonce;

    const [a, b] = await Promise.all([
      gate.submit(snap.id, nonce, 'second'),
      gate.submit(snap.id, nonce, 'second'),
    ]);
    const kinds = [a.kind, b.kind].sort();
    expect(kinds).toEqual(['accepted', 'duplicate']);

    const history = await client.getHistory(snap.id);
    expect(history.records).toHaveLength(1);

    // a stale re-POST at the HTTP level is rejected by the service
    await expect(client.postAnswer(snap.id, nonce, 'second')).rejects.toMatchObject({
      status: 409,
    });
    const after = await client.getHistory(snap.id);
    expect(after.records).toHaveLength(1);
  }, 120_000);
});
