import { describe, expect, it, vi } from 'vitest';

import { AnswerGate, ApiError, ElicitClient } from '../src/client.js';

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

const okSnapshot = { id: 's1', status: 'awaiting_answer', iteration: 2 };

describe('ElicitClient', () => {
  it('posts answers with nonce and choice', async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const fetchImpl = vi.fn(async (url: string, init?: RequestInit) => {
      calls.push({ url, init });
      return jsonResponse(200, okSnapshot);
    });
    const client = new ElicitClient('http://x', fetchImpl);
    await client.postAnswer('s1', 'n-1', 'first');
    expect(calls[0].url).toBe('http://x/api/v1/sessions/s1/answer');
    expect(JSON.parse(String(calls[0].init!.body))).toEqual({
      nonce: 'n-1',
      choice: 'first',
    });
  });

  it('raises typed errors with the service payload', async () => {
    const fetchImpl = async () =>
      jsonResponse(409, { code: 'stale_nonce', message: 'no' });
    const client = new ElicitClient('http://x', fetchImpl);
    await expect(client.postAnswer('s1', 'n-0', 'first')).rejects.toMatchObject({
      status: 409,
      body: { code: 'stale_nonce' },
    });
  });
});

describe('AnswerGate', () => {
  it('coalesces duplicate clicks into one POST', async () => {
    let resolveFirst: (r: Response) => void = () => {};
    const fetchImpl = vi.fn(
      () => new Promise<Response>((resolve) => { resolveFirst = resolve; }),
    );
    const gate = new AnswerGate(new ElicitClient('http://x', fetchImpl));
    const p1 = gate.submit('s1', 'n-1', 'first');
    const p2 = gate.submit('s1', 'n-1', 'first'); // double click while in flight
    resolveFirst(jsonResponse(200, okSnapshot));
    const [r1, r2] = await Promise.all([p1, p2]);
    expect(fetchImpl).toHaveBeenCalledTimes(1);
    expect(r1.kind).toBe('accepted');
    expect(r2.kind).toBe('duplicate');
  });

  it('refuses to resubmit an already-answered nonce', async () => {
    const fetchImpl = vi.fn(async () => jsonResponse(200, okSnapshot));
    const gate = new AnswerGate(new ElicitClient('http://x', fetchImpl));
    await gate.submit('s1', 'n-1', 'first');
    const second = await gate.submit('s1', 'n-1', 'second');
    expect(second.kind).toBe('duplicate');
    expect(fetchImpl).toHaveBeenCalledTimes(1);
  });

  it('maps 409 to a conflict outcome for resync', async () => {
    const fetchImpl = async () =>
      jsonResponse(409, { code: 'stale_nonce', message: 'stale' });
    const gate = new AnswerGate(new ElicitClient('http://x', fetchImpl));
    const outcome = await gate.submit('s1', 'n-9', 'first');
    expect(outcome.kind).toBe('conflict');
  });

  it('keeps the choice for retry after a network failure', async () => {
    let failures = 1;
    const fetchImpl = vi.fn(async () => {
      if (failures > 0) {
        failures -= 1;
        throw new TypeError('network down');
      }
      return jsonResponse(200, okSnapshot);
    });
    const gate = new AnswerGate(new ElicitClient('http://x', fetchImpl));
    const outcome = await gate.submit('s1', 'n-1', 'second');
    expect(outcome.kind).toBe('network_error');
    if (outcome.kind !== 'network_error') throw new Error('unreachable');
    const retried = await outcome.retry();
    expect(retried.kind).toBe('accepted');
    expect(fetchImpl).toHaveBeenCalledTimes(2);
    // the retried POST carried the original choice
    const body = JSON.parse(String(fetchImpl.mock.calls[1][1]!.body));
    expect(body).toEqual({ nonce: 'n-1', choice: 'second' });
  });
});
