/**
 * HTTP client for the elicitation API with nonce-level answer idempotence:
 * each pending query produces at most one POST no matter how often the user
 * clicks, and a network failure never loses the entered choice (it is kept
 * for retry).
 */

import type { ApiErrorBody, Choice, ProblemInfo, Snapshot } from './types.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ApiErrorBody,
  ) {
    super(body.message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parseJson(resp: Response): Promise<unknown> {
  const text = await resp.text();
  try {
    return text ? JSON.parse(text) : {};
  } catch {
    throw new ApiError(resp.status, { code: 'bad_payload', message: text });
  }
}

export class ElicitClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/v1${path}`, init);
    const body = await parseJson(resp);
    if (!resp.ok) {
      throw new ApiError(resp.status, body as ApiErrorBody);
    }
    return body;
  }

  listProblems(): Promise<ProblemInfo[]> {
    return this.request('/problems') as Promise<ProblemInfo[]>;
  }

  createSession(config: Record<string, unknown>): Promise<Snapshot> {
    return this.request('/sessions', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ config }),
    }) as Promise<Snapshot>;
  }

  getState(sessionId: string): Promise<Snapshot> {
    return this.request(`/sessions/${sessionId}`) as Promise<Snapshot>;
  }

  postAnswer(sessionId: string, nonce: string, choice: Choice): Promise<Snapshot> {
    return this.request(`/sessions/${sessionId}/answer`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ nonce, choice }),
    }) as Promise<Snapshot>;
  }

  getHistory(sessionId: string): Promise<{ id: string; records: unknown[] }> {
    return this.request(`/sessions/${sessionId}/history`) as Promise<{
      id: string;
      records: unknown[];
    }>;
  }
}

export type SubmitOutcome =
  | { kind: 'accepted'; snapshot: Snapshot }
  | { kind: 'duplicate' }
  | { kind: 'conflict' }
  | { kind: 'network_error'; retry: () => Promise<SubmitOutcome> };

/**
 * Serializes answer submission: one POST per nonce. Duplicate clicks while a
 * POST is in flight (or after the nonce was submitted) are coalesced; a
 * failed transmission keeps the choice so the caller can retry it verbatim.
 */
export class AnswerGate {
  private submitted = new Set<string>();
  private inflight: string | null = null;

  constructor(private readonly client: ElicitClient) {}

  get busy(): boolean {
    return this.inflight !== null;
  }

  async submit(sessionId: string, nonce: string, choice: Choice): Promise<SubmitOutcome> {
    if (this.inflight === nonce || this.submitted.has(nonce)) {
      return { kind: 'duplicate' };
    }
    this.inflight = nonce;
    try {
      const snapshot = await this.client.postAnswer(sessionId, nonce, choice);
      this.submitted.add(nonce);
      return { kind: 'accepted', snapshot };
    } catch (err) {
      if (err instanceof ApiError) {
        // 409 = stale nonce / finished: the server owns the truth, resync
        this.submitted.add(nonce);
        return { kind: 'conflict' };
      }
      return {
        kind: 'network_error',
        retry: () => this.submit(sessionId, nonce, choice),
      };
    } finally {
      if (this.inflight === nonce) this.inflight = null;
    }
  }
}
