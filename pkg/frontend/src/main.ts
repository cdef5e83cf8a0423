/**
 * App wiring: a small state machine mirroring the session status enum.
 * Polls get_state once per second while the server is computing; renders the
 * pair comparison when awaiting an answer; disables inputs while any request
 * is in flight.
 */

import { AnswerGate, ApiError, ElicitClient } from './client.js';
import {
  bestView,
  heatmapView,
  pairView,
  statusView,
  summaryView,
  updateEtaHistory,
  type EtaPoint,
} from './viewmodel.js';
import {
  renderBanner,
  renderBest,
  renderEtaChart,
  renderHeatmap,
  renderPair,
  renderStatus,
  renderSummary,
} from './render.js';
import type { Choice, Snapshot } from './types.js';

const POLL_INTERVAL_MS = 1000;

interface Elements {
  status: HTMLElement;
  banner: HTMLElement;
  pair: HTMLElement;
  eta: HTMLElement;
  heatmap: HTMLElement;
  best: HTMLElement;
  summary: HTMLElement;
  form: HTMLFormElement;
}

export class App {
  private client: ElicitClient;
  private gate: AnswerGate;
  private sessionId: string | null = null;
  private snapshot: Snapshot | null = null;
  private etaHistory: EtaPoint[] = [];
  private pollTimer: number | null = null;
  private submitting = false;

  constructor(baseUrl: string, private readonly ui: Elements) {
    this.client = new ElicitClient(baseUrl);
    this.gate = new AnswerGate(this.client);
  }

  bind(): void {
    this.ui.form.addEventListener('submit', (ev) => {
      ev.preventDefault();
      const data = new FormData(this.ui.form);
      void this.start({
        problem: String(data.get('problem') || 'dtlz2'),
        n_iterations: Number(data.get('iterations') || 20),
        seed: Number(data.get('seed') || 0),
      });
    });
  }

  async start(config: Record<string, unknown>): Promise<void> {
    try {
      const snap = await this.client.createSession(config);
      this.sessionId = snap.id;
      this.etaHistory = [];
      this.apply(snap);
    } catch (err) {
      this.showError(err);
    }
  }

  private apply(snap: Snapshot): void {
    this.snapshot = snap;
    this.etaHistory = updateEtaHistory(this.etaHistory, snap);
    this.render();
    if (snap.status === 'computing') {
      this.schedulePoll();
    }
  }

  private schedulePoll(): void {
    if (this.pollTimer !== null) return;
    this.pollTimer = window.setTimeout(() => {
      this.pollTimer = null;
      void this.poll();
    }, POLL_INTERVAL_MS);
  }

  private async poll(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const snap = await this.client.getState(this.sessionId);
      this.apply(snap);
    } catch (err) {
      this.showError(err, () => void this.poll());
    }
  }

  async choose(choice: Choice): Promise<void> {
    if (!this.sessionId || !this.snapshot?.pending || this.submitting) return;
    const nonce = this.snapshot.pending.nonce;
    this.submitting = true;
    this.render();
    const outcome = await this.gate.submit(this.sessionId, nonce, choice);
    this.submitting = false;
    if (outcome.kind === 'accepted') {
      renderBanner(this.ui.banner, null);
      this.apply(outcome.snapshot);
    } else if (outcome.kind === 'conflict') {
      renderBanner(this.ui.banner, 'answer superseded; refreshing state');
      await this.poll();
    } else if (outcome.kind === 'network_error') {
      this.showError(new Error('network failure; your choice is kept'), async () => {
        const retried = await outcome.retry();
        if (retried.kind === 'accepted') {
          renderBanner(this.ui.banner, null);
          this.apply(retried.snapshot);
        }
      });
      this.render();
    } else {
      this.render(); // duplicate: ignore quietly
    }
  }

  private showError(err: unknown, onRetry?: () => void): void {
    const message = err instanceof ApiError
      ? `${err.body.code}: ${err.body.message}`
      : String(err instanceof Error ? err.message : err);
    renderBanner(this.ui.banner, message, onRetry);
  }

  private render(): void {
    const snap = this.snapshot;
    if (!snap) return;
    renderStatus(this.ui.status, statusView(snap));
    this.ui.summary.replaceChildren();
    if (snap.status === 'awaiting_answer' && snap.pending) {
      renderPair(
        this.ui.pair,
        pairView(snap.pending, snap.problem.objective_labels),
        (choice) => void this.choose(choice),
        this.submitting,
      );
    } else {
      this.ui.pair.replaceChildren();
      if (snap.status === 'computing') {
        const spinner = document.createElement('p');
        spinner.className = 'spinner';
        spinner.textContent = 'computing next design and query…';
        this.ui.pair.appendChild(spinner);
      }
      if (snap.status === 'finished') {
        renderSummary(this.ui.summary, summaryView(snap));
      }
    }
    renderEtaChart(this.ui.eta, this.etaHistory);
    renderHeatmap(this.ui.heatmap, heatmapView(snap));
    renderBest(this.ui.best, bestView(snap));
  }
}

export function boot(): void {
  const grab = (id: string): HTMLElement => {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node;
  };
  const app = new App(window.location.origin.replace(/:\d+$/, ':8000'), {
    status: grab('status'),
    banner: grab('banner'),
    pair: grab('pair'),
    eta: grab('eta-chart'),
    heatmap: grab('heatmap'),
    best: grab('best'),
    summary: grab('summary'),
    form: grab('session-form') as HTMLFormElement,
  });
  app.bind();
}

if (typeof document !== 'undefined' && document.getElementById('session-form')) {
  boot();
}
