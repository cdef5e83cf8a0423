/**
 * Thin DOM projection of the view models. Every function replaces the
 * children of its container; no state lives in the DOM.
 */

import type {
  BestOutcomeView,
  EtaPoint,
  HeatmapView,
  PairView,
  StatusView,
  SummaryView,
} from './viewmodel.js';

const ETA_COLORS = ['#3b6fd4', '#d4803b', '#3bd48a', '#b03bd4', '#d43b55',
                    '#8a8a3b', '#3bc9d4', '#7a7a7a'];

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderStatus(container: HTMLElement, view: StatusView): void {
  container.replaceChildren();
  container.appendChild(el('span', `phase phase-${view.phase}`, view.phase.replace('_', ' ')));
  container.appendChild(el('span', 'progress', view.progressText));
}

export function renderPair(
  container: HTMLElement,
  view: PairView,
  onChoose: (choice: 'first' | 'second') => void,
  disabled: boolean,
): void {
  container.replaceChildren();
  container.appendChild(el('p', 'pair-note', view.note));
  const row = el('div', 'card-row');
  for (const card of view.cards) {
    const box = el('div', 'outcome-card');
    box.appendChild(el('h3', undefined, card.title));
    for (const bar of card.bars) {
      const line = el('div', 'bar-line');
      line.appendChild(el('span', 'bar-label', bar.label));
      const track = el('div', 'bar-track');
      const fill = el('div', 'bar-fill');
      fill.style.width = `${(bar.fraction * 100).toFixed(1)}%`;
      track.appendChild(fill);
      line.appendChild(track);
      const shown = bar.rawValue !== undefined
        ? `${bar.value.toFixed(4)} (${bar.rawValue.toFixed(4)})`
        : bar.value.toFixed(4);
      line.appendChild(el('span', 'bar-value', shown));
      box.appendChild(line);
    }
    const button = el('button', 'choose-button', `Prefer ${card.title}`) as HTMLButtonElement;
    button.disabled = disabled;
    button.addEventListener('click', () => onChoose(card.choice));
    box.appendChild(button);
    row.appendChild(box);
  }
  container.appendChild(row);
}

export function renderEtaChart(container: HTMLElement, history: EtaPoint[]): void {
  container.replaceChildren();
  if (history.length === 0) return;
  container.appendChild(el('h3', undefined, 'mixture weights over iterations'));
  const k = history[history.length - 1].eta.length;
  const chart = el('div', 'eta-chart');
  for (const point of history) {
    const col = el('div', 'eta-column');
    col.title = `iteration ${point.iteration}`;
    for (let c = 0; c < k; c += 1) {
      const seg = el('div', 'eta-segment');
      seg.style.height = `${(100 * (point.eta[c] ?? 0)).toFixed(2)}%`;
      seg.style.background = ETA_COLORS[c % ETA_COLORS.length];
      col.appendChild(seg);
    }
    chart.appendChild(col);
  }
  container.appendChild(chart);
}

export function renderHeatmap(container: HTMLElement, view: HeatmapView | null): void {
  container.replaceChildren();
  if (!view) return;
  container.appendChild(el('h3', undefined, 'archetype weights'));
  const table = el('table', 'heatmap') as HTMLTableElement;
  const head = el('tr');
  head.appendChild(el('th', undefined, 'component'));
  for (const label of view.objectiveLabels) head.appendChild(el('th', undefined, label));
  head.appendChild(el('th', undefined, 'eta'));
  table.appendChild(head);
  for (const row of view.rows) {
    const tr = el('tr');
    tr.appendChild(el('td', undefined, String(row.component)));
    for (const cell of row.cells) {
      const td = el('td', 'heat-cell', cell.toFixed(2));
      td.style.background = `rgba(59, 111, 212, ${Math.min(cell * 2, 1).toFixed(2)})`;
      tr.appendChild(td);
    }
    tr.appendChild(el('td', undefined, row.etaShare.toFixed(3)));
    table.appendChild(tr);
  }
  container.appendChild(table);
}

export function renderBest(container: HTMLElement, view: BestOutcomeView | null): void {
  container.replaceChildren();
  if (!view) return;
  container.appendChild(el('h3', undefined, 'best outcome so far'));
  const list = el('div', 'best-list');
  for (const item of view.values) {
    list.appendChild(el('span', 'best-item', `${item.label}=${item.value.toFixed(4)}`));
  }
  list.appendChild(el('span', 'best-utility', `utility ${view.utility.toFixed(4)}`));
  container.appendChild(list);
}

export function renderSummary(container: HTMLElement, view: SummaryView): void {
  container.replaceChildren();
  container.appendChild(el('h2', undefined, view.headline));
  if (view.etaFinal.length > 0) {
    container.appendChild(
      el('p', undefined, `final mixture weights: ${view.etaFinal.map((v) => v.toFixed(3)).join(', ')}`),
    );
  }
}

export function renderBanner(container: HTMLElement, message: string | null,
                             onRetry?: () => void): void {
  container.replaceChildren();
  if (!message) return;
  const banner = el('div', 'banner', message);
  if (onRetry) {
    const button = el('button', 'retry-button', 'retry') as HTMLButtonElement;
    button.addEventListener('click', onRetry);
    banner.appendChild(button);
  }
  container.appendChild(banner);
}
