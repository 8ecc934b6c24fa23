// Per-palm enrollment progress. The service's GET /enrollments counts are the
// only truth: the UI re-fetches after every mutation instead of tracking its
// own tallies.

import { Counts, ServiceClient } from './api.js';

export type ProgressState = 'blank' | 'partial' | 'full';

export function progressState(count: number): ProgressState {
  if (count <= 0) return 'blank';
  if (count >= 3) return 'full';
  return 'partial';
}

export function progressLabel(count: number): string {
  return `${Math.max(0, Math.min(3, count))}/3`;
}

export function renderProgress(el: HTMLElement, count: number): void {
  el.textContent = progressLabel(count);
  el.dataset.state = progressState(count);
}

export interface ProgressElements {
  left: HTMLElement;
  right: HTMLElement;
}

export async function refreshProgress(
  client: ServiceClient,
  user: string,
  els: ProgressElements,
): Promise<Counts | null> {
  const { status, body } = await client.counts(user);
  if (status !== 200 || !body) {
    return null;
  }
  renderProgress(els.left, body.counts.left);
  renderProgress(els.right, body.counts.right);
  return body.counts;
}
