import { afterEach, describe, expect, it, vi } from 'vitest';

import { ServiceClient } from '../src/api.js';
import { progressLabel, progressState, refreshProgress, renderProgress } from '../src/progress.js';

function countsResponse(left: number, right: number): Response {
  return new Response(JSON.stringify({ user: 'ada', counts: { left, right } }), {
    status: 200,
    headers: { 'content-type': 'application/json' },
  });
}

afterEach(() => {
  vi.restoreAllMocks();
});

describe('progress states', () => {
  it('maps counts to blank / partial / full', () => {
    expect(progressState(0)).toBe('blank');
    expect(progressState(1)).toBe('partial');
    expect(progressState(2)).toBe('partial');
    expect(progressState(3)).toBe('full');
  });

  it('labels counts out of three', () => {
    expect(progressLabel(0)).toBe('0/3');
    expect(progressLabel(1)).toBe('1/3');
    expect(progressLabel(3)).toBe('3/3');
  });

  it('renders text and state onto the element', () => {
    const el = document.createElement('span');
    renderProgress(el, 2);
    expect(el.textContent).toBe('2/3');
    expect(el.dataset.state).toBe('partial');
  });
});

describe('progress follows live service counts', () => {
  it('renders 0/3 then 1/3 then 3/3 across enrollments', async () => {
    const sequence = [countsResponse(0, 0), countsResponse(1, 0), countsResponse(3, 0)];
    vi.stubGlobal('fetch', vi.fn(async () => sequence.shift()!));

    const client = new ServiceClient('');
    const els = { left: document.createElement('span'), right: document.createElement('span') };

    await refreshProgress(client, 'ada', els);
    expect(els.left.textContent).toBe('0/3');
    expect(els.left.dataset.state).toBe('blank');

    await refreshProgress(client, 'ada', els);
    expect(els.left.textContent).toBe('1/3');
    expect(els.left.dataset.state).toBe('partial');

    await refreshProgress(client, 'ada', els);
    expect(els.left.textContent).toBe('3/3');
    expect(els.left.dataset.state).toBe('full');
    expect(els.right.textContent).toBe('0/3');
  });

  it('leaves the display alone when the service is unreachable', async () => {
    vi.stubGlobal('fetch', vi.fn(async () => {
      throw new Error('down');
    }));
    const client = new ServiceClient('');
    const els = { left: document.createElement('span'), right: document.createElement('span') };
    renderProgress(els.left, 2);
    const result = await refreshProgress(client, 'ada', els);
    expect(result).toBeNull();
    expect(els.left.textContent).toBe('2/3');
  });
});
