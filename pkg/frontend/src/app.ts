// Browser wiring: camera preview with detection overlay, shutter, and the
// enroll/verify/reset flows. All logic lives in the imported modules; this
// file only connects DOM elements to them.

import { DetectResponse, Palm, ServiceClient } from './api.js';
import { enrollMessage, showMessage, verifyMessage } from './flows.js';
import { applyOverlay } from './overlay.js';
import { refreshProgress } from './progress.js';
import { STRINGS } from './strings.js';

const DETECT_INTERVAL_MS = 600;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setup(): void {
  const client = new ServiceClient('');
  const video = el<HTMLVideoElement>('preview');
  const overlay = el<HTMLCanvasElement>('overlay');
  const snapshot = el<HTMLCanvasElement>('snapshot');
  const hint = el<HTMLElement>('hint');
  const message = el<HTMLElement>('message');
  const userInput = el<HTMLInputElement>('user');
  const upload = el<HTMLInputElement>('upload');
  const progressEls = { left: el<HTMLElement>('progress-left'), right: el<HTMLElement>('progress-right') };

  const grabCanvas = document.createElement('canvas');
  let frozenFrame: Blob | null = null;
  let detectInFlight = false;
  let cameraOn = false;

  function user(): string {
    return userInput.value.trim();
  }

  function currentFrameBlob(): Promise<Blob | null> {
    if (!cameraOn || video.videoWidth === 0) return Promise.resolve(null);
    grabCanvas.width = video.videoWidth;
    grabCanvas.height = video.videoHeight;
    const ctx = grabCanvas.getContext('2d');
    if (!ctx) return Promise.resolve(null);
    ctx.drawImage(video, 0, 0);
    return new Promise((resolve) => grabCanvas.toBlob(resolve, 'image/png'));
  }

  async function detectLoop(): Promise<void> {
    // at most one in-flight /detect: frames are dropped, never queued
    if (!detectInFlight) {
      const frame = await currentFrameBlob();
      if (frame) {
        detectInFlight = true;
        try {
          const { status, body } = await client.detect(frame);
          const response: DetectResponse | null = status === 200 ? body : null;
          overlay.width = video.clientWidth;
          overlay.height = video.clientHeight;
          const ctx = overlay.getContext('2d');
          if (ctx) {
            const sx = video.clientWidth / video.videoWidth;
            const sy = video.clientHeight / video.videoHeight;
            const visible = applyOverlay(overlay, ctx, response, sx, sy);
            hint.hidden = visible;
          }
        } finally {
          detectInFlight = false;
        }
      }
    }
    window.setTimeout(detectLoop, DETECT_INTERVAL_MS);
  }

  async function startCamera(): Promise<void> {
    try {
      const stream = await navigator.mediaDevices.getUserMedia({ video: true });
      video.srcObject = stream;
      await video.play();
      cameraOn = true;
      void detectLoop();
    } catch {
      cameraOn = false;
      showMessage(message, { kind: 'info', text: STRINGS.noCamera });
      el<HTMLElement>('camera-panel').dataset.mode = 'upload-only';
    }
  }

  function drawSnapshot(blob: Blob): void {
    const url = URL.createObjectURL(blob);
    const img = new Image();
    img.onload = () => {
      snapshot.width = img.width;
      snapshot.height = img.height;
      snapshot.getContext('2d')?.drawImage(img, 0, 0);
      snapshot.hidden = false;
      URL.revokeObjectURL(url);
    };
    img.src = url;
  }

  el<HTMLButtonElement>('shutter').addEventListener('click', async () => {
    const frame = await currentFrameBlob();
    if (!frame) {
      showMessage(message, { kind: 'info', text: STRINGS.needFrame });
      return;
    }
    frozenFrame = frame;
    drawSnapshot(frame);
    showMessage(message, { kind: 'info', text: 'Frame captured' });
  });

  upload.addEventListener('change', () => {
    const file = upload.files?.[0];
    if (file) {
      frozenFrame = file;
      drawSnapshot(file);
      showMessage(message, { kind: 'info', text: `Loaded ${file.name}` });
    }
  });

  async function requireInputs(): Promise<Blob | null> {
    if (!user()) {
      showMessage(message, { kind: 'info', text: STRINGS.needUser });
      return null;
    }
    const frame = frozenFrame ?? (await currentFrameBlob());
    if (!frame) {
      showMessage(message, { kind: 'info', text: STRINGS.needFrame });
      return null;
    }
    return frame;
  }

  async function refresh(): Promise<void> {
    if (user()) {
      await refreshProgress(client, user(), progressEls);
    }
  }

  function enrollHandler(palm: Palm): () => Promise<void> {
    return async () => {
      const frame = await requireInputs();
      if (!frame) return;
      const { status, body } = await client.enroll(user(), palm, frame);
      showMessage(message, enrollMessage(status, body, palm));
      await refresh();
    };
  }

  el<HTMLButtonElement>('enroll-left').addEventListener('click', enrollHandler('left'));
  el<HTMLButtonElement>('enroll-right').addEventListener('click', enrollHandler('right'));

  el<HTMLButtonElement>('verify').addEventListener('click', async () => {
    const frame = await requireInputs();
    if (!frame) return;
    const { status, body } = await client.verify(user(), frame);
    showMessage(message, verifyMessage(status, body));
  });

  function resetHandler(palm: Palm): () => Promise<void> {
    return async () => {
      if (!user()) {
        showMessage(message, { kind: 'info', text: STRINGS.needUser });
        return;
      }
      const { status } = await client.reset(user(), palm);
      showMessage(
        message,
        status === 200
          ? { kind: 'info', text: `Reset the ${palm} palm` }
          : { kind: 'error', text: STRINGS.networkError },
      );
      await refresh();
    };
  }

  el<HTMLButtonElement>('reset-left').addEventListener('click', resetHandler('left'));
  el<HTMLButtonElement>('reset-right').addEventListener('click', resetHandler('right'));

  userInput.addEventListener('change', refresh);

  void startCamera();
  void refresh();
}

document.addEventListener('DOMContentLoaded', setup);
