// Detection overlay: class-colored boxes plus the ROI quad, drawn over the
// live preview. The drawing context is a structural subset of
// CanvasRenderingContext2D so tests can record calls without a real canvas.

import { DetectResponse } from './api.js';

export interface OverlayContext {
  lineWidth: number;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
}

export const CLASS_COLORS: Record<number, string> = {
  0: '#27c93f', // double-finger-gap
  1: '#2d9cdb', // palm-center
};
export const QUAD_COLOR = '#eb5757';

export function overlayVisible(response: DetectResponse | null): boolean {
  return response?.status === 'ok';
}

export function drawOverlay(
  ctx: OverlayContext,
  width: number,
  height: number,
  response: DetectResponse,
  scaleX: number,
  scaleY: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.lineWidth = 2;
  for (const det of response.detections) {
    ctx.strokeStyle = CLASS_COLORS[det.class_id] ?? '#ffffff';
    ctx.strokeRect(
      (det.center.x - det.width / 2) * scaleX,
      (det.center.y - det.height / 2) * scaleY,
      det.width * scaleX,
      det.height * scaleY,
    );
  }
  const quad = response.roi_quad;
  if (quad && quad.length === 4) {
    ctx.strokeStyle = QUAD_COLOR;
    ctx.beginPath();
    ctx.moveTo(quad[0].x * scaleX, quad[0].y * scaleY);
    for (const corner of quad.slice(1)) {
      ctx.lineTo(corner.x * scaleX, corner.y * scaleY);
    }
    ctx.closePath();
    ctx.stroke();
  }
}

/** Draw or hide the overlay canvas for one /detect response. */
export function applyOverlay(
  canvas: HTMLCanvasElement,
  ctx: OverlayContext,
  response: DetectResponse | null,
  scaleX: number,
  scaleY: number,
): boolean {
  if (!overlayVisible(response) || response === null) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    canvas.hidden = true;
    return false;
  }
  canvas.hidden = false;
  drawOverlay(ctx, canvas.width, canvas.height, response, scaleX, scaleY);
  return true;
}
