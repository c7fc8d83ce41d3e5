import type { ContourOverlay } from './types.js';

export interface OverlayStyle {
  stale: boolean;
  scale: number; // canvas pixels per image pixel
}

/** Draw contour polylines plus seed / border markers onto a 2D context.
 *  Stale overlays (a drag reply still in flight) render dashed. */
export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  overlay: ContourOverlay,
  style: OverlayStyle,
): void {
  const s = style.scale;
  ctx.save();
  ctx.lineWidth = 1.5;
  ctx.strokeStyle = style.stale ? 'rgba(255,80,80,0.45)' : 'rgb(255,60,60)';
  ctx.setLineDash(style.stale ? [4, 3] : []);
  for (const polyline of overlay.polylines) {
    if (polyline.length < 2) continue;
    ctx.beginPath();
    const first = polyline[0]!;
    ctx.moveTo((first[0] + 0.5) * s, (first[1] + 0.5) * s);
    for (let i = 1; i < polyline.length; i++) {
      const p = polyline[i]!;
      ctx.lineTo((p[0] + 0.5) * s, (p[1] + 0.5) * s);
    }
    ctx.closePath();
    ctx.stroke();
  }
  ctx.setLineDash([]);
  if (overlay.seed) {
    drawCross(ctx, overlay.seed[0] * s + 0.5 * s, overlay.seed[1] * s + 0.5 * s,
              6, 'rgb(80,140,255)');
  }
  for (const marker of overlay.border_seeds) {
    drawCross(ctx, marker[0] * s + 0.5 * s, marker[1] * s + 0.5 * s,
              4, 'rgb(255,210,60)');
  }
  ctx.restore();
}

function drawCross(
  ctx: CanvasRenderingContext2D,
  x: number,
  y: number,
  r: number,
  color: string,
): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(x - r, y);
  ctx.lineTo(x + r, y);
  ctx.moveTo(x, y - r);
  ctx.lineTo(x, y + r);
  ctx.stroke();
}
