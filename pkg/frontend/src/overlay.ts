// Detection overlay drawn on a canvas stacked over the video element.

import type { DetectResponse } from './types.js';

const BOX_COLOR = '#ffd400';
const TEXT_COLOR = '#111111';

export function drawDetections(
  canvas: HTMLCanvasElement,
  response: DetectResponse,
): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    return;
  }
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const scaleX = canvas.width / response.image.width;
  const scaleY = canvas.height / response.image.height;
  ctx.lineWidth = 3;
  ctx.font = 'bold 18px system-ui, sans-serif';
  for (const detection of response.detections) {
    const x = detection.box.xmin * scaleX;
    const y = detection.box.ymin * scaleY;
    const w = (detection.box.xmax - detection.box.xmin) * scaleX;
    const h = (detection.box.ymax - detection.box.ymin) * scaleY;
    ctx.strokeStyle = BOX_COLOR;
    ctx.strokeRect(x, y, w, h);
    const caption = `${detection.label} ${(detection.score * 100).toFixed(0)}%`;
    const textWidth = ctx.measureText(caption).width;
    ctx.fillStyle = BOX_COLOR;
    ctx.fillRect(x, Math.max(0, y - 24), textWidth + 12, 24);
    ctx.fillStyle = TEXT_COLOR;
    ctx.fillText(caption, x + 6, Math.max(18, y - 6));
  }
}

export function clearOverlay(canvas: HTMLCanvasElement): void {
  canvas.getContext('2d')?.clearRect(0, 0, canvas.width, canvas.height);
}
