/** Normalized box <-> canvas pixel mapping and drag editing.
 *
 * Boxes travel the wire center-based and normalized to [0, 1]; the canvas
 * draws top-left pixel rects. The drag pipeline works in whole pixels, so
 * a map-edit-unmap round trip may move a coordinate by at most half a
 * pixel — under the one-pixel alignment budget.
 */

export interface NormBox {
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface CanvasRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export function clamp(value: number, lo: number, hi: number): number {
  return Math.min(Math.max(value, lo), hi);
}

export function toCanvasRect(box: NormBox, canvasW: number, canvasH: number): CanvasRect {
  return {
    x: (box.cx - box.w / 2) * canvasW,
    y: (box.cy - box.h / 2) * canvasH,
    w: box.w * canvasW,
    h: box.h * canvasH,
  };
}

/** Inverse of toCanvasRect with edges clamped into the canvas. */
export function toNormalized(rect: CanvasRect, canvasW: number, canvasH: number): NormBox {
  const x1 = clamp(rect.x / canvasW, 0, 1);
  const y1 = clamp(rect.y / canvasH, 0, 1);
  const x2 = clamp((rect.x + rect.w) / canvasW, 0, 1);
  const y2 = clamp((rect.y + rect.h) / canvasH, 0, 1);
  return {
    cx: (x1 + x2) / 2,
    cy: (y1 + y2) / 2,
    w: x2 - x1,
    h: y2 - y1,
  };
}

export function roundRect(rect: CanvasRect): CanvasRect {
  return {
    x: Math.round(rect.x),
    y: Math.round(rect.y),
    w: Math.round(rect.w),
    h: Math.round(rect.h),
  };
}

export type Corner = "nw" | "ne" | "sw" | "se";

/** Move one corner by (dx, dy) pixels; the opposite corner stays put.
 * Degenerate drags keep at least a one-pixel extent. */
export function resizeByCorner(
  rect: CanvasRect,
  corner: Corner,
  dx: number,
  dy: number,
): CanvasRect {
  let x1 = rect.x;
  let y1 = rect.y;
  let x2 = rect.x + rect.w;
  let y2 = rect.y + rect.h;
  if (corner === "nw" || corner === "sw") x1 += dx;
  else x2 += dx;
  if (corner === "nw" || corner === "ne") y1 += dy;
  else y2 += dy;
  if (x2 < x1) [x1, x2] = [x2, x1];
  if (y2 < y1) [y1, y2] = [y2, y1];
  x2 = Math.max(x2, x1 + 1);
  y2 = Math.max(y2, y1 + 1);
  return { x: x1, y: y1, w: x2 - x1, h: y2 - y1 };
}

/** Hit test for drag handles: which corner of the rect is within reach. */
export function cornerAt(rect: CanvasRect, px: number, py: number, reach = 8): Corner | null {
  const corners: [Corner, number, number][] = [
    ["nw", rect.x, rect.y],
    ["ne", rect.x + rect.w, rect.y],
    ["sw", rect.x, rect.y + rect.h],
    ["se", rect.x + rect.w, rect.y + rect.h],
  ];
  for (const [name, cx, cy] of corners) {
    if (Math.abs(px - cx) <= reach && Math.abs(py - cy) <= reach) return name;
  }
  return null;
}
