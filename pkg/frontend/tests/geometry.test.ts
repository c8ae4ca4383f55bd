import { describe, expect, it } from "vitest";

import {
  clamp,
  cornerAt,
  resizeByCorner,
  roundRect,
  toCanvasRect,
  toNormalized,
} from "../src/geometry.js";

const CANVAS_SIZES: [number, number][] = [
  [640, 640],
  [1280, 720],
  [333, 217],
];

/** Small deterministic generator so failures reproduce. */
function makeRand(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

function randomBox(rand: () => number) {
  const w = 0.05 + rand() * 0.9;
  const h = 0.05 + rand() * 0.9;
  return {
    cx: w / 2 + rand() * (1 - w),
    cy: h / 2 + rand() * (1 - h),
    w,
    h,
  };
}

describe("normalized/canvas mapping", () => {
  it("is an exact inverse without pixel rounding", () => {
    const rand = makeRand(1);
    for (const [cw, ch] of CANVAS_SIZES) {
      for (let i = 0; i < 100; i += 1) {
        const box = randomBox(rand);
        const back = toNormalized(toCanvasRect(box, cw, ch), cw, ch);
        expect(Math.abs(back.cx - box.cx)).toBeLessThanOrEqual(1e-12);
        expect(Math.abs(back.cy - box.cy)).toBeLessThanOrEqual(1e-12);
        expect(Math.abs(back.w - box.w)).toBeLessThanOrEqual(1e-12);
        expect(Math.abs(back.h - box.h)).toBeLessThanOrEqual(1e-12);
      }
    }
  });

  it("round trips through whole-pixel rects within one pixel equivalent", () => {
    const rand = makeRand(2);
    for (const [cw, ch] of CANVAS_SIZES) {
      for (let i = 0; i < 200; i += 1) {
        const box = randomBox(rand);
        const pixelRect = roundRect(toCanvasRect(box, cw, ch));
        const back = toNormalized(pixelRect, cw, ch);
        expect(Math.abs(back.cx - box.cx)).toBeLessThan(1 / cw);
        expect(Math.abs(back.cy - box.cy)).toBeLessThan(1 / ch);
        expect(Math.abs(back.w - box.w)).toBeLessThan(1 / cw);
        expect(Math.abs(back.h - box.h)).toBeLessThan(1 / ch);
      }
    }
  });

  it("clamps rects that extend past the canvas into [0, 1]", () => {
    const box = toNormalized({ x: -50, y: -20, w: 800, h: 900 }, 640, 480);
    expect(box).toEqual({ cx: 0.5, cy: 0.5, w: 1, h: 1 });
    const corner = toNormalized({ x: 600, y: 440, w: 100, h: 100 }, 640, 480);
    expect(corner.cx + corner.w / 2).toBeLessThanOrEqual(1);
    expect(corner.cy + corner.h / 2).toBeLessThanOrEqual(1);
    expect(corner.w).toBeGreaterThan(0);
  });

  it("clamp is a plain interval clamp", () => {
    expect(clamp(-0.2, 0, 1)).toBe(0);
    expect(clamp(0.4, 0, 1)).toBe(0.4);
    expect(clamp(7, 0, 1)).toBe(1);
  });
});

describe("corner dragging", () => {
  const base = { x: 100, y: 80, w: 60, h: 40 };

  it("dragging the south-east corner outward grows the box", () => {
    const grown = resizeByCorner(base, "se", 15, 9);
    expect(grown).toEqual({ x: 100, y: 80, w: 75, h: 49 });
  });

  it("dragging the north-west corner outward grows and shifts", () => {
    const grown = resizeByCorner(base, "nw", -10, -5);
    expect(grown).toEqual({ x: 90, y: 75, w: 70, h: 45 });
  });

  it("crossing over the opposite corner flips instead of inverting", () => {
    const flipped = resizeByCorner(base, "se", -100, -60);
    expect(flipped.w).toBeGreaterThanOrEqual(1);
    expect(flipped.h).toBeGreaterThanOrEqual(1);
    expect(flipped.x).toBeLessThanOrEqual(base.x);
  });

  it("never collapses below one pixel", () => {
    const thin = resizeByCorner(base, "se", -60, -40);
    expect(thin.w).toBeGreaterThanOrEqual(1);
    expect(thin.h).toBeGreaterThanOrEqual(1);
  });

  it("corner hit testing finds handles and misses the interior", () => {
    expect(cornerAt(base, 101, 81)).toBe("nw");
    expect(cornerAt(base, 160, 120)).toBe("se");
    expect(cornerAt(base, 130, 100)).toBeNull();
  });
});
