/** Detection overlays and the stats side panel, as plain view data. */

import { CanvasRect, toCanvasRect } from "./geometry.js";
import { LatencyBlock, StatsMessage, WireDetection } from "./protocol.js";

export interface Overlay {
  rect: CanvasRect;
  classId: number;
  conf: number;
  label: string;
}

export function classNameOf(classId: number, classNames: readonly string[]): string {
  return classNames[classId] ?? `class ${classId}`;
}

export function buildOverlays(
  detections: readonly WireDetection[],
  canvasW: number,
  canvasH: number,
  classNames: readonly string[],
): Overlay[] {
  return detections.map((d) => ({
    rect: toCanvasRect(d, canvasW, canvasH),
    classId: d.class_id,
    conf: d.conf,
    label: `${classNameOf(d.class_id, classNames)} ${d.conf.toFixed(2)}`,
  }));
}

function latencyLine(name: string, block: LatencyBlock): string {
  if (block.count === 0 || block.mean_ms === null) return `${name}: —`;
  return `${name}: ${block.mean_ms.toFixed(1)} ms mean (n=${block.count})`;
}

/** Side-panel lines: counters plus per-outcome latency means. */
export function statsLines(stats: StatsMessage | null): string[] {
  if (stats === null) return ["no stats yet"];
  return [
    `frames ${stats.frames_processed} · saved ${stats.frames_saved}` +
      ` · skipped ${stats.frames_skipped} · errors ${stats.error_frames}`,
    latencyLine("overall", stats.latency_overall),
    latencyLine("detection", stats.latency_detection),
    latencyLine("non-detection", stats.latency_non_detection),
  ];
}
