/** Wire schema of the annotation gateway's WebSocket endpoint.
 *
 * Field names here are the contract; the server validates commands and
 * replies with `ack`, `error`, `stats`, and `frame` messages. Every
 * command names the frame it targets so stale input is rejected.
 */

export type Outcome = "detection" | "non_detection" | "error";

export interface WireDetection {
  class_id: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
  conf: number;
}

export interface WireBox {
  class_id: number;
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface FrameMessage {
  type: "frame";
  frame_id: number;
  image_b64: string;
  detections: WireDetection[];
  latency_ms: number;
  outcome: Outcome;
}

export type CommandAction =
  | "save"
  | "skip"
  | "set_class"
  | "adjust_box"
  | "delete_box"
  | "quit";

export interface Command {
  type: "command";
  frame_id: number;
  action: CommandAction;
  class_id?: number;
  index?: number;
  box?: WireBox;
}

export interface AckMessage {
  type: "ack";
  frame_id: number;
  action: CommandAction;
}

export interface ErrorMessage {
  type: "error";
  reason: string;
  frame_id?: number;
  pending_frame_id?: number;
}

export interface LatencyBlock {
  count: number;
  mean_ms: number | null;
  min_ms: number | null;
  max_ms: number | null;
}

export interface StatsMessage {
  type: "stats";
  frames_processed: number;
  frames_saved: number;
  frames_skipped: number;
  error_frames: number;
  latency_overall: LatencyBlock;
  latency_detection: LatencyBlock;
  latency_non_detection: LatencyBlock;
  active_class: number;
  final?: boolean;
}

export type ServerMessage = FrameMessage | AckMessage | ErrorMessage | StatsMessage;

const SERVER_TYPES = new Set(["frame", "ack", "error", "stats"]);

export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new Error(`not JSON: ${raw.slice(0, 80)}`);
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    throw new Error("server message must be a JSON object");
  }
  const type = (data as { type?: unknown }).type;
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) {
    throw new Error(`unknown server message type: ${String(type)}`);
  }
  return data as ServerMessage;
}

export const commands = {
  save(frameId: number): Command {
    return { type: "command", frame_id: frameId, action: "save" };
  },
  skip(frameId: number): Command {
    return { type: "command", frame_id: frameId, action: "skip" };
  },
  setClass(frameId: number, classId: number): Command {
    return { type: "command", frame_id: frameId, action: "set_class", class_id: classId };
  },
  adjustBox(frameId: number, index: number, box: WireBox): Command {
    return { type: "command", frame_id: frameId, action: "adjust_box", index, box };
  },
  deleteBox(frameId: number, index: number): Command {
    return { type: "command", frame_id: frameId, action: "delete_box", index };
  },
  quit(frameId: number): Command {
    return { type: "command", frame_id: frameId, action: "quit" };
  },
};
