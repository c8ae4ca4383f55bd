/** Operator-side session state machine, free of DOM and socket concerns.
 *
 * Holds the one pending frame, the stats snapshot, the error banner, and
 * at most one in-flight command. Keys and drags produce commands only
 * when nothing is awaiting an ack; local state changes only when the
 * server acks (or errors), so the view can never run ahead of the
 * session it mirrors.
 */

import { CanvasRect, toNormalized } from "./geometry.js";
import { intentForKey } from "./keys.js";
import { buildOverlays, Overlay } from "./overlay.js";
import {
  Command,
  commands,
  FrameMessage,
  parseServerMessage,
  ServerMessage,
  StatsMessage,
} from "./protocol.js";

export type ConnectionState = "connecting" | "live" | "ended" | "rejected";

export class SessionView {
  readonly classNames: readonly string[];
  connection: ConnectionState = "connecting";
  pendingFrame: FrameMessage | null = null;
  stats: StatsMessage | null = null;
  banner: string | null = null;
  activeClass = 0;
  highlighted: number | null = null;
  private inflightCommand: Command | null = null;
  private quitRequested = false;

  constructor(classNames: readonly string[] = []) {
    this.classNames = classNames;
  }

  get inflight(): Command | null {
    return this.inflightCommand;
  }

  get awaitingAck(): boolean {
    return this.inflightCommand !== null;
  }

  get noDetections(): boolean {
    return this.pendingFrame !== null && this.pendingFrame.detections.length === 0;
  }

  overlays(canvasW: number, canvasH: number): Overlay[] {
    const detections = this.pendingFrame?.detections ?? [];
    return buildOverlays(detections, canvasW, canvasH, this.classNames);
  }

  onOpen(): void {
    if (this.connection === "connecting") this.connection = "live";
  }

  onClose(): void {
    this.inflightCommand = null;
    if (this.connection === "rejected" || this.connection === "ended") return;
    this.connection = this.quitRequested ? "ended" : "connecting";
  }

  /** Parse and apply one raw server message. */
  receive(raw: string): ServerMessage {
    const msg = parseServerMessage(raw);
    this.apply(msg);
    return msg;
  }

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case "frame":
        this.pendingFrame = msg;
        this.highlighted = msg.detections.length > 0 ? 0 : null;
        this.inflightCommand = null;
        this.banner = null;
        return;
      case "ack":
        this.applyAck();
        return;
      case "stats":
        this.stats = msg;
        this.activeClass = msg.active_class;
        if (msg.final) this.connection = "ended";
        return;
      case "error":
        this.applyError(msg.reason, msg.pending_frame_id);
        return;
    }
  }

  private applyAck(): void {
    const cmd = this.inflightCommand;
    this.inflightCommand = null;
    const frame = this.pendingFrame;
    if (cmd === null || frame === null) return;
    switch (cmd.action) {
      case "set_class":
        if (cmd.class_id !== undefined) {
          this.activeClass = cmd.class_id;
          for (const d of frame.detections) d.class_id = cmd.class_id;
        }
        return;
      case "adjust_box":
        if (cmd.index !== undefined && cmd.box !== undefined) {
          const target = frame.detections[cmd.index];
          if (target !== undefined) {
            target.class_id = cmd.box.class_id;
            target.cx = cmd.box.cx;
            target.cy = cmd.box.cy;
            target.w = cmd.box.w;
            target.h = cmd.box.h;
          }
        }
        return;
      case "delete_box":
        if (cmd.index !== undefined) {
          frame.detections.splice(cmd.index, 1);
          this.highlighted =
            frame.detections.length > 0
              ? Math.min(cmd.index, frame.detections.length - 1)
              : null;
        }
        return;
      case "quit":
        this.quitRequested = true;
        return;
      default:
        return; // save/skip conclude server-side; the next frame replaces the view
    }
  }

  private applyError(reason: string, pendingFrameId?: number): void {
    this.inflightCommand = null;
    if (reason === "busy") {
      this.connection = "rejected";
      this.banner = "another operator is already connected";
      return;
    }
    if (reason === "stale_frame") {
      const suffix = pendingFrameId === undefined ? "" : `; server is on frame ${pendingFrameId}`;
      this.banner = `stale frame command rejected${suffix}`;
      return;
    }
    this.banner = reason;
  }

  /** Map a key press to an outgoing command, or null when nothing should
   * be sent (unknown key, command in flight, or local-only intent). */
  keyCommand(key: string): Command | null {
    const intent = intentForKey(key);
    if (intent === null) return null;
    if (intent.kind === "cycle_highlight") {
      this.cycleHighlight();
      return null;
    }
    if (this.awaitingAck || this.connection !== "live") return null;
    const frame = this.pendingFrame;
    if (frame === null) return null;
    switch (intent.kind) {
      case "save":
        return this.track(commands.save(frame.frame_id));
      case "skip":
        return this.track(commands.skip(frame.frame_id));
      case "quit":
        return this.track(commands.quit(frame.frame_id));
      case "set_class":
        if (this.classNames.length > 0 && intent.classId >= this.classNames.length) {
          return null;
        }
        return this.track(commands.setClass(frame.frame_id, intent.classId));
      case "delete_box":
        if (this.highlighted === null) return null;
        return this.track(commands.deleteBox(frame.frame_id, this.highlighted));
    }
  }

  /** Conclude a corner drag: emit adjust_box with the edited geometry
   * normalized and clamped into [0, 1]. */
  adjustCommand(
    index: number,
    rect: CanvasRect,
    canvasW: number,
    canvasH: number,
  ): Command | null {
    if (this.awaitingAck || this.connection !== "live") return null;
    const frame = this.pendingFrame;
    if (frame === null) return null;
    const current = frame.detections[index];
    if (current === undefined) return null;
    const edited = toNormalized(rect, canvasW, canvasH);
    return this.track(
      commands.adjustBox(frame.frame_id, index, {
        class_id: current.class_id,
        ...edited,
      }),
    );
  }

  private cycleHighlight(): void {
    const n = this.pendingFrame?.detections.length ?? 0;
    if (n === 0) {
      this.highlighted = null;
      return;
    }
    this.highlighted = this.highlighted === null ? 0 : (this.highlighted + 1) % n;
  }

  private track(cmd: Command): Command {
    this.inflightCommand = cmd;
    return cmd;
  }
}
