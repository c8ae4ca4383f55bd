import { describe, expect, it } from "vitest";

import { SessionView } from "../src/viewmodel.js";
import { statsLines } from "../src/overlay.js";
import type { StatsMessage } from "../src/protocol.js";

function frameJson(frameId: number, detections: object[]): string {
  return JSON.stringify({
    type: "frame",
    frame_id: frameId,
    image_b64: "",
    detections,
    latency_ms: 42.0,
    outcome: detections.length > 0 ? "detection" : "non_detection",
  });
}

const TWO_DETS = [
  { class_id: 0, cx: 0.3, cy: 0.3, w: 0.2, h: 0.2, conf: 0.9 },
  { class_id: 1, cx: 0.7, cy: 0.7, w: 0.2, h: 0.2, conf: 0.8 },
];

function ackJson(frameId: number, action: string): string {
  return JSON.stringify({ type: "ack", frame_id: frameId, action });
}

function statsJson(overrides: Partial<StatsMessage> = {}): string {
  const empty = { count: 0, mean_ms: null, min_ms: null, max_ms: null };
  return JSON.stringify({
    type: "stats",
    frames_processed: 1,
    frames_saved: 0,
    frames_skipped: 0,
    error_frames: 0,
    latency_overall: { count: 1, mean_ms: 42, min_ms: 42, max_ms: 42 },
    latency_detection: { count: 1, mean_ms: 42, min_ms: 42, max_ms: 42 },
    latency_non_detection: empty,
    active_class: 0,
    ...overrides,
  });
}

function liveView(names: string[] = ["weed", "crop"]): SessionView {
  const view = new SessionView(names);
  view.onOpen();
  view.receive(frameJson(0, TWO_DETS));
  return view;
}

describe("frame display", () => {
  it("shows the pending frame with labelled overlays", () => {
    const view = liveView();
    expect(view.connection).toBe("live");
    expect(view.pendingFrame?.frame_id).toBe(0);
    const overlays = view.overlays(640, 480);
    expect(overlays).toHaveLength(2);
    expect(overlays[0]?.label).toBe("weed 0.90");
    expect(overlays[1]?.label).toBe("crop 0.80");
    expect(overlays[0]?.rect.x).toBeCloseTo((0.3 - 0.1) * 640, 9);
    expect(view.highlighted).toBe(0);
    expect(view.noDetections).toBe(false);
  });

  it("falls back to numeric class labels without configured names", () => {
    const view = new SessionView();
    view.onOpen();
    view.receive(frameJson(0, TWO_DETS));
    expect(view.overlays(100, 100)[1]?.label).toBe("class 1 0.80");
  });

  it("flags frames with no detections", () => {
    const view = new SessionView(["weed"]);
    view.onOpen();
    view.receive(frameJson(3, []));
    expect(view.noDetections).toBe(true);
    expect(view.highlighted).toBeNull();
    expect(view.overlays(640, 480)).toHaveLength(0);
  });

  it("rejects malformed server payloads", () => {
    const view = new SessionView();
    expect(() => view.receive("{not json")).toThrow(/not JSON/);
    expect(() => view.receive('{"type": "surprise"}')).toThrow(/unknown server message/);
  });
});

describe("keyboard commands", () => {
  it("Enter emits exactly one save until the ack arrives", () => {
    const view = liveView();
    const cmd = view.keyCommand("Enter");
    expect(cmd).toEqual({ type: "command", frame_id: 0, action: "save" });
    expect(view.keyCommand("Enter")).toBeNull();
    expect(view.awaitingAck).toBe(true);
    view.receive(ackJson(0, "save"));
    expect(view.awaitingAck).toBe(false);
    expect(view.keyCommand("Enter")).not.toBeNull();
  });

  it("maps S, Q and digits to their actions", () => {
    expect(liveView().keyCommand("s")?.action).toBe("skip");
    expect(liveView().keyCommand("q")?.action).toBe("quit");
    const cmd = liveView().keyCommand("1");
    expect(cmd).toEqual({ type: "command", frame_id: 0, action: "set_class", class_id: 1 });
  });

  it("ignores digits beyond the configured class map", () => {
    expect(liveView(["weed", "crop"]).keyCommand("5")).toBeNull();
    expect(new SessionView().keyCommand("5")).toBeNull(); // no frame yet
  });

  it("ignores unknown keys and commands before the first frame", () => {
    const view = new SessionView(["weed"]);
    view.onOpen();
    expect(view.keyCommand("Enter")).toBeNull();
    expect(view.keyCommand("z")).toBeNull();
  });

  it("set_class ack updates the indicator and the displayed boxes", () => {
    const view = liveView();
    view.keyCommand("1");
    view.receive(ackJson(0, "set_class"));
    expect(view.activeClass).toBe(1);
    expect(view.pendingFrame?.detections.every((d) => d.class_id === 1)).toBe(true);
  });

  it("D deletes the highlighted box once acked", () => {
    const view = liveView();
    view.keyCommand("Tab"); // highlight the second box
    expect(view.highlighted).toBe(1);
    const cmd = view.keyCommand("d");
    expect(cmd).toEqual({ type: "command", frame_id: 0, action: "delete_box", index: 1 });
    view.receive(ackJson(0, "delete_box"));
    expect(view.pendingFrame?.detections).toHaveLength(1);
    expect(view.highlighted).toBe(0);
  });

  it("Tab cycles the highlight locally without sending", () => {
    const view = liveView();
    expect(view.keyCommand("Tab")).toBeNull();
    expect(view.highlighted).toBe(1);
    view.keyCommand("Tab");
    expect(view.highlighted).toBe(0);
    expect(view.awaitingAck).toBe(false);
  });
});

describe("box editing", () => {
  it("emits adjust_box with clamped normalized geometry", () => {
    const view = liveView();
    const cmd = view.adjustCommand(0, { x: -10, y: 20, w: 200, h: 100 }, 640, 480);
    expect(cmd?.action).toBe("adjust_box");
    expect(cmd?.index).toBe(0);
    const box = cmd?.box!;
    expect(box.class_id).toBe(0);
    expect(box.cx - box.w / 2).toBeGreaterThanOrEqual(0);
    expect(box.cx + box.w / 2).toBeLessThanOrEqual(1);
    expect(box.cy).toBeCloseTo((20 / 480 + 120 / 480) / 2, 12);
  });

  it("applies the edit to the displayed box on ack", () => {
    const view = liveView();
    const cmd = view.adjustCommand(1, { x: 100, y: 100, w: 50, h: 50 }, 640, 480)!;
    view.receive(ackJson(0, "adjust_box"));
    const shown = view.pendingFrame?.detections[1];
    expect(shown?.cx).toBeCloseTo(cmd.box!.cx, 12);
    expect(shown?.w).toBeCloseTo(cmd.box!.w, 12);
    expect(shown?.conf).toBe(0.8); // confidence survives the edit
  });

  it("refuses edits while a command is in flight", () => {
    const view = liveView();
    view.keyCommand("Enter");
    expect(view.adjustCommand(0, { x: 0, y: 0, w: 10, h: 10 }, 640, 480)).toBeNull();
  });
});

describe("errors and connection state", () => {
  it("stale-frame rejection surfaces as a banner and frees the view", () => {
    const view = liveView();
    view.keyCommand("Enter");
    view.receive(
      JSON.stringify({ type: "error", reason: "stale_frame", frame_id: 7, pending_frame_id: 0 }),
    );
    expect(view.banner).toContain("stale frame");
    expect(view.banner).toContain("0");
    expect(view.awaitingAck).toBe(false);
    expect(view.pendingFrame?.frame_id).toBe(0); // still showing the real frame
    expect(view.keyCommand("Enter")).not.toBeNull();
  });

  it("command errors show their reason and keep the frame", () => {
    const view = liveView();
    view.keyCommand("d");
    view.receive(JSON.stringify({ type: "error", reason: "index 9 out of range", frame_id: 0 }));
    expect(view.banner).toContain("index 9");
    expect(view.pendingFrame?.detections).toHaveLength(2);
  });

  it("busy rejection is terminal", () => {
    const view = new SessionView();
    view.onOpen();
    view.receive(JSON.stringify({ type: "error", reason: "busy" }));
    expect(view.connection).toBe("rejected");
    view.onClose();
    expect(view.connection).toBe("rejected");
  });

  it("a new frame clears the banner", () => {
    const view = liveView();
    view.receive(JSON.stringify({ type: "error", reason: "stale_frame", pending_frame_id: 0 }));
    expect(view.banner).not.toBeNull();
    view.receive(frameJson(1, []));
    expect(view.banner).toBeNull();
  });
});

describe("stats and session end", () => {
  it("stats messages feed the side panel and the active-class indicator", () => {
    const view = liveView();
    view.receive(statsJson({ frames_processed: 12, frames_saved: 8, active_class: 1 }));
    expect(view.stats?.frames_saved).toBe(8);
    expect(view.activeClass).toBe(1);
    const lines = statsLines(view.stats);
    expect(lines[0]).toBe("frames 12 · saved 8 · skipped 0 · errors 0");
    expect(lines[2]).toBe("detection: 42.0 ms mean (n=1)");
    expect(lines[3]).toBe("non-detection: —");
    expect(statsLines(null)).toEqual(["no stats yet"]);
  });

  it("the final stats message ends the session", () => {
    const view = liveView();
    view.receive(statsJson({ final: true }));
    expect(view.connection).toBe("ended");
    view.onClose();
    expect(view.connection).toBe("ended");
  });

  it("quit ack followed by close also ends it", () => {
    const view = liveView();
    view.keyCommand("q");
    view.receive(ackJson(0, "quit"));
    view.onClose();
    expect(view.connection).toBe("ended");
  });

  it("an unexpected drop goes back to connecting and drops the in-flight command", () => {
    const view = liveView();
    view.keyCommand("Enter");
    view.onClose();
    expect(view.connection).toBe("connecting");
    expect(view.awaitingAck).toBe(false);
    view.onOpen();
    view.receive(frameJson(0, TWO_DETS)); // server resends the pending frame
    expect(view.connection).toBe("live");
    expect(view.pendingFrame?.frame_id).toBe(0);
  });
});
