"""WebSocket gateway exposing a running annotation session to the browser UI.

One operator at a time connects to ``/ws`` and receives JSON text messages;
further connections get a busy error. The gateway does not advance past a
pending frame until it is saved or skipped (the UI drives pacing), except in
auto-save sessions where frames stream continuously.

Message schema (field names are part of the wire contract):

- frame:   ``{"type": "frame", "frame_id": N, "image_b64": "...",
  "detections": [{"class_id": c, "cx": .., "cy": .., "w": .., "h": ..,
  "conf": ..}], "latency_ms": .., "outcome": "detection"|"non_detection"}``
  (timed-out frames carry outcome "error")
- command: ``{"type": "command", "frame_id": N, "action": "save"|"skip"|
  "set_class"|"adjust_box"|"delete_box"|"quit", ...params}`` where set_class
  adds ``class_id``, delete_box adds ``index``, and adjust_box adds ``index``
  plus ``box`` ``{"class_id", "cx", "cy", "w", "h"}``
- ack:     ``{"type": "ack", "frame_id": N, "action": ...}``
- error:   ``{"type": "error", "reason": "...", ...context}``
- stats:   ``{"type": "stats", ...session counters..., "active_class": c}``;
  sent after every ack and, with ``"final": true``, at end of stream

Control endpoints: ``GET /status`` (stats snapshot, always available) and
``POST /stop`` (flushes the report; idempotent).
"""

from __future__ import annotations

import asyncio
import base64

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .labels import NormalizedBox
from .session import (
    AdjustBox,
    CommandError,
    DeleteBox,
    EndOfStream,
    FrameRecord,
    Quit,
    Save,
    Session,
    SessionError,
    SetClass,
    Skip,
    StaleFrameError,
    DISPOSITION_PENDING,
)

BUSY_CLOSE_CODE = 1013  # "try again later"


def frame_message(session: Session, record: FrameRecord) -> dict:
    return {
        "type": "frame",
        "frame_id": record.frame_id,
        "image_b64": base64.b64encode(session.pending_frame_jpeg()).decode("ascii"),
        "detections": [
            {
                "class_id": d.box.class_id,
                "cx": d.box.cx,
                "cy": d.box.cy,
                "w": d.box.w,
                "h": d.box.h,
                "conf": d.confidence,
            }
            for d in record.detections
        ],
        "latency_ms": record.inference_latency_ms,
        "outcome": record.outcome,
    }


def stats_message(session: Session, final: bool = False) -> dict:
    msg = {"type": "stats", **session.stats().to_dict(), "active_class": session.active_class}
    if final:
        msg["final"] = True
    return msg


def parse_command(msg: dict):
    """Wire command payload -> (frame_id, OperatorCommand). Raises ValueError."""
    try:
        frame_id = int(msg["frame_id"])
        action = msg["action"]
    except (KeyError, TypeError, ValueError):
        raise ValueError("command needs integer frame_id and action") from None
    if action == "save":
        return frame_id, Save()
    if action == "skip":
        return frame_id, Skip()
    if action == "quit":
        return frame_id, Quit()
    if action == "set_class":
        try:
            return frame_id, SetClass(int(msg["class_id"]))
        except (KeyError, TypeError, ValueError):
            raise ValueError("set_class needs integer class_id") from None
    if action == "delete_box":
        try:
            return frame_id, DeleteBox(int(msg["index"]))
        except (KeyError, TypeError, ValueError):
            raise ValueError("delete_box needs integer index") from None
    if action == "adjust_box":
        try:
            raw = msg["box"]
            box = NormalizedBox(
                class_id=int(raw["class_id"]),
                cx=float(raw["cx"]),
                cy=float(raw["cy"]),
                w=float(raw["w"]),
                h=float(raw["h"]),
            )
            return frame_id, AdjustBox(int(msg["index"]), box)
        except ValueError as exc:
            raise ValueError(f"invalid box: {exc}") from None
        except (KeyError, TypeError):
            raise ValueError("adjust_box needs index and box fields") from None
    raise ValueError(f"unknown action {action!r}")


def build_app(session: Session) -> FastAPI:
    app = FastAPI(title="fieldlabel gateway")
    state = {"connected": False}

    @app.get("/status")
    def status() -> dict:
        snapshot = session.stats().to_dict()
        snapshot["running"] = session.running
        snapshot["pending_frame_id"] = (
            session.pending.frame_id if session.pending else None
        )
        return snapshot

    @app.post("/stop")
    def stop() -> dict:
        report = session.stop()
        return {"report": str(report)}

    async def advance(ws: WebSocket) -> bool:
        """Process the next frame and send it; False when the stream ended."""
        try:
            record = await asyncio.to_thread(session.process_next)
        except EndOfStream:
            await ws.send_json(stats_message(session, final=True))
            return False
        except SessionError:
            return False
        await ws.send_json(frame_message(session, record))
        return True

    async def handle_command(ws: WebSocket, msg: dict) -> str | None:
        """Apply one wire command; returns the acked action, None on error."""
        try:
            frame_id, command = parse_command(msg)
        except ValueError as exc:
            await ws.send_json({"type": "error", "reason": str(exc)})
            return None
        try:
            await asyncio.to_thread(session.apply_command, frame_id, command)
        except StaleFrameError as exc:
            await ws.send_json(
                {
                    "type": "error",
                    "reason": "stale_frame",
                    "frame_id": exc.frame_id,
                    "pending_frame_id": exc.current,
                }
            )
            return None
        except (CommandError, SessionError) as exc:
            await ws.send_json(
                {"type": "error", "reason": str(exc), "frame_id": frame_id}
            )
            return None
        await ws.send_json({"type": "ack", "frame_id": frame_id, "action": msg["action"]})
        await ws.send_json(stats_message(session))
        return msg["action"]

    async def operator_loop(ws: WebSocket) -> None:
        # Resume at the pending frame after a reconnect; otherwise advance.
        if session.pending is not None and (
            session.pending.disposition == DISPOSITION_PENDING
            or session.config.auto_save
        ):
            await ws.send_json(frame_message(session, session.pending))
        elif not await advance(ws):
            return
        while session.running:
            if session.config.auto_save:
                # Stream continuously, squeezing in any queued commands.
                try:
                    msg = await asyncio.wait_for(ws.receive_json(), timeout=0.01)
                    await handle_command(ws, msg)
                except asyncio.TimeoutError:
                    pass
                if session.running and not await advance(ws):
                    return
                continue
            msg = await ws.receive_json()
            action = await handle_command(ws, msg)
            if action in ("save", "skip") and session.running:
                if not await advance(ws):
                    return
            elif action == "quit":
                return

    @app.websocket("/ws")
    async def websocket_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        if state["connected"]:
            await ws.send_json({"type": "error", "reason": "busy"})
            await ws.close(code=BUSY_CLOSE_CODE)
            return
        state["connected"] = True
        try:
            await operator_loop(ws)
            await ws.close()
        except WebSocketDisconnect:
            pass  # session keeps its pending frame for the next connection
        finally:
            state["connected"] = False

    return app


def serve(session: Session, bind_address: str = "127.0.0.1:8000") -> None:
    """Run the gateway until the session ends (blocking)."""
    import uvicorn

    host, _, port = bind_address.rpartition(":")
    uvicorn.run(
        build_app(session),
        host=host or "127.0.0.1",
        port=int(port),
        log_level="warning",
    )
