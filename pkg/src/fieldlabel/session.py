"""Real-time annotation session: frame acquisition, detection, operator
command handling, atomic label persistence, and latency accounting.

Output layout, one directory per session under the configured root::

    <output_root>/<session_ts>/
        images/frame_<id>.jpg    saved frames (as presented to the detector)
        labels/frame_<id>.txt    matching YOLO label files
        session.csv              per-frame latency records
        manifest                 config snapshot (JSON)

Persistence is atomic: the label is written to a temporary name first, the
image is moved into place, and only then is the label renamed. A crash at any
point leaves either both files or neither after ``recover_session_dir``.

Latency is the wall time of the detect() call alone. Frames whose inference
times out carry the "error" outcome and are excluded from latency statistics.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .detect import (
    BackendError,
    Detection,
    DetectorBackend,
    DetectorConfig,
    InferenceTimeout,
    detect,
    load_backend,
)
from .labels import ClassMap, NormalizedBox, serialize_labels
from .prep import IMAGE_EXTENSIONS

OUTCOME_DETECTION = "detection"
OUTCOME_NON_DETECTION = "non_detection"
OUTCOME_ERROR = "error"
DISPOSITION_PENDING = "pending"
DISPOSITION_SAVED = "saved"
DISPOSITION_SKIPPED = "skipped"
SESSION_CSV_NAME = "session.csv"
MANIFEST_NAME = "manifest"


class SessionError(RuntimeError):
    """Session-level failure (unwritable output, wrong state)."""


class SourceError(SessionError):
    """Frame source missing or unreadable."""


class EndOfStream(Exception):
    """The frame source is exhausted."""


class StaleFrameError(ValueError):
    """Command targeted a frame that is no longer pending."""

    def __init__(self, frame_id: int, current: int | None):
        self.frame_id = frame_id
        self.current = current
        super().__init__(
            f"command for frame {frame_id} but pending frame is {current}"
        )


class CommandError(ValueError):
    """Command payload invalid (bad index, class, or box)."""


# --- frame sources ----------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """Descriptor for a frame source: directory, video file, or camera."""

    kind: str  # "directory" | "video" | "camera"
    location: str | int = 0

    def __post_init__(self):
        if self.kind not in ("directory", "video", "camera"):
            raise ValueError(f"unknown source kind {self.kind!r}")


class FrameSource:
    """Produces BGR frames; raises EndOfStream when exhausted."""

    def read(self) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass


class DirectorySource(FrameSource):
    """Replays every image in a directory in sorted name order (no drops)."""

    def __init__(self, root: Path):
        root = Path(root)
        if not root.is_dir():
            raise SourceError(f"source directory not found: {root}")
        self.paths = sorted(
            p for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
        self._index = 0

    def __len__(self) -> int:
        return len(self.paths)

    def read(self) -> np.ndarray:
        if self._index >= len(self.paths):
            raise EndOfStream
        path = self.paths[self._index]
        self._index += 1
        frame = cv2.imread(str(path))
        if frame is None:
            raise SourceError(f"unreadable image: {path}")
        return frame


class VideoSource(FrameSource):
    """Replays a video file frame by frame (no drops)."""

    def __init__(self, path: Path):
        path = Path(path)
        if not path.is_file():
            raise SourceError(f"video file not found: {path}")
        self.capture = cv2.VideoCapture(str(path))
        if not self.capture.isOpened():
            raise SourceError(f"cannot open video: {path}")

    def read(self) -> np.ndarray:
        ok, frame = self.capture.read()
        if not ok:
            raise EndOfStream
        return frame

    def close(self) -> None:
        self.capture.release()


class CameraSource(FrameSource):
    """Live camera with latest-frame-wins: stale buffered frames are dropped
    so inference always runs on the freshest capture."""

    def __init__(self, index: int = 0, drain: int = 4):
        self.capture = cv2.VideoCapture(int(index))
        if not self.capture.isOpened():
            raise SourceError(f"cannot open camera {index}")
        self.drain = drain

    def read(self) -> np.ndarray:
        for _ in range(self.drain):
            self.capture.grab()
        ok, frame = self.capture.retrieve()
        if not ok:
            ok, frame = self.capture.read()
        if not ok:
            raise EndOfStream
        return frame

    def close(self) -> None:
        self.capture.release()


def open_source(spec: SourceSpec) -> FrameSource:
    if spec.kind == "directory":
        return DirectorySource(Path(spec.location))
    if spec.kind == "video":
        return VideoSource(Path(spec.location))
    return CameraSource(int(spec.location))


# --- session data model -----------------------------------------------------

@dataclass
class FrameRecord:
    frame_id: int
    capture_timestamp: float
    detections: list
    inference_latency_ms: float
    outcome: str
    disposition: str = DISPOSITION_PENDING


@dataclass(frozen=True)
class SessionConfig:
    source: SourceSpec
    detector: DetectorConfig
    output_root: Path
    class_map: ClassMap
    active_class: int = 0
    auto_save: bool = False

    def __post_init__(self):
        if not 0 <= self.active_class < len(self.class_map):
            raise ValueError(
                f"active_class {self.active_class} outside class map "
                f"of size {len(self.class_map)}"
            )


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean_ms: float | None
    min_ms: float | None
    max_ms: float | None

    @classmethod
    def of(cls, latencies: list) -> "LatencyStats":
        if not latencies:
            return cls(0, None, None, None)
        return cls(
            len(latencies),
            math.fsum(latencies) / len(latencies),
            min(latencies),
            max(latencies),
        )

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean_ms": self.mean_ms,
            "min_ms": self.min_ms,
            "max_ms": self.max_ms,
        }


@dataclass(frozen=True)
class SessionStats:
    frames_processed: int
    frames_saved: int
    frames_skipped: int
    error_frames: int
    latency_overall: LatencyStats
    latency_detection: LatencyStats
    latency_non_detection: LatencyStats

    def to_dict(self) -> dict:
        return {
            "frames_processed": self.frames_processed,
            "frames_saved": self.frames_saved,
            "frames_skipped": self.frames_skipped,
            "error_frames": self.error_frames,
            "latency_overall": self.latency_overall.to_dict(),
            "latency_detection": self.latency_detection.to_dict(),
            "latency_non_detection": self.latency_non_detection.to_dict(),
        }


# --- operator commands ------------------------------------------------------

class OperatorCommand:
    pass


@dataclass(frozen=True)
class Save(OperatorCommand):
    pass


@dataclass(frozen=True)
class Skip(OperatorCommand):
    pass


@dataclass(frozen=True)
class SetClass(OperatorCommand):
    class_id: int


@dataclass(frozen=True)
class AdjustBox(OperatorCommand):
    index: int
    box: NormalizedBox


@dataclass(frozen=True)
class DeleteBox(OperatorCommand):
    index: int


@dataclass(frozen=True)
class Quit(OperatorCommand):
    pass


# --- the session ------------------------------------------------------------

class Session:
    """One annotation run: owns the source, the backend, and the output dir.

    ``persist_hook`` (when set) is called with a stage name at each step of
    the save protocol — the seam used by crash-injection tests.
    """

    def __init__(
        self,
        config: SessionConfig,
        source: FrameSource,
        backend: DetectorBackend,
        session_dir: Path,
    ):
        self.config = config
        self.source = source
        self.backend = backend
        self.session_dir = Path(session_dir)
        self.images_dir = self.session_dir / "images"
        self.labels_dir = self.session_dir / "labels"
        self.records: list[FrameRecord] = []
        self.active_class = config.active_class
        self.pending: FrameRecord | None = None
        self.running = True
        self.persist_hook = None
        self._pending_pixels: np.ndarray | None = None
        self._report_path: Path | None = None

    # -- frame processing ---------------------------------------------------

    def process_next(self) -> FrameRecord:
        """Read, resize, and run detection on the next frame.

        Raises EndOfStream when the source is exhausted. A timed-out
        inference yields a record with the "error" outcome instead of
        raising.
        """
        if not self.running:
            raise SessionError("session is stopped")
        frame = self.source.read()
        width, height, _ = self.backend.descriptor.expected_input
        if frame.shape[:2] != (height, width):
            frame = cv2.resize(frame, (width, height), interpolation=cv2.INTER_LINEAR)
        frame = np.ascontiguousarray(frame)
        start = time.perf_counter()
        try:
            detections = detect(self.backend, frame, self.config.detector)
            latency_ms = (time.perf_counter() - start) * 1000.0
            outcome = OUTCOME_DETECTION if detections else OUTCOME_NON_DETECTION
        except InferenceTimeout as exc:
            detections = []
            latency_ms = exc.elapsed_ms
            outcome = OUTCOME_ERROR
        record = FrameRecord(
            frame_id=len(self.records),
            capture_timestamp=start,
            detections=list(detections),
            inference_latency_ms=latency_ms,
            outcome=outcome,
        )
        self.records.append(record)
        self.pending = record
        self._pending_pixels = frame
        if self.config.auto_save:
            self._persist(record)
        return record

    # -- commands -----------------------------------------------------------

    def apply_command(self, frame_id: int, command: OperatorCommand) -> None:
        """Apply an operator command to the pending frame.

        Commands addressed to any other frame raise StaleFrameError; invalid
        payloads raise CommandError.
        """
        if not self.running:
            if isinstance(command, Quit):
                return
            raise SessionError("session is stopped")
        if self.pending is None or frame_id != self.pending.frame_id:
            current = self.pending.frame_id if self.pending else None
            raise StaleFrameError(frame_id, current)
        record = self.pending
        if isinstance(command, Save):
            if record.disposition != DISPOSITION_SAVED:
                self._persist(record)
        elif isinstance(command, Skip):
            if record.disposition == DISPOSITION_SAVED:
                raise CommandError(f"frame {frame_id} already saved")
            record.disposition = DISPOSITION_SKIPPED
        elif isinstance(command, SetClass):
            if not 0 <= command.class_id < len(self.config.class_map):
                raise CommandError(f"class {command.class_id} outside class map")
            self.active_class = command.class_id
            record.detections = [
                Detection(replace(d.box, class_id=command.class_id), d.confidence)
                for d in record.detections
            ]
        elif isinstance(command, AdjustBox):
            self._check_index(record, command.index)
            if not 0 <= command.box.class_id < len(self.config.class_map):
                raise CommandError(
                    f"class {command.box.class_id} outside class map"
                )
            old = record.detections[command.index]
            record.detections[command.index] = Detection(command.box, old.confidence)
        elif isinstance(command, DeleteBox):
            self._check_index(record, command.index)
            record.detections.pop(command.index)
        elif isinstance(command, Quit):
            self.stop()
        else:
            raise CommandError(f"unknown command {command!r}")

    @staticmethod
    def _check_index(record: FrameRecord, index: int) -> None:
        if not 0 <= index < len(record.detections):
            raise CommandError(
                f"box index {index} out of range "
                f"(frame has {len(record.detections)} boxes)"
            )

    # -- persistence --------------------------------------------------------

    def _hook(self, stage: str) -> None:
        if self.persist_hook is not None:
            self.persist_hook(stage)

    def _boxes_for_save(self, record: FrameRecord) -> list[NormalizedBox]:
        single_class = len(self.config.class_map) == 1
        boxes = []
        for d in record.detections:
            box = d.box
            if single_class:
                box = replace(box, class_id=self.active_class)
            boxes.append(box)
        return boxes

    def _persist(self, record: FrameRecord) -> None:
        """Atomic save: tmp label, tmp image, image rename, label rename."""
        if record is not self.pending or self._pending_pixels is None:
            raise SessionError(f"no pixels held for frame {record.frame_id}")
        stem = f"frame_{record.frame_id}"
        label_final = self.labels_dir / f"{stem}.txt"
        label_tmp = self.labels_dir / f"{stem}.txt.tmp"
        image_final = self.images_dir / f"{stem}.jpg"
        image_tmp = self.images_dir / f"{stem}.jpg.tmp"
        text = serialize_labels(self._boxes_for_save(record))
        with open(label_tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self._hook("label_tmp_written")
        ok, encoded = cv2.imencode(".jpg", self._pending_pixels)
        if not ok:
            raise SessionError(f"JPEG encoding failed for frame {record.frame_id}")
        image_tmp.write_bytes(encoded.tobytes())
        self._hook("image_tmp_written")
        os.replace(image_tmp, image_final)
        self._hook("image_renamed")
        os.replace(label_tmp, label_final)
        self._hook("label_renamed")
        record.disposition = DISPOSITION_SAVED

    def pending_frame_jpeg(self) -> bytes:
        """JPEG bytes of the pending frame, for the wire."""
        if self.pending is None or self._pending_pixels is None:
            raise SessionError("no pending frame")
        ok, encoded = cv2.imencode(".jpg", self._pending_pixels)
        if not ok:
            raise SessionError("JPEG encoding failed")
        return encoded.tobytes()

    # -- reporting ----------------------------------------------------------

    def stats(self) -> SessionStats:
        saved = sum(1 for r in self.records if r.disposition == DISPOSITION_SAVED)
        skipped = sum(1 for r in self.records if r.disposition == DISPOSITION_SKIPPED)
        errors = [r for r in self.records if r.outcome == OUTCOME_ERROR]
        clean = [r for r in self.records if r.outcome != OUTCOME_ERROR]
        det = [r.inference_latency_ms for r in clean if r.outcome == OUTCOME_DETECTION]
        non = [
            r.inference_latency_ms for r in clean if r.outcome == OUTCOME_NON_DETECTION
        ]
        return SessionStats(
            frames_processed=len(self.records),
            frames_saved=saved,
            frames_skipped=skipped,
            error_frames=len(errors),
            latency_overall=LatencyStats.of(det + non),
            latency_detection=LatencyStats.of(det),
            latency_non_detection=LatencyStats.of(non),
        )

    def session_csv(self) -> str:
        """One row per processed frame: frame_id, outcome, latency, disposition."""
        lines = ["frame_id,outcome,latency_ms,disposition"]
        for r in self.records:
            lines.append(
                f"{r.frame_id},{r.outcome},{r.inference_latency_ms:.3f},{r.disposition}"
            )
        return "\n".join(lines) + "\n"

    def stop(self) -> Path:
        """Flush the latency CSV and stop; idempotent, returns the CSV path."""
        if self._report_path is not None:
            return self._report_path
        self.running = False
        report = self.session_dir / SESSION_CSV_NAME
        report.write_text(self.session_csv(), encoding="utf-8")
        self.source.close()
        self._report_path = report
        return report


def _unique_session_dir(output_root: Path) -> Path:
    """Timestamped directory under output_root; never clobbers an earlier one."""
    stamp = time.strftime("%Y%m%d_%H%M%S")
    candidate = output_root / stamp
    suffix = 0
    while candidate.exists():
        suffix += 1
        candidate = output_root / f"{stamp}_{suffix}"
    return candidate


def start_session(
    config: SessionConfig,
    source: FrameSource | None = None,
    backend: DetectorBackend | None = None,
) -> Session:
    """Open the source and backend, create the session directory, and write
    the manifest. ``source``/``backend`` may be passed pre-built (tests)."""
    if source is None:
        source = open_source(config.source)
    if backend is None:
        backend = load_backend(config.detector)
    output_root = Path(config.output_root)
    try:
        output_root.mkdir(parents=True, exist_ok=True)
        session_dir = _unique_session_dir(output_root)
        (session_dir / "images").mkdir(parents=True)
        (session_dir / "labels").mkdir(parents=True)
    except OSError as exc:
        raise SessionError(f"cannot create session directories: {exc}") from exc
    manifest = {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "source": {"kind": config.source.kind, "location": str(config.source.location)},
        "backend_id": config.detector.backend_id,
        "model_path": config.detector.model_path,
        "confidence_threshold": config.detector.confidence_threshold,
        "nms_iou_threshold": config.detector.nms_iou_threshold,
        "input_size": list(config.detector.input_size),
        "deadline_ms": config.detector.deadline_ms,
        "class_names": list(config.class_map.names),
        "active_class": config.active_class,
        "auto_save": config.auto_save,
    }
    (session_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return Session(config, source, backend, session_dir)


def recover_session_dir(session_dir: Path) -> list[str]:
    """Repair a session directory after a crash mid-save.

    A temporary label whose image landed is rolled forward (renamed into
    place); all other temporaries are removed, as is any image missing its
    label. Returns a log of actions taken.
    """
    session_dir = Path(session_dir)
    images_dir = session_dir / "images"
    labels_dir = session_dir / "labels"
    actions: list[str] = []
    if labels_dir.is_dir():
        for tmp in sorted(labels_dir.glob("*.txt.tmp")):
            final = tmp.with_suffix("")  # strip the trailing .tmp
            image = images_dir / f"{final.stem}.jpg"
            if image.exists():
                os.replace(tmp, final)
                actions.append(f"rolled forward {final.name}")
            else:
                tmp.unlink()
                actions.append(f"discarded {tmp.name}")
    if images_dir.is_dir():
        for tmp in sorted(images_dir.glob("*.jpg.tmp")):
            tmp.unlink()
            actions.append(f"discarded {tmp.name}")
        for image in sorted(images_dir.glob("*.jpg")):
            if not (labels_dir / f"{image.stem}.txt").exists():
                image.unlink()
                actions.append(f"removed orphan {image.name}")
    return actions


# --- local keyboard loop ----------------------------------------------------

KEY_BINDINGS = "Enter=save  S=skip  0-9=set class  D=delete box  Tab=highlight  Q=quit"


def run_local_display(session: Session, window: str = "fieldlabel") -> None:
    """Operator loop with an on-device window: draws detections and applies
    the keyboard mapping (Enter save, S skip, digits set class, D delete the
    highlighted box, Q quit). Requires a display; not used by the gateway."""
    highlight = 0
    try:
        cv2.namedWindow(window)
    except cv2.error as exc:
        raise SessionError(f"cannot open display window: {exc}") from exc
    try:
        while session.running:
            try:
                record = session.process_next()
            except EndOfStream:
                break
            while session.running and record.disposition == DISPOSITION_PENDING:
                canvas = session._pending_pixels.copy()
                h, w = canvas.shape[:2]
                for i, det in enumerate(record.detections):
                    x0, y0, x1, y1 = det.box.corners()
                    color = (0, 255, 255) if i == highlight else (0, 255, 0)
                    cv2.rectangle(
                        canvas,
                        (int(x0 * w), int(y0 * h)),
                        (int(x1 * w), int(y1 * h)),
                        color,
                        2,
                    )
                    cv2.putText(
                        canvas,
                        f"{det.box.class_id}:{det.confidence:.2f}",
                        (int(x0 * w), max(12, int(y0 * h) - 4)),
                        cv2.FONT_HERSHEY_SIMPLEX,
                        0.5,
                        color,
                        1,
                    )
                cv2.imshow(window, canvas)
                key = cv2.waitKey(30) & 0xFF
                try:
                    if key in (13, 10):
                        session.apply_command(record.frame_id, Save())
                    elif key in (ord("s"), ord("S")):
                        session.apply_command(record.frame_id, Skip())
                    elif ord("0") <= key <= ord("9"):
                        session.apply_command(record.frame_id, SetClass(key - ord("0")))
                    elif key in (ord("d"), ord("D")) and record.detections:
                        session.apply_command(record.frame_id, DeleteBox(highlight))
                        highlight = 0
                    elif key == 9 and record.detections:
                        highlight = (highlight + 1) % len(record.detections)
                    elif key in (ord("q"), ord("Q")):
                        session.apply_command(record.frame_id, Quit())
                except CommandError:
                    pass  # e.g. digit beyond the class map; keep the loop alive
    finally:
        cv2.destroyAllWindows()
        session.stop()
