"""Detection data model, confidence filtering, greedy NMS, and the pluggable
backend contract.

The mock backend replays a script file and is the workhorse for session and
latency tests; a neural runtime plugs in through ``register_backend`` without
the rest of the toolkit knowing.

Mock script format: one record per frame, ``#`` comments and blank lines
ignored::

    <frame_index> <delay_ms> [<class>:<cx>:<cy>:<w>:<h>:<conf> ...]

Frames missing from the script produce no delay and no detections.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labels import NormalizedBox


class BackendError(RuntimeError):
    """Backend unavailable or inference failed."""


class InferenceTimeout(BackendError):
    """Inference exceeded the configured deadline."""

    def __init__(self, deadline_ms: float, elapsed_ms: float):
        self.deadline_ms = deadline_ms
        self.elapsed_ms = elapsed_ms
        super().__init__(
            f"inference exceeded {deadline_ms:.0f} ms deadline ({elapsed_ms:.1f} ms elapsed)"
        )


@dataclass(frozen=True)
class Detection:
    """A predicted box with confidence."""

    box: NormalizedBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class DetectorConfig:
    confidence_threshold: float = 0.25
    nms_iou_threshold: float = 0.45
    backend_id: str = "mock"
    model_path: str | None = None
    input_size: tuple[int, int] = (640, 640)
    deadline_ms: float | None = None
    per_class_nms: bool = False

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(f"confidence_threshold out of [0, 1]: {self.confidence_threshold}")
        if not 0.0 < self.nms_iou_threshold < 1.0:
            raise ValueError(f"nms_iou_threshold out of (0, 1): {self.nms_iou_threshold}")


@dataclass(frozen=True)
class BackendDescriptor:
    """Identity and input contract of a backend: (width, height, channels)."""

    id: str
    model_label: str
    expected_input: tuple[int, int, int] = (640, 640, 3)


def iou(a: NormalizedBox, b: NormalizedBox) -> float:
    """Intersection over union in normalized coordinates; 0 when disjoint."""
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area() + b.area() - inter
    return inter / union


def filter_confidence(dets: list[Detection], threshold: float) -> list[Detection]:
    """Detections at or above threshold, original order preserved."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold out of [0, 1]: {threshold}")
    return [d for d in dets if d.confidence >= threshold]


def _nms_order(d: Detection):
    # Descending confidence; ties broken by smaller cx then cy so output is
    # reproducible across platforms.
    return (-d.confidence, d.box.cx, d.box.cy)


def nms(dets: list[Detection], iou_threshold: float, per_class: bool = False) -> list[Detection]:
    """Greedy non-maximum suppression.

    Keeps the highest-confidence detection, drops everything overlapping it
    at iou >= threshold, repeats. With per_class=True suppression only acts
    within a class. Output is sorted by descending confidence.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold out of (0, 1): {iou_threshold}")
    kept: list[Detection] = []
    for d in sorted(dets, key=_nms_order):
        suppressed = any(
            iou(d.box, k.box) >= iou_threshold
            for k in kept
            if not per_class or k.box.class_id == d.box.class_id
        )
        if not suppressed:
            kept.append(d)
    return kept


class DetectorBackend:
    """Contract every inference backend implements."""

    descriptor: BackendDescriptor

    def infer(self, image: np.ndarray) -> list[Detection]:
        raise NotImplementedError


class MockBackend(DetectorBackend):
    """Scripted backend: frame index -> (delay, detections), fully deterministic.

    The frame index is the number of prior ``infer`` calls on this instance.
    """

    def __init__(self, script: dict[int, tuple[float, list[Detection]]],
                 descriptor: BackendDescriptor | None = None):
        self.script = script
        self.descriptor = descriptor or BackendDescriptor(
            id="mock", model_label="scripted-mock", expected_input=(640, 640, 3)
        )
        self.calls = 0

    @classmethod
    def from_file(cls, path: Path, **kwargs) -> "MockBackend":
        return cls(parse_mock_script(Path(path).read_text(encoding="utf-8")), **kwargs)

    def infer(self, image: np.ndarray) -> list[Detection]:
        delay_ms, dets = self.script.get(self.calls, (0.0, []))
        self.calls += 1
        if delay_ms > 0:
            time.sleep(delay_ms / 1000.0)
        return list(dets)


def parse_mock_script(text: str) -> dict[int, tuple[float, list[Detection]]]:
    script: dict[int, tuple[float, list[Detection]]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 2:
            raise ValueError(f"mock script line {line_no}: need frame index and delay")
        try:
            frame = int(fields[0])
            delay = float(fields[1])
        except ValueError:
            raise ValueError(f"mock script line {line_no}: bad frame/delay") from None
        dets = []
        for tup in fields[2:]:
            parts = tup.split(":")
            if len(parts) != 6:
                raise ValueError(
                    f"mock script line {line_no}: detection needs 6 ':'-fields, got {tup!r}"
                )
            cls, cx, cy, w, h, conf = parts
            dets.append(
                Detection(
                    NormalizedBox(int(cls), float(cx), float(cy), float(w), float(h)),
                    float(conf),
                )
            )
        script[frame] = (delay, dets)
    return script


def detect(
    backend: DetectorBackend,
    image: np.ndarray,
    config: DetectorConfig = DetectorConfig(),
) -> list[Detection]:
    """Run a backend on one frame and post-process (confidence filter, NMS).

    With a deadline configured, inference runs on a worker thread and an
    InferenceTimeout carrying the elapsed time is raised when it expires.
    """
    width, height, channels = backend.descriptor.expected_input
    if image.ndim != 3 or image.shape != (height, width, channels):
        raise BackendError(
            f"frame shape {image.shape} does not match backend input "
            f"{height}x{width}x{channels}"
        )
    if config.deadline_ms is None:
        raw = backend.infer(image)
    else:
        start = time.perf_counter()
        with ThreadPoolExecutor(max_workers=1) as pool:
            future = pool.submit(backend.infer, image)
            try:
                raw = future.result(timeout=config.deadline_ms / 1000.0)
            except FutureTimeout:
                elapsed = (time.perf_counter() - start) * 1000.0
                future.cancel()
                pool.shutdown(wait=False)
                raise InferenceTimeout(config.deadline_ms, elapsed) from None
    kept = filter_confidence(raw, config.confidence_threshold)
    return nms(kept, config.nms_iou_threshold, per_class=config.per_class_nms)


# --- backend registry -------------------------------------------------------

_BACKEND_FACTORIES: dict[str, callable] = {}


def register_backend(backend_id: str, factory) -> None:
    """Register a factory (DetectorConfig) -> DetectorBackend under an id."""
    _BACKEND_FACTORIES[backend_id] = factory


def load_backend(config: DetectorConfig) -> DetectorBackend:
    """Instantiate the backend named by config.backend_id.

    Built-in: ``mock`` (model_path = script file). Anything else must have
    been registered, e.g. an ONNX or Ultralytics adapter.
    """
    if config.backend_id == "mock":
        if not config.model_path:
            raise BackendError("mock backend needs model_path pointing at a script file")
        path = Path(config.model_path)
        if not path.exists():
            raise BackendError(f"mock script not found: {path}")
        w, h = config.input_size
        return MockBackend.from_file(
            path,
            descriptor=BackendDescriptor("mock", "scripted-mock", (w, h, 3)),
        )
    factory = _BACKEND_FACTORIES.get(config.backend_id)
    if factory is None:
        raise BackendError(f"no backend registered under id {config.backend_id!r}")
    return factory(config)


# --- prediction files (labels + confidence) ---------------------------------

def parse_prediction_file(text: str, class_count: int) -> list[Detection]:
    """Parse prediction text: label format plus a 6th confidence field."""
    from .labels import LabelFileError, _parse_fields

    dets = []
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 6:
            raise LabelFileError(line_no, f"expected 6 fields, got {len(fields)}")
        box = _parse_fields(fields[:5], line_no, class_count)
        try:
            conf = float(fields[5])
        except ValueError:
            raise LabelFileError(line_no, f"non-numeric confidence {fields[5]!r}") from None
        if not 0.0 <= conf <= 1.0:
            raise LabelFileError(line_no, f"confidence {conf} out of [0, 1]")
        dets.append(Detection(box, conf))
    return dets


def serialize_predictions(dets: list[Detection]) -> str:
    return "".join(
        f"{d.box.class_id} {d.box.cx:.6f} {d.box.cy:.6f} {d.box.w:.6f} {d.box.h:.6f} "
        f"{d.confidence:.6f}\n"
        for d in dets
    )
