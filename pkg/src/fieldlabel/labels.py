"""YOLO-format label file parsing, validation and serialization.

Label file format (bit-exact contract):
    one object per line: ``<class_id> <cx> <cy> <w> <h>``
    - fields space-separated, coordinates normalized to image dimensions
    - (cx, cy) box center, (w, h) box extent, all in [0, 1]
    - floats rendered with exactly 6 decimal places, LF line endings,
      trailing newline after the last record
    - parser accepts CRLF and a missing trailing newline

Dataset descriptor: YAML document with ``train``/``val``/``test`` split
paths and an ordered ``names`` list (index = class id).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import yaml

# Boxes may overshoot the image edge by at most this much (augmentation
# rounding noise); parse clamps within-tolerance overshoot, rejects beyond.
EDGE_TOLERANCE = 1e-6

# Everything the toolkit persists is quantized to 6 decimals.
COORD_DECIMALS = 6
COORD_SCALE = 10 ** COORD_DECIMALS


class LabelFileError(ValueError):
    """Malformed label file content; carries the 1-based offending line."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DatasetConfigError(ValueError):
    """Invalid dataset descriptor document."""


@dataclass(frozen=True)
class NormalizedBox:
    """A single annotation: class index plus center-format normalized box."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        for name, v in (("cx", self.cx), ("cy", self.cy), ("w", self.w), ("h", self.h)):
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if not (0.0 < self.w <= 1.0 + EDGE_TOLERANCE):
            raise ValueError(f"w must be in (0, 1], got {self.w}")
        if not (0.0 < self.h <= 1.0 + EDGE_TOLERANCE):
            raise ValueError(f"h must be in (0, 1], got {self.h}")
        for lo, hi, axis in (
            (self.cx - self.w / 2, self.cx + self.w / 2, "x"),
            (self.cy - self.h / 2, self.cy + self.h / 2, "y"),
        ):
            if lo < -EDGE_TOLERANCE or hi > 1.0 + EDGE_TOLERANCE:
                raise ValueError(
                    f"box extends past image edge on {axis} axis "
                    f"(edges [{lo:.9f}, {hi:.9f}])"
                )

    def corners(self) -> tuple[float, float, float, float]:
        """(x_lo, y_lo, x_hi, y_hi) in normalized coordinates."""
        return (
            self.cx - self.w / 2,
            self.cy - self.h / 2,
            self.cx + self.w / 2,
            self.cy + self.h / 2,
        )

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ClassMap:
    """Ordered class names; list index is the class id and order is stable."""

    names: tuple[str, ...]

    def __init__(self, names):
        names = tuple(str(n) for n in names)
        if not names:
            raise ValueError("class map needs at least one name")
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate class names: {', '.join(dupes)}")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    def name_of(self, class_id: int) -> str:
        return self.names[class_id]


ImageRef = Union[Path, np.ndarray]


@dataclass
class LabeledImage:
    """An image reference plus its annotation set.

    ``image_ref`` is either a filesystem path or an in-memory HxWx3 uint8
    array; ``stem`` names the item when the ref carries no path (augmented
    variants).
    """

    image_ref: ImageRef
    width: int
    height: int
    boxes: list[NormalizedBox] = field(default_factory=list)
    stem: str | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dims must be positive, got {self.width}x{self.height}")
        if self.stem is None and isinstance(self.image_ref, Path):
            self.stem = self.image_ref.stem

    @property
    def name(self) -> str:
        if self.stem is None:
            raise ValueError("in-memory image has no stem assigned")
        return self.stem


def quantize_coord(x: float) -> float:
    """Snap a coordinate to the 6-decimal grid the label format serializes to."""
    return round(x * COORD_SCALE) / COORD_SCALE


def _fit_axis(center: float, size: float, line_no: int, axis: str) -> tuple[float, float]:
    # Clamp within-tolerance overshoot by shifting the center inward; the
    # size stays exact so serialize->parse round-trips stay under 5e-7.
    if size > 1.0:
        if size > 1.0 + EDGE_TOLERANCE:
            raise LabelFileError(line_no, f"box {axis}-extent {size} exceeds 1")
        size = 1.0
    lo = center - size / 2
    hi = center + size / 2
    if lo < -EDGE_TOLERANCE or hi > 1.0 + EDGE_TOLERANCE:
        raise LabelFileError(
            line_no, f"box extends past image edge on {axis} axis ([{lo}, {hi}])"
        )
    if lo < 0.0:
        center -= lo
    hi = center + size / 2
    if hi > 1.0:
        center -= hi - 1.0
    return center, size


def _parse_fields(fields: list[str], line_no: int, class_count: int) -> NormalizedBox:
    try:
        class_id = int(fields[0])
    except ValueError:
        raise LabelFileError(line_no, f"non-integer class id {fields[0]!r}") from None
    if not 0 <= class_id < class_count:
        raise LabelFileError(
            line_no, f"class id {class_id} out of range for {class_count} classes"
        )
    try:
        cx, cy, w, h = (float(f) for f in fields[1:])
    except ValueError:
        raise LabelFileError(line_no, f"non-numeric coordinate in {fields[1:]}") from None
    for v in (cx, cy, w, h):
        if not math.isfinite(v):
            raise LabelFileError(line_no, f"non-finite coordinate {v}")
    if w <= 0 or h <= 0:
        raise LabelFileError(line_no, f"box extent must be positive, got w={w} h={h}")
    cx, w = _fit_axis(cx, w, line_no, "x")
    cy, h = _fit_axis(cy, h, line_no, "y")
    return NormalizedBox(class_id, cx, cy, w, h)


def parse_label_file(text: str, class_count: int) -> list[NormalizedBox]:
    """Parse YOLO label text into boxes; raises LabelFileError with line numbers."""
    if class_count < 1:
        raise ValueError("class_count must be >= 1")
    boxes = []
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise LabelFileError(line_no, f"expected 5 fields, got {len(fields)}")
        boxes.append(_parse_fields(fields, line_no, class_count))
    return boxes


def serialize_labels(boxes: list[NormalizedBox]) -> str:
    """Render boxes in the bit-exact label format (6 decimals, LF, trailing newline)."""
    return "".join(
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n" for b in boxes
    )


def read_label_file(path: Path, class_count: int) -> list[NormalizedBox]:
    return parse_label_file(path.read_text(encoding="utf-8"), class_count)


def write_label_file(path: Path, boxes: list[NormalizedBox]) -> None:
    path.write_text(serialize_labels(boxes), encoding="utf-8", newline="")


@dataclass(frozen=True)
class DatasetConfig:
    """Parsed dataset descriptor: class map plus split directory paths."""

    class_map: ClassMap
    train: str
    val: str
    test: str

    @property
    def splits(self) -> dict[str, str]:
        return {"train": self.train, "val": self.val, "test": self.test}


def _names_to_class_map(names) -> ClassMap:
    if isinstance(names, dict):
        # index-keyed form: {0: name, 1: name, ...}
        try:
            indices = sorted(int(k) for k in names)
        except (TypeError, ValueError):
            raise DatasetConfigError("names keys must be integer class ids") from None
        if indices != list(range(len(indices))):
            raise DatasetConfigError(f"names indices must be 0..{len(indices) - 1}")
        names = [names[k] for k in sorted(names, key=int)]
    if not isinstance(names, list):
        raise DatasetConfigError("names must be a list or an index-keyed map")
    try:
        return ClassMap(names)
    except ValueError as e:
        raise DatasetConfigError(str(e)) from None


def _load_yaml_doc(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise DatasetConfigError(f"not valid YAML: {e}") from None
    if not isinstance(doc, dict):
        raise DatasetConfigError("descriptor must be a key-value document")
    return doc


def load_class_map(text: str) -> ClassMap:
    """Read just the class names from a dataset descriptor (YAML)."""
    doc = _load_yaml_doc(text)
    if "names" not in doc:
        raise DatasetConfigError("missing key 'names'")
    return _names_to_class_map(doc["names"])


def load_dataset_config(text: str) -> DatasetConfig:
    """Parse a dataset descriptor (YAML with names/train/val/test keys)."""
    doc = _load_yaml_doc(text)
    for key in ("names", "train", "val", "test"):
        if key not in doc:
            raise DatasetConfigError(f"missing key {key!r}")
    return DatasetConfig(
        class_map=_names_to_class_map(doc["names"]),
        train=str(doc["train"]),
        val=str(doc["val"]),
        test=str(doc["test"]),
    )


def serialize_dataset_config(config: DatasetConfig) -> str:
    """Render the descriptor deterministically (stable key order, LF endings)."""
    lines = [
        f"train: {config.train}",
        f"val: {config.val}",
        f"test: {config.test}",
        "names:",
    ]
    lines += [f"  {i}: {name}" for i, name in enumerate(config.class_map.names)]
    return "\n".join(lines) + "\n"
