"""Augmentation pipeline: flips, 90-degree rotations, color jitter.

Box geometry under the dihedral ops is computed on the 6-decimal grid the
label format serializes to (complement done in integer space), which makes
every op exactly invertible: flip twice, rotate four times, CW-then-CCW all
reproduce the input boxes bit-for-bit. Plain float ``1 - x`` does not have
that property (``1 - (1 - 0.3) != 0.3``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .labels import COORD_SCALE, LabeledImage, NormalizedBox
from .prep import Dataset, load_pixels, resize_stretch
from .seeding import substream


class Rotation(str, Enum):
    CW = "cw"
    CCW = "ccw"
    R180 = "r180"


# Geometric ops a variant may sample; "none" is always in the pool.
GEOMETRIC_OPS = ("flip_h", "flip_v", "rot90_cw", "rot90_ccw", "rot180")


@dataclass(frozen=True)
class AugmentSpec:
    """Variant generation knobs.

    Color ranges are half-widths around 1.0: a saturation_range of 0.25
    samples factors uniformly from [0.75, 1.25]. Exposure is applied as a
    gamma adjustment with exponent 1/factor.
    """

    variants_per_image: int = 3
    saturation_range: float = 0.25
    brightness_range: float = 0.15
    exposure_range: float = 0.10
    ops: tuple[str, ...] = GEOMETRIC_OPS
    target_size: tuple[int, int] = (640, 640)
    seed: int = 0

    def __post_init__(self):
        if self.variants_per_image < 1:
            raise ValueError("variants_per_image must be >= 1")
        for name in ("saturation_range", "brightness_range", "exposure_range"):
            r = getattr(self, name)
            if not 0.0 <= r < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {r}")
        unknown = set(self.ops) - set(GEOMETRIC_OPS)
        if unknown:
            raise ValueError(f"unknown geometric ops: {sorted(unknown)}")


def _complement(x: float) -> float:
    # 1 - x on the 6-decimal lattice, exact by integer arithmetic.
    return (COORD_SCALE - round(x * COORD_SCALE)) / COORD_SCALE


def _snap(x: float) -> float:
    return round(x * COORD_SCALE) / COORD_SCALE


def flip_h_box(b: NormalizedBox) -> NormalizedBox:
    return replace(b, cx=_complement(b.cx))


def flip_v_box(b: NormalizedBox) -> NormalizedBox:
    return replace(b, cy=_complement(b.cy))


def rotate_box(b: NormalizedBox, direction: Rotation) -> NormalizedBox:
    if direction is Rotation.CW:
        return NormalizedBox(b.class_id, _complement(b.cy), _snap(b.cx), b.h, b.w)
    if direction is Rotation.CCW:
        return NormalizedBox(b.class_id, _snap(b.cy), _complement(b.cx), b.h, b.w)
    return NormalizedBox(b.class_id, _complement(b.cx), _complement(b.cy), b.w, b.h)


def flip_h(item: LabeledImage) -> LabeledImage:
    """Mirror on the vertical axis: cx -> 1-cx, pixels flipped left-right."""
    pixels = np.ascontiguousarray(np.fliplr(load_pixels(item)))
    return replace(item, image_ref=pixels, boxes=[flip_h_box(b) for b in item.boxes])


def flip_v(item: LabeledImage) -> LabeledImage:
    """Mirror on the horizontal axis: cy -> 1-cy, pixels flipped top-bottom."""
    pixels = np.ascontiguousarray(np.flipud(load_pixels(item)))
    return replace(item, image_ref=pixels, boxes=[flip_v_box(b) for b in item.boxes])


def rotate90(item: LabeledImage, direction: Rotation) -> LabeledImage:
    """Rotate by 90 degrees CW/CCW or 180; pixel dims swap for CW/CCW."""
    k = {Rotation.CW: -1, Rotation.CCW: 1, Rotation.R180: 2}[direction]
    pixels = np.ascontiguousarray(np.rot90(load_pixels(item), k))
    boxes = [rotate_box(b, direction) for b in item.boxes]
    height, width = pixels.shape[:2]
    return LabeledImage(
        image_ref=pixels, width=width, height=height, boxes=boxes, stem=item.stem
    )


def color_jitter(
    pixels: np.ndarray,
    sat_factor: float = 1.0,
    bright_factor: float = 1.0,
    exposure_factor: float = 1.0,
) -> np.ndarray:
    """Scale saturation and value, then apply exposure as gamma (1/factor).

    Saturation scaling is a per-pixel lerp toward the channel max, which
    equals scaling HSV saturation at constant hue and value; value scaling
    is a plain channel multiply. Both are channel-order agnostic, so BGR
    arrays need no conversion. All factors 1.0 is a bit-exact identity.
    """
    rgb = pixels.astype(np.float64) / 255.0
    peak = rgb.max(axis=-1, keepdims=True)
    rgb = peak + sat_factor * (rgb - peak)
    rgb = np.clip(rgb * bright_factor, 0.0, 1.0)
    if exposure_factor != 1.0:
        rgb = rgb ** (1.0 / exposure_factor)
    return np.rint(rgb * 255.0).astype(np.uint8)


_OP_FUNCS = {
    "none": lambda item: item,
    "flip_h": flip_h,
    "flip_v": flip_v,
    "rot90_cw": lambda item: rotate90(item, Rotation.CW),
    "rot90_ccw": lambda item: rotate90(item, Rotation.CCW),
    "rot180": lambda item: rotate90(item, Rotation.R180),
}


def make_variant(item: LabeledImage, spec: AugmentSpec, item_index: int, k: int) -> LabeledImage:
    """Variant k (1-based) of an item; fully determined by (seed, item_index, k).

    Draw order is fixed and documented for reimplementation: op index over
    ["none"] + enabled ops, then saturation, brightness, exposure factors.
    """
    rng = substream(spec.seed, item_index, k)
    pool = ("none",) + spec.ops
    op = pool[int(rng.integers(len(pool)))]
    sat = rng.uniform(1.0 - spec.saturation_range, 1.0 + spec.saturation_range)
    bright = rng.uniform(1.0 - spec.brightness_range, 1.0 + spec.brightness_range)
    expo = rng.uniform(1.0 - spec.exposure_range, 1.0 + spec.exposure_range)

    variant = _OP_FUNCS[op](item)
    pixels = color_jitter(load_pixels(variant), sat, bright, expo)
    return LabeledImage(
        image_ref=pixels,
        width=variant.width,
        height=variant.height,
        boxes=list(variant.boxes),
        stem=f"{item.name}_aug{k}",
    )


def iter_augmented(ds: Dataset, spec: AugmentSpec, include_originals: bool = True):
    """Yield resized originals (optionally) followed by their variants.

    Items are first stretch-resized to spec.target_size; each variant then
    applies one sampled geometric op plus jitter. Output order is item 0's
    original and variants, then item 1's, and so on.
    """
    for idx, item in enumerate(ds.items):
        base = resize_stretch(item, spec.target_size)
        if include_originals:
            yield base
        for k in range(1, spec.variants_per_image + 1):
            yield make_variant(base, spec, idx, k)


def augment_dataset(ds: Dataset, spec: AugmentSpec, include_originals: bool = True) -> Dataset:
    """Materialized form of iter_augmented: N originals + variants_per_image*N variants."""
    return Dataset(ds.class_map, list(iter_augmented(ds, spec, include_originals)))
