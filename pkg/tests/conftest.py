"""Shared helpers for the test suite: seeded random generators for boxes,
detections, images, and small datasets."""

from __future__ import annotations

import numpy as np
import pytest

from fieldlabel.detect import Detection
from fieldlabel.labels import ClassMap, LabeledImage, NormalizedBox
from fieldlabel.prep import Dataset

LATTICE = 1_000_000


def lattice_box(rng: np.random.Generator, class_count: int = 1) -> NormalizedBox:
    """A valid random box whose coordinates (and corners) sit exactly on the
    6-decimal grid; extents use even grid steps so half-sizes stay on-grid."""
    w_i = 2 * int(rng.integers(1, 200_000))  # w in (0, 0.4]
    h_i = 2 * int(rng.integers(1, 200_000))
    cx_i = int(rng.integers(w_i // 2, LATTICE - w_i // 2 + 1))
    cy_i = int(rng.integers(h_i // 2, LATTICE - h_i // 2 + 1))
    return NormalizedBox(
        int(rng.integers(0, class_count)),
        cx_i / LATTICE,
        cy_i / LATTICE,
        w_i / LATTICE,
        h_i / LATTICE,
    )


def arbitrary_box(rng: np.random.Generator, class_count: int = 1) -> NormalizedBox:
    """A valid random box with continuous (off-grid) coordinates."""
    w = float(rng.uniform(1e-4, 0.6))
    h = float(rng.uniform(1e-4, 0.6))
    cx = float(rng.uniform(w / 2, 1 - w / 2))
    cy = float(rng.uniform(h / 2, 1 - h / 2))
    return NormalizedBox(int(rng.integers(0, class_count)), cx, cy, w, h)


def random_detection(rng: np.random.Generator, class_count: int = 1) -> Detection:
    return Detection(arbitrary_box(rng, class_count), float(rng.uniform(0.0, 1.0)))


def random_image(rng: np.random.Generator, width: int = 64, height: int = 48) -> np.ndarray:
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8).astype(np.uint8)


def synthetic_dataset(
    rng: np.random.Generator,
    n_images: int,
    class_count: int,
    width: int = 64,
    height: int = 48,
    empty_fraction: float = 0.0,
) -> Dataset:
    """In-memory dataset with random pixels and lattice-valued boxes."""
    class_map = ClassMap([f"class{i}" for i in range(class_count)])
    items = []
    for i in range(n_images):
        if empty_fraction and rng.random() < empty_fraction:
            boxes = []
        else:
            boxes = [lattice_box(rng, class_count) for _ in range(int(rng.integers(1, 4)))]
        items.append(
            LabeledImage(
                image_ref=random_image(rng, width, height),
                width=width,
                height=height,
                boxes=boxes,
                stem=f"img{i:05d}",
            )
        )
    return Dataset(class_map=class_map, items=items)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260823)
