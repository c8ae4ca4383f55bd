"""Dataset preparation: class collapse, stratified splitting, stretch resize,
and the on-disk split layout (``images/`` + ``labels/`` sibling directories,
label filename = image stem + ``.txt``).
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import cv2
import numpy as np

from .labels import (
    ClassMap,
    LabeledImage,
    read_label_file,
    write_label_file,
)
from .seeding import substream

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp")

SPLIT_NAMES = ("train", "val", "test")

# Images whose label file is empty fall into their own stratum.
EMPTY_STRATUM = -1


class SmallStratumWarning(UserWarning):
    """A stratum had too few items to honor the split ratios."""


@dataclass
class Dataset:
    class_map: ClassMap
    items: list[LabeledImage] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def validate(self) -> None:
        for item in self.items:
            for box in item.boxes:
                if box.class_id >= len(self.class_map):
                    raise ValueError(
                        f"{item.stem}: class id {box.class_id} outside "
                        f"{len(self.class_map)}-class map"
                    )


def load_pixels(item: LabeledImage) -> np.ndarray:
    """Pixel array for an item (HxWx3 uint8, OpenCV channel order)."""
    if isinstance(item.image_ref, np.ndarray):
        return item.image_ref
    pixels = cv2.imread(str(item.image_ref), cv2.IMREAD_COLOR)
    if pixels is None:
        raise FileNotFoundError(f"cannot read image {item.image_ref}")
    return pixels


def collapse_classes(ds: Dataset, target_name: str = "Plant") -> Dataset:
    """Remap every annotation to a single generic class (id 0).

    Box geometry is untouched bit-for-bit; only class ids and the class
    map change.
    """
    items = [
        replace(
            item,
            boxes=[replace(b, class_id=0) for b in item.boxes],
        )
        for item in ds.items
    ]
    return Dataset(class_map=ClassMap([target_name]), items=items)


def dominant_class(item: LabeledImage) -> int:
    """Most frequent box class (ties to the smaller id); EMPTY_STRATUM if unlabeled."""
    if not item.boxes:
        return EMPTY_STRATUM
    counts = Counter(b.class_id for b in item.boxes)
    best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
    return best[0]


def _apportion(n: int, ratios: tuple[float, float, float]) -> list[int]:
    # Largest-remainder: every split gets floor or ceil of its exact share,
    # so |allocated - n*ratio| < 1 and the total is exactly n.
    shares = [n * r for r in ratios]
    counts = [int(s) for s in shares]
    remainders = [s - c for s, c in zip(shares, counts)]
    leftover = n - sum(counts)
    for i in sorted(range(len(ratios)), key=lambda i: (-remainders[i], i))[:leftover]:
        counts[i] += 1
    return counts


def stratified_split(
    ds: Dataset,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> tuple[Dataset, Dataset, Dataset]:
    """Partition by dominant class into train/val/test.

    Exact partition (disjoint, union = ds); within each stratum every
    split's item count is within 1 of its ratio share; deterministic for
    a given seed. Strata smaller than 3 items emit SmallStratumWarning
    and land in train first.
    """
    if not ds.items:
        raise ValueError("cannot split an empty dataset")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")

    strata: dict[int, list[int]] = {}
    for idx, item in enumerate(ds.items):
        strata.setdefault(dominant_class(item), []).append(idx)

    picks: list[list[int]] = [[], [], []]
    for key in sorted(strata):
        indices = strata[key]
        if len(indices) < 3:
            warnings.warn(
                f"stratum {key} has only {len(indices)} item(s); "
                f"assigning to train first",
                SmallStratumWarning,
                stacklevel=2,
            )
        order = list(indices)
        # key+1 keeps the SeedSequence path non-negative (EMPTY_STRATUM is -1)
        substream(seed, key + 1).shuffle(order)
        counts = _apportion(len(order), ratios)
        start = 0
        for split_idx, count in enumerate(counts):
            picks[split_idx].extend(order[start : start + count])
            start += count

    out = []
    for chosen in picks:
        chosen.sort()
        out.append(Dataset(ds.class_map, [ds.items[i] for i in chosen]))
    return out[0], out[1], out[2]


def resize_stretch(item: LabeledImage, target: tuple[int, int]) -> LabeledImage:
    """Anisotropic (stretched) resize to target (width, height).

    Normalized boxes are numerically unchanged: stretching rescales both
    axes independently, which is exactly what normalization divides out.
    """
    tw, th = target
    if tw <= 0 or th <= 0:
        raise ValueError(f"target dims must be positive, got {target}")
    if item.width == tw and item.height == th:
        return item
    pixels = load_pixels(item)
    resized = cv2.resize(pixels, (tw, th), interpolation=cv2.INTER_LINEAR)
    return LabeledImage(
        image_ref=resized, width=tw, height=th, boxes=list(item.boxes), stem=item.stem
    )


def load_image_dir(root: Path, class_map: ClassMap) -> Dataset:
    """Load a split directory (images/ + labels/) into memory-light items.

    Image pixels stay on disk (items keep the path); dimensions are read by
    decoding each image once — fine at dataset-prep scale.
    """
    images_dir = root / "images"
    labels_dir = root / "labels"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"missing images directory {images_dir}")
    items = []
    for path in sorted(images_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        pixels = cv2.imread(str(path), cv2.IMREAD_COLOR)
        if pixels is None:
            raise ValueError(f"unreadable image {path}")
        height, width = pixels.shape[:2]
        label_path = labels_dir / f"{path.stem}.txt"
        boxes = (
            read_label_file(label_path, len(class_map)) if label_path.exists() else []
        )
        items.append(LabeledImage(image_ref=path, width=width, height=height, boxes=boxes))
    return Dataset(class_map=class_map, items=items)


def save_image_dir(ds: Dataset, root: Path, image_format: str = ".png") -> None:
    """Write a dataset as an images/ + labels/ split directory."""
    images_dir = root / "images"
    labels_dir = root / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)
    for item in ds.items:
        if isinstance(item.image_ref, Path):
            ext = item.image_ref.suffix.lower()
            pixels = load_pixels(item)
        else:
            ext = image_format
            pixels = item.image_ref
        out = images_dir / f"{item.name}{ext}"
        if not cv2.imwrite(str(out), pixels):
            raise OSError(f"failed to write {out}")
        write_label_file(labels_dir / f"{item.name}.txt", item.boxes)
