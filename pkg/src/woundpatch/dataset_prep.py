"""Deterministic / seeded preprocessing calculators for the training corpus.

These are pure operations: per-patient oversampling counts, shorter-edge
resizing, augmentation parameter sampling and wound/background patch sampling.
No pixel-level augmentation or training happens here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import WoundPatchError

ROTATION_RANGE = (30.0, 330.0)
SHEAR_RANGE = (-0.25, 0.25)
SCALE_RANGE = (0.5, 2.0)

STAGE4_TECHNIQUES = (
    "gaussian-noise",
    "blur",
    "channel-swap",
    "luminance",
    "flip",
    "rotate",
    "scale",
    "shear",
)


class DatasetPrepError(WoundPatchError):
    stage = "dataset-prep"
    code = "prep_failed"


@dataclass
class PatientCensus:
    """Image counts per patient plus the oversampling clamp."""

    counts: dict[str, int]
    clamp: int
    max_count: int = field(init=False)

    def __post_init__(self):
        if not self.counts:
            raise DatasetPrepError("census is empty")
        if any(c < 1 for c in self.counts.values()):
            raise DatasetPrepError("every patient must have at least one image")
        if self.clamp < 0:
            raise DatasetPrepError("clamp must be non-negative")
        self.max_count = max(self.counts.values())


@dataclass(frozen=True)
class AugmentationParams:
    rotation: float  # degrees
    shear_x: float
    shear_y: float
    scale: float

    def __post_init__(self):
        checks = (
            (self.rotation, ROTATION_RANGE, "rotation"),
            (self.shear_x, SHEAR_RANGE, "shear_x"),
            (self.shear_y, SHEAR_RANGE, "shear_y"),
            (self.scale, SCALE_RANGE, "scale"),
        )
        for value, (lo, hi), name in checks:
            if not (lo <= value <= hi):
                raise DatasetPrepError(f"{name}={value} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class PatchSampleSpec:
    patch_size: int = 256
    wound_samples: int = 2
    background_samples: int = 6

    def __post_init__(self):
        if self.patch_size < 1 or self.wound_samples < 0 or self.background_samples < 0:
            raise DatasetPrepError("patch spec fields must be positive")
        total = self.wound_samples + self.background_samples
        if total == 0 or self.wound_samples * 4 != total:
            raise DatasetPrepError("wound samples must be a quarter of the total")


def oversample_count(census: PatientCensus, patient: str) -> int:
    """Images to add for `patient` so counts balance up to min(clamp, max)."""
    if patient not in census.counts:
        raise DatasetPrepError(f"unknown patient id {patient!r}")
    n_t = census.counts[patient]
    return max(min(census.clamp, census.max_count) - n_t, 0)


def resize_shorter_edge(width: int, height: int, target: int) -> tuple[int, int]:
    """New dimensions with the shorter edge at `target`, aspect preserved.

    The longer edge is rounded half-up so golden sizes are reproducible.
    """
    if width < 1 or height < 1 or target < 1:
        raise DatasetPrepError("dimensions and target must be >= 1")
    if width <= height:
        return target, int(math.floor(height * target / width + 0.5))
    return int(math.floor(width * target / height + 0.5)), target


def sample_augmentation(rng: np.random.Generator | int) -> AugmentationParams:
    """Uniformly sample rotation/shear/scale within their ranges."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return AugmentationParams(
        rotation=rng.uniform(*ROTATION_RANGE),
        shear_x=rng.uniform(*SHEAR_RANGE),
        shear_y=rng.uniform(*SHEAR_RANGE),
        scale=rng.uniform(*SCALE_RANGE),
    )


def stage4_variants(image_count: int, rng: np.random.Generator | int = 0) -> list[tuple[str, AugmentationParams]]:
    """One descriptor per technique per image: 8 * image_count entries.

    Each descriptor carries freshly sampled parameters; techniques that ignore
    a given parameter simply do not read it downstream.
    """
    if image_count < 0:
        raise DatasetPrepError("image_count must be non-negative")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    variants = []
    for _ in range(image_count):
        for technique in STAGE4_TECHNIQUES:
            variants.append((technique, sample_augmentation(rng)))
    return variants


def sample_patches(
    mask: np.ndarray, spec: PatchSampleSpec, rng: np.random.Generator | int
) -> list[tuple[int, int]]:
    """Pick patch centers: `wound_samples` around wound pixels, the rest background.

    Sampling is with replacement. Centers are shifted (not padded) so every
    patch_size window fits inside the image; a shifted window still contains
    the sampled pixel. Returns (x, y) pixel tuples.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 2 or mask.size == 0:
        raise DatasetPrepError("mask must be a nonempty 2-D raster")
    h, w = mask.shape
    if spec.patch_size > w or spec.patch_size > h:
        raise DatasetPrepError(
            f"patch size {spec.patch_size} exceeds image {w}x{h}"
        )
    wound_ys, wound_xs = np.nonzero(mask)
    bg_ys, bg_xs = np.nonzero(~mask)
    if spec.wound_samples > 0 and len(wound_xs) == 0:
        raise DatasetPrepError("mask has zero wound pixels")
    if spec.background_samples > 0 and len(bg_xs) == 0:
        raise DatasetPrepError("mask has zero background pixels")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    half = spec.patch_size // 2
    # valid center range so [c - half, c - half + patch_size) stays in bounds
    def clamp(c: int, size: int) -> int:
        return int(min(max(c, half), size - (spec.patch_size - half)))

    centers: list[tuple[int, int]] = []
    for xs, ys, count in (
        (wound_xs, wound_ys, spec.wound_samples),
        (bg_xs, bg_ys, spec.background_samples),
    ):
        idx = rng.integers(0, len(xs), size=count)
        centers.extend((clamp(int(xs[i]), w), clamp(int(ys[i]), h)) for i in idx)
    return centers


def patch_window(center: tuple[int, int], patch_size: int) -> tuple[int, int, int, int]:
    """(x0, y0, x1, y1) half-open window for a sampled center."""
    half = patch_size // 2
    x0, y0 = center[0] - half, center[1] - half
    return x0, y0, x0 + patch_size, y0 + patch_size


def plan_oversampling(census: PatientCensus) -> dict[str, int]:
    """Oversample count for every patient in the census."""
    return {patient: oversample_count(census, patient) for patient in census.counts}
