"""Capture bundles: RGB + metric depth + intrinsics (+ optional score map).

A bundle on disk is a directory with ``manifest.json``, ``rgb.png`` (8-bit RGB),
``depth.png`` (16-bit grayscale, millimeters; 0 = hole) and optionally
``score.f32`` (raw little-endian float32, row-major, dimensions from the
manifest). In memory depth is float64 meters. Bundles are immutable after load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BundleError, InvalidDepthError

MANIFEST_NAME = "manifest.json"
DEPTH_UNIT = "mm"


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise BundleError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise BundleError(
                f"principal point ({self.cx}, {self.cy}) outside raster "
                f"{self.width}x{self.height}"
            )


@dataclass(frozen=True)
class DepthMap:
    """Row-major depth raster in meters; 0 marks an invalid pixel (hole)."""

    values: np.ndarray  # (height, width) float64

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise BundleError(f"depth raster must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidDepthError("depth raster contains non-finite values")
        if np.any(v < 0):
            raise InvalidDepthError("depth raster contains negative values")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid_mask(self) -> np.ndarray:
        return self.values > 0


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster, shape (height, width, 3)."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or v.shape[2] != 3 or v.dtype != np.uint8:
            raise BundleError(f"rgb raster must be (h, w, 3) uint8, got {v.shape} {v.dtype}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise BundleError("rgb raster has empty dimensions")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ScoreMap:
    """Per-pixel wound probability in [0, 1]."""

    values: np.ndarray  # (height, width) float32

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise BundleError(f"score raster must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min(initial=0.0) < 0 or v.max(initial=0.0) > 1:
            raise BundleError("score values must be finite and within [0, 1]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CaptureBundle:
    """One capture: RGB, depth, intrinsics and optional segmentation scores.

    The score map, when present, is stored at depth resolution (resampled at
    load time); RGB keeps its native size.
    """

    rgb: RgbImage
    depth: DepthMap
    intrinsics: Intrinsics
    score: ScoreMap | None = None
    default_threshold: float = 0.5

    def __post_init__(self):
        k, d = self.intrinsics, self.depth
        if (k.width, k.height) != (d.width, d.height):
            raise BundleError(
                f"intrinsics raster size {k.width}x{k.height} != depth {d.width}x{d.height}"
            )
        if self.score is not None and (self.score.width, self.score.height) != (
            d.width,
            d.height,
        ):
            raise BundleError(
                f"score size {self.score.width}x{self.score.height} != depth "
                f"{d.width}x{d.height}"
            )
        if not (0.0 <= self.default_threshold <= 1.0):
            raise BundleError(f"default_threshold {self.default_threshold} outside [0, 1]")


def back_project(px: float, py: float, depth: float, k: Intrinsics) -> np.ndarray:
    """Pixel + depth -> camera-frame 3D point (meters)."""
    if depth <= 0:
        raise InvalidDepthError(f"depth must be positive, got {depth}")
    return np.array(
        [(px - k.cx) * depth / k.fx, (py - k.cy) * depth / k.fy, depth], dtype=np.float64
    )


def back_project_many(px: np.ndarray, py: np.ndarray, depth: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Vectorized back_project; returns (n, 3). All depths must be positive."""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise InvalidDepthError("all depths must be positive")
    x = (np.asarray(px, dtype=np.float64) - k.cx) * depth / k.fx
    y = (np.asarray(py, dtype=np.float64) - k.cy) * depth / k.fy
    return np.column_stack([x, y, depth])


def project(point: np.ndarray, k: Intrinsics) -> tuple[float, float]:
    """Camera-frame 3D point -> pixel coordinates (inverse of back_project)."""
    x, y, z = point
    if z <= 0:
        raise InvalidDepthError(f"point depth must be positive, got {z}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def _resample_bilinear(values: np.ndarray, width: int, height: int) -> np.ndarray:
    img = Image.fromarray(values.astype(np.float32), mode="F")
    out = img.resize((width, height), resample=Image.BILINEAR)
    return np.asarray(out, dtype=np.float32)


def load_bundle(path: str | Path) -> CaptureBundle:
    """Load and validate a capture bundle directory."""
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise BundleError(f"missing {MANIFEST_NAME} in {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BundleError(f"malformed manifest: {exc}") from exc

    try:
        k = Intrinsics(
            fx=float(manifest["fx"]),
            fy=float(manifest["fy"]),
            cx=float(manifest["cx"]),
            cy=float(manifest["cy"]),
            width=int(manifest["width"]),
            height=int(manifest["height"]),
        )
        depth_unit = manifest["depth_unit"]
        default_threshold = float(manifest.get("default_threshold", 0.5))
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"manifest missing or malformed field: {exc}") from exc
    if depth_unit != DEPTH_UNIT:
        raise BundleError(f"unsupported depth_unit {depth_unit!r}, expected {DEPTH_UNIT!r}")

    rgb_path = root / manifest.get("rgb", "rgb.png")
    depth_path = root / manifest.get("depth", "depth.png")
    if not rgb_path.is_file() or not depth_path.is_file():
        raise BundleError(f"bundle rasters missing under {root}")

    rgb_arr = np.asarray(Image.open(rgb_path).convert("RGB"), dtype=np.uint8)
    depth_raw = np.asarray(Image.open(depth_path))
    if depth_raw.ndim != 2:
        raise BundleError(f"depth.png must be single-channel, got shape {depth_raw.shape}")
    if (depth_raw.shape[1], depth_raw.shape[0]) != (k.width, k.height):
        raise BundleError(
            f"depth raster is {depth_raw.shape[1]}x{depth_raw.shape[0]}, manifest says "
            f"{k.width}x{k.height}"
        )
    depth_m = depth_raw.astype(np.float64) / 1000.0

    score = None
    score_name = manifest.get("score")
    if score_name:
        score_path = root / score_name
        if not score_path.is_file():
            raise BundleError(f"manifest names score file {score_name!r} but it is missing")
        sw = int(manifest.get("score_width", k.width))
        sh = int(manifest.get("score_height", k.height))
        raw = np.fromfile(score_path, dtype="<f4")
        if raw.size != sw * sh:
            raise BundleError(
                f"score raster holds {raw.size} values, manifest implies {sw * sh}"
            )
        values = raw.reshape(sh, sw)
        if (sw, sh) != (k.width, k.height):
            values = _resample_bilinear(values, k.width, k.height)
        score = ScoreMap(values=np.clip(values, 0.0, 1.0))

    return CaptureBundle(
        rgb=RgbImage(values=rgb_arr),
        depth=DepthMap(values=depth_m),
        intrinsics=k,
        score=score,
        default_threshold=default_threshold,
    )


def save_bundle(bundle: CaptureBundle, path: str | Path) -> Path:
    """Serialize a bundle to a directory (inverse of load_bundle).

    Depth is written as 16-bit millimeters, so sub-millimeter detail is rounded.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    k = bundle.intrinsics
    manifest = {
        "fx": k.fx,
        "fy": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "width": k.width,
        "height": k.height,
        "depth_unit": DEPTH_UNIT,
        "default_threshold": bundle.default_threshold,
        "rgb": "rgb.png",
        "depth": "depth.png",
    }

    Image.fromarray(bundle.rgb.values, mode="RGB").save(root / "rgb.png")
    depth_mm = np.round(bundle.depth.values * 1000.0)
    if np.any(depth_mm > 65535):
        raise BundleError("depth exceeds 16-bit millimeter range")
    depth_img = Image.fromarray(depth_mm.astype(np.uint16))
    depth_img.save(root / "depth.png")

    if bundle.score is not None:
        manifest["score"] = "score.f32"
        manifest["score_width"] = bundle.score.width
        manifest["score_height"] = bundle.score.height
        bundle.score.values.astype("<f4").tofile(root / "score.f32")

    (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return root
