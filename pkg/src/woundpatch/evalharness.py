"""Synthetic reproduction of the reconstruction-accuracy experiment.

Three parametric wound types (planar disk, elliptical paraboloid crater,
spherical-cap dent) sit on a skin plane 20 cm from the camera. Depth is
ray-cast per pixel, corrupted by a spatially correlated Gaussian field plus
independent spikes near the wound rim (where structured-light sensors get
confused), and pushed through the full measurement pipeline. The report
aggregates absolute surface-area error per wound type and tilt angle.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.integrate import quad, simpson

from .bgpcp import build_band, build_cloud, default_filter_radius, radius_filter
from .capture import CaptureBundle, DepthMap, Intrinsics, RgbImage, ScoreMap
from .errors import EvalError
from .meshing import mesh_region
from .segmentation import extract_boundary, select_component

DEFAULT_DISTANCE_M = 0.2
DEFAULT_ANGLES_DEG = (0, 10, 20, 30)
DEFAULT_REPEATS = 5
CM2_PER_M2 = 1e4


def default_intrinsics() -> Intrinsics:
    return Intrinsics(fx=580.0, fy=580.0, cx=239.5, cy=319.5, width=480, height=640)


@dataclass(frozen=True)
class NoiseModel:
    """Correlated depth noise with amplified independent spikes at the rim."""

    sigma_mm: float = 0.0
    rim_factor: float = 3.0
    rim_width_px: float = 2.0
    correlation_px: float = 9.0
    rim_spike_prob: float = 0.25


@dataclass(frozen=True)
class SyntheticScene:
    """Parametric wound on a tilted skin plane.

    kind "disk": flat disk, radius_m. kind "crater": elliptic paraboloid
    depression, semi-axes (a_m, b_m), depth relief_m. kind "cap": spherical
    dent with rim radius radius_m and center depth relief_m.
    """

    kind: str
    radius_m: float = 0.0227
    a_m: float = 0.026
    b_m: float = 0.020
    relief_m: float = 0.004
    distance_m: float = DEFAULT_DISTANCE_M
    tilt_deg: float = 0.0
    noise: NoiseModel = NoiseModel()

    def __post_init__(self):
        if self.kind not in ("disk", "crater", "cap"):
            raise EvalError(f"unknown wound kind {self.kind!r}")
        if abs(self.tilt_deg) > 30.0:
            raise EvalError(f"tilt {self.tilt_deg} outside +-30 degrees")

    def truth_area_cm2(self) -> float:
        if self.kind == "disk":
            return math.pi * self.radius_m**2 * CM2_PER_M2
        if self.kind == "cap":
            h = self.relief_m
            big_r = (self.radius_m**2 + h**2) / (2 * h)
            theta_max = math.asin(min(self.radius_m / big_r, 1.0))
            area, _ = quad(lambda t: 2 * math.pi * big_r**2 * math.sin(t), 0, theta_max)
            return area * CM2_PER_M2
        # crater: integrate sqrt(1 + |grad f|^2) over the ellipse (Simpson on
        # a polar-like grid, Jacobian a*b*rho)
        a, b, dm = self.a_m, self.b_m, self.relief_m
        rho = np.linspace(0.0, 1.0, 801)
        phi = np.linspace(0.0, 2 * math.pi, 1601)
        rr, pp = np.meshgrid(rho, phi, indexing="ij")
        xi = a * rr * np.cos(pp)
        eta = b * rr * np.sin(pp)
        fx = 2 * dm * xi / a**2
        fy = 2 * dm * eta / b**2
        integrand = np.sqrt(1.0 + fx**2 + fy**2) * (a * b * rr)
        inner = simpson(integrand, x=phi, axis=1)
        return float(simpson(inner, x=rho)) * CM2_PER_M2


def _plane_frame(scene: SyntheticScene):
    theta = math.radians(scene.tilt_deg)
    center = np.array([0.0, 0.0, scene.distance_m])
    normal = np.array([0.0, math.sin(theta), -math.cos(theta)])  # toward camera
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.cross(normal, e1)
    return center, normal, e1, e2


def _ray_directions(k: Intrinsics):
    ys, xs = np.mgrid[0 : k.height, 0 : k.width]
    dx = (xs + 0.5 - k.cx) / k.fx
    dy = (ys + 0.5 - k.cy) / k.fy
    return dx, dy  # ray = (dx, dy, 1) * t; depth == t


def render_clean_depth(scene: SyntheticScene, k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free ray-cast: returns (depth raster, wound mask)."""
    center, normal, e1, e2 = _plane_frame(scene)
    dx, dy = _ray_directions(k)
    d = np.stack([dx, dy, np.ones_like(dx)], axis=-1)
    nd = d @ normal
    if np.any(np.abs(nd) < 1e-12):
        raise EvalError("ray parallel to skin plane")
    t_plane = (center @ normal) / nd

    hit = t_plane[..., None] * d
    rel = hit - center
    xi = rel @ e1
    eta = rel @ e2

    depth = t_plane.copy()
    if scene.kind == "disk":
        wound = xi**2 + eta**2 <= scene.radius_m**2
    elif scene.kind == "crater":
        a, b, dm = scene.a_m, scene.b_m, scene.relief_m
        d_xi = d @ e1
        d_eta = d @ e2
        k_xi = -float(center @ e1)
        k_eta = -float(center @ e2)
        s = float(center @ normal)
        # w(t) = t*nd - s must equal -dm*(1 - (xi/a)^2 - (eta/b)^2)
        qa = dm * (d_xi**2 / a**2 + d_eta**2 / b**2)
        qb = 2 * dm * (d_xi * k_xi / a**2 + d_eta * k_eta / b**2) - nd
        qc = dm * (k_xi**2 / a**2 + k_eta**2 / b**2) + s - dm
        disc = qb**2 - 4 * qa * qc
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        wound = np.zeros_like(ok)
        degenerate = qa == 0  # ray perpendicular to both plane axes
        with np.errstate(divide="ignore", invalid="ignore"):
            roots = [
                (np.where(ok & ~degenerate, (-qb - sq) / (2 * qa), -1.0), ~degenerate),
                (np.where(ok & ~degenerate, (-qb + sq) / (2 * qa), -1.0), ~degenerate),
                (np.where(degenerate & (qb != 0), -qc / qb, -1.0), degenerate),
            ]
        for t, applicable in roots:
            t = np.where(np.isfinite(t), t, -1.0)
            q = ((t * d_xi + k_xi) / a) ** 2 + ((t * d_eta + k_eta) / b) ** 2
            valid = applicable & (q <= 1.0 + 1e-9) & (t > 0)
            # nearest valid hit along the ray is the visible bowl surface
            take = valid & (~wound | (t < depth))
            depth = np.where(take, t, depth)
            wound = wound | valid
    else:  # cap
        h = scene.relief_m
        big_r = (scene.radius_m**2 + h**2) / (2 * h)
        sphere_c = center + normal * (big_r - h)
        d2 = np.einsum("...i,...i->...", d, d)
        dc = d @ sphere_c
        c2 = float(sphere_c @ sphere_c) - big_r**2
        disc = dc**2 - d2 * c2
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_far = (dc + sq) / d2  # far hit = dent interior
        w = t_far * nd - float(center @ normal)
        valid = ok & (w <= 1e-12) & (t_far > 0)
        wound = valid
        depth = np.where(valid, t_far, depth)

    return depth, wound


def render_depth(scene: SyntheticScene, k: Intrinsics, rng: np.random.Generator | int = 0) -> CaptureBundle:
    """Ray-cast bundle with the scene's noise model applied."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    depth, wound = render_clean_depth(scene, k)
    if wound[0, :].any() or wound[-1, :].any() or wound[:, 0].any() or wound[:, -1].any():
        raise EvalError("wound touches the image border (not fully in frustum)")
    if not wound.any():
        raise EvalError("wound not visible in frustum")

    noise = scene.noise
    if noise.sigma_mm > 0:
        sigma_m = noise.sigma_mm / 1000.0
        base = rng.normal(size=depth.shape)
        base = ndimage.gaussian_filter(base, noise.correlation_px)
        base = base / base.std() * sigma_m
        depth = depth + base

        # rim: independent spikes where the sensor straddles wound and skin
        edge = wound ^ ndimage.binary_erosion(wound)
        rim = ndimage.distance_transform_edt(~edge) <= noise.rim_width_px
        spikes = rim & (rng.random(depth.shape) < noise.rim_spike_prob)
        depth = depth + spikes * rng.normal(
            scale=noise.rim_factor * sigma_m, size=depth.shape
        )
        depth = np.maximum(depth, 1e-4)

    score = ndimage.gaussian_filter(wound.astype(np.float32), 1.0)
    rgb = np.full((k.height, k.width, 3), 180, dtype=np.uint8)
    rgb[wound] = (150, 40, 40)

    return CaptureBundle(
        rgb=RgbImage(values=rgb),
        depth=DepthMap(values=depth),
        intrinsics=k,
        score=ScoreMap(values=np.clip(score, 0.0, 1.0)),
        default_threshold=0.5,
    )


def wound_seed(bundle: CaptureBundle) -> tuple[int, int]:
    """Pixel with the strongest score: always inside the wound."""
    idx = int(np.argmax(bundle.score.values))
    y, x = np.unravel_index(idx, bundle.score.values.shape)
    return int(x), int(y)


def measure_area(bundle: CaptureBundle, seed: tuple[int, int], threshold: float) -> float:
    """Segmentation -> band -> filter -> mesh; 3D surface area in cm^2."""
    if bundle.score is None:
        raise EvalError("bundle has no score map")
    mask = select_component(bundle.score, seed, threshold)
    boundary = extract_boundary(mask)
    band = build_band(boundary, bundle.depth.values.shape)
    cloud = build_cloud(bundle.depth, bundle.intrinsics, boundary, band)
    radius = default_filter_radius(cloud, bundle.intrinsics)
    filtered = radius_filter(cloud, radius=radius)
    mesh = mesh_region(filtered, boundary, bundle.intrinsics)
    return mesh.surface_area() * CM2_PER_M2


@dataclass(frozen=True)
class CellStats:
    kind: str
    angle_deg: float
    mae_cm2: float
    std_cm2: float
    accuracy_pct: float


@dataclass
class AccuracyReport:
    cells: list[CellStats]
    repeats: int

    def grand_accuracy(self) -> float:
        return float(np.mean([c.accuracy_pct for c in self.cells]))

    def grand_mae(self) -> float:
        return float(np.mean([c.mae_cm2 for c in self.cells]))

    def per_angle_accuracy(self) -> dict[float, float]:
        angles = sorted({c.angle_deg for c in self.cells})
        return {
            angle: float(np.mean([c.accuracy_pct for c in self.cells if c.angle_deg == angle]))
            for angle in angles
        }

    def per_kind_accuracy(self) -> dict[str, float]:
        kinds = sorted({c.kind for c in self.cells})
        return {
            kind: float(np.mean([c.accuracy_pct for c in self.cells if c.kind == kind]))
            for kind in kinds
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["type", "angle_deg", "mae_cm2", "std_cm2", "accuracy_pct"])
        for c in self.cells:
            writer.writerow(
                [c.kind, f"{c.angle_deg:g}", f"{c.mae_cm2:.4f}", f"{c.std_cm2:.4f}", f"{c.accuracy_pct:.2f}"]
            )
        writer.writerow(
            ["all", "all", f"{self.grand_mae():.4f}", "", f"{self.grand_accuracy():.2f}"]
        )
        return buf.getvalue()

    def format_table(self) -> str:
        kinds = sorted({c.kind for c in self.cells})
        angles = sorted({c.angle_deg for c in self.cells})
        by = {(c.kind, c.angle_deg): c for c in self.cells}
        lines = []
        header = ["type"] + [f"{a:g}deg" for a in angles] + ["avg"]
        lines.append("  ".join(f"{h:>12}" for h in header))
        for kind in kinds:
            row = [kind]
            accs = []
            for a in angles:
                cell = by[(kind, a)]
                row.append(f"{cell.mae_cm2:.2f}/{cell.std_cm2:.2f} {cell.accuracy_pct:.2f}%")
                accs.append(cell.accuracy_pct)
            row.append(f"{np.mean(accs):.2f}%")
            lines.append("  ".join(f"{v:>12}" for v in row))
        per_angle = self.per_angle_accuracy()
        row = ["avg"] + [f"{per_angle[a]:.2f}%" for a in angles] + [
            f"{self.grand_accuracy():.2f}%"
        ]
        lines.append("  ".join(f"{v:>12}" for v in row))
        return "\n".join(lines)


def default_scenes(sigma_mm: float = 0.0, rim_factor: float = 3.0) -> list[SyntheticScene]:
    noise = NoiseModel(sigma_mm=sigma_mm, rim_factor=rim_factor)
    return [
        SyntheticScene(kind="disk", noise=noise),
        SyntheticScene(kind="crater", noise=noise),
        SyntheticScene(kind="cap", noise=noise),
    ]


def run_sweep(
    scenes: list[SyntheticScene] | None = None,
    angles_deg=DEFAULT_ANGLES_DEG,
    repeats: int = DEFAULT_REPEATS,
    master_seed: int = 0,
    intrinsics: Intrinsics | None = None,
    parallel: bool = True,
) -> AccuracyReport:
    """Full (wound type x angle x repeats) sweep with per-cell derived RNG.

    Negative tilts fold onto positive buckets, so only |angle| values appear.
    Per-run RNG is derived from (master seed, scene, angle, repeat); results do
    not depend on scheduling.
    """
    if scenes is None:
        scenes = default_scenes()
    k = intrinsics or default_intrinsics()

    jobs = []
    for si, scene in enumerate(scenes):
        for ai, angle in enumerate(angles_deg):
            for rep in range(repeats):
                jobs.append((si, ai, rep, replace(scene, tilt_deg=abs(angle))))

    def run(job):
        si, ai, rep, scene = job
        seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(si, ai, rep))
        rng = np.random.default_rng(seq)
        bundle = render_depth(scene, k, rng)
        area = measure_area(bundle, wound_seed(bundle), bundle.default_threshold)
        return si, ai, rep, area

    if parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    areas: dict[tuple[int, int], list[float]] = {}
    for si, ai, rep, area in results:
        areas.setdefault((si, ai), []).append(area)

    cells = []
    for si, scene in enumerate(scenes):
        truth = scene.truth_area_cm2()
        for ai, angle in enumerate(angles_deg):
            errs = np.abs(np.asarray(areas[(si, ai)]) - truth)
            acc = float(np.mean(100.0 * (1.0 - errs / truth)))
            cells.append(
                CellStats(
                    kind=scene.kind,
                    angle_deg=float(angle),
                    mae_cm2=float(errs.mean()),
                    std_cm2=float(errs.std()),
                    accuracy_pct=acc,
                )
            )
    return AccuracyReport(cells=cells, repeats=repeats)
