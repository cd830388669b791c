"""Binary STL serialization and a minimal planar slicer emitting G-code.

Dialect: Marlin-flavor subset {G0, G1, G92} plus full-line comments. Absolute
XYZ in millimeters with 3 decimals; E is absolute within a layer and reset by
G92 E0 at every layer start (5 decimals). The pipeline is metric meters; STL
and G-code are emitted in millimeters.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from io import BytesIO

import numpy as np
from shapely.geometry import LineString, MultiPolygon, Polygon
from shapely.ops import unary_union

from .errors import FabricationError, GcodeParseError
from .flatten import PatchSolid

M_TO_MM = 1000.0
INFILL_ANGLE_DEG = 45.0
_PARAM_ORDER = "XYZEF"
_PARAM_DECIMALS = {"X": 3, "Y": 3, "Z": 3, "E": 5, "F": 3}


@dataclass(frozen=True)
class SlicerConfig:
    layer_height: float = 0.2  # mm
    extrusion_width: float = 0.4  # mm
    filament_diameter: float = 1.75  # mm
    perimeter_count: int = 1
    infill_spacing: float = 0.4  # mm
    feed_rate: float = 1200.0  # mm/min

    def __post_init__(self):
        values = (
            self.layer_height,
            self.extrusion_width,
            self.filament_diameter,
            self.infill_spacing,
            self.feed_rate,
        )
        if any(v <= 0 for v in values) or self.perimeter_count < 1:
            raise FabricationError("slicer config fields must be positive")
        if self.layer_height > self.extrusion_width:
            raise FabricationError(
                f"layer height {self.layer_height} exceeds extrusion width "
                f"{self.extrusion_width}"
            )

    def filament_area(self) -> float:
        return math.pi * (self.filament_diameter / 2.0) ** 2


@dataclass
class GcodeCommand:
    code: str  # "G0" | "G1" | "G92" | ";"
    params: dict[str, float] = field(default_factory=dict)
    comment: str = ""

    def emit(self) -> str:
        if self.code == ";":
            return f"; {self.comment}".rstrip()
        words = [self.code]
        for key in _PARAM_ORDER:
            if key in self.params:
                value = self.params[key]
                words.append(f"{key}{value:.{_PARAM_DECIMALS[key]}f}")
        return " ".join(words)


@dataclass
class GcodeProgram:
    commands: list[GcodeCommand] = field(default_factory=list)

    def emit(self) -> str:
        return "\n".join(cmd.emit() for cmd in self.commands) + "\n"

    def validate(self) -> None:
        """Z never decreases; E never decreases between G92 resets."""
        z = -math.inf
        e = 0.0
        for cmd in self.commands:
            if cmd.code == "G92":
                e = cmd.params.get("E", 0.0)
            elif cmd.code in ("G0", "G1"):
                if "Z" in cmd.params:
                    if cmd.params["Z"] < z - 1e-9:
                        raise FabricationError(f"Z decreased to {cmd.params['Z']}")
                    z = cmd.params["Z"]
                if "E" in cmd.params:
                    if cmd.params["E"] < e - 1e-9:
                        raise FabricationError(f"E decreased to {cmd.params['E']}")
                    e = cmd.params["E"]

    def extruded_volume_mm3(self, filament_diameter: float) -> float:
        """Total deposited volume implied by E values (between G92 resets)."""
        area = math.pi * (filament_diameter / 2.0) ** 2
        total = 0.0
        e = 0.0
        for cmd in self.commands:
            if cmd.code == "G92":
                e = cmd.params.get("E", 0.0)
            elif cmd.code in ("G0", "G1") and "E" in cmd.params:
                total += max(cmd.params["E"] - e, 0.0)
                e = cmd.params["E"]
        return total * area


def _round_params(**kwargs: float) -> dict[str, float]:
    return {
        key: round(float(value), _PARAM_DECIMALS[key])
        for key, value in kwargs.items()
        if value is not None
    }


def parse_gcode(text: str | bytes) -> GcodeProgram:
    """Parse the dialect back into a program; emit -> parse is the identity."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    program = GcodeProgram()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(";"):
            program.commands.append(GcodeCommand(code=";", comment=line[1:].strip()))
            continue
        words = line.split()
        code = words[0]
        if code not in ("G0", "G1", "G92"):
            raise GcodeParseError(f"line {lineno}: unknown command {code!r}")
        params: dict[str, float] = {}
        for word in words[1:]:
            letter = word[0].upper()
            if letter not in _PARAM_ORDER:
                raise GcodeParseError(f"line {lineno}: unknown word {word!r}")
            try:
                params[letter] = float(word[1:])
            except ValueError as exc:
                raise GcodeParseError(f"line {lineno}: malformed coordinate {word!r}") from exc
        program.commands.append(GcodeCommand(code=code, params=params))
    return program


# ---------------------------------------------------------------------------
# STL


def write_stl(solid: PatchSolid) -> bytes:
    """Binary STL in millimeters: 80-byte zero header, count, 50 bytes/triangle."""
    tris = solid.triangles
    if len(tris) == 0:
        raise FabricationError("solid has no triangles")
    if len(tris) > 0xFFFFFFFF:
        raise FabricationError("triangle count exceeds the STL 32-bit limit")
    if not solid.is_watertight():
        raise FabricationError("solid is not watertight")
    verts_mm = (solid.vertices * M_TO_MM).astype(np.float64)

    buf = BytesIO()
    buf.write(b"\x00" * 80)
    buf.write(struct.pack("<I", len(tris)))
    for a, b, c in tris:
        va, vb, vc = verts_mm[a], verts_mm[b], verts_mm[c]
        normal = np.cross(vb - va, vc - va)
        norm = np.linalg.norm(normal)
        if norm > 0:
            normal = normal / norm
        buf.write(struct.pack("<3f", *normal))
        buf.write(struct.pack("<3f", *va))
        buf.write(struct.pack("<3f", *vb))
        buf.write(struct.pack("<3f", *vc))
        buf.write(struct.pack("<H", 0))
    return buf.getvalue()


def read_stl(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Parse binary STL -> (normals (m,3), triangle vertices (m,3,3)), in mm."""
    if len(data) < 84:
        raise FabricationError(f"STL too short ({len(data)} bytes)")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) != expected:
        raise FabricationError(f"STL should be {expected} bytes, got {len(data)}")
    normals = np.zeros((count, 3), dtype=np.float32)
    triangles = np.zeros((count, 3, 3), dtype=np.float32)
    offset = 84
    for i in range(count):
        values = struct.unpack_from("<12f", data, offset)
        normals[i] = values[0:3]
        triangles[i] = np.asarray(values[3:12], dtype=np.float32).reshape(3, 3)
        offset += 50
    return normals, triangles


def stl_volume_mm3(triangles: np.ndarray) -> float:
    """Signed volume of a parsed triangle soup (divergence theorem)."""
    a = triangles[:, 0].astype(np.float64)
    b = triangles[:, 1].astype(np.float64)
    c = triangles[:, 2].astype(np.float64)
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


# ---------------------------------------------------------------------------
# slicing


def _cross_section(verts_mm: np.ndarray, tris: np.ndarray, z: float):
    """Intersect the solid with plane z; returns a shapely polygon set."""
    za = verts_mm[tris[:, 0], 2]
    zb = verts_mm[tris[:, 1], 2]
    zc = verts_mm[tris[:, 2], 2]
    segments = []
    for ti in np.nonzero(~((za > z) == (zb > z)) | ~((zb > z) == (zc > z)))[0]:
        pts = verts_mm[tris[ti]]
        above = pts[:, 2] > z
        if above.all() or (~above).all():
            continue
        cut = []
        for i in range(3):
            j = (i + 1) % 3
            if above[i] != above[j]:
                t = (z - pts[i, 2]) / (pts[j, 2] - pts[i, 2])
                cut.append(pts[i, :2] + t * (pts[j, :2] - pts[i, :2]))
        if len(cut) == 2 and not np.allclose(cut[0], cut[1]):
            segments.append((tuple(np.round(cut[0], 6)), tuple(np.round(cut[1], 6))))
    if not segments:
        raise FabricationError(f"no cross-section at z={z}")

    # chain segments into closed loops
    by_start: dict[tuple, list] = {}
    for a, b in segments:
        by_start.setdefault(a, []).append(b)
        by_start.setdefault(b, []).append(a)
    unused = {tuple(sorted((a, b))) for a, b in segments}
    loops = []
    while unused:
        first = next(iter(unused))
        unused.remove(first)
        a, b = first
        loop = [a, b]
        while loop[-1] != loop[0]:
            headed = loop[-1]
            nexts = [
                p for p in by_start.get(headed, ())
                if tuple(sorted((headed, p))) in unused
            ]
            if not nexts:
                raise FabricationError(
                    f"open contour at z={z} (non-watertight input)"
                )
            nxt = nexts[0]
            unused.remove(tuple(sorted((headed, nxt))))
            loop.append(nxt)
        loops.append(loop[:-1])

    rings = [Polygon(loop) for loop in loops if len(loop) >= 3]
    rings = [r if r.is_valid else r.buffer(0) for r in rings]
    if not rings:
        raise FabricationError(f"degenerate cross-section at z={z}")
    # xor: nested rings become holes, disjoint rings add up
    region = rings[0]
    for r in rings[1:]:
        region = region.symmetric_difference(r)
    if region.is_empty:
        raise FabricationError(f"empty cross-section at z={z}")
    return region


def _polygons(region) -> list[Polygon]:
    if isinstance(region, Polygon):
        return [region]
    if isinstance(region, MultiPolygon):
        return list(region.geoms)
    return [g for g in getattr(region, "geoms", []) if isinstance(g, Polygon)]


def _loop_coords(ring) -> np.ndarray:
    coords = np.asarray(ring.coords, dtype=np.float64)
    if len(coords) > 1 and np.allclose(coords[0], coords[-1]):
        coords = coords[:-1]
    return coords


def _infill_lines(region, spacing: float):
    """Rectilinear 45-degree infill clipped to the region."""
    minx, miny, maxx, maxy = region.bounds
    diag = math.hypot(maxx - minx, maxy - miny) + 2 * spacing
    cx, cy = (minx + maxx) / 2.0, (miny + maxy) / 2.0
    ang = math.radians(INFILL_ANGLE_DEG)
    d = np.array([math.cos(ang), math.sin(ang)])
    n = np.array([-d[1], d[0]])
    count = int(math.ceil(diag / spacing))
    lines = []
    for i in range(-count, count + 1):
        base = np.array([cx, cy]) + n * (i * spacing)
        seg = LineString([base - d * diag, base + d * diag])
        hit = seg.intersection(region)
        if hit.is_empty:
            continue
        pieces = getattr(hit, "geoms", [hit])
        for piece in pieces:
            if isinstance(piece, LineString) and piece.length > 1e-9:
                lines.append((i, np.asarray(piece.coords, dtype=np.float64)))
    # serpentine: alternate direction by line index for shorter travels
    return [coords[::-1] if i % 2 else coords for i, coords in lines]


class _Emitter:
    def __init__(self, cfg: SlicerConfig):
        self.cfg = cfg
        self.commands: list[GcodeCommand] = []
        self.e = 0.0
        self.e_per_mm = cfg.extrusion_width * cfg.layer_height / cfg.filament_area()

    def comment(self, text: str):
        self.commands.append(GcodeCommand(code=";", comment=text))

    def g0(self, x=None, y=None, z=None):
        self.commands.append(GcodeCommand(code="G0", params=_round_params(X=x, Y=y, Z=z)))

    def reset_e(self):
        self.e = 0.0
        self.commands.append(GcodeCommand(code="G92", params={"E": 0.0}))

    def extrude_path(self, coords: np.ndarray, closed: bool):
        pts = list(coords)
        if closed:
            pts.append(coords[0])
        self.g0(x=pts[0][0], y=pts[0][1])
        prev = np.asarray(pts[0], dtype=np.float64)
        for p in pts[1:]:
            p = np.asarray(p, dtype=np.float64)
            self.e += float(np.hypot(*(p - prev))) * self.e_per_mm
            self.commands.append(
                GcodeCommand(
                    code="G1",
                    params=_round_params(X=p[0], Y=p[1], E=self.e, F=self.cfg.feed_rate),
                )
            )
            prev = p


def slice_solid(solid: PatchSolid, cfg: SlicerConfig) -> GcodeProgram:
    """Slice into layers at z = (i + 0.5) * layer_height; perimeters then infill."""
    thickness_mm = solid.thickness * M_TO_MM
    if thickness_mm < cfg.layer_height:
        raise FabricationError(
            f"solid thickness {thickness_mm:.3f} mm is below one layer "
            f"({cfg.layer_height} mm)"
        )
    if not solid.is_watertight():
        raise FabricationError("solid is not watertight")
    verts_mm = solid.vertices * M_TO_MM
    tris = solid.triangles

    em = _Emitter(cfg)
    em.comment("sliced wound patch")
    em.comment(
        f"layer_height={cfg.layer_height} extrusion_width={cfg.extrusion_width} "
        f"filament_diameter={cfg.filament_diameter} perimeters={cfg.perimeter_count} "
        f"infill_spacing={cfg.infill_spacing}"
    )

    layer = 0
    while (layer + 0.5) * cfg.layer_height < thickness_mm - 1e-9:
        z = (layer + 0.5) * cfg.layer_height
        em.comment(f"layer {layer} z={z:.3f}")
        em.g0(z=z)
        em.reset_e()
        region = _cross_section(verts_mm, tris, z)
        for poly in _polygons(region):
            innermost = poly
            for p in range(cfg.perimeter_count):
                inset = cfg.extrusion_width * (p + 0.5)
                ring_region = poly.buffer(-inset, join_style=2, mitre_limit=5.0)
                if ring_region.is_empty:
                    break
                for sub in _polygons(ring_region):
                    em.extrude_path(_loop_coords(sub.exterior), closed=True)
                    for interior in sub.interiors:
                        em.extrude_path(_loop_coords(interior), closed=True)
                if p == cfg.perimeter_count - 1:
                    innermost = ring_region
            # roads cover +-width/2 around their centerline: clipping infill at
            # perimeter_count * width makes total path length * width track the
            # cross-section area
            fill_region = innermost.buffer(
                -cfg.extrusion_width * 0.5, join_style=2, mitre_limit=5.0
            )
            if not fill_region.is_empty:
                for coords in _infill_lines(fill_region, cfg.infill_spacing):
                    em.extrude_path(coords, closed=False)
        layer += 1

    if layer == 0:
        raise FabricationError("no layers produced")
    em.comment("end")
    program = GcodeProgram(commands=em.commands)
    program.validate()
    return program
