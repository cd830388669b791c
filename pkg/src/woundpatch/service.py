"""Session-oriented HTTP interface binding clinician edits to the pipeline.

One session per capture: upload bundle, tap a seed, slide the threshold,
optionally redraw or drag the boundary, then generate and download STL and
G-code. Sessions are in-memory (optional directory persistence); requests to
one session serialize on its lock, different sessions proceed independently.
Error responses carry {stage, code, message}.
"""

from __future__ import annotations

import hashlib
import json
import tempfile
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .bgpcp import build_band, build_cloud, default_filter_radius, radius_filter
from .capture import CaptureBundle, load_bundle, save_bundle
from .errors import PolygonError, WoundPatchError
from .fabricate import SlicerConfig, slice_solid, write_stl
from .flatten import extrude, flatten
from .meshing import mesh_region
from .segmentation import (
    BoundaryPolygon,
    extract_boundary,
    redraw,
    select_component,
    simplify_polygon,
)

CM2_PER_M2 = 1e4


def mask_to_rle(mask: np.ndarray) -> dict:
    """Row-major run-length encoding; runs alternate starting with zeros."""
    flat = np.asarray(mask, dtype=bool).ravel()
    changes = np.nonzero(np.diff(flat))[0] + 1
    edges = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(edges).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return {"shape": list(mask.shape), "runs": runs}


def rle_to_mask(rle: dict) -> np.ndarray:
    shape = tuple(rle["shape"])
    total = int(np.prod(shape))
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in rle["runs"]:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    if pos != total:
        raise ValueError(f"runs cover {pos} of {total} pixels")
    return flat.reshape(shape)


@dataclass
class Artifacts:
    stl: bytes
    gcode: bytes
    flat_area_cm2: float
    mesh_area_cm2: float
    key: str


@dataclass
class Session:
    session_id: str
    bundle: CaptureBundle
    seed: tuple[int, int] | None = None
    threshold: float = 0.5
    boundary: BoundaryPolygon | None = None
    artifacts: Artifacts | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def preview(self) -> dict:
        if self.boundary is None:
            return {
                "session_id": self.session_id,
                "threshold": self.threshold,
                "seed": self.seed,
                "polygon": None,
                "mask_rle": None,
                "area_px": None,
            }
        mask = self._boundary_mask()
        return {
            "session_id": self.session_id,
            "threshold": self.threshold,
            "seed": self.seed,
            "polygon": simplify_polygon(self.boundary).tolist(),
            "mask_rle": mask_to_rle(mask),
            "area_px": self.boundary.area,
        }

    def _boundary_mask(self) -> np.ndarray:
        h, w = self.bundle.depth.values.shape
        x0, y0, x1, y1 = self.boundary.bounds()
        cx0, cy0 = max(int(np.floor(x0)), 0), max(int(np.floor(y0)), 0)
        cx1, cy1 = min(int(np.ceil(x1)), w), min(int(np.ceil(y1)), h)
        mask = np.zeros((h, w), dtype=bool)
        if cx1 > cx0 and cy1 > cy0:
            ys, xs = np.mgrid[cy0:cy1, cx0:cx1]
            centers = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
            inside = self.boundary.contains_points(centers)
            mask[cy0:cy1, cx0:cx1] = inside.reshape(cy1 - cy0, cx1 - cx0)
        return mask


class SessionStore:
    def __init__(self, persist_dir: str | Path | None = None):
        self._sessions: dict[str, Session] = {}
        self._store_lock = threading.Lock()
        self.persist_dir = Path(persist_dir) if persist_dir else None

    def create(self, bundle: CaptureBundle) -> Session:
        session = Session(
            session_id=uuid.uuid4().hex,
            bundle=bundle,
            threshold=bundle.default_threshold,
        )
        with self._store_lock:
            self._sessions[session.session_id] = session
        if self.persist_dir:
            save_bundle(bundle, self.persist_dir / session.session_id / "bundle")
            self._persist_state(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._store_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def _persist_state(self, session: Session) -> None:
        if not self.persist_dir:
            return
        state = {
            "seed": session.seed,
            "threshold": session.threshold,
            "boundary": None
            if session.boundary is None
            else session.boundary.vertices.tolist(),
        }
        root = self.persist_dir / session.session_id
        root.mkdir(parents=True, exist_ok=True)
        (root / "state.json").write_text(json.dumps(state))


class SeedBody(BaseModel):
    x: int
    y: int


class ThresholdBody(BaseModel):
    value: float


class BoundaryBody(BaseModel):
    vertices: list[list[float]]


class SlicerBody(BaseModel):
    layer_height: float = 0.2
    extrusion_width: float = 0.4
    filament_diameter: float = 1.75
    perimeter_count: int = 1
    infill_spacing: float = 0.4
    feed_rate: float = 1200.0


class GenerateBody(BaseModel):
    thickness_mm: float
    slicer: SlicerBody = SlicerBody()


def _recompute_boundary(session: Session) -> None:
    """Seed + threshold -> component -> boundary. Raises without mutating."""
    if session.bundle.score is None:
        raise PolygonError("bundle has no score map; draw the boundary manually")
    if session.seed is None:
        raise PolygonError("no seed set")
    mask = select_component(session.bundle.score, session.seed, session.threshold)
    session.boundary = extract_boundary(mask)
    session.artifacts = None


def _generate(session: Session, thickness_mm: float, cfg: SlicerConfig) -> Artifacts:
    key_src = json.dumps(
        {
            "boundary": hashlib.sha256(session.boundary.vertices.tobytes()).hexdigest(),
            "threshold": session.threshold,
            "thickness_mm": thickness_mm,
            "slicer": cfg.__dict__,
        },
        sort_keys=True,
    )
    key = hashlib.sha256(key_src.encode()).hexdigest()
    if session.artifacts is not None and session.artifacts.key == key:
        return session.artifacts

    bundle = session.bundle
    boundary = session.boundary
    band = build_band(boundary, bundle.depth.values.shape)
    cloud = build_cloud(bundle.depth, bundle.intrinsics, boundary, band)
    filtered = radius_filter(cloud, radius=default_filter_radius(cloud, bundle.intrinsics))
    mesh = mesh_region(filtered, boundary, bundle.intrinsics)
    flat = flatten(mesh)
    solid = extrude(flat, thickness_mm / 1000.0)
    stl = write_stl(solid)
    gcode = slice_solid(solid, cfg).emit().encode()
    session.artifacts = Artifacts(
        stl=stl,
        gcode=gcode,
        flat_area_cm2=flat.area() * CM2_PER_M2,
        mesh_area_cm2=mesh.surface_area() * CM2_PER_M2,
        key=key,
    )
    return session.artifacts


def create_app(persist_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="woundpatch")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    store = SessionStore(persist_dir=persist_dir)
    app.state.store = store

    @app.exception_handler(WoundPatchError)
    async def pipeline_error(_req: Request, exc: WoundPatchError):
        return JSONResponse(
            status_code=422,
            content={"stage": exc.stage, "code": exc.code, "message": str(exc)},
        )

    @app.exception_handler(KeyError)
    async def missing_session(_req: Request, exc: KeyError):
        return JSONResponse(
            status_code=404,
            content={"stage": "service", "code": "unknown_session", "message": str(exc)},
        )

    @app.post("/sessions")
    async def create_session(
        manifest: UploadFile = File(...),
        rgb: UploadFile = File(...),
        depth: UploadFile = File(...),
        score: UploadFile | None = File(None),
    ):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            manifest_data = json.loads(await manifest.read())
            (root / "rgb.png").write_bytes(await rgb.read())
            (root / "depth.png").write_bytes(await depth.read())
            manifest_data["rgb"] = "rgb.png"
            manifest_data["depth"] = "depth.png"
            if score is not None:
                (root / "score.f32").write_bytes(await score.read())
                manifest_data["score"] = "score.f32"
            else:
                manifest_data.pop("score", None)
            (root / "manifest.json").write_text(json.dumps(manifest_data))
            bundle = load_bundle(root)
        session = store.create(bundle)
        return {"session_id": session.session_id, "threshold": session.threshold}

    @app.post("/sessions/{session_id}/seed")
    def set_seed(session_id: str, body: SeedBody):
        session = store.get(session_id)
        with session.lock:
            old_seed = session.seed
            session.seed = (body.x, body.y)
            try:
                _recompute_boundary(session)
            except WoundPatchError:
                session.seed = old_seed
                raise
            store._persist_state(session)
            return session.preview()

    @app.post("/sessions/{session_id}/threshold")
    def set_threshold(session_id: str, body: ThresholdBody):
        session = store.get(session_id)
        with session.lock:
            if not (0.0 <= body.value <= 1.0):
                raise PolygonError(f"threshold {body.value} outside [0, 1]")
            old = session.threshold
            session.threshold = body.value
            if session.seed is not None:
                try:
                    _recompute_boundary(session)
                except WoundPatchError:
                    session.threshold = old
                    raise
            store._persist_state(session)
            return session.preview()

    @app.put("/sessions/{session_id}/boundary")
    def put_boundary(session_id: str, body: BoundaryBody):
        session = store.get(session_id)
        with session.lock:
            session.boundary = redraw(np.asarray(body.vertices, dtype=np.float64))
            session.artifacts = None
            store._persist_state(session)
            preview = session.preview()
            preview["accepted"] = True
            return preview

    @app.post("/sessions/{session_id}/generate")
    def generate(session_id: str, body: GenerateBody):
        session = store.get(session_id)
        with session.lock:
            if session.boundary is None:
                raise PolygonError("no confirmed boundary; set a seed or draw one")
            cfg = SlicerConfig(**body.slicer.model_dump())
            artifacts = _generate(session, body.thickness_mm, cfg)
            return {
                "stl_size": len(artifacts.stl),
                "gcode_size": len(artifacts.gcode),
                "flat_area_cm2": artifacts.flat_area_cm2,
                "mesh_area_cm2": artifacts.mesh_area_cm2,
            }

    @app.get("/sessions/{session_id}/artifacts/{kind}")
    def get_artifact(session_id: str, kind: str):
        session = store.get(session_id)
        with session.lock:
            if session.artifacts is None:
                raise PolygonError("no artifacts generated yet")
            if kind == "stl":
                return Response(
                    content=session.artifacts.stl, media_type="application/octet-stream"
                )
            if kind == "gcode":
                return Response(content=session.artifacts.gcode, media_type="text/plain")
        raise KeyError(kind)

    return app
