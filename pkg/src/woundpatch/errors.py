"""Exception hierarchy. Every error names the pipeline stage it came from."""

from __future__ import annotations


class WoundPatchError(Exception):
    """Base for all pipeline errors."""

    stage = "pipeline"
    code = "error"


class BundleError(WoundPatchError):
    stage = "capture"
    code = "bad_bundle"


class InvalidDepthError(WoundPatchError):
    stage = "capture"
    code = "invalid_depth"


class SeedOutsideRasterError(WoundPatchError):
    stage = "segmentation"
    code = "seed_outside_raster"


class SeedBelowThresholdError(WoundPatchError):
    stage = "segmentation"
    code = "seed_below_threshold"


class EmptyMaskError(WoundPatchError):
    stage = "segmentation"
    code = "empty_mask"


class PolygonError(WoundPatchError):
    stage = "segmentation"
    code = "bad_polygon"


class SelfIntersectionError(PolygonError):
    code = "self_intersection"

    def __init__(self, message: str, segments: list[tuple[int, int]] | None = None):
        super().__init__(message)
        # pairs of vertex indices whose outgoing edges intersect
        self.segments = segments or []


class BandError(WoundPatchError):
    stage = "bgpcp"
    code = "bad_band"


class MeshError(WoundPatchError):
    stage = "meshing"
    code = "bad_mesh"


class FlattenError(WoundPatchError):
    stage = "flatten"
    code = "flatten_failed"


class FabricationError(WoundPatchError):
    stage = "fabricate"
    code = "fabrication_failed"


class GcodeParseError(FabricationError):
    code = "bad_gcode"


class EvalError(WoundPatchError):
    stage = "evalharness"
    code = "eval_failed"
