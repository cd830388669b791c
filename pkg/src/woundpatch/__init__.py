"""woundpatch: RGB-D wound capture to printable patch.

Pipeline: capture bundle -> score fusion and seeded segmentation -> confirmed
boundary -> boundary-guided point-cloud filtering -> Delaunay surface meshing
-> conformal flattening -> extruded solid -> binary STL and G-code.
"""

from ._kernels import USING_COMPILED

__version__ = "0.1.0"

__all__ = ["USING_COMPILED", "__version__"]
