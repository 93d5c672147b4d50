"""Pinhole projection and depth reasoning in camera coordinates.

Implements the projection chain used to turn network head outputs into a 3D
box center: pixel projection, real<->virtual depth conversion under a fixed
reference camera, a second depth estimate from 2D/3D object heights, depth
fusion, and back-projection.

Conventions: camera frame is x-right, y-down, z-forward; all lengths in
meters, all image quantities in pixels. Every function here is pure.
"""

from __future__ import annotations

import enum
from typing import TYPE_CHECKING, NamedTuple

from .errors import DegenerateHeight, MissingHeight2D, NonPositiveDepth

if TYPE_CHECKING:  # pragma: no cover
    from .decoder import RawHeadOutput

# 2D heights below this many pixels are treated as degenerate.
HEIGHT2D_EPSILON = 1e-6


class CameraIntrinsics(NamedTuple):
    """Pinhole parameters (pixels) plus image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float


class VirtualCamera(NamedTuple):
    """Reference camera used to normalize depths across real cameras.

    Any fixed choice works: the conversion factors cancel between encoding
    and decoding. Defaults are fx_v=500, width_v=1000.
    """

    fx_v: float = 500.0
    width_v: float = 1000.0


DEFAULT_VIRTUAL_CAMERA = VirtualCamera()


class Point2D(NamedTuple):
    u: float
    v: float


class Point3D(NamedTuple):
    X: float
    Y: float
    Z: float


class DepthMode(enum.Enum):
    """How the final depth is assembled before back-projection."""

    VIRTUAL_ONLY = "virtual_only"
    FUSED_AVERAGE = "fused_average"


def project(p: Point3D, cam: CameraIntrinsics) -> Point2D:
    """Project a camera-frame point to pixel coordinates.

    Raises NonPositiveDepth if the point is on or behind the camera plane.
    """
    if p.Z <= 0.0:
        raise NonPositiveDepth(f"cannot project point with Z={p.Z}")
    return Point2D(cam.fx * p.X / p.Z + cam.cx, cam.fy * p.Y / p.Z + cam.cy)


def real_to_virtual_depth(z: float, cam: CameraIntrinsics, vc: VirtualCamera) -> float:
    """Depth the point would have under the virtual camera at the same
    normalized pixel position and the same X."""
    if z <= 0.0:
        raise NonPositiveDepth(f"real depth must be positive, got {z}")
    return (vc.fx_v / cam.fx) * (cam.width / vc.width_v) * z


def virtual_to_real_depth(d_v: float, cam: CameraIntrinsics, vc: VirtualCamera) -> float:
    """Exact inverse of :func:`real_to_virtual_depth`."""
    if d_v <= 0.0:
        raise NonPositiveDepth(f"virtual depth must be positive, got {d_v}")
    return d_v * (cam.fx / vc.fx_v) * (vc.width_v / cam.width)


def height_depth(h3d: float, h2d: float, cam: CameraIntrinsics) -> float:
    """Second depth estimate from the 3D object height and its 2D pixel height."""
    if h3d <= 0.0:
        raise DegenerateHeight(f"3D height must be positive, got {h3d}")
    if h2d <= HEIGHT2D_EPSILON:
        raise DegenerateHeight(f"2D height {h2d} px is at or below {HEIGHT2D_EPSILON} px")
    return (h3d / h2d) * cam.fy


def fuse_depth(z1: float, z2: float | None, mode: DepthMode) -> float:
    """Combine the virtual-depth estimate z1 with the height-based z2.

    VIRTUAL_ONLY returns z1 and ignores z2; FUSED_AVERAGE returns the plain
    mean of the two.
    """
    if z1 is None or z1 <= 0.0:
        raise NonPositiveDepth(f"z1 must be positive, got {z1}")
    if mode is DepthMode.VIRTUAL_ONLY:
        return z1
    if z2 is None or z2 <= 0.0:
        raise NonPositiveDepth(f"z2 must be positive for fused mode, got {z2}")
    return 0.5 * (z1 + z2)


def backproject_center(p: Point2D, z: float, cam: CameraIntrinsics) -> Point3D:
    """Recover the camera-frame point from a pixel location and a depth."""
    if z <= 0.0:
        raise NonPositiveDepth(f"depth must be positive, got {z}")
    return Point3D((z / cam.fx) * (p.u - cam.cx), (z / cam.fy) * (p.v - cam.cy), z)


def reason_center(
    raw: "RawHeadOutput",
    cam: CameraIntrinsics,
    vc: VirtualCamera,
    mode: DepthMode,
    h2d: float | None = None,
) -> Point3D:
    """Full reasoning chain from head outputs to the 3D box center.

    Scales the normalized projection back to pixels, converts virtual depth
    to real depth, optionally fuses with the height-based depth (h2d is
    required in that mode), and back-projects.
    """
    u = raw.u_norm * cam.width
    v = raw.v_norm * cam.height
    z1 = virtual_to_real_depth(raw.d_v, cam, vc)
    z2 = None
    if mode is DepthMode.FUSED_AVERAGE:
        if h2d is None:
            raise MissingHeight2D("fused depth mode requires a 2D height")
        z2 = height_depth(raw.H, h2d, cam)
    z = fuse_depth(z1, z2, mode)
    return backproject_center(Point2D(u, v), z, cam)
