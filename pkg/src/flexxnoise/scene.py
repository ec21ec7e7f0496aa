"""Ground-truth depth of a finite planar target seen by a pinhole camera.

Camera frame: Z forward, X right, Y down. The target passes through
(0, 0, distance) and is rotated about the camera Y axis by the incidence
angle, so its normal is (sin t, 0, -cos t). Depth grows toward +X for t > 0.
Frames hold Z-depth, not ray length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .frames import MAX_DEPTH, CameraIntrinsics, CaptureCondition, DepthFrame

PARALLEL_TOL = 1e-12

DEFAULT_ANGLES = (0.0, 15.0, 30.0, 45.0, 60.0)
DEFAULT_DISTANCES = tuple(round(0.4 + 0.2 * i, 10) for i in range(10))  # 0.4 .. 2.2 m
# half-size of the synthetic target; about a cabinet face
DEFAULT_PLANE_EXTENT = 0.25


@dataclass(frozen=True)
class PlanarScene:
    plane_distance: float
    incidence_angle: float  # degrees
    plane_extent: float = math.inf
    background_depth: float | None = None  # None renders as NaN

    def __post_init__(self):
        if not self.plane_distance > 0:
            raise ValidationError("plane_distance must be > 0")
        if not 0 <= self.incidence_angle < 75:
            raise ValidationError("incidence_angle must lie in [0, 75) degrees")
        if not self.plane_extent > 0:
            raise ValidationError("plane_extent must be > 0")

    @property
    def normal(self) -> np.ndarray:
        t = math.radians(self.incidence_angle)
        return np.array([math.sin(t), 0.0, -math.cos(t)])

    @property
    def in_plane_axes(self) -> tuple[np.ndarray, np.ndarray]:
        t = math.radians(self.incidence_angle)
        return np.array([math.cos(t), 0.0, math.sin(t)]), np.array([0.0, 1.0, 0.0])

    @property
    def anchor(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.plane_distance])

    @classmethod
    def from_condition(cls, cond: CaptureCondition) -> PlanarScene:
        extent = math.inf if cond.plane_extent is None else cond.plane_extent
        return cls(cond.nominal_distance, cond.nominal_angle, extent, cond.background_depth)

    def condition(self, mode_id: str, intrinsics: CameraIntrinsics) -> CaptureCondition:
        return CaptureCondition(
            mode_id,
            self.plane_distance,
            self.incidence_angle,
            intrinsics,
            plane_extent=self.plane_extent,
            background_depth=self.background_depth,
        )


def _intersect(scene: PlanarScene, rays: np.ndarray):
    """Z-depth and on-target mask for each ray (..., 3) with unit z."""
    n = scene.normal
    denom = rays @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(np.abs(denom) > PARALLEL_TOL, (n @ scene.anchor) / denom, np.nan)
    # beyond MAX_DEPTH counts as no return
    ok = np.isfinite(z) & (z > 0) & (z < MAX_DEPTH)
    if math.isfinite(scene.plane_extent):
        e1, e2 = scene.in_plane_axes
        pts = rays * np.where(ok, z, 0.0)[..., None] - scene.anchor
        ok &= (np.abs(pts @ e1) <= scene.plane_extent) & (np.abs(pts @ e2) <= scene.plane_extent)
    return z, ok


def render_scene(scene: PlanarScene, intrinsics: CameraIntrinsics) -> DepthFrame:
    """Noise-free float64 depth frame of ``scene``."""
    z, on_target = _intersect(scene, intrinsics.rays())
    background = np.nan if scene.background_depth is None else scene.background_depth
    return DepthFrame(np.where(on_target, z, background))


def target_mask(scene: PlanarScene, intrinsics: CameraIntrinsics) -> np.ndarray:
    return _intersect(scene, intrinsics.rays())[1]


def analytic_incidence_map(scene: PlanarScene, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Per-pixel incidence angle (radians), NaN off target."""
    rays = intrinsics.rays()
    _, on_target = _intersect(scene, rays)
    cos = np.abs(rays @ scene.normal) / np.linalg.norm(rays, axis=-1)
    theta = np.arccos(np.clip(cos, 0.0, 1.0))
    return np.where(on_target, theta, np.nan)


def analytic_incidence(scene: PlanarScene, intrinsics: CameraIntrinsics, pixel) -> float:
    """Angle between the target normal and the viewing ray of ``pixel`` = (col, row)."""
    col, row = pixel
    ray = np.array([(col - intrinsics.cx) / intrinsics.fx, (row - intrinsics.cy) / intrinsics.fy, 1.0])
    _, on_target = _intersect(scene, ray)
    if not on_target:
        raise DomainError(f"pixel {pixel} does not see the target")
    cos = abs(ray @ scene.normal) / np.linalg.norm(ray)
    return float(np.arccos(min(cos, 1.0)))


def default_grid(
    angles=DEFAULT_ANGLES,
    distances=DEFAULT_DISTANCES,
    plane_extent: float = DEFAULT_PLANE_EXTENT,
    background_depth: float | None = None,
) -> list[PlanarScene]:
    """Scenes of the default calibration sweep, angle-major."""
    return [
        PlanarScene(d, a, plane_extent, background_depth) for a in angles for d in distances
    ]
