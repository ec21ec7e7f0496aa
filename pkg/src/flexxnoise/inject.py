"""Simulated capture: apply lateral and axial noise to clean depth frames."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, ValidationError
from .frames import CameraIntrinsics, CaptureCondition, DepthFrame, FrameStack
from .model import SIGMA_FLOOR, THETA_MAX, NoiseModelCoefficients
from .rng import STREAM_AXIAL, STREAM_LATERAL_X, STREAM_LATERAL_Y, stream_key
from .scene import PlanarScene, analytic_incidence_map

LATERAL_MODES = ("isotropic", "x_only", "off")
ANGLE_SOURCES = ("estimated", "analytic")


@dataclass(frozen=True)
class InjectionConfig:
    """How to corrupt a frame.

    ``fallback_angle`` (radians) is used wherever the incidence angle is
    unknown; set it to ``math.radians(60)`` for a worst-case simulation.
    """

    coefficients: NoiseModelCoefficients
    seed: int = 0
    lateral_mode: str = "isotropic"
    axial: bool = True
    angle_source: str = "estimated"
    fallback_angle: float = 0.0
    floor: float | None = SIGMA_FLOOR

    def __post_init__(self):
        if self.lateral_mode not in LATERAL_MODES:
            raise ValidationError(f"lateral_mode must be one of {LATERAL_MODES}")
        if self.angle_source not in ANGLE_SOURCES:
            raise ValidationError(f"angle_source must be one of {ANGLE_SOURCES}")
        if not 0 <= self.fallback_angle <= THETA_MAX:
            raise ValidationError("fallback_angle must lie in [0, 75] degrees")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")
        if not self.axial and self.lateral_mode == "off":
            warnings.warn("injection config disables both axial and lateral noise", stacklevel=3)

    def frame_keys(self, frame_index: int) -> tuple[int, int, int]:
        return tuple(
            stream_key(self.seed, frame_index, s)
            for s in (STREAM_LATERAL_X, STREAM_LATERAL_Y, STREAM_AXIAL)
        )


def estimate_incidence_map(frame: DepthFrame, intrinsics: CameraIntrinsics,
                           backend: str | None = None) -> np.ndarray:
    """Per-pixel incidence angle from central-difference surface normals.

    Points are re-projected through ``intrinsics``; the normal at a pixel is
    the cross product of the differences between its left/right and up/down
    neighbours. Returns radians clamped to [0, 75 deg]; NaN on the border and
    wherever the pixel or any of its four neighbours is invalid.
    """
    return kernels.incidence_map(frame.depths, intrinsics, THETA_MAX, backend=backend)


def _check_angles(theta: np.ndarray, depth: np.ndarray):
    bad = ~np.isnan(depth) & ~np.isnan(theta) & ~((theta >= 0) & (theta <= THETA_MAX))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DomainError(
            f"incidence angle {math.degrees(theta[row, col]):.3f} deg at pixel "
            f"(row={row}, col={col}) outside the model domain [0, 75] deg"
        )


def incidence_for(frame: DepthFrame, intrinsics: CameraIntrinsics, config: InjectionConfig,
                  scene: PlanarScene | None = None, backend: str | None = None) -> np.ndarray:
    if not config.axial:
        return np.zeros(frame.depths.shape)
    if config.angle_source == "analytic":
        if scene is None:
            raise ValidationError("analytic angle source needs the scene")
        theta = analytic_incidence_map(scene, intrinsics)
    else:
        theta = estimate_incidence_map(frame, intrinsics, backend)
    _check_angles(theta, frame.depths)
    return theta


def inject(
    frame: DepthFrame,
    intrinsics: CameraIntrinsics,
    config: InjectionConfig,
    scene: PlanarScene | None = None,
    *,
    frame_index: int = 0,
    theta: np.ndarray | None = None,
    backend: str | None = None,
) -> DepthFrame:
    """Return a noisy copy of ``frame``.

    Each output pixel first samples the input at a jittered nearest-neighbour
    location: every row shares one horizontal offset and every column one
    vertical offset, each drawn from N(0, sigma_x^2). The sampled depth then
    receives independent N(0, axial_sigma(z, theta)^2) noise. Invalid sources
    stay invalid; depths pushed to <= 0 become invalid.

    ``theta`` overrides the incidence map (useful when injecting many frames of
    one scene). The output keeps the input dtype.
    """
    if (frame.height, frame.width) != (intrinsics.height, intrinsics.width):
        raise ValidationError("frame size does not match the intrinsics")
    if theta is None:
        theta = incidence_for(frame, intrinsics, config, scene, backend)
    noisy = kernels.inject_frame(
        frame.depths,
        theta,
        config.coefficients,
        floor=config.floor,
        fallback=config.fallback_angle,
        lateral=config.lateral_mode,
        axial=config.axial,
        keys=config.frame_keys(frame_index),
        backend=backend,
    )
    return DepthFrame(noisy.astype(frame.depths.dtype, copy=False))


def inject_stack(
    clean_frame: DepthFrame,
    count: int,
    intrinsics: CameraIntrinsics,
    config: InjectionConfig,
    scene: PlanarScene | None = None,
    condition: CaptureCondition | None = None,
    *,
    first_frame: int = 0,
    dtype=np.float32,
    backend: str | None = None,
) -> FrameStack:
    """``count`` independent noisy captures of one clean frame.

    Frame ``i`` uses counter keys derived from ``first_frame + i``, so a stack
    can be produced in chunks and still match a single call.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    theta = incidence_for(clean_frame, intrinsics, config, scene, backend)
    out = np.empty((count, clean_frame.height, clean_frame.width), dtype=dtype)
    for i in range(count):
        noisy = kernels.inject_frame(
            clean_frame.depths,
            theta,
            config.coefficients,
            floor=config.floor,
            fallback=config.fallback_angle,
            lateral=config.lateral_mode,
            axial=config.axial,
            keys=config.frame_keys(first_frame + i),
            backend=backend,
        )
        out[i] = noisy
    return FrameStack(out, condition)
