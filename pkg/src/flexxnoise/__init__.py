"""Axial and lateral depth-noise model of the PMD Flexx2 time-of-flight camera.

Noise model, synthetic planar scenes, noise injection, calibration from
planar-target stacks and KL-divergence validation.
"""

__version__ = "0.1.0"

from .errors import (
    AmbiguousEdgeError,
    DegenerateFitError,
    DomainError,
    EdgeNotFoundError,
    FlexxNoiseError,
    FormatError,
    InsufficientDataError,
    RankDeficientError,
    ValidationError,
)
from .model import (
    PRESETS,
    SIGMA_FLOOR,
    THETA_MAX,
    NoiseModelCoefficients,
    axial_sigma,
    coefficients_from_json,
    coefficients_to_json,
    gaussian_kl,
    preset,
    sample_axial,
    sample_lateral_offset,
)
from .frames import (
    CameraIntrinsics,
    CaptureCondition,
    DepthFrame,
    FrameStack,
    default_intrinsics,
    read_stack,
    write_stack,
)
from .scene import PlanarScene, analytic_incidence, default_grid, render_scene
from .inject import InjectionConfig, estimate_incidence_map, inject, inject_stack
from .calib import calibrate, fit_axial_model, fit_lateral_sigma, fit_plane
from .validate import KlReport, axial_kl, emit_report, lateral_kl, validate_stack

__all__ = [name for name in dir() if not name.startswith("_")]
