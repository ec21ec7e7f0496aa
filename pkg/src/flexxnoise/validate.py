"""Pixel-wise KL divergence between measured noise and a noise model."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .calib import PlaneFit, Roi, axial_roi, fit_plane, pixel_statistics, temporal_mean
from .errors import InsufficientDataError
from .frames import CameraIntrinsics, CaptureCondition, FrameStack
from .model import NoiseModelCoefficients, axial_sigma, gaussian_kl

SCHEMA_VERSION = "flexxnoise.kl-report/1"
MIN_LATERAL_RESIDUALS = 30


@dataclass(frozen=True)
class AxialKl:
    """Mean per-pixel KL of one condition; ``kl`` is None when no pixel had spread."""

    kl: float | None
    pixel_count: int
    skipped: int
    condition: CaptureCondition | None = None


def axial_kl(
    stack: FrameStack,
    roi: Roi,
    plane: PlaneFit,
    coeffs: NoiseModelCoefficients,
    intrinsics: CameraIntrinsics | None = None,
) -> AxialKl:
    """Average KL(empirical pixel Gaussian || model Gaussian) over the ROI.

    The empirical side uses each pixel's temporal mean and std; the model side
    is centred on the plane-predicted depth with std ``axial_sigma`` at that
    depth and the pixel's incidence angle. Pixels with zero temporal spread
    are skipped and counted.
    """
    stats = pixel_statistics(stack, roi, plane, intrinsics)
    usable = stats.std > 0
    skipped = int(stats.std.size - usable.sum())
    if not usable.any():
        return AxialKl(None, 0, skipped, stack.condition)
    z = stats.plane_depth[usable]
    model_sigma = axial_sigma(coeffs, z, stats.theta[usable])
    kl = gaussian_kl(stats.mean[usable], stats.std[usable], z, model_sigma)
    return AxialKl(float(np.mean(kl)), int(usable.sum()), skipped, stack.condition)


def lateral_kl(residuals, sigma_x: float, min_count: int = MIN_LATERAL_RESIDUALS) -> float:
    """KL between the Gaussian fitted to edge residuals and N(0, sigma_x^2)."""
    r = np.asarray(residuals, dtype=np.float64).ravel()
    if r.size < min_count:
        raise InsufficientDataError(f"need at least {min_count} residuals, got {r.size}")
    return gaussian_kl(r.mean(), r.std(), 0.0, sigma_x)


@dataclass(frozen=True)
class KlEntry:
    mode_id: str
    nominal_angle: float
    nominal_distance: float
    kl: float | None
    pixel_count: int
    skipped: int = 0

    @property
    def key(self):
        return (self.mode_id, self.nominal_angle, self.nominal_distance)


def _weighted(entries) -> float | None:
    weight = sum(e.pixel_count for e in entries if e.kl is not None)
    if weight == 0:
        return None
    return sum(e.kl * e.pixel_count for e in entries if e.kl is not None) / weight


@dataclass
class KlReport:
    entries: list[KlEntry] = field(default_factory=list)
    lateral: dict[str, float] = field(default_factory=dict)

    def add(self, result: AxialKl):
        c = result.condition
        if c is None:
            raise ValueError("report entries need a capture condition")
        self.entries.append(
            KlEntry(c.mode_id, c.nominal_angle, c.nominal_distance, result.kl,
                    result.pixel_count, result.skipped)
        )

    @property
    def per_condition(self) -> dict[tuple, float | None]:
        return {e.key: e.kl for e in sorted(self.entries, key=lambda e: e.key)}

    @property
    def modes(self) -> list[str]:
        return sorted({e.mode_id for e in self.entries})

    @property
    def angles(self) -> list[float]:
        return sorted({e.nominal_angle for e in self.entries})

    @property
    def per_mode_average(self) -> dict[str, float | None]:
        return {m: _weighted([e for e in self.entries if e.mode_id == m]) for m in self.modes}

    @property
    def overall_average(self) -> float | None:
        return _weighted(self.entries)

    def cell(self, mode_id: str, angle: float) -> float | None:
        return _weighted([e for e in self.entries if e.mode_id == mode_id and e.nominal_angle == angle])

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "unit": "nats",
            "conditions": [
                {
                    "mode_id": e.mode_id,
                    "nominal_angle": e.nominal_angle,
                    "nominal_distance": e.nominal_distance,
                    "axial_kl": e.kl,
                    "pixel_count": e.pixel_count,
                    "skipped_zero_spread": e.skipped,
                }
                for e in sorted(self.entries, key=lambda e: e.key)
            ],
            "per_mode_average": self.per_mode_average,
            "overall_average": self.overall_average,
            "lateral_kl": {m: self.lateral[m] for m in sorted(self.lateral)},
        }


def _fmt(x: float | None, width: int = 8) -> str:
    return f"{'n/a':>{width}}" if x is None else f"{x:>{width}.3f}"


def emit_report(report: KlReport, fmt: str = "json") -> str:
    """Render a report as versioned JSON or a mode x angle text table."""
    if not report.entries:
        raise ValueError("cannot render an empty report")
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    angles = report.angles
    label_w = max(len("Incidence angle"), *(len(m) for m in report.modes))
    head = f"{'Incidence angle':<{label_w}}" + "".join(f"{_angle_label(a):>8}" for a in angles)
    head += f"{'mean':>8}"
    lines = ["Average axial KL divergence (nats)", head, "-" * len(head)]
    per_mode = report.per_mode_average
    for m in report.modes:
        cells = "".join(_fmt(report.cell(m, a)) for a in angles)
        lines.append(f"{m:<{label_w}}{cells}{_fmt(per_mode[m])}")
    lines.append(f"overall average: {_fmt(report.overall_average, 0).strip()}")
    for m in sorted(report.lateral):
        lines.append(f"lateral KL {m}: {report.lateral[m]:.3f}")
    return "\n".join(lines) + "\n"


def _angle_label(a: float) -> str:
    return f"{a:g}°"


def validate_stack(stack: FrameStack, coeffs: NoiseModelCoefficients, roi: Roi | None = None) -> AxialKl:
    """ROI selection, plane fit and axial KL for one stack."""
    if roi is None:
        roi = axial_roi(temporal_mean(stack))
    plane = fit_plane(stack, roi)
    return axial_kl(stack, roi, plane, coeffs)

