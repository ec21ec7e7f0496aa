"""Recover noise-model parameters from static-scene frame stacks.

Axial: pick a central region of the planar target, fit a plane to the
temporal-mean points, take per-pixel temporal standard deviations and fit the
axial model by a grid search over the exponent ``n`` with a linear least
squares solve for (a, b, c, d) at each grid value.

Lateral: locate the strongest horizontal depth jump per row, fit a vertical
line through the edge columns and report their spread in pixels.
"""

from __future__ import annotations

import math
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import (
    AmbiguousEdgeError,
    DegenerateFitError,
    DomainError,
    EdgeNotFoundError,
    InsufficientDataError,
    RankDeficientError,
)
from .frames import CameraIntrinsics, CaptureCondition, DepthFrame, FrameStack
from .model import NoiseModelCoefficients

ROI_FRACTION = 0.4
MIN_VALID_FRACTION = 0.5
MIN_FRAMES = 30
N_GRID = (-1.0, 3.0, 0.1)
EDGE_DOMINANCE = 8.0
EDGE_AMBIGUITY = 0.5
LATERAL_PERCENTILE = 90.0


@dataclass(frozen=True)
class Roi:
    """Half-open pixel rectangle ``[row0, row1) x [col0, col1)``."""

    row0: int
    row1: int
    col0: int
    col1: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.row0, self.row1), slice(self.col0, self.col1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.row1 - self.row0, self.col1 - self.col0

    @property
    def center(self) -> tuple[float, float]:
        return (self.row0 + self.row1 - 1) / 2, (self.col0 + self.col1 - 1) / 2


@dataclass(frozen=True)
class PlaneFit:
    """Plane ``normal . p = offset`` with the normal facing the camera."""

    normal: np.ndarray
    offset: float
    rms_residual: float
    inlier_count: int

    def depth_along(self, rays: np.ndarray) -> np.ndarray:
        """Z-depth where rays with unit z component meet the plane."""
        return self.offset / (rays @ self.normal)

    def incidence(self, rays: np.ndarray) -> np.ndarray:
        cos = np.abs(rays @ self.normal) / np.linalg.norm(rays, axis=-1)
        return np.arccos(np.clip(cos, 0.0, 1.0))


@dataclass(frozen=True)
class AxialSample:
    z: float
    theta: float
    sigma_measured: float
    pixel_count: int
    condition: CaptureCondition | None = None


@dataclass(frozen=True)
class LateralSample:
    condition: CaptureCondition | None
    sigma_px: float
    line_column: float = math.nan
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)


@dataclass(frozen=True)
class PixelStatistics:
    """Per-pixel temporal statistics inside an ROI (flattened, kept pixels only)."""

    rows: np.ndarray
    cols: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    plane_depth: np.ndarray
    theta: np.ndarray
    rays: np.ndarray
    dropped: int


@dataclass(frozen=True)
class AxialFit:
    coefficients: NoiseModelCoefficients
    mse: float
    mse_by_n: dict[float, float]

    @property
    def n(self) -> float:
        return self.coefficients.n


def _valid_fraction(data: np.ndarray) -> np.ndarray:
    return np.mean(~np.isnan(data), axis=0)


def temporal_mean(stack: FrameStack, min_valid_fraction: float = MIN_VALID_FRACTION) -> DepthFrame:
    """Mean depth per pixel over frames where it is valid; NaN if rarely valid."""
    data = np.asarray(stack.data, dtype=np.float64)
    keep = _valid_fraction(data) >= min_valid_fraction
    with _quiet_nan_warnings():
        mean = np.nanmean(data, axis=0)
    return DepthFrame(np.where(keep, mean, np.nan))


@contextmanager
def _quiet_nan_warnings():
    # all-NaN slices are expected; they are filtered by the validity mask
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def axial_roi(frame: DepthFrame, fraction: float = ROI_FRACTION) -> Roi:
    """Central rectangle over ``fraction`` of the largest valid blob's bounding box.

    The rectangle is shrunk symmetrically until it holds no invalid pixel and
    stays off the frame border.
    """
    valid = frame.valid
    labels, count = ndimage.label(valid)
    if count == 0:
        raise InsufficientDataError("frame has no valid pixels")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    rows, cols = ndimage.find_objects(labels)[int(np.argmax(sizes)) - 1]
    bh, bw = rows.stop - rows.start, cols.stop - cols.start
    rh, rw = max(1, round(fraction * bh)), max(1, round(fraction * bw))
    r0 = rows.start + (bh - rh) // 2
    c0 = cols.start + (bw - rw) // 2
    r1, c1 = r0 + rh, c0 + rw
    h, w = valid.shape
    while r0 < r1 and c0 < c1:
        touches_border = r0 == 0 or c0 == 0 or r1 == h or c1 == w
        if not touches_border and valid[r0:r1, c0:c1].all():
            return Roi(r0, r1, c0, c1)
        r0, r1, c0, c1 = r0 + 1, r1 - 1, c0 + 1, c1 - 1
    raise InsufficientDataError("no all-valid region away from the frame border")


def fit_plane_points(points: np.ndarray) -> PlaneFit:
    """Total-least-squares plane through an (N, 3) point cloud."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pts = pts[np.isfinite(pts).all(axis=1)]
    if len(pts) < 3:
        raise DegenerateFitError(f"need at least 3 valid points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if s[0] == 0 or s[1] <= 1e-9 * s[0]:
        raise DegenerateFitError("points are collinear or coincident")
    normal = vt[2]
    if normal @ centroid > 0:
        normal = -normal
    normal = normal / np.linalg.norm(normal)
    offset = float(normal @ centroid)
    resid = pts @ normal - offset
    return PlaneFit(normal, offset, float(np.sqrt(np.mean(resid**2))), len(pts))


def _intrinsics_of(stack: FrameStack, intrinsics: CameraIntrinsics | None) -> CameraIntrinsics:
    if intrinsics is not None:
        return intrinsics
    if stack.condition is None:
        raise ValueError("intrinsics are required for a stack without a capture condition")
    return stack.condition.intrinsics


def fit_plane(stack: FrameStack, roi: Roi, intrinsics: CameraIntrinsics | None = None) -> PlaneFit:
    """Plane through the re-projected temporal-mean depths inside ``roi``."""
    intrinsics = _intrinsics_of(stack, intrinsics)
    mean = temporal_mean(stack).depths
    pts = intrinsics.backproject(mean)[roi.slices]
    return fit_plane_points(pts)


def pixel_statistics(
    stack: FrameStack,
    roi: Roi,
    plane: PlaneFit,
    intrinsics: CameraIntrinsics | None = None,
    min_valid_fraction: float = MIN_VALID_FRACTION,
) -> PixelStatistics:
    intrinsics = _intrinsics_of(stack, intrinsics)
    sub = np.asarray(stack.data[(slice(None),) + roi.slices], dtype=np.float64)
    n_valid = np.sum(~np.isnan(sub), axis=0)
    keep = (n_valid >= min_valid_fraction * len(stack)) & (n_valid >= 2)
    rows, cols = np.nonzero(keep)
    picked = sub[:, rows, cols]
    with _quiet_nan_warnings():
        mean = np.nanmean(picked, axis=0)
        std = np.nanstd(picked, axis=0, ddof=1)
        # rounding in the mean leaves ~1e-16 on constant series; make it exact
        std[np.nanmax(picked, axis=0) == np.nanmin(picked, axis=0)] = 0.0
    rays = intrinsics.rays()[roi.slices][rows, cols]
    return PixelStatistics(
        rows=rows + roi.row0,
        cols=cols + roi.col0,
        mean=mean,
        std=std,
        plane_depth=plane.depth_along(rays),
        theta=plane.incidence(rays),
        rays=rays,
        dropped=int(keep.size - keep.sum()),
    )


def axial_statistics(
    stack: FrameStack,
    roi: Roi,
    plane: PlaneFit,
    intrinsics: CameraIntrinsics | None = None,
    min_frames: int = MIN_FRAMES,
) -> AxialSample:
    """Aggregate temporal noise of one condition.

    ``sigma_measured`` is the mean of per-pixel temporal stds over pixels valid
    in at least half the frames; ``z`` is the mean plane depth over those
    pixels and ``theta`` the angle between the plane normal and their mean
    viewing direction.
    """
    if len(stack) < min_frames:
        raise InsufficientDataError(f"need at least {min_frames} frames, got {len(stack)}")
    stats = pixel_statistics(stack, roi, plane, intrinsics)
    if stats.std.size == 0:
        raise InsufficientDataError("no pixel in the ROI is valid in enough frames")
    unit = stats.rays / np.linalg.norm(stats.rays, axis=1, keepdims=True)
    mean_dir = unit.mean(axis=0)
    mean_dir /= np.linalg.norm(mean_dir)
    theta = float(np.arccos(min(1.0, abs(mean_dir @ plane.normal))))
    return AxialSample(
        z=float(stats.plane_depth.mean()),
        theta=theta,
        sigma_measured=float(stats.std.mean()),
        pixel_count=int(stats.std.size),
        condition=stack.condition,
    )


def extract_edge(
    stack: FrameStack,
    search_band: tuple[int, int],
    rows: tuple[int, int] | None = None,
    dominance: float = EDGE_DOMINANCE,
    ambiguity: float = EDGE_AMBIGUITY,
) -> LateralSample:
    """Spread of a near-vertical depth edge across rows and frames.

    Within columns ``search_band = (start, stop)`` each row's edge is the
    column just past the largest jump between horizontally adjacent pixels.
    Jumps between two valid pixels score their absolute depth difference; a
    valid/invalid boundary scores infinity. A row has an edge only if its best
    score exceeds ``dominance`` times the row's median finite score; it is
    ambiguous if another jump at least two columns away reaches ``ambiguity``
    of the best.
    """
    c0, c1 = search_band
    r0, r1 = rows if rows is not None else (0, stack.height)
    if not (0 <= c0 < c1 <= stack.width and 0 <= r0 < r1 <= stack.height) or c1 - c0 < 2:
        raise ValueError(f"search band {search_band} / rows {(r0, r1)} outside the frame")
    sub = np.asarray(stack.data[:, r0:r1, c0:c1], dtype=np.float64)
    valid = ~np.isnan(sub)
    both = valid[..., 1:] & valid[..., :-1]
    one = valid[..., 1:] ^ valid[..., :-1]
    with np.errstate(invalid="ignore"):
        jump = np.abs(np.diff(sub, axis=-1))
    score = np.where(both, jump, np.where(one, np.inf, np.nan))

    filled = np.where(np.isnan(score), -1.0, score)
    pos = np.argmax(filled, axis=-1)
    best = np.take_along_axis(filled, pos[..., None], axis=-1)[..., 0]
    finite = np.where(np.isfinite(score), score, np.nan)
    with _quiet_nan_warnings():
        median = np.nanmedian(finite, axis=-1)
    median = np.where(np.isnan(median), 0.0, median)
    has_edge = (best > 0) & (best > dominance * median)

    idx = np.arange(score.shape[-1])
    near = np.abs(idx - pos[..., None]) <= 1
    second = np.max(np.where(near, -1.0, filled), axis=-1, initial=-1.0)
    ambiguous = has_edge & (second >= ambiguity * best)

    n_edges = int(has_edge.sum())
    if n_edges == 0:
        raise EdgeNotFoundError(f"no depth discontinuity in columns {c0}..{c1 - 1}")
    if ambiguous.sum() > 0.5 * n_edges:
        raise AmbiguousEdgeError(
            f"{int(ambiguous.sum())} of {n_edges} rows show more than one dominant edge"
        )
    cols = (c0 + pos + 1)[has_edge & ~ambiguous].astype(np.float64)
    line = float(cols.mean())
    resid = cols - line
    return LateralSample(
        condition=stack.condition,
        sigma_px=float(np.sqrt(np.mean(resid**2))),
        line_column=line,
        residuals=resid,
    )


def n_grid_values(n_min: float, n_max: float, step: float) -> np.ndarray:
    count = int(math.floor((n_max - n_min) / step + 1e-9)) + 1
    return np.round(n_min + step * np.arange(count), 10)


def _distinct(values: np.ndarray, tol: float) -> int:
    v = np.sort(values)
    return int(1 + np.sum(np.diff(v) > tol)) if v.size else 0


def fit_axial_arrays(
    z,
    theta,
    sigma,
    n_grid: tuple[float, float, float] = N_GRID,
    mode_id: str = "custom",
    sigma_x: float = 0.0,
) -> AxialFit:
    """Grid search over ``n``; linear least squares for (a, b, c, d) at each ``n``.

    Samples are weighted equally. The ``n`` with the smallest mean squared
    error wins, ties going to the smaller ``n``.
    """
    z = np.asarray(z, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if z.size < 5:
        raise InsufficientDataError(f"need at least 5 samples, got {z.size}")
    if _distinct(theta, 1e-3) < 2:
        raise RankDeficientError("all samples share one incidence angle; d is unidentifiable")
    if _distinct(z, 1e-3) < 3:
        raise RankDeficientError("fewer than 3 distinct distances; a, b, c are unidentifiable")

    q2 = (theta / (np.pi / 2 - theta)) ** 2
    base = np.column_stack([np.ones_like(z), z, z * z])
    mse_by_n: dict[float, float] = {}
    best = None
    for n in n_grid_values(*n_grid):
        n = float(n)
        if n < 0 and np.any(z == 0):
            mse_by_n[n] = math.nan
            continue
        design = np.column_stack([base, z**n * q2])
        scale = np.linalg.norm(design, axis=0)
        scaled = design / scale
        sv = np.linalg.svd(scaled, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            mse_by_n[n] = math.nan
            continue
        sol, *_ = np.linalg.lstsq(scaled, sigma, rcond=None)
        coef = sol / scale
        mse = float(np.mean((design @ coef - sigma) ** 2))
        mse_by_n[n] = mse
        if best is None or mse < best[0]:
            best = (mse, n, coef)
    if best is None:
        raise RankDeficientError("design matrix is rank deficient for every grid exponent")
    mse, n, (a, b, c, d) = best
    return AxialFit(NoiseModelCoefficients(a, b, c, d, n, sigma_x, mode_id), mse, mse_by_n)


def fit_axial_model(
    samples: Iterable[AxialSample],
    n_grid: tuple[float, float, float] = N_GRID,
    mode_id: str = "custom",
    sigma_x: float = 0.0,
) -> AxialFit:
    samples = list(samples)
    return fit_axial_arrays(
        [s.z for s in samples],
        [s.theta for s in samples],
        [s.sigma_measured for s in samples],
        n_grid,
        mode_id,
        sigma_x,
    )


def percentile_linear(values, q: float) -> float:
    """``q``-th percentile with linear interpolation between order statistics.

    Same definition as numpy's default method, but the interpolation step is
    done in exact rational arithmetic and rounded once, so the result is the
    correctly rounded order-statistic value.
    """
    xs = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if xs.size == 0:
        raise InsufficientDataError("percentile of an empty sample")
    if not 0 <= q <= 100 or np.isnan(xs).any():
        raise ValueError("percentile needs q in [0, 100] and no NaN values")
    rank = Fraction(q) / 100 * (xs.size - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, xs.size - 1)
    x_lo, x_hi = Fraction(float(xs[lo])), Fraction(float(xs[hi]))
    return float(x_lo + (rank - lo) * (x_hi - x_lo))


def fit_lateral_sigma(samples) -> float:
    """90th percentile (linear interpolation) of per-condition lateral stds."""
    values = [s.sigma_px if isinstance(s, LateralSample) else float(s) for s in samples]
    if not values:
        raise InsufficientDataError("no lateral samples")
    return percentile_linear(values, LATERAL_PERCENTILE)


def lateral_band(frame: DepthFrame, margin: float = 0.1) -> tuple[tuple[int, int], tuple[int, int]]:
    """Search band around the right edge of the largest valid blob.

    Returns ``(columns, rows)``; rows cover the inner 80% of the blob height.
    """
    labels, count = ndimage.label(frame.valid)
    if count == 0:
        raise EdgeNotFoundError("frame has no valid pixels")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    rows, cols = ndimage.find_objects(labels)[int(np.argmax(sizes)) - 1]
    if cols.stop >= frame.width:
        raise EdgeNotFoundError("target reaches the right border; no vertical edge to measure")
    half = max(6, round(margin * (cols.stop - cols.start)))
    bh = rows.stop - rows.start
    trim = round(0.1 * bh)
    band = (max(cols.start + 1, cols.stop - half), min(frame.width, cols.stop + half))
    return band, (rows.start + trim, rows.stop - trim)


@dataclass
class ConditionResult:
    condition: CaptureCondition | None
    roi: Roi
    plane: PlaneFit
    axial: AxialSample
    lateral: LateralSample | None = None
    lateral_error: str | None = None
    # per-pixel (z, theta, std) rows, kept only for per-pixel fitting
    pixels: np.ndarray | None = field(default=None, repr=False)


def analyse_stack(stack: FrameStack, roi: Roi | None = None, lateral: bool = True,
                  keep_pixels: bool = False) -> ConditionResult:
    """Axial (and optionally lateral) statistics of one condition."""
    mean = temporal_mean(stack)
    if roi is None:
        roi = axial_roi(mean)
    plane = fit_plane(stack, roi)
    sample = axial_statistics(stack, roi, plane)
    result = ConditionResult(stack.condition, roi, plane, sample)
    if keep_pixels:
        stats = pixel_statistics(stack, roi, plane)
        result.pixels = np.column_stack([stats.plane_depth, stats.theta, stats.std])
    if lateral:
        try:
            band, rows = lateral_band(mean)
            result.lateral = extract_edge(stack, band, rows)
        except (EdgeNotFoundError, AmbiguousEdgeError, ValueError) as exc:
            result.lateral_error = str(exc)
    return result


@dataclass
class FitReport:
    mode_id: str
    conditions: list[ConditionResult]
    fit: AxialFit
    sigma_x: float | None
    n_grid: tuple[float, float, float] = N_GRID
    aggregation: str = "condition"

    @property
    def coefficients(self) -> NoiseModelCoefficients:
        c = self.fit.coefficients
        return NoiseModelCoefficients(c.a, c.b, c.c, c.d, c.n, self.sigma_x or 0.0, self.mode_id)

    def to_dict(self) -> dict:
        c = self.coefficients
        rows = []
        for r in sorted(self.conditions, key=lambda r: _cond_sort_key(r.condition)):
            row = {
                "nominal_angle": r.condition.nominal_angle if r.condition else None,
                "nominal_distance": r.condition.nominal_distance if r.condition else None,
                "roi": [r.roi.row0, r.roi.row1, r.roi.col0, r.roi.col1],
                "plane_rms_residual": r.plane.rms_residual,
                "z": r.axial.z,
                "theta_deg": math.degrees(r.axial.theta),
                "sigma_measured": r.axial.sigma_measured,
                "sigma_model": _safe_sigma(c, r.axial.z, r.axial.theta),
                "pixel_count": r.axial.pixel_count,
                "lateral_sigma_px": r.lateral.sigma_px if r.lateral else None,
                "lateral_rows": int(r.lateral.residuals.size) if r.lateral else 0,
            }
            if r.lateral_error:
                row["lateral_error"] = r.lateral_error
            rows.append(row)
        return {
            "mode_id": self.mode_id,
            "coefficients": {"a": c.a, "b": c.b, "c": c.c, "d": c.d, "n": c.n,
                             "sigma_x": self.sigma_x},
            "mse": self.fit.mse,
            "aggregation": self.aggregation,
            "n_grid": {"min": self.n_grid[0], "max": self.n_grid[1], "step": self.n_grid[2]},
            "mse_by_n": [{"n": n, "mse": (None if math.isnan(m) else m)}
                         for n, m in sorted(self.fit.mse_by_n.items())],
            "conditions": rows,
        }


def _safe_sigma(coeffs, z, theta):
    from .model import axial_sigma

    try:
        return axial_sigma(coeffs, z, theta)
    except DomainError:
        return None


def _cond_sort_key(cond: CaptureCondition | None):
    if cond is None:
        return ("", 0.0, 0.0)
    return cond.key


AGGREGATIONS = ("condition", "pixel")


def calibrate(
    stacks: Iterable[FrameStack],
    n_grid: tuple[float, float, float] = N_GRID,
    lateral: bool = True,
    aggregation: str = "condition",
) -> dict[str, FitReport]:
    """Fit one model per mode from an iterable of condition stacks.

    With ``aggregation="condition"`` each stack contributes one sample (mean
    of its per-pixel stds); with ``"pixel"`` every ROI pixel is a sample at
    its own plane depth and incidence angle. Stacks are consumed one at a
    time so a whole dataset never has to sit in memory.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    per_pixel = aggregation == "pixel"
    by_mode: dict[str, list[ConditionResult]] = {}
    for stack in stacks:
        mode = stack.condition.mode_id if stack.condition else "custom"
        result = analyse_stack(stack, lateral=lateral, keep_pixels=per_pixel)
        by_mode.setdefault(mode, []).append(result)
    reports = {}
    for mode in sorted(by_mode):
        results = by_mode[mode]
        lat = [r.lateral for r in results if r.lateral is not None]
        sigma_x = fit_lateral_sigma(lat) if lat else None
        if per_pixel:
            rows = np.concatenate([r.pixels for r in results])
            fit = fit_axial_arrays(rows[:, 0], rows[:, 1], rows[:, 2], n_grid, mode, sigma_x or 0.0)
        else:
            fit = fit_axial_model([r.axial for r in results], n_grid, mode, sigma_x or 0.0)
        reports[mode] = FitReport(mode, results, fit, sigma_x, n_grid, aggregation)
    return reports
