"""Per-frame injection kernel with numba and pure-numpy implementations.

Both paths compute the same function of their inputs; results agree to
floating-point rounding of log/cos/pow. Pick one with ``backend=`` or the
``FLEXXNOISE_NO_JIT`` environment flag.
"""

from __future__ import annotations

import numpy as np

from . import rng
from ._accel import HAS_NUMBA, resolve_backend

if HAS_NUMBA:
    from . import _kernels_numba as _nb

LATERAL_CODES = {"off": 0, "x_only": 1, "isotropic": 2}


def counter_normals(key: int, count: int, backend: str | None = None) -> np.ndarray:
    """First ``count`` normals of the counter stream ``key``."""
    if resolve_backend(backend) == "numba":
        return _nb.normals(np.uint64(key), count)
    return rng.normals(key, np.arange(count, dtype=np.uint64))


def _incidence_numpy(depth, fx, fy, cx, cy, theta_max):
    h, w = depth.shape
    out = np.full((h, w), np.nan)
    if h < 3 or w < 3:
        return out
    u = (np.arange(w) - cx) / fx
    v = ((np.arange(h) - cy) / fy)[:, None]
    x = u * depth
    y = v * depth
    # central differences of the back-projected points along columns and rows
    ax = x[1:-1, 2:] - x[1:-1, :-2]
    ay = y[1:-1, 2:] - y[1:-1, :-2]
    az = depth[1:-1, 2:] - depth[1:-1, :-2]
    bx = x[2:, 1:-1] - x[:-2, 1:-1]
    by = y[2:, 1:-1] - y[:-2, 1:-1]
    bz = depth[2:, 1:-1] - depth[:-2, 1:-1]
    nx = ay * bz - az * by
    ny = az * bx - ax * bz
    nz = ax * by - ay * bx
    ui = u[1:-1]
    vi = v[1:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.abs(nx * ui + ny * vi + nz) / np.sqrt(
            (nx * nx + ny * ny + nz * nz) * (ui * ui + vi * vi + 1.0)
        )
        inner = np.minimum(np.arccos(np.minimum(cos, 1.0)), theta_max)
    out[1:-1, 1:-1] = inner
    return out


def incidence_map(depth, intrinsics, theta_max, backend=None) -> np.ndarray:
    """Incidence angle per pixel from central-difference normals (radians)."""
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    args = (intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy, float(theta_max))
    if resolve_backend(backend) == "numba":
        out = np.empty_like(depth)
        _nb.incidence_map(depth, *args, out)
        return out
    return _incidence_numpy(depth, *args)


def _inject_numpy(depth, theta, a, b, c, d, n, floor, fallback, sigma_x,
                  lateral, axial, key_x, key_y, key_z):
    h, w = depth.shape
    rows = np.arange(h)
    cols = np.arange(w)
    dx = np.zeros(h, np.int64)
    dy = np.zeros(w, np.int64)
    if lateral >= 1:
        dx = np.floor(sigma_x * rng.normals(key_x, rows.astype(np.uint64)) + 0.5).astype(np.int64)
    if lateral == 2:
        dy = np.floor(sigma_x * rng.normals(key_y, cols.astype(np.uint64)) + 0.5).astype(np.int64)
    sr = np.clip(rows[:, None] + dy[None, :], 0, h - 1)
    sc = np.clip(cols[None, :] + dx[:, None], 0, w - 1)
    z = depth[sr, sc]
    if not axial:
        return z
    t = theta[sr, sc]
    t = np.where(np.isnan(t), fallback, t)
    q = t / (0.5 * np.pi - t)
    s = np.maximum(a + b * z + c * z * z + d * z ** n * q * q, floor)
    z = z + s * rng.normals(key_z, np.arange(h * w, dtype=np.uint64)).reshape(h, w)
    z[~(z > 0.0)] = np.nan
    return z


def inject_frame(depth, theta, coeffs, *, floor, fallback, lateral, axial, keys, backend=None):
    """Lateral resampling then additive axial noise on one float64 frame.

    ``theta`` is the per-pixel incidence map (radians, NaN = unknown);
    ``keys`` are the (lateral x, lateral y, axial) counter keys of this frame.
    """
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    code = LATERAL_CODES[lateral]
    floor = -np.inf if floor is None else float(floor)
    key_x, key_y, key_z = (np.uint64(k) for k in keys)
    args = (coeffs.a, coeffs.b, coeffs.c, coeffs.d, coeffs.n, floor, float(fallback),
            coeffs.sigma_x, code, bool(axial), key_x, key_y, key_z)
    if resolve_backend(backend) == "numba":
        out = np.empty_like(depth)
        _nb.inject_frame(depth, theta, *args, out)
        return out
    return _inject_numpy(depth, theta, *args)
