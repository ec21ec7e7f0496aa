"""numba versions of the hot loops; mirrors of the numpy code in kernels.py."""

import numba as nb
import numpy as np

from .rng import GOLDEN, INV_2_53, MIX1, MIX2, TWO_PI

_G = np.uint64(GOLDEN)
_M1 = np.uint64(MIX1)
_M2 = np.uint64(MIX2)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@nb.njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, inline="always")
def _normal(key, i):
    i2 = _TWO * i
    x1 = _mix64(key + (i2 + _ONE) * _G)
    x2 = _mix64(key + (i2 + _TWO) * _G)
    u1 = (np.float64(x1 >> _S11) + 1.0) * INV_2_53
    u2 = (np.float64(x2 >> _S11) + 1.0) * INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)


@nb.njit(cache=True)
def normals(key, count):
    out = np.empty(count, np.float64)
    k = np.uint64(key)
    for i in range(count):
        out[i] = _normal(k, np.uint64(i))
    return out


@nb.njit(cache=True, parallel=True)
def inject_frame(depth, theta, a, b, c, d, n, floor, fallback, sigma_x,
                 lateral, axial, key_x, key_y, key_z, out):
    h, w = depth.shape
    dx = np.zeros(h, np.int64)
    dy = np.zeros(w, np.int64)
    if lateral >= 1:
        for r in range(h):
            dx[r] = np.int64(np.floor(sigma_x * _normal(key_x, np.uint64(r)) + 0.5))
    if lateral == 2:
        for col in range(w):
            dy[col] = np.int64(np.floor(sigma_x * _normal(key_y, np.uint64(col)) + 0.5))
    half_pi = 0.5 * np.pi
    for r in nb.prange(h):
        for col in range(w):
            sr = min(max(r + dy[col], 0), h - 1)
            sc = min(max(col + dx[r], 0), w - 1)
            z = depth[sr, sc]
            if np.isnan(z):
                out[r, col] = np.nan
                continue
            if axial:
                t = theta[sr, sc]
                if np.isnan(t):
                    t = fallback
                q = t / (half_pi - t)
                s = a + b * z + c * z * z + d * z ** n * q * q
                if s < floor:
                    s = floor
                z = z + s * _normal(key_z, np.uint64(r * w + col))
                if not z > 0.0:
                    z = np.nan
            out[r, col] = z


@nb.njit(cache=True, parallel=True)
def incidence_map(depth, fx, fy, cx, cy, theta_max, out):
    h, w = depth.shape
    out[:, :] = np.nan
    for r in nb.prange(1, h - 1):
        v = (r - cy) / fy
        vu = (r - 1 - cy) / fy
        vd = (r + 1 - cy) / fy
        for col in range(1, w - 1):
            z = depth[r, col]
            zl = depth[r, col - 1]
            zr = depth[r, col + 1]
            zu = depth[r - 1, col]
            zd = depth[r + 1, col]
            if np.isnan(z) or np.isnan(zl) or np.isnan(zr) or np.isnan(zu) or np.isnan(zd):
                continue
            u = (col - cx) / fx
            ul = (col - 1 - cx) / fx
            ur = (col + 1 - cx) / fx
            ax = ur * zr - ul * zl
            ay = v * (zr - zl)
            az = zr - zl
            bx = u * (zd - zu)
            by = vd * zd - vu * zu
            bz = zd - zu
            nx = ay * bz - az * by
            ny = az * bx - ax * bz
            nz = ax * by - ay * bx
            nn = nx * nx + ny * ny + nz * nz
            rr = u * u + v * v + 1.0
            if nn == 0.0:
                continue
            cos = abs(nx * u + ny * v + nz) / np.sqrt(nn * rr)
            if cos > 1.0:
                cos = 1.0
            t = np.arccos(cos)
            out[r, col] = min(t, theta_max)
