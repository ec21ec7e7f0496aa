"""Counter-based normal variates for order-independent noise injection.

Every variate is a pure function of ``(seed, frame, stream, index)``: a key is
derived from the first three with the SplitMix64 finalizer, and the variate at
``index`` hashes ``key + (index + 1) * golden`` the same way. No generator
state is carried, so pixels may be evaluated in any order, on any number of
threads, with identical results. The numba and numpy paths hash identically;
their normals can differ in the last bit because the two use different
``log``/``cos`` implementations.

Normals use the cosine branch of Box-Muller on two consecutive uniforms.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
TWO_PI = 2.0 * np.pi
INV_2_53 = 1.0 / 9007199254740992.0

# stream ids used by the injector
STREAM_LATERAL_X = 1
STREAM_LATERAL_Y = 2
STREAM_AXIAL = 3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, frame: int, stream: int) -> int:
    """64-bit key for one (seed, frame, stream) triple."""
    k = mix64(seed & MASK64)
    k = mix64(k ^ ((stream * MIX2) & MASK64))
    return mix64((k + (frame + 1) * GOLDEN) & MASK64)


def _mix64_array(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def uniforms(key: int, index) -> np.ndarray:
    """Uniform variates in (0, 1] at the given counter positions."""
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = _mix64_array(np.uint64(key) + (idx + np.uint64(1)) * np.uint64(GOLDEN))
    return ((x >> np.uint64(11)).astype(np.float64) + 1.0) * INV_2_53


def normals(key: int, index) -> np.ndarray:
    """Standard normal variates at the given counter positions (numpy path)."""
    idx = np.asarray(index, dtype=np.uint64)
    u1 = uniforms(key, 2 * idx)
    u2 = uniforms(key, 2 * idx + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
