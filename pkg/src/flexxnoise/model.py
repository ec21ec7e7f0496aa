"""Axial and lateral Gaussian noise model of the PMD Flexx2.

The axial standard deviation (meters) at depth ``z`` and incidence angle
``theta`` is::

    sigma_z = a + b*z + c*z**2 + d * z**n * theta**2 / (pi/2 - theta)**2

The lateral model is a single pixel standard deviation ``sigma_x`` per mode,
independent of distance and angle.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from typing import Any

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "SIGMA_FLOOR",
    "THETA_MAX",
    "MODE_RANGES",
    "NoiseModelCoefficients",
    "ModePreset",
    "PRESETS",
    "preset",
    "axial_sigma",
    "sample_axial",
    "sample_lateral_offset",
    "gaussian_kl",
    "coefficients_to_json",
    "coefficients_from_json",
]

SIGMA_FLOOR = 1e-6
THETA_MAX = math.radians(75.0)
# Fitted models restrict n to the searched range.
N_RANGE = (-1.0, 3.0)

# mode_id -> (frame_rate Hz, range_min m, range_max m)
MODE_RANGES: dict[str, tuple[float, float, float]] = {
    "Mode_5_15fps": (15.0, 0.1, 2.4),
    "Mode_5_30fps": (30.0, 0.1, 2.4),
    "Mode_5_60fps": (60.0, 0.1, 2.4),
    "Mode_9_15fps": (15.0, 0.1, 7.0),
    "Mode_9_20fps": (20.0, 0.1, 7.0),
    "Mode_9_30fps": (30.0, 0.1, 7.0),
}


def _eq1(a, b, c, d, n, z, theta):
    ratio = theta / (np.pi / 2 - theta)
    return a + b * z + c * z * z + d * np.power(z, n) * ratio * ratio


@dataclass(frozen=True)
class NoiseModelCoefficients:
    """Fitted parameters of the axial model plus the lateral pixel std.

    Units: ``a`` in m, ``b`` in m/m, ``c`` in m/m^2, ``d`` in m/m^n,
    ``sigma_x`` in pixels.
    """

    a: float
    b: float
    c: float
    d: float
    n: float
    sigma_x: float = 0.0
    mode_id: str = "custom"

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "n", "sigma_x"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"coefficient {name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if self.sigma_x < 0:
            raise ValidationError(f"sigma_x must be >= 0, got {self.sigma_x}")

    def scaled(self, k: float) -> NoiseModelCoefficients:
        """Return a copy with (a, b, c, d) multiplied by ``k``."""
        return NoiseModelCoefficients(
            self.a * k, self.b * k, self.c * k, self.d * k, self.n, self.sigma_x, self.mode_id
        )

    def raw_min_sigma(self, z_min: float, z_max: float, samples: int = 401) -> float:
        """Smallest unclamped sigma over a dense (z, theta) grid."""
        z = np.linspace(z_min, z_max, samples)[:, None]
        theta = np.linspace(0.0, THETA_MAX, 151)[None, :]
        return float(np.min(_eq1(self.a, self.b, self.c, self.d, self.n, z, theta)))


@dataclass(frozen=True)
class ModePreset:
    mode_id: str
    frame_rate: float
    range_min: float
    range_max: float
    coefficients: NoiseModelCoefficients = field(repr=False)

    def __post_init__(self):
        if not self.range_min < self.range_max:
            raise ValidationError("range_min must be < range_max")
        if not N_RANGE[0] <= self.coefficients.n <= N_RANGE[1]:
            raise ValidationError(f"preset exponent n={self.coefficients.n} outside {N_RANGE}")
        low = self.coefficients.raw_min_sigma(self.range_min, self.range_max)
        if low < SIGMA_FLOOR:
            raise ValidationError(
                f"{self.mode_id}: axial sigma dips to {low:.3g} m inside the declared range"
            )


def _make_preset(mode_id, a, b, c, d, n, sigma_x):
    rate, lo, hi = MODE_RANGES[mode_id]
    coeffs = NoiseModelCoefficients(a, b, c, d, n, sigma_x, mode_id)
    return ModePreset(mode_id, rate, lo, hi, coeffs)


PRESETS: dict[str, ModePreset] = {
    p.mode_id: p
    for p in (
        _make_preset("Mode_5_30fps", 0.002362, -0.001041, 0.000753, 0.000185, 2.7, 0.864),
        _make_preset("Mode_5_60fps", 0.002209, -0.000793, 0.001418, 0.000370, 2.7, 1.098),
        _make_preset("Mode_9_30fps", 0.002345, -0.002101, 0.001824, 0.000298, 2.7, 1.649),
    )
}


def preset(mode_id: str) -> NoiseModelCoefficients:
    """Coefficients for one of the three fitted modes."""
    try:
        return PRESETS[mode_id].coefficients
    except KeyError:
        raise DomainError(
            f"no fitted coefficients for mode {mode_id!r}; "
            f"presets exist for {sorted(PRESETS)}"
        ) from None


def _check_domain(coeffs: NoiseModelCoefficients, z, theta):
    z = np.asarray(z, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    bad = ~(z >= 0)
    if np.any(bad):
        raise DomainError(f"depth must be >= 0, got {z[bad].flat[0]!r}")
    bad = ~((theta >= 0) & (theta <= THETA_MAX))
    if np.any(bad):
        raise DomainError(
            f"incidence angle {np.degrees(theta[bad].flat[0]):.6g} deg outside [0, 75] deg"
        )
    if coeffs.n < 0 and np.any(z == 0):
        raise DomainError(f"z = 0 is undefined for negative exponent n={coeffs.n}")
    return z, theta


def axial_sigma(coeffs: NoiseModelCoefficients, z, theta, floor: float | None = SIGMA_FLOOR):
    """Axial noise standard deviation in meters.

    ``z`` (meters) and ``theta`` (radians) broadcast against each other.
    The result is clamped from below at ``floor``; pass ``floor=None`` to get
    the raw polynomial. Scalars in, float out.
    """
    z_arr, t_arr = _check_domain(coeffs, z, theta)
    sigma = _eq1(coeffs.a, coeffs.b, coeffs.c, coeffs.d, coeffs.n, z_arr, t_arr)
    if floor is not None:
        sigma = np.maximum(sigma, floor)
    if sigma.ndim == 0:
        return float(sigma)
    return sigma


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    # integers and SeedSequences get a counter-based Philox stream
    return np.random.Generator(np.random.Philox(rng))


def sample_axial(coeffs, z, theta, rng, size=None, floor: float | None = SIGMA_FLOOR):
    """Draw zero-mean axial noise with std ``axial_sigma(coeffs, z, theta)``.

    ``rng`` is a ``numpy.random.Generator`` or a seed; a seed always maps to
    the same Philox stream, so equal seeds give equal draws.
    """
    sigma = axial_sigma(coeffs, z, theta, floor=floor)
    return _generator(rng).normal(0.0, sigma, size)


def sample_lateral_offset(coeffs, rng, size=None, isotropic: bool = True):
    """Draw ``(dx, dy)`` pixel offsets from N(0, sigma_x^2).

    With ``isotropic=False`` only the x axis is jittered and ``dy`` is zero.
    """
    gen = _generator(rng)
    dx = gen.normal(0.0, coeffs.sigma_x, size)
    if isotropic:
        dy = gen.normal(0.0, coeffs.sigma_x, size)
    else:
        dy = np.zeros(size) if size is not None else 0.0
    return dx, dy


def gaussian_kl(mu1, sigma1, mu2, sigma2):
    """KL(N(mu1, sigma1^2) || N(mu2, sigma2^2)) in nats; broadcasts."""
    s1 = np.asarray(sigma1, dtype=np.float64)
    s2 = np.asarray(sigma2, dtype=np.float64)
    if np.any(~(s1 > 0)) or np.any(~(s2 > 0)):
        raise DomainError("gaussian_kl requires strictly positive standard deviations")
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    kl = np.log(s2 / s1) + (s1 * s1 + (mu1 - mu2) ** 2) / (2.0 * s2 * s2) - 0.5
    # rounding can leave identical inputs a hair below zero
    kl = np.maximum(kl, 0.0)
    if kl.ndim == 0:
        return float(kl)
    return kl


def _decimal_literal(x: float, sig: int = 9) -> str:
    """Positional decimal string with at least ``sig`` significant digits."""
    x = float(x)
    if x == 0.0:
        return "0." + "0" * sig
    d = Decimal(repr(x))
    if len(d.normalize().as_tuple().digits) < sig:
        d = d.quantize(Decimal(1).scaleb(d.adjusted() - sig + 1))
    return format(d, "f")


def coefficients_to_json(coeffs: NoiseModelCoefficients) -> str:
    """Serialize to a JSON object with >= 9 significant digits per number."""
    body = ",\n".join(
        f'  "{k}": {_decimal_literal(getattr(coeffs, k))}' for k in ("a", "b", "c", "d", "n", "sigma_x")
    )
    return "{\n" + body + f',\n  "mode_id": {json.dumps(coeffs.mode_id)}\n' + "}\n"


def coefficients_from_json(text: str | bytes) -> NoiseModelCoefficients:
    try:
        doc: Any = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"coefficient file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("coefficient document must be a JSON object")
    missing = [k for k in ("a", "b", "c", "d", "n", "sigma_x", "mode_id") if k not in doc]
    if missing:
        raise ValidationError(f"coefficient document missing keys {missing}")
    nums = {}
    for k in ("a", "b", "c", "d", "n", "sigma_x"):
        v = doc[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"coefficient {k} must be a number")
        nums[k] = float(v)
    return NoiseModelCoefficients(mode_id=str(doc["mode_id"]), **nums)


def coefficients_dict(coeffs: NoiseModelCoefficients) -> dict:
    return asdict(coeffs)
