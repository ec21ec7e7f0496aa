import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexxnoise.errors import DomainError, ValidationError
from flexxnoise.model import (
    MODE_RANGES,
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


def test_preset_values():
    c = preset("Mode_5_30fps")
    assert (c.a, c.b, c.c, c.d, c.n, c.sigma_x) == (0.002362, -0.001041, 0.000753, 0.000185, 2.7, 0.864)
    c = preset("Mode_5_60fps")
    assert (c.a, c.b, c.c, c.d, c.n, c.sigma_x) == (0.002209, -0.000793, 0.001418, 0.000370, 2.7, 1.098)
    c = preset("Mode_9_30fps")
    assert (c.a, c.b, c.c, c.d, c.n, c.sigma_x) == (0.002345, -0.002101, 0.001824, 0.000298, 2.7, 1.649)


def test_mode_ranges():
    assert len(MODE_RANGES) == 6
    assert PRESETS["Mode_5_30fps"].range_max == 2.4
    assert PRESETS["Mode_9_30fps"].range_max == 7.0
    assert PRESETS["Mode_5_60fps"].frame_rate == 60


def test_unknown_mode():
    with pytest.raises(DomainError, match="Mode_"):
        preset("Mode_1_5fps")


def test_hand_value_frontal_fraction():
    # theta = 15 deg gives theta / (90 - theta) = 1/5 exactly
    c = preset("Mode_5_30fps")
    exact = Fraction("0.002362") + Fraction("-0.001041") + Fraction("0.000753") + Fraction("0.000185") / 25
    assert axial_sigma(c, 1.0, math.pi / 12) == pytest.approx(float(exact), rel=1e-12)
    assert float(exact) == pytest.approx(0.0020814, rel=1e-12)


def test_hand_value_far():
    c = preset("Mode_9_30fps")
    # theta = 30 deg -> ratio 1/2; 2**2.7 is the only irrational term
    poly = Fraction("0.002345") + 2 * Fraction("-0.002101") + 4 * Fraction("0.001824")
    expected = float(poly) + 0.000298 * 2.0**2.7 / 4
    assert axial_sigma(c, 2.0, math.pi / 6) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.005923102, rel=1e-7)


def test_frontal_drops_angle_term():
    c = preset("Mode_5_60fps")
    z = np.linspace(0.1, 2.4, 7)
    assert np.allclose(axial_sigma(c, z, 0.0), c.a + c.b * z + c.c * z * z, rtol=1e-14)


def test_broadcasting():
    c = preset("Mode_5_30fps")
    out = axial_sigma(c, np.array([[0.5], [1.0]]), np.radians([0, 30, 60]))
    assert out.shape == (2, 3)
    assert isinstance(axial_sigma(c, 1.0, 0.0), float)


def test_theta_domain():
    c = preset("Mode_5_30fps")
    assert axial_sigma(c, 1.0, THETA_MAX) > 0
    with pytest.raises(DomainError, match="75"):
        axial_sigma(c, 1.0, math.radians(75.01))
    with pytest.raises(DomainError):
        axial_sigma(c, 1.0, -0.01)
    with pytest.raises(DomainError):
        axial_sigma(c, 1.0, math.nan)
    with pytest.raises(DomainError):
        axial_sigma(c, -1.0, 0.0)


def test_negative_exponent_at_zero():
    c = NoiseModelCoefficients(0.001, 0.0, 0.0, 0.001, -1.0)
    with pytest.raises(DomainError):
        axial_sigma(c, 0.0, 0.3)
    assert axial_sigma(c, 0.5, 0.3) > 0


def test_floor():
    c = NoiseModelCoefficients(-0.01, 0.0, 0.0, 0.0, 1.0)
    assert axial_sigma(c, 1.0, 0.0) == SIGMA_FLOOR
    assert axial_sigma(c, 1.0, 0.0, floor=None) == pytest.approx(-0.01)


def test_preset_rejects_negative_sigma_in_range():
    from flexxnoise.model import ModePreset

    bad = NoiseModelCoefficients(0.001, -0.01, 0.0, 0.0, 2.0)
    with pytest.raises(ValidationError, match="dips"):
        ModePreset("Mode_5_30fps", 30, 0.1, 2.4, bad)


def test_presets_positive_over_range():
    for p in PRESETS.values():
        z = np.linspace(p.range_min, p.range_max, 200)[:, None]
        t = np.linspace(0, THETA_MAX, 50)[None, :]
        assert np.all(axial_sigma(p.coefficients, z, t, floor=None) > 0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.1, 7.0),
    st.floats(0.0, THETA_MAX),
    st.floats(0.0, THETA_MAX),
)
def test_monotone_in_angle(z, t1, t2):
    c = preset("Mode_9_30fps")
    lo, hi = sorted((t1, t2))
    assert axial_sigma(c, z, lo) <= axial_sigma(c, z, hi)


def test_kl_oracle():
    assert gaussian_kl(0.0, 1.0, 0.0, 2.0) == pytest.approx(0.3181471805599453, rel=1e-15)
    assert gaussian_kl(0.0, 1.0, 0.0, 1.0) == 0.0
    # mean shift of one std costs half a nat
    assert gaussian_kl(1.0, 1.0, 0.0, 1.0) == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(1e-3, 10), st.floats(-5, 5), st.floats(1e-3, 10))
def test_kl_nonnegative(m1, s1, m2, s2):
    assert gaussian_kl(m1, s1, m2, s2) >= 0


def test_kl_rejects_zero_sigma():
    with pytest.raises(DomainError):
        gaussian_kl(0.0, 0.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        gaussian_kl(0.0, 1.0, 0.0, -1.0)


def test_sample_axial_seeded():
    c = preset("Mode_5_30fps")
    a = sample_axial(c, 1.0, 0.2, 42, size=1000)
    b = sample_axial(c, 1.0, 0.2, 42, size=1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_axial(c, 1.0, 0.2, 43, size=1000))


def test_sample_lateral_offset():
    c = preset("Mode_9_30fps")
    dx, dy = sample_lateral_offset(c, 3, size=200_000)
    assert dx.std() == pytest.approx(c.sigma_x, rel=0.01)
    assert dy.std() == pytest.approx(c.sigma_x, rel=0.01)
    dx, dy = sample_lateral_offset(c, 3, size=10, isotropic=False)
    assert np.all(dy == 0)


def test_json_round_trip(coeffs):
    text = coefficients_to_json(coeffs)
    doc = json.loads(text)
    assert "e" not in text.lower().replace("mode", "").replace('"', "")
    assert coefficients_from_json(text) == coeffs
    for k in ("a", "b", "c", "d"):
        digits = text.split(f'"{k}": ')[1].split(",")[0].lstrip("-0.")
        assert len(digits) >= 9, (k, digits)
    assert doc["mode_id"] == coeffs.mode_id


@pytest.mark.parametrize(
    "text",
    ["not json", "[1, 2]", '{"a": 1}', '{"a": "x", "b": 0, "c": 0, "d": 0, "n": 1, "sigma_x": 0, "mode_id": "m"}'],
)
def test_json_rejects(text):
    with pytest.raises(ValidationError):
        coefficients_from_json(text)


def test_coefficients_validate():
    with pytest.raises(ValidationError):
        NoiseModelCoefficients(0.001, 0, 0, math.inf, 2.0)
    with pytest.raises(ValidationError):
        NoiseModelCoefficients(0.001, 0, 0, 0, 2.0, sigma_x=-1.0)
