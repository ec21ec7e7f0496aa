"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the PASS/FAIL lines
are printed even without ``-s``.
"""

import hashlib
import math
import os
import subprocess
import sys
import textwrap
import time
from fractions import Fraction

import numpy as np
import pytest

from flexxnoise._accel import DEFAULT_BACKEND, HAS_NUMBA
from flexxnoise.bench import FRAME_BUDGET_MS, benchmark_inject, format_result, single_thread
from flexxnoise.calib import analyse_stack, fit_axial_arrays, fit_axial_model, fit_lateral_sigma
from flexxnoise.errors import FormatError
from flexxnoise.frames import (
    CaptureCondition,
    FrameStack,
    decode_stack,
    default_intrinsics,
    read_stack,
    write_stack,
)
from flexxnoise.inject import InjectionConfig, inject, inject_stack
from flexxnoise.model import PRESETS, axial_sigma, preset, sample_axial
from flexxnoise.scene import DEFAULT_DISTANCES, PlanarScene, default_grid, render_scene
from flexxnoise.validate import axial_kl

ROUND_TRIP_ANGLES = (15.0, 30.0, 45.0, 60.0)
ROUND_TRIP_FRAMES = 300


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok

    return report


def test_criterion_1_closed_form(verdict):
    c5, c9 = preset("Mode_5_30fps"), preset("Mode_9_30fps")
    got = (axial_sigma(c5, 1.0, math.radians(15)), axial_sigma(c9, 2.0, math.radians(30)))
    # 15 deg -> ratio 1/5; 30 deg -> ratio 1/2
    want = (
        float(Fraction("0.002362") - Fraction("0.001041") + Fraction("0.000753") + Fraction("0.000185") / 25),
        float(Fraction("0.002345") - 2 * Fraction("0.002101") + 4 * Fraction("0.001824")) + 0.000298 * 2**2.7 / 4,
    )
    rel = [abs(g - w) / w for g, w in zip(got, want)]
    ok = max(rel) <= 1e-6 and abs(got[0] - 0.0020814) / 0.0020814 <= 1e-6 and abs(got[1] - 0.005923) / 0.005923 < 1e-4
    verdict(1, ok, f"sigma={got[0]:.7f} m, {got[1]:.7f} m; max rel err {max(rel):.1e}")
    assert ok


def test_criterion_2_exact_inverse(verdict):
    t0 = time.perf_counter()
    scenes = default_grid()
    z = np.array([s.plane_distance for s in scenes])
    theta = np.radians([s.incidence_angle for s in scenes])
    worst, ns = 0.0, []
    for mode, p in PRESETS.items():
        c = p.coefficients
        fit = fit_axial_arrays(z, theta, axial_sigma(c, z, theta, floor=None), mode_id=mode)
        ns.append(fit.n)
        worst = max(worst, *(abs(getattr(fit.coefficients, k) - getattr(c, k)) for k in "abcd"))
    elapsed = time.perf_counter() - t0
    ok = all(n == 2.7 for n in ns) and worst <= 1e-9 and elapsed < 1.0
    verdict(2, ok, f"n={ns}, max |coef err|={worst:.1e}, {elapsed * 1e3:.0f} ms")
    assert ok


@pytest.fixture(scope="module")
def round_trip():
    """Render, inject 300 frames, analyse and KL-check every round-trip condition.

    Each stack is dropped after use; only per-condition results are kept.
    """
    coeffs = preset("Mode_5_30fps")
    intr = default_intrinsics()
    samples, kls = [], []
    t0 = time.perf_counter()
    with single_thread():
        for i, scene in enumerate(default_grid(angles=ROUND_TRIP_ANGLES)):
            cond = scene.condition("Mode_5_30fps", intr)
            cfg = InjectionConfig(coeffs, seed=1000 + i, lateral_mode="off")
            stack = inject_stack(render_scene(scene, intr), ROUND_TRIP_FRAMES, intr, cfg,
                                 condition=cond)
            res = analyse_stack(stack, lateral=False)
            samples.append(res.axial)
            kls.append(axial_kl(stack, res.roi, res.plane, coeffs))
        fit = fit_axial_model(samples, mode_id="Mode_5_30fps")
    return coeffs, samples, kls, fit, time.perf_counter() - t0


def test_criterion_3_round_trip(verdict, round_trip):
    truth, samples, _, fit, elapsed = round_trip
    errs = []
    for s in samples:
        want = axial_sigma(truth, s.z, s.theta)
        errs.append(abs(axial_sigma(fit.coefficients, s.z, s.theta) - want) / want)
    z = np.array(DEFAULT_DISTANCES)
    grid_errs = []
    for a in ROUND_TRIP_ANGLES:
        want = axial_sigma(truth, z, math.radians(a))
        grid_errs.append(np.max(np.abs(axial_sigma(fit.coefficients, z, math.radians(a)) - want) / want))
    worst = max(max(errs), max(grid_errs))
    ok = worst <= 0.10 and abs(fit.n - 2.7) <= 0.2 + 1e-12 and elapsed < 300
    verdict(3, ok, f"{len(samples)} conditions x {ROUND_TRIP_FRAMES} frames, n={fit.n:g}, "
                   f"worst sigma error {worst:.2%}, {elapsed:.0f} s single-threaded")
    assert ok


def test_criterion_4_kl_self_consistency(verdict, round_trip):
    _, _, kls, _, _ = round_trip
    values = [k.kl for k in kls]
    ok = all(v is not None and v <= 0.02 for v in values)
    finite = [v for v in values if v is not None]
    verdict(4, ok, f"{len(values)} conditions, axial KL max {max(finite):.4f} "
                   f"mean {np.mean(finite):.4f} nats")
    assert ok


def _oracle_p90(values):
    xs = sorted(Fraction(v) for v in values)
    rank = Fraction(9, 10) * (len(xs) - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, len(xs) - 1)
    return float(xs[lo] + (rank - lo) * (xs[hi] - xs[lo]))


def test_criterion_5_lateral(verdict):
    intr = default_intrinsics()
    lines, ok = [], True
    for mode, p in PRESETS.items():
        coeffs = p.coefficients
        for i, dist in enumerate((0.6, 1.0, 1.4)):
            scene = PlanarScene(dist, 0.0, 0.25)
            cfg = InjectionConfig(coeffs, seed=50 + i)
            stack = inject_stack(render_scene(scene, intr), 100, intr, cfg,
                                 condition=scene.condition(mode, intr))
            est = analyse_stack(stack).lateral
            err = est.sigma_px / coeffs.sigma_x - 1
            ok &= abs(err) <= 0.15
            lines.append(f"{coeffs.sigma_x}->{est.sigma_px:.3f} ({err:+.1%})")
    rng = np.random.default_rng(0)
    vectors = [list(range(1, 11))] + [rng.integers(-50, 50, rng.integers(1, 40)).tolist() for _ in range(500)]
    pct_ok = all(fit_lateral_sigma(v) == _oracle_p90(v) for v in vectors) and fit_lateral_sigma(range(1, 11)) == 9.1
    ok &= pct_ok
    verdict(5, ok, f"edge sigma {', '.join(lines)}; percentile oracle "
                   f"{'exact' if pct_ok else 'MISMATCH'} on {len(vectors)} integer vectors")
    assert ok


_THREAD_PROBE = textwrap.dedent("""
    import hashlib, numba, numpy as np
    from flexxnoise.frames import default_intrinsics
    from flexxnoise.inject import InjectionConfig, inject
    from flexxnoise.model import preset
    from flexxnoise.scene import PlanarScene, render_scene
    intr = default_intrinsics()
    clean = render_scene(PlanarScene(1.0, 30.0), intr)
    cfg = InjectionConfig(preset("Mode_5_60fps"), seed=123)
    for threads in (1, 4):
        numba.set_num_threads(threads)
        h = hashlib.sha256()
        for i in range(5):
            h.update(inject(clean, intr, cfg, frame_index=i, backend="numba").depths.tobytes())
        print(threads, h.hexdigest())
""")


def test_criterion_6_sampling(verdict):
    c = preset("Mode_5_30fps")
    z, theta = 1.5, math.radians(40)
    sigma = axial_sigma(c, z, theta)
    n = 1_000_000
    x = sample_axial(c, z, theta, 2024, size=n)
    std_err = abs(x.std() / sigma - 1)
    mean_ok = abs(x.mean()) <= 4 * sigma / math.sqrt(n)

    # the injector's counter-based draws, about 10^6 pixels over 26 frames
    intr = default_intrinsics()
    clean = render_scene(PlanarScene(z, 0.0), intr)
    theta_map = np.full(clean.depths.shape, theta)
    cfg = InjectionConfig(c, seed=7, lateral_mode="off")
    draws = np.concatenate([
        (inject(clean, intr, cfg, frame_index=i, theta=theta_map).depths - clean.depths).ravel()
        / axial_sigma(c, clean.depths, theta).ravel()
        for i in range(26)
    ])
    inj_std_err = abs(draws.std() - 1)
    inj_mean_ok = abs(draws.mean()) <= 4 / math.sqrt(draws.size)

    if HAS_NUMBA:
        env = dict(os.environ, NUMBA_NUM_THREADS="4")
        out = subprocess.run([sys.executable, "-c", _THREAD_PROBE], capture_output=True,
                             text=True, env=env, check=True).stdout.split()
        digests = dict(zip(out[::2], out[1::2]))
        threads_ok = len(set(digests.values())) == 1 and len(digests) == 2
        thread_note = f"1 vs 4 threads {'identical' if threads_ok else 'DIFFER'}"
    else:
        threads_ok, thread_note = True, "numpy backend only (single-threaded)"
    ok = std_err <= 0.01 and mean_ok and inj_std_err <= 0.01 and inj_mean_ok and threads_ok
    verdict(6, ok, f"sampler std err {std_err:.2%}, injector std err {inj_std_err:.2%} "
                   f"over {draws.size} draws, means within 4 sigma/sqrt(N): "
                   f"{mean_ok and inj_mean_ok}; {thread_note}")
    assert ok


def test_criterion_7_performance(verdict):
    r = benchmark_inject(frames=1000, mode_id="Mode_5_60fps", backend=DEFAULT_BACKEND)
    ok = r["p50_ms"] <= FRAME_BUDGET_MS and r["p99_ms"] <= FRAME_BUDGET_MS
    verdict(7, ok, format_result(r))
    assert ok


def test_criterion_8_format(verdict, tmp_path):
    intr = default_intrinsics()
    rng = np.random.default_rng(3)
    data = rng.uniform(0.2, 5.0, size=(7, intr.height, intr.width)).astype(np.float32)
    data[rng.random(data.shape) < 0.1] = np.nan
    stack = FrameStack(data, CaptureCondition("Mode_9_30fps", 2.0, 45.0, intr))
    path = tmp_path / "s.dpf"
    write_stack(stack, path)
    back = read_stack(path)
    write_stack(back, tmp_path / "t.dpf")
    same = (
        back == stack
        and np.array_equal(np.isnan(back.data), np.isnan(data))
        and path.read_bytes() == (tmp_path / "t.dpf").read_bytes()
        and hashlib.sha256(back.data.tobytes()).digest() == hashlib.sha256(data.tobytes()).digest()
    )
    raw = path.read_bytes()
    corruptions = {
        "magic": b"DPF0" + raw[4:],
        "width": raw[:4] + (225).to_bytes(4, "little") + raw[8:],
        "count": raw[:12] + (8).to_bytes(4, "little") + raw[16:],
        "truncated": raw[:-2],
        "trailing": raw + b"\x00",
        "empty": raw[:12] + (0).to_bytes(4, "little") + raw[16:],
    }
    caught = []
    for name, blob in corruptions.items():
        try:
            decode_stack(blob)
        except FormatError:
            caught.append(name)
    ok = same and len(caught) == len(corruptions)
    verdict(8, ok, f"round trip byte-identical={same}; corrupted headers rejected "
                   f"{len(caught)}/{len(corruptions)}")
    assert ok
