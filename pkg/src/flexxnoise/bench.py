"""Per-frame injection latency on a Flexx2-sized frame."""

from __future__ import annotations

import math
import time
from contextlib import contextmanager

import numpy as np

from ._accel import HAS_NUMBA, resolve_backend
from .frames import default_intrinsics
from .inject import InjectionConfig, inject
from .model import preset
from .scene import PlanarScene, render_scene

FRAME_BUDGET_MS = 1000.0 / 60.0


@contextmanager
def single_thread():
    if not HAS_NUMBA:
        yield
        return
    import numba

    previous = numba.get_num_threads()
    numba.set_num_threads(1)
    try:
        yield
    finally:
        numba.set_num_threads(previous)


def benchmark_inject(
    frames: int = 1000,
    mode_id: str = "Mode_5_60fps",
    backend: str | None = None,
    lateral: str = "isotropic",
    warmup: int = 10,
    seed: int = 0,
) -> dict:
    """Time ``inject`` (incidence estimation included) frame by frame.

    The scene is an unbounded plane at 1 m tilted 30 degrees, so every pixel
    is valid. Returns latency statistics in milliseconds.
    """
    backend = resolve_backend(backend)
    intrinsics = default_intrinsics()
    clean = render_scene(PlanarScene(1.0, 30.0), intrinsics)
    config = InjectionConfig(preset(mode_id), seed=seed, lateral_mode=lateral)
    times = np.empty(frames)
    with single_thread():
        for i in range(warmup):
            inject(clean, intrinsics, config, frame_index=i, backend=backend)
        for i in range(frames):
            t0 = time.perf_counter()
            inject(clean, intrinsics, config, frame_index=i, backend=backend)
            times[i] = time.perf_counter() - t0
    ms = times * 1e3
    return {
        "backend": backend,
        "mode_id": mode_id,
        "frames": frames,
        "width": intrinsics.width,
        "height": intrinsics.height,
        "p50_ms": float(np.percentile(ms, 50)),
        "p99_ms": float(np.percentile(ms, 99)),
        "mean_ms": float(ms.mean()),
        "max_ms": float(ms.max()),
        "budget_ms": FRAME_BUDGET_MS,
    }


def format_result(r: dict) -> str:
    ok = "within" if r["p99_ms"] <= r["budget_ms"] else "OVER"
    fps = math.inf if r["p50_ms"] == 0 else 1000.0 / r["p50_ms"]
    return (
        f"{r['backend']:<6} {r['width']}x{r['height']} {r['mode_id']} frames={r['frames']} "
        f"p50={r['p50_ms']:.3f}ms p99={r['p99_ms']:.3f}ms mean={r['mean_ms']:.3f}ms "
        f"max={r['max_ms']:.3f}ms (~{fps:.0f} fps; p99 {ok} {r['budget_ms']:.1f}ms budget)"
    )
