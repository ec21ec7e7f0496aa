"""Per-frame injection latency of the numba kernels against the numpy fallback.

    python benchmarks/compare_backends.py --frames 1000

Also reports the kernel-only cost (no incidence estimation) and checks that
both backends produce the same frame.
"""

import argparse
import time

import numpy as np

from flexxnoise._accel import HAS_NUMBA
from flexxnoise.bench import benchmark_inject, format_result, single_thread
from flexxnoise.frames import default_intrinsics
from flexxnoise.inject import InjectionConfig, estimate_incidence_map, inject
from flexxnoise.model import preset
from flexxnoise.scene import PlanarScene, render_scene


def kernel_only(backend, frames, mode_id):
    intr = default_intrinsics()
    clean = render_scene(PlanarScene(1.0, 30.0), intr)
    cfg = InjectionConfig(preset(mode_id), seed=0)
    theta = estimate_incidence_map(clean, intr, backend)
    inject(clean, intr, cfg, theta=theta, backend=backend)  # warm up / compile
    t0 = time.perf_counter()
    for i in range(frames):
        inject(clean, intr, cfg, frame_index=i, theta=theta, backend=backend)
    return (time.perf_counter() - t0) / frames * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=1000)
    ap.add_argument("--mode", default="Mode_5_60fps")
    args = ap.parse_args()

    backends = ["numba", "numpy"] if HAS_NUMBA else ["numpy"]
    results = {}
    for b in backends:
        results[b] = benchmark_inject(args.frames, args.mode, b)
        print(format_result(results[b]))
    with single_thread():
        for b in backends:
            print(f"{b:<6} kernel only (incidence map reused): {kernel_only(b, args.frames, args.mode):.3f} ms/frame")
    if len(results) == 2:
        print(f"speed-up (p50): {results['numpy']['p50_ms'] / results['numba']['p50_ms']:.2f}x")
        intr = default_intrinsics()
        clean = render_scene(PlanarScene(1.0, 30.0), intr)
        cfg = InjectionConfig(preset(args.mode), seed=1)
        a = inject(clean, intr, cfg, backend="numba").depths
        b = inject(clean, intr, cfg, backend="numpy").depths
        print(f"max |numba - numpy| on one frame: {np.nanmax(np.abs(a - b)):.2e} m")


if __name__ == "__main__":
    main()
