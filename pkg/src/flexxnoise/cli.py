"""Command-line entry point: render, inject, fit, validate, bench, presets.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 internal
error. Every failure prints one line ``flexxnoise: error[<kind>]: <reason>``
to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calib import N_GRID, calibrate
from .errors import FlexxNoiseError
from .frames import (
    CaptureCondition,
    FrameStack,
    atomic_write,
    default_intrinsics,
    list_stacks,
    read_stack,
    write_stack,
)
from .inject import InjectionConfig, incidence_for, inject
from .model import (
    MODE_RANGES,
    PRESETS,
    NoiseModelCoefficients,
    coefficients_from_json,
    coefficients_to_json,
    preset,
)
from .scene import DEFAULT_PLANE_EXTENT, PlanarScene, render_scene

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
FIT_SCHEMA = "flexxnoise.fit-report/1"
LATERAL_FLAGS = {"iso": "isotropic", "x": "x_only", "off": "off"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _extent(text: str) -> float:
    if text.lower() in ("inf", "infinite"):
        return math.inf
    return float(text)


def _background(text: str) -> float | None:
    return None if text.lower() in ("invalid", "nan") else float(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flexxnoise", description="PMD Flexx2 depth noise toolkit")
    p.add_argument("--version", action="version", version=f"flexxnoise {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render a clean planar-target stack")
    r.add_argument("--distance", type=float, required=True, help="plane distance in meters")
    r.add_argument("--angle", type=float, required=True, help="incidence angle in degrees")
    r.add_argument("--mode", default="Mode_5_30fps", choices=sorted(MODE_RANGES))
    r.add_argument("--frames", type=int, default=1)
    r.add_argument("--extent", type=_extent, default=DEFAULT_PLANE_EXTENT,
                   help="target half-size in meters, or 'inf'")
    r.add_argument("--background", type=_background, default=None,
                   help="background depth in meters, or 'invalid' (default)")
    r.add_argument("--out", required=True, type=Path)

    i = sub.add_parser("inject", help="add model noise to a stack")
    i.add_argument("--in", dest="inp", required=True, type=Path)
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--mode", choices=sorted(PRESETS))
    src.add_argument("--coeffs", type=Path, help="coefficient JSON file")
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--lateral", choices=sorted(LATERAL_FLAGS), default="iso")
    i.add_argument("--axial", choices=("on", "off"), default="on")
    i.add_argument("--angles", choices=("estimated", "analytic"), default="estimated")
    i.add_argument("--fallback-angle", type=float, default=0.0,
                   help="incidence angle in degrees where normals are unavailable")
    i.add_argument("--frames", type=int, default=None,
                   help="replicate a single-frame input into this many noisy frames")
    i.add_argument("--out", required=True, type=Path)

    f = sub.add_parser("fit", help="fit the noise model to a dataset directory")
    f.add_argument("--dataset", required=True, type=Path)
    f.add_argument("--out", required=True, type=Path)
    f.add_argument("--n-min", type=float, default=N_GRID[0])
    f.add_argument("--n-max", type=float, default=N_GRID[1])
    f.add_argument("--n-step", type=float, default=N_GRID[2])
    f.add_argument("--no-lateral", action="store_true")
    f.add_argument("--per-pixel", action="store_true",
                   help="fit every ROI pixel instead of one aggregate per condition")

    v = sub.add_parser("validate", help="axial/lateral KL of a dataset against a model")
    v.add_argument("--dataset", required=True, type=Path)
    vsrc = v.add_mutually_exclusive_group(required=True)
    vsrc.add_argument("--coeffs", type=Path, help="coefficient JSON or fit report")
    vsrc.add_argument("--mode", choices=sorted(PRESETS), help="validate against a preset")
    v.add_argument("--out", required=True, type=Path)
    v.add_argument("--format", choices=("json", "text"), default="json")

    b = sub.add_parser("bench", help="per-frame injection latency")
    b.add_argument("--frames", type=int, default=1000)
    b.add_argument("--mode", default="Mode_5_60fps", choices=sorted(PRESETS))
    b.add_argument("--backend", choices=("numba", "numpy", "both"), default=None)
    b.add_argument("--lateral", choices=sorted(LATERAL_FLAGS), default="iso")
    b.add_argument("--json", action="store_true")

    pr = sub.add_parser("presets", help="print the fitted coefficient sets")
    pr.add_argument("--json", action="store_true")
    return p


def _cmd_render(args) -> int:
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    intr = default_intrinsics()
    scene = PlanarScene(args.distance, args.angle, args.extent, args.background)
    cond = scene.condition(args.mode, intr)
    frame = render_scene(scene, intr).depths.astype(np.float32)
    write_stack(FrameStack(np.repeat(frame[None], args.frames, axis=0), cond), args.out)
    return EXIT_OK


def _load_coeffs(path: Path) -> NoiseModelCoefficients:
    return coefficients_from_json(path.read_text(encoding="utf-8"))


def _cmd_inject(args) -> int:
    stack = read_stack(args.inp)
    coeffs = preset(args.mode) if args.mode else _load_coeffs(args.coeffs)
    config = InjectionConfig(
        coeffs,
        seed=args.seed,
        lateral_mode=LATERAL_FLAGS[args.lateral],
        axial=args.axial == "on",
        angle_source=args.angles,
        fallback_angle=math.radians(args.fallback_angle),
    )
    cond = stack.condition
    scene = None
    if args.angles == "analytic":
        if cond.plane_extent is None:
            raise FlexxNoiseError("analytic angles need a synthetic stack; the sidecar has no scene")
        scene = PlanarScene.from_condition(cond)
    count = len(stack)
    sources = list(range(count))
    if args.frames is not None:
        if args.frames < 1:
            raise UsageError("--frames must be >= 1")
        if count != 1:
            raise UsageError("--frames needs a single-frame input stack")
        sources = [0] * args.frames
    if coeffs.mode_id in MODE_RANGES and coeffs.mode_id != cond.mode_id:
        cond = CaptureCondition(coeffs.mode_id, cond.nominal_distance, cond.nominal_angle,
                                cond.intrinsics, cond.plane_extent, cond.background_depth)
    intr = cond.intrinsics
    out = np.empty((len(sources), stack.height, stack.width), dtype=np.float32)
    theta = None
    for k, s in enumerate(sources):
        frame = stack[s]
        if theta is None or count > 1:
            theta = incidence_for(frame, intr, config, scene)
        out[k] = inject(frame, intr, config, frame_index=k, theta=theta).depths
    write_stack(FrameStack(out, cond), args.out)
    return EXIT_OK


def _cmd_fit(args) -> int:
    paths = list_stacks(args.dataset)
    if not paths:
        raise FlexxNoiseError(f"no .dpf stacks in {args.dataset}")
    grid = (args.n_min, args.n_max, args.n_step)
    if not (args.n_step > 0 and args.n_max >= args.n_min):
        raise UsageError("n grid needs n-step > 0 and n-max >= n-min")
    reports = calibrate((read_stack(p) for p in paths), grid, lateral=not args.no_lateral,
                        aggregation="pixel" if args.per_pixel else "condition")
    doc = {
        "schema": FIT_SCHEMA,
        "dataset": str(args.dataset),
        "stacks": [p.name for p in paths],
        "modes": {m: r.to_dict() for m, r in reports.items()},
    }
    atomic_write(args.out, json.dumps(doc, indent=2) + "\n")
    for m, r in reports.items():
        c = r.coefficients
        print(f"{m}: a={c.a:.6g} b={c.b:.6g} c={c.c:.6g} d={c.d:.6g} n={c.n:g} "
              f"sigma_x={'n/a' if r.sigma_x is None else f'{r.sigma_x:.4g}'} mse={r.fit.mse:.3g}")
    return EXIT_OK


def _coeff_source(path: Path):
    """Map mode_id -> coefficients from a coefficient file or a fit report."""
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc, dict) and doc.get("schema") == FIT_SCHEMA:
        table = {}
        for m, rep in doc["modes"].items():
            c = rep["coefficients"]
            table[m] = NoiseModelCoefficients(c["a"], c["b"], c["c"], c["d"], c["n"],
                                              c["sigma_x"] or 0.0, m)
        return lambda mode: table.get(mode)
    coeffs = _load_coeffs(path)
    return lambda mode: coeffs


def _cmd_validate(args) -> int:
    from .calib import analyse_stack
    from .validate import KlReport, axial_kl, emit_report, lateral_kl

    lookup = (lambda mode, c=preset(args.mode): c) if args.mode else _coeff_source(args.coeffs)
    paths = list_stacks(args.dataset)
    if not paths:
        raise FlexxNoiseError(f"no .dpf stacks in {args.dataset}")
    report = KlReport()
    residuals: dict[str, list[np.ndarray]] = {}
    sigma_x: dict[str, float] = {}
    for path in paths:
        stack = read_stack(path)
        coeffs = lookup(stack.condition.mode_id)
        if coeffs is None:
            raise FlexxNoiseError(f"{path.name}: no coefficients for mode {stack.condition.mode_id}")
        res = analyse_stack(stack)
        report.add(axial_kl(stack, res.roi, res.plane, coeffs))
        if res.lateral is not None and coeffs.sigma_x > 0:
            residuals.setdefault(stack.condition.mode_id, []).append(res.lateral.residuals)
            sigma_x[stack.condition.mode_id] = coeffs.sigma_x
    for mode, parts in residuals.items():
        pooled = np.concatenate(parts)
        if pooled.size >= 30 and pooled.std() > 0:
            report.lateral[mode] = lateral_kl(pooled, sigma_x[mode])
    text = emit_report(report, args.format)
    atomic_write(args.out, text)
    if args.format == "json":
        print(emit_report(report, "text"), end="")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from ._accel import HAS_NUMBA
    from .bench import benchmark_inject, format_result

    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    if args.backend == "both":
        backends = ["numba", "numpy"] if HAS_NUMBA else ["numpy"]
    else:
        backends = [args.backend]
    results = [
        benchmark_inject(args.frames, args.mode, b, LATERAL_FLAGS[args.lateral]) for b in backends
    ]
    for r in results:
        print(json.dumps(r) if args.json else format_result(r))
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.json:
        docs = [json.loads(coefficients_to_json(p.coefficients)) for p in PRESETS.values()]
        print(json.dumps(docs, indent=2))
        return EXIT_OK
    for p in PRESETS.values():
        c = p.coefficients
        print(f"{p.mode_id}: a={c.a:g} b={c.b:g} c={c.c:g} d={c.d:g} n={c.n:g} "
              f"sigma_x={c.sigma_x:g} range={p.range_min:g}-{p.range_max:g}m rate={p.frame_rate:g}Hz")
    return EXIT_OK


COMMANDS = {
    "render": _cmd_render,
    "inject": _cmd_inject,
    "fit": _cmd_fit,
    "validate": _cmd_validate,
    "bench": _cmd_bench,
    "presets": _cmd_presets,
}


def _fail(kind: str, exc: BaseException) -> None:
    reason = " ".join(str(exc).split()) or type(exc).__name__
    print(f"flexxnoise: error[{kind}]: {reason}", file=sys.stderr)


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        _fail("usage", exc)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (FlexxNoiseError, OSError, json.JSONDecodeError, KeyError) as exc:
        _fail("data", exc)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        _fail("internal", exc)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())
