"""Command-line experiment driver.

Every subcommand resolves its parameters, derives all randomness from one
``--seed`` via named sub-streams, and embeds a run manifest (tool version,
subcommand, resolved parameters, seed, input digests) in each artifact it
writes.  Reports with the same manifest are byte-identical; wall-clock
timings go to standard error so they never enter report bytes.  Thread
count (``--threads`` or the ``KAKEYA_LAB_THREADS`` environment variable)
only changes how work is scheduled, never the results, and is therefore
not part of the manifest.

Artifacts are JSON when nested (configs, polynomials, summaries) and CSV
when flat per-pair tables (planiness/graininess records); every file
carries a versioned ``schema`` tag.

Exit codes: 0 success, 1 precondition violated, 2 I/O problem, 64 usage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import __version__
from .cutting import Ball, cuts_at_scale
from .crofton import estimate_area
from .degred import run_degree_reduction, run_lines_mode
from .errors import KakeyaLabError, PreconditionError, ReportIOError
from .geometry import Tube, TubeConfig, UnitCube, check_hypotheses, regulus_config, slab_config
from .grainy import (
    PlaneAssignment,
    assign_planes,
    curvature_census,
    graininess_stats,
    planiness_stats,
    surface_poly_for,
)
from .poly3 import Poly3, dim_poly_space
from .seeding import substream
from .surfgeom import gauss_sign, project_to_surface, sff_norm, straight_directions, tangent_frame

SCHEMAS = {
    "config": "kakeya-lab/config-v1",
    "poly": "kakeya-lab/poly-v1",
    "planes": "kakeya-lab/planes-v1",
    "scene": "kakeya-lab/scene-v1",
    "lines": "kakeya-lab/lines-v1",
    "check": "kakeya-lab/check-report-v1",
    "fit": "kakeya-lab/fit-report-v1",
    "verify-cut": "kakeya-lab/verify-cut-report-v1",
    "vanishing": "kakeya-lab/vanishing-report-v1",
    "crofton": "kakeya-lab/crofton-report-v1",
    "surf": "kakeya-lab/surf-report-v1",
    "degred": "kakeya-lab/degred-report-v1",
    "census": "kakeya-lab/census-report-v1",
    "planiness-csv": "kakeya-lab/planiness-csv-v1",
    "graininess-csv": "kakeya-lab/graininess-csv-v1",
    "stats": "kakeya-lab/angle-stats-v1",
}


# ---------------------------------------------------------------------------
# plumbing


def _jsonable(obj):
    """Recursively convert numpy containers/scalars to plain Python."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _sha256(path: str) -> str:
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise ReportIOError(f"cannot digest {path}: {exc}") from exc


def make_manifest(subcommand: str, params: dict, seed: int, input_paths: list) -> dict:
    """Run manifest embedded in every artifact (no timings: see module doc)."""
    return {
        "tool": f"kakeya-lab {__version__}",
        "subcommand": subcommand,
        "params": _jsonable(params),
        "seed": int(seed),
        "inputs": {p: _sha256(p) for p in input_paths},
    }


def _write_json(path: str, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def _read_json(path: str, expect_schema: str | None = None) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportIOError(f"{path}: invalid JSON: {exc}") from exc
    if expect_schema is not None and data.get("schema") != expect_schema:
        raise ReportIOError(
            f"{path}: expected schema {expect_schema!r}, found {data.get('schema')!r}"
        )
    return data


def _csv_cell(name: str, value: float) -> str:
    if name in ("cube", "tube", "cube_a", "cube_b"):
        return str(int(value))
    return format(float(value), ".12g")


def _write_stats_csv(path: str, schema: str, manifest: dict, stats) -> None:
    lines = [
        f"# schema: {schema}",
        "# manifest: " + json.dumps(_jsonable(manifest), sort_keys=True),
        "# summary: " + json.dumps(_jsonable(stats.to_dict()), sort_keys=True),
        ",".join(stats.columns),
    ]
    for row in stats.records:
        lines.append(",".join(_csv_cell(n, v) for n, v in zip(stats.columns, row)))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


@contextmanager
def _stage(name: str):
    t0 = time.perf_counter()
    yield
    print(f"[time] {name}: {time.perf_counter() - t0:.3f}s", file=sys.stderr)


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        if value < 1:
            raise PreconditionError("--threads must be >= 1")
        return value
    env = os.environ.get("KAKEYA_LAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise PreconditionError(f"KAKEYA_LAB_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise PreconditionError("KAKEYA_LAB_THREADS must be >= 1")
        return n
    return 1


def _vec3(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


# ---------------------------------------------------------------------------
# artifact (de)serialization


def config_to_dict(config: TubeConfig, manifest: dict) -> dict:
    return {
        "schema": SCHEMAS["config"],
        "manifest": manifest,
        "params": _jsonable(config.params),
        "cubes": [{"center": _jsonable(c.center), "side": float(c.side)} for c in config.cubes],
        "tubes": [
            {
                "base": _jsonable(t.base),
                "direction": _jsonable(t.direction),
                "radius": float(t.radius),
                "length": float(t.length),
            }
            for t in config.tubes
        ],
    }


def config_from_dict(data: dict) -> TubeConfig:
    try:
        cubes = [UnitCube(np.array(c["center"]), float(c.get("side", 1.0))) for c in data["cubes"]]
        tubes = [
            Tube(
                base=np.array(t["base"]),
                direction=np.array(t["direction"]),
                radius=float(t["radius"]),
                length=float(t["length"]),
            )
            for t in data["tubes"]
        ]
        params = data["params"]
    except (KeyError, TypeError) as exc:
        raise ReportIOError(f"malformed config artifact: missing {exc}") from exc
    return TubeConfig(cubes=cubes, tubes=tubes, params=params)


def load_config(path: str) -> TubeConfig:
    return config_from_dict(_read_json(path, SCHEMAS["config"]))


def poly_to_dict(poly: Poly3, manifest: dict) -> dict:
    data = _jsonable(poly.to_dict())
    data["schema"] = SCHEMAS["poly"]
    data["manifest"] = manifest
    return data


def load_poly(path: str) -> Poly3:
    data = _read_json(path, SCHEMAS["poly"])
    try:
        degree = int(data["degree"])
        coeffs = np.array(data["coeffs"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportIOError(f"malformed polynomial artifact: {exc}") from exc
    if coeffs.ndim != 1 or coeffs.size != dim_poly_space(degree):
        raise ReportIOError(
            f"{path}: degree {degree} needs {dim_poly_space(degree)} coefficients, "
            f"found {coeffs.size}"
        )
    try:
        return Poly3.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportIOError(f"malformed polynomial artifact: {exc}") from exc


def _poly_for(config: TubeConfig, poly_path: str | None) -> Poly3:
    if poly_path is not None:
        return load_poly(poly_path)
    return surface_poly_for(config)


def _load_planes(path: str) -> list:
    data = _read_json(path, SCHEMAS["planes"])
    try:
        return [
            PlaneAssignment(
                int(p["cube_index"]), np.array(p["normal"]), p["source"], int(p["sample_count"])
            )
            for p in data["planes"]
        ]
    except (KeyError, TypeError) as exc:
        raise ReportIOError(f"malformed planes artifact: missing {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    params = {"kind": args.kind, "n": args.n, "sigma": args.sigma, "tube_budget": args.tube_budget}
    manifest = make_manifest("generate", params, args.seed, [])
    with _stage("generate"):
        if args.kind == "slab":
            config = slab_config(args.n, args.sigma, args.tube_budget, rng_seed=args.seed)
        else:
            config = regulus_config(args.n, args.sigma, args.tube_budget, rng_seed=args.seed)
    _write_json(args.out, config_to_dict(config, manifest))
    print(
        f"generated {args.kind} config: {len(config.cubes)} cubes, "
        f"{len(config.tubes)} tubes -> {args.out}"
    )
    return 0


def cmd_check(args) -> int:
    config = load_config(args.config)
    manifest = make_manifest("check", {"grid_limit": args.grid_limit}, args.seed, [args.config])
    with _stage("check"):
        report = check_hypotheses(config, rng_seed=args.seed, grid_limit=args.grid_limit)
    payload = {
        "schema": SCHEMAS["check"],
        "manifest": manifest,
        "passed": report.passed,
        "conditions": [
            {
                "name": c.name,
                "passed": c.passed,
                "worst_value": c.worst_value,
                "bound": c.bound,
                "witnesses": _jsonable(c.witnesses),
            }
            for c in report.conditions()
        ],
    }
    if args.report:
        _write_json(args.report, payload)
    for c in report.conditions():
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: worst {c.worst_value:.6g} vs {c.bound}")
    print(f"hypotheses {'passed' if report.passed else 'failed'}")
    return 0


def _degred_params(args) -> dict:
    return {
        "k": args.k,
        "r": args.r,
        "verify_sample": args.verify_sample,
        "ball_budget": args.ball_budget,
        "samples": args.samples,
        "cells_per_axis": args.cells_per_axis,
    }


def _run_degred(args, verify_sample: int):
    config = load_config(args.config)
    threads = _resolve_threads(args.threads)
    return run_degree_reduction(
        config,
        args.k,
        args.r,
        rng_seed=args.seed,
        verify_sample=verify_sample,
        ball_budget=args.ball_budget,
        samples=args.samples,
        cells_per_axis=args.cells_per_axis,
        threads=threads,
    )


def _degred_payload(schema_key: str, manifest: dict, report, verify_sample: int) -> dict:
    body = _jsonable(report.to_dict(include_poly=False))
    if verify_sample == 0:
        body["fraction_cut"] = None
    return {"schema": SCHEMAS[schema_key], "manifest": manifest, **body}


def cmd_fit(args) -> int:
    manifest = make_manifest("fit", _degred_params(args), args.seed, [args.config])
    with _stage("fit"):
        report = _run_degred(args, verify_sample=args.verify_sample)
    _write_json(args.out, poly_to_dict(report.poly, manifest))
    if args.report:
        _write_json(args.report, _degred_payload("fit", manifest, report, args.verify_sample))
    print(
        f"fitted degree {report.degree_used} on {report.cells} cells "
        f"(residual {report.fit_residual:.3e}) -> {args.out}"
    )
    return 0


def cmd_degred(args) -> int:
    if args.lines_file is not None:
        data = _read_json(args.lines_file, SCHEMAS["lines"])
        try:
            lines = [(np.array(L["base"]), np.array(L["direction"])) for L in data["lines"]]
        except (KeyError, TypeError) as exc:
            raise ReportIOError(f"malformed lines artifact: missing {exc}") from exc
        params = {
            "mode": "lines",
            "points_per_line": args.points_per_line,
            "degree": args.degree,
        }
        manifest = make_manifest("degred", params, args.seed, [args.lines_file])
        with _stage("degred-lines"):
            report = run_lines_mode(
                lines, args.points_per_line, args.degree, rng_seed=args.seed
            )
        body = _jsonable(report.to_dict(include_poly=False))
        payload = {"schema": SCHEMAS["degred"], "manifest": manifest, **body}
        if args.report:
            _write_json(args.report, payload)
        if args.out:
            _write_json(args.out, poly_to_dict(report.poly, manifest))
        print(
            f"lines mode: {report.vanished_lines}/{report.n_lines} restrictions vanished "
            f"(max coeff {report.max_restriction_coeff:.3e})"
        )
        return 0

    if args.config is None:
        raise PreconditionError("degred needs --config (tube mode) or --lines-file (lines mode)")
    params = {"mode": "tubes", **_degred_params(args)}
    manifest = make_manifest("degred", params, args.seed, [args.config])
    with _stage("degred"):
        report = _run_degred(args, verify_sample=args.verify_sample)
    if args.report:
        _write_json(args.report, _degred_payload("degred", manifest, report, args.verify_sample))
    if args.out:
        _write_json(args.out, poly_to_dict(report.poly, manifest))
    print(
        f"degree {report.degree_used}, fraction_cut "
        f"{report.fraction_cut:.3f} over {report.verify_sample} cubes"
    )
    return 0


def cmd_verify_cut(args) -> int:
    config = load_config(args.config)
    poly = load_poly(args.poly)
    threads = _resolve_threads(args.threads)
    params = {
        "r": args.r,
        "cubes": args.cubes,
        "ball_budget": args.ball_budget,
        "samples": args.samples,
    }
    manifest = make_manifest("verify-cut", params, args.seed, [args.config, args.poly])
    n = len(config.cubes)
    sample = min(args.cubes, n)
    rng = substream(args.seed, "verify-cubes")
    indices = np.sort(rng.choice(n, size=sample, replace=False))

    def check(ci: int):
        return cuts_at_scale(
            poly,
            config.cubes[int(ci)],
            args.r,
            ball_budget=args.ball_budget,
            samples=args.samples,
            rng_seed=args.seed,
        )

    with _stage("verify-cut"):
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                verdicts = list(pool.map(check, indices))
        else:
            verdicts = [check(ci) for ci in indices]
    fraction = float(np.mean([v.passed for v in verdicts])) if verdicts else 0.0
    payload = {
        "schema": SCHEMAS["verify-cut"],
        "manifest": manifest,
        "fraction_cut": fraction,
        "cubes_checked": int(sample),
        "results": [
            {"cube": int(ci), **_jsonable(v.to_dict())} for ci, v in zip(indices, verdicts)
        ],
    }
    if args.report:
        _write_json(args.report, payload)
    print(f"fraction_cut {fraction:.3f} over {sample} cubes at r={args.r}")
    return 0


def cmd_vanishing(args) -> int:
    from .vanishing import classify_segments, verify_contagion

    poly = load_poly(args.poly)
    scene = _read_json(args.scene, SCHEMAS["scene"])
    try:
        tube = Tube(
            base=np.array(scene["tube"]["base"]),
            direction=np.array(scene["tube"]["direction"]),
            radius=float(scene["tube"]["radius"]),
            length=float(scene["tube"]["length"]),
        )
        marked = [UnitCube(np.array(c)) for c in scene["marked"]]
        r = float(scene["r"])
    except (KeyError, TypeError) as exc:
        raise ReportIOError(f"malformed scene artifact: missing {exc}") from exc
    params = {"lines": args.lines, "probes": args.probes, "r": r}
    manifest = make_manifest("vanishing", params, args.seed, [args.poly, args.scene])
    with _stage("classify"):
        segments = classify_segments(poly, tube, marked, r, lines=args.lines, rng_seed=args.seed)
    with _stage("contagion"):
        contagion = verify_contagion(
            poly, tube, marked, r, probe_cubes=args.probes, lines=args.lines, rng_seed=args.seed
        )
    payload = {
        "schema": SCHEMAS["vanishing"],
        "manifest": manifest,
        "segments": [_jsonable(s.to_dict()) for s in segments],
        "contagion": _jsonable(contagion.to_dict()),
    }
    if args.report:
        _write_json(args.report, payload)
    bad = sum(1 for s in segments if not s.is_good)
    print(
        f"{len(segments)} segments ({bad} bad); contagion passed "
        f"{contagion.passes}/{contagion.probes} probes"
    )
    return 0


def cmd_crofton(args) -> int:
    poly = load_poly(args.poly)
    threads = _resolve_threads(args.threads)
    params = {"center": list(args.center), "radius": args.radius, "lines": args.lines}
    manifest = make_manifest("crofton", params, args.seed, [args.poly])
    with _stage("crofton"):
        area = estimate_area(
            poly,
            Ball(center=args.center, radius=args.radius),
            lines=args.lines,
            rng_seed=args.seed,
            threads=threads,
        )
    payload = {"schema": SCHEMAS["crofton"], "manifest": manifest, "area": float(area)}
    if args.report:
        _write_json(args.report, payload)
    print(f"estimated area {area:.6g} in ball radius {args.radius}")
    return 0


def cmd_surf(args) -> int:
    poly = load_poly(args.poly)
    manifest = make_manifest("surf", {"point": list(args.point)}, args.seed, [args.poly])
    with _stage("surf"):
        x = project_to_surface(poly, args.point)
        frame = tangent_frame(poly, x)
        norm_a = sff_norm(poly, x)
        sign = gauss_sign(poly, x)
        straight = straight_directions(poly, x)
    flat = isinstance(straight, str)  # every direction straight on a flat patch
    payload = {
        "schema": SCHEMAS["surf"],
        "manifest": manifest,
        "point": _jsonable(x),
        "normal": _jsonable(frame.normal),
        "shape": _jsonable(frame.shape),
        "sff_norm": float(norm_a),
        "gauss_sign": sign,
        "straight_directions": straight if flat else _jsonable(straight),
    }
    if args.report:
        _write_json(args.report, payload)
    shown = straight if flat else f"{len(straight)} straight direction(s)"
    print(
        f"projected to {np.array2string(x, precision=6)}; |A| = {norm_a:.6g}, "
        f"gauss sign {sign}, {shown}"
    )
    return 0


def _assignment(args, config: TubeConfig):
    poly = _poly_for(config, args.poly)
    if args.planes_in is not None:
        return _load_planes(args.planes_in)
    with _stage("assign-planes"):
        return assign_planes(
            poly, config, samples_per_cube=args.samples_per_cube, rng_seed=args.seed
        )


def _stats_inputs(args) -> list:
    paths = [args.config]
    if args.poly is not None:
        paths.append(args.poly)
    if args.planes_in is not None:
        paths.append(args.planes_in)
    return paths


def _emit_stats(args, kind: str, manifest: dict, stats, planes) -> None:
    if args.report:
        _write_stats_csv(args.report, SCHEMAS[f"{kind}-csv"], manifest, stats)
    if args.summary:
        _write_json(
            args.summary,
            {"schema": SCHEMAS["stats"], "manifest": manifest, "stats": stats.to_dict()},
        )
    if args.planes_out:
        _write_json(
            args.planes_out,
            {
                "schema": SCHEMAS["planes"],
                "manifest": manifest,
                "planes": [_jsonable(p.to_dict()) for p in planes],
            },
        )
    d = stats.to_dict()
    if stats.empty:
        print(f"{kind}: no eligible pairs (threshold {d['threshold_used']:.6g})")
    else:
        print(
            f"{kind}: {d['pairs_used']} pairs, p50 {d['p50']:.6g}, p90 {d['p90']:.6g}, "
            f"p99 {d['p99']:.6g}, fraction within {d['threshold_used']:.6g}: "
            f"{d['fraction_within']:.4f}"
        )


def cmd_planiness(args) -> int:
    config = load_config(args.config)
    params = {"samples_per_cube": args.samples_per_cube, "threshold_coeff": args.coeff}
    manifest = make_manifest("planiness", params, args.seed, _stats_inputs(args))
    planes = _assignment(args, config)
    with _stage("planiness"):
        stats = planiness_stats(config, planes, threshold_coeff=args.coeff)
    _emit_stats(args, "planiness", manifest, stats, planes)
    return 0


def cmd_graininess(args) -> int:
    config = load_config(args.config)
    params = {
        "samples_per_cube": args.samples_per_cube,
        "k": args.k,
        "max_pairs": args.max_pairs,
    }
    manifest = make_manifest("graininess", params, args.seed, _stats_inputs(args))
    planes = _assignment(args, config)
    with _stage("graininess"):
        stats = graininess_stats(
            config, planes, args.k, rng_seed=args.seed, max_pairs=args.max_pairs
        )
    _emit_stats(args, "graininess", manifest, stats, planes)
    return 0


def cmd_census(args) -> int:
    config = load_config(args.config)
    poly = _poly_for(config, args.poly)
    params = {"h_level": args.h_level, "samples_per_cube": args.samples_per_cube}
    inputs = [args.config] + ([args.poly] if args.poly else [])
    manifest = make_manifest("census", params, args.seed, inputs)
    with _stage("census"):
        out = curvature_census(
            poly, config, args.h_level, samples_per_cube=args.samples_per_cube, rng_seed=args.seed
        )
    payload = {"schema": SCHEMAS["census"], "manifest": manifest, **_jsonable(out)}
    if args.report:
        _write_json(args.report, payload)
    frac = out["global_fraction"]
    shown = "n/a" if frac is None else f"{frac:.4f}"
    print(
        f"census: fraction |A| > {args.h_level:.6g} is {shown} "
        f"over {out['samples_total']} surface samples"
    )
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit 64 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(64)


def _add_common(p: argparse.ArgumentParser, threads: bool = False):
    p.add_argument("--seed", type=int, default=0, help="global RNG seed (default 0)")
    if threads:
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker threads (default: KAKEYA_LAB_THREADS or 1); never changes results",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kakeya-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kakeya-lab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="build a slab or regulus configuration")
    p.add_argument("--kind", choices=("slab", "regulus"), required=True)
    p.add_argument("--n", type=int, required=True, help="scale N")
    p.add_argument("--sigma", type=float, required=True, help="exponent sigma in (0,1)")
    p.add_argument("--tube-budget", type=int, default=None)
    p.add_argument("--out", required=True, help="config JSON path")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("check", help="evaluate incidence hypotheses of a configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--grid-limit", type=int, default=100_000)
    p.add_argument("--report", default=None, help="JSON report path")
    _add_common(p)
    p.set_defaults(func=cmd_check)

    def degred_flags(q, verify_default):
        q.add_argument("--config", required=False, default=None)
        q.add_argument("--k", type=float, default=4.0, help="incidence multiplicity K")
        q.add_argument("--r", type=float, default=0.25, help="cutting scale r in (0, 0.5)")
        q.add_argument("--verify-sample", type=int, default=verify_default)
        q.add_argument("--ball-budget", type=int, default=32)
        q.add_argument("--samples", type=int, default=2000)
        q.add_argument("--cells-per-axis", type=int, default=1)

    p = sub.add_parser("fit", help="fit the low-degree cutting polynomial for a configuration")
    degred_flags(p, verify_default=0)
    p.add_argument("--out", required=True, help="polynomial JSON path")
    p.add_argument("--report", default=None)
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("degred", help="degree-reduction experiment (tube or lines mode)")
    degred_flags(p, verify_default=256)
    p.add_argument("--lines-file", default=None, help="lines JSON: switches to lines mode")
    p.add_argument("--points-per-line", type=int, default=11)
    p.add_argument("--degree", type=int, default=5, help="lines-mode target degree")
    p.add_argument("--out", default=None, help="optional polynomial JSON path")
    p.add_argument("--report", default=None)
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_degred)

    p = sub.add_parser("verify-cut", help="fraction of sampled cubes cut at scale r")
    p.add_argument("--config", required=True)
    p.add_argument("--poly", required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--cubes", type=int, default=256)
    p.add_argument("--ball-budget", type=int, default=64)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--report", default=None)
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_verify_cut)

    p = sub.add_parser("vanishing", help="segment shadows and contagion along a tube")
    p.add_argument("--poly", required=True)
    p.add_argument("--scene", required=True, help="scene JSON: tube, marked centers, r")
    p.add_argument("--lines", type=int, default=2000)
    p.add_argument("--probes", type=int, default=50)
    p.add_argument("--report", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_vanishing)

    p = sub.add_parser("crofton", help="Monte Carlo area of Z(P) in a ball")
    p.add_argument("--poly", required=True)
    p.add_argument("--center", type=_vec3, default=np.zeros(3), help="ball center x,y,z")
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--lines", type=int, default=100_000)
    p.add_argument("--report", default=None)
    _add_common(p, threads=True)
    p.set_defaults(func=cmd_crofton)

    p = sub.add_parser("surf", help="differential geometry of Z(P) near a point")
    p.add_argument("--poly", required=True)
    p.add_argument("--point", type=_vec3, required=True, help="seed point x,y,z")
    p.add_argument("--report", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_surf)

    def stats_flags(q):
        q.add_argument("--config", required=True)
        q.add_argument("--poly", default=None, help="polynomial JSON (default: config surface)")
        q.add_argument("--samples-per-cube", type=int, default=24)
        q.add_argument("--planes-in", default=None, help="reuse a planes JSON artifact")
        q.add_argument("--planes-out", default=None, help="write the plane assignment")
        q.add_argument("--report", default=None, help="CSV per-pair records")
        q.add_argument("--summary", default=None, help="JSON quantile summary")

    p = sub.add_parser("planiness", help="tube-direction vs cube-plane angles")
    stats_flags(p)
    p.add_argument("--coeff", type=float, default=1.0, help="threshold = coeff * n^-sigma")
    _add_common(p)
    p.set_defaults(func=cmd_planiness)

    p = sub.add_parser("graininess", help="plane vs plane angles of nearby incident cubes")
    stats_flags(p)
    p.add_argument("--k", type=float, default=2.0, help="threshold k * n^-sigma, window n^sigma / k")
    p.add_argument("--max-pairs", type=int, default=200_000)
    _add_common(p)
    p.set_defaults(func=cmd_graininess)

    p = sub.add_parser("census", help="fraction of surface samples with |A| above a level")
    p.add_argument("--config", required=True)
    p.add_argument("--poly", default=None, help="polynomial JSON (default: config surface)")
    p.add_argument("--h-level", type=float, required=True)
    p.add_argument("--samples-per-cube", type=int, default=8)
    p.add_argument("--report", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_census)

    return parser


def dispatch(argv) -> int:
    """Parse argv and run one subcommand, mapping failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors (64) and --help/--version (0)
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ReportIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KakeyaLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
