"""Command-line entry point.

Subcommands: ``verify``, ``atlas``, ``lift``, ``chart``, ``integrate``,
``export``.  Exit status is 0 on success, 1 when a check or residual bound
fails, 2 on usage/configuration errors.  All files are written atomically
(temp file + rename).  Relative output paths are resolved against the
``DDEATLAS_OUTDIR`` environment variable when it is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .atlas import LIFT_TOL, build_atlas, lift_to_manifold
from .errors import (
    BumpInfeasibleError,
    DomainError,
    GridMismatchError,
    ModelValidationError,
    NoChartForStratumError,
    NoConvergenceError,
    OutsideDomainError,
)
from .harness import SuiteConfig, run_suite
from .model import DelaySet, Model
from .registry import BUILTIN_IDS, builtin, get_model, load_model_spec
from .segments import Grid, SegmentC1
from .semiflow import integrate

_CONFIG_ERRORS = (
    ValueError,
    KeyError,
    OSError,
    json.JSONDecodeError,
    ModelValidationError,
    GridMismatchError,
    DomainError,
)
_CHECK_ERRORS = (
    OutsideDomainError,
    NoConvergenceError,
    NoChartForStratumError,
    BumpInfeasibleError,
)


def _out_path(raw: str) -> Path:
    path = Path(raw)
    base = os.environ.get("DDEATLAS_OUTDIR")
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, obj) -> None:
    _write_atomic(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _load_model(args) -> Model:
    source = args.model
    grid_m = getattr(args, "grid_m", None)
    if source in BUILTIN_IDS:
        if grid_m is not None:
            default = get_model(source).grid
            return get_model(source, grid=Grid.uniform(default.r, grid_m))
        return get_model(source)
    path = Path(source)
    if not path.exists():
        raise ValueError(
            f"model {source!r} is neither a built-in id {BUILTIN_IDS} nor a definition file"
        )
    model = load_model_spec(path)
    if grid_m is not None:
        doc = {"model": model.model_id, "grid": {"r": model.grid.r, "M": grid_m}}
        model = load_model_spec(doc)
    return model


def _read_segment(path: str) -> SegmentC1:
    return SegmentC1.from_json(Path(path).read_text())


def _default_atlas(model: Model, seed: int):
    entry = builtin(model.model_id)
    rng = np.random.default_rng([seed, 0xA71A5])
    seeds = entry.default_seeds(model, rng)
    return build_atlas(model, seeds, coverage_boxes=entry.coverage_boxes(model))


# -- subcommand handlers -------------------------------------------------------


def _cmd_verify(args) -> int:
    model = _load_model(args)
    cfg = SuiteConfig(seed=args.seed, segment_samples=args.samples, pair_samples=max(8, args.samples // 2))
    report = run_suite(model, cfg)
    print(report.text())
    if args.output:
        _write_json(_out_path(args.output), report.to_json_dict())
        print(f"report written to {_out_path(args.output)}")
    return 0 if report.all_passed else 1


def _cmd_atlas(args) -> int:
    model = _load_model(args)
    if args.seeds:
        docs = json.loads(Path(args.seeds).read_text())
        seeds = [SegmentC1.from_json_dict(d) for d in docs]
        atlas = build_atlas(model, seeds, coverage_boxes=builtin(model.model_id).coverage_boxes(model))
    else:
        atlas = _default_atlas(model, args.seed)
    manifest = atlas.manifest()
    _write_json(_out_path(args.output), manifest)
    strata = ", ".join(str(s) for s in atlas.strata)
    print(f"atlas: {len(atlas.charts)} chart(s) over strata {strata}")
    print(f"manifest written to {_out_path(args.output)}")
    return 0


def _cmd_lift(args) -> int:
    model = _load_model(args)
    seg = _read_segment(args.input)
    lifted = lift_to_manifold(model, seg)
    residual = model.on_manifold_residual(lifted)
    _write_json(_out_path(args.output), lifted.to_json_dict())
    print(f"lift residual: {residual:.3e}")
    print(f"lifted segment written to {_out_path(args.output)}")
    return 0 if residual <= LIFT_TOL else 1


def _cmd_chart(args) -> int:
    model = _load_model(args)
    seg = _read_segment(args.input)
    atlas = _default_atlas(model, args.seed)
    if args.inverse:
        if args.stratum is None:
            raise ValueError("--inverse needs --stratum (token like 'none', '0', '0+1')")
        stratum = DelaySet.from_token(args.stratum, model.num_delays)
        chart = atlas.charts.get(stratum)
        if chart is None:
            raise NoChartForStratumError(f"no chart for stratum {stratum}")
        point, info = chart.invert_with_info(seg)
        residual = model.on_manifold_residual(point)
        _write_json(_out_path(args.output), point.to_json_dict())
        print(f"inverse on-manifold residual: {residual:.3e} (solver iterations {info.iterations})")
        print(f"manifold point written to {_out_path(args.output)}")
        return 0 if residual <= 1e-9 else 1
    chart, image = atlas.chart_for(seg)
    back, info = chart.invert_with_info(image)
    round_trip = float(
        np.max(np.abs(back.values - seg.values)) + np.max(np.abs(back.derivs - seg.derivs))
    )
    _write_json(_out_path(args.output), image.to_json_dict())
    print(f"chart image round-trip residual: {round_trip:.3e} (solver iterations {info.iterations})")
    print(f"chart image written to {_out_path(args.output)}")
    return 0 if round_trip <= 1e-9 else 1


def _cmd_integrate(args) -> int:
    model = _load_model(args)
    if args.input:
        phi0 = _read_segment(args.input)
    else:
        entry = builtin(model.model_id)
        rng = np.random.default_rng([args.seed, 0xA71A5])
        phi0 = lift_to_manifold(model, entry.default_seeds(model, rng)[0])
    traj = integrate(model, phi0, args.h, args.T)
    _write_atomic(_out_path(args.output), traj.csv_text(stride=args.stride))
    final = traj.residual_at(traj.t_final)
    print(f"integrated to t={traj.t_final:g}; final on-manifold residual {final:.3e}")
    print(f"trajectory written to {_out_path(args.output)}")
    if traj.truncated:
        print(f"warning: trajectory truncated ({traj.truncate_reason})", file=sys.stderr)
        return 1
    return 0


def _cmd_export(args) -> int:
    seg = _read_segment(args.input)
    _write_atomic(_out_path(args.output), seg.csv_text(per_interval=args.per_interval))
    print(f"segment exported to {_out_path(args.output)}")
    return 0


# -- argument parsing ----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddeatlas",
        description=(
            "Verify, chart, and integrate solution manifolds of delay systems "
            "with discrete state-dependent delays."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        if model:
            p.add_argument(
                "--model",
                required=True,
                help=f"built-in id {BUILTIN_IDS} or a JSON/TOML definition file",
            )
            p.add_argument("--grid-m", type=int, default=None, help="override grid node count")
        p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")

    p = sub.add_parser("verify", help="run the property-check suite")
    common(p)
    p.add_argument("--samples", type=int, default=64, help="random samples per check")
    p.add_argument("--output", default=None, help="write the JSON report here")
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("atlas", help="build charts over the discovered strata")
    common(p)
    p.add_argument("--seeds", default=None, help="JSON file with a list of seed segments")
    p.add_argument("--output", required=True, help="manifest JSON path")
    p.set_defaults(handler=_cmd_atlas)

    p = sub.add_parser("lift", help="move a segment onto the solution manifold")
    common(p)
    p.add_argument("--input", required=True, help="segment JSON file")
    p.add_argument("--output", required=True, help="lifted segment JSON path")
    p.set_defaults(handler=_cmd_lift)

    p = sub.add_parser("chart", help="apply a stratum chart (or its inverse)")
    common(p)
    p.add_argument("--input", required=True, help="segment JSON file")
    p.add_argument("--output", required=True, help="output segment JSON path")
    p.add_argument("--inverse", action="store_true", help="treat the input as a chart image")
    p.add_argument("--stratum", default=None, help="stratum token for --inverse")
    p.set_defaults(handler=_cmd_chart)

    p = sub.add_parser("integrate", help="method-of-steps integration on the manifold")
    common(p)
    p.add_argument("--input", default=None, help="initial segment JSON (default: lifted seed)")
    p.add_argument("--h", type=float, required=True, help="step size (<= r/4)")
    p.add_argument("--T", type=float, required=True, help="final time")
    p.add_argument("--stride", type=int, default=1, help="CSV output stride")
    p.add_argument("--output", required=True, help="trajectory CSV path")
    p.set_defaults(handler=_cmd_integrate)

    p = sub.add_parser("export", help="export a segment JSON to CSV for plotting")
    common(p, model=False)
    p.add_argument("--input", required=True, help="segment JSON file")
    p.add_argument("--output", required=True, help="CSV path")
    p.add_argument("--per-interval", type=int, default=4, help="samples per grid interval")
    p.set_defaults(handler=_cmd_export)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except _CHECK_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
