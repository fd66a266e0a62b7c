"""Command-line interface.

Five subcommands: ``simulate`` (Monte Carlo scenarios), ``analyze``
(correction workflow on CSV files), ``bias-curve`` (asymptotic bias
tables), ``check-conditions`` (naive-versus-corrected condition logic),
and ``verify-optimality`` (grid oracle for the optimal transform).

Exit codes are uniform: 0 success, 1 runtime or numerical failure, 2
usage or schema error.  Reports are dual-emitted where a file flag
exists: a human-readable summary on standard output and a JSON document
(top-level ``schema_version: 1``) written to ``--out``.  All outputs are
deterministic for identical flags.

CSV contract: comma-delimited with a header row, "." as the decimal
separator.  Main studies use columns ``y, z1..zp, w1..wq``; validation
studies use ``x1..xp, z1..zp, w1..wq``.  Headers are matched
case-insensitively; column order is free; p and q are inferred from the
headers and must agree across the files of one invocation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from .asymptotics import (
    ScalarSetting,
    bias_curve,
    bias_curve_csv,
    check_conditions,
    optimality_oracle,
    rc_bias_bound_region,
)
from .errors import CsvSchemaError, RegcalError
from .estimators import AnalysisReport, analyze
from .params import Dataset, Role
from .simulation import ScenarioConfig, run_scenario

__all__ = ["main", "entry", "read_dataset_csv", "write_dataset_csv"]

_HEADER_RE = re.compile(r"^([xzw])([1-9][0-9]*)$")


def _schema_error(path: Path | str, message: str) -> CsvSchemaError:
    return CsvSchemaError(f"{path}: {message}")


def read_dataset_csv(path: str | Path, role: Role | str) -> Dataset:
    """Load a study from CSV under the documented column contract."""
    role = Role(role) if not isinstance(role, Role) else role
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _schema_error(path, f"cannot read file ({exc})") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise _schema_error(path, "empty file, expected a header row")
    header = [cell.strip().lower() for cell in rows[0]]

    columns: dict[str, int] = {}
    groups: dict[str, set[int]] = {"x": set(), "z": set(), "w": set()}
    has_y = False
    for pos, name in enumerate(header):
        if name in columns:
            raise _schema_error(path, f"duplicate column {name!r}")
        if name == "y":
            has_y = True
            columns[name] = pos
            continue
        match = _HEADER_RE.match(name)
        if match is None:
            raise _schema_error(path, f"unrecognized column {name!r}")
        groups[match.group(1)].add(int(match.group(2)))
        columns[name] = pos

    for letter, indices in groups.items():
        if indices and sorted(indices) != list(range(1, len(indices) + 1)):
            raise _schema_error(
                path, f"{letter} columns must be numbered contiguously from 1"
            )
    p = len(groups["z"])
    q = len(groups["w"])
    if p == 0:
        raise _schema_error(path, "missing z columns")
    if q == 0:
        raise _schema_error(path, "missing w columns")
    if role is Role.MAIN:
        if not has_y:
            raise _schema_error(path, "main study requires a y column")
        if groups["x"]:
            raise _schema_error(path, "main study must not contain x columns")
    else:
        if has_y:
            raise _schema_error(path, "validation study must not contain a y column")
        if len(groups["x"]) != p:
            raise _schema_error(
                path,
                f"validation study requires x1..x{p} to match its z columns",
            )

    data = rows[1:]
    if not data:
        raise _schema_error(path, "no data rows")
    width = len(header)
    parsed = np.empty((len(data), width), dtype=float)
    for i, row in enumerate(data):
        if len(row) != width:
            raise _schema_error(path, f"row {i + 2} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                parsed[i, j] = float(cell.strip())
            except ValueError as exc:
                raise _schema_error(
                    path, f"row {i + 2}, column {header[j]!r}: not a number ({cell!r})"
                ) from exc
    if not np.isfinite(parsed).all():
        raise _schema_error(path, "non-finite values are not allowed")

    def block(letter: str, count: int) -> np.ndarray:
        return parsed[:, [columns[f"{letter}{i}"] for i in range(1, count + 1)]]

    z = block("z", p)
    w = block("w", q)
    if role is Role.MAIN:
        return Dataset(z=z, w=w, role=role, y=parsed[:, columns["y"]])
    return Dataset(z=z, w=w, role=role, x=block("x", p))


def write_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    """Write a study to CSV in the format :func:`read_dataset_csv` reads."""
    path = Path(path)
    header: list[str] = []
    blocks: list[np.ndarray] = []
    if dataset.role is Role.MAIN:
        header.append("y")
        blocks.append(dataset.y.reshape(-1, 1))
    else:
        header.extend(f"x{i + 1}" for i in range(dataset.p))
        blocks.append(dataset.x)
    header.extend(f"z{i + 1}" for i in range(dataset.p))
    blocks.append(dataset.z)
    header.extend(f"w{i + 1}" for i in range(dataset.q))
    blocks.append(dataset.w)
    table = np.column_stack(blocks)
    lines = [",".join(header)]
    for row in table:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _sanitize(value):
    """Make a report JSON-safe: arrays to lists, non-finite floats to null."""
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return _sanitize(value.tolist())
    if isinstance(value, (np.floating, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _write_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(_sanitize(doc), indent=2) + "\n", encoding="utf-8", newline="\n"
    )


def _fmt(value: float | None, width: int = 10) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "-".rjust(width)
    return f"{value:.4f}".rjust(width)


def _parse_sigma_v2_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected start:stop:step, got {text!r}"
        )
    try:
        start, stop, step = (float(part) for part in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric range component in {text!r}")
    if not all(math.isfinite(v) for v in (start, stop, step)):
        raise argparse.ArgumentTypeError("range components must be finite")
    if step <= 0:
        raise argparse.ArgumentTypeError("range step must be positive")
    if start <= 0:
        raise argparse.ArgumentTypeError("range start must be positive")
    if stop < start:
        raise argparse.ArgumentTypeError("range stop must not be below start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("value must be a positive integer")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("value must be nonnegative")
    return value


def cmd_simulate(args: argparse.Namespace) -> int:
    config = ScenarioConfig(
        family=args.family,
        case=args.case,
        n_main=args.n_main,
        n_evs=args.n_evs,
        reps=args.reps,
        master_seed=args.seed,
    )
    summary = run_scenario(config, threads=args.threads)
    out = Path(args.out)
    out.write_text(summary.to_json(), encoding="utf-8", newline="\n")
    csv_path = out.with_suffix(".csv")
    csv_path.write_text(summary.to_csv_text(), encoding="utf-8", newline="\n")

    print(
        f"scenario: {summary.family} case {summary.case} "
        f"(n_main={summary.n_main}, n_evs={summary.n_evs}, "
        f"reps={summary.reps}, seed={summary.master_seed})"
    )
    print(f"true beta1: {summary.true_beta1}")
    print(f"{'method':<8}{'pe':>10}{'bias%':>10}{'emp_sd':>10}{'mc_se':>10}")
    for row in summary.rows:
        print(
            f"{row.method:<8}{_fmt(row.pe)}{_fmt(row.bias_pct)}"
            f"{_fmt(row.emp_sd)}{_fmt(row.mc_se)}"
        )
    print(
        f"replications completed: {summary.reps_completed}, "
        f"failed: {summary.reps_failed}"
    )
    print(f"wrote {out} and {csv_path}")
    return 0


def _analysis_to_dict(report: AnalysisReport, family: str,
                      ratio_threshold: float) -> dict:
    characteristics = [
        {
            "label": c.label,
            "n": c.n,
            "mean_z": c.mean_z,
            "var_z_given_w": c.var_z_given_w,
            "mean_x": c.mean_x,
            "var_x_given_w": c.var_x_given_w,
        }
        for c in report.characteristics
    ]
    rows = []
    for row in report.evs_rows:
        entry_doc: dict = {"label": row.label, "error": row.error}
        if row.rc is not None:
            entry_doc["rc"] = {
                "beta1_naive": row.rc.beta1_naive,
                "beta1_rc": row.rc.beta1_rc,
                "se_naive": row.rc.se_naive,
                "se_rc": row.rc.se_rc,
                "ci_rc": row.rc.ci_rc,
                "gamma1_condition_number": row.rc.gamma1_condition_number,
                "warnings": [w.value for w in row.rc.warnings],
            }
        else:
            entry_doc["rc"] = None
        if row.transport is not None:
            entry_doc["transport"] = {
                "ratio": row.transport.ratio,
                "ratio_threshold": row.transport.ratio_threshold,
                "flag": row.transport.flag.value,
                "var_z_given_w_main": row.transport.var_z_given_w_main,
                "var_z_given_w_evs": row.transport.var_z_given_w_evs,
            }
        else:
            entry_doc["transport"] = None
        entry_doc["relative_bias_pct"] = row.relative_bias_pct
        rows.append(entry_doc)
    return {
        "schema_version": 1,
        "family": family,
        "ci_level": report.ci_level,
        "ratio_threshold": ratio_threshold,
        "reference_label": report.reference_label,
        "characteristics": characteristics,
        "naive": {
            "beta1": report.naive_beta1,
            "se": report.naive_se,
            "ci": report.naive_ci,
            "relative_bias_pct": report.naive_relative_bias_pct,
        },
        "evs_rows": rows,
    }


def _scalar_or_dash(value: np.ndarray | None) -> str:
    if value is None:
        return "-".rjust(10)
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size == 1:
        return _fmt(float(arr[0]))
    return np.array2string(arr, precision=4).rjust(10)


def cmd_analyze(args: argparse.Namespace) -> int:
    main_ds = read_dataset_csv(args.main, Role.MAIN)
    evs_list: list[Dataset] = []
    labels: list[str] = []
    for evs_path in args.evs:
        ds = read_dataset_csv(evs_path, Role.EVS)
        if ds.p != main_ds.p or ds.q != main_ds.q:
            raise _schema_error(
                evs_path,
                f"p={ds.p}, q={ds.q} disagree with the main study "
                f"(p={main_ds.p}, q={main_ds.q})",
            )
        evs_list.append(ds)
        labels.append(Path(evs_path).stem)

    report = analyze(
        main_ds,
        evs_list,
        family=args.family,
        ci_level=args.ci_level,
        ratio_threshold=args.ratio_threshold,
        labels=labels,
        n_boot=args.n_boot,
        seed=args.seed,
    )
    _write_json(_analysis_to_dict(report, args.family, args.ratio_threshold), args.out)

    print("study characteristics")
    print(
        f"{'label':<12}{'n':>8}{'mean(z)':>10}{'var(z|w)':>10}"
        f"{'mean(x)':>10}{'var(x|w)':>10}"
    )
    for c in report.characteristics:
        var_z = float(np.asarray(c.var_z_given_w).ravel()[0]) if main_ds.p == 1 else None
        var_x = (
            float(np.asarray(c.var_x_given_w).ravel()[0])
            if c.var_x_given_w is not None and main_ds.p == 1
            else None
        )
        print(
            f"{c.label:<12}{c.n:>8}"
            f"{_scalar_or_dash(c.mean_z)}"
            f"{_fmt(var_z) if var_z is not None else _scalar_or_dash(c.var_z_given_w)}"
            f"{_scalar_or_dash(c.mean_x)}"
            f"{_fmt(var_x) if var_x is not None else _scalar_or_dash(c.var_x_given_w)}"
        )

    level_pct = round(report.ci_level * 100)
    print(f"estimates ({level_pct}% CI)")
    print(
        f"{'source':<12}{'estimate':>10}{'se':>10}{'ci_low':>10}{'ci_high':>10}"
        f"{'transport':>11}{'rel_bias%':>11}"
    )
    if main_ds.p == 1:
        print(
            f"{'naive':<12}{_fmt(float(report.naive_beta1[0]))}"
            f"{_fmt(float(report.naive_se[0]))}"
            f"{_fmt(float(report.naive_ci[0, 0]))}{_fmt(float(report.naive_ci[0, 1]))}"
            f"{'-':>11}{_fmt(report.naive_relative_bias_pct)}"
        )
    for row in report.evs_rows:
        if row.rc is None:
            print(f"{row.label:<12}  error: {row.error}")
            continue
        flag = row.transport.flag.value if row.transport is not None else "-"
        if main_ds.p == 1:
            print(
                f"{row.label:<12}{_fmt(float(row.rc.beta1_rc[0]))}"
                f"{_fmt(float(row.rc.se_rc[0]))}"
                f"{_fmt(float(row.rc.ci_rc[0, 0]))}{_fmt(float(row.rc.ci_rc[0, 1]))}"
                f"{flag:>11}{_fmt(row.relative_bias_pct)}"
            )
        else:
            print(f"{row.label:<12}beta1_rc={np.array2string(row.rc.beta1_rc, precision=4)}"
                  f" transport={flag}")
        for warning in row.rc.warnings:
            print(f"{'':<12}warning: {warning.value}")
    if report.reference_label is not None:
        print(
            "note: relative bias is reported against the corrected estimate "
            f"from {report.reference_label!r}, a reporting convention, "
            "not a ground truth"
        )
    print(f"wrote {args.out}")
    return 0


def cmd_bias_curve(args: argparse.Namespace) -> int:
    grid = args.sigma_v2
    table = bias_curve(args.c1, args.sigma2, args.sigma_m2, grid)
    text = bias_curve_csv(args.c1, args.sigma2, args.sigma_m2, grid)
    Path(args.out).write_text(text, encoding="utf-8", newline="\n")
    print(
        f"bias curve: c1={args.c1} sigma2={args.sigma2} sigma_m2={args.sigma_m2}"
    )
    print(
        f"sigma_v2 from {float(grid[0])!r} to {float(grid[-1])!r} ({len(grid)} points)"
    )
    print(f"naive relative bias (constant): {float(table[0, 1])!r}")
    print(
        "rc relative bias at endpoints: "
        f"{float(table[0, 2])!r} .. {float(table[-1, 2])!r}"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_check_conditions(args: argparse.Namespace) -> int:
    if args.bound is not None:
        region = rc_bias_bound_region(args.c1, args.sigma2, args.sigma_m2, args.bound)
        doc = {
            "schema_version": 1,
            "c1": args.c1,
            "sigma2": args.sigma2,
            "sigma_m2": args.sigma_m2,
            "r": region.r,
            "gate": region.gate,
            "lower": region.lower,
            "upper": region.upper,
            "intervals": [list(pair) for pair in region.intervals],
            "notes": list(region.notes),
        }
    else:
        setting = ScalarSetting(
            c1=args.c1,
            sigma2=args.sigma2,
            sigma_m2=args.sigma_m2,
            sigma_v2=args.sigma_v2,
        )
        report = check_conditions(setting, tol=args.tol)
        doc = {
            "schema_version": 1,
            "c1": args.c1,
            "sigma2": args.sigma2,
            "sigma_m2": args.sigma_m2,
            "sigma_v2": args.sigma_v2,
            "tol": args.tol,
            "naive_bias": report.naive_bias,
            "rc_bias": report.rc_bias,
            "conditions_met": sorted(report.conditions_met),
            "naive_wins": report.naive_wins,
            "boundary": report.boundary,
            "notes": list(report.notes),
        }
    text = json.dumps(_sanitize(doc), indent=2)
    print(text)
    if args.out is not None:
        Path(args.out).write_text(text + "\n", encoding="utf-8", newline="\n")
    return 0


def cmd_verify_optimality(args: argparse.Namespace) -> int:
    report = optimality_oracle(
        args.c1,
        args.sigma2,
        args.sigma_v2,
        alpha=args.alpha,
        grid_points=args.grid,
        span=args.span,
    )
    doc = {
        "schema_version": 1,
        "c1": args.c1,
        "sigma2": args.sigma2,
        "sigma_v2": args.sigma_v2,
        "alpha": args.alpha,
        "l1_closed": float(report.closed.L1[0, 0]),
        "l2_closed": float(report.closed.L2[0, 0]),
        "objective_closed": report.objective_closed,
        "grid_minimum": report.grid_minimum,
        "argmin_l1": report.argmin_l1,
        "argmin_l2": report.argmin_l2,
        "grid_points": report.grid_points,
        "span": report.span,
        "resolution": report.resolution,
        "skipped": report.skipped,
        "scale_invariance_max_rel_err": report.scale_invariance_max_rel_err,
        "attained": report.attained,
    }
    print(
        f"closed-form transforms: L1={doc['l1_closed']!r} L2={doc['l2_closed']!r} "
        f"objective={report.objective_closed!r}"
    )
    print(
        f"grid: {report.grid_points}x{report.grid_points} over "
        f"[-{report.span}, {report.span}] (scaled), resolution {report.resolution!r}, "
        f"skipped {report.skipped} degenerate points"
    )
    print(
        f"grid minimum {report.grid_minimum!r} at "
        f"(L1={report.argmin_l1!r}, L2={report.argmin_l2!r})"
    )
    print(
        "scale invariance: max relative error "
        f"{report.scale_invariance_max_rel_err!r} for k in {{0.25, 2.0, 3.7}}"
    )
    if report.attained:
        print("verdict: closed form attains the grid minimum")
    else:
        print("verdict: grid beat the closed form beyond tolerance")
    if args.out is not None:
        _write_json(doc, args.out)
    return 0 if report.attained else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regcal",
        description=(
            "Measurement-error correction for regression coefficients "
            "using external validation studies"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    sim.add_argument("--family", required=True, choices=("continuous", "binary"))
    sim.add_argument("--case", required=True, type=int, choices=(1, 2, 3, 4))
    sim.add_argument("--n-main", type=_positive_int, default=10_000)
    sim.add_argument("--n-evs", type=_positive_int, default=500)
    sim.add_argument("--reps", type=_positive_int, default=1000)
    sim.add_argument("--seed", type=_nonnegative_int, default=0)
    sim.add_argument("--threads", type=_positive_int, default=1)
    sim.add_argument("--out", required=True, help="JSON output path (a CSV sibling is written too)")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="correct estimates from CSV studies")
    ana.add_argument("--main", required=True, help="main study CSV (y, z1.., w1..)")
    ana.add_argument(
        "--evs",
        required=True,
        action="append",
        help="validation study CSV (x1.., z1.., w1..); repeatable",
    )
    ana.add_argument("--family", required=True, choices=("linear", "logistic"))
    ana.add_argument("--ci-level", type=float, default=0.95)
    ana.add_argument("--ratio-threshold", type=float, default=0.2)
    ana.add_argument("--n-boot", type=_positive_int, default=500)
    ana.add_argument("--seed", type=_nonnegative_int, default=None)
    ana.add_argument("--out", required=True, help="JSON report path")
    ana.set_defaults(func=cmd_analyze)

    curve = sub.add_parser("bias-curve", help="tabulate asymptotic biases")
    curve.add_argument("--c1", type=float, required=True)
    curve.add_argument("--sigma2", type=float, required=True)
    curve.add_argument("--sigma-m2", type=float, required=True)
    curve.add_argument(
        "--sigma-v2",
        type=_parse_sigma_v2_range,
        required=True,
        metavar="START:STOP:STEP",
    )
    curve.add_argument("--out", required=True, help="CSV output path")
    curve.set_defaults(func=cmd_bias_curve)

    cond = sub.add_parser(
        "check-conditions", help="naive-versus-corrected condition logic"
    )
    cond.add_argument("--c1", type=float, required=True)
    cond.add_argument("--sigma2", type=float, required=True)
    cond.add_argument("--sigma-m2", type=float, required=True)
    pick = cond.add_mutually_exclusive_group(required=True)
    pick.add_argument("--sigma-v2", type=float)
    pick.add_argument(
        "--bound",
        type=float,
        metavar="R",
        help="report the sigma_v2 region where |rc bias| <= R",
    )
    cond.add_argument("--tol", type=float, default=1e-9)
    cond.add_argument("--out", help="optional JSON output path")
    cond.set_defaults(func=cmd_check_conditions)

    opt = sub.add_parser(
        "verify-optimality", help="grid oracle for the optimal transform"
    )
    opt.add_argument("--c1", type=float, required=True)
    opt.add_argument("--sigma2", type=float, required=True)
    opt.add_argument("--sigma-v2", type=float, required=True)
    opt.add_argument("--alpha", type=float, default=1.0)
    opt.add_argument("--grid", type=_positive_int, default=601)
    opt.add_argument("--span", type=float, default=3.0)
    opt.add_argument("--out", help="optional JSON output path")
    opt.set_defaults(func=cmd_verify_optimality)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 2
    try:
        return args.func(args)
    except CsvSchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RegcalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
