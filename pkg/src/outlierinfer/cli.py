"""Command-line front end.

`fit` ingests a CSV, detects outliers and prints per-coefficient naive
and selective inference; `simulate` runs the coverage / power /
uniformity harnesses and writes JSON + CSV reports.  Exit codes: 0 on
success, 2 on parse or validation errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

from .detection import DetectionConfig, detect
from .errors import NumericalError, ValidationError
from .inference import analyze
from .linalg import validate_dataset
from .simulate import (
    CoverageConfig,
    PowerConfig,
    UniformityConfig,
    run_coverage,
    run_power,
    run_uniformity,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outlierinfer",
        description="Linear-regression inference corrected for outlier removal",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="detect outliers and report inference")
    fit.add_argument("--data", required=True, help="CSV file with a header row")
    fit.add_argument("--response", required=True, help="response column name")
    fit.add_argument(
        "--detect", default="cooks", choices=["cooks", "dffits", "softipod"]
    )
    fit.add_argument(
        "--cutoff",
        type=float,
        default=None,
        help="detection cutoff (default: 4 for cooks, 2*sqrt(p/n) for dffits)",
    )
    fit.add_argument(
        "--sigma",
        default="exact",
        choices=["exact", "est", "known"],
        help="noise-scale mode (default exact: truncated F, no intervals)",
    )
    fit.add_argument("--sigma-value", type=float, default=None)
    fit.add_argument("--alpha", type=float, default=0.05)
    fit.add_argument("--no-intercept", action="store_true")
    fit.add_argument("--format", default="table", choices=["table", "json"])

    sim = sub.add_parser("simulate", help="run a simulation study")
    sim.add_argument("kind", choices=["coverage", "power", "uniformity"])
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--p", type=int, default=11)
    sim.add_argument("--s", type=float, default=4.0)
    sim.add_argument("--cutoff", type=float, default=4.0)
    sim.add_argument("--reps", type=int, default=500)
    sim.add_argument("--accepted", type=int, default=2000,
                     help="accepted replications (uniformity only)")
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--sigma", type=float, default=1.0)
    sim.add_argument("--beta1", type=float, default=0.0,
                     help="true first slope (power only)")
    sim.add_argument("--test", default="coefficient",
                     choices=["coefficient", "group"], help="power target")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--out", default="simreport", help="output path prefix")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_simulate(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _read_table(path: str) -> dict:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ValidationError("CSV file has no header row")
        if any(name is None or name == "" for name in reader.fieldnames):
            raise ValidationError("CSV header has empty column names")
        rows = list(reader)
    if not rows:
        raise ValidationError("CSV file has no data rows")
    if any(None in row or None in row.values() for row in rows):
        raise ValidationError("CSV rows have inconsistent lengths")
    return {k: [row[k] for row in rows] for k in reader.fieldnames}


def _default_cutoff(method: str, n: int, p: int) -> float:
    if method == "cooks":
        return 4.0
    if method == "dffits":
        return 2.0 * math.sqrt(p / n)
    raise ValidationError("--cutoff is required for soft-IPOD detection")


def _cmd_fit(args) -> int:
    if args.sigma == "known" and (args.sigma_value is None or args.sigma_value <= 0):
        raise ValidationError("--sigma known requires a positive --sigma-value")
    if args.sigma != "known" and args.sigma_value is not None:
        raise ValidationError("--sigma-value only makes sense with --sigma known")
    table = _read_table(args.data)
    data = validate_dataset(table, args.response, intercept=not args.no_intercept)
    cutoff = args.cutoff
    if cutoff is None:
        cutoff = _default_cutoff(args.detect, data.n, data.p)
    det = detect(data, DetectionConfig(method=args.detect, cutoff=cutoff))
    report = analyze(
        data,
        det,
        sigma_mode=args.sigma,
        sigma_value=args.sigma_value,
        alpha=args.alpha,
    )
    payload = _report_payload(report)
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        _print_table(payload)
    return 0


def _report_payload(report) -> dict:
    coeffs = []
    for row in report.coefficients:
        ci_lo, ci_hi = (row.ci if row.ci is not None else (None, None))
        coeffs.append(
            {
                "name": row.name,
                "estimate": row.estimate,
                "naiveP": row.naive_p,
                "selectiveP": row.selective_p,
                "ciLo": ci_lo,
                "ciHi": ci_hi,
                "truncationSet": row.truncation.to_pairs()
                if row.truncation is not None
                else None,
            }
        )
    return {
        "detection": {
            "method": report.method,
            "cutoff": report.cutoff,
            "outliers": [int(i) + 1 for i in report.outliers],  # 1-based
        },
        "fit": {"adjR2": report.adjusted_r2, "coefficients": coeffs},
        "inference": {
            "sigmaMode": report.sigma_mode,
            "sigma": report.sigma,
            "alpha": report.alpha,
            "method": report.coefficients[0].method if report.coefficients else None,
        },
    }


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.4g}"
    return str(x)


def _print_table(payload: dict) -> None:
    det = payload["detection"]
    fit = payload["fit"]
    inf = payload["inference"]
    outliers = ", ".join(map(str, det["outliers"])) or "none"
    print(f"detection: {det['method']} (cutoff {_fmt(det['cutoff'])})")
    print(f"outliers (1-based): {outliers}")
    print(f"adjusted R^2: {_fmt(fit['adjR2'])}")
    print(f"inference: {inf['method']} (alpha {_fmt(inf['alpha'])})")
    header = ("coefficient", "estimate", "naive p", "selective p", "ci lo", "ci hi")
    rows = [
        (
            c["name"],
            _fmt(c["estimate"]),
            _fmt(c["naiveP"]),
            _fmt(c["selectiveP"]),
            _fmt(c["ciLo"]),
            _fmt(c["ciHi"]),
        )
        for c in fit["coefficients"]
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for r in rows:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)))


def _cmd_simulate(args) -> int:
    if args.kind == "coverage":
        cfg = CoverageConfig(
            n=args.n, p=args.p, s=args.s, cutoff=args.cutoff, reps=args.reps,
            alpha=args.alpha, sigma=args.sigma, seed=args.seed, threads=args.threads,
        )
        report = run_coverage(cfg)
    elif args.kind == "power":
        cfg = PowerConfig(
            n=args.n, p=args.p, s=args.s, cutoff=args.cutoff, reps=args.reps,
            alpha=args.alpha, sigma=args.sigma, seed=args.seed, threads=args.threads,
            beta1=args.beta1, test=args.test,
        )
        report = run_power(cfg)
    else:
        cfg = UniformityConfig(
            n=args.n, p=args.p, cutoff=args.cutoff, accepted=args.accepted,
            sigma=args.sigma, seed=args.seed,
        )
        report = run_uniformity(cfg)
    json_path = f"{args.out}.json"
    csv_path = f"{args.out}.csv"
    report.write_json(json_path)
    report.write_csv(csv_path)
    print(f"wrote {json_path} and {csv_path}")
    for key, val in sorted(report.metrics.items()):
        if isinstance(val, dict):
            print(f"  {key}: rate={_fmt(val.get('rate'))} se={_fmt(val.get('se'))}")
        else:
            print(f"  {key}: {_fmt(val)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
