"""Command-line front end.

Exit codes: 0 success, 2 invalid input or configuration, 3 a verification
check failed (``sweep --verify``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .grid import ConfigurationError, Cube, Grid
from .harness import (
    ExperimentConfig,
    WeightSpec,
    generate_weight,
    growth_fit,
    records_to_csv,
    records_to_json,
    run_config,
    uniform_boundedness,
)
from .lerner import domination_constant, sparse_decomposition
from .shifts import adjoint_apply, apply, maximal_truncation, shift_from_json, truncated_apply
from .testing import layer_analysis, shift_testing_constant, worst_decay
from .weights import GridFunction, ainfty, ap_two_weight, dual_weight

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 2, 3

log = logging.getLogger("dyadic_shifts")


class VerificationFailure(Exception):
    pass


def _finite(x):
    """JSON-safe number: non-finite values become strings."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def parse_p_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse p list {text!r}") from exc


def read_function(path: str, d: int | None = None) -> GridFunction:
    """Read a CSV of cell values.

    A single row or column is a Morton-ordered vector (``d`` defaults to 1);
    a square matrix is a d=2 function indexed ``[i, j]``.
    """
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read input {path!r}: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("input contains non-finite values")
    if arr.shape[0] > 1 and arr.shape[1] > 1:
        n = arr.shape[0]
        if arr.shape != (n, n) or n & (n - 1):
            raise ConfigurationError(f"matrix input must be 2^L x 2^L, got {arr.shape}")
        grid = Grid(2, n.bit_length() - 1)
        return GridFunction(grid, grid.from_array(arr))
    vals = arr.ravel()
    d = d or 1
    L, rem = divmod(int(vals.size).bit_length() - 1, d)
    if rem or 2 ** (d * L) != vals.size:
        raise ConfigurationError(f"{vals.size} values do not fill a d={d} dyadic grid")
    return GridFunction(Grid(d, L), vals)


def write_function(f: GridFunction, as_matrix: bool, out) -> None:
    arr = f.grid.to_array(f.values) if as_matrix else f.values[None, :]
    for row in np.atleast_2d(arr):
        out.write(",".join(repr(float(x)) for x in row) + "\n")


def _grid_from(args) -> Grid:
    return Grid(args.d, args.L)


# -- subcommands ---------------------------------------------------------------


def cmd_constants(args) -> dict:
    grid = _grid_from(args)
    w = generate_weight(WeightSpec.parse(args.weight), grid)
    sigma_spec = WeightSpec.parse(args.sigma) if args.sigma else None
    rows = []
    for p in parse_p_list(args.p):
        sigma = dual_weight(w, p) if sigma_spec is None else generate_weight(sigma_spec, grid)
        ap, Q = ap_two_weight(w, sigma, p)
        rows.append({"p": p, "ap": ap, "apCube": str(Q),
                     "ainftyW": ainfty(w), "ainftySigma": ainfty(sigma)})
    return {"weight": args.weight, "grid": {"d": grid.d, "L": grid.L}, "constants": rows}


def cmd_apply(args, out) -> None:
    S = shift_from_json(args.shift)
    f = read_function(args.input, S.grid.d)
    if f.grid != S.grid:
        raise ConfigurationError(f"input grid {f.grid} does not match shift grid {S.grid}")
    if args.mode == "forward":
        g = apply(S, f)
    elif args.mode == "adjoint":
        g = adjoint_apply(S, f)
    elif args.mode == "maximal":
        g = maximal_truncation(S, f)
    else:
        if args.eps is None or args.ups is None:
            raise ConfigurationError("truncated mode needs --eps and --ups")
        g = truncated_apply(S, f, args.eps, args.ups)
    as_matrix = f.grid.d == 2 and not args.morton
    if args.output:
        with open(args.output, "w") as fh:
            write_function(g, as_matrix, fh)
    else:
        write_function(g, as_matrix, out)


def cmd_lerner(args) -> dict:
    f = read_function(args.input, args.d)
    Q0 = Cube.parse(args.q0) if args.q0 else f.grid.root
    f.grid.check(Q0)
    fam = sparse_decomposition(f, Q0)
    return {
        "root": str(Q0),
        "generations": [[str(Q) for Q in g] for g in fam.generations],
        "dominationConstant": _finite(domination_constant(f, Q0, fam)),
    }


def cmd_testing(args) -> dict:
    S = shift_from_json(args.shift)
    p = float(args.p)
    w = generate_weight(WeightSpec.parse(args.weight), S.grid)
    sigma = dual_weight(w, p) if not args.sigma else generate_weight(WeightSpec.parse(args.sigma), S.grid)
    sp, qf = shift_testing_constant(S, w, sigma, p, "forward")
    spa, qa = shift_testing_constant(S, w, sigma, p, "adjoint")
    layers, decays = layer_analysis(S, w, sigma, p)
    worst = worst_decay(decays)
    return {
        "Sp": sp,
        "SpStar": spa,
        "attainingCubes": {"forward": str(qf), "adjoint": str(qa)},
        "layers": [
            {"lambda": ly.lam, "a": ly.a, "principals": [str(P) for P in ly.principals],
             "carlesonRatio": ly.carleson}
            for ly in layers
        ],
        "decay": [{"t": t, "measure": m} for t, m in zip(worst.thresholds, worst.measures)],
        "fittedRate": worst.rate,
    }


def verify_records(records) -> list[str]:
    """Checks applied by ``sweep --verify``; returns failure messages."""
    failures = []
    for r in records:
        for name, v in r.measured().items():
            if v is not None and not math.isfinite(v):
                failures.append(f"{r.weight_id}/{r.shift_id}/i={r.i}: {name} = {v}")
    groups: dict = {}
    for r in records:
        if r.R is not None:
            groups.setdefault((r.shift_id, r.i, r.p), []).append(r)
    for key, recs in groups.items():
        ok, hi, lo, n = uniform_boundedness(recs)
        if not ok:
            failures.append(f"R not uniformly bounded for {key}: max {hi:.4g} > 2 x min {lo:.4g}")
    series: dict = {}
    for r in records:
        if r.weight_id == "lebesgue" and r.i is not None and r.rho:
            series.setdefault((r.shift_id, r.p), []).append((r.i, r.rho))
    for key, pts in series.items():
        if len(pts) >= 2:
            _, expo = growth_fit(*zip(*sorted(pts)))
            if expo > 1.3:
                failures.append(f"rho growth exponent {expo:.3f} > 1.3 for {key}")
    return failures


def cmd_sweep(args, out) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    records = run_config(cfg)
    if not records:
        raise ConfigurationError("sweep produced no records")
    target = args.output or cfg.output
    if target:
        base = Path(target)
        base = base.with_suffix("") if base.suffix in (".csv", ".json") else base
        base.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{base}.csv").write_text(records_to_csv(records))
        Path(f"{base}.json").write_text(records_to_json(records))
        log.info("wrote %s.csv and %s.json", base, base)
    else:
        out.write(records_to_csv(records))
    if args.verify:
        failures = verify_records(records)
        for msg in failures:
            print(f"FAIL {msg}", file=sys.stderr)
        if failures:
            raise VerificationFailure(f"{len(failures)} verification checks failed")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyadic-shifts", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("constants", help="A_p and A_inf characteristics of a weight")
    c.add_argument("--weight", required=True, help="power:ALPHA | step:V1,V2,... | random:SEED:ROUGH | JSON")
    c.add_argument("--sigma", help="second weight (two-weight mode); default w^(1-p')")
    c.add_argument("--p", default="2", help="comma-separated exponents")
    c.add_argument("--d", type=int, default=1)
    c.add_argument("--L", type=int, default=8)

    a = sub.add_parser("apply", help="apply a shift to a CSV function")
    a.add_argument("--shift", required=True, help="shift JSON file or literal")
    a.add_argument("--input", required=True)
    a.add_argument("--mode", choices=("forward", "adjoint", "truncated", "maximal"), default="forward")
    a.add_argument("--eps", type=float)
    a.add_argument("--ups", type=float)
    a.add_argument("--morton", action="store_true", help="write d=2 output as a Morton-ordered row")
    a.add_argument("--output")

    le = sub.add_parser("lerner", help="sparse stopping family and domination constant")
    le.add_argument("--input", required=True)
    le.add_argument("--q0", help="root cube, e.g. 0:0 or 1:0,1")
    le.add_argument("--d", type=int, default=None)

    t = sub.add_parser("testing", help="testing constants, principal forests and decay")
    t.add_argument("--shift", required=True)
    t.add_argument("--weight", required=True)
    t.add_argument("--sigma")
    t.add_argument("--p", default="2")

    s = sub.add_parser("sweep", help="run an experiment config, emit CSV and JSON")
    s.add_argument("--config", required=True)
    s.add_argument("--output", help="output base path (writes .csv and .json)")
    s.add_argument("--verify", action="store_true", help="exit 3 if a verification check fails")
    return ap


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "constants":
            json.dump(cmd_constants(args), out, indent=2)
            out.write("\n")
        elif args.command == "apply":
            cmd_apply(args, out)
        elif args.command == "lerner":
            json.dump(cmd_lerner(args), out, indent=2)
            out.write("\n")
        elif args.command == "testing":
            json.dump(cmd_testing(args), out, indent=2)
            out.write("\n")
        elif args.command == "sweep":
            return cmd_sweep(args, out)
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        # ConfigurationError and GridError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
