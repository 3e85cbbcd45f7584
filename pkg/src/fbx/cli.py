"""``fbx`` command line: solve, oracle, analyze, perturb, experiment."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from .config import ConfigError, parse_config
from .energy import total_energy
from .experiments import (ExperimentError, ExperimentResult, build_problem, export_artifacts, run_experiment,
                          solve_config, to_original, verification_rows)
from .fileio import field_from_csv, field_to_csv, pattern_to_pgm, rows_to_csv
from .grid import positivity_set
from .perturbation import CompetitorError, CompetitorSpec, gap_sweep
from .solver import SolverError, TooManyFreeNodes, brute_force_oracle, local_minimize

log = logging.getLogger("fbx")


def _pair(text, n, name):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name} must be {n} comma-separated numbers")
    return vals


def _out_dir(args, cfg=None):
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get("FBX_OUTPUT_DIR", "fbx_out"))


def _load_config(path):
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _write(result: ExperimentResult, out: Path):
    manifest = export_artifacts(result, out)
    print(f"wrote {len(manifest)} files to {out}")


def cmd_solve(args):
    cfg = _load_config(args.config)
    prob = build_problem(cfg)
    sol = local_minimize(prob.boundary, prob.weight, solve_config(cfg, prob.init_pattern))
    u = to_original(sol.field, cfg, prob.reflected)
    res = ExperimentResult(cfg, {
        "field.csv": field_to_csv(u, prob.weight.gamma),
        "pattern.pgm": pattern_to_pgm(positivity_set(u)),
        "energy.csv": sol.energy.CSV_HEADER + "\n" + sol.energy.csv_row() + "\n",
    })
    print(f"energy {sol.energy.total!r} flip_stable={sol.flip_stable} flips={sol.flips}")
    _write(res, _out_dir(args, cfg))
    return 0


def cmd_oracle(args):
    cfg = _load_config(args.config)
    prob = build_problem(cfg)
    orc = brute_force_oracle(prob.boundary, prob.weight, max_free=args.max_free)
    stable = np.zeros(orc.n_patterns, dtype=bool)
    stable[orc.stable_codes] = True
    rows = [(c, e, bool(s)) for c, (e, s) in enumerate(zip(orc.energies.tolist(), stable))]
    res = ExperimentResult(cfg, {"oracle.csv": rows_to_csv(["code", "total", "stable"], rows)})
    print(f"{orc.n_patterns} patterns, global minimum {orc.global_min.total!r} at code {orc.global_min_code}, "
          f"{orc.stable_codes.size} flip-stable")
    _write(res, _out_dir(args, cfg))
    return 0


def cmd_analyze(args):
    u, w = field_from_csv(Path(args.field).read_text())
    center = tuple(args.center)
    r_min, r_max = args.ladder
    ws = an.weiss_series(u, w, center, r_min, r_max, args.n_circle)
    classes = an.classify_fb_on_gamma(u, w, args.threshold)
    res = ExperimentResult(None, {
        "weiss.csv": ws.csv(),
        "classification.csv": rows_to_csv(["x", "y", "density", "label"],
                                          [(c.point[0], c.point[1], c.density, c.label) for c in classes]),
        "diagnostics.csv": rows_to_csv(["key", "value"], an.run_diagnostics(u, w)),
    })
    print(f"monotone_defect {ws.monotone_defect!r}; "
          f"{sum(c.label == 'Sigma-candidate' for c in classes)} Sigma-candidates of {len(classes)}")
    _write(res, _out_dir(args))
    return 0


def cmd_perturb(args):
    u, w = field_from_csv(Path(args.field).read_text())
    lo, hi, steps = args.t_sweep
    ts = np.logspace(np.log10(lo), np.log10(hi), int(steps))
    spec = CompetitorSpec(tuple(args.window), args.component, args.epsilon, tuple(float(t) for t in ts))
    rows = gap_sweep(u, spec, w)
    ok = [t for t, _, adm in rows if adm]
    res = ExperimentResult(None, {
        "gap.csv": rows_to_csv(["t", "I_t_minus_I_0"], [(t, g) for t, g, _ in rows]),
        "verification.csv": rows_to_csv(["case", "lhs", "rhs", "holds"], verification_rows(u, w, spec, ok)),
    })
    gaps = [g for _, g, adm in rows if adm]
    print(f"{len(gaps)} admissible amplitudes; min gap {min(gaps)!r}" if gaps else "no admissible amplitude")
    _write(res, _out_dir(args))
    return 0


def cmd_experiment(args):
    cfg = _load_config(args.config)
    out = _out_dir(args, cfg)
    try:
        res = run_experiment(cfg)
    except ExperimentError as exc:
        _write(exc.partial, out)
        raise
    for k, v in res.summary.items():
        print(f"{k} = {v}")
    _write(res, out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="fbx", description="Discrete degenerate one-phase free-boundary experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_out(sp):
        sp.add_argument("--out", help="output directory (default: $FBX_OUTPUT_DIR or ./fbx_out)")
        return sp

    sp = with_out(sub.add_parser("solve", help="compute a flip-stable discrete minimizer"))
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_solve)

    sp = with_out(sub.add_parser("oracle", help="enumerate every pattern of a tiny problem"))
    sp.add_argument("--config", required=True)
    sp.add_argument("--max-free", type=int, default=20)
    sp.set_defaults(func=cmd_oracle)

    sp = with_out(sub.add_parser("analyze", help="Weiss series, classification and diagnostics of a field"))
    sp.add_argument("--field", required=True)
    sp.add_argument("--center", required=True, type=lambda s: _pair(s, 2, "--center"))
    sp.add_argument("--ladder", required=True, type=lambda s: _pair(s, 2, "--ladder"))
    sp.add_argument("--threshold", type=float, default=an.SIGMA_THRESHOLD)
    sp.add_argument("--n-circle", type=int, default=128)
    sp.set_defaults(func=cmd_analyze)

    sp = with_out(sub.add_parser("perturb", help="energy gap of the two-sided shear competitor"))
    sp.add_argument("--field", required=True)
    sp.add_argument("--window", required=True, type=lambda s: _pair(s, 3, "--window"))
    sp.add_argument("--t-sweep", required=True, type=lambda s: _pair(s, 3, "--t-sweep"))
    sp.add_argument("--component", type=int, default=1)
    sp.add_argument("--epsilon", type=float, default=2.0)
    sp.set_defaults(func=cmd_perturb)

    sp = with_out(sub.add_parser("experiment", help="run a preset pipeline and export artifacts"))
    sp.add_argument("--config", required=True)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return 2
    except (SolverError, ExperimentError, TooManyFreeNodes, CompetitorError, an.RadiusError,
            an.DegenerateWindow, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
