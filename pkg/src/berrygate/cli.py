"""Command-line front end.

Every subcommand writes a JSON document holding the version, the full run
configuration and the scalar results; curves and grids go to a CSV file next
to it.  Frequencies are given in rad/us and may be written as multiples of pi
with a ``pi:`` prefix (``--omega-a pi:100``).  Times are in us.

Exit codes: 0 success, 1 usage error, 2 self-check failure, 3 numerical failure.
The worker count for grid and trajectory evaluation is read from
``BERRYGATE_THREADS`` unless ``--threads`` is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .drive_model import DriveParams, NormDriftError, rabi_compare
from .fidelity import (
    DEFAULT_AXIS,
    FidelityResult,
    NoiseTarget,
    QuadratureError,
    chi_b,
    chi_phi,
    chi_se,
    chi_time_domain,
    landscape,
    mc_fidelity,
    t2_exact,
    t2_formula,
)
from .noise import OUParams
from .optimizer import OptimizationError, chi_exact, compare_to_cpmg, optimize
from .sequences import fid, parse_sequence, spin_echo

THREADS_ENV = "BERRYGATE_THREADS"
DD_DEFAULT = ("fid", "se", "cpmg:2", "udd:3", "cpmg:3", "udd:10", "cpmg:10")

EXIT_OK, EXIT_USAGE, EXIT_SELF_CHECK, EXIT_NUMERICAL = 0, 1, 2, 3


def schema(command: str) -> dict:
    """JSON schema of the document written by ``command``."""
    name = command.replace("-", "_") + ".schema.json"
    return json.loads(resources.files("berrygate").joinpath("schemas", name).read_text())


class UsageError(Exception):
    pass


class SelfCheckError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def frequency(text: str) -> float:
    """Parse ``12.5`` or ``pi:100`` (= 100 pi) into rad/us."""
    text = text.strip()
    scale = 1.0
    if text.lower().startswith("pi:"):
        scale, text = math.pi, text[3:]
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a frequency: {text!r}") from None
    return scale * value


def non_negative(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return value


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _axis(lo: float, hi: float, points: int) -> np.ndarray:
    if points < 1 or hi < lo or lo < 0:
        raise UsageError(f"bad grid [{lo}, {hi}] with {points} points")
    if (lo, hi, points) == (0.0, 4.0, 101):
        return DEFAULT_AXIS.copy()
    return np.linspace(lo, hi, points)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


def _config(args) -> dict:
    skip = {"func", "out_dir", "prefix"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {str(k): _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_builtin(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class Output:
    """Single writer for the files of one run."""

    def __init__(self, args):
        self.dir = Path(args.out_dir)
        self.prefix = args.prefix or args.command.replace("-", "_")
        self.args = args
        self.csv_path = None

    def write_csv(self, header, rows) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{self.prefix}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self.csv_path = path
        return path

    def write_json(self, result: dict) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{self.prefix}.json"
        doc = {
            "tool": "berrygate",
            "version": __version__,
            "subcommand": self.args.command,
            "config": _config(self.args),
            "csv": self.csv_path.name if self.csv_path else None,
            "result": result,
        }
        path.write_text(json.dumps(_to_builtin(doc), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_rabi_compare(args) -> dict:
    params = DriveParams(omega_a=args.omega_a, omega_b=args.omega_b, omega_r=args.omega_r, phi_r=args.phi_r)
    if args.omega_r <= 0:
        raise UsageError("--omega-r must be positive")
    traces = rabi_compare(params, args.t_max / args.omega_r, args.n_steps)
    out = Output(args)
    rows = zip(traces.t * args.omega_r, traces.exact, traces.rwa, traces.mrwa)
    out.write_csv(["t_OmegaR", "P_exact", "P_rwa", "P_mrwa"], rows)
    result = {"L2_rwa": traces.l2_rwa, "L2_mrwa": traces.l2_mrwa, "n_points": len(traces.t)}
    out.write_json(result)
    return result


def _chi_function(kind: str, variant: str, sequence: str, method: str):
    """``chi(y, x)`` for the requested landscape."""
    if kind == "fid_b" and method == "analytic":
        return lambda y, x: float(chi_b(y, x))
    if kind == "se" and method == "analytic":
        return lambda y, x: float(chi_se(y, x))
    if kind == "fid_phi" and method == "analytic":
        if variant != "linear":
            raise UsageError("no closed form for the cycloid variant; use --method quad")
        return lambda y, x: float(chi_phi(y, x))
    if kind == "dd" and method == "analytic":
        seq = parse_sequence(sequence)
        return lambda y, x: float(chi_exact(seq, x, y))

    if kind == "fid_phi":
        seq, target = fid(), (NoiseTarget.phase_linear() if variant == "linear" else NoiseTarget.phase_cycloid())
    else:
        seq = {"fid_b": fid(), "se": spin_echo()}.get(kind) or parse_sequence(sequence)
        target = NoiseTarget.field_b()

    def chi(y, x):
        if x == 0.0 or y == 0.0:
            return 0.0
        return chi_time_domain(seq, target, OUParams.from_dimensionless(y, x), 1.0)

    return chi


def cmd_landscape(args) -> dict:
    if args.kind == "dd" and not args.sequence:
        raise UsageError("--sequence is required for --kind dd")
    closed = args.kind in ("fid_b", "se") or (args.kind == "fid_phi" and args.theta_variant == "linear")
    method = args.method or ("analytic" if closed else "quad")
    args.method = method
    chi = _chi_function(args.kind, args.theta_variant, args.sequence, method)
    xs = _axis(args.x_min, args.x_max, args.x_points)
    ys = _axis(args.y_min, args.y_max, args.y_points)
    grid = landscape(
        lambda y, x: FidelityResult.from_chi(chi(y, x), "analytic" if method == "analytic" else "time_quad"),
        xs,
        ys,
        linear_in_y=True,
        label=args.kind,
        workers=_threads(args),
    )
    out = Output(args)
    rows = ((xv, yv, grid.values[i, j]) for i, yv in enumerate(grid.y) for j, xv in enumerate(grid.x))
    out.write_csv(["gammaT", "Gamma_over_gamma", "F"], rows)
    result = {"F_min": float(grid.values.min()), "F_max": float(grid.values.max()), "shape": list(grid.values.shape)}
    out.write_json(result)
    return result


def cmd_dd_compare(args) -> dict:
    seqs = [parse_sequence(s) for s in args.sequences]
    names = [s.name for s in seqs]
    axis = _axis(0.0, args.axis_max, args.points)
    rows = []
    if args.panel in ("a", "both"):
        chis = [chi_exact(s, axis, args.y_fixed) for s in seqs]
        rows += [["a", xv, args.y_fixed, *[math.exp(-c[i]) for c in chis]] for i, xv in enumerate(axis)]
    if args.panel in ("b", "both"):
        chis = [chi_exact(s, args.x_fixed, 1.0) for s in seqs]
        rows += [["b", args.x_fixed, yv, *[math.exp(-yv * c) for c in chis]] for yv in axis]
    out = Output(args)
    out.write_csv(["panel", "gammaT", "Gamma_over_gamma", *[f"F_{n}" for n in names]], rows)
    at_fixed = {n: float(chi_exact(s, args.x_fixed, args.y_fixed)) for n, s in zip(names, seqs)}
    result = {
        "point": {"gammaT": args.x_fixed, "Gamma_over_gamma": args.y_fixed},
        "chi": at_fixed,
        "F": {n: math.exp(-c) for n, c in at_fixed.items()},
    }
    out.write_json(result)
    return result


def cmd_optimize(args) -> dict:
    res = optimize(args.n, tol=args.tol, starts=args.starts, seed=args.seed)
    result = {**res.to_dict(), "comparison": compare_to_cpmg(res)}
    Output(args).write_json(result)
    return result


_MC_TARGETS = {
    "field_B": NoiseTarget.field_b,
    "phase_linear": NoiseTarget.phase_linear,
    "phase_cycloid": NoiseTarget.phase_cycloid,
}


def cmd_mc(args) -> dict:
    if args.x == 0.0 or args.T <= 0.0:
        raise UsageError("--x and --T must be positive")
    seq = parse_sequence(args.sequence)
    target = _MC_TARGETS[args.target]()
    params = OUParams.from_dimensionless(args.y, args.x, args.T)
    mc = mc_fidelity(
        seq, target, params, args.T, args.n_traj, args.seed, n_steps=args.n_steps, workers=_threads(args)
    )

    reference = {}
    if args.y == 0.0:
        reference["analytic"] = 1.0
    elif args.target == "field_B":
        reference["analytic"] = math.exp(-chi_exact(seq, args.x, args.y))
    elif args.target == "phase_linear" and seq.n == 0:
        reference["analytic"] = math.exp(-float(chi_phi(args.y, args.x)))
    if args.y > 0.0:
        reference["time_quad"] = math.exp(-chi_time_domain(seq, target, params, args.T))
    ref_name = "analytic" if "analytic" in reference else "time_quad"
    deviation = abs(mc.value - reference[ref_name])
    agrees = deviation <= 4.0 * mc.stderr
    result = {
        "monte_carlo": mc.to_dict(),
        "reference": reference,
        "reference_used": ref_name,
        "deviation": deviation,
        "deviation_in_stderr": deviation / mc.stderr if mc.stderr > 0 else (0.0 if deviation == 0 else math.inf),
        "self_check": {"enabled": args.self_check, "passed": agrees, "threshold_stderr": 4.0},
    }
    Output(args).write_json(result)
    if args.self_check and not agrees:
        raise SelfCheckError(
            f"Monte Carlo {mc.value:.6f} +/- {mc.stderr:.2g} disagrees with {ref_name} {reference[ref_name]:.6f}"
        )
    return result


def cmd_t2_scaling(args) -> dict:
    if args.n_max < args.n_min:
        raise UsageError("--n-max must not be below --n-min")
    params = OUParams(Gamma=args.Gamma, gamma=args.gamma)
    if params.Gamma == 0:
        raise UsageError("T2 is infinite for Gamma = 0")
    ns = np.arange(args.n_min, args.n_max + 1)
    exact = np.array([t2_exact(params, int(n)) for n in ns])
    formula = np.array([t2_formula(params, int(n)) for n in ns])
    out = Output(args)
    out.write_csv(["n", "T2_exact", "T2_formula", "gammaT2"], zip(ns.tolist(), exact, formula, params.gamma * exact))
    result = {
        "slope_formula": float(np.polyfit(np.log(ns), np.log(formula), 1)[0]) if len(ns) > 1 else None,
        "slope_exact": float(np.polyfit(np.log(ns), np.log(exact), 1)[0]) if len(ns) > 1 else None,
        "T2_fid_exact": t2_exact(params, 0),
        "T2_fid_formula": t2_formula(params, 0),
    }
    out.write_json(result)
    return result


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="berrygate", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for the output files")
    common.add_argument("--prefix", default=None, help="output file stem (default: subcommand name)")
    common.add_argument("--threads", type=positive_int, default=None, help=f"workers (default: ${THREADS_ENV} or 1)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rabi-compare", parents=[common], help="exact vs RWA vs modified-RWA populations")
    p.add_argument("--omega-a", type=frequency, default=frequency("pi:100"))
    p.add_argument("--omega-b", type=frequency, default=frequency("pi:60"))
    p.add_argument("--omega-r", type=frequency, default=frequency("pi:20"))
    p.add_argument("--phi-r", type=float, default=0.0)
    p.add_argument("--t-max", type=non_negative, default=4.0, help="final time in units of 1/Omega_R")
    p.add_argument("--n-steps", type=positive_int, default=None)
    p.set_defaults(func=cmd_rabi_compare)

    p = sub.add_parser("landscape", parents=[common], help="fidelity over (gamma T, Gamma/gamma)")
    p.add_argument("--kind", choices=["fid_b", "fid_phi", "se", "dd"], default="fid_b")
    p.add_argument("--theta-variant", choices=["linear", "cycloid"], default="linear")
    p.add_argument("--sequence", default=None, help="for --kind dd: fid, se, cpmg:N, udd:N or custom:a,b,...")
    p.add_argument("--method", choices=["analytic", "quad"], default=None)
    for name in ("x", "y"):
        p.add_argument(f"--{name}-min", type=non_negative, default=0.0)
        p.add_argument(f"--{name}-max", type=non_negative, default=4.0)
        p.add_argument(f"--{name}-points", type=positive_int, default=101)
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("dd-compare", parents=[common], help="fidelity of several sequences")
    p.add_argument("--sequences", nargs="+", default=list(DD_DEFAULT))
    p.add_argument("--panel", choices=["a", "b", "both"], default="both")
    p.add_argument("--y-fixed", type=non_negative, default=4.0, help="Gamma/gamma for panel a")
    p.add_argument("--x-fixed", type=non_negative, default=4.0, help="gamma T for panel b")
    p.add_argument("--axis-max", type=non_negative, default=4.0)
    p.add_argument("--points", type=positive_int, default=101)
    p.set_defaults(func=cmd_dd_compare)

    p = sub.add_parser("optimize", parents=[common], help="optimal pulse positions")
    p.add_argument("--n", type=positive_int, required=True)
    p.add_argument("--starts", type=positive_int, default=20)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo fidelity with reference values")
    p.add_argument("--sequence", default="fid")
    p.add_argument("--target", choices=sorted(_MC_TARGETS), default="field_B")
    p.add_argument("--y", type=non_negative, required=True, help="Gamma/gamma")
    p.add_argument("--x", type=non_negative, required=True, help="gamma T")
    p.add_argument("--T", type=float, default=1.0, help="gate time in us")
    p.add_argument("--n-traj", type=positive_int, default=100_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-steps", type=positive_int, default=None)
    p.add_argument("--self-check", action="store_true", help="exit 2 if MC and reference differ by > 4 stderr")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("t2-scaling", parents=[common], help="coherence time against pulse number")
    p.add_argument("--Gamma", type=non_negative, default=1.0)
    p.add_argument("--gamma", type=frequency, default=1.0)
    p.add_argument("--n-min", type=positive_int, default=2)
    p.add_argument("--n-max", type=positive_int, default=20)
    p.set_defaults(func=cmd_t2_scaling)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"berrygate: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SelfCheckError as exc:
        print(f"berrygate: self-check failed: {exc}", file=sys.stderr)
        return EXIT_SELF_CHECK
    except (QuadratureError, OptimizationError, NormDriftError, ArithmeticError) as exc:
        print(f"berrygate: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
