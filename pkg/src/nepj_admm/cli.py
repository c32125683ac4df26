"""Command-line driver: ``nepj-admm solve | validate | certify``.

Exit codes: 0 success, 1 run failure (subproblem failure, divergence or a
violated certificate), 2 iteration budget exhausted, 3 infeasible or
uncertified parameters, 4 input errors. Errors are printed to stderr with
the prefix ``E:``.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .diagnostics import rate_certificate
from .errors import InfeasibleForBeta, InfeasibleParams, NEPJError, ThetaOutOfRange, UncertifiedRun
from .bregman import generator_from_dict
from .params import SolverConfig, auto_tune, default_generators, make_config, practical_moduli
from .problem import validate
from .solver import run

EXIT_OK, EXIT_FAIL, EXIT_MAXITER, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2, 3, 4


class _InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _InputError(message)


def _err(msg: str) -> None:
    print(f"E: {msg}", file=sys.stderr)


def _resolve(path: str) -> Path:
    """A problem path, falling back to the shipped examples by file name."""
    p = Path(path)
    if p.exists():
        return p
    shipped = resources.files("nepj_admm") / "data" / p.name
    if shipped.is_file():
        return Path(str(shipped))
    raise _InputError(f"problem file not found: {path}")


def _load(path: str):
    p = _resolve(path)
    try:
        with open(p) as fh:
            d = json.load(fh)
        return io.problem_from_dict(d), d
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise _InputError(f"malformed problem file {p}: {exc}") from None
    except (NEPJError, ValueError) as exc:
        raise _InputError(f"invalid problem {p}: {exc}") from None


def _floats(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise _InputError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nepj-admm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run the solver on a problem file")
    s.add_argument("--problem", required=True)
    s.add_argument("--beta", type=float, default=10.0)
    s.add_argument("--theta", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--auto-tune", action="store_true")
    s.add_argument("--m", default=None, help="comma-separated moduli m_i, one per block")
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--rho", type=float, default=1e-6)
    s.add_argument("--check", choices=("off", "cheap", "full"), default="cheap")
    s.add_argument("--mode", choices=("certified", "practical"), default="certified")
    s.add_argument("--trace", default=None, help="write the trace CSV here")
    s.add_argument("--cert", default=None, help="write the certificate JSON (with constants) here")
    s.add_argument("--constants", default=None, help="write the rate constants JSON here")
    s.add_argument("--plotdata", default=None, help="write the rate plot TSV here")
    s.add_argument("--summary", default=None, help="write the text summary here")
    s.add_argument("--seed", type=int, default=0)

    v = sub.add_parser("validate", help="check the standing assumptions of a problem")
    v.add_argument("--problem", required=True)
    v.add_argument("--tol", type=float, default=1e-9)

    c = sub.add_parser("certify", help="recompute the rate certificate of a stored trace")
    c.add_argument("--trace", required=True)
    c.add_argument("--constants", required=True)
    c.add_argument("--every", type=int, default=1, help="print every N-th horizon")
    return ap


def _config(args, prob, d) -> SolverConfig:
    common = dict(
        max_iter=args.max_iter, rho_tol=args.rho, check_level=args.check, mode=args.mode, rng_seed=args.seed
    )
    if args.auto_tune or (args.mode == "certified" and args.m is None):
        # certified mode needs moduli with delta_i > 0; auto-tune supplies them
        return auto_tune(prob, args.beta, args.theta, **common)
    m = _floats(args.m) if args.m is not None else practical_moduli(prob, args.beta)
    if len(m) == 1:
        m = m * prob.p
    if len(m) != prob.p:
        raise _InputError(f"--m needs {prob.p} values, got {len(m)}")
    specs = io.bregman_specs(d)
    gens = None
    if specs is not None:
        gens = [
            generator_from_dict(sp, blk.f.dim, blk.A.to_dense(), args.beta) if sp is not None else None
            for sp, blk in zip(specs, prob.blocks)
        ]
        if any(g is None for g in gens):
            defaults = default_generators(prob, args.beta, m)
            gens = [g if g is not None else dg for g, dg in zip(gens, defaults)]
    alpha = 1.0 if args.alpha is None else args.alpha
    return make_config(prob, args.beta, args.theta, alpha, m, generators=gens, **common)


def _summary(result, cert) -> List[str]:
    out = [f"status: {result.status}", f"iterations: {result.k}"]
    if result.message:
        out.append(f"message: {result.message}")
    best = result.best_iterate
    if best is not None:
        out.append(f"best k: {best.k}  max residual: {best.max_residual:.3e}")
        out.append("x: " + " | ".join(np.array2string(xi, precision=10) for xi in best.x))
        out.append("lambda_hat: " + np.array2string(best.lambda_hat, precision=10))
    c = result.constants
    if c is not None:
        out.append(f"certified: {c.certified}  min delta: {c.min_delta:.6g}")
    if cert is not None:
        out.append(f"certificate holds: {cert.holds}  min margin: {cert.min_margin:.6g}")
    return out


def cmd_solve(args) -> int:
    prob, d = _load(args.problem)
    try:
        cfg = _config(args, prob, d)
    except InfeasibleForBeta as exc:
        _err(f"{exc}; minimal beta estimate {exc.beta_min:.6g}")
        return EXIT_INFEASIBLE
    try:
        result = run(prob, cfg)
    except InfeasibleParams as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    if result.status == "infeasible_params":
        _err(result.message)
        return EXIT_INFEASIBLE

    trace = result.trace
    cert = None
    if result.constants.certified and trace is not None and len(trace.iterations) > 0:
        stat, feas, ndx, ndl = trace.arrays()
        cert = rate_certificate(stat, feas, ndx, ndl, result.constants)
    if args.trace:
        io.write_trace_csv(trace.records, args.trace, prob.p)
    if args.constants:
        io.write_constants_json(result.constants, args.constants)
    if args.cert:
        if cert is not None:
            io.write_certificate_json(cert, result.constants, args.cert)
        else:
            with open(args.cert, "w") as fh:
                json.dump({"holds": None, "constants": result.constants.to_dict()}, fh, indent=1)
                fh.write("\n")
    if args.plotdata and cert is not None:
        io.write_plotdata_tsv(cert, args.plotdata)
    lines = _summary(result, cert)
    print("\n".join(lines))
    if args.summary:
        Path(args.summary).write_text("\n".join(lines) + "\n")

    if result.status == "converged":
        return EXIT_OK
    if result.status == "max_iter":
        return EXIT_MAXITER
    _err(f"{result.status}: {result.message}")
    return EXIT_FAIL


def cmd_validate(args) -> int:
    prob, _ = _load(args.problem)
    rep = validate(prob, tol=args.tol)
    print("\n".join(rep.lines()))
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_certify(args) -> int:
    try:
        tr = io.read_trace_csv(args.trace)
        constants = io.read_constants_json(args.constants)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise _InputError(str(exc)) from None
    if tr["p"] != constants.p:
        raise _InputError(f"trace has {tr['p']} blocks but constants have {constants.p}")
    if len(tr["k"]) < 2:
        raise _InputError("trace has no iterations beyond k=0")
    try:
        cert = rate_certificate(
            tr["stat_res"][1:], tr["feas"][1:], tr["norm_dx"], tr["norm_dlambda"], constants
        )
    except UncertifiedRun as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    print("k\twitnessed_j\twitness_margin\tbest_margin")
    step = max(1, args.every)
    n = len(cert.ks)
    for idx in range(n):
        if idx % step == 0 or idx == n - 1:
            print(f"{cert.ks[idx]}\t{cert.witnessed_j[idx]}\t{cert.witness_margin[idx]:.6e}\t{cert.best_margin[idx]:.6e}")
    print(f"displacement sum {cert.displacement_sum:.6e} <= bound {cert.displacement_bound:.6e}")
    print(f"min margin: {cert.min_margin:.6e}  holds: {cert.holds}")
    return EXIT_OK if cert.holds else EXIT_FAIL


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.cmd == "solve":
            if not 0.0 < args.theta < 2.0:
                raise _InputError("theta out of (0,2)")
            return cmd_solve(args)
        if args.cmd == "validate":
            return cmd_validate(args)
        return cmd_certify(args)
    except _InputError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (ThetaOutOfRange, ValueError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
