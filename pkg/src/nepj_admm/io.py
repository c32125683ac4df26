"""Problem JSON, trace CSV, certificate JSON and plot-data TSV.

Problem files follow::

    {"b": [...],
     "blocks": [{"A": [[...]], "f": {"kind": "...", ...}, "bregman": {...}}],
     "lower_bound_hint": number | null,
     "bregman": {...}}

``bregman`` (per block or top level) is optional and selects the generator
used by the CLI. Matrices are row-major. Floats are written with ``repr``
so files round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .diagnostics import CSV_CHECKS, IterationRecord, RateCertificate
from .errors import InvalidProblem
from .functions import function_from_dict
from .params import RateConstants
from .problem import Problem

__all__ = [
    "problem_from_dict",
    "problem_to_dict",
    "load_problem",
    "dump_problem",
    "bregman_specs",
    "trace_columns",
    "write_trace_csv",
    "read_trace_csv",
    "write_constants_json",
    "read_constants_json",
    "certificate_to_dict",
    "write_certificate_json",
    "write_plotdata_tsv",
]

PathLike = Union[str, Path]


def problem_from_dict(d: dict) -> Problem:
    if not isinstance(d, dict) or "blocks" not in d or "b" not in d:
        raise InvalidProblem('problem JSON needs top-level "b" and "blocks"')
    blocks = []
    for i, blk in enumerate(d["blocks"]):
        if "A" not in blk or "f" not in blk:
            raise InvalidProblem(f'block {i + 1} needs "A" and "f"')
        A = np.array(blk["A"], dtype=float, ndmin=2)
        blocks.append((function_from_dict(blk["f"], dim=A.shape[1]), A))
    hint = d.get("lower_bound_hint")
    return Problem(blocks, d["b"], lower_bound_hint=None if hint is None else float(hint))


def problem_to_dict(prob: Problem, bregman: Optional[Sequence[Optional[dict]]] = None) -> dict:
    blocks = []
    for i, blk in enumerate(prob.blocks):
        entry = {"A": blk.A.to_dense().tolist(), "f": blk.f.to_dict()}
        if bregman is not None and bregman[i] is not None:
            entry["bregman"] = dict(bregman[i])
        blocks.append(entry)
    return {"b": prob.b.tolist(), "blocks": blocks, "lower_bound_hint": prob.lower_bound_hint}


def _read_json(path: PathLike) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_problem(path: PathLike) -> Problem:
    return problem_from_dict(_read_json(path))


def dump_problem(prob: Problem, path: PathLike, bregman=None) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(prob, bregman), fh, indent=1)
        fh.write("\n")


def bregman_specs(d: dict) -> Optional[List[Optional[dict]]]:
    """Per-block generator descriptions of a problem dict, or ``None``."""
    top = d.get("bregman")
    specs = [blk.get("bregman", top) for blk in d["blocks"]]
    return None if all(s is None for s in specs) else specs


def trace_columns(p: int) -> List[str]:
    return (
        ["k", "L_aug", "eta", "L_hat", "feas"]
        + [f"stat_res_{i}" for i in range(1, p + 1)]
        + [f"norm_dx_{i}" for i in range(1, p + 1)]
        + ["norm_dlambda", "theta_lambda", "u_norm"]
        + [c for c, _ in CSV_CHECKS]
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def _row(rec: IterationRecord) -> List[str]:
    row = [str(rec.k), _fmt(rec.L_aug), _fmt(rec.eta), _fmt(rec.L_hat), _fmt(rec.feas)]
    row += [_fmt(v) for v in rec.stat_res]
    row += [_fmt(v) for v in rec.norm_dx]
    row += [_fmt(rec.norm_dlambda), _fmt(rec.theta_lambda), _fmt(rec.u_norm)]
    # a check that was not evaluated (k = 0, check level off) is left blank
    row += ["" if name not in rec.checks else str(int(rec.checks[name].holds)) for _, name in CSV_CHECKS]
    return row


def write_trace_csv(records: Sequence[IterationRecord], path: PathLike, p: int) -> None:
    """One row per iteration including the ``k = 0`` seed row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_columns(p))
        for rec in records:
            w.writerow(_row(rec))


def read_trace_csv(path: PathLike) -> Dict[str, np.ndarray]:
    """Columns of a trace CSV as arrays, plus the stacked ``stat_res`` and
    ``norm_dx`` matrices (rows indexed by ``k``)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty trace")
        rows = [r for r in reader if r]
    p = sum(1 for h in header if h.startswith("stat_res_"))
    if p < 2 or header != trace_columns(p):
        raise ValueError(f"{path}: unexpected trace columns")
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        if name == "k":
            cols[name] = np.array([int(v) for v in vals], dtype=int)
        else:
            cols[name] = np.array([float(v) if v != "" else math.nan for v in vals])
    if len(rows) == 0 or cols["k"][0] != 0 or np.any(np.diff(cols["k"]) != 1):
        raise ValueError(f"{path}: trace must start at k=0 with consecutive iterations")
    cols["stat_res"] = np.column_stack([cols[f"stat_res_{i}"] for i in range(1, p + 1)])
    cols["norm_dx"] = np.column_stack([cols[f"norm_dx_{i}"] for i in range(1, p + 1)])
    cols["p"] = p
    return cols


def write_constants_json(constants: RateConstants, path: PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(constants.to_dict(), fh, indent=1)
        fh.write("\n")


def read_constants_json(path: PathLike) -> RateConstants:
    """Accepts a bare constants file or a certificate file embedding one."""
    d = _read_json(path)
    if "constants" in d:
        d = d["constants"]
    return RateConstants.from_dict(d)


def certificate_to_dict(cert: RateCertificate, constants: RateConstants) -> dict:
    return {
        "holds": cert.holds,
        "min_margin": cert.min_margin,
        "delta_L0": cert.delta_L0,
        "rate_constant": cert.rate_constant,
        "displacement_sum": cert.displacement_sum,
        "displacement_bound": cert.displacement_bound,
        "iterations": int(cert.ks[-1]),
        "final": {
            "k": int(cert.ks[-1]),
            "witnessed_j": int(cert.witnessed_j[-1]),
            "R_bounds": cert.R_bounds[-1].tolist(),
            "feas_bound": float(cert.feas_bounds[-1]),
            "best_R": cert.best_R[-1].tolist(),
            "best_feas": float(cert.best_feas[-1]),
        },
        "constants": constants.to_dict(),
    }


def write_certificate_json(cert: RateCertificate, constants: RateConstants, path: PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(certificate_to_dict(cert, constants), fh, indent=1)
        fh.write("\n")


def write_plotdata_tsv(cert: RateCertificate, path: PathLike) -> None:
    """Columns ``k``, ``sqrt_k_times_min_residual``, ``rate_bound``."""
    with open(path, "w") as fh:
        fh.write("k\tsqrt_k_times_min_residual\trate_bound\n")
        for k, v in zip(cert.ks, cert.sqrt_k_best_max):
            fh.write(f"{int(k)}\t{_fmt(v)}\t{_fmt(cert.rate_constant)}\n")
