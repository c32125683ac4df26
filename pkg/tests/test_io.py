import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SHIPPED, data_path, shipped
from nepj_admm.errors import InvalidProblem
from nepj_admm.functions import BoxIndicator, FiniteSetIndicator, L1Norm, Quadratic
from nepj_admm.io import (
    bregman_specs,
    dump_problem,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    read_constants_json,
    read_trace_csv,
    trace_columns,
    write_certificate_json,
    write_constants_json,
    write_plotdata_tsv,
    write_trace_csv,
)
from nepj_admm.diagnostics import rate_certificate
from nepj_admm.params import RateConstants, auto_tune
from nepj_admm.problem import Problem
from nepj_admm.solver import run

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True)


def _same(a: Problem, b: Problem):
    assert a.b.tobytes() == b.b.tobytes()
    assert a.lower_bound_hint == b.lower_bound_hint
    for x, y in zip(a.blocks, b.blocks):
        assert x.A.to_dense().tobytes() == y.A.to_dense().tobytes()
        assert x.f.to_dict() == y.f.to_dict()


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_round_trip(name, tmp_path):
    prob = shipped(name)
    dump_problem(prob, tmp_path / "p.json")
    _same(prob, load_problem(tmp_path / "p.json"))


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6), st.floats(1e-6, 10.0), st.lists(finite, min_size=2, max_size=2))
def test_round_trip_bit_exact(vals, w, b):
    A1 = np.array(vals[:4]).reshape(2, 2)
    A2 = np.array(vals[4:]).reshape(2, 1)
    prob = Problem(
        [
            (L1Norm(w, 2), A1),
            (BoxIndicator([-1.0, vals[0]], [1.0, vals[0] + 1.0]), np.eye(2)),
            (FiniteSetIndicator([[vals[1], vals[2]], [0.1, 0.3]]), np.eye(2)),
            (Quadratic([[2.0]], [vals[5]], vals[3]), A2),
        ],
        b,
        lower_bound_hint=vals[4],
    )
    back = problem_from_dict(json.loads(json.dumps(problem_to_dict(prob))))
    _same(prob, back)


def test_malformed_problem():
    with pytest.raises(InvalidProblem):
        problem_from_dict({"blocks": []})
    with pytest.raises(InvalidProblem):
        problem_from_dict({"b": [1], "blocks": [{"A": [[1]]}]})


def test_bregman_specs():
    d = json.loads(data_path("qp2").read_text())
    assert bregman_specs(d) is None
    d["bregman"] = {"kind": "euclidean", "m": 3}
    d["blocks"][1]["bregman"] = {"kind": "diagonal", "weights": [2]}
    assert bregman_specs(d) == [{"kind": "euclidean", "m": 3}, {"kind": "diagonal", "weights": [2]}]


def _certified_run(prob, n=40):
    return run(prob, auto_tune(prob, 100.0, 1.0, max_iter=n, rho_tol=0))


def test_trace_csv_round_trip(tmp_path, lasso3):
    res = _certified_run(lasso3)
    path = tmp_path / "t.csv"
    write_trace_csv(res.trace.records, path, 3)
    header = path.read_text().splitlines()[0].split(",")
    assert header == trace_columns(3)
    assert header[:5] == ["k", "L_aug", "eta", "L_hat", "feas"]
    assert header[-6:] == ["check_descent", "check_dualrec", "check_thetabound", "check_potdescent", "check_floor", "check_feasid"]
    tr = read_trace_csv(path)
    assert list(tr["k"]) == list(range(41))
    stat, feas, ndx, ndl = res.trace.arrays()
    assert tr["stat_res"][1:].tobytes() == stat.tobytes()
    assert tr["feas"][1:].tobytes() == feas.tobytes()
    assert tr["norm_dx"].tobytes() == ndx.tobytes()
    assert tr["norm_dlambda"].tobytes() == ndl.tobytes()
    # k = 0 row carries blank check cells
    assert np.isnan(tr["check_descent"][0]) and np.all(tr["check_descent"][1:] == 1)


def test_trace_bytes_deterministic(tmp_path, toy):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace_csv(_certified_run(toy).trace.records, a, 2)
    write_trace_csv(_certified_run(toy).trace.records, b, 2)
    assert a.read_bytes() == b.read_bytes()


def test_bad_trace(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("k,foo\n0,1\n")
    with pytest.raises(ValueError):
        read_trace_csv(p)


def test_constants_and_certificate_files(tmp_path, qp2):
    res = _certified_run(qp2)
    write_constants_json(res.constants, tmp_path / "c.json")
    C = read_constants_json(tmp_path / "c.json")
    assert C == res.constants and isinstance(C, RateConstants)
    cert = rate_certificate(*res.trace.arrays(), res.constants)
    write_certificate_json(cert, res.constants, tmp_path / "cert.json")
    d = json.loads((tmp_path / "cert.json").read_text())
    assert d["holds"] is True and d["final"]["k"] == 40
    assert read_constants_json(tmp_path / "cert.json") == res.constants
    write_plotdata_tsv(cert, tmp_path / "plot.tsv")
    lines = (tmp_path / "plot.tsv").read_text().splitlines()
    assert lines[0] == "k\tsqrt_k_times_min_residual\trate_bound" and len(lines) == 41
    vals = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:]])
    assert np.all(vals[:, 1] <= vals[:, 2])
