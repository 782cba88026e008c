"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 1-5 and 10 share the Monte Carlo output of two ``montecarlo`` CLI
runs (N_s = 1000, benchmark configuration, seed 0) made with different
worker counts.  Tolerances are the stated ones; nothing here is tuned to
make a criterion pass.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from stmpc import cli
from stmpc.reachability import propagate_covariance
from stmpc.sets import (
    HPolytope,
    Zonotope,
    affine_map,
    contains,
    containment_margin,
    minkowski_sum,
    pontryagin_diff,
    zonotope_to_hpoly,
)
from stmpc.synthesis import dare_residual, lyapunov_residual
from stmpc.tightening import check_axioms
from stmpc.qp import solve_qp

from .test_qp import enumeration_oracle, random_problem

N_S = 1000
SEED = 0
EPS_PCT = 20.0
TABLE2 = {"pTTSMPC": 19.71, "pTTSMPC-en": 19.58, "pCTSMPC": 18.09, "pCTSMPC-en": 17.97}


def binom_sigma_pct(p, n):
    return 100.0 * math.sqrt(p * (1 - p) / n)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[acceptance {number:>2}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def mc_runs(tmp_path_factory):
    """Two identical ``montecarlo`` runs, with 1 and 2 workers."""
    base = tmp_path_factory.mktemp("acceptance")
    outs, saved = {}, os.environ.get("STMPC_THREADS")
    try:
        for threads in ("1", "2"):
            os.environ["STMPC_THREADS"] = threads
            out = base / f"threads{threads}"
            t0 = time.perf_counter()
            code = cli.main(["montecarlo", "--paper-example", "--runs", str(N_S), "--seed", str(SEED),
                             "--variants", "all", "--out", str(out)])
            outs[threads] = (code, out, time.perf_counter() - t0)
    finally:
        if saved is None:
            os.environ.pop("STMPC_THREADS", None)
        else:
            os.environ["STMPC_THREADS"] = saved
    return outs


@pytest.fixture(scope="module")
def metrics(mc_runs):
    code, out, _ = mc_runs["1"]
    assert code == cli.EXIT_OK
    return json.loads((out / "metrics.json").read_text())["results"]


@pytest.fixture(scope="module")
def cases(tmp_path_factory):
    out = tmp_path_factory.mktemp("cases")
    code = cli.main(["compare-init", "--paper-example", "--runs", str(N_S), "--seed", str(SEED), "--out", str(out)])
    assert code == cli.EXIT_OK
    return json.loads((out / "compare_init.json").read_text())["results"]


def test_criterion_01_feasibility(metrics, mc_runs, capsys):
    rf = {v: m["r_f"] for v, m in metrics.items()}
    wall = mc_runs["1"][2]
    ok = all(r == 100.0 for r in rf.values()) and len(rf) == 4 and wall < 600
    report(capsys, 1, ok, f"r_f={rf}, four variants in {wall:.0f} s")


def test_criterion_02_table2(metrics, capsys):
    rbar = {v: metrics[v]["r_bar"] for v in TABLE2}
    within = {v: abs(rbar[v] - TABLE2[v]) <= 3.0 for v in TABLE2}
    # sampling sigma of a single-instant ratio near 20 % at N_s = 1000
    sig = binom_sigma_pct(0.2, N_S)
    orders = {
        "pCTSMPC<=pTTSMPC": rbar["pCTSMPC"] <= rbar["pTTSMPC"] + 2 * sig,
        "pCTSMPC-en<=pTTSMPC-en": rbar["pCTSMPC-en"] <= rbar["pTTSMPC-en"] + 2 * sig,
        "pTTSMPC-en<=pTTSMPC": rbar["pTTSMPC-en"] <= rbar["pTTSMPC"] + 2 * sig,
        "pCTSMPC-en<=pCTSMPC": rbar["pCTSMPC-en"] <= rbar["pCTSMPC"] + 2 * sig,
    }
    ok = all(within.values()) and all(orders.values())
    detail = ", ".join(f"{v} {rbar[v]:.2f}% (ref {TABLE2[v]:.2f})" for v in TABLE2)
    report(capsys, 2, ok, f"{detail}; orderings {orders}")


def test_criterion_03_table3(cases, capsys):
    rbar = [cases[c]["r_bar"] for c in ("Case1", "Case2", "Case3", "Case4")]
    strict = rbar[0] > rbar[1] > rbar[2] > rbar[3]
    case4 = rbar[3] <= 0.5
    rmin = (cases["Case2"]["r_min"], cases["Case3"]["r_min"])
    ok = strict and case4 and rmin == (0.0, 0.0)
    detail = (f"r_bar Case1..4 = {[round(r, 2) for r in rbar]} (strict order {strict}), "
              f"Case4<=0.5% {case4}, r_min Case2/3 = {rmin}")
    report(capsys, 3, ok, detail)


def test_criterion_04_chance_constraints(metrics, capsys):
    bound = EPS_PCT + 3 * binom_sigma_pct(EPS_PCT / 100, N_S)
    worst = {v: max(m["r_v"]) for v, m in metrics.items()}
    ok = all(w <= bound for w in worst.values())
    report(capsys, 4, ok, f"max_t r_v(t) = {worst}, bound {bound:.2f}%")


def test_criterion_05_terminal_containment(metrics, capsys):
    frac = {v: m["terminal_in_Z"] for v, m in metrics.items()}
    ok = all(f >= 78.0 for f in frac.values())
    report(capsys, 5, ok, f"terminal error in Z: {frac} (>= 78%)")


def test_criterion_06_set_algebra(fitted, capsys):
    t0 = time.perf_counter()
    ctrl = fitted()
    A_cl, tubes, alpha = ctrl.synthesis_.A_cl, ctrl.tubes_, ctrl.chance_.alpha
    Ew, D = tubes.Ew, tubes.D
    checks = {}
    # error confidence boxes from the exact covariances
    Sig = propagate_covariance(A_cl, ctrl.system_.W, tubes.kmax + 1)
    boxes = [Zonotope.box(alpha * np.sqrt(np.diag(S))) for S in Sig]
    dirs = np.vstack([np.eye(2), -np.eye(2)])
    checks["lemma1"] = all(
        np.all(boxes[k + 1].support(dirs) <= minkowski_sum(affine_map(A_cl, boxes[k]), Ew).support(dirs) + 1e-8)
        for k in range(tubes.kmax)
    )
    Zh = zonotope_to_hpoly(tubes.Z)
    checks["nesting"] = all(
        contains(zonotope_to_hpoly(D[k + 1]), D[k], tol=1e-8) and contains(Zh, D[k + 1], tol=1e-8)
        for k in range(tubes.kmax)
    )
    checks["rpi"] = contains(Zh, minkowski_sum(affine_map(A_cl, tubes.Z), Ew), tol=1e-8)
    rng = np.random.default_rng(2024)
    lossless = True
    for _ in range(20):
        Z = Zonotope(rng.normal(size=2), rng.normal(size=(2, int(rng.integers(2, 7)))))
        P = zonotope_to_hpoly(Z)
        lossless &= all(abs(P.support(d) - Z.support(d)) <= 1e-8 for d in rng.normal(size=(10, 2)))
    checks["lossless"] = bool(lossless)
    adj = True
    for _ in range(100):
        lo = -rng.uniform(1, 3, size=2)
        P = HPolytope.from_box(lo, lo + rng.uniform(2, 6, size=2))
        B = Zonotope(rng.normal(scale=0.2, size=2), rng.normal(scale=0.3, size=(2, 3)))
        Z = Zonotope(rng.normal(scale=0.2, size=2), rng.normal(scale=0.3, size=(2, 3)))
        m1 = containment_margin(pontryagin_diff(P, B), Z)
        m2 = containment_margin(P, minkowski_sum(Z, B))
        adj &= abs(m1 - m2) <= 1e-10 and (m1 >= 0) == (m2 >= 0)
    checks["adjunction"] = bool(adj)
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 10
    report(capsys, 6, ok, f"{checks} in {elapsed:.1f} s")


def test_criterion_07_synthesis(fitted, bench_weights, capsys):
    ctrl = fitted()
    syn, sys_ = ctrl.synthesis_, ctrl.system_
    dare = dare_residual(sys_.A, sys_.B, bench_weights.Q, bench_weights.R, syn.S)
    lyap = lyapunov_residual(syn, bench_weights)
    rng = np.random.default_rng(7)
    a2 = 0.0
    for x in rng.uniform(-3, 3, size=(100, 2)):
        u = syn.K @ x
        xn = syn.A_cl @ x
        a2 = max(a2, abs(xn @ syn.P @ xn + x @ bench_weights.Q @ x + u @ bench_weights.R @ u - x @ syn.P @ x))
    ok = dare <= 1e-10 and lyap <= 1e-8 and a2 <= 1e-6
    report(capsys, 7, ok, f"DARE {dare:.2e}, Lyapunov {lyap:.2e}, A2 max {a2:.2e}")


def test_criterion_08_terminal_axioms(fitted, bench_weights, capsys):
    ctrl = fitted()
    t = ctrl.tightened_
    rep = check_axioms(t.Xf, ctrl.synthesis_, t.Cbar, t.Vbar, bench_weights, tol=1e-9)
    margins = {k: rep[k]["margin"] for k in ("A1_invariance", "A1_state", "A1_input")}
    ok = all(m >= -1e-9 for m in margins.values())
    report(capsys, 8, ok, f"A1 margins {margins}")


def test_criterion_09_qp(fitted, capsys):
    rng = np.random.default_rng(42)
    agree, worst_kkt, n = 0, 0.0, 0
    for i in range(200):
        p = random_problem(rng, with_eq=i % 4 == 0)
        ref = enumeration_oracle(p)
        if ref is None:
            try:
                solve_qp(p)
            except Exception:
                agree += 1
            continue
        res = solve_qp(p)
        agree += bool(np.max(np.abs(res.z - ref)) <= 1e-6)
        worst_kkt = max(worst_kkt, max(res.kkt_residuals(p).values()))
        n += 1
    # every QP solved along a closed-loop benchmark run
    ctrl = fitted("pTTSMPC-en")
    x = np.array([2.5, 2.8])
    for t in range(15):
        sol = ctrl.solve(x, t)
        p = ctrl.build_ocp(x, t, sol.lam)
        res = solve_qp(p, tol=ctrl.config_.qp_tol)
        worst_kkt = max(worst_kkt, max(res.kkt_residuals(p).values()))
        u = ctrl.control_law(x, sol)
        x = ctrl.system_.A @ x + ctrl.system_.B @ u
    ok = agree == 200 and worst_kkt <= 1e-6
    report(capsys, 9, ok, f"oracle agreement {agree}/200 ({n} feasible), worst KKT residual {worst_kkt:.2e}")


def test_criterion_10_determinism(mc_runs, capsys):
    (c1, o1, _), (c2, o2, _) = mc_runs["1"], mc_runs["2"]
    same = (o1 / "metrics.json").read_bytes() == (o2 / "metrics.json").read_bytes()
    ok = c1 == c2 == cli.EXIT_OK and same
    report(capsys, 10, ok, f"metrics.json byte-identical with STMPC_THREADS=1 vs 2: {same}")
