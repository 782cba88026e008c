import numpy as np
import pytest

from stmpc.exceptions import EmptyTightening, NoFiniteDetermination
from stmpc.sets import HPolytope, Zonotope
from stmpc.synthesis import CostWeights
from stmpc.tightening import (
    TightenedSchedule,
    check_axioms,
    max_output_admissible_set,
    tighten_pair,
)

# X - Z and U - K Z for the benchmark, limit supports in 50-digit arithmetic
CBAR_OFFSETS = (1.6960381741296114, 2.8484734343591197)
VBAR_OFFSET = 0.15447783887653586


def rot(theta, r=1.0):
    c, s = np.cos(theta), np.sin(theta)
    return r * np.array([[c, -s], [s, c]])


def test_box_tightening():
    X = HPolytope.from_box([-2, -3], [2, 3])
    U = HPolytope.from_box([-1], [1])
    D = Zonotope.box([0.5, 0.25])
    KD = Zonotope.box([0.1])
    C, V = tighten_pair(X, U, D, KD)
    assert C.support(np.array([1.0, 0.0])) == pytest.approx(1.5)
    assert C.support(np.array([0.0, -1.0])) == pytest.approx(2.75)
    assert V.support(np.array([1.0])) == pytest.approx(0.9)


def test_empty_tightening_names_set_and_facet():
    X = HPolytope.from_box([-1, -1], [1, 1])
    with pytest.raises(EmptyTightening) as err:
        tighten_pair(X, HPolytope.from_box([-1], [1]), Zonotope.box([2.0, 0.1]), Zonotope.box([0.1]), "bar")
    assert err.value.which == "Cbar"
    assert err.value.facet in (0, 1)
    assert err.value.margin == pytest.approx(-1.0)


def test_benchmark_constant_sets(fitted):
    tight = fitted().tightened_
    E = np.eye(2)
    np.testing.assert_allclose(tight.Cbar.support(E), CBAR_OFFSETS, atol=1e-5)
    assert np.all(tight.Cbar.support(E) <= np.array(CBAR_OFFSETS) + 1e-12)
    assert tight.Vbar.support(np.array([1.0])) == pytest.approx(VBAR_OFFSET, abs=1e-5)


def test_time_varying_sets_shrink(fitted):
    tight = fitted().tightened_
    d = np.array([1.0, 0.0])
    vals = [C.support(d) for C in tight.Ct]
    assert np.all(np.diff(vals) <= 1e-12)
    assert vals[-1] >= tight.Cbar.support(d) - 1e-12
    assert tight.state_set(10 ** 6) is tight.Ct[-1]
    assert tight.state_set(3, "constant") is tight.Cbar


def test_scalar_moas():
    # s+ = 0.5 s with |s| <= 1 and |-0.5 s| <= 0.2: Xf = [-0.4, 0.4] at once
    Xf, steps = max_output_admissible_set(
        np.array([[0.5]]), HPolytope.from_box([-1], [1]), HPolytope.from_box([-0.2], [0.2]), np.array([[-0.5]])
    )
    assert steps == 0
    assert Xf.support(np.array([1.0])) == pytest.approx(0.4)
    assert Xf.support(np.array([-1.0])) == pytest.approx(0.4)


def _admissible_forever(A, K, C, V, x, horizon=300, tol=1e-9):
    for _ in range(horizon):
        if not (C.contains_point(x, tol) and V.contains_point(K @ x, tol)):
            return False
        x = A @ x
    return True


def test_moas_rotation_against_trajectory_oracle():
    A = rot(np.pi / 5, 0.95)
    K = np.array([[0.3, -0.2]])
    C = HPolytope.from_box([-1, -2], [1, 2])
    V = HPolytope.from_box([-0.5], [0.5])
    Xf, steps = max_output_admissible_set(A, C, V, K)
    assert steps > 0
    rng = np.random.default_rng(0)
    # every point inside is admissible forever
    for _ in range(200):
        w = rng.dirichlet(np.ones(len(Xf.vertices())))
        assert _admissible_forever(A, K, C, V, w @ Xf.vertices())
    # maximality: pushing any vertex outward leaves the admissible set
    for v in Xf.vertices():
        assert not _admissible_forever(A, K, C, V, 1.01 * v)


def test_moas_unstable_loop_never_determines():
    with pytest.raises(NoFiniteDetermination):
        max_output_admissible_set(
            np.array([[1.0]]) * 1.0, HPolytope.from_box([-1], [1]), HPolytope.from_box([-1], [1]),
            np.zeros((1, 1)), iter_cap=10, tol=-1.0,
        )


def test_benchmark_axioms(fitted, bench_weights):
    ctrl = fitted()
    t = ctrl.tightened_
    rep = check_axioms(t.Xf, ctrl.synthesis_, t.Cbar, t.Vbar, bench_weights)
    assert rep["passed"], rep
    for key in ("A1_invariance", "A1_state", "A1_input"):
        assert rep[key]["margin"] >= -1e-9
    # vertex-wise invariance check (2-D enumeration)
    for v in t.Xf.vertices():
        assert t.Xf.contains_point(ctrl.synthesis_.A_cl @ v, tol=1e-9)


def test_inflated_terminal_set_fails_axioms(fitted, bench_weights):
    ctrl = fitted()
    t = ctrl.tightened_
    big = HPolytope(t.Xf.H, 1.5 * t.Xf.h)
    rep = check_axioms(big, ctrl.synthesis_, t.Cbar, t.Vbar, bench_weights)
    assert not rep["passed"]
    assert not (rep["A1_state"]["passed"] and rep["A1_input"]["passed"])


def test_wrong_terminal_weight_fails_a2(fitted):
    ctrl = fitted()
    t = ctrl.tightened_
    rep = check_axioms(t.Xf, ctrl.synthesis_, t.Cbar, t.Vbar, CostWeights(np.eye(2), np.eye(1)))
    assert not rep["A2_lyapunov"]["passed"]


def test_round_trip(fitted):
    t = fitted().tightened_
    assert TightenedSchedule.from_dict(t.to_dict()).to_dict() == t.to_dict()
