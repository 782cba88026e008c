import numpy as np
import pytest

from stmpc.exceptions import NoConvergence, OutOfRange
from stmpc.reachability import (
    ChanceSpec,
    build_relaxed_prs,
    gaussian_confidence_box,
    mrpi_outer_approx,
    propagate_covariance,
    quantile_std_normal,
)
from stmpc.sets import Zonotope, affine_map, contains, minkowski_sum, zonotope_to_hpoly

# 200-step bisection on erfc at 50 digits (mpmath)
Q80 = 0.84162123357291421
Q90 = 1.2815515655446005
Q95 = 1.6448536269514727

# benchmark tube supports along +e1 / +e2, summed in 50-digit arithmetic
D_SUPPORT = {
    0: (0.033664849342916568, 0.033664849342916568),
    1: (0.12572435095556732, 0.075016462562616917),
    2: (0.18928821390406009, 0.10234773454364388),
    5: (0.27356274448904786, 0.13849042424463802),
}
D_LIMIT = (0.30396182587038857, 0.15152656564088026)


def test_quantiles():
    assert quantile_std_normal(0.8) == pytest.approx(Q80, abs=1e-14)
    assert quantile_std_normal(0.9) == pytest.approx(Q90, abs=1e-14)
    assert quantile_std_normal(0.5) == pytest.approx(0.0, abs=1e-15)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(OutOfRange):
            quantile_std_normal(bad)


def test_quantile_conventions():
    assert ChanceSpec(0.2).alpha == pytest.approx(Q80, abs=1e-14)
    assert ChanceSpec(0.2, "two-sided").alpha == pytest.approx(Q90, abs=1e-14)
    assert ChanceSpec(0.2, "bonferroni", n=2).alpha == pytest.approx(Q95, abs=1e-14)
    with pytest.raises(OutOfRange):
        ChanceSpec(1.2)
    with pytest.raises(ValueError):
        ChanceSpec(0.2, "whatever")


def test_confidence_box():
    Ew = gaussian_confidence_box(np.diag([0.04 ** 2, 0.09]), ChanceSpec(0.2))
    np.testing.assert_allclose(Ew.interval_hull()[1], [Q80 * 0.04, Q80 * 0.3], rtol=1e-14)
    # eps > 1/2 would give a negative quantile; the box collapses instead
    assert np.all(gaussian_confidence_box(np.eye(2), ChanceSpec(0.7)).G == 0)


def test_covariance_recursion():
    A = np.array([[0.5, 0.1], [0.0, 0.3]])
    W = np.diag([1.0, 2.0])
    Sig = propagate_covariance(A, W, 3)
    assert len(Sig) == 4
    np.testing.assert_allclose(Sig[1], A @ W @ A.T + W)
    np.testing.assert_allclose(Sig[3], A @ Sig[2] @ A.T + W)


def test_benchmark_tube_supports(fitted):
    tubes = fitted().tubes_
    assert tubes.kmax == 32
    E = np.eye(2)
    for k, vals in D_SUPPORT.items():
        np.testing.assert_allclose(tubes.D[k].support(E), vals, rtol=1e-12)
    # stopping at a step change of conv_tol leaves a geometric tail of at most conv_tol / (1 - rho)
    rho = fitted().synthesis_.rho
    np.testing.assert_allclose(tubes.D[-1].support(E), D_LIMIT, rtol=0, atol=1e-7 / (1 - rho))
    # Z is an outer approximation of the limit within the requested accuracy
    z = tubes.Z.support(E)
    assert np.all(z >= np.array(D_LIMIT) - 1e-12)
    np.testing.assert_allclose(z, D_LIMIT, rtol=2e-5)


def test_nesting_and_invariance(fitted):
    """D_k in D_{k+1} in Z, Lemma-1 style step, and A_cl Z + Ew in Z."""
    ctrl = fitted()
    A_cl, tubes = ctrl.synthesis_.A_cl, ctrl.tubes_
    Ew, D = tubes.Ew, tubes.D
    Zh = zonotope_to_hpoly(tubes.Z)
    for k in range(tubes.kmax):
        Dk1 = zonotope_to_hpoly(D[k + 1])
        assert contains(Dk1, D[k], tol=1e-8)
        assert contains(Dk1, minkowski_sum(affine_map(A_cl, D[k]), Ew), tol=1e-8)
        assert contains(Zh, D[k + 1], tol=1e-8)
    assert contains(Zh, minkowski_sum(affine_map(A_cl, tubes.Z), Ew), tol=1e-8)


def test_error_covariance_inside_tube_ellipse(fitted):
    """Per-axis alpha-sigma of the k-step error never exceeds the tube half-width."""
    tubes = fitted().tubes_
    alpha = fitted().chance_.alpha
    for k, Sig in enumerate(tubes.Sigma):
        half = tubes.D[k].interval_hull()[1]
        assert np.all(alpha * np.sqrt(np.diag(Sig)) <= half + 1e-12)


def test_mrpi_scalar_closed_form():
    # e+ = a e + w, |w| <= 1: Z = [-1/(1-a), 1/(1-a)]
    Z, s, alpha = mrpi_outer_approx(np.array([[0.5]]), Zonotope.box([1.0]), eps_approx=1e-6)
    assert alpha <= 1e-6
    assert Z.support(np.array([1.0])) == pytest.approx(2.0, rel=1e-5)
    assert Z.support(np.array([1.0])) >= 2.0


def test_degenerate_inputs():
    Z, s, alpha = mrpi_outer_approx(np.eye(2) * 0.5, Zonotope.point(np.zeros(2)))
    assert (s, alpha) == (1, 0.0)
    with pytest.raises(NoConvergence):
        build_relaxed_prs(np.array([[1.0]]), Zonotope.box([1.0]), np.eye(1), kcap=20)


def test_schedule_round_trip(fitted):
    from stmpc.reachability import TubeSchedule

    tubes = fitted().tubes_
    again = TubeSchedule.from_dict(tubes.to_dict())
    assert again.to_dict() == tubes.to_dict()
    assert again.tube(1000) is again.D[again.kmax]
