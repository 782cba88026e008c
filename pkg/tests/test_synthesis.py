import numpy as np
import pytest

from stmpc.exceptions import DimensionMismatch, NonConvergent, NonPSD, Unstable
from stmpc.synthesis import (
    CostWeights,
    SystemModel,
    dare_residual,
    lqr_gain,
    lyapunov_residual,
    solve_dare,
    solve_discrete_lyapunov,
)

from .conftest import scalar_system

# 50-digit Riccati iteration (mpmath), rounded to 15 significant digits
S_BENCH = np.array([[1.90740806850942, -5.05621823072585], [-5.05621823072585, 39.5447937808823]])
K_BENCH = np.array([[-0.285775694253518, 0.491024692323601]])
RHO_BENCH = 0.642368701835


def test_scalar_golden_ratio():
    # a = b = q = r = 1: S^2 - S - 1 = 0
    S = solve_dare(scalar_system(1.0, 1.0), CostWeights(np.eye(1), np.eye(1)))
    assert S[0, 0] == pytest.approx((1 + np.sqrt(5)) / 2, abs=1e-12)


def test_zero_dynamics_gives_zero_gain():
    syn = lqr_gain(scalar_system(0.0, 1.0), CostWeights(np.eye(1), np.eye(1)))
    assert syn.S[0, 0] == pytest.approx(1.0)
    assert syn.K[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert syn.rho == 0.0


def test_lyapunov_scalar():
    # p = 1 / (1 - a^2) for a = 1/2
    P = solve_discrete_lyapunov(np.array([[0.5]]), np.eye(1))
    assert P[0, 0] == pytest.approx(4 / 3, rel=1e-14)


def test_lyapunov_rejects_unstable():
    with pytest.raises(NonConvergent):
        solve_discrete_lyapunov(np.array([[1.5]]), np.eye(1))


def test_benchmark_against_extended_precision(bench_system, bench_weights):
    syn = lqr_gain(bench_system, bench_weights)
    np.testing.assert_allclose(syn.S, S_BENCH, rtol=1e-11)
    np.testing.assert_allclose(syn.K, K_BENCH, rtol=1e-11)
    np.testing.assert_allclose(syn.P, syn.S, rtol=1e-10)
    assert syn.rho == pytest.approx(RHO_BENCH, abs=1e-11)


def test_residuals(bench_system, bench_weights):
    syn = lqr_gain(bench_system, bench_weights)
    assert dare_residual(bench_system.A, bench_system.B, bench_weights.Q, bench_weights.R, syn.S) <= 1e-10
    assert lyapunov_residual(syn, bench_weights) <= 1e-8


def test_terminal_cost_decrease_identity(bench_system, bench_weights):
    syn = lqr_gain(bench_system, bench_weights)
    rng = np.random.default_rng(0)
    Q, R, P, K = bench_weights.Q, bench_weights.R, syn.P, syn.K
    for x in rng.uniform(-3, 3, size=(100, 2)):
        u = K @ x
        xn = syn.A_cl @ x
        val = xn @ P @ xn + x @ Q @ x + u @ R @ u - x @ P @ x
        assert abs(val) <= 1e-6


def test_unstabilizable_pair_fails():
    with pytest.raises((NonConvergent, Unstable)):
        lqr_gain(scalar_system(2.0, 0.0), CostWeights(np.eye(1), np.eye(1)))


def test_model_validation():
    with pytest.raises(DimensionMismatch):
        SystemModel(np.eye(2), np.ones((3, 1)), np.eye(2))
    with pytest.raises(NonPSD):
        SystemModel(np.eye(2), np.ones((2, 1)), -np.eye(2))
    with pytest.raises(ValueError):
        CostWeights(np.eye(2), np.zeros((1, 1)))
