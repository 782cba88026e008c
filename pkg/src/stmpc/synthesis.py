"""LQR synthesis: Riccati fixed point, feedback gain and terminal cost.

Sign convention: ``u = K x`` with the minus sign absorbed into ``K``, so the
closed loop is ``A + B K``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, check_pd, check_psd, check_square
from .exceptions import DimensionMismatch, NonConvergent, Unstable


@dataclass(frozen=True)
class SystemModel:
    """Linear system ``x+ = A x + B u + w`` with ``w ~ N(0, W)``."""

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    dist: str = "gaussian"

    def __post_init__(self):
        A = check_square(self.A, "A")
        n = A.shape[0]
        B = as_matrix(self.B, "B")
        if B.shape[0] != n:
            # accept a flat input column for single-input systems
            if B.size == n:
                B = B.reshape(n, 1)
            else:
                raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {n}x{n}")
        W = check_psd(self.W, "W")
        if W.shape != (n, n):
            raise DimensionMismatch(f"W must be {n}x{n}, got {W.shape}")
        if self.dist != "gaussian":
            raise ValueError(f"unsupported disturbance distribution {self.dist!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "W", W)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class CostWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", check_pd(self.Q, "Q"))
        object.__setattr__(self, "R", check_pd(self.R, "R"))


@dataclass(frozen=True)
class Synthesis:
    K: np.ndarray
    A_cl: np.ndarray
    P: np.ndarray
    rho: float
    S: np.ndarray = field(repr=False, default=None)


def dare_residual(A, B, Q, R, S):
    """Infinity-norm residual of the discrete algebraic Riccati equation at ``S``."""
    BtSA = B.T @ S @ A
    res = A.T @ S @ A - BtSA.T @ np.linalg.solve(R + B.T @ S @ B, BtSA) + Q - S
    return np.abs(res).max()


def solve_dare(sys, w, tol=1e-12, max_iter=10000):
    """Solve the DARE by Riccati fixed-point iteration started at ``S = Q``.

    Parameters
    ----------
    sys : SystemModel
    w : CostWeights
    tol : float
        Stop once the fixed-point residual drops to ``tol`` (infinity norm).
    max_iter : int

    Returns
    -------
    S : ndarray of shape (n, n)

    Raises
    ------
    NonConvergent
        If the residual is still above ``tol`` after ``max_iter`` sweeps,
        typically because ``(A, B)`` is not stabilizable.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A, B, Q, R = sys.A, sys.B, w.Q, w.R
    if Q.shape != (sys.n, sys.n) or R.shape != (sys.m, sys.m):
        raise DimensionMismatch("cost weights do not match system dimensions")
    S = Q.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            BtSA = B.T @ S @ A
            S_next = A.T @ S @ A - BtSA.T @ np.linalg.solve(R + B.T @ S @ B, BtSA) + Q
            S_next = 0.5 * (S_next + S_next.T)
            if not np.all(np.isfinite(S_next)):
                break
            S = S_next
            if dare_residual(A, B, Q, R, S) <= tol:
                return S
    with np.errstate(over="ignore", invalid="ignore"):
        res = dare_residual(A, B, Q, R, S) if np.all(np.isfinite(S)) else np.inf
    raise NonConvergent(f"Riccati iteration residual {res:.3e} > {tol:.1e} after {max_iter} iterations")


def solve_discrete_lyapunov(A_cl, M, tol=1e-14, max_iter=64):
    """Return ``P = sum_i (A_cl^T)^i M A_cl^i`` by the doubling recursion."""
    A_cl = check_square(A_cl, "A_cl")
    P = check_psd(M, "M", tol=1e-9).copy()
    Ak = A_cl.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            inc = Ak.T @ P @ Ak
            P = P + inc
            P = 0.5 * (P + P.T)
            Ak = Ak @ Ak
            if not np.all(np.isfinite(P)):
                break
            if np.abs(inc).max() <= tol * max(1.0, np.abs(P).max()):
                return P
    raise NonConvergent("Lyapunov doubling did not converge; is A_cl Schur stable?")


def lyapunov_residual(syn, w):
    A_cl, P, K = syn.A_cl, syn.P, syn.K
    return np.abs(A_cl.T @ P @ A_cl - P + w.Q + K.T @ w.R @ K).max()


def lqr_gain(sys, w, tol=1e-12, max_iter=10000):
    """Infinite-horizon LQR gain, closed loop and terminal cost matrix."""
    S = solve_dare(sys, w, tol=tol, max_iter=max_iter)
    A, B, R = sys.A, sys.B, w.R
    K = -np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
    A_cl = A + B @ K
    rho = float(np.abs(np.linalg.eigvals(A_cl)).max())
    if rho >= 1.0:
        raise Unstable(f"closed-loop spectral radius {rho:.6f} >= 1")
    P = solve_discrete_lyapunov(A_cl, w.Q + K.T @ R @ K)
    return Synthesis(K=K, A_cl=A_cl, P=P, rho=rho, S=S)
