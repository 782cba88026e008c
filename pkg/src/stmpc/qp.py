"""Dense strictly convex QP solver (Goldfarb-Idnani dual active set).

Solves::

    min  1/2 z' P z + q' z
    s.t. G z <= g,  E z = e

with ``P`` positive definite.  The dual method starts from the unconstrained
minimizer and adds violated constraints one at a time, so it needs no
feasible starting point and certifies infeasibility when the dual step is
unbounded.  The most violated constraint enters next; ties go to the lowest
index, which keeps runs bit-reproducible.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .exceptions import QPInfeasible, QPMaxIterations

_EPS = 1e-13


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    G: np.ndarray
    g: np.ndarray
    E: np.ndarray = None
    e: np.ndarray = None

    def __post_init__(self):
        d = self.P.shape[0]
        self.q = np.asarray(self.q, dtype=float).reshape(d)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, d)
        self.g = np.asarray(self.g, dtype=float).reshape(-1)
        if self.E is None:
            self.E = np.zeros((0, d))
            self.e = np.zeros(0)
        self.E = np.asarray(self.E, dtype=float).reshape(-1, d)
        self.e = np.asarray(self.e, dtype=float).reshape(-1)

    @property
    def n_vars(self):
        return self.P.shape[0]

    def objective(self, z):
        return 0.5 * z @ self.P @ z + self.q @ z


@dataclass
class QpResult:
    z: np.ndarray
    status: str
    mu: np.ndarray
    nu: np.ndarray
    active: list
    iterations: int

    def kkt_residuals(self, p):
        """Stationarity, primal feasibility, complementarity and dual sign residuals."""
        stat = p.P @ self.z + p.q + p.G.T @ self.mu + p.E.T @ self.nu
        slack = p.G @ self.z - p.g
        return {
            "stationarity": float(np.abs(stat).max(initial=0.0)),
            "primal": float(max(slack.max(initial=0.0), np.abs(p.E @ self.z - p.e).max(initial=0.0))),
            "complementarity": float(np.abs(self.mu * slack).max(initial=0.0)),
            "dual": float(max(0.0, -self.mu.min(initial=0.0))),
        }


def inverse_cholesky_factor(P):
    """``J = L^{-T}`` for ``P = L L'``; cache it when ``P`` is reused."""
    L = cholesky(P, lower=True)
    return solve_triangular(L, np.eye(P.shape[0]), lower=True).T


def _reflect(a, b, c, s):
    return c * a + s * b, s * a - c * b


def _add_constraint(J, R, d, iq):
    n = J.shape[0]
    for j in range(n - 1, iq, -1):
        h = np.hypot(d[j - 1], d[j])
        if h == 0.0:
            continue
        c, s = d[j - 1] / h, d[j] / h
        d[j - 1], d[j] = h, 0.0
        J[:, j - 1], J[:, j] = _reflect(J[:, j - 1], J[:, j], c, s)
    R[: iq + 1, iq] = d[: iq + 1]


def _delete_constraint(J, R, qq, iq):
    """Drop active column ``qq`` of ``R`` (``iq`` columns in use); returns new count."""
    R[:, qq : iq - 1] = R[:, qq + 1 : iq]
    R[:, iq - 1] = 0.0
    iq -= 1
    for j in range(qq, iq):
        a, b = R[j, j], R[j + 1, j]
        h = np.hypot(a, b)
        if h == 0.0:
            continue
        c, s = a / h, b / h
        R[j, j], R[j + 1, j] = h, 0.0
        if j + 1 < iq:
            R[j, j + 1 : iq], R[j + 1, j + 1 : iq] = _reflect(
                R[j, j + 1 : iq], R[j + 1, j + 1 : iq], c, s
            )
        J[:, j], J[:, j + 1] = _reflect(J[:, j], J[:, j + 1], c, s)
    return iq


def solve_qp(p, tol=1e-9, max_iter=None, J0=None):
    """Solve a :class:`QpProblem`.

    Parameters
    ----------
    p : QpProblem
    tol : float
        Primal feasibility tolerance on each (normalized) inequality.
    max_iter : int, optional
        Cap on active-set changes; defaults to ``10 * (d + r)``.
    J0 : ndarray, optional
        Precomputed :func:`inverse_cholesky_factor` of ``p.P``.

    Returns
    -------
    QpResult

    Raises
    ------
    QPInfeasible
        When the dual step is unbounded (no feasible point) or the equality
        constraints are inconsistent.
    QPMaxIterations
    numpy.linalg.LinAlgError
        If ``P`` is not positive definite.
    """
    P, q, G, g, E, e = p.P, p.q, p.G, p.g, p.E, p.e
    n = P.shape[0]
    r = G.shape[0]
    if max_iter is None:
        max_iter = 10 * (n + r + E.shape[0]) + 10
    J = (inverse_cholesky_factor(P) if J0 is None else J0).copy()
    R = np.zeros((n, n))
    x = -J @ (J.T @ q)
    active = []  # ('e', i) or ('i', i)
    u = []
    iq = 0
    iters = 0

    for i in range(E.shape[0]):
        a = E[i]
        d = J.T @ a
        z = J[:, iq:] @ d[iq:]
        rr = solve_triangular(R[:iq, :iq], d[:iq]) if iq else np.zeros(0)
        za = z @ a
        s = a @ x - e[i]
        if abs(za) <= _EPS * max(1.0, np.abs(a).max()):
            if abs(s) > tol:
                raise QPInfeasible(f"equality constraint {i} is inconsistent with earlier ones")
            continue
        t = -s / za
        x = x + t * z
        u = [uk - t * rk for uk, rk in zip(u, rr)] + [t]
        _add_constraint(J, R, d, iq)
        iq += 1
        active.append(("e", i))

    in_active = np.zeros(r, dtype=bool)
    while True:
        slack = g - G @ x
        slack[in_active] = np.inf
        if r == 0:
            break
        p_idx = int(np.argmin(slack))
        if slack[p_idx] >= -tol:
            break
        a = -G[p_idx]
        u_plus = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                raise QPMaxIterations(f"no convergence after {max_iter} active-set changes")
            s_p = a @ x + g[p_idx]
            d = J.T @ a
            z = J[:, iq:] @ d[iq:]
            rr = solve_triangular(R[:iq, :iq], d[:iq]) if iq else np.zeros(0)
            t1, l_pos = np.inf, -1
            for k in range(iq):
                if active[k][0] == "i" and rr[k] > _EPS:
                    ratio = u[k] / rr[k]
                    if ratio < t1:
                        t1, l_pos = ratio, k
            za = z @ a
            t2 = np.inf if np.linalg.norm(z) <= _EPS or za <= 0 else -s_p / za
            t = min(t1, t2)
            if not np.isfinite(t):
                raise QPInfeasible(f"inequality {p_idx} cannot be satisfied together with the active set")
            if np.isfinite(t2):
                x = x + t * z
            u = [uk - t * rk for uk, rk in zip(u, rr)]
            u_plus += t
            if t2 <= t1:
                _add_constraint(J, R, d, iq)
                iq += 1
                active.append(("i", p_idx))
                u.append(u_plus)
                in_active[p_idx] = True
                break
            # partial step: release the blocking constraint and retry p
            in_active[active[l_pos][1]] = False
            del active[l_pos]
            del u[l_pos]
            iq = _delete_constraint(J, R, l_pos, iq)

    mu = np.zeros(r)
    nu = np.zeros(E.shape[0])
    for (kind, i), uk in zip(active, u):
        if kind == "i":
            mu[i] = max(uk, 0.0)
        else:
            nu[i] = -uk
    return QpResult(z=x, status="optimal", mu=mu, nu=nu, active=[i for k, i in active if k == "i"], iterations=iters)
