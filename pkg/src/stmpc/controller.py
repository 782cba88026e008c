"""Tube-based stochastic MPC controllers.

:class:`TubeSMPC` follows the scikit-learn estimator protocol: constructor
arguments are hyperparameters (``get_params``/``set_params`` work), ``fit``
runs the offline stage (LQR synthesis, tubes, tightened sets, terminal set,
condensed QP matrices) and the fitted object answers ``solve``/``step``
queries online without mutating itself.

Four variants are supported:

``pTTSMPC``
    time-varying tightening ``C_{k+t}``, ``V_{k+t}`` and initial tube ``D_t``.
``pCTSMPC``
    constant tightening ``Cbar``, ``Vbar`` and initial tube ``Z``.
``*-en``
    same, with the initial tube relaxed to ``lambda * D_t`` (or
    ``lambda * Z``), ``lambda >= 1``, and a sigmoid penalty on ``lambda``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import as_vector
from .exceptions import InfeasibleEvenRelaxed, MissingHistory, QPInfeasible, QPMaxIterations
from .qp import QpProblem, inverse_cholesky_factor, solve_qp
from .reachability import ChanceSpec, build_tube_schedule
from .sets import HPolytope, zonotope_to_hpoly
from .synthesis import CostWeights, lqr_gain
from .tightening import build_tightened_schedule

logger = logging.getLogger(__name__)

VARIANTS = ("pTTSMPC", "pTTSMPC-en", "pCTSMPC", "pCTSMPC-en")
INIT_MODES = ("flexible", "prev-predicted", "first-predicted", "measured-else-prev")
INIT_CASES = dict(zip(("Case1", "Case2", "Case3", "Case4"), INIT_MODES))


def sigmoid_penalty(lam, gamma):
    """``gamma * (1 / (1 + exp(-(lam - 1))) - 1/2)``; zero at ``lam = 1``."""
    return gamma * (1.0 / (1.0 + np.exp(-(lam - 1.0))) - 0.5)


@dataclass(frozen=True)
class ControllerConfig:
    N: int = 8
    gamma: float = 100.0
    variant: str = "pTTSMPC"
    init_mode: str = "flexible"
    qp_tol: float = 1e-9

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"unknown init_mode {self.init_mode!r}; choose from {INIT_MODES}")
        if self.enhanced and self.gamma <= 0:
            raise ValueError("gamma must be positive for enhanced variants")
        if self.qp_tol <= 0:
            raise ValueError("qp_tol must be positive")

    @property
    def enhanced(self):
        return self.variant.endswith("-en")

    @property
    def tightening(self):
        return "constant" if self.variant.startswith("pCT") else "time-varying"


@dataclass(frozen=True)
class OcpSolution:
    s0: np.ndarray
    v: np.ndarray
    s: np.ndarray
    lam: float
    J: float
    status: str
    t: int = 0
    init: str = "flexible"

    @property
    def optimal(self):
        return self.status == "optimal"


@dataclass(frozen=True)
class History:
    """What the equality-type initializations need from earlier solves."""

    prev: OcpSolution = None
    first_plan: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class _InitSpec:
    kind: str  # "tube" or "equal"
    target: np.ndarray = None


class TubeSMPC(BaseEstimator):
    """Probabilistic tube-based stochastic MPC for ``x+ = A x + B u + w``.

    Parameters
    ----------
    variant : {"pTTSMPC", "pTTSMPC-en", "pCTSMPC", "pCTSMPC-en"}
    horizon : int
        Prediction horizon ``N``.
    gamma : float
        Weight of the slack penalty (enhanced variants).
    init_mode : {"flexible", "prev-predicted", "first-predicted", "measured-else-prev"}
        How the nominal initial state is tied to the measurement.
    epsilon : float
        Chance-constraint violation budget.
    quantile : {"paper-literal", "two-sided", "bonferroni"}
    Q, R : array_like, optional
        Stage cost weights; identity when omitted.
    qp_tol : float
    conv_tol : float
        Convergence tolerance of the tube sequence ``D_k``.
    mrpi_eps : float
        Accuracy parameter of the invariant outer approximation ``Z``.
    lambda_tol : float
        Bisection tolerance on the slack ``lambda``.

    Attributes
    ----------
    system_ : SystemModel
    synthesis_ : Synthesis
    tubes_ : TubeSchedule
    tightened_ : TightenedSchedule
    """

    def __init__(
        self,
        variant="pTTSMPC",
        horizon=8,
        gamma=100.0,
        init_mode="flexible",
        epsilon=0.2,
        quantile="paper-literal",
        Q=None,
        R=None,
        qp_tol=1e-9,
        conv_tol=1e-7,
        mrpi_eps=1e-5,
        lambda_tol=1e-6,
    ):
        self.variant = variant
        self.horizon = horizon
        self.gamma = gamma
        self.init_mode = init_mode
        self.epsilon = epsilon
        self.quantile = quantile
        self.Q = Q
        self.R = R
        self.qp_tol = qp_tol
        self.conv_tol = conv_tol
        self.mrpi_eps = mrpi_eps
        self.lambda_tol = lambda_tol

    # ------------------------------------------------------------------ offline
    def fit(self, system, X, U):
        """Run the offline design for ``system`` under constraints ``X``, ``U``.

        Parameters
        ----------
        system : SystemModel
        X, U : HPolytope
            State and input constraint sets, compact with the origin inside.
        """
        self.config_ = ControllerConfig(
            N=int(self.horizon), gamma=float(self.gamma), variant=self.variant,
            init_mode=self.init_mode, qp_tol=float(self.qp_tol),
        )
        n, m = system.n, system.m
        if X.dim != n or U.dim != m:
            raise ValueError(f"constraint sets have dimensions ({X.dim}, {U.dim}), system is ({n}, {m})")
        Q = np.eye(n) if self.Q is None else self.Q
        R = np.eye(m) if self.R is None else self.R
        self.weights_ = CostWeights(np.atleast_2d(np.asarray(Q, float)), np.atleast_2d(np.asarray(R, float)))
        self.system_ = system
        self.X_, self.U_ = X, U
        self.chance_ = ChanceSpec(self.epsilon, self.quantile, n)
        self.synthesis_ = syn = lqr_gain(system, self.weights_)
        self.tubes_ = build_tube_schedule(
            syn.A_cl, syn.K, system.W, self.chance_, X.H,
            conv_tol=self.conv_tol, mrpi_eps=self.mrpi_eps,
        )
        self.tightened_ = build_tightened_schedule(X, U, self.tubes_, syn.K, syn.A_cl)
        self._condense()
        self._precompute_constraints()
        return self

    def _check_fitted(self):
        if not hasattr(self, "tightened_"):
            raise NotFittedError("call fit() before solving")

    def _condense(self):
        A, B = self.system_.A, self.system_.B
        n, m, N = A.shape[0], B.shape[1], self.config_.N
        d = n + N * m
        S = np.zeros((N + 1, n, d))
        S[0, :, :n] = np.eye(n)
        for k in range(N):
            S[k + 1] = A @ S[k]
            S[k + 1, :, n + k * m : n + (k + 1) * m] += B
        Vsel = np.zeros((N, m, d))
        for k in range(N):
            Vsel[k, :, n + k * m : n + (k + 1) * m] = np.eye(m)
        Qw, Rw, P = self.weights_.Q, self.weights_.R, self.synthesis_.P
        H = sum(S[k].T @ Qw @ S[k] for k in range(N)) + S[N].T @ P @ S[N]
        H = H + sum(Vsel[k].T @ Rw @ Vsel[k] for k in range(N))
        H = 2.0 * 0.5 * (H + H.T)
        self._S, self._Vsel, self._Pqp = S, Vsel, H
        self._J0 = inverse_cholesky_factor(H)

    def _static_block(self, t):
        """Stacked state, input and terminal rows for the problem at time ``t``."""
        mode, N = self.config_.tightening, self.config_.N
        T, S, Vsel = self.tightened_, self._S, self._Vsel
        rows, rhs = [], []
        for k in range(1, N):
            C = T.state_set(k + t, mode)
            rows.append(C.H @ S[k])
            rhs.append(C.h)
        for k in range(N):
            V = T.input_set(k + t, mode)
            rows.append(V.H @ Vsel[k])
            rhs.append(V.h)
        rows.append(T.Xf.H @ S[N])
        rhs.append(T.Xf.h)
        return np.vstack(rows), np.concatenate(rhs)

    def _tube_hrep(self, Z):
        if Z.n_generators == 0 or np.all(Z.G == 0):
            return None
        return zonotope_to_hpoly(Z)

    def _precompute_constraints(self):
        kmax = self.tubes_.kmax
        if self.config_.tightening == "constant":
            block = self._static_block(0)
            self._blocks = [block]
            self._init_sets = [self._tube_hrep(self.tubes_.Z)]
        else:
            # indices saturate at kmax, so t = kmax already covers every later time
            self._blocks = [self._static_block(t) for t in range(kmax + 1)]
            self._init_sets = [self._tube_hrep(Dt) for Dt in self.tubes_.D]

    def _index(self, t):
        return min(t, len(self._blocks) - 1)

    def init_tube(self, t):
        """Zonotope the error ``x_t - s_{0|t}`` must lie in (before slack)."""
        self._check_fitted()
        if self.config_.tightening == "constant":
            return self.tubes_.Z
        return self.tubes_.tube(t)

    def constraint_rows(self, t):
        """``(G, g)`` of the state, input and terminal constraints at time ``t``.

        Rows act on ``z = (s_{0|t}, v_{0|t}, ..., v_{N-1|t})``; the initial-state
        constraint is not included.
        """
        self._check_fitted()
        G, g = self._blocks[self._index(t)]
        return G.copy(), g.copy()

    # ------------------------------------------------------------------- online
    def build_ocp(self, x, t, lam=1.0, init=None):
        """Condensed QP over ``z = (s_{0|t}, v_{0|t}, ..., v_{N-1|t})``."""
        self._check_fitted()
        n = self.system_.n
        x = as_vector(x, "x", n)
        init = init or _InitSpec("tube")
        G, g = self._blocks[self._index(t)]
        S0 = self._S[0]
        E = e = None
        if init.kind == "equal":
            E, e = S0, as_vector(init.target, "target", n)
        else:
            Hd = self._init_sets[self._index(t)]
            if Hd is None:
                E, e = S0, x
            else:
                G = np.vstack([G, -Hd.H @ S0])
                g = np.concatenate([g, lam * Hd.h - Hd.H @ x])
        return QpProblem(self._Pqp, np.zeros(self._Pqp.shape[0]), G, g, E, e)

    def _solve_fixed(self, x, t, lam, init):
        p = self.build_ocp(x, t, lam, init)
        res = solve_qp(p, tol=self.config_.qp_tol, J0=self._J0)
        return self._unpack(res.z, lam, p.objective(res.z), t, init.kind)

    def _unpack(self, z, lam, J, t, init_kind):
        n, m, N = self.system_.n, self.system_.m, self.config_.N
        s = np.einsum("kij,j->ki", self._S, z)
        return OcpSolution(
            s0=z[:n].copy(), v=z[n:].reshape(N, m), s=s, lam=float(lam), J=float(J),
            status="optimal", t=t, init=init_kind,
        )

    def _failed(self, t, status, init_kind):
        n, m, N = self.system_.n, self.system_.m, self.config_.N
        nan = np.full(n, np.nan)
        return OcpSolution(
            s0=nan, v=np.full((N, m), np.nan), s=np.full((N + 1, n), np.nan),
            lam=np.nan, J=np.nan, status=status, t=t, init=init_kind,
        )

    def _feasible(self, x, t, lam):
        try:
            self._solve_fixed(x, t, lam, _InitSpec("tube"))
            return True
        except QPInfeasible:
            return False

    def solve_enhanced(self, x, t):
        """Minimal-slack scheme for the ``-en`` variants.

        Tries ``lambda = 1`` first; otherwise doubles an upper bracket from 2
        until feasible and bisects to the smallest feasible ``lambda``
        (feasibility is monotone in ``lambda``), then adds the penalty.
        """
        gamma, tol = self.config_.gamma, self.lambda_tol
        try:
            sol = self._solve_fixed(x, t, 1.0, _InitSpec("tube"))
            return sol
        except QPInfeasible:
            pass
        lo, hi = 1.0, 2.0
        while not self._feasible(x, t, hi):
            lo, hi = hi, 2.0 * hi
            if hi > 2.0 ** 20:
                raise InfeasibleEvenRelaxed(f"no feasible slack up to 2^20 at t={t}")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self._feasible(x, t, mid):
                hi = mid
            else:
                lo = mid
        sol = self._solve_fixed(x, t, hi, _InitSpec("tube"))
        sol = replace(sol, J=sol.J + sigmoid_penalty(hi, gamma))
        try:
            probe = self._solve_fixed(x, t, hi + 1e-3, _InitSpec("tube"))
            if probe.J + sigmoid_penalty(hi + 1e-3, gamma) < sol.J - 1e-12:
                logger.debug("t=%d: cost decreases past minimal slack %.6f", t, hi)
        except QPInfeasible:
            pass
        return sol

    def initialize_nominal(self, x, t, history):
        """Initial-state constraint(s) to try, in order, for the configured mode."""
        mode = self.config_.init_mode
        if mode == "flexible":
            return [_InitSpec("tube")]
        if t == 0:
            # no history yet: anchor at the measurement, else fall back to the tube
            return [_InitSpec("equal", x), _InitSpec("tube")]
        if history is None or history.prev is None or not history.prev.optimal:
            raise MissingHistory(f"init mode {mode!r} needs the previous solution at t={t}")
        prev_pred = history.prev.s[1]
        if mode == "prev-predicted":
            return [_InitSpec("equal", prev_pred)]
        if mode == "first-predicted":
            if history.first_plan is None:
                raise MissingHistory("init mode 'first-predicted' needs the t=0 plan")
            return [_InitSpec("equal", self._first_plan_at(history.first_plan, t))]
        return [_InitSpec("equal", x), _InitSpec("equal", prev_pred)]

    def _first_plan_at(self, plan, t):
        if t < len(plan):
            return plan[t]
        s = plan[-1]
        A_cl = self.synthesis_.A_cl
        for _ in range(t - len(plan) + 1):
            s = A_cl @ s
        return s

    def solve(self, x, t=0, history=None):
        """Solve the finite-horizon problem at measured state ``x`` and time ``t``.

        Returns an :class:`OcpSolution`; ``status`` is ``"infeasible"`` or
        ``"solver-error"`` instead of raising for the non-relaxed variants.
        """
        self._check_fitted()
        x = as_vector(x, "x", self.system_.n)
        specs = self.initialize_nominal(x, t, history)
        for spec in specs:
            try:
                if spec.kind == "tube" and self.config_.enhanced:
                    return self.solve_enhanced(x, t)
                return self._solve_fixed(x, t, 1.0, spec)
            except QPInfeasible:
                continue
            except QPMaxIterations:
                return self._failed(t, "solver-error", spec.kind)
        return self._failed(t, "infeasible", specs[-1].kind)

    def control_law(self, x, sol):
        """``u = K (x - s0) + v0``."""
        return self.synthesis_.K @ (np.asarray(x, float) - sol.s0) + sol.v[0]

    def step(self, x, t, history=None):
        """One receding-horizon step: returns ``(u, solution, new_history)``."""
        sol = self.solve(x, t, history)
        if not sol.optimal:
            return None, sol, history
        first_plan = history.first_plan if history is not None else None
        if t == 0:
            first_plan = sol.s
        return self.control_law(x, sol), sol, History(prev=sol, first_plan=first_plan)

    def predict(self, X, t=0):
        """Control input for each row of ``X`` as if it were measured at time ``t``.

        Uses no history, so only the flexible initialization (or the ``t = 0``
        behaviour of the other modes) applies.  Infeasible rows give NaN.
        """
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full((X.shape[0], self.system_.m), np.nan)
        for i, x in enumerate(X):
            sol = self.solve(x, t) if self.init_mode == "flexible" or t == 0 else None
            if sol is not None and sol.optimal:
                out[i] = self.control_law(x, sol)
        return out
