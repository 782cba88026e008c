"""Closed-loop simulation, Monte Carlo batching and violation metrics.

Each run ``i`` draws its disturbances from its own Philox stream seeded with
``SeedSequence(seed, spawn_key=(i,))``, so results do not depend on how runs
are spread over worker processes.  Standard normals come from NumPy's
ziggurat sampler; ``w = L xi`` with ``L`` a square root of ``W``.

Time indexing: control step ``t`` (``0 <= t < N_sim``) measures ``x_t``,
applies ``u_t`` and produces ``x_{t+1}``.  Flags are stored per state
``x_0 .. x_{N_sim}``.  Violation ratios ``r_v(t)`` are reported for
``t = 1 .. N_sim``: the initial state is given data (and may lie outside
``X``), so it carries no information about the controller.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_vector
from .sets import zonotope_to_hpoly

THREADS_ENV = "STMPC_THREADS"
# a state or input counts as violating only beyond this slack (QP feasibility scale)
VIOLATION_TOL = 1e-9


@dataclass(frozen=True)
class SimConfig:
    N_sim: int = 15
    N_s: int = 1000
    seed: int = 0
    x0: tuple = (2.5, 2.8)
    avg_window: int = 6

    def __post_init__(self):
        if self.N_sim < 1 or self.N_s < 1:
            raise ValueError("N_sim and N_s must be >= 1")
        if not 1 <= self.avg_window <= self.N_sim:
            raise ValueError("avg_window must lie in [1, N_sim]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))


@dataclass
class SimRecord:
    """Per-step trace of one closed-loop run (NaN/False after a failure)."""

    run_id: int
    x: np.ndarray          # (N_sim + 1, n): x_0 .. x_{N_sim}
    u: np.ndarray          # (N_sim, m)
    s0: np.ndarray         # (N_sim, n)
    v0: np.ndarray         # (N_sim, m)
    lam: np.ndarray        # (N_sim,)
    J: np.ndarray          # (N_sim,)
    feasible: np.ndarray   # (N_sim,) bool: step t was solved and applied
    x_viol: np.ndarray     # (N_sim + 1,) x_t outside X
    u_viol: np.ndarray     # (N_sim,) u_t outside U
    in_Z: np.ndarray       # (N_sim,) x_t - s_{0|t} inside Z
    status: str = "feasible"

    @property
    def n_steps(self):
        return int(self.feasible.sum())


@dataclass(frozen=True)
class Metrics:
    """Violation statistics in percent.

    ``r_v[k]`` is the violation ratio of ``x_t`` for ``t = k + 1``, among
    runs whose state ``x_t`` was reached under control.  ``r_max`` is taken
    over all reported instants, ``r_min`` and ``r_bar`` over
    ``t = 1 .. avg_window``.
    """

    r_f: float
    r_v: list
    r_max: float
    r_min: float
    r_bar: float
    r_u: list = field(default_factory=list)  # per step t = 0 .. N_sim - 1
    terminal_in_Z: float = 100.0
    lambda_max: float = 1.0
    n_runs: int = 0
    n_solver_errors: int = 0

    def to_dict(self):
        return {
            "r_f": self.r_f,
            "r_v": list(self.r_v),
            "r_v_t": list(range(1, len(self.r_v) + 1)),
            "r_max": self.r_max,
            "r_min": self.r_min,
            "r_bar": self.r_bar,
            "r_u": list(self.r_u),
            "terminal_in_Z": self.terminal_in_Z,
            "lambda_max": self.lambda_max,
            "n_runs": self.n_runs,
            "n_solver_errors": self.n_solver_errors,
        }


def run_rng(seed, run_id):
    """Counter-based generator for run ``run_id`` (the documented split)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(run_id),))))


def _sqrt_psd(W):
    lam, V = np.linalg.eigh(0.5 * (W + W.T))
    return V * np.sqrt(np.clip(lam, 0.0, None))


def sample_disturbance(rng, W, size=None):
    """Zero-mean Gaussian draw(s) with covariance ``W``.

    ``size`` adds leading sample dimensions; the normals are generated in one
    block so the stream layout is fixed.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n = W.shape[0]
    shape = (n,) if size is None else tuple(np.atleast_1d(size)) + (n,)
    xi = rng.standard_normal(shape)
    return xi @ _sqrt_psd(W).T


def run_closed_loop(controller, sim, run_id=0, Z_hrep=None, W=None):
    """Simulate one run of the fitted ``controller`` from ``sim.x0``.

    The run stops at the first step whose problem is infeasible (or whose
    solver fails); later steps stay flagged as not feasible.
    """
    system = controller.system_
    A, B = system.A, system.B
    W = system.W if W is None else W
    n, m, N_sim = system.n, system.m, sim.N_sim
    X, U = controller.X_, controller.U_
    if Z_hrep is None:
        Z_hrep = _z_hrep(controller)
    rng = run_rng(sim.seed, run_id)
    w_all = sample_disturbance(rng, W, size=N_sim)

    rec = SimRecord(
        run_id=run_id,
        x=np.full((N_sim + 1, n), np.nan),
        u=np.full((N_sim, m), np.nan),
        s0=np.full((N_sim, n), np.nan),
        v0=np.full((N_sim, m), np.nan),
        lam=np.full(N_sim, np.nan),
        J=np.full(N_sim, np.nan),
        feasible=np.zeros(N_sim, dtype=bool),
        x_viol=np.zeros(N_sim + 1, dtype=bool),
        u_viol=np.zeros(N_sim, dtype=bool),
        in_Z=np.zeros(N_sim, dtype=bool),
    )
    x = as_vector(sim.x0, "x0", n)
    rec.x[0] = x
    rec.x_viol[0] = not X.contains_point(x, tol=VIOLATION_TOL)
    history = None
    for t in range(N_sim):
        u, sol, history = controller.step(x, t, history)
        if u is None:
            rec.status = sol.status
            break
        x_next = A @ x + B @ u + w_all[t]
        rec.u[t], rec.s0[t], rec.v0[t] = u, sol.s0, sol.v[0]
        rec.lam[t], rec.J[t] = sol.lam, sol.J
        rec.feasible[t] = True
        rec.x_viol[t + 1] = not X.contains_point(x_next, tol=VIOLATION_TOL)
        rec.u_viol[t] = not U.contains_point(u, tol=VIOLATION_TOL)
        rec.in_Z[t] = _in_set(Z_hrep, x - sol.s0)
        rec.x[t + 1] = x_next
        x = x_next
    return rec


def _z_hrep(controller):
    Z = controller.tubes_.Z
    if Z.n_generators == 0 or np.all(Z.G == 0):
        return None
    return zonotope_to_hpoly(Z)


def _in_set(P, e, tol=VIOLATION_TOL):
    if P is None:
        return bool(np.all(np.abs(e) <= 1e-9))
    return P.contains_point(e, tol=tol)


def _run_chunk(args):
    controller, sim, run_ids = args
    Z_hrep = _z_hrep(controller)
    return [run_closed_loop(controller, sim, i, Z_hrep) for i in run_ids]


def worker_count(n_runs):
    env = os.environ.get(THREADS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_runs))


def monte_carlo(controller, sim, workers=None):
    """Run ``sim.N_s`` independent closed-loop simulations and aggregate them.

    Returns
    -------
    metrics : Metrics
    records : list of SimRecord, ordered by run id
    """
    workers = worker_count(sim.N_s) if workers is None else max(1, int(workers))
    ids = list(range(sim.N_s))
    if workers == 1:
        records = _run_chunk((controller, sim, ids))
    else:
        chunks = [ids[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(controller, sim, c) for c in chunks]))
        records = sorted((r for part in parts for r in part), key=lambda r: r.run_id)
    return aggregate(records, sim), records


def terminal_containment(records):
    """Percentage of runs with ``x_t - s_{0|t}`` in ``Z`` at the last step ``t = N_sim - 1``."""
    if not records:
        return 0.0
    hits = sum(bool(r.feasible[-1] and r.in_Z[-1]) for r in records)
    return 100.0 * hits / len(records)


def _ratio(flags, mask):
    n = mask.sum(axis=0)
    return np.where(n > 0, 100.0 * flags.sum(axis=0) / np.maximum(n, 1), 0.0)


def aggregate(records, sim):
    """Fold run records into :class:`Metrics` (order independent)."""
    N_sim, w = sim.N_sim, sim.avg_window
    feas = np.array([r.feasible for r in records])
    # x_t (t >= 1) counts when step t - 1 was applied
    xv = np.array([r.x_viol[1:] for r in records]) & feas
    uv = np.array([r.u_viol for r in records]) & feas
    r_v = _ratio(xv, feas)
    r_u = _ratio(uv, feas)
    window = r_v[:w]
    lam = np.array([r.lam for r in records])
    lam_max = float(np.nanmax(lam)) if np.any(np.isfinite(lam)) else float("nan")
    return Metrics(
        r_f=100.0 * float(np.all(feas, axis=1).sum()) / len(records),
        r_v=[float(v) for v in r_v],
        r_max=float(r_v.max()),
        r_min=float(window.min()),
        r_bar=float(window.mean()),
        r_u=[float(v) for v in r_u],
        terminal_in_Z=terminal_containment(records),
        lambda_max=lam_max,
        n_runs=len(records),
        n_solver_errors=sum(r.status == "solver-error" for r in records),
    )
