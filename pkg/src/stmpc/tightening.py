"""Tightened constraint sets and the terminal set.

``C_k = X - D_k`` and ``V_k = U - K D_k`` shrink with ``k`` towards the
constant sets ``Cbar = X - Z`` and ``Vbar = U - K Z``.  The terminal set is
the maximal output admissible set of ``s+ = A_cl s`` under the constant
sets, which also satisfies every time-varying constraint because
``Cbar`` is contained in each ``C_k``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyTightening, NoFiniteDetermination
from .sets import HPolytope, _lp_max, poly_containment_margin, pontryagin_diff, reduce
from .synthesis import lyapunov_residual


@dataclass(frozen=True)
class TightenedSchedule:
    Ct: list
    Vt: list
    Cbar: HPolytope
    Vbar: HPolytope
    Xf: HPolytope
    moas_steps: int = 0

    def state_set(self, k, mode="time-varying"):
        if mode == "constant":
            return self.Cbar
        return self.Ct[min(k, len(self.Ct) - 1)]

    def input_set(self, k, mode="time-varying"):
        if mode == "constant":
            return self.Vbar
        return self.Vt[min(k, len(self.Vt) - 1)]

    def to_dict(self):
        return {
            "Ct": [P.to_dict() for P in self.Ct],
            "Vt": [P.to_dict() for P in self.Vt],
            "Cbar": self.Cbar.to_dict(),
            "Vbar": self.Vbar.to_dict(),
            "Xf": self.Xf.to_dict(),
            "moas_steps": self.moas_steps,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            Ct=[HPolytope.from_dict(d) for d in data["Ct"]],
            Vt=[HPolytope.from_dict(d) for d in data["Vt"]],
            Cbar=HPolytope.from_dict(data["Cbar"]),
            Vbar=HPolytope.from_dict(data["Vbar"]),
            Xf=HPolytope.from_dict(data["Xf"]),
            moas_steps=int(data.get("moas_steps", 0)),
        )


def _tighten(P, Z, which):
    out = pontryagin_diff(P, Z)
    # the origin must stay interior for the terminal-set construction
    worst = int(np.argmin(out.h))
    if out.h[worst] <= 0 or out.is_empty():
        raise EmptyTightening(which, worst, float(out.h[worst]))
    return reduce(out)


def tighten_pair(X, U, D, KD, label=""):
    return _tighten(X, D, f"C{label}"), _tighten(U, KD, f"V{label}")


def max_output_admissible_set(A_cl, Cs, Vs, K, iter_cap=200, tol=1e-9):
    """Gilbert-Tan construction of ``{s : A_cl^j s in Cs, K A_cl^j s in Vs, all j >= 0}``.

    Returns
    -------
    Xf : HPolytope
    steps : int
        Determinedness index ``t`` at which ``O_{t+1} = O_t``.

    Raises
    ------
    NoFiniteDetermination
        If no finite index is found within ``iter_cap`` steps.
    """
    K = np.atleast_2d(K)
    Y = np.vstack([Cs.H, Vs.H @ K])
    y = np.concatenate([Cs.h, Vs.h])
    H_acc, h_acc = Y.copy(), y.copy()
    Ak = np.eye(A_cl.shape[0])
    for t in range(iter_cap):
        Ak = A_cl @ Ak
        rows = Y @ Ak
        worst = max(_lp_max(r, H_acc, h_acc) - yi for r, yi in zip(rows, y))
        if worst <= tol:
            return reduce(HPolytope(H_acc, h_acc)), t
        H_acc = np.vstack([H_acc, rows])
        h_acc = np.concatenate([h_acc, y])
    raise NoFiniteDetermination(f"no finite determination within {iter_cap} steps")


def build_tightened_schedule(X, U, tubes, K, A_cl, iter_cap=200):
    """Time-varying and constant tightenings plus the terminal set.

    Raises
    ------
    EmptyTightening
        Naming the set and the facet whose offset became nonpositive.
    """
    Ct, Vt = [], []
    for k, (Dk, KDk) in enumerate(zip(tubes.D, tubes.KD)):
        C, V = tighten_pair(X, U, Dk, KDk, label=f"t[{k}]")
        Ct.append(C)
        Vt.append(V)
    Cbar, Vbar = tighten_pair(X, U, tubes.Z, tubes.KZ, label="bar")
    Xf, steps = max_output_admissible_set(A_cl, Cbar, Vbar, K, iter_cap)
    return TightenedSchedule(Ct=Ct, Vt=Vt, Cbar=Cbar, Vbar=Vbar, Xf=Xf, moas_steps=steps)


def check_axioms(Xf, syn, Cs, Vs, w, tol=1e-9, lyap_tol=1e-8):
    """Check the terminal ingredients.

    A1: ``A_cl Xf`` inside ``Xf``, ``Xf`` inside ``Cs``, ``K Xf`` inside ``Vs``.
    A2: ``V_f(A_cl x) + l(x, Kx) - V_f(x) = 0``, checked through the
    Lyapunov residual of ``P``.

    Returns a dict of margins (negative margin = violated) and pass flags.
    """
    K = np.atleast_2d(syn.K)
    inv = float(np.min([Xf.h[i] - _lp_max(Xf.H[i] @ syn.A_cl, Xf.H, Xf.h) for i in range(Xf.n_facets)]))
    in_C = poly_containment_margin(Cs, Xf)
    in_V = float(np.min([Vs.h[i] - _lp_max(Vs.H[i] @ K, Xf.H, Xf.h) for i in range(Vs.n_facets)]))
    a2 = lyapunov_residual(syn, w)
    report = {
        "A1_invariance": {"margin": inv, "passed": bool(inv >= -tol)},
        "A1_state": {"margin": float(in_C), "passed": bool(in_C >= -tol)},
        "A1_input": {"margin": in_V, "passed": bool(in_V >= -tol)},
        "A2_lyapunov": {"residual": float(a2), "passed": bool(a2 <= lyap_tol)},
    }
    report["passed"] = all(v["passed"] for v in report.values())
    return report
