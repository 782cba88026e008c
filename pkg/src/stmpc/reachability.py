"""Disturbance confidence regions, error covariance and tube sets.

The error ``e = x - s`` obeys ``e+ = A_cl e + w``.  From a per-axis Gaussian
confidence box ``Ew`` for ``w`` we build the relaxed reachable tubes
``D_k = Ew + A_cl Ew + ... + A_cl^k Ew`` and an outer approximation ``Z`` of
their limit, the minimal robust invariant set.
"""

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from ._validation import check_psd, check_square
from .exceptions import NoConvergence, OutOfRange
from .sets import Zonotope, affine_map, minkowski_sum, scale

QUANTILE_CONVENTIONS = ("paper-literal", "two-sided", "bonferroni")

_STD_NORMAL = NormalDist()


def quantile_std_normal(p):
    """Standard normal quantile ``Phi^{-1}(p)`` for ``0 < p < 1``."""
    if not 0.0 < p < 1.0:
        raise OutOfRange(f"probability {p} outside (0, 1)")
    return _STD_NORMAL.inv_cdf(p)


@dataclass(frozen=True)
class ChanceSpec:
    """Violation budget and the box quantile derived from it.

    ``paper-literal`` uses ``Phi^{-1}(1 - eps)`` per axis; ``two-sided``
    uses ``Phi^{-1}(1 - eps/2)``; ``bonferroni`` uses
    ``Phi^{-1}(1 - eps/(2n))`` and so needs the state dimension.
    """

    epsilon: float
    convention: str = "paper-literal"
    n: int = 1
    alpha: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise OutOfRange(f"epsilon {self.epsilon} outside (0, 1)")
        if self.convention == "paper-literal":
            p = 1.0 - self.epsilon
        elif self.convention == "two-sided":
            p = 1.0 - self.epsilon / 2.0
        elif self.convention == "bonferroni":
            p = 1.0 - self.epsilon / (2.0 * self.n)
        else:
            raise ValueError(f"unknown quantile convention {self.convention!r}")
        object.__setattr__(self, "alpha", quantile_std_normal(p))


def gaussian_confidence_box(W, spec):
    """Axis-aligned box with half-width ``alpha * sqrt(W_ii)`` centred at 0."""
    W = check_psd(W, "W")
    alpha = spec.alpha if isinstance(spec, ChanceSpec) else float(spec)
    return Zonotope.box(max(alpha, 0.0) * np.sqrt(np.clip(np.diag(W), 0.0, None)))


def propagate_covariance(A_cl, W, kmax):
    """``Sigma_0 = W``, ``Sigma_{k+1} = A_cl Sigma_k A_cl^T + W`` for ``k < kmax``."""
    A_cl = check_square(A_cl, "A_cl")
    W = check_psd(W, "W")
    Sig = [W.copy()]
    for _ in range(kmax):
        S = A_cl @ Sig[-1] @ A_cl.T + W
        Sig.append(0.5 * (S + S.T))
    return Sig


def build_relaxed_prs(A_cl, Ew, directions, conv_tol=1e-7, kcap=500):
    """Tube sequence ``D_0 = Ew``, ``D_{k+1} = A_cl D_k + Ew`` until converged.

    Convergence is measured by the change in support value along
    ``directions`` (rows); ``kmax`` is the first ``k`` at which the step to
    ``D_{k+1}`` moves no support value by more than ``conv_tol``.

    Returns
    -------
    D : list of Zonotope
        ``D_0 .. D_kmax``.
    kmax : int
    """
    A_cl = check_square(A_cl, "A_cl")
    directions = np.atleast_2d(directions)
    D = [Ew]
    prev = Ew.support(directions)
    for k in range(kcap):
        nxt = minkowski_sum(affine_map(A_cl, D[-1]), Ew)
        vals = nxt.support(directions)
        if np.max(np.abs(vals - prev)) <= conv_tol:
            return D, k
        D.append(nxt)
        prev = vals
    rho = float(np.abs(np.linalg.eigvals(A_cl)).max())
    raise NoConvergence(f"tube sequence not converged after {kcap} steps (rho(A_cl) = {rho:.6f})")


def mrpi_outer_approx(A_cl, Ew, eps_approx=1e-5, s_cap=1000):
    """Invariant outer approximation of ``sum_i A_cl^i Ew`` by the (alpha, s) scheme.

    Finds the smallest ``s`` with ``A_cl^s Ew`` inside ``alpha Ew`` for
    ``alpha <= eps_approx`` and returns
    ``(1 - alpha)^{-1} (Ew + A_cl Ew + ... + A_cl^{s-1} Ew)``, which is
    robustly invariant for ``e+ = A_cl e + w``, ``w in Ew``.

    Returns
    -------
    Z : Zonotope
    s : int
    alpha : float
    """
    A_cl = check_square(A_cl, "A_cl")
    n = A_cl.shape[0]
    if not np.allclose(Ew.c, 0.0):
        raise ValueError("Ew must be centred at the origin")
    # facets of the box hull; Ew is an axis-aligned box in every caller
    H = np.vstack([np.eye(n), -np.eye(n)])
    h = Ew.support(H)
    if np.all(h == 0):
        return Ew, 1, 0.0
    if np.any(h <= 0):
        raise ValueError("Ew must be full-dimensional or a single point")
    partial = Zonotope.point(np.zeros(n))
    img = Ew
    for s in range(1, s_cap + 1):
        partial = minkowski_sum(partial, img)
        img = affine_map(A_cl, img)
        alpha = float(np.max(img.support(H) / h))
        if alpha <= eps_approx:
            return scale(partial, 1.0 / (1.0 - alpha)), s, alpha
    raise NoConvergence(f"(alpha, s) search exceeded s = {s_cap}")


@dataclass(frozen=True)
class TubeSchedule:
    Ew: Zonotope
    Sigma: list
    D: list
    Z: Zonotope
    KD: list
    KZ: Zonotope
    kmax: int
    mrpi_s: int
    mrpi_alpha: float

    def tube(self, t):
        """``D_t`` with the index saturated at ``kmax``."""
        return self.D[min(t, self.kmax)]

    def to_dict(self):
        return {
            "kmax": self.kmax,
            "mrpi": {"s": self.mrpi_s, "alpha": self.mrpi_alpha},
            "Ew": self.Ew.to_dict(),
            "Sigma": [S.tolist() for S in self.Sigma],
            "D": [Dk.to_dict() for Dk in self.D],
            "Z": self.Z.to_dict(),
            "KD": [Dk.to_dict() for Dk in self.KD],
            "KZ": self.KZ.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            Ew=Zonotope.from_dict(data["Ew"]),
            Sigma=[np.asarray(S, dtype=float) for S in data["Sigma"]],
            D=[Zonotope.from_dict(d) for d in data["D"]],
            Z=Zonotope.from_dict(data["Z"]),
            KD=[Zonotope.from_dict(d) for d in data["KD"]],
            KZ=Zonotope.from_dict(data["KZ"]),
            kmax=int(data["kmax"]),
            mrpi_s=int(data["mrpi"]["s"]),
            mrpi_alpha=float(data["mrpi"]["alpha"]),
        )


def build_tube_schedule(A_cl, K, W, spec, directions, conv_tol=1e-7, kcap=500, mrpi_eps=1e-5):
    """Assemble the full :class:`TubeSchedule` for a synthesized loop."""
    Ew = gaussian_confidence_box(W, spec)
    K = np.atleast_2d(K)
    dirs = np.vstack([np.atleast_2d(directions), K, -K])
    D, kmax = build_relaxed_prs(A_cl, Ew, dirs, conv_tol=conv_tol, kcap=kcap)
    Z, s, alpha = mrpi_outer_approx(A_cl, Ew, eps_approx=mrpi_eps)
    return TubeSchedule(
        Ew=Ew,
        Sigma=propagate_covariance(A_cl, W, kmax),
        D=D,
        Z=Z,
        KD=[affine_map(K, Dk) for Dk in D],
        KZ=affine_map(K, Z),
        kmax=kmax,
        mrpi_s=s,
        mrpi_alpha=alpha,
    )
