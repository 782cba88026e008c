"""Halfspace polytopes and zonotopes.

Zonotopes carry every disturbance-derived set (confidence boxes, reachable
tubes, the invariant outer approximation); they are closed under linear maps
and Minkowski sums, and their support function is exact.  Halfspace polytopes
hold the constraint sets.  Pontryagin differences only ever subtract a
zonotope from a polytope, which needs nothing but the zonotope's support
function.
"""

import itertools
import logging
from math import comb

import numpy as np
from scipy.optimize import linprog

from ._validation import as_matrix, as_vector
from .exceptions import (
    DegenerateZonotope,
    DimensionMismatch,
    EmptyPolytope,
    NegativeScale,
    TooManyGenerators,
)

logger = logging.getLogger(__name__)

LP_TOL = 1e-9


class Zonotope:
    """The set ``{c + G xi : ||xi||_inf <= 1}``.

    Parameters
    ----------
    c : array_like of shape (n,)
    G : array_like of shape (n, g)
        Generator matrix; ``g`` may be zero (a point).
    """

    __slots__ = ("c", "G", "overapproximated")

    def __init__(self, c, G, overapproximated=False):
        c = as_vector(c, "c")
        G = np.asarray(G, dtype=float)
        if G.size == 0:
            G = np.zeros((c.size, 0))
        G = G.reshape(c.size, -1)
        self.c = c
        self.G = G
        self.overapproximated = bool(overapproximated)
        self.c.setflags(write=False)
        self.G.setflags(write=False)

    @classmethod
    def box(cls, half_widths, center=None):
        r = as_vector(half_widths, "half_widths")
        c = np.zeros(r.size) if center is None else as_vector(center, "center", r.size)
        return cls(c, np.diag(r))

    @classmethod
    def point(cls, c):
        c = as_vector(c, "c")
        return cls(c, np.zeros((c.size, 0)))

    @property
    def dim(self):
        return self.c.size

    @property
    def n_generators(self):
        return self.G.shape[1]

    def support(self, d):
        """Support value ``max_{x in Z} d.x``; ``d`` may be a stack of row directions."""
        d = np.asarray(d, dtype=float)
        return d @ self.c + np.abs(d @ self.G).sum(axis=-1)

    def interval_hull(self):
        r = np.abs(self.G).sum(axis=1)
        return self.c - r, self.c + r

    def __repr__(self):
        return f"Zonotope(dim={self.dim}, generators={self.n_generators})"

    def to_dict(self):
        return {"c": self.c.tolist(), "G": self.G.tolist()}

    @classmethod
    def from_dict(cls, data):
        c = np.asarray(data["c"], dtype=float)
        return cls(c, np.asarray(data["G"], dtype=float).reshape(c.size, -1))


class HPolytope:
    """The set ``{x : H x <= h}`` with unit-norm facet normals.

    Rows with a zero normal are dropped when trivially satisfied and make the
    polytope empty otherwise.
    """

    __slots__ = ("H", "h", "overapproximated")

    def __init__(self, H, h, overapproximated=False):
        H = as_matrix(H, "H")
        h = as_vector(h, "h", H.shape[0])
        norms = np.linalg.norm(H, axis=1)
        zero = norms <= 1e-14
        if np.any(h[zero] < -LP_TOL):
            # 0 <= negative: keep a single infeasible row so emptiness is detectable
            H = np.vstack([np.eye(1, H.shape[1]), -np.eye(1, H.shape[1])])
            h = np.array([-1.0, -1.0])
            norms = np.ones(2)
            zero = np.zeros(2, dtype=bool)
        H = H[~zero] / norms[~zero, None]
        h = h[~zero] / norms[~zero]
        self.H = H
        self.h = h
        self.overapproximated = bool(overapproximated)
        self.H.setflags(write=False)
        self.h.setflags(write=False)

    normalized = True

    @classmethod
    def from_box(cls, lower, upper):
        lo = as_vector(lower, "lower")
        hi = as_vector(upper, "upper", lo.size)
        n = lo.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))

    @property
    def dim(self):
        return self.H.shape[1]

    @property
    def n_facets(self):
        return self.H.shape[0]

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, facets={self.n_facets})"

    def contains_point(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.H @ x <= self.h + tol))

    def support(self, d):
        """Support value via LP (one per row of ``d``); ``+inf`` if unbounded."""
        d = np.asarray(d, dtype=float)
        if d.ndim == 2:
            return np.array([_lp_max(row, self.H, self.h) for row in d])
        return _lp_max(d, self.H, self.h)

    def is_empty(self):
        res = linprog(
            np.zeros(self.dim), A_ub=self.H, b_ub=self.h,
            bounds=[(None, None)] * self.dim, method="highs",
        )
        return res.status == 2

    def chebyshev_radius(self):
        n = self.dim
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A = np.hstack([self.H, np.ones((self.n_facets, 1))])
        res = linprog(c, A_ub=A, b_ub=self.h, bounds=[(None, None)] * n + [(0, None)], method="highs")
        if res.status == 2:
            return -np.inf
        return float(res.x[-1])

    def intersect(self, other):
        return HPolytope(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def vertices(self, tol=1e-9):
        """Vertex enumeration by brute force over ``n``-subsets of facets.

        Meant for low-dimensional test and plotting use; in 2-D the vertices
        come back in counterclockwise order.
        """
        n = self.dim
        verts = []
        for rows in itertools.combinations(range(self.n_facets), n):
            Hs = self.H[list(rows)]
            if abs(np.linalg.det(Hs)) < 1e-12:
                continue
            v = np.linalg.solve(Hs, self.h[list(rows)])
            if np.all(self.H @ v <= self.h + tol):
                if not any(np.allclose(v, u, atol=1e-9) for u in verts):
                    verts.append(v)
        V = np.array(verts).reshape(-1, n)
        if n == 2 and len(V) > 2:
            ctr = V.mean(axis=0)
            V = V[np.argsort(np.arctan2(V[:, 1] - ctr[1], V[:, 0] - ctr[0]))]
        return V

    def to_dict(self):
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["H"], dtype=float), np.asarray(data["h"], dtype=float))


def _lp_max(d, H, h):
    """Solve ``max d.x s.t. H x <= h``; raises EmptyPolytope when infeasible."""
    res = linprog(-d, A_ub=H, b_ub=h, bounds=[(None, None)] * H.shape[1], method="highs")
    if res.status == 2:
        raise EmptyPolytope("polytope is empty")
    if res.status == 3:
        return np.inf
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return -res.fun


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension {a.dim} vs {b.dim}")


def support(Z, d):
    return Z.support(d)


def affine_map(M, Z, b=None):
    """Image ``M Z + b`` of a zonotope."""
    M = as_matrix(M, "M")
    if M.shape[1] != Z.dim:
        raise DimensionMismatch(f"map has {M.shape[1]} columns, zonotope has dimension {Z.dim}")
    c = M @ Z.c
    if b is not None:
        c = c + as_vector(b, "b", M.shape[0])
    return Zonotope(c, M @ Z.G, Z.overapproximated)


def minkowski_sum(Z1, Z2):
    _check_dims(Z1, Z2)
    return Zonotope(
        Z1.c + Z2.c, np.hstack([Z1.G, Z2.G]), Z1.overapproximated or Z2.overapproximated
    )


def scale(Z, lam):
    if lam < 0:
        raise NegativeScale(f"scale factor {lam} < 0")
    return Zonotope(lam * Z.c, lam * Z.G, Z.overapproximated)


def pontryagin_diff(P, Z):
    """``P - Z = {x : x + z in P for all z in Z}``, exact through support values.

    The result may be empty; test with :meth:`HPolytope.is_empty`.
    """
    if P.dim != Z.dim:
        raise DimensionMismatch(f"dimension {P.dim} vs {Z.dim}")
    return HPolytope(P.H, P.h - Z.support(P.H), P.overapproximated or Z.overapproximated)


def contains(P, Z, tol=1e-9):
    """True iff every point of zonotope ``Z`` satisfies ``P``'s inequalities within ``tol``."""
    if P.dim != Z.dim:
        raise DimensionMismatch(f"dimension {P.dim} vs {Z.dim}")
    return bool(np.all(Z.support(P.H) <= P.h + tol))


def containment_margin(P, Z):
    """Smallest slack ``h_i - h_Z(H_i)``; negative means ``Z`` sticks out."""
    return float(np.min(P.h - Z.support(P.H)))


def poly_contains(outer, inner, tol=1e-9):
    """Polytope-in-polytope containment via one LP per facet of ``outer``."""
    return poly_containment_margin(outer, inner) >= -tol


def poly_containment_margin(outer, inner):
    vals = np.array([_lp_max(row, inner.H, inner.h) for row in outer.H])
    return float(np.min(outer.h - vals))


def compact_generators(Z, rtol=1e-12):
    """Drop negligible generators and merge parallel ones; the set is unchanged."""
    G = Z.G
    if G.shape[1] == 0:
        return Z
    norms = np.linalg.norm(G, axis=0)
    scale_ = max(norms.max(), 1e-300)
    keep = norms > rtol * scale_
    G = G[:, keep]
    norms = norms[keep]
    merged = []
    dirs = []
    for j in range(G.shape[1]):
        u = G[:, j] / norms[j]
        for i, v in enumerate(dirs):
            cosang = float(u @ v)
            if abs(abs(cosang) - 1.0) < 1e-13:
                merged[i] = merged[i] + np.sign(cosang) * G[:, j]
                break
        else:
            dirs.append(u)
            merged.append(G[:, j].copy())
    Gm = np.column_stack(merged) if merged else np.zeros((Z.dim, 0))
    return Zonotope(Z.c, Gm, Z.overapproximated)


def reduce_order(Z, max_generators, rtol=1e-6):
    """Box-merge the smallest generators until at most ``max_generators`` remain.

    The merged generators are replaced by their interval hull, an outer
    approximation.  Raises TooManyGenerators if the induced support error
    would exceed ``rtol`` relative to the zonotope's smallest half-width.
    """
    n = Z.dim
    g = Z.n_generators
    if g <= max_generators:
        return Z
    if max_generators <= n:
        raise TooManyGenerators(f"cannot reduce to {max_generators} generators in dimension {n}")
    n_merge = g - max_generators + n
    order = np.argsort(np.linalg.norm(Z.G, axis=0), kind="stable")
    small, big = order[:n_merge], order[n_merge:]
    box = np.abs(Z.G[:, small]).sum(axis=1)
    err = float(np.abs(Z.G[:, small]).sum())
    width = float(np.min(Z.support(np.vstack([np.eye(n), -np.eye(n)])) - np.concatenate([Z.c, -Z.c])))
    if err > rtol * max(width, 1e-300):
        raise TooManyGenerators(
            f"merging {n_merge} generators changes support by up to {err:.3e} "
            f"(> {rtol:g} relative); raise the combination budget instead"
        )
    logger.warning("zonotope order reduced from %d to %d generators (outer approximation)", g, max_generators)
    return Zonotope(Z.c, np.hstack([Z.G[:, np.sort(big)], np.diag(box)]), overapproximated=True)


def _facet_normals(G):
    """Generalized cross products of every (n-1)-subset of generator columns."""
    n, g = G.shape
    normals = []
    for idx in itertools.combinations(range(g), n - 1):
        sub = G[:, idx]
        nrm = np.array([
            (-1) ** i * np.linalg.det(np.delete(sub, i, axis=0)) for i in range(n)
        ])
        length = np.linalg.norm(nrm)
        if length > 1e-12 * max(1.0, np.abs(sub).max() ** (n - 1)):
            normals.append(nrm / length)
    return np.array(normals).reshape(-1, n)


def _dedupe_rows(H, h, tol=1e-10):
    keep_H, keep_h = [], []
    for row, off in zip(H, h):
        for i, kr in enumerate(keep_H):
            if np.abs(kr - row).max() < tol:
                keep_h[i] = min(keep_h[i], off)
                break
        else:
            keep_H.append(row)
            keep_h.append(off)
    return np.array(keep_H), np.array(keep_h)


def zonotope_to_hpoly(Z, max_combinations=4096):
    """Exact halfspace representation of a full-dimensional zonotope.

    Every (n-1)-subset of generators spans a facet pair whose normal is the
    generalized cross product of the subset; offsets come from the support
    function.  Parallel generators are merged first.  If the number of
    subsets exceeds ``max_combinations`` the generator list is first reduced
    (see :func:`reduce_order`) and the result is flagged ``overapproximated``.
    """
    Zc = compact_generators(Z)
    n, g = Zc.G.shape
    if g < n or np.linalg.matrix_rank(Zc.G) < n:
        raise DegenerateZonotope(f"generator matrix has rank < {n}")
    if n == 1:
        r = np.abs(Zc.G).sum()
        return HPolytope(np.array([[1.0], [-1.0]]), np.array([Zc.c[0] + r, r - Zc.c[0]]))
    if comb(g, n - 1) > max_combinations:
        g_max = g
        while g_max > n and comb(g_max, n - 1) > max_combinations:
            g_max -= 1
        Zc = reduce_order(Zc, g_max)
    normals = _facet_normals(Zc.G)
    H = np.vstack([normals, -normals])
    h = Zc.support(H)
    H, h = _dedupe_rows(H, h)
    return HPolytope(H, h, overapproximated=Zc.overapproximated)


def reduce(P, tol=1e-9):
    """Remove redundant inequalities with one LP per row.

    A row is redundant when maximizing it over the remaining rows stays
    within ``tol`` of its offset.  Exact duplicates are collapsed first.
    """
    if P.is_empty():
        raise EmptyPolytope("cannot reduce an empty polytope")
    H, h = _dedupe_rows(P.H, P.h, tol=1e-12)
    keep = np.ones(len(h), dtype=bool)
    for i in range(len(h)):
        keep[i] = False
        others = keep.copy()
        if not others.any():
            keep[i] = True
            continue
        val = _lp_max(H[i], H[others], h[others])
        if val > h[i] + tol:
            keep[i] = True
    return HPolytope(H[keep], h[keep], P.overapproximated)
