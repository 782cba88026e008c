"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import DimensionMismatch, NonPSD


def as_matrix(M, name="matrix", shape=None):
    """Return ``M`` as a 2-D float array, promoting scalars and vectors."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    if shape is not None:
        for axis, (got, want) in enumerate(zip(M.shape, shape)):
            if want is not None and got != want:
                raise DimensionMismatch(
                    f"{name} has shape {M.shape}, expected {shape} (axis {axis})"
                )
    return M


def as_vector(v, name="vector", size=None):
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    if size is not None and v.size != size:
        raise DimensionMismatch(f"{name} has length {v.size}, expected {size}")
    return v


def check_square(M, name="matrix"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {M.shape}")
    return M


def check_psd(M, name="matrix", tol=1e-12):
    M = check_square(M, name)
    if not np.allclose(M, M.T, atol=1e-12, rtol=0):
        raise NonPSD(f"{name} is not symmetric")
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    if lam.min() < -tol:
        raise NonPSD(f"{name} has eigenvalue {lam.min():.3e} < 0")
    return M


def check_pd(M, name="matrix"):
    M = check_psd(M, name)
    if np.linalg.eigvalsh(0.5 * (M + M.T)).min() <= 0:
        raise ValueError(f"{name} must be positive definite")
    return M
