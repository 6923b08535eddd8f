"""Dense linear-algebra kernels used by the DMD pipeline.

Thin wrappers around LAPACK (through numpy) that check their inputs and
translate LAPACK failures into package exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalFailure

DEFAULT_RCOND = 1e-12


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = u @ diag(sigma) @ vt`` with ``k = min(rows, cols)``."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def k(self) -> int:
        return self.sigma.shape[0]


def _as_matrix(m, dtype=None) -> np.ndarray:
    a = np.asarray(m, dtype=dtype)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInput(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix contains non-finite entries")
    return a


def svd(m) -> SvdResult:
    """Thin singular value decomposition of a finite real matrix."""
    a = _as_matrix(m, dtype=float)
    try:
        u, sigma, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    return SvdResult(u=u, sigma=sigma, vt=vt)


def eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and unit-norm eigenvectors of a square matrix.

    Always works in complex arithmetic so conjugate pairs of a real input
    come back as explicit complex pairs.
    """
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidInput(f"eig needs a square matrix, got {a.shape}")
    try:
        vals, vecs = np.linalg.eig(a.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigenvalue iteration failed: {exc}") from exc
    norms = np.linalg.norm(vecs, axis=0)
    norms[norms == 0] = 1.0
    return vals, vecs / norms


def pinv_apply(phi, y, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Minimum-norm least-squares solution ``b`` of ``phi @ b ~= y``.

    Singular values below ``rcond * sigma_max`` are treated as zero.
    """
    a = _as_matrix(phi, dtype=complex)
    v = np.asarray(y, dtype=complex)
    if v.ndim != 1 or v.shape[0] != a.shape[0]:
        raise InvalidInput(
            f"rhs length {v.shape} does not match {a.shape[0]} rows of phi"
        )
    if not np.all(np.isfinite(v)):
        raise InvalidInput("rhs contains non-finite entries")
    try:
        u, sigma, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    if sigma.size == 0 or sigma[0] == 0.0:
        return np.zeros(a.shape[1], dtype=complex)
    keep = sigma > rcond * sigma[0]
    coef = (u[:, keep].conj().T @ v) / sigma[keep]
    return vh[keep].conj().T @ coef
