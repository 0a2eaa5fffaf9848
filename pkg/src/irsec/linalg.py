"""Dense complex-Hermitian linear algebra primitives shared by all solver stages.

Matrices are plain complex numpy arrays. Anything documented as Hermitian is
symmetrized on construction via :func:`herm` so that asymmetric round-off never
reaches the conic assembly. All tolerance constants live in :data:`TOL`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KernelTolerances:
    """Numerical tolerances for the Hermitian kernel, kept in one place."""

    hermitian_rtol: float = 1e-12   # max allowed ||A - A^H||_F / ||A||_F
    eig_rtol: float = 1e-10         # eigen/SVD reconstruction residual
    rank_one_default: float = 1e-6  # default lambda2/lambda1 threshold


TOL = KernelTolerances()


class RankError(ValueError):
    """Raised when a matrix expected to be (near) rank one is not.

    Carries ``lambda_ratio`` = lambda2/lambda1 of the offending matrix.
    """

    def __init__(self, message: str, lambda_ratio: float):
        super().__init__(message)
        self.lambda_ratio = lambda_ratio


class EigenFailure(RuntimeError):
    """Eigen/SVD iteration did not converge within the LAPACK iteration cap."""


def herm(a: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (A + A^H)/2 of a square matrix."""
    a = np.asarray(a, dtype=complex)
    return 0.5 * (a + a.conj().T)


def hermitian_defect(a: np.ndarray) -> float:
    """Relative Frobenius distance of ``a`` from its Hermitian part."""
    a = np.asarray(a, dtype=complex)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return 0.0
    return np.linalg.norm(a - a.conj().T) / (2.0 * scale)


def is_hermitian(a: np.ndarray, rtol: float = TOL.hermitian_rtol) -> bool:
    return hermitian_defect(a) <= rtol


def _require_hermitian(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    defect = hermitian_defect(a)
    if defect > 1e-8:
        raise ValueError(f"matrix is not Hermitian (relative defect {defect:.3e})")
    return herm(a)


def eig_hermitian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition A = U diag(w) U^H of a Hermitian matrix.

    Returns eigenvalues ascending and a unitary eigenvector matrix.
    """
    a = _require_hermitian(a)
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK cap
        raise EigenFailure(f"eigh failed to converge: {exc}") from exc
    return w, u


def min_eig(a: np.ndarray) -> float:
    """Smallest eigenvalue of a Hermitian matrix."""
    return float(np.linalg.eigvalsh(herm(np.asarray(a, dtype=complex)))[0])


def svd_general(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD A = U diag(s) V^H with singular values descending."""
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK cap
        raise EigenFailure(f"svd failed to converge: {exc}") from exc
    return u, s, vh.conj().T


def nuclear_and_spectral_norm(a: np.ndarray) -> tuple[float, float]:
    """(||A||_*, ||A||_2) for Hermitian A, from its eigenvalues.

    For Hermitian matrices the singular values are |eigenvalues|, so the
    nuclear norm is sum(|w|) and the spectral norm max(|w|). The gap
    ||A||_* - ||A||_2 vanishes exactly when A has numerical rank one.
    """
    w, _ = eig_hermitian(a)
    absw = np.abs(w)
    return float(absw.sum()), float(absw.max(initial=0.0))


def rank_one_factor(a: np.ndarray, tol: float = TOL.rank_one_default) -> np.ndarray:
    """Factor a PSD near-rank-one matrix as A ~= x x^H, returning x.

    Requires lambda2 <= tol * lambda1; raises :class:`RankError` otherwise.
    The global phase is fixed by rotating the largest-magnitude entry of x to
    the nonnegative real axis, so outputs are reproducible.
    """
    w, u = eig_hermitian(a)
    lam1 = w[-1]
    if lam1 <= 0.0:
        if np.linalg.norm(a) == 0.0:
            return np.zeros(a.shape[0], dtype=complex)
        raise RankError("matrix is not PSD (leading eigenvalue <= 0)", np.inf)
    lam2 = max(float(np.abs(w[:-1]).max(initial=0.0)), 0.0)
    ratio = lam2 / lam1
    if ratio > tol:
        raise RankError(
            f"rank-one condition violated: lambda2/lambda1 = {ratio:.3e} > {tol:.1e}",
            ratio,
        )
    x = np.sqrt(lam1) * u[:, -1]
    pivot = int(np.argmax(np.abs(x)))
    phase = x[pivot] / abs(x[pivot]) if abs(x[pivot]) > 0 else 1.0
    return x / phase


def rank_one_defect(a: np.ndarray) -> float:
    """max(lambda2, 0)/lambda1 with eigenvalues sorted descending.

    Zero for numerical rank <= 1; a slightly negative second eigenvalue
    (solver noise on a PSD-intended matrix) does not count as rank excess.
    """
    w = np.linalg.eigvalsh(herm(np.asarray(a, dtype=complex)))
    lam1 = float(w[-1])
    if lam1 <= 0.0:
        return 0.0 if np.linalg.norm(a) == 0.0 else np.inf
    lam2 = float(w[-2]) if w.size > 1 else 0.0
    return max(lam2, 0.0) / lam1
