"""Dense real linear algebra substrate.

Storage is plain float64 numpy arrays. Factorization goes through LU with
partial pivoting; the spectral radius is estimated with a power-type
iteration that fits the dominant 2-dimensional Krylov block, so complex
conjugate pairs are handled without an eigendecomposition. Test matrices
with a known spectrum come from :func:`make_similar`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BadSpectrum, DimensionMismatch, NoConvergence, SingularMatrix

PIVOT_RTOL = 1e-13

__all__ = [
    "SpectrumSpec",
    "as_matrix",
    "as_vector",
    "char_poly_at",
    "inf_norm",
    "lu_solve",
    "make_similar",
    "matrix_inverse",
    "spectral_radius_estimate",
]


def as_vector(v, n: int | None = None) -> np.ndarray:
    """Validate and return a finite 1-d float64 array."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise DimensionMismatch(f"expected length {n}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def as_matrix(M, square: bool = False) -> np.ndarray:
    """Validate and return a finite 2-d float64 array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    return M


def inf_norm(M) -> float:
    """Induced infinity norm (max absolute row sum); max-abs for vectors."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        return float(np.max(np.abs(M))) if M.size else 0.0
    return float(np.max(np.sum(np.abs(M), axis=1))) if M.size else 0.0


def _lu_factor(M: np.ndarray):
    """LU with partial pivoting; raises on pivots below the relative threshold."""
    scale = inf_norm(M)
    with warnings.catch_warnings():
        # the pivot check below raises SingularMatrix; scipy's warning is noise
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if scale == 0.0 or np.min(pivots) < PIVOT_RTOL * scale:
        raise SingularMatrix(
            "matrix is singular to working precision "
            f"(min pivot {np.min(pivots) if pivots.size else 0.0:.3e}, scale {scale:.3e})"
        )
    return lu, piv


def lu_solve(M, rhs) -> np.ndarray:
    """Solve M y = rhs by LU with partial pivoting.

    ``rhs`` may be a vector or a matrix of stacked right-hand sides.
    Raises SingularMatrix when a pivot falls below 1e-13 * ||M||_inf.
    """
    M = as_matrix(M, square=True)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != M.shape[0]:
        raise DimensionMismatch(
            f"rhs length {rhs.shape[0]} does not match matrix size {M.shape[0]}"
        )
    factor = _lu_factor(M)
    return scipy.linalg.lu_solve(factor, rhs, check_finite=False)


def matrix_inverse(M) -> np.ndarray:
    """Explicit inverse via LU; used for operator-norm bounds only."""
    M = as_matrix(M, square=True)
    return lu_solve(M, np.eye(M.shape[0]))


def char_poly_at(M, z: complex) -> complex:
    """Evaluate det(M - z I); zero (to rounding) iff z is an eigenvalue."""
    M = as_matrix(M, square=True)
    return complex(np.linalg.det(M - z * np.eye(M.shape[0], dtype=complex)))


def _dominant_pair_estimate(u: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
    # Fit w ~ a*u + b*v and take the largest root modulus of z^2 - a z - b.
    # The minimum-norm solution keeps the dominant root exact even when u, v
    # become collinear (real dominant eigenvalue).
    coef, *_ = np.linalg.lstsq(np.column_stack((u, v)), w, rcond=None)
    a, b = coef
    disc = np.sqrt(complex(a * a + 4.0 * b))
    return max(abs((a + disc) / 2.0), abs((a - disc) / 2.0))


def spectral_radius_estimate(
    M,
    tol: float = 1e-6,
    restarts: int = 8,
    max_iter: int = 10_000,
    seed: int = 0,
) -> float:
    """Estimate the spectral radius sigma(M) of a square matrix.

    Power-type iteration: each step fits the next Krylov vector on the two
    previous ones, so conjugate-pair dominant eigenvalues resolve exactly.
    Runs ``restarts`` independent seeded starts and returns the largest
    stabilized estimate.

    Raises NoConvergence (with the best estimate attached, a lower bound)
    if no restart stabilizes within ``max_iter`` steps.
    """
    M = as_matrix(M, square=True)
    n = M.shape[0]
    if n == 0 or inf_norm(M) == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    converged: list[float] = []
    best = 0.0
    for _ in range(restarts):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        prev = np.inf
        hits = 0
        est = 0.0
        for _ in range(max_iter):
            u = M @ v
            nu = np.linalg.norm(u)
            if nu < 1e-280:
                # start vector fell into the (numerical) null space
                est = 0.0
                hits = 2
                break
            w = M @ u
            est = _dominant_pair_estimate(u, v, w)
            v = u / nu
            if abs(est - prev) <= 0.1 * tol * max(1.0, est):
                hits += 1
                if hits >= 2:
                    break
            else:
                hits = 0
            prev = est
        best = max(best, est)
        if hits >= 2:
            converged.append(est)
    if not converged:
        raise NoConvergence(
            f"spectral radius estimate did not stabilize within {max_iter} steps",
            best=best,
        )
    return max(converged)


@dataclass(frozen=True)
class SpectrumSpec:
    """Prescribed eigenvalue list (conjugate-closed) plus a basis seed."""

    eigenvalues: tuple
    seed: int = 0

    def max_modulus(self) -> float:
        return max((abs(complex(z)) for z in self.eigenvalues), default=0.0)


def _real_block_diagonal(eigenvalues) -> np.ndarray:
    evs = [complex(z) for z in eigenvalues]
    atol = 1e-12 * max(1.0, max((abs(z) for z in evs), default=1.0))
    blocks = []
    used = [False] * len(evs)
    for i, z in enumerate(evs):
        if used[i]:
            continue
        if abs(z.imag) <= atol:
            used[i] = True
            blocks.append(np.array([[z.real]]))
            continue
        match = None
        for j in range(i + 1, len(evs)):
            if not used[j] and abs(evs[j] - z.conjugate()) <= 1e-9 * (1.0 + abs(z)):
                match = j
                break
        if match is None:
            raise BadSpectrum(f"eigenvalue {z} has no conjugate partner")
        used[i] = used[match] = True
        a, b = z.real, z.imag
        blocks.append(np.array([[a, b], [-b, a]]))
    return scipy.linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))


def make_similar(spec: SpectrumSpec) -> np.ndarray:
    """Real matrix S D S^-1 whose spectrum equals ``spec.eigenvalues``.

    D is the real block-diagonal encoding of the spectrum (2x2 rotation
    blocks for conjugate pairs), and S is a random well-conditioned basis
    (cond(S) <= 2 by construction) drawn from ``spec.seed``.
    """
    D = _real_block_diagonal(spec.eigenvalues)
    n = D.shape[0]
    if n == 0:
        return D
    rng = np.random.default_rng(spec.seed)
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    svals = rng.uniform(0.8, 1.25, size=n)
    S = q1 @ (svals[:, None] * q2)
    # M = S D S^-1, computed as the solution of S^T M^T = (S D)^T
    return np.linalg.solve(S.T, (S @ D).T).T
