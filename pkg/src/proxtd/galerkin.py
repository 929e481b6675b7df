"""Projections onto span(Phi) and the exact low-dimensional projected systems.

The oblique projection Pi = Phi (Psi' Xi Phi)^-1 Psi' Xi reduces the n-dim
multistep equation to the s-dim system C r = d with C = I - Q. The iterations
here are the deterministic counterparts of the simulation methods in
``mcsim``: value-iteration style steps on (Q, d), proximal-regularized steps
with an independent parameter chat, and the normal-equation variant
preconditioned by a positive definite Sigma.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import AssumptionViolated, BadStochastic, NotPositiveDefinite, SingularMatrix
from .linalg import (
    as_matrix,
    as_vector,
    inf_norm,
    lu_solve,
    matrix_inverse,
    spectral_radius_estimate,
)
from .proxmulti import AffineMap, MultistepParam, lambda_matrices

GRAM_DET_TOL = 1e-10

__all__ = [
    "LowDimSystem",
    "ProjectionSpec",
    "assemble_lowdim",
    "build_projection",
    "error_bound",
    "lspe_iterate",
    "lstd_solve",
    "projection_from_aggregation",
    "prox_projected_iterate",
    "seminorm_project",
    "sigma_regularized_iterate",
]


@dataclass(frozen=True)
class ProjectionSpec:
    """Basis Phi (n x s), test basis Psi (defaults to Phi), and weights xi >= 0."""

    phi: np.ndarray
    xi: np.ndarray
    psi: np.ndarray | None = None

    def __post_init__(self):
        phi = as_matrix(self.phi)
        xi = as_vector(self.xi, phi.shape[0])
        psi = phi if self.psi is None else as_matrix(self.psi)
        if psi.shape != phi.shape:
            raise ValueError(f"psi shape {psi.shape} must match phi shape {phi.shape}")
        if np.any(xi < 0.0):
            raise ValueError("projection weights must be nonnegative")
        if abs(np.linalg.det(phi.T @ phi)) <= GRAM_DET_TOL:
            raise ValueError("phi must have full column rank (Gram determinant too small)")
        for arr in (phi, xi, psi):
            arr.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "psi", psi)
        self._cross_factor  # checks psi' Xi phi nonsingular at construction

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def s(self) -> int:
        return self.phi.shape[1]

    @cached_property
    def _weighted_psi(self) -> np.ndarray:
        # Xi is diagonal, so Psi' Xi is just a row scaling of Psi transposed.
        return (self.psi * self.xi[:, None]).T

    @cached_property
    def _cross_factor(self) -> np.ndarray:
        cross = self._weighted_psi @ self.phi
        try:
            return matrix_inverse(cross)
        except SingularMatrix as exc:
            raise SingularMatrix("psi' Xi phi is singular") from exc


def build_projection(spec: ProjectionSpec) -> np.ndarray:
    """Oblique projection Pi = Phi (Psi' Xi Phi)^-1 Psi' Xi onto span(Phi)."""
    return spec.phi @ spec._cross_factor @ spec._weighted_psi


def seminorm_project(spec: ProjectionSpec, x) -> np.ndarray:
    """Weighted least-squares projection: Phi * argmin_r sum_i xi_i (x_i - phi_i' r)^2.

    Valid with zero weights as long as Phi' Xi Phi stays nonsingular; agrees
    with build_projection(spec) @ x on the Psi = Phi path.
    """
    x = as_vector(x, spec.n)
    weighted_phi = (spec.phi * spec.xi[:, None]).T
    gram = weighted_phi @ spec.phi
    r = lu_solve(gram, weighted_phi @ x)
    return spec.phi @ r


def projection_from_aggregation(phi, D) -> np.ndarray:
    """Aggregation projection Pi = Phi D for row-stochastic Phi (n x s) and D (s x n).

    Warns unless D Phi = I within 1e-8, the condition for Pi to be idempotent.
    """
    phi = as_matrix(phi)
    D = as_matrix(D)
    if D.shape != (phi.shape[1], phi.shape[0]):
        raise ValueError(f"D shape {D.shape} incompatible with phi shape {phi.shape}")
    for name, M in (("phi", phi), ("D", D)):
        if np.any(M < 0.0) or np.any(np.abs(M.sum(axis=1) - 1.0) > 1e-10):
            raise BadStochastic(f"rows of {name} must be probability distributions")
    if inf_norm(D @ phi - np.eye(phi.shape[1])) > 1e-8:
        warnings.warn("D @ phi != I: Phi D is not idempotent", stacklevel=2)
    return phi @ D


@dataclass(frozen=True)
class LowDimSystem:
    """The s-dimensional projected system C r = d.

    Q is stored and C = I - Q is derived, so the identity between the two
    holds exactly by construction.
    """

    Q: np.ndarray
    d: np.ndarray
    lam: float

    def __post_init__(self):
        Q = as_matrix(self.Q, square=True)
        d = as_vector(self.d, Q.shape[0])
        Q.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_c(cls, C, d, lam: float) -> "LowDimSystem":
        C = as_matrix(C, square=True)
        return cls(np.eye(C.shape[0]) - C, d, lam)

    @cached_property
    def C(self) -> np.ndarray:
        C = np.eye(self.s) - self.Q
        C.setflags(write=False)
        return C

    @property
    def s(self) -> int:
        return self.Q.shape[0]

    @cached_property
    def extrapolation_ok(self) -> bool:
        """sigma(I - C) <= 1 (+ slack); gate for the extrapolated proximal step."""
        return spectral_radius_estimate(self.Q) <= 1.0 + 1e-8


def assemble_lowdim(m: AffineMap, spec: ProjectionSpec, p: MultistepParam) -> LowDimSystem:
    """Build Q = (Psi'Xi Phi)^-1 Psi'Xi A_lam Phi and d likewise from b_lam."""
    if spec.n != m.n:
        raise ValueError(f"projection is for n={spec.n}, map has n={m.n}")
    a_lam, b_lam, _, _ = lambda_matrices(m, p)
    w = spec._weighted_psi
    Q = spec._cross_factor @ (w @ a_lam @ spec.phi)
    d = spec._cross_factor @ (w @ b_lam)
    return LowDimSystem(Q, d, p.lam)


def _condition_estimate(C: np.ndarray) -> float:
    return inf_norm(C) * inf_norm(matrix_inverse(C))


def lstd_solve(sys: LowDimSystem) -> np.ndarray:
    """Solve C r = d directly; x_lam = Phi r then solves the projected equation.

    Raises SingularMatrix when C is singular or its condition estimate
    exceeds 1e12 (near-singular projected system).
    """
    cond = _condition_estimate(sys.C)
    if cond > 1e12:
        raise SingularMatrix(f"projected matrix near singular (condition estimate {cond:.3e})")
    return lu_solve(sys.C, sys.d)


def lspe_iterate(sys: LowDimSystem, r, interpolated: bool = False, lam: float | None = None) -> np.ndarray:
    """One projected value-iteration step r - (C r - d).

    The interpolated variant damps the step by lam (default: the system's
    own lam), which reproduces the projected proximal step on span(Phi).
    """
    r = as_vector(r, sys.s)
    step = sys.C @ r - sys.d
    if interpolated:
        lam = sys.lam if lam is None else lam
        return r - lam * step
    return r - step


def prox_projected_iterate(sys: LowDimSystem, chat: float, r, extrapolated: bool = False) -> np.ndarray:
    """Proximal step on C r = d with independent regularization parameter chat.

    Plain: r - ((1/chat) I + C)^-1 (C r - d). The extrapolated variant scales
    the step by (chat+1)/chat and requires sigma(I - C) <= 1 (checked once per
    system and cached).
    """
    if chat <= 0.0:
        raise ValueError(f"chat must be positive, got {chat}")
    r = as_vector(r, sys.s)
    if extrapolated and not sys.extrapolation_ok:
        raise AssumptionViolated("sigma(I - C) > 1: extrapolated step not justified")
    shifted = np.eye(sys.s) / chat + sys.C
    step = lu_solve(shifted, sys.C @ r - sys.d)
    if extrapolated:
        step = ((chat + 1.0) / chat) * step
    return r - step


def sigma_regularized_iterate(
    sys: LowDimSystem,
    Sigma,
    chat: float,
    r,
    extrapolated: bool = False,
) -> np.ndarray:
    """Proximal step on the normal equations C' Sigma^-1 C r = C' Sigma^-1 d."""
    if chat <= 0.0:
        raise ValueError(f"chat must be positive, got {chat}")
    r = as_vector(r, sys.s)
    Sigma = as_matrix(Sigma, square=True)
    try:
        chol = scipy.linalg.cho_factor(Sigma, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Sigma must be symmetric positive definite") from exc
    sic = scipy.linalg.cho_solve(chol, sys.C, check_finite=False)  # Sigma^-1 C
    normal = np.eye(sys.s) / chat + sys.C.T @ sic
    residual = sys.C @ r - sys.d
    step = lu_solve(normal, sic.T @ residual)
    if extrapolated:
        step = ((chat + 1.0) / chat) * step
    return r - step


def _weighted_op_norm(M: np.ndarray, xi: np.ndarray) -> float:
    if np.any(xi <= 0.0):
        raise ValueError("weighted norm requires strictly positive weights")
    root = np.sqrt(xi)
    scaled = (M * root[:, None]) / root[None, :]
    return float(np.sqrt(spectral_radius_estimate(scaled.T @ scaled)))


def error_bound(m: AffineMap, spec: ProjectionSpec, p: MultistepParam, norm: str = "inf") -> float:
    """Bound ||x* - x_lam|| <= ||(I - Pi A_lam)^-1|| * ||x* - Pi x*||.

    norm is "inf" or "weighted" (the xi-weighted Euclidean norm; requires
    strictly positive weights).
    """
    a_lam = lambda_matrices(m, p)[0]
    pi = build_projection(spec)
    inv = matrix_inverse(np.eye(m.n) - pi @ a_lam)
    gap = m.fixed_point - pi @ m.fixed_point
    if norm == "inf":
        return inf_norm(inv) * inf_norm(gap)
    if norm == "weighted":
        vec = float(np.sqrt(np.sum(spec.xi * gap * gap)))
        return _weighted_op_norm(inv, spec.xi) * vec
    raise ValueError(f"norm must be 'inf' or 'weighted', got {norm!r}")
