"""Proximal and multistep mappings for x = Ax + b, and their accelerated blends.

The two basic one-step maps are

    prox:      y = (I - lam*A)^-1 (lam*b + (1-lam)*x)
    multistep: y = (I - lam*A)^-1 (b + (1-lam)*A x)

with lam = c/(c+1). The multistep map is the extrapolation of the proximal
map by the factor (c+1)/c, and blending the two with a factor gamma gives a
family of iterations whose spectral radius dips below the proximal one for
every gamma in the acceleration region.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AssumptionViolated, DimensionMismatch
from .linalg import as_matrix, as_vector, inf_norm, lu_solve, spectral_radius_estimate

SIGMA_SLACK = 1e-8

__all__ = [
    "AffineMap",
    "IterateTrace",
    "MultistepParam",
    "apply_T",
    "extrapolate_from_prox",
    "gamma_iterate",
    "geometric_rate",
    "lambda_matrices",
    "multistep_apply",
    "proximal_apply",
    "solve_fixed_point",
    "vm_apply",
    "w_mapping_apply",
]


@dataclass(frozen=True)
class MultistepParam:
    """Coupled pair lam in (0,1) and c = lam/(1-lam) > 0."""

    lam: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lam must lie in (0,1), got {self.lam}")

    @property
    def c(self) -> float:
        return self.lam / (1.0 - self.lam)

    @classmethod
    def from_c(cls, c: float) -> "MultistepParam":
        if c <= 0.0:
            raise ValueError(f"c must be positive, got {c}")
        return cls(c / (c + 1.0))


@dataclass(frozen=True)
class AffineMap:
    """The mapping Tx = Ax + b with I - A nonsingular.

    ``sigma`` may carry a known spectral radius (exact for constructed test
    matrices); otherwise it is estimated on first use. Set
    ``check_invertible=False`` to store maps whose I - A is singular, e.g.
    improper pieces of a piecewise-affine family.
    """

    A: np.ndarray
    b: np.ndarray
    sigma: float | None = None
    check_invertible: bool = field(default=True, repr=False)

    def __post_init__(self):
        A = as_matrix(self.A, square=True)
        b = as_vector(self.b, A.shape[0])
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.check_invertible:
            self.fixed_point  # factors I - A, raises SingularMatrix if needed

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def fixed_point(self) -> np.ndarray:
        """x* = (I - A)^-1 b."""
        x = lu_solve(np.eye(self.n) - self.A, self.b)
        x.setflags(write=False)
        return x

    @cached_property
    def sigma_estimate(self) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return spectral_radius_estimate(self.A)

    @property
    def assumption_1_1_ok(self) -> bool:
        """Estimated sigma(A) <= 1 (+ slack), the standing spectral assumption."""
        return self.sigma_estimate <= 1.0 + SIGMA_SLACK


@dataclass
class IterateTrace:
    """Record of a fixed-point solve: every iterate plus its residual.

    residuals[k] is ||x_k - T x_k||_inf recomputed from the iterate itself.
    """

    iterates: list
    residuals: list
    method: str
    converged: bool
    flags: tuple = ()

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


def apply_T(m: AffineMap, x) -> np.ndarray:
    """Tx = Ax + b."""
    x = as_vector(x, m.n)
    return m.A @ x + m.b


def proximal_apply(m: AffineMap, p: MultistepParam, x) -> np.ndarray:
    """Solve y = Ty + (x - y)/c, i.e. y = (I - lam*A)^-1 (lam*b + (1-lam)*x)."""
    x = as_vector(x, m.n)
    lam = p.lam
    shifted = np.eye(m.n) - lam * m.A
    return lu_solve(shifted, lam * m.b + (1.0 - lam) * x)


def multistep_apply(m: AffineMap, p: MultistepParam, x) -> np.ndarray:
    """y = (I - lam*A)^-1 (b + (1-lam)*A x), the geometric blend of T-powers."""
    x = as_vector(x, m.n)
    lam = p.lam
    shifted = np.eye(m.n) - lam * m.A
    return lu_solve(shifted, m.b + (1.0 - lam) * (m.A @ x))


def extrapolate_from_prox(x, px, p: MultistepParam) -> np.ndarray:
    """x + ((c+1)/c)(px - x); recovers the multistep value from the prox value."""
    x = as_vector(x)
    px = as_vector(px, x.shape[0])
    return x + ((p.c + 1.0) / p.c) * (px - x)


def gamma_iterate(m: AffineMap, p: MultistepParam, gamma: float, x) -> np.ndarray:
    """(1-gamma) * prox + gamma * multistep; gamma=0 and gamma=1 are the endpoints."""
    if gamma < 0.0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if gamma == 0.0:
        return proximal_apply(m, p, x)
    if gamma == 1.0:
        return multistep_apply(m, p, x)
    return (1.0 - gamma) * proximal_apply(m, p, x) + gamma * multistep_apply(m, p, x)


def w_mapping_apply(m: AffineMap, p: MultistepParam, anchor, y, variant: str = "W") -> np.ndarray:
    """One application of the anchored contraction whose fixed point is the
    multistep value (variant "W") or the proximal value (variant "Wbar")."""
    anchor = as_vector(anchor, m.n)
    y = as_vector(y, m.n)
    lam = p.lam
    if variant == "W":
        return (1.0 - lam) * apply_T(m, anchor) + lam * apply_T(m, y)
    if variant == "Wbar":
        return (1.0 - lam) * anchor + lam * apply_T(m, y)
    raise ValueError(f"variant must be 'W' or 'Wbar', got {variant!r}")


def vm_apply(m: AffineMap, p: MultistepParam, steps: int, x) -> np.ndarray:
    """m-fold application of the anchored mapping W_x starting at x.

    Approximates the multistep value without a matrix solve; steps=1 equals
    a plain T step and steps -> inf approaches the multistep value.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    x = as_vector(x, m.n)
    lam = p.lam
    tx = apply_T(m, x)
    y = x
    for _ in range(steps):
        y = (1.0 - lam) * tx + lam * apply_T(m, y)
    return y


def lambda_matrices(m: AffineMap, p: MultistepParam):
    """Matrices of the affine forms of the multistep and proximal maps.

    Returns (A_lam, b_lam, Abar_lam, bbar_lam) with
        multistep x = A_lam x + b_lam,    A_lam = (I-lam*A)^-1 (1-lam) A
        prox x      = Abar_lam x + bbar_lam,  Abar_lam = (I-lam*A)^-1 (1-lam)
    """
    lam = p.lam
    eye = np.eye(m.n)
    shifted = eye - lam * m.A
    block = lu_solve(shifted, np.column_stack(((1.0 - lam) * m.A, m.b)))
    a_lam, b_lam = block[:, : m.n], block[:, m.n]
    abar_lam = lu_solve(shifted, (1.0 - lam) * eye)
    bbar_lam = lam * b_lam
    return a_lam, b_lam, abar_lam, bbar_lam


def geometric_rate(residuals, window: int = 30) -> float:
    """Geometric decay rate: exp of the LS slope of log residual over the tail."""
    r = np.asarray(residuals, dtype=float)
    r = r[r > 0.0]
    if r.size < 2:
        return float("nan")
    tail = r[-window:]
    k = np.arange(tail.size, dtype=float)
    slope = np.polyfit(k, np.log(tail), 1)[0]
    return float(np.exp(slope))


def _iteration_matrix(m: AffineMap, method: str, p, gamma, m_steps):
    if method == "plainT":
        return m.A, m.b
    if p is None:
        raise ValueError(f"method {method!r} requires a MultistepParam")
    a_lam, b_lam, abar_lam, bbar_lam = lambda_matrices(m, p)
    if method == "multistep":
        return a_lam, b_lam
    if method == "proximal":
        return abar_lam, bbar_lam
    if method == "gamma":
        if gamma is None or gamma < 0.0:
            raise ValueError("method 'gamma' requires gamma >= 0")
        return (
            (1.0 - gamma) * abar_lam + gamma * a_lam,
            (1.0 - gamma) * bbar_lam + gamma * b_lam,
        )
    if method == "vm":
        if m_steps is None or m_steps < 1:
            raise ValueError("method 'vm' requires m >= 1")
        lam = p.lam
        g = np.zeros_like(m.A)
        power = np.eye(m.n)
        for j in range(1, m_steps + 1):
            power = m.A @ power
            g += (1.0 - lam) * lam ** (j - 1) * power
        g += lam**m_steps * power
        offset = vm_apply(m, p, m_steps, np.zeros(m.n))
        return g, offset
    raise ValueError(f"unknown method {method!r}")


def solve_fixed_point(
    m: AffineMap,
    method: str = "multistep",
    p: MultistepParam | None = None,
    x0=None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    gamma: float | None = None,
    m_steps: int | None = None,
    force: bool = False,
) -> IterateTrace:
    """Iterate the chosen map until ||x - Tx||_inf <= tol.

    method is one of "plainT", "proximal", "multistep", "gamma" (pass gamma),
    "vm" (pass m_steps). Requires the spectral assumption flag unless
    ``force`` is given, in which case the trace is tagged "assumption_violated"
    and the solve proceeds as long as the shifted systems stay nonsingular.
    """
    flags: tuple = ()
    if not m.assumption_1_1_ok:
        if not force:
            raise AssumptionViolated(
                f"estimated sigma(A) = {m.sigma_estimate:.6g} > 1; pass force=True to iterate anyway"
            )
        flags = ("assumption_violated",)
    x = np.zeros(m.n) if x0 is None else as_vector(x0, m.n)
    G, g = _iteration_matrix(m, method, p, gamma, m_steps)
    iterates = [x.copy()]
    residuals = [inf_norm(x - apply_T(m, x))]
    converged = residuals[-1] <= tol
    while not converged and len(iterates) - 1 < max_iter:
        x = G @ x + g
        iterates.append(x.copy())
        residuals.append(inf_norm(x - apply_T(m, x)))
        converged = residuals[-1] <= tol
    return IterateTrace(iterates, residuals, method, converged, flags)
