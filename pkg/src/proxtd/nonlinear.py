"""Proximal and extrapolated iterations for nonlinear contractions.

The proximal point P(x) solves y = T(y) + (x - y)/c by iterating the
rearranged contraction y <- (c/(c+1)) T(y) + x/(c+1), whose modulus is
c*gamma/(c+1) < 1 whenever T has declared modulus gamma < 1. The
extrapolated point x + ((c+1)/c)(P(x) - x) coincides with T(P(x)), which is
what buys the extra contraction factor gamma per step. The same machinery
drives the forward-backward split x = T(x) - H(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InnerNotConverged
from .linalg import as_vector, inf_norm
from .proxmulti import IterateTrace

INNER_CAP = 10_000

__all__ = [
    "NonlinearMap",
    "SplitProblem",
    "extrapolated_prox",
    "fbs_solve",
    "fbs_step",
    "modulus_probe",
    "nonlinear_prox",
    "prox_solve",
]


@dataclass(frozen=True)
class NonlinearMap:
    """Deterministic mapping x -> T(x) on R^dimension.

    ``modulus`` declares a Euclidean contraction modulus in (0, 1); proximal
    operations refuse maps without one (an empirical probe only lower-bounds
    the true modulus, so it is not a substitute).
    """

    dimension: int
    evaluator: object
    modulus: float | None = None

    def __call__(self, x) -> np.ndarray:
        y = np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)
        if y.shape != (self.dimension,):
            raise ValueError(f"evaluator returned shape {y.shape}, expected ({self.dimension},)")
        return y

    @classmethod
    def from_affine(cls, m) -> "NonlinearMap":
        return cls(m.n, lambda x: m.A @ x + m.b, modulus=None)


def _require_modulus(T: NonlinearMap) -> float:
    if T.modulus is None or not 0.0 < T.modulus < 1.0:
        raise ValueError("proximal operations need a declared contraction modulus in (0,1)")
    return T.modulus


def nonlinear_prox(T: NonlinearMap, c: float, x, inner_tol: float = 1e-10) -> np.ndarray:
    """Solve y = T(y) + (x - y)/c by fixed-point iteration from y0 = x.

    Stops when the equation residual drops below inner_tol (Euclidean norm);
    raises InnerNotConverged after the cap, which signals a misdeclared
    modulus.
    """
    _require_modulus(T)
    if c <= 0.0:
        raise ValueError(f"c must be positive, got {c}")
    x = as_vector(x, T.dimension)
    weight = c / (c + 1.0)
    base = x / (c + 1.0)
    y = x
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(INNER_CAP):
            y_next = weight * T(y) + base
            if not np.all(np.isfinite(y_next)):
                raise InnerNotConverged(
                    "inner proximal iteration diverged; the declared modulus is too small"
                )
            # ||y - T(y) - (x - y)/c|| == ((c+1)/c) * ||y - y_next||
            if np.linalg.norm(y - y_next) * (c + 1.0) / c <= inner_tol:
                return y_next
            y = y_next
    raise InnerNotConverged(
        f"inner proximal solve did not reach {inner_tol} within {INNER_CAP} iterations"
    )


def extrapolated_prox(T: NonlinearMap, c: float, x, inner_tol: float = 1e-10) -> np.ndarray:
    """x + ((c+1)/c)(P(x) - x), self-checked against T(P(x)) every call."""
    x = as_vector(x, T.dimension)
    px = nonlinear_prox(T, c, x, inner_tol)
    ex = x + ((c + 1.0) / c) * (px - x)
    drift = np.linalg.norm(ex - T(px))
    if drift > 10.0 * inner_tol:
        raise InnerNotConverged(
            f"extrapolated value drifts {drift:.3e} from T(P(x)); inner solve too loose"
        )
    return ex


def modulus_probe(T: NonlinearMap, pairs: int, seed: int = 0, radius: float = 1.0) -> float:
    """Largest sampled ratio ||T(x1)-T(x2)|| / ||x1-x2|| over pairs in a ball.

    A lower bound on the true modulus; pairs are drawn uniformly from the
    Euclidean ball of the given radius around the origin.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    rng = np.random.default_rng(seed)
    n = T.dimension

    def draw():
        g = rng.standard_normal(n)
        return radius * rng.random() ** (1.0 / n) * g / np.linalg.norm(g)

    worst = 0.0
    for _ in range(pairs):
        x1, x2 = draw(), draw()
        gap = np.linalg.norm(x1 - x2)
        if gap == 0.0:
            continue
        worst = max(worst, np.linalg.norm(T(x1) - T(x2)) / gap)
    return worst


@dataclass(frozen=True)
class SplitProblem:
    """Fixed point of x = T(x) - H(x) with strongly monotone single-valued H.

    ``beta`` is the monotonicity constant of H and ``alpha`` the step; no safe
    default step is derived, alpha is the caller's knob.
    """

    prox_map: NonlinearMap
    smooth: object
    beta: float
    alpha: float

    def h(self, x) -> np.ndarray:
        return np.asarray(self.smooth(np.asarray(x, dtype=float)), dtype=float)


def fbs_step(prob: SplitProblem, x, extrapolated: bool = False, inner_tol: float = 1e-10):
    """One forward-backward step.

    Plain: P_alpha(x - alpha H(x)). Extrapolated: with z = x - alpha H(x) and
    xbar = P_alpha(z), returns xbar + (xbar - z)/alpha - H(xbar), which is
    self-checked against T(xbar) - H(xbar).
    """
    if prob.alpha <= 0.0:
        raise ValueError("alpha must be positive")
    x = as_vector(x, prob.prox_map.dimension)
    z = x - prob.alpha * prob.h(x)
    xbar = nonlinear_prox(prob.prox_map, prob.alpha, z, inner_tol)
    if not extrapolated:
        return xbar
    out = xbar + (xbar - z) / prob.alpha - prob.h(xbar)
    drift = np.linalg.norm(out - (prob.prox_map(xbar) - prob.h(xbar)))
    if drift > 10.0 * inner_tol:
        raise InnerNotConverged(
            f"extrapolated FBS value drifts {drift:.3e} from T(xbar) - H(xbar)"
        )
    return out


def prox_solve(
    T: NonlinearMap,
    c: float,
    x0,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    extrapolated: bool = False,
    inner_tol: float = 1e-12,
) -> IterateTrace:
    """Iterate the (extrapolated) proximal map until ||x - T(x)||_inf <= tol."""
    step = extrapolated_prox if extrapolated else nonlinear_prox
    x = as_vector(x0, T.dimension)
    iterates = [x.copy()]
    residuals = [inf_norm(x - T(x))]
    method = "extrapolated_prox" if extrapolated else "prox"
    while residuals[-1] > tol and len(iterates) - 1 < max_iter:
        x = step(T, c, x, inner_tol)
        iterates.append(x.copy())
        residuals.append(inf_norm(x - T(x)))
    return IterateTrace(iterates, residuals, method, residuals[-1] <= tol)


def fbs_solve(
    prob: SplitProblem,
    x0,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    extrapolated: bool = False,
    inner_tol: float = 1e-12,
) -> IterateTrace:
    """Iterate fbs_step until ||x - (T(x) - H(x))||_inf <= tol."""
    x = as_vector(x0, prob.prox_map.dimension)

    def residual(v):
        return inf_norm(v - (prob.prox_map(v) - prob.h(v)))

    iterates = [x.copy()]
    residuals = [residual(x)]
    method = "extrapolated_fbs" if extrapolated else "fbs"
    while residuals[-1] > tol and len(iterates) - 1 < max_iter:
        x = fbs_step(prob, x, extrapolated, inner_tol)
        iterates.append(x.copy())
        residuals.append(residual(x))
    return IterateTrace(iterates, residuals, method, residuals[-1] <= tol)
