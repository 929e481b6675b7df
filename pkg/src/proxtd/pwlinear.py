"""Piecewise-affine fixed points: T(x) = min / max / min-max over affine pieces.

A selection assigns one component (or one inner group) to every row; the
induced affine map mixes component rows. The solvers linearize T at the
current iterate by greedy selection and take a multistep step of the
selected map: monotonically from above under nonnegativity assumptions, or
with a randomized greedy refresh under a common contraction modulus.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AssumptionViolated,
    BadInitialCondition,
    ContractionCheckFailed,
    EnumerationTooLarge,
    NoConvergence,
    NoProperComponent,
    NonMonotoneStep,
)
from .linalg import as_matrix, as_vector, inf_norm, lu_solve, spectral_radius_estimate
from .proxmulti import AffineMap, IterateTrace, MultistepParam, multistep_apply, proximal_apply

ENUMERATION_CAP = 10**6
PROPER_MARGIN = 1e-8

__all__ = [
    "PiecewiseAffineMap",
    "ProperEntry",
    "ProperReport",
    "brute_force_xstar",
    "composed_randomized_solve",
    "contraction_modulus",
    "greedy_select",
    "linearized_iterate",
    "monotone_solve",
    "properness_report",
    "pw_apply",
    "randomized_solve",
    "selected_apply",
    "selected_map",
    "selected_multistep",
]


@dataclass(frozen=True)
class PiecewiseAffineMap:
    """Finite family of affine maps combined rowwise by min, max, or min-max.

    For the "minmax" combinator, ``groups`` partitions component indices into
    inner-max groups; the outer min runs over groups.
    """

    components: tuple
    combinator: str = "min"
    groups: tuple | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("component list must be nonempty")
        n = comps[0].n
        if any(c.n != n for c in comps):
            raise ValueError("all components must share the same dimension")
        if self.combinator not in ("min", "max", "minmax"):
            raise ValueError(f"combinator must be min, max or minmax, got {self.combinator!r}")
        if self.combinator == "minmax":
            groups = tuple(tuple(g) for g in (self.groups or ()))
            flat = sorted(i for g in groups for i in g)
            if not groups or flat != list(range(len(comps))):
                raise ValueError("minmax groups must partition the component indices")
            object.__setattr__(self, "groups", groups)
        elif self.groups is not None:
            raise ValueError("groups only apply to the minmax combinator")
        object.__setattr__(self, "components", comps)

    @property
    def n(self) -> int:
        return self.components[0].n

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def num_choices(self) -> int:
        """Per-row choice count: components, or inner groups for minmax."""
        return len(self.groups) if self.combinator == "minmax" else self.k


def _affine_rows(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    # 0 * (-inf) counts as 0 so -inf coordinates propagate only through
    # nonzero entries (the extended-real convention for monotone families).
    if np.all(np.isfinite(x)):
        return A @ x + b
    with np.errstate(invalid="ignore"):
        contrib = A * x[None, :]
    contrib[A == 0.0] = 0.0
    out = contrib.sum(axis=1) + b
    if np.any(np.isnan(out)):
        raise ValueError("indeterminate extended-real combination (-inf plus +inf)")
    return out


def _choice_values(pmap: PiecewiseAffineMap, x: np.ndarray) -> np.ndarray:
    """Value table (num_choices, n): component rows, or inner-max rows per group."""
    vals = np.stack([_affine_rows(c.A, c.b, x) for c in pmap.components])
    if pmap.combinator != "minmax":
        return vals
    return np.stack([vals[list(g)].max(axis=0) for g in pmap.groups])


def pw_apply(pmap: PiecewiseAffineMap, x):
    """Combinator value of T(x) and the per-row attaining choice index.

    Ties break to the lowest index, deterministically.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (pmap.n,):
        raise ValueError(f"x must have shape ({pmap.n},)")
    vals = _choice_values(pmap, x)
    sel = vals.argmax(axis=0) if pmap.combinator == "max" else vals.argmin(axis=0)
    return vals[sel, np.arange(pmap.n)], sel


def greedy_select(pmap: PiecewiseAffineMap, x) -> np.ndarray:
    """Per-row choice attaining the combinator at x (lowest index on ties)."""
    return pw_apply(pmap, x)[1]


def selected_apply(pmap: PiecewiseAffineMap, sel, x) -> np.ndarray:
    """T_sel(x): the value of the selection's rows at x (same arithmetic as pw_apply)."""
    sel = np.asarray(sel, dtype=np.int64)
    x = np.asarray(x, dtype=float)
    return _choice_values(pmap, x)[sel, np.arange(pmap.n)]


def selected_map(pmap: PiecewiseAffineMap, sel) -> AffineMap:
    """Affine map built by taking row i from component sel[i] (min / max only)."""
    if pmap.combinator == "minmax":
        raise ValueError("a minmax selection is not affine; use selected_apply")
    sel = np.asarray(sel, dtype=np.int64)
    rows = np.arange(pmap.n)
    A = np.stack([c.A for c in pmap.components])[sel, rows, :]
    b = np.stack([c.b for c in pmap.components])[sel, rows]
    return AffineMap(A, b, check_invertible=False)


def selected_multistep(
    pmap: PiecewiseAffineMap,
    p: MultistepParam,
    sel,
    x,
    eps: float = 1e-12,
) -> np.ndarray:
    """Multistep value of the selected map at x.

    Affine selections use the closed-form solve. For minmax selections the
    selected map is only piecewise affine, so the multistep value is summed
    from its truncated power series (experimental path).
    """
    x = as_vector(x, pmap.n)
    if pmap.combinator != "minmax":
        return multistep_apply(selected_map(pmap, sel), p, x)
    warnings.warn(
        "minmax multistep uses a truncated series of a nonlinear selection (experimental)",
        stacklevel=2,
    )
    lam = p.lam
    acc = x.copy()
    prev = x
    factor = 1.0
    for _ in range(100_000):
        cur = selected_apply(pmap, sel, prev)
        term = factor * (cur - prev)
        acc = acc + term
        if factor * inf_norm(cur - prev) < eps:
            return acc
        prev = cur
        factor *= lam
    raise NoConvergence("minmax multistep series did not reach the truncation bound")


def linearized_iterate(
    pmap: PiecewiseAffineMap,
    p: MultistepParam,
    x,
    variant: str = "multistep",
    m_steps: int | None = None,
) -> np.ndarray:
    """Greedy-select at x, then step with the selected map.

    variant: "multistep" (T_sel^(lam) x), "proximal" (P_sel^(c) x), or
    "mfold" (T_sel^m x, pass m_steps).
    """
    x = as_vector(x, pmap.n)
    sel = greedy_select(pmap, x)
    if variant == "multistep":
        return selected_multistep(pmap, p, sel, x)
    if variant == "proximal":
        return proximal_apply(selected_map(pmap, sel), p, x)
    if variant == "mfold":
        if m_steps is None or m_steps < 1:
            raise ValueError("variant 'mfold' requires m_steps >= 1")
        y = x
        for _ in range(m_steps):
            y = selected_apply(pmap, sel, y)
        return y
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class ProperEntry:
    selection: tuple
    sigma: float
    proper: bool
    fixed_point: np.ndarray | None


@dataclass(frozen=True)
class ProperReport:
    combinator: str
    entries: tuple
    exhaustive: bool

    @property
    def proper_entries(self) -> tuple:
        return tuple(e for e in self.entries if e.proper)


def _enumerate_selections(pmap: PiecewiseAffineMap, cap: int):
    size = pmap.k ** pmap.n
    if size <= cap:
        return [tuple(s) for s in itertools.product(range(pmap.k), repeat=pmap.n)], True
    return [(c,) * pmap.n for c in range(pmap.k)], False


def properness_report(pmap: PiecewiseAffineMap, cap: int = ENUMERATION_CAP) -> ProperReport:
    """Classify selections: proper iff sigma(A_sel) < 1, with fixed point x_sel.

    Enumerates the full row-choice product when its size is within ``cap``,
    otherwise falls back to the pure per-component selections only. For the
    minmax combinator only the affine pieces are classified.
    """
    if pmap.combinator == "minmax":
        selections, exhaustive = [(c,) * pmap.n for c in range(pmap.k)], False
        base = PiecewiseAffineMap(pmap.components, "min")
    else:
        selections, exhaustive = _enumerate_selections(pmap, cap)
        base = pmap
    entries = []
    for sel in selections:
        m = selected_map(base, np.asarray(sel))
        sigma = spectral_radius_estimate(m.A)
        proper = sigma < 1.0 - PROPER_MARGIN
        x_mu = lu_solve(np.eye(pmap.n) - m.A, m.b) if proper else None
        entries.append(ProperEntry(tuple(sel), sigma, proper, x_mu))
    return ProperReport(pmap.combinator, tuple(entries), exhaustive)


def brute_force_xstar(pmap: PiecewiseAffineMap, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Componentwise min (max for the max combinator) of proper fixed points.

    The enumeration oracle against which the iterative solvers are checked.
    """
    if pmap.combinator == "minmax":
        raise ValueError("brute-force oracle supports min and max combinators only")
    if pmap.k ** pmap.n > cap:
        raise EnumerationTooLarge(f"selection product {pmap.k}**{pmap.n} exceeds cap {cap}")
    report = properness_report(pmap, cap)
    proper = report.proper_entries
    if not proper:
        raise NoProperComponent("no selection has spectral radius below one")
    stack = np.stack([e.fixed_point for e in proper])
    return stack.max(axis=0) if pmap.combinator == "max" else stack.min(axis=0)


def contraction_modulus(pmap: PiecewiseAffineMap, weights=None) -> float:
    """Largest weighted-sup-norm modulus over the component matrices.

    Rowwise, so it bounds every row-mixed selection (and inner maxes) too.
    """
    v = np.ones(pmap.n) if weights is None else as_vector(weights, pmap.n)
    if np.any(v <= 0.0):
        raise ValueError("weights must be strictly positive")
    return max(float(np.max((np.abs(c.A) @ v) / v)) for c in pmap.components)


def monotone_solve(
    pmap: PiecewiseAffineMap,
    p: MultistepParam,
    x0,
    tol: float = 1e-10,
    floor: float = -1e12,
    max_iter: int = 100_000,
) -> IterateTrace:
    """Linearized multistep iteration from above: x_{k+1} = T_sel^(lam) x_k.

    Requires the min combinator, nonnegative component matrices, and
    x0 >= T(x0). The trace is componentwise nonincreasing (violations abort
    with NonMonotoneStep); every accepted selection is certified proper. A
    coordinate falling below ``floor`` stops the run with the
    "divergent_to_minus_infinity" flag.
    """
    if pmap.combinator != "min":
        raise ValueError("the monotone algorithm applies to the min combinator")
    if any(np.any(c.A < 0.0) for c in pmap.components):
        raise ValueError("the monotone algorithm needs nonnegative component matrices")
    x = as_vector(x0, pmap.n)
    val, sel = pw_apply(pmap, x)
    slack = 1e-12 * (1.0 + inf_norm(x))
    if np.any(val > x + slack):
        raise BadInitialCondition("monotone algorithm requires x0 >= T(x0) componentwise")
    iterates = [x.copy()]
    residuals = [inf_norm(x - val)]
    flags: tuple = ()
    converged = residuals[-1] <= tol
    sigma_cache: dict = {}
    while not converged and len(iterates) - 1 < max_iter:
        key = tuple(sel)
        m_sel = selected_map(pmap, sel)
        sigma = sigma_cache.get(key)
        if sigma is None:
            sigma = spectral_radius_estimate(m_sel.A)
            sigma_cache[key] = sigma
        if sigma >= 1.0 - PROPER_MARGIN:
            raise AssumptionViolated(
                f"greedy selection with T_sel x <= x has sigma estimate {sigma:.6g} >= 1"
            )
        x_next = multistep_apply(m_sel, p, x)
        if np.any(x_next > x + 1e-12 * (1.0 + inf_norm(x))):
            raise NonMonotoneStep("iterate increased componentwise")
        x = x_next
        val, sel = pw_apply(pmap, x)
        iterates.append(x.copy())
        residuals.append(inf_norm(x - val))
        converged = residuals[-1] <= tol
        if np.any(x < floor):
            flags = ("divergent_to_minus_infinity",)
            break
    return IterateTrace(iterates, residuals, "monotone", converged, flags)


def randomized_solve(
    pmap: PiecewiseAffineMap,
    p: MultistepParam,
    prob: float,
    seed: int,
    x0,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    weights=None,
) -> IterateTrace:
    """Randomized linearized iteration under a common contraction modulus.

    With probability ``prob`` take a plain T step (which also refreshes the
    greedy selection); otherwise take a multistep step of the held selection.
    The components must share a weighted-sup-norm modulus rho < 1, certified
    rowwise before iterating.
    """
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie in (0,1), got {prob}")
    rho = contraction_modulus(pmap, weights)
    if rho >= 1.0:
        raise ContractionCheckFailed(
            f"components have weighted-sup-norm modulus {rho:.6g} >= 1"
        )
    rng = np.random.default_rng(seed)
    x = as_vector(x0, pmap.n)
    val, sel = pw_apply(pmap, x)
    held = sel
    iterates = [x.copy()]
    residuals = [inf_norm(x - val)]
    converged = residuals[-1] <= tol
    while not converged and len(iterates) - 1 < max_iter:
        if rng.random() < prob:
            held = sel  # the selection that attained T at the current point
            x = val
        else:
            x = selected_multistep(pmap, p, held, x)
        val, sel = pw_apply(pmap, x)
        iterates.append(x.copy())
        residuals.append(inf_norm(x - val))
        converged = residuals[-1] <= tol
    return IterateTrace(iterates, residuals, "randomized", converged)


def _lipschitz_probe(fn, n: int, pairs: int = 32, seed: int = 0, radius: float = 1.0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        x1 = radius * rng.standard_normal(n)
        x2 = radius * rng.standard_normal(n)
        gap = np.linalg.norm(x1 - x2)
        if gap == 0.0:
            continue
        worst = max(worst, np.linalg.norm(fn(x1) - fn(x2)) / gap)
    return worst


def composed_randomized_solve(
    pmap: PiecewiseAffineMap,
    W,
    p: MultistepParam,
    prob: float,
    seed: int,
    x0,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    guard: float = 1e12,
) -> IterateTrace:
    """Randomized scheme on the composed equation x = W T(x).

    The multistep branch uses the affine map (W A_sel, W b_sel). If the
    spectral checks on the composed multistep matrices or a Lipschitz probe
    of W T fail, a norm-mismatch warning is issued and the run continues with
    a divergence guard.
    """
    if pmap.combinator == "minmax":
        raise ValueError("composed solves support min and max combinators only")
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie in (0,1), got {prob}")
    W = as_matrix(W, square=True)
    if W.shape[0] != pmap.n:
        raise ValueError("W must match the problem dimension")
    lam = p.lam
    eye = np.eye(pmap.n)
    checks_ok = True
    for c in pmap.components:
        wa = W @ c.A
        try:
            multi = lu_solve(eye - lam * wa, (1.0 - lam) * wa)
            if spectral_radius_estimate(multi) >= 1.0:
                checks_ok = False
        except Exception:
            checks_ok = False
        if not checks_ok:
            break
    if checks_ok:
        probe = _lipschitz_probe(lambda v: W @ pw_apply(pmap, v)[0], pmap.n, seed=seed)
        checks_ok = probe < 1.0
    flags: tuple = ()
    if not checks_ok:
        warnings.warn(
            "norm mismatch: composed mapping W T not certified contractive; "
            "running with a divergence guard",
            stacklevel=2,
        )
        flags = ("norm_mismatch",)
    rng = np.random.default_rng(seed)
    x = as_vector(x0, pmap.n)

    def composed_value(v):
        val, sel = pw_apply(pmap, v)
        return W @ val, sel

    val, sel = composed_value(x)
    held = sel
    iterates = [x.copy()]
    residuals = [inf_norm(x - val)]
    converged = residuals[-1] <= tol
    while not converged and len(iterates) - 1 < max_iter:
        if rng.random() < prob:
            held = sel
            x = val
        else:
            m_sel = selected_map(pmap, held)
            composed = AffineMap(W @ m_sel.A, W @ m_sel.b, check_invertible=False)
            x = multistep_apply(composed, p, x)
        val, sel = composed_value(x)
        iterates.append(x.copy())
        residuals.append(inf_norm(x - val))
        converged = residuals[-1] <= tol
        if inf_norm(x) > guard:
            flags = flags + ("diverged",)
            break
    return IterateTrace(iterates, residuals, "composed_randomized", converged, flags)
