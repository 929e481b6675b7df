"""Built-in invariant battery behind ``proxtd verify``.

Each check prints one PASS/FAIL line. The checks are quick seeded versions
of the package's core identities; the full pytest suite covers the same
ground at acceptance tolerances.
"""

from __future__ import annotations

import numpy as np

from .galerkin import (
    ProjectionSpec,
    assemble_lowdim,
    build_projection,
    error_bound,
    lspe_iterate,
    lstd_solve,
)
from .linalg import SpectrumSpec, char_poly_at, inf_norm, make_similar, spectral_radius_estimate
from .mcsim import default_proposal, multistep_via_td, run_estimation, stationary_distribution
from .nonlinear import NonlinearMap, extrapolated_prox, modulus_probe, nonlinear_prox
from .proxmulti import (
    AffineMap,
    MultistepParam,
    apply_T,
    extrapolate_from_prox,
    lambda_matrices,
    multistep_apply,
    proximal_apply,
    vm_apply,
)
from .pwlinear import PiecewiseAffineMap, brute_force_xstar, monotone_solve, randomized_solve

__all__ = ["run_all"]


def _random_fixture(rng, n: int, top: float):
    evs = [complex(top)]
    while len(evs) < n:
        if n - len(evs) >= 2 and rng.random() < 0.5:
            r = top * rng.uniform(0.2, 0.95)
            th = rng.uniform(0.2, np.pi - 0.2)
            evs.extend([r * np.exp(1j * th), r * np.exp(-1j * th)])
        else:
            evs.append(complex(top * rng.uniform(-0.95, 0.95)))
    A = make_similar(SpectrumSpec(tuple(evs[:n]), int(rng.integers(1 << 30))))
    b = rng.standard_normal(n)
    return AffineMap(A, b, sigma=top), evs[:n]


def _series_multistep(m: AffineMap, lam: float, x: np.ndarray, tol: float = 1e-13):
    acc = np.zeros(m.n)
    tx = apply_T(m, x)
    factor = 1.0 - lam
    for _ in range(20_000):
        acc = acc + factor * tx
        if factor * (1.0 + inf_norm(tx)) < tol:
            return acc
        tx = apply_T(m, tx)
        factor *= lam
    return acc


def check_identities(quick: bool) -> str:
    rng = np.random.default_rng(11)
    reps = 10 if quick else 50
    for _ in range(reps):
        n = int(rng.integers(2, 12))
        m, _ = _random_fixture(rng, n, rng.uniform(0.3, 0.95))
        p = MultistepParam(float(rng.choice([0.1, 0.5, 0.9])))
        x = rng.standard_normal(n)
        scale = 1.0 + inf_norm(x)
        px = proximal_apply(m, p, x)
        tx = multistep_apply(m, p, x)
        if inf_norm(px - ((1.0 - p.lam) * x + p.lam * tx)) > 1e-9 * scale:
            return "interpolation identity broke"
        if inf_norm(tx - apply_T(m, proximal_apply(m, p, x))) > 1e-9 * scale:
            return "commutation T(P(x)) broke"
        if inf_norm(tx - proximal_apply(m, p, apply_T(m, x))) > 1e-9 * scale:
            return "commutation P(T(x)) broke"
        if inf_norm(tx - extrapolate_from_prox(x, px, p)) > 1e-9 * scale:
            return "extrapolation formula broke"
        if inf_norm(tx - _series_multistep(m, p.lam, x)) > 1e-7 * scale:
            return "closed form disagrees with power series"
        if inf_norm(tx - multistep_via_td(m, p, x, eps=1e-12)) > 1e-8 * scale:
            return "temporal-difference expansion broke"
    return ""


def check_eigen_transforms(quick: bool) -> str:
    rng = np.random.default_rng(13)
    reps = 5 if quick else 20
    for _ in range(reps):
        n = int(rng.integers(2, 7))
        m, evs = _random_fixture(rng, n, rng.uniform(0.4, 0.95))
        lam = float(rng.uniform(0.2, 0.8))
        a_lam, _, abar, _ = lambda_matrices(m, MultistepParam(lam))
        for z in evs:
            th = z * (1.0 - lam) / (1.0 - z * lam)
            thbar = (1.0 - lam) / (1.0 - z * lam)
            if abs(char_poly_at(a_lam, th)) > 1e-6:
                return f"multistep eigenvalue image {th} is not a root"
            if abs(char_poly_at(abar, thbar)) > 1e-6:
                return f"proximal eigenvalue image {thbar} is not a root"
        s_a = spectral_radius_estimate(a_lam)
        s_abar = spectral_radius_estimate(abar)
        if s_abar >= 1.0 or s_a > m.sigma_estimate * s_abar + 1e-6:
            return "spectral ordering broke"
    return ""


def check_galerkin_fixture(quick: bool) -> str:
    m = AffineMap(np.diag([0.5, 0.5]), np.array([1.0, 2.0]))
    spec = ProjectionSpec(np.array([[1.0], [1.0]]), np.array([0.5, 0.5]))
    sys = assemble_lowdim(m, spec, MultistepParam(0.5))
    if abs(sys.Q[0, 0] - 1.0 / 3.0) > 1e-12 or abs(sys.d[0] - 2.0) > 1e-12:
        return "hand fixture Q or d is off"
    r = lstd_solve(sys)
    if abs(r[0] - 3.0) > 1e-12:
        return "hand fixture solution is off"
    r1 = lspe_iterate(sys, np.zeros(1))
    r2 = lspe_iterate(sys, r1)
    if abs(r1[0] - 2.0) > 1e-12 or abs(r2[0] - 8.0 / 3.0) > 1e-12:
        return "LSPE iterate values are off"
    rng = np.random.default_rng(17)
    for _ in range(5 if quick else 25):
        n, s = int(rng.integers(3, 8)), 2
        mm, _ = _random_fixture(rng, n, 0.8)
        pspec = ProjectionSpec(rng.standard_normal((n, s)), rng.uniform(0.2, 1.0, n))
        pp = MultistepParam(0.5)
        pi = build_projection(pspec)
        if inf_norm(pi @ pi - pi) > 1e-9:
            return "projection is not idempotent"
        x_lam = pspec.phi @ lstd_solve(assemble_lowdim(mm, pspec, pp))
        if inf_norm(mm.fixed_point - x_lam) > error_bound(mm, pspec, pp) + 1e-8:
            return "error bound fails to dominate"
    return ""


def check_vm(quick: bool) -> str:
    rng = np.random.default_rng(19)
    m, _ = _random_fixture(rng, 4, 0.7)
    p = MultistepParam(0.5)
    x = rng.standard_normal(4)
    for steps in (1, 2, 5, 20):
        closed = np.zeros(4)
        power = x.copy()
        for j in range(1, steps + 1):
            power = apply_T(m, power)
            weight = (1.0 - p.lam) * p.lam ** (j - 1) + (p.lam**steps if j == steps else 0.0)
            closed = closed + weight * power
        if inf_norm(vm_apply(m, p, steps, x) - closed) > 1e-10:
            return f"anchored iteration disagrees with closed form at m={steps}"
    return ""


def check_nonlinear(quick: bool) -> str:
    T = NonlinearMap(1, lambda x: 0.5 * x + 1.0, modulus=0.5)
    y = nonlinear_prox(T, 1.0, np.array([0.0]), inner_tol=1e-12)
    if abs(y[0] - 2.0 / 3.0) > 1e-10:
        return "scalar proximal value is off"
    e = extrapolated_prox(T, 1.0, np.array([0.0]), inner_tol=1e-12)
    if abs(e[0] - 4.0 / 3.0) > 1e-10:
        return "scalar extrapolated value is off"
    tanh_map = NonlinearMap(3, lambda x: 0.8 * np.tanh(x), modulus=0.8)
    probed = modulus_probe(tanh_map, 200, seed=3, radius=0.2)
    if not 0.75 <= probed <= 0.8 + 1e-12:
        return f"probed modulus {probed} outside the derivative bound"
    return ""


def check_piecewise(quick: bool) -> str:
    comps = (
        AffineMap(np.array([[0.5]]), np.array([1.0]), check_invertible=False),
        AffineMap(np.array([[0.8]]), np.array([0.1]), check_invertible=False),
    )
    pm = PiecewiseAffineMap(comps, "min")
    target = brute_force_xstar(pm)
    p = MultistepParam(0.5)
    mono = monotone_solve(pm, p, np.array([3.0]), tol=1e-12)
    if not mono.converged or inf_norm(mono.final - target) > 1e-8:
        return "monotone solve misses the enumeration oracle"
    path = np.array([it[0] for it in mono.iterates])
    if np.any(np.diff(path) > 1e-12):
        return "monotone trace increased"
    rand = randomized_solve(pm, p, 0.3, 7, np.array([10.0]), tol=1e-10)
    if not rand.converged or inf_norm(rand.final - target) > 1e-8:
        return "randomized solve misses the enumeration oracle"
    return ""


def check_estimator(quick: bool) -> str:
    rng = np.random.default_rng(23)
    n, s = 6, 2
    m, _ = _random_fixture(rng, n, 0.7)
    spec = ProjectionSpec(rng.standard_normal((n, s)), np.full(n, 1.0 / n))
    chain = default_proposal(m, seed=5)
    a = run_estimation(m, spec, chain, 2000, lam=0.5, seed=5)
    b = run_estimation(m, spec, chain, 2000, lam=0.5, seed=5)
    if not (np.array_equal(a.chat_sum, b.chat_sum) and np.array_equal(a.dhat_sum, b.dhat_sum)):
        return "identical seeds gave different estimates"
    xi = stationary_distribution(chain)
    if np.any(xi < 0.0) or abs(xi.sum() - 1.0) > 1e-9:
        return "stationary distribution is not a distribution"
    return ""


CHECKS = (
    ("multistep/proximal identities", check_identities),
    ("eigenvalue transforms", check_eigen_transforms),
    ("projected systems and error bound", check_galerkin_fixture),
    ("anchored m-fold closed form", check_vm),
    ("nonlinear proximal and probe", check_nonlinear),
    ("piecewise oracle equivalence", check_piecewise),
    ("estimator determinism", check_estimator),
)


def run_all(quick: bool = True) -> int:
    """Run every check; print one PASS/FAIL line each; return failure count."""
    failures = 0
    for name, fn in CHECKS:
        try:
            detail = fn(quick)
        except Exception as exc:  # a crash is a failure, not an abort
            detail = f"{type(exc).__name__}: {exc}"
        if detail:
            failures += 1
            print(f"FAIL {name}: {detail}")
        else:
            print(f"PASS {name}")
    return failures
