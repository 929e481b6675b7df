"""Shared fixture builders and independent oracles for the test suite.

The oracles here deliberately avoid the closed-form solve paths they check:
multistep and proximal values come from truncated power series, lambda
matrices from summed matrix powers, and nonlinear fixed points from plain
Banach iteration.
"""

import numpy as np
import pytest

from proxtd import AffineMap, SpectrumSpec, apply_T, inf_norm, make_similar


def random_spectrum(rng, n, top):
    """Conjugate-closed eigenvalue list with max modulus exactly ``top``."""
    evs = [complex(top)]
    while len(evs) < n:
        if n - len(evs) >= 2 and rng.random() < 0.5:
            r = top * rng.uniform(0.2, 0.95)
            th = rng.uniform(0.2, np.pi - 0.2)
            evs.extend([r * np.exp(1j * th), r * np.exp(-1j * th)])
        else:
            evs.append(complex(top * rng.uniform(-0.95, 0.95)))
    return tuple(evs[:n])


def fixture_map(rng, n, top):
    """AffineMap with known exact spectral radius ``top``."""
    evs = random_spectrum(rng, n, top)
    A = make_similar(SpectrumSpec(evs, int(rng.integers(1 << 30))))
    return AffineMap(A, rng.standard_normal(n), sigma=top), evs


def series_multistep(m, lam, x, tol=1e-12):
    """Oracle: truncated (1-lam) * sum lam^l T^(l+1) x."""
    x = np.asarray(x, dtype=float)
    sigma = max(1.0, m.sigma_estimate)
    acc = np.zeros(m.n)
    tx = apply_T(m, x)
    factor = 1.0 - lam
    growth = 1.0
    for _ in range(100_000):
        acc = acc + factor * tx
        growth *= lam * sigma
        if growth * max(1.0, inf_norm(x), inf_norm(m.b)) < tol:
            return acc
        tx = apply_T(m, tx)
        factor *= lam
    raise AssertionError("series oracle did not truncate")


def series_prox(m, lam, x, tol=1e-12):
    """Oracle: truncated (1-lam) * sum lam^l T^l x."""
    x = np.asarray(x, dtype=float)
    sigma = max(1.0, m.sigma_estimate)
    acc = np.zeros(m.n)
    tx = x.copy()
    factor = 1.0 - lam
    growth = 1.0
    for _ in range(100_000):
        acc = acc + factor * tx
        growth *= lam * sigma
        if growth * max(1.0, inf_norm(x), inf_norm(m.b)) < tol:
            return acc
        tx = apply_T(m, tx)
        factor *= lam
    raise AssertionError("series oracle did not truncate")


def series_lambda_matrices(A, b, lam, sigma=1.0, tol=1e-12):
    """Oracle: the four lambda-form matrices by direct series summation."""
    n = A.shape[0]
    a_lam = np.zeros((n, n))
    b_lam = np.zeros(n)
    abar = np.zeros((n, n))
    bbar = np.zeros(n)
    power = np.eye(n)  # A^l
    factor = 1.0
    growth = 1.0
    for _ in range(100_000):
        abar += (1.0 - lam) * factor * power
        b_lam += factor * (power @ b)
        bbar += lam * factor * (power @ b)
        power_next = A @ power
        a_lam += (1.0 - lam) * factor * power_next
        growth *= lam * max(1.0, sigma)
        if growth * max(1.0, inf_norm(b)) < tol:
            return a_lam, b_lam, abar, bbar
        power = power_next
        factor *= lam
    raise AssertionError("series oracle did not truncate")


def banach_fixed_point(fn, x0, tol=1e-13, cap=100_000):
    """Oracle: plain fixed-point iteration for a contraction."""
    x = np.asarray(x0, dtype=float)
    for _ in range(cap):
        nxt = fn(x)
        if inf_norm(nxt - x) <= tol:
            return nxt
        x = nxt
    raise AssertionError("Banach oracle did not converge")


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
