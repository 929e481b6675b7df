"""Acceptance gate: one test per criterion, at the stated tolerances.

Each test prints a single PASS line when it completes (visible with -s);
a pytest failure is the FAIL line.
"""

import json
import time

import numpy as np
import pytest

from proxtd import (
    AffineMap,
    MultistepParam,
    PiecewiseAffineMap,
    ProjectionSpec,
    SpectrumSpec,
    apply_T,
    assemble_lowdim,
    as_lowdim,
    brute_force_xstar,
    char_poly_at,
    cli,
    error_bound,
    extrapolated_prox,
    fbs_step,
    geometric_rate,
    inf_norm,
    lambda_matrices,
    lspe_iterate,
    lstd_solve,
    make_similar,
    monotone_solve,
    multistep_apply,
    multistep_via_td,
    nonlinear_prox,
    NonlinearMap,
    properness_report,
    proximal_apply,
    pw_apply,
    randomized_solve,
    run_estimation,
    save_problem,
    sim_lstd,
    solve_fixed_point,
    spectral_radius_estimate,
    SplitProblem,
    stationary_distribution,
)
from proxtd.problems import gen_chain, gen_spectrum

from conftest import banach_fixed_point, fixture_map, random_spectrum, series_multistep


def report(num, text):
    print(f"ACCEPTANCE {num} [{text}]: PASS")


def test_criterion_1_identity_suite():
    rng = np.random.default_rng(101)
    lams = (0.1, 0.5, 0.9)
    start = time.monotonic()
    for k in range(200):
        n = int(rng.integers(2, 51))
        m, _ = fixture_map(rng, n, rng.uniform(0.1, 0.99))
        lam = lams[k % 3]
        p = MultistepParam(lam)
        x = rng.standard_normal(n)
        scale = 1.0 + inf_norm(x)
        px = proximal_apply(m, p, x)
        tx = multistep_apply(m, p, x)
        # interpolation
        assert inf_norm(px - ((1.0 - lam) * x + lam * tx)) <= 1e-8 * scale
        # commutation, both orders
        assert inf_norm(tx - apply_T(m, px)) <= 1e-8 * scale
        assert inf_norm(tx - proximal_apply(m, p, apply_T(m, x))) <= 1e-8 * scale
        # closed form vs truncated power series
        assert inf_norm(tx - series_multistep(m, lam, x)) <= 1e-8 * scale
        # temporal-difference expansion
        assert inf_norm(tx - multistep_via_td(m, p, x, eps=1e-11)) <= 1e-8 * scale
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"identity suite took {elapsed:.2f}s"
    report(1, f"identity suite, 200 fixtures in {elapsed:.2f}s")


def test_criterion_2_eigenvalue_transforms():
    rng = np.random.default_rng(202)
    specs = [SpectrumSpec(random_spectrum(rng, int(rng.integers(2, 7)), rng.uniform(0.4, 0.95)), s)
             for s in range(8)]
    # assumption boundary: moduli exactly 1 away from the point 1
    specs.append(SpectrumSpec((1j, -1j, 0.3), 100))
    specs.append(SpectrumSpec((np.exp(1j * np.pi / 3), np.exp(-1j * np.pi / 3), -0.5), 101))
    specs.append(SpectrumSpec((-1.0, 0.4), 102))
    for spec in specs:
        A = make_similar(spec)
        m = AffineMap(A, np.zeros(A.shape[0]), sigma=spec.max_modulus())
        for lam in (0.3, 0.5, 0.7):
            a_lam, _, abar, _ = lambda_matrices(m, MultistepParam(lam))
            for z in spec.eigenvalues:
                z = complex(z)
                image = z * (1.0 - lam) / (1.0 - z * lam)
                image_bar = (1.0 - lam) / (1.0 - z * lam)
                assert abs(char_poly_at(a_lam, image)) <= 1e-6
                assert abs(char_poly_at(abar, image_bar)) <= 1e-6
            s_a = spectral_radius_estimate(a_lam, tol=1e-8)
            s_abar = spectral_radius_estimate(abar, tol=1e-8)
            assert s_abar < 1.0
            assert s_a <= spec.max_modulus() * s_abar + 1e-6
    report(2, f"eigenvalue transforms on {len(specs)} spectra x 3 lambdas")


def test_criterion_3_acceleration():
    start = time.monotonic()
    m9 = AffineMap(np.array([[0.9]]), np.array([0.1]), sigma=0.9)
    p = MultistepParam(0.5)
    prox_rate = geometric_rate(solve_fixed_point(m9, "proximal", p, x0=[0.0], tol=1e-10).residuals)
    multi_rate = geometric_rate(solve_fixed_point(m9, "multistep", p, x0=[0.0], tol=1e-10).residuals)
    assert prox_rate == pytest.approx(10.0 / 11.0, abs=0.02)
    assert multi_rate == pytest.approx(9.0 / 11.0, abs=0.02)

    rng = np.random.default_rng(303)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        m, _ = fixture_map(rng, n, rng.uniform(0.6, 0.95))
        x0 = rng.standard_normal(n)
        base = geometric_rate(solve_fixed_point(m, "proximal", p, x0=x0, tol=1e-10).residuals)
        for gamma in (0.25, 0.5, 1.0):
            rate = geometric_rate(
                solve_fixed_point(m, "gamma", p, x0=x0, gamma=gamma, tol=1e-10).residuals
            )
            assert rate < base - 0.005
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"acceleration suite took {elapsed:.2f}s"
    report(3, f"rates 0.9091/0.8182 and gamma acceleration on 20 fixtures in {elapsed:.2f}s")


def test_criterion_4_galerkin():
    m = AffineMap(np.diag([0.5, 0.5]), np.array([1.0, 2.0]))
    spec = ProjectionSpec(np.array([[1.0], [1.0]]), np.array([0.5, 0.5]))
    p = MultistepParam(0.5)
    sys = assemble_lowdim(m, spec, p)
    assert sys.Q[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert sys.C[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert sys.d[0] == pytest.approx(2.0, abs=1e-12)
    r_lam = lstd_solve(sys)
    assert r_lam[0] == pytest.approx(3.0, abs=1e-12)
    r = np.zeros(1)
    path = [r[0]]
    for _ in range(60):
        r = lspe_iterate(sys, r)
        path.append(r[0])
    assert path[1] == pytest.approx(2.0, abs=1e-12)
    assert path[2] == pytest.approx(8.0 / 3.0, abs=1e-12)
    assert path[-1] == pytest.approx(3.0, abs=1e-10)

    rng = np.random.default_rng(404)
    for _ in range(100):
        n = int(rng.integers(3, 10))
        s = int(rng.integers(1, 4))
        mm, _ = fixture_map(rng, n, rng.uniform(0.3, 0.9))
        pspec = ProjectionSpec(rng.standard_normal((n, s)), rng.uniform(0.2, 1.0, n))
        pp = MultistepParam(float(rng.uniform(0.2, 0.8)))
        true_gap = inf_norm(mm.fixed_point - pspec.phi @ lstd_solve(assemble_lowdim(mm, pspec, pp)))
        assert true_gap <= error_bound(mm, pspec, pp, "inf") + 1e-8
    report(4, "hand fixture values, LSPE path, bound dominates on 100 fixtures")


def test_criterion_5_simulation(tmp_path):
    start = time.monotonic()
    prob = gen_chain(20, 3, seed=0)
    m = prob.affine_map()
    chain = prob.chain()
    xi = stationary_distribution(chain)
    spec = ProjectionSpec(np.array(prob.payload["phi"]), xi)
    p = MultistepParam(0.5)
    sys_exact = assemble_lowdim(m, spec, p)
    r_exact = lstd_solve(sys_exact)

    state = run_estimation(m, spec, chain, 200_000, lam=0.5, seed=0)
    c_hat = as_lowdim(state).C
    c_err = np.linalg.norm(c_hat - sys_exact.C) / np.linalg.norm(sys_exact.C)
    assert c_err <= 0.05, f"C estimate off by {c_err:.4f}"
    r_hat = sim_lstd(state)
    r_err = np.linalg.norm(r_hat - r_exact) / np.linalg.norm(r_exact)
    assert r_err <= 0.05, f"solution estimate off by {r_err:.4f}"

    # determinism: identical seeds produce identical CSV bytes
    path = tmp_path / "chain20.json"
    save_problem(prob, path)
    for base in ("one", "two"):
        code = cli.main(
            ["run", str(path), "--method", "sim-lstd", "--samples", "200000",
             "--lambda", "0.5", "--seed", "0", "--out", str(tmp_path / base)]
        )
        assert code == 0
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"simulation suite took {elapsed:.2f}s"
    report(5, f"C err {c_err:.3f}, r err {r_err:.3f}, byte-stable CSV, {elapsed:.1f}s")


def test_criterion_6_nonlinear():
    rng = np.random.default_rng(606)
    inner_tol = 1e-12

    # Lipschitz bounds for the proximal and extrapolated maps, affine fixture
    for gamma in (0.5, 0.8):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        A = gamma * q
        b = rng.standard_normal(3)
        T = NonlinearMap(3, lambda x, A=A, b=b: A @ x + b, modulus=gamma)
        for c in (0.5, 1.0, 2.0):
            bound = 1.0 / (1.0 + c * (1.0 - gamma))
            worst_p = worst_e = 0.0
            for _ in range(40):
                x1, x2 = rng.standard_normal(3), rng.standard_normal(3)
                gap = np.linalg.norm(x1 - x2)
                worst_p = max(
                    worst_p,
                    np.linalg.norm(
                        nonlinear_prox(T, c, x1, inner_tol) - nonlinear_prox(T, c, x2, inner_tol)
                    )
                    / gap,
                )
                worst_e = max(
                    worst_e,
                    np.linalg.norm(
                        extrapolated_prox(T, c, x1, inner_tol)
                        - extrapolated_prox(T, c, x2, inner_tol)
                    )
                    / gap,
                )
            assert worst_p <= bound + 1e-6
            assert worst_e <= gamma * bound + 1e-6

    # extrapolated distance dominance on affine and tanh fixtures
    for tag in ("affine", "tanh"):
        if tag == "affine":
            q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            gamma = 0.7
            A, b = gamma * q, rng.standard_normal(3)
            T = NonlinearMap(3, lambda x, A=A, b=b: A @ x + b, modulus=gamma)
        else:
            gamma = 0.8
            T = NonlinearMap(3, lambda x: 0.8 * np.tanh(x) + 0.1, modulus=gamma)
        star = banach_fixed_point(T, np.zeros(3))
        for _ in range(100):
            x = star + rng.standard_normal(3)
            # the built-in identity check (never above 10 * inner_tol) runs here
            e_gap = np.linalg.norm(extrapolated_prox(T, 1.0, x, inner_tol) - star)
            p_gap = np.linalg.norm(nonlinear_prox(T, 1.0, x, inner_tol) - star)
            assert e_gap <= gamma * p_gap + 10.0 * inner_tol

    # extrapolated forward-backward step equals T(xbar) - H(xbar)
    T = NonlinearMap(2, lambda x: 0.7 * np.tanh(x) + 0.3, modulus=0.7)
    prob = SplitProblem(T, lambda x: 0.1 * x, beta=0.1, alpha=0.9)
    for _ in range(50):
        x = rng.standard_normal(2)
        z = x - prob.alpha * prob.h(x)
        xbar = nonlinear_prox(T, prob.alpha, z, inner_tol)
        out = fbs_step(prob, x, extrapolated=True, inner_tol=inner_tol)
        assert np.linalg.norm(out - (T(xbar) - prob.h(xbar))) <= 10.0 * inner_tol
    report(6, "Lipschitz bounds, extrapolation dominance, FBS identity")


def _scalar(a, b):
    return AffineMap(np.array([[a]]), np.array([b]), check_invertible=False)


def _nonneg_family(rng, n, k, sigma=0.8):
    comps = []
    for _ in range(k):
        A = np.abs(rng.standard_normal((n, n)))
        A *= (sigma * rng.uniform(0.4, 1.0, size=n) / A.sum(axis=1))[:, None]
        comps.append(AffineMap(A, rng.standard_normal(n), check_invertible=False))
    return PiecewiseAffineMap(tuple(comps), "min")


def test_criterion_7_piecewise():
    rng = np.random.default_rng(707)
    p = MultistepParam(0.5)
    fixtures = [
        PiecewiseAffineMap((_scalar(0.5, 1.0), _scalar(0.8, 0.1)), "min"),
        PiecewiseAffineMap((_scalar(0.5, 1.0), _scalar(0.8, 0.1)), "max"),
        _nonneg_family(rng, 2, 3),
        _nonneg_family(rng, 3, 2),
        _nonneg_family(rng, 2, 4, sigma=0.6),
    ]
    for pm in fixtures:
        star = brute_force_xstar(pm)
        if pm.combinator == "min":
            x0 = np.full(pm.n, 60.0)
            trace = monotone_solve(pm, p, x0, tol=1e-11)
            assert trace.converged
            assert inf_norm(trace.final - star) <= 1e-8
            path = np.stack(trace.iterates)
            assert np.all(np.diff(path, axis=0) <= 1e-12), "monotone trace increased"
        for seed in range(50):
            tr = randomized_solve(pm, p, 0.2, seed, np.full(pm.n, 30.0), tol=1e-10)
            assert tr.converged
            assert inf_norm(tr.final - star) <= 1e-8

    # discretized continuum family: limit -1/mu_min, decreasing under refinement
    limits = []
    for step in (0.1, 0.05):
        grid = np.arange(step, 1.0 + step / 2, step)
        pm = PiecewiseAffineMap(tuple(_scalar(1 - mu * mu, -mu) for mu in grid), "min")
        trace = monotone_solve(pm, p, [0.0], tol=1e-10, max_iter=300_000)
        assert trace.converged
        assert trace.final[0] == pytest.approx(-1.0 / grid[0], abs=1e-6)
        limits.append(trace.final[0])
    assert limits[1] < limits[0]

    # min{1, x}: improper piece flagged; T also has fixed points below x*
    pm = PiecewiseAffineMap((_scalar(0.0, 1.0), _scalar(1.0, 0.0)), "min")
    rep = properness_report(pm)
    flags = {e.selection: e.proper for e in rep.entries}
    assert flags[(0,)] and not flags[(1,)]
    assert brute_force_xstar(pm)[0] == pytest.approx(1.0)
    below = np.array([0.25])
    assert np.allclose(pw_apply(pm, below)[0], below)  # another fixed point of T
    report(7, "oracle equivalence (50 seeds x 5 fixtures), paper family, min{1,x}")


def test_criterion_8_cli_end_to_end(tmp_path):
    prob_path = tmp_path / "sigma09.json"
    save_problem(gen_spectrum([0.9], seed=7), prob_path)
    out = tmp_path / "compare.csv"
    code = cli.main(
        ["compare", str(prob_path), "--method", "proximal", "--method", "multistep",
         "--method", "gamma:0.5", "--lambda", "0.5", "--out", str(out)]
    )
    assert code == 0
    rows = {r.split(",")[0]: r.split(",") for r in out.read_text().splitlines()[1:]}
    iters = {k: int(v[1]) for k, v in rows.items()}
    assert iters["multistep"] <= iters["gamma:0.5"] <= iters["proximal"]
    rates = {k: float(v[2]) for k, v in rows.items()}
    assert rates["proximal"] - rates["multistep"] == pytest.approx(1.0 / 11.0, abs=0.02)

    # exit code table
    ok = cli.main(["run", str(prob_path), "--method", "multistep",
                   "--out", str(tmp_path / "ok")])
    assert ok == 0
    not_conv = cli.main(["run", str(prob_path), "--method", "multistep", "--max-iter", "2",
                         "--out", str(tmp_path / "nc")])
    assert not_conv == 2
    expanding = tmp_path / "expanding.json"
    save_problem(gen_spectrum([1.2], seed=1), expanding)
    assert cli.main(["run", str(expanding), "--method", "multistep",
                     "--out", str(tmp_path / "av")]) == 3
    singular = tmp_path / "singular.json"
    save_problem(gen_spectrum([1.0, 0.5], seed=1), singular)
    assert cli.main(["run", str(singular), "--method", "multistep",
                     "--out", str(tmp_path / "sg")]) == 4
    assert cli.main(["run", str(prob_path), "--method", "nonsense",
                     "--out", str(tmp_path / "bi")]) == 5
    report(8, "gen -> compare ordering and exit codes 0/2/3/4/5")
