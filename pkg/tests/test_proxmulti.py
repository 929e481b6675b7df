import numpy as np
import pytest

from proxtd import (
    AffineMap,
    MultistepParam,
    apply_T,
    extrapolate_from_prox,
    gamma_iterate,
    geometric_rate,
    inf_norm,
    lambda_matrices,
    multistep_apply,
    proximal_apply,
    solve_fixed_point,
    spectral_radius_estimate,
    vm_apply,
    w_mapping_apply,
)
from proxtd.errors import AssumptionViolated, SingularMatrix

from conftest import fixture_map, series_lambda_matrices, series_multistep, series_prox


@pytest.fixture
def half_map():
    return AffineMap(np.diag([0.5, 0.5]), np.array([1.0, 1.0]))


@pytest.fixture
def p_half():
    return MultistepParam(0.5)


class TestParam:
    def test_coupling(self):
        p = MultistepParam(0.5)
        assert p.c == pytest.approx(1.0)
        assert MultistepParam.from_c(1.0).lam == pytest.approx(0.5)

    def test_round_trip(self):
        for lam in (0.1, 0.37, 0.5, 0.9, 0.999):
            p = MultistepParam(lam)
            assert abs(MultistepParam.from_c(p.c).lam - lam) <= 1e-12

    def test_range_validation(self):
        with pytest.raises(ValueError):
            MultistepParam(0.0)
        with pytest.raises(ValueError):
            MultistepParam(1.0)
        with pytest.raises(ValueError):
            MultistepParam.from_c(-1.0)


class TestAffineMap:
    def test_singular_shift_rejected(self):
        with pytest.raises(SingularMatrix):
            AffineMap(np.eye(2), np.zeros(2))

    def test_fixed_point(self, half_map):
        assert np.allclose(half_map.fixed_point, [2.0, 2.0])

    def test_assumption_flag(self, half_map):
        assert half_map.assumption_1_1_ok
        expanding = AffineMap(np.diag([1.5, 0.2]), np.zeros(2))
        assert not expanding.assumption_1_1_ok


class TestBasicMaps:
    def test_apply_T(self, half_map):
        assert np.allclose(apply_T(half_map, [0.0, 0.0]), [1.0, 1.0])
        assert np.allclose(apply_T(half_map, [2.0, 2.0]), [2.0, 2.0])
        assert np.allclose(apply_T(half_map, [4.0, 0.0]), [3.0, 1.0])

    def test_proximal_values(self, half_map, p_half):
        assert np.allclose(proximal_apply(half_map, p_half, [0.0, 0.0]), [2.0 / 3.0] * 2)
        assert np.allclose(proximal_apply(half_map, p_half, [2.0, 2.0]), [2.0, 2.0])

    def test_proximal_zero_matrix_collapses(self):
        m = AffineMap(np.zeros((2, 2)), np.array([3.0, -1.0]))
        for lam in (0.2, 0.5, 0.8):
            p = MultistepParam(lam)
            x = np.array([1.0, 4.0])
            assert np.allclose(proximal_apply(m, p, x), lam * m.b + (1 - lam) * x)

    def test_multistep_values(self, half_map, p_half):
        assert np.allclose(multistep_apply(half_map, p_half, [0.0, 0.0]), [4.0 / 3.0] * 2)
        assert np.allclose(multistep_apply(half_map, p_half, [2.0, 2.0]), [2.0, 2.0])

    def test_multistep_zero_matrix_is_b(self):
        m = AffineMap(np.zeros((2, 2)), np.array([3.0, -1.0]))
        for lam in (0.2, 0.8):
            assert np.allclose(multistep_apply(m, MultistepParam(lam), [5.0, 5.0]), m.b)

    def test_extrapolation_examples(self):
        p = MultistepParam.from_c(1.0)
        out = extrapolate_from_prox([0.0, 0.0], [2.0 / 3.0, 2.0 / 3.0], p)
        assert np.allclose(out, [4.0 / 3.0] * 2)
        assert np.allclose(extrapolate_from_prox([1.0, 1.0], [1.0, 1.0], p), [1.0, 1.0])
        p3 = MultistepParam.from_c(0.5)  # factor (c+1)/c = 3
        assert np.allclose(extrapolate_from_prox([1.0, 1.0], [1.2, 1.2], p3), [1.6, 1.6])


class TestGammaBlend:
    def test_midpoint(self, half_map, p_half):
        assert np.allclose(gamma_iterate(half_map, p_half, 0.5, [0.0, 0.0]), [1.0, 1.0])

    def test_endpoints_exact(self, half_map, p_half):
        x = np.array([0.3, -0.7])
        assert np.array_equal(
            gamma_iterate(half_map, p_half, 0.0, x), proximal_apply(half_map, p_half, x)
        )
        assert np.array_equal(
            gamma_iterate(half_map, p_half, 1.0, x), multistep_apply(half_map, p_half, x)
        )

    def test_negative_gamma_rejected(self, half_map, p_half):
        with pytest.raises(ValueError):
            gamma_iterate(half_map, p_half, -0.1, [0.0, 0.0])


class TestAnchoredMappings:
    def test_w_value(self, half_map, p_half):
        out = w_mapping_apply(half_map, p_half, [0.0, 0.0], [0.0, 0.0], "W")
        assert np.allclose(out, [1.0, 1.0])

    def test_multistep_is_w_fixed_point(self, half_map, p_half, rng):
        anchor = rng.standard_normal(2)
        y = multistep_apply(half_map, p_half, anchor)
        assert np.allclose(w_mapping_apply(half_map, p_half, anchor, y, "W"), y, atol=1e-12)

    def test_prox_is_wbar_fixed_point(self, half_map, p_half, rng):
        anchor = rng.standard_normal(2)
        y = proximal_apply(half_map, p_half, anchor)
        assert np.allclose(w_mapping_apply(half_map, p_half, anchor, y, "Wbar"), y, atol=1e-12)

    def test_wbar_at_solution(self, half_map, p_half):
        star = half_map.fixed_point
        assert np.allclose(w_mapping_apply(half_map, p_half, star, star, "Wbar"), star)

    def test_vm_two_steps(self, half_map, p_half):
        assert np.allclose(vm_apply(half_map, p_half, 2, [0.0, 0.0]), [1.25, 1.25])

    def test_vm_single_step_is_T(self, half_map, p_half, rng):
        x = rng.standard_normal(2)
        assert np.allclose(vm_apply(half_map, p_half, 1, x), apply_T(half_map, x), atol=1e-15)

    def test_vm_limit_is_multistep(self, half_map, p_half):
        out = vm_apply(half_map, p_half, 40, [0.0, 0.0])
        assert np.allclose(out, [4.0 / 3.0] * 2, atol=1e-9)

    def test_vm_closed_form(self, rng):
        m, _ = fixture_map(rng, 5, 0.8)
        p = MultistepParam(0.5)
        x = rng.standard_normal(5)
        for steps in (1, 2, 5, 20):
            # oracle: (1-lam)(Tx + ... + lam^(m-1) T^m x) + lam^m T^m x
            closed = np.zeros(5)
            power = x.copy()
            for j in range(1, steps + 1):
                power = apply_T(m, power)
                weight = (1.0 - p.lam) * p.lam ** (j - 1)
                if j == steps:
                    weight += p.lam**steps
                closed = closed + weight * power
            assert inf_norm(vm_apply(m, p, steps, x) - closed) <= 1e-10


class TestLambdaMatrices:
    def test_scalar_a09(self):
        m = AffineMap(np.array([[0.9]]), np.array([0.1]), sigma=0.9)
        a_lam, _, abar, _ = lambda_matrices(m, MultistepParam(0.5))
        assert a_lam[0, 0] == pytest.approx(0.45 / 0.55, abs=1e-12)
        assert abar[0, 0] == pytest.approx(0.5 / 0.55, abs=1e-12)

    def test_zero_matrix(self):
        m = AffineMap(np.zeros((2, 2)), np.array([1.0, -2.0]))
        p = MultistepParam(0.3)
        a_lam, b_lam, abar, bbar = lambda_matrices(m, p)
        assert np.allclose(a_lam, 0.0)
        assert np.allclose(abar, (1 - p.lam) * np.eye(2))
        assert np.allclose(b_lam, m.b)
        assert np.allclose(bbar, p.lam * m.b)

    def test_scalar_geometric_sums(self):
        m = AffineMap(np.array([[0.5]]), np.array([2.0]), sigma=0.5)
        a_lam, b_lam, _, _ = lambda_matrices(m, MultistepParam(0.5))
        assert a_lam[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert b_lam[0] == pytest.approx(4.0 / 3.0 * 2.0, abs=1e-12)

    def test_against_series_oracle(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 9))
            m, _ = fixture_map(rng, n, rng.uniform(0.3, 0.95))
            lam = float(rng.choice([0.1, 0.5, 0.9]))
            got = lambda_matrices(m, MultistepParam(lam))
            want = series_lambda_matrices(m.A, m.b, lam, sigma=m.sigma)
            for g, w in zip(got, want):
                assert inf_norm(np.atleast_2d(g - w)) <= 1e-9


class TestIdentities:
    def test_interpolation_and_commutation(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 15))
            m, _ = fixture_map(rng, n, rng.uniform(0.2, 0.99))
            p = MultistepParam(float(rng.uniform(0.05, 0.95)))
            x = rng.standard_normal(n)
            scale = 1.0 + inf_norm(x)
            px = proximal_apply(m, p, x)
            tx = multistep_apply(m, p, x)
            assert inf_norm(px - ((1 - p.lam) * x + p.lam * tx)) <= 1e-9 * scale
            assert inf_norm(tx - apply_T(m, px)) <= 1e-9 * scale
            assert inf_norm(tx - proximal_apply(m, p, apply_T(m, x))) <= 1e-9 * scale

    def test_closed_forms_match_series(self, rng):
        for _ in range(8):
            n = int(rng.integers(2, 10))
            m, _ = fixture_map(rng, n, rng.uniform(0.3, 0.95))
            lam = float(rng.choice([0.1, 0.5, 0.9]))
            p = MultistepParam(lam)
            x = rng.standard_normal(n)
            scale = 1.0 + inf_norm(x)
            assert inf_norm(multistep_apply(m, p, x) - series_multistep(m, lam, x)) <= 1e-8 * scale
            assert inf_norm(proximal_apply(m, p, x) - series_prox(m, lam, x)) <= 1e-8 * scale


class TestSpectralTransforms:
    def test_ordering_and_contraction(self, rng):
        for _ in range(8):
            n = int(rng.integers(2, 7))
            top = rng.uniform(0.4, 1.0)
            m, _ = fixture_map(rng, n, top)
            lam = float(rng.uniform(0.2, 0.8))
            a_lam, _, abar, _ = lambda_matrices(m, MultistepParam(lam))
            s_a = spectral_radius_estimate(a_lam, tol=1e-8)
            s_abar = spectral_radius_estimate(abar, tol=1e-8)
            assert s_abar < 1.0
            assert s_a <= top * s_abar + 1e-6

    def test_lambda_to_one_limit(self, rng):
        # eigenvalues bounded away from 1 send sigma(A_lam) to zero
        m, evs = fixture_map(rng, 5, 0.9)
        assert min(abs(1.0 - z) for z in evs) >= 0.1 - 1e-12
        a_lam = lambda_matrices(m, MultistepParam(0.999))[0]
        assert spectral_radius_estimate(a_lam) <= 0.05


class TestSolver:
    def test_converges_to_known_solution(self, half_map, p_half):
        trace = solve_fixed_point(half_map, "multistep", p_half, tol=1e-10)
        assert trace.converged
        assert np.allclose(trace.final, [2.0, 2.0], atol=1e-9)
        # residuals in the trace are recomputable from the iterates
        for x, r in zip(trace.iterates, trace.residuals):
            assert r == pytest.approx(inf_norm(x - apply_T(half_map, x)), abs=1e-15)

    def test_start_at_solution(self, half_map, p_half):
        trace = solve_fixed_point(half_map, "proximal", p_half, x0=[2.0, 2.0])
        assert trace.converged and trace.iterations == 0

    def test_scalar_tail_rates(self):
        m = AffineMap(np.array([[0.9]]), np.array([0.1]), sigma=0.9)
        p = MultistepParam(0.5)
        multi = solve_fixed_point(m, "multistep", p, x0=[0.0], tol=1e-10)
        prox = solve_fixed_point(m, "proximal", p, x0=[0.0], tol=1e-10)
        assert geometric_rate(multi.residuals) == pytest.approx(9.0 / 11.0, abs=1e-6)
        assert geometric_rate(prox.residuals) == pytest.approx(10.0 / 11.0, abs=1e-6)

    def test_vm_and_gamma_methods(self, half_map, p_half):
        for kwargs in ({"method": "vm", "m_steps": 3}, {"method": "gamma", "gamma": 0.5}):
            trace = solve_fixed_point(half_map, p=p_half, tol=1e-10, **kwargs)
            assert trace.converged
            assert np.allclose(trace.final, [2.0, 2.0], atol=1e-9)

    def test_plain_T(self, half_map):
        trace = solve_fixed_point(half_map, "plainT", tol=1e-10)
        assert trace.converged and np.allclose(trace.final, [2.0, 2.0], atol=1e-9)

    def test_assumption_gate_and_force(self):
        m = AffineMap(np.diag([1.2, 0.1]), np.array([1.0, 1.0]))
        p = MultistepParam(0.5)
        with pytest.raises(AssumptionViolated):
            solve_fixed_point(m, "proximal", p)
        trace = solve_fixed_point(m, "proximal", p, force=True, max_iter=50)
        assert "assumption_violated" in trace.flags
        assert not trace.converged

    def test_acceleration_region(self, rng):
        # every tested gamma strictly beats the proximal endpoint
        for _ in range(5):
            n = int(rng.integers(2, 8))
            m, _ = fixture_map(rng, n, rng.uniform(0.6, 0.95))
            p = MultistepParam(0.5)
            base = geometric_rate(
                solve_fixed_point(m, "proximal", p, x0=rng.standard_normal(n), tol=1e-10).residuals
            )
            for gamma in (0.25, 0.5, 1.0):
                rate = geometric_rate(
                    solve_fixed_point(
                        m, "gamma", p, x0=rng.standard_normal(n), gamma=gamma, tol=1e-10
                    ).residuals
                )
                assert rate < base - 0.005
