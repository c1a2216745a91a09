import numpy as np
import pytest

from steadyfsi import eos


@pytest.fixture
def law():
    return eos.PressureLaw(rho_bar=1.0, a=1.0)


@pytest.fixture
def reg():
    return eos.Regularization(eps=0.25, delta=0.04)


class TestPressureLaw:
    def test_vanishes_at_zero(self, law):
        assert eos.eval_p(law, 0.0) == 0.0

    def test_point_value(self, law):
        # 0.5 / (1 - 0.5)
        assert eos.eval_p(law, 0.5) == pytest.approx(1.0, rel=1e-14)

    def test_blowup_near_critical(self, law):
        rho = 1.0 - 1e-6
        p = eos.eval_p(law, rho)
        assert p > 1e5 * law.a
        assert p == pytest.approx(rho / 1e-6, rel=1e-9)

    def test_monotone(self, law):
        rho = np.linspace(0.0, 1.0 - 1e-9, 1000)
        p = eos.eval_p(law, rho)
        assert np.all(np.diff(p) >= 0.0)

    def test_domain_errors(self, law):
        with pytest.raises(ValueError):
            eos.eval_p(law, -0.1)
        with pytest.raises(ValueError):
            eos.eval_p(law, 1.0)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            eos.PressureLaw(rho_bar=-1.0)
        with pytest.raises(ValueError):
            eos.PressureLaw(a=0.0)
        with pytest.raises(ValueError):
            eos.PressureLaw(form="nonsense")

    def test_registry_accepts_new_family(self):
        name = "test-quadratic-core"
        if name not in eos._LAW_REGISTRY:
            eos.register_law(
                name,
                lambda law, rho: law.a * rho**2 / (law.rho_bar - rho),
                lambda law, rho: law.a * rho * (2 * law.rho_bar - rho)
                / (law.rho_bar - rho) ** 2,
            )
        law2 = eos.PressureLaw(form=name)
        assert eos.eval_p(law2, 0.5) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            eos.register_law(name, None, None)


class TestCutoff:
    @pytest.mark.parametrize("rho,expected", [(-0.3, 0.0), (0.4, 0.4), (1.7, 1.0)])
    def test_clamp(self, rho, expected):
        assert eos.cutoff_T(rho, 1.0) == expected

    def test_idempotent(self):
        x = np.linspace(-2.0, 3.0, 101)
        once = eos.cutoff_T(x, 1.0)
        assert np.array_equal(eos.cutoff_T(once, 1.0), once)

    def test_one_lipschitz(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(-2, 3, 500)
        b = rng.uniform(-2, 3, 500)
        lhs = np.abs(eos.cutoff_T(a, 1.0) - eos.cutoff_T(b, 1.0))
        assert np.all(lhs <= np.abs(a - b) + 1e-15)


class TestLinearizedPressure:
    def test_matches_law_below_knot(self, law, reg):
        rho = np.linspace(0.0, law.rho_bar - reg.eps, 200)
        assert np.array_equal(eos.eval_p_eps(law, reg, rho),
                              eos.eval_p(law, rho))

    def test_affine_branch_value(self, law, reg):
        # p(0.75) = 3, p'(0.75) = 16, 3 + 16 * 0.15
        assert eos.eval_p_eps(law, reg, 0.9) == pytest.approx(5.4, rel=1e-13)

    def test_continuity_at_knot(self, law, reg):
        knot = law.rho_bar - reg.eps
        assert eos.eval_p_eps(law, reg, knot) == pytest.approx(
            eos.eval_p(law, knot), rel=1e-14)

    def test_c1_at_knot(self, law, reg):
        knot = law.rho_bar - reg.eps
        h = 1e-8 * law.rho_bar
        left = (eos.eval_p_eps(law, reg, knot)
                - eos.eval_p_eps(law, reg, knot - h)) / h
        right = (eos.eval_p_eps(law, reg, knot + h)
                 - eos.eval_p_eps(law, reg, knot)) / h
        assert left == pytest.approx(right, rel=1e-6)

    def test_negative_density_rejected(self, law, reg):
        with pytest.raises(ValueError):
            eos.eval_p_eps(law, reg, -1e-9)

    def test_delta_shift_values(self, law, reg):
        assert eos.eval_p_eps_delta(law, reg, 0.5) == pytest.approx(1.1, rel=1e-13)
        assert eos.eval_p_eps_delta(law, reg, 0.9) == pytest.approx(5.58, rel=1e-13)

    def test_delta_shift_is_exact(self, law, reg):
        rho = np.linspace(0.0, 2.0, 333)
        total = eos.eval_p_eps_delta(law, reg, rho)
        diff = total - eos.eval_p_eps(law, reg, rho)
        # exact up to the single rounding of the final addition
        tol = np.finfo(float).eps * np.abs(total)
        assert np.all(np.abs(diff - np.sqrt(reg.delta) * rho) <= tol)

    def test_strictly_increasing_with_delta(self, law, reg):
        rho = np.linspace(0.0, 2.0, 400)
        assert np.all(np.diff(eos.eval_p_eps_delta(law, reg, rho)) > 0.0)


class TestRegularization:
    def test_ranges(self):
        with pytest.raises(ValueError):
            eos.Regularization(eps=0.0)
        with pytest.raises(ValueError):
            eos.Regularization(eps=1.0)
        with pytest.raises(ValueError):
            eos.Regularization(delta=0.0)
        with pytest.raises(ValueError):
            eos.Regularization(delta=1.5)


class TestRenormPair:
    def test_integrand_value(self, law, reg):
        pair = eos.build_renorm_pair(law, reg)
        # p_reg'(0.5) = 4.2, T(0.5) = 0.5
        assert pair.gpp_at(0.5) == pytest.approx(8.4, rel=1e-12)

    def test_defining_identity_at_all_nodes(self, law, reg):
        pair = eos.build_renorm_pair(law, reg)
        lhs = pair.gp * eos.cutoff_T(pair.rho, law.rho_bar) - pair.h
        rhs = eos.eval_p_eps_delta(law, reg, pair.rho)
        assert np.abs(lhs - rhs).max() <= 1e-8

    def test_identity_at_half(self, law, reg):
        pair = eos.build_renorm_pair(law, reg)
        value = pair.gp_at(0.5) * eos.cutoff_T(0.5, 1.0) - pair.h_at(0.5)
        assert value == pytest.approx(1.1, rel=1e-12)

    def test_gpp_lower_bound(self, law, reg):
        pair = eos.build_renorm_pair(law, reg)
        assert pair.gpp.min() >= np.sqrt(reg.delta) / law.rho_bar - 1e-12

    def test_anchor_conditions(self, law, reg):
        pair = eos.build_renorm_pair(law, reg)
        assert pair.gp_at(pair.rho_star) == 0.0
        assert pair.g_at(pair.rho_star) == 0.0
        assert pair.h_at(pair.rho_star) == pytest.approx(
            -eos.eval_p_eps_delta(law, reg, pair.rho_star), rel=1e-13)

    def test_h_derivative_consistency(self, law, reg):
        # H' = G' T' away from the anchor and the cutoff corner
        pair = eos.build_renorm_pair(law, reg, table_size=8192)
        rho, gp, h = pair.rho, pair.gp, pair.h
        mask = (rho > 0.1) & (rho < 0.9) & (np.abs(rho - 0.5) > 0.02)
        dh = (h[2:] - h[:-2]) / (rho[2:] - rho[:-2])
        target = gp[1:-1]  # T' = 1 below the critical density
        sel = mask[1:-1]
        rel = np.abs(dh[sel] - target[sel]) / np.maximum(np.abs(target[sel]), 1e-12)
        assert rel.max() < 1e-3

    def test_small_table_rejected(self, law, reg):
        with pytest.raises(ValueError):
            eos.build_renorm_pair(law, reg, table_size=8)


def test_random_laws_keep_hard_sphere_shape():
    rng = np.random.default_rng(3)
    for _ in range(25):
        law = eos.PressureLaw(rho_bar=rng.uniform(0.3, 3.0),
                              a=rng.uniform(0.1, 5.0))
        rho = np.linspace(0.0, law.rho_bar * (1 - 1e-7), 300)
        p = eos.eval_p(law, rho)
        assert p[0] == 0.0
        assert np.all(np.diff(p) >= 0.0)
        assert p[-1] > 1e5 * law.a
