import numpy as np
import pytest

from steadyfsi import geometry as geo
from conftest import tent_beam


class TestBeamDisplacement:
    def test_requires_clamped_endpoints(self):
        with pytest.raises(ValueError):
            geo.BeamDisplacement(0.25, 0.75, np.array([0.1, 0, 0, 0, 0.0]))

    def test_requires_interior_interval(self):
        with pytest.raises(ValueError):
            geo.BeamDisplacement(0.0, 0.75, np.zeros(5))
        with pytest.raises(ValueError):
            geo.BeamDisplacement(0.75, 0.25, np.zeros(5))

    def test_requires_enough_nodes(self):
        with pytest.raises(ValueError):
            geo.BeamDisplacement(0.25, 0.75, np.zeros(4))

    def test_eval_zero_extension(self):
        w = tent_beam()
        assert w.eval(0.1) == 0.0
        assert w.eval(0.9) == 0.0
        assert w.eval(0.5) == pytest.approx(0.1)

    def test_values_read_only(self):
        w = tent_beam()
        with pytest.raises(ValueError):
            w.values[0] = 1.0


class TestLipschitzNorm:
    def test_zero(self):
        assert geo.lipschitz_norm(geo.BeamDisplacement.zero(17)) == 0.0

    def test_tent_exact(self):
        # sup norm 0.1 plus exact interior slope 0.4
        w = tent_beam(height=0.1, slope=0.4)
        assert geo.lipschitz_norm(w) == pytest.approx(0.5, rel=1e-13)

    def test_homogeneity(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=33)
        vals[0] = vals[-1] = 0.0
        w = geo.BeamDisplacement(0.25, 0.75, vals)
        for c in (-2.0, 0.5, 3.25):
            scaled = w.with_values(c * vals)
            assert geo.lipschitz_norm(scaled) == pytest.approx(
                abs(c) * geo.lipschitz_norm(w), rel=1e-13)

    def test_dominates_sup_norm(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            vals = rng.normal(size=21)
            vals[0] = vals[-1] = 0.0
            w = geo.BeamDisplacement(0.3, 0.7, vals)
            assert geo.lipschitz_norm(w) >= np.abs(vals).max()


class TestCorrection:
    def test_f_cor_values(self):
        assert geo.f_cor(0.2) == 1.0
        assert geo.f_cor(0.5) == 2.0
        assert geo.f_cor(0.25) == 1.0

    def test_f_cor_continuous_nondecreasing(self):
        x = np.linspace(0.0, 2.0, 4001)
        y = geo.f_cor(x)
        assert np.all(np.diff(y) >= 0.0)
        assert abs(geo.f_cor(0.25 + 1e-12) - 1.0) < 1e-11

    def test_f_cor_rejects_negative(self):
        with pytest.raises(ValueError):
            geo.f_cor(-0.1)

    def test_identity_below_threshold(self):
        w = tent_beam(height=0.05, slope=0.15)  # lip = 0.2
        assert geo.correct_displacement(w) is w

    def test_halves_at_lip_half(self):
        w = tent_beam(height=0.1, slope=0.4)  # lip exactly 0.5
        wc = geo.correct_displacement(w)
        assert np.array_equal(wc.values, w.values / 2.0)

    def test_barrier_on_random_states(self):
        rng = np.random.default_rng(11)
        below = 0
        for _ in range(1000):
            vals = rng.normal(scale=rng.uniform(0.01, 3.0), size=25)
            vals[0] = vals[-1] = 0.0
            w = geo.BeamDisplacement(0.25, 0.75, vals)
            wc = geo.correct_displacement(w)
            assert np.abs(wc.values).max() <= 0.25 + 1e-15
            if geo.lipschitz_norm(w) <= 0.25:
                below += 1
                assert wc is w
        assert below > 0  # the bank exercises both branches

    def test_idempotent_once_below(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            vals = rng.normal(scale=2.0, size=25)
            vals[0] = vals[-1] = 0.0
            w = geo.BeamDisplacement(0.25, 0.75, vals)
            wc = geo.correct_displacement(w)
            if geo.lipschitz_norm(wc) <= 0.25:
                assert geo.correct_displacement(wc) is wc


class TestMappedGrid:
    def test_flat_grid(self):
        g = geo.build_grid(geo.BeamDisplacement.zero(17), 16, 16)
        assert np.array_equal(g.jac, np.ones(17))
        assert np.allclose(g.z[3], g.eta)
        assert g.cell_volumes().sum() == pytest.approx(1.0, abs=1e-14)

    def test_jacobian_is_one_minus_deflection(self):
        w = geo.correct_displacement(tent_beam(height=0.2, slope=0.3))
        g = geo.build_grid(w, 32, 32)
        cols = g.beam_columns()
        assert np.allclose(g.jac[cols], 1.0 - g.w_hat[cols])
        assert g.jac.min() >= 0.75 - 1e-12 and g.jac.max() <= 1.25 + 1e-12

    def test_volume_matches_trapezoid(self):
        w = geo.correct_displacement(tent_beam(height=0.24, slope=0.2))
        g = geo.build_grid(w, 48, 40)
        vol = g.cell_volumes().sum()
        trap = np.trapezoid(1.0 - g.w_hat, g.x)
        assert abs(vol - trap) <= 1e-12

    def test_rejects_uncorrected_amplitude(self):
        w = tent_beam(height=0.4, slope=0.1)
        with pytest.raises(ValueError):
            geo.build_grid(w, 32, 32)

    def test_wider_limit_for_bounding_grids(self):
        wmax = geo.build_wmax(0.1)
        wide = wmax.with_values(-wmax.values)
        g = geo.build_grid(wide, 32, 32, gamma=(wide.gamma_lo, wide.gamma_hi),
                           max_deflection=0.5)
        assert g.jac.max() == pytest.approx(1.5, abs=1e-12)

    def test_edge_segments_inside_strip(self):
        g = geo.build_grid(geo.BeamDisplacement.zero(17), 32, 32)
        segs = g.edge_segments("left", g.sigma_in)
        assert segs.min() > 0 and segs.max() < g.nz - 1
        z_cover = (g.eta[segs.min()], g.eta[segs.max() + 1])
        assert z_cover[0] <= 0.4 and z_cover[1] >= 0.6


class TestWmax:
    def test_plateau_and_support(self):
        wm = geo.build_wmax(0.1)
        assert wm.eval(0.5) == 0.5
        assert wm.eval(0.25) == pytest.approx(0.5, abs=1e-12)
        assert wm.eval(0.05) == 0.0
        assert wm.values.min() >= 0.0 and wm.values.max() <= 0.5

    def test_margin_validation(self):
        with pytest.raises(ValueError):
            geo.build_wmax(0.3)  # exceeds dist(gamma, boundary)
        with pytest.raises(ValueError):
            geo.build_wmax(0.0)


class TestInterfaceGeometry:
    def test_flat(self):
        ig = geo.interface_geometry(geo.BeamDisplacement.zero(21))
        assert np.array_equal(ig.s_w, np.ones(21))
        assert np.allclose(ig.normal, np.tile([0.0, 1.0], (21, 1)))

    def test_unit_slope_node(self):
        # tent with slope one: interior flank nodes see w' = 1 exactly
        w = tent_beam(n=41, height=0.1, slope=1.0)
        ig = geo.interface_geometry(w)
        k = 4  # on the rising flank, away from kinks
        assert ig.s_w[k] == pytest.approx(np.sqrt(2.0), rel=1e-13)
        assert ig.normal[k] == pytest.approx(
            np.array([-1.0, 1.0]) / np.sqrt(2.0), rel=1e-13)

    def test_unit_normals(self):
        rng = np.random.default_rng(2)
        vals = rng.normal(scale=0.2, size=33)
        vals[0] = vals[-1] = 0.0
        ig = geo.interface_geometry(geo.BeamDisplacement(0.25, 0.75, vals))
        assert np.abs(np.linalg.norm(ig.normal, axis=1) - 1.0).max() <= 1e-14


class TestAmbientExtension:
    def test_identical_states_have_zero_distance(self):
        g = geo.build_grid(geo.BeamDisplacement.zero(17), 16, 16)
        rho = np.linspace(0.0, 1.0, g.n_nodes)
        assert geo.l2_distance_ambient((g, rho), (g, rho)) == 0.0

    def test_symmetric(self):
        g1 = geo.build_grid(geo.BeamDisplacement.zero(17), 16, 16)
        w = geo.correct_displacement(tent_beam(height=0.2, slope=0.2))
        g2 = geo.build_grid(w, 16, 16)
        a = (g1, np.ones(g1.n_nodes))
        b = (g2, 0.5 * np.ones(g2.n_nodes))
        assert geo.l2_distance_ambient(a, b) == pytest.approx(
            geo.l2_distance_ambient(b, a), rel=1e-14)

    def test_symmetric_difference_oracle(self):
        # indicator fields of the flat and deformed domains: the squared
        # distance is the symmetric-difference area, here int |w_hat|
        w = geo.correct_displacement(tent_beam(height=0.2, slope=0.2))
        g0 = geo.build_grid(geo.BeamDisplacement.zero(17), 64, 64)
        g2 = geo.build_grid(w, 64, 64)
        d = geo.l2_distance_ambient((g0, np.ones(g0.n_nodes)),
                                    (g2, np.ones(g2.n_nodes)))
        area = np.trapezoid(np.abs(g2.w_hat), g2.x)
        assert d**2 == pytest.approx(area, rel=0.05)

    def test_incommensurate_resolutions_rejected(self):
        g1 = geo.build_grid(geo.BeamDisplacement.zero(17), 48, 48)
        g2 = geo.build_grid(geo.BeamDisplacement.zero(17), 32, 32)
        with pytest.raises(ValueError):
            geo.l2_distance_ambient((g1, np.ones(g1.n_nodes)),
                                    (g2, np.ones(g2.n_nodes)))

    def test_accepts_fluid_state(self, converged_quick):
        s = converged_quick.state
        field = geo.extend_by_zero(s.fluid)
        assert field.values.shape == (32, 32)
