"""Measure representations and the TV / BL distances."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from filterlab.measures import (
    DensityFn,
    DiscreteMeasure,
    GaussianMeasure,
    GridDensity,
    bl_distance,
    convolve_density,
    discretize,
    gaussian_bl_same_variance,
    sample_measure,
    tv_distance,
)

from oracles import bl_lattice_dp, tv_gaussians_quad


# ---------------------------------------------------------------------------
# hypothesis strategies
# ---------------------------------------------------------------------------

# atoms on a milli-lattice: canonicalization merges exact duplicates, and
# sub-lattice gaps only stress LP conditioning, not the distance semantics
lattice_points = st.integers(-20000, 20000).map(lambda k: k / 1000.0)
pos_weights = st.floats(0.01, 10.0)


@st.composite
def discrete_measures(draw, max_atoms=6):
    n = draw(st.integers(1, max_atoms))
    atoms = draw(st.lists(lattice_points, min_size=n, max_size=n, unique=True))
    weights = draw(st.lists(pos_weights, min_size=n, max_size=n))
    return DiscreteMeasure(np.array(atoms), np.array(weights))


# ---------------------------------------------------------------------------
# representations
# ---------------------------------------------------------------------------


class TestDiscreteMeasure:
    def test_canonicalization_merges_and_drops(self):
        m = DiscreteMeasure([1.0, 0.0, 1.0, 2.0], [0.25, 0.5, 0.25, 0.0])
        assert m.n_atoms == 2
        np.testing.assert_allclose(m.points, [0.0, 1.0])
        np.testing.assert_allclose(m.weights, [0.5, 0.5])

    def test_weights_normalized(self):
        m = DiscreteMeasure([0.0, 3.0], [2.0, 6.0])
        assert abs(m.weights.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(m.weights, [0.25, 0.75])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([0.0], [0.0])

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([0.0, 1.0], [0.5, -0.5])

    @given(discrete_measures())
    def test_invariants(self, m):
        assert abs(m.weights.sum() - 1.0) <= 1e-12
        assert np.all(m.weights > 0)
        assert np.unique(m.atoms, axis=0).shape[0] == m.n_atoms


class TestGridDensity:
    def test_normalizes(self):
        g = GridDensity(0.0, 0.5, [1.0, 2.0, 1.0])
        assert abs(g.mass() - 1.0) < 1e-9

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            GridDensity(0.0, 0.5, [1.0, -0.5])

    def test_moments(self):
        g = discretize(GaussianMeasure(0.3, 2.0), -12, 0.01, 2401)
        assert abs(g.mean() - 0.3) < 1e-6
        assert abs(g.variance() - 2.0) < 1e-4


class TestDensityFn:
    def test_presets_normalized(self):
        for q in (DensityFn.gaussian(1.0), DensityFn.uniform(1.0),
                  DensityFn.triangular(1.0), DensityFn.gaussian(5.0)):
            zs = np.linspace(-q.support_radius, q.support_radius, 10001)
            assert abs(np.trapezoid(q(zs), zs) - 1.0) < 1e-6

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            DensityFn(lambda z: np.exp(-np.abs(z)), support_radius=10.0)

    def test_moments(self):
        q = DensityFn.gaussian(2.0)
        assert abs(q.mean) < 1e-9
        assert abs(q.std - 2.0) < 1e-6


# ---------------------------------------------------------------------------
# total variation
# ---------------------------------------------------------------------------


class TestTV:
    def test_identity_is_zero(self):
        m = DiscreteMeasure([0.0, 1.0], [0.3, 0.7])
        assert tv_distance(m, m) == 0.0

    def test_disjoint_diracs(self):
        a = DiscreteMeasure([0.0], [1.0])
        b = DiscreteMeasure([1.0], [1.0])
        assert tv_distance(a, b) == 2.0

    def test_unit_gaussians(self):
        # numeric oracle: adaptive quadrature of |phi_0 - phi_1|
        oracle = tv_gaussians_quad(0.0, 1.0, 1.0, 1.0)
        closed = 2.0 * (2.0 * norm.cdf(0.5) - 1.0)
        assert abs(oracle - closed) < 1e-9
        got = tv_distance(GaussianMeasure(0, 1), GaussianMeasure(1, 1))
        assert abs(got - 0.7658498450960524) < 1e-6
        assert abs(got - oracle) < 1e-6

    def test_same_variance_closed_form_vs_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            m1, m2 = rng.uniform(-3, 3, size=2)
            s = rng.uniform(0.3, 2.5)
            got = tv_distance(GaussianMeasure(m1, s * s), GaussianMeasure(m2, s * s))
            assert abs(got - tv_gaussians_quad(m1, s, m2, s)) < 1e-6

    def test_different_variance_numeric(self):
        got = tv_distance(GaussianMeasure(0, 1), GaussianMeasure(0, 4))
        assert abs(got - tv_gaussians_quad(0, 1, 0, 2)) < 1e-5

    def test_grid_vs_gaussian(self):
        g = discretize(GaussianMeasure(0, 1), -8, 0.01, 1601)
        assert tv_distance(g, GaussianMeasure(0, 1)) < 1e-9

    def test_mismatched_grids_need_resample(self):
        a = GridDensity(0.0, 0.1, np.ones(50))
        b = GridDensity(0.0, 0.07, np.ones(50))
        with pytest.raises(ValueError):
            tv_distance(a, b)
        val = tv_distance(a, b, resample=True)
        assert 0.0 <= val <= 2.0

    def test_discrete_vs_gaussian_rejected(self):
        with pytest.raises(TypeError):
            tv_distance(DiscreteMeasure([0.0], [1.0]), GaussianMeasure(0, 1))

    def test_dimension_mismatch(self):
        a = DiscreteMeasure(np.array([[0.0, 0.0]]), [1.0])
        b = DiscreteMeasure([0.0], [1.0])
        with pytest.raises(ValueError):
            tv_distance(a, b)

    @given(discrete_measures(), discrete_measures())
    @settings(max_examples=200, deadline=None)
    def test_metric_axioms_pairwise(self, a, b):
        d_ab = tv_distance(a, b)
        assert 0.0 <= d_ab <= 2.0 + 1e-12
        assert d_ab == tv_distance(b, a)  # symmetry is exact
        same = (a.n_atoms == b.n_atoms and np.array_equal(a.atoms, b.atoms)
                and np.allclose(a.weights, b.weights, atol=1e-12))
        if same:
            assert d_ab <= 1e-12
        else:
            assert d_ab > 0.0

    @given(discrete_measures(), discrete_measures(), discrete_measures())
    @settings(max_examples=200, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-9


# ---------------------------------------------------------------------------
# bounded-Lipschitz
# ---------------------------------------------------------------------------


class TestBL:
    def test_identity_is_zero(self):
        m = DiscreteMeasure([0.0, 2.0], [0.4, 0.6])
        assert bl_distance(m, m) == 0.0

    @pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 2.0, 3.0, 5.0])
    def test_dirac_pairs_clipped_linear(self, t):
        a = DiscreteMeasure([0.0], [1.0])
        b = DiscreteMeasure([t], [1.0])
        assert abs(bl_distance(a, b) - min(2.0, t)) < 1e-9

    def test_three_atom_example_vs_lattice(self):
        # brute-force maximization over f in a 0.05 lattice on [-1,1]^3
        # subject to the Lipschitz constraints gives exactly 1.0
        a = DiscreteMeasure([0.0, 1.0, 2.0], [0.5, 0.5, 1e-300])
        b = DiscreteMeasure([1.0, 2.0], [0.5, 0.5])
        got = bl_distance(a, b)
        assert abs(got - 1.0) < 1e-9
        dp = bl_lattice_dp([0.0, 1.0, 2.0], [0.5, 0.0, -0.5], step=1e-4)
        assert abs(got - dp) < 1e-3

    @given(discrete_measures(), discrete_measures())
    @settings(max_examples=200, deadline=None)
    def test_bl_below_tv_and_symmetric(self, a, b):
        # the Lipschitz ball sits inside the sup-norm ball
        d_ab = bl_distance(a, b)
        assert d_ab <= tv_distance(a, b) + 1e-9
        assert abs(d_ab - bl_distance(b, a)) < 1e-10

    @given(discrete_measures(), discrete_measures())
    @settings(max_examples=200, deadline=None)
    def test_line_fast_path_matches_dense(self, a, b):
        fast = bl_distance(a, b)
        # embed the same atoms in R^2 to force the dense pairwise program
        a2 = DiscreteMeasure(np.column_stack([a.points, np.zeros(a.n_atoms)]), a.weights)
        b2 = DiscreteMeasure(np.column_stack([b.points, np.zeros(b.n_atoms)]), b.weights)
        assert abs(fast - bl_distance(a2, b2)) < 1e-9

    @given(discrete_measures(), discrete_measures(), discrete_measures())
    @settings(max_examples=50, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        assert bl_distance(a, c) <= bl_distance(a, b) + bl_distance(b, c) + 1e-9

    def test_gaussian_closed_form_matches_lp(self):
        # exact same-variance formula vs discretize + LP (independent routes)
        rng = np.random.default_rng(3)
        for _ in range(6):
            z1, z2 = rng.uniform(-2, 2, size=2)
            v = rng.uniform(0.05, 2.0)
            s = np.sqrt(v)
            lo = min(z1, z2) - 8 * s
            n = 3001
            spacing = (max(z1, z2) + 8 * s - lo) / (n - 1)
            ga = discretize(GaussianMeasure(z1, v), lo, spacing, n)
            gb = discretize(GaussianMeasure(z2, v), lo, spacing, n)
            lp = bl_distance(DiscreteMeasure(ga.points, ga.masses),
                             DiscreteMeasure(gb.points, gb.masses))
            closed = gaussian_bl_same_variance(z1, z2, v)
            assert abs(lp - closed) < 1e-4

    def test_gaussian_closed_form_degenerate(self):
        assert gaussian_bl_same_variance(0.0, 0.5, 0.0) == 0.5
        assert gaussian_bl_same_variance(0.0, 7.0, 0.0) == 2.0
        assert gaussian_bl_same_variance(1.3, 1.3, 0.7) == 0.0


# ---------------------------------------------------------------------------
# discretize / convolve
# ---------------------------------------------------------------------------


class TestDiscretize:
    def test_gaussian_moments(self):
        g = discretize(GaussianMeasure(0, 1), -8, 0.01, 1601)
        assert abs(g.mean()) < 1e-4
        assert abs(g.variance() - 1.0) < 1e-4

    def test_atom_on_node(self):
        g = discretize(DiscreteMeasure([0.0], [1.0]), -1.0, 0.5, 5)
        np.testing.assert_allclose(g.masses, [0, 0, 1.0, 0, 0], atol=1e-15)

    def test_two_atom_symmetric(self):
        m = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
        g = discretize(m, -2.0, 0.5, 9)
        expected = np.zeros(9)
        expected[[2, 6]] = 0.5 / 0.5
        np.testing.assert_allclose(g.values, expected, atol=1e-15)

    def test_short_grid_rejected(self):
        with pytest.raises(ValueError):
            discretize(GaussianMeasure(0, 1), -1.0, 0.01, 201)  # covers +-1 only

    def test_atom_outside_grid_rejected(self):
        with pytest.raises(ValueError):
            discretize(DiscreteMeasure([5.0], [1.0]), -1.0, 0.5, 5)

    def test_tv_converges_under_refinement(self):
        a, b = GaussianMeasure(0, 1), GaussianMeasure(0.7, 1.3)
        exact = tv_gaussians_quad(0, 1, 0.7, np.sqrt(1.3))
        errors = []
        for spacing in (0.08, 0.04, 0.02):
            count = int(round(24 / spacing)) + 1
            err = abs(tv_distance(discretize(a, -12, spacing, count),
                                  discretize(b, -12, spacing, count)) - exact)
            errors.append(err)
        assert errors[2] <= errors[0] + 1e-3
        assert errors[2] < 1e-3


class TestConvolve:
    def test_point_mass_reproduces_noise(self):
        spacing = 0.01
        g = discretize(DiscreteMeasure([0.0], [1.0]), -0.05, spacing, 11)
        out = convolve_density(g, DensityFn.gaussian(1.0))
        sup_err = np.max(np.abs(out.values - norm.pdf(out.points)))
        assert sup_err < 1e-6

    def test_gaussian_convolution(self):
        g = discretize(GaussianMeasure(0, 1), -9, 0.01, 1801)
        out = convolve_density(g, DensityFn.gaussian(1.0))
        assert abs(out.mean()) < 1e-4
        assert abs(out.variance() - 2.0) < 1e-4

    def test_mass_preserved_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = rng.integers(20, 200)
            vals = rng.uniform(0, 1, n)
            g = GridDensity(rng.uniform(-5, 0), rng.uniform(0.005, 0.05), vals)
            out = convolve_density(g, DensityFn.gaussian(rng.uniform(0.3, 2.0)))
            assert abs(out.mass() - 1.0) < 1e-9

    def test_coarse_grid_rejected(self):
        g = GridDensity(0.0, 5.0, np.ones(4))
        with pytest.raises(ValueError):
            convolve_density(g, DensityFn.gaussian(0.5))


class TestSampling:
    def test_discrete_sampling_frequencies(self):
        m = DiscreteMeasure([0.0, 1.0], [0.25, 0.75])
        xs = sample_measure(m, np.random.default_rng(0), size=20000)
        assert abs(np.mean(xs == 1.0) - 0.75) < 0.01

    def test_gaussian_sampling_moments(self):
        xs = sample_measure(GaussianMeasure(2.0, 4.0), np.random.default_rng(1), size=50000)
        assert abs(xs.mean() - 2.0) < 0.05
        assert abs(xs.std() - 2.0) < 0.05
