import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from igdiv import divergence as dv
from igdiv import manifold as mf
from igdiv.config import DEFAULT
from igdiv.errors import (FiniteDifferenceStencilOutOfDomain, GradientInversionFailed,
                          NotHessianManifold, PointOutOfDomain)
from igdiv.geodesic import chart_cubic, geodesic_between


def ev(m, name, P, Q, cfg=DEFAULT):
    return dv.evaluate_many(m, name, np.atleast_2d(P), np.atleast_2d(Q), cfg)


class TestClosedForms:
    def test_euclidean_quantities(self, flat):
        p, q = np.array([0.1, -0.3]), np.array([0.6, 0.2])
        half = 0.5 * np.sum((q - p) ** 2)
        for name in ("D", "Dstar", "phi", "phistar", "ayamari", "henmiW", "henmiWstar"):
            assert ev(flat, name, p, q)[0][0] == pytest.approx(half, abs=1e-12), name
        for name in ("r", "standard"):
            assert ev(flat, name, p, q)[0][0] == pytest.approx(2 * half, abs=1e-12), name

    def test_bernoulli_spot_values(self, bernoulli):
        # D(p, q) is KL of the law at q against the law at p
        expect = {"D": oracles.bernoulli_kl(1.0, 0.0), "Dstar": oracles.bernoulli_kl(0.0, 1.0),
                  "bregman": oracles.bernoulli_kl(1.0, 0.0), "ayamari": oracles.bernoulli_kl(1.0, 0.0),
                  "distance": oracles.bernoulli_fisher_distance(0.0, 1.0), "standard": 0.25}
        for name, ref in expect.items():
            assert ev(bernoulli, name, [0.0], [1.0])[0][0] == pytest.approx(ref, abs=1e-9), name
        assert ev(bernoulli, "D", [0.0], [1.0])[0][0] == pytest.approx(0.110944, abs=1e-6)
        r = ev(bernoulli, "r", [0.0], [1.0])[0][0]
        assert r == pytest.approx(oracles.bernoulli_kl(1.0, 0.0) + oracles.bernoulli_kl(0.0, 1.0), abs=1e-9)

    def test_gaussian_canonical_divergence_is_kl(self, gauss_nat):
        P = np.array([[0.1, -1.0], [-0.3, -0.7]])
        Q = np.array([[0.3, -0.8], [0.0, -1.1]])
        val, err = ev(gauss_nat, "D", P, Q)
        np.testing.assert_allclose(val, oracles.gaussian_kl(Q, P), atol=1e-9)
        assert np.all(err < 1e-8)
        np.testing.assert_allclose(ev(gauss_nat, "bregman", P, Q)[0], oracles.gaussian_kl(Q, P), atol=1e-10)

    def test_sphere_is_half_squared_distance(self, sphere):
        p, q = np.array([1.1, 0.2]), np.array([1.4, 0.6])
        d = oracles.great_circle(p, q)
        for name in ("D", "Dstar", "phi", "ayamari", "henmiWstar"):
            assert ev(sphere, name, p, q)[0][0] == pytest.approx(0.5 * d * d, abs=1e-9), name
        assert ev(sphere, "r", p, q)[0][0] == pytest.approx(d * d, abs=1e-10)
        assert ev(sphere, "distance", p, q)[0][0] == pytest.approx(d, abs=1e-10)

    def test_sphere_example_pair(self, sphere):
        val = dv.canonical_divergence(sphere, [1.5708, 0.0], [1.5708, 0.5])
        assert val.value == pytest.approx(0.125, abs=1e-6)
        assert val.quadrature_order == DEFAULT.quad_order


class TestIdentities:
    @pytest.mark.parametrize("spec", ["alpha_gaussian:0.5", "hessian:gaussian_natural"])
    def test_pseudo_distance_splits(self, spec):
        m = mf.from_spec(spec)
        lo, hi = np.array(m.sample_box).T
        P = lo + (hi - lo) * np.array([[0.4, 0.4], [0.6, 0.5]])
        Q = P + 0.12 * (hi - lo) * np.array([[1.0, 0.5], [-0.3, 1.0]])
        r = ev(m, "r", P, Q)[0]
        D, eD = ev(m, "D", P, Q)
        Ds, eDs = ev(m, "Dstar", P, Q)
        ph, eph = ev(m, "phi", P, Q)
        phs, ephs = ev(m, "phistar", P, Q)
        assert np.all(np.abs(r - D - phs) <= 1e-7 + 5 * (eD + ephs))
        assert np.all(np.abs(r - Ds - ph) <= 1e-7 + 5 * (eDs + eph))

    def test_dual_divergence_swaps_arguments_when_flat(self, gauss_nat):
        p, q = np.array([0.1, -1.0]), np.array([0.3, -0.8])
        assert ev(gauss_nat, "Dstar", p, q)[0][0] == pytest.approx(ev(gauss_nat, "D", q, p)[0][0], abs=1e-9)

    def test_phi_fast_path_matches_definition(self, agauss):
        P = np.array([[0.0, 1.0]])
        Q = np.array([[0.25, 1.2]])
        fast = dv.phi_many(agauss, P, Q)[0]
        slow = dv.phi_direct_many(agauss, P, Q)[0]
        np.testing.assert_allclose(fast, slow, atol=1e-9)

    def test_generic_manifold_is_asymmetric(self, agauss):
        p, q = np.array([0.0, 1.0]), np.array([0.3, 1.3])
        assert abs(ev(agauss, "D", p, q)[0][0] - ev(agauss, "D", q, p)[0][0]) > 1e-4

    def test_coincident_pairs_are_zero(self, agauss):
        p = np.array([[0.1, 1.1]])
        for name in dv.QUANTITIES:
            if name == "bregman":
                continue
            val, err = ev(agauss, name, p, p)
            assert val[0] == 0.0 and err[0] == 0.0, name

    def test_batch_matches_single(self, agauss):
        P = np.array([[0.0, 1.0], [0.1, 1.2], [-0.1, 0.9]])
        Q = np.array([[0.2, 1.1], [0.1, 1.0], [0.1, 1.0]])
        val, _ = ev(agauss, "D", P, Q)
        for i in range(3):
            assert dv.canonical_divergence(agauss, P[i], Q[i]).value == pytest.approx(val[i], abs=1e-12)

    def test_error_estimate_tracks_quadrature(self, agauss):
        p, q = np.array([0.0, 1.0]), np.array([0.4, 1.4])
        low = DEFAULT.with_overrides(quad_order=4)
        v4, e4 = ev(agauss, "D", p, q, low)
        v32, e32 = ev(agauss, "D", p, q)
        assert e32[0] < e4[0]
        assert abs(v4[0] - v32[0]) <= 10 * e4[0]


class TestPathIntegrals:
    def test_sum_is_path_independent(self, agauss):
        # pair inside the sampling radius of the manifold
        p, q = np.array([0.0, 1.0]), np.array([0.15, 1.125])
        straight = dv.path_pi_integrals(agauss, p, chart_cubic(agauss, p, q))
        bent = dv.path_pi_integrals(agauss, p, chart_cubic(agauss, p, q, a=[0.1, -0.05], b=[0.0, 0.05]))
        r = ev(agauss, "r", p, q)[0][0]
        assert straight[0].value + straight[1].value == pytest.approx(r, abs=1e-7)
        assert bent[0].value + bent[1].value == pytest.approx(r, abs=1e-7)

    @pytest.mark.parametrize("alpha", [0.0, 0.5])
    def test_path_dependence_is_high_order(self, alpha):
        # exact when self-dual; for alpha = 0.5 a residual of order |q - p|^6 is
        # left by curvature, so halving the pair shrinks it by far more than 2^4
        m = mf.alpha_gaussian(alpha)
        p, d = np.array([0.0, 1.0]), np.array([0.3, 0.25])
        gaps = []
        for s in (1.0, 0.5):
            q = p + s * d
            c = chart_cubic(m, p, q, a=s * np.array([0.2, -0.1]), b=s * np.array([0.0, 0.1]))
            A, B = dv.path_pi_integrals(m, p, c)
            gaps.append(abs(A.value + B.value - ev(m, "r", p, q)[0][0]))
        if alpha == 0.0:
            assert max(gaps) < 1e-10
        else:
            assert gaps[0] / gaps[1] > 2 ** 4.5

    def test_along_primal_geodesic_gives_D(self, agauss):
        p, q = np.array([0.0, 1.0]), np.array([0.3, 1.25])
        c = geodesic_between(agauss, mf.PRIMAL, p, q)
        Pi, _ = dv.path_pi_integrals(agauss, p, c)
        assert Pi.value == pytest.approx(ev(agauss, "D", p, q)[0][0], abs=1e-8)

    def test_pseudo_energy_along_dual_geodesic_is_r(self, agauss):
        p, q = np.array([0.0, 1.0]), np.array([0.3, 1.25])
        c = geodesic_between(agauss, mf.DUAL, p, q)
        L = dv.pseudo_energy(agauss, c, dv.Orientation.PRIMAL, q)
        assert L.value == pytest.approx(ev(agauss, "r", p, q)[0][0], abs=1e-7)
        _, F, _ = dv.pseudo_energy_integrand(agauss, c, dv.Orientation.PRIMAL, q)
        assert np.ptp(F) < 1e-8


    def test_dual_pseudo_energy_along_primal_geodesic_is_r(self, agauss):
        p, q = np.array([0.0, 1.0]), np.array([0.2, 1.15])
        c = geodesic_between(agauss, mf.PRIMAL, p, q)
        L = dv.pseudo_energy(agauss, c, dv.Orientation.DUAL, q)
        assert L.value == pytest.approx(ev(agauss, "r", p, q)[0][0], abs=1e-7)
        _, F, _ = dv.pseudo_energy_integrand(agauss, c, "dual", q)
        assert np.ptp(F) < 1e-8


class TestLocalBehaviour:
    @settings(max_examples=12, deadline=None)
    @given(p=st.floats(-1.2, 1.2), dz=st.floats(-0.4, 0.4).filter(lambda z: abs(z) > 1e-3))
    def test_bernoulli_divergences_are_positive(self, bernoulli, p, dz):
        for name in ("D", "Dstar", "phi", "phistar"):
            assert ev(bernoulli, name, [p], [p + dz])[0][0] > 0

    @settings(max_examples=8, deadline=None)
    @given(ang=st.floats(0, 2 * np.pi))
    def test_second_order_is_half_the_metric(self, agauss, ang):
        p = np.array([0.1, 1.2])
        z = 1e-2 * np.array([np.cos(ang), np.sin(ang)])
        half_g = 0.5 * agauss.inner(p, z, z)
        for name in ("D", "phi", "Dstar"):
            val = ev(agauss, name, p, p + z)[0][0]
            assert val == pytest.approx(half_g, rel=2e-2), name

    def test_gradient_of_pseudo_distance(self, sphere):
        p, q = np.array([1.0, 0.0]), np.array([1.3, 0.4])
        grad = dv.grad_divergence(sphere, "r", p, q).components
        Pi, Pis = dv.pi_vectors(sphere, p, q)
        np.testing.assert_allclose(grad, Pi.components + Pis.components, atol=1e-6)


class TestBregman:
    def test_needs_a_potential(self, sphere):
        with pytest.raises(NotHessianManifold):
            dv.bregman_divergence(sphere, [1.0, 0.0], [1.2, 0.1])

    @pytest.mark.parametrize("spec,theta", [("hessian:bernoulli", [0.7]),
                                            ("hessian:gaussian_natural", [0.2, -0.9])])
    def test_legendre_round_trip(self, spec, theta):
        m = mf.from_spec(spec)
        eta = m.potential.grad(np.array(theta))
        np.testing.assert_allclose(dv.legendre_inverse(m, eta), theta, atol=1e-10)

    def test_gradient_image_is_checked(self, bernoulli):
        with pytest.raises(GradientInversionFailed):
            dv.legendre_inverse(bernoulli, [1.5])

    def test_bernoulli_dual_potential_is_negative_entropy(self, bernoulli):
        mu = 0.3
        assert dv.legendre_dual(bernoulli, [mu]) == pytest.approx(
            mu * np.log(mu) + (1 - mu) * np.log(1 - mu), abs=1e-10)


class TestErrors:
    def test_unknown_quantity(self, flat):
        with pytest.raises(KeyError):
            dv.evaluate_many(flat, "kl", [[0, 0]], [[1, 1]])

    def test_points_outside_domain(self, bernoulli):
        with pytest.raises(PointOutOfDomain):
            ev(bernoulli, "D", [0.0], [9.0])

    def test_stencil_leaving_domain(self, sphere):
        with pytest.raises(FiniteDifferenceStencilOutOfDomain):
            dv.grad_many(sphere, "r", [[1.0, 0.0]], [[1.0, 0.2]], h=5.0)
