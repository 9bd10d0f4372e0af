"""Acceptance suite: one test per acceptance criterion, at the stated tolerances."""

import subprocess
import sys

import numpy as np
import pytest

import oracles
from igdiv import manifold as mf
from igdiv import verify as vf
from igdiv.divergence import evaluate_many
from igdiv.transport import cap_area_check, holonomy_curvature_check

ZOO = ["euclidean:2", "sphere2", "hessian:bernoulli", "hessian:gaussian_natural", "alpha_gaussian:0.5"]
TWO_D = ["euclidean:2", "sphere2", "hessian:gaussian_natural", "alpha_gaussian:0.5"]
ORTHOGONALITY = ["X_sigma", "gradD_X", "Xstar_sigmastar", "gradDstar_Xstar", "V_sigmastar", "Vstar_sigma"]


def values(m, name, P, Q):
    return evaluate_many(m, name, P, Q)[0]


@pytest.fixture(scope="module")
def decompositions():
    """Decomposition reports over 50 seeded pairs on each zoo manifold."""
    return {spec: vf.check_decompositions(mf.from_spec(spec), vf.SampleScheme(seed=0, count=50))
            for spec in ZOO}


def test_01_euclidean_closed_forms():
    m = mf.euclidean(2)
    P, Q = vf.SampleScheme(seed=0, count=100).pairs(m)
    assert len(P) == 100
    half = 0.5 * np.sum((Q - P) ** 2, axis=-1)
    for name in ("D", "Dstar", "phi", "phistar", "ayamari", "henmiW", "henmiWstar"):
        np.testing.assert_allclose(values(m, name, P, Q), half, rtol=0, atol=1e-10, err_msg=name)
    np.testing.assert_allclose(values(m, "standard", P, Q), 2 * half, rtol=0, atol=1e-10)


def test_02_self_dual_sphere_is_half_squared_distance():
    m = mf.sphere2()
    P, Q = vf.SampleScheme(seed=0, count=50, pair_radius=1.0).pairs(m)
    d = oracles.great_circle(P, Q)
    assert len(P) == 50 and np.all(d <= 1.0)
    np.testing.assert_allclose(values(m, "D", P, Q), 0.5 * d ** 2, rtol=0, atol=1e-6)


def test_03_dually_flat_bregman_and_ay_amari():
    for spec in ("hessian:bernoulli", "hessian:gaussian_natural"):
        m = mf.from_spec(spec)
        P, Q = vf.SampleScheme(seed=0, count=50).pairs(m)
        assert len(P) == 50
        D = values(m, "D", P, Q)
        np.testing.assert_allclose(D, values(m, "bregman", P, Q), rtol=0, atol=1e-6, err_msg=spec)
        np.testing.assert_allclose(D, values(m, "ayamari", P, Q), rtol=0, atol=1e-6, err_msg=spec)
    m = mf.hessian("bernoulli")
    spot = values(m, "D", np.array([[0.0]]), np.array([[1.0]]))[0]
    assert spot == pytest.approx(0.110944, abs=1e-6)
    assert spot == pytest.approx(oracles.bernoulli_kl(1.0, 0.0), abs=1e-6)


def test_04_symmetric_sphere_matches_dual_henmi_kobayashi():
    m = mf.sphere2()
    P, Q = vf.SampleScheme(seed=0, count=50).pairs(m)
    assert len(P) == 50
    # W*(q || p): the dual Henmi-Kobayashi divergence with the arguments exchanged
    np.testing.assert_allclose(values(m, "D", P, Q), values(m, "henmiWstar", Q, P), rtol=0, atol=1e-6)


def test_05_gradient_of_pseudo_distance():
    for spec in ("sphere2", "hessian:bernoulli", "alpha_gaussian:0.5"):
        rep = vf.check_grad_pseudo_distance(mf.from_spec(spec), vf.SampleScheme(seed=0, count=50),
                                            h=1e-5, tol=1e-4)
        assert rep.samples == 50
        assert rep.passed, f"{spec}: {rep.summary()}"


def test_06_decomposition_identities_and_path_independence(decompositions):
    for spec, rep in decompositions.items():
        assert rep.samples == 50, spec
        # the last record names the worst component, the others are per pair
        assert len(rep.details) == 51, spec
        for d in rep.details[:-1]:
            assert "failure" not in d, f"{spec}: {d['failure']}"
            for key in ("identity_D_phistar", "identity_Dstar_phi", "path_integral"):
                assert d[key] <= d["tol_" + key], f"{spec} {key}: {d[key]:.3e} > {d['tol_' + key]:.3e}"


def test_07_orthogonality_suites(decompositions):
    for spec in TWO_D:
        m = mf.from_spec(spec)
        rep = vf.check_level_set_orthogonality(m, scheme=vf.SampleScheme(seed=0, count=16), tol=1e-3)
        assert rep.passed, f"{spec}: {rep.summary()}"
        for d in decompositions[spec].details[:-1]:
            worst = max(d[k] for k in ORTHOGONALITY)
            assert worst <= 1e-3, f"{spec}: orthogonality residual {worst:.3e}"


def test_08_eguchi_recovery():
    for spec in ("sphere2", "hessian:bernoulli", "hessian:gaussian_natural", "alpha_gaussian:0.5"):
        rep = vf.check_eguchi_consistency(mf.from_spec(spec), vf.SampleScheme(seed=0, count=3),
                                          tol_g=1e-4, tol_gamma=1e-3, tol_slope=0.3)
        assert rep.passed, f"{spec}: {rep.summary()}"
        for d in rep.details[:-1]:
            for name in ("D", "phi"):
                assert d[f"{name}_metric_error"] <= 1e-4
                assert d[f"{name}_symbol_error"] <= 1e-3
                assert abs(d[f"{name}_taylor_slope"] - 4.0) <= 0.3


def test_09_transport_duality_and_energy_constancy():
    for spec in ("sphere2", "hessian:bernoulli", "hessian:gaussian_natural", "alpha_gaussian:0.5"):
        rep = vf.check_energy_invariants(mf.from_spec(spec), vf.SampleScheme(seed=0, count=20),
                                         tol=1e-8, tol_energy=1e-7)
        assert rep.passed, f"{spec}: {rep.summary()}"
        for d in rep.details[:-1]:
            assert d["isometry"] <= 1e-8 and d["node_spread"] <= 1e-8 and d["energy_error"] <= 1e-7


def test_10_holonomy_leading_order():
    m = mf.sphere2()
    scheme = vf.SampleScheme(seed=0, count=4)
    pts = scheme.points(m, salt=91)
    for p in pts:
        g = m.metric(p)
        x = np.array([1.0, 0.0]) / np.sqrt(g[0, 0])
        y = np.array([0.0, 1.0]) / np.sqrt(g[1, 1])
        rep = holonomy_curvature_check(m, p, x, y, x, scale=0.05, tol=0.1)
        assert rep.details[0]["relative_mismatch"] <= 0.1
        # halving the scale shrinks the defect by a factor close to 4
        assert 3.5 <= rep.details[-1]["defect_ratio"] <= 4.5
        assert rep.passed
    cap = cap_area_check(m, theta0=np.pi / 3, tol=1e-3)
    assert cap.max_error <= 1e-3


def test_11_symmetry_relation_on_level_curves():
    for spec in ("sphere2", "alpha_gaussian:0.5"):
        rep = vf.check_symmetry_relations(mf.from_spec(spec), vf.SampleScheme(seed=0, count=32), tol=1e-3)
        assert rep.passed, f"{spec}: {rep.summary()}"
        assert rep.details[-1]["monotone"]


def _cli(*argv):
    proc = subprocess.run([sys.executable, "-m", "igdiv", *argv], capture_output=True, check=False)
    return proc.returncode, proc.stdout


def test_12_determinism_of_cli_output(tmp_path):
    runs = [
        ("compute", "--manifold", "alpha_gaussian:0.5", "--p", "0,1", "--q", "0.1,1.15",
         "--quantities", "D,Dstar,phi,r"),
        ("table", "--manifold", "sphere2", "--p", "1.2,0", "--grid", "1.1:1.3:2,0.1:0.2:2",
         "--quantities", "D", "--format", "json"),
        ("verify", "--manifold", "alpha_gaussian:0.5", "--suite", "grad_r,round_trip",
         "--seed", "5", "--format", "json"),
    ]
    for argv in runs:
        first, second = _cli(*argv), _cli(*argv)
        assert first[0] == 0
        assert first[1] == second[1], argv[0]
    out = tmp_path / "a.csv"
    _cli("verify", "--manifold", "sphere2", "--suite", "round_trip", "--seed", "2", "--out", str(out))
    again = tmp_path / "b.csv"
    _cli("verify", "--manifold", "sphere2", "--suite", "round_trip", "--seed", "2", "--out", str(again))
    assert out.read_bytes() == again.read_bytes()
