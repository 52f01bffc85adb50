import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import built
from gfspec.evolution import Stepper
from gfspec.grid import make_grid, pairing, weighted_norm
from gfspec.kernels import TotalRate, mitosis_model
from gfspec.operators import assemble, matrix_operator
from gfspec.spectral import (ConvergenceError, Projector, deflated_log_norms, eigentriple,
                             fit_log_slope, implicit_euler_rate, principal_eigenpair,
                             random_modulation, random_profile, read_eigentriple_csv,
                             spectral_gap_estimate)

SIZES = {"mitosis": 2049, "self_similar": 513, "age_structured": 2001}
NAMES = sorted(SIZES)


def triple(name):
    return built(name, SIZES[name])


def test_mitosis_eigenvalue():
    assert abs(triple("mitosis")[3].lam - 1.0) <= 2e-2


def test_self_similar_eigenvalue_and_dual():
    _, g, _, t = triple("self_similar")
    assert abs(t.lam) <= 5e-3
    inner = slice(1, g.N - 1)
    c = np.sum(t.phi[inner] * g.nodes[inner]) / np.sum(g.nodes[inner] ** 2)
    assert np.max(np.abs(t.phi[inner] - c * g.nodes[inner])) <= 5e-3 * c


def discrete_age_root(g):
    # the upwind recursion solved by hand: f_i = f_{i-1} / (1 + w_i (1 + lam)) and
    # f_0 (1 + w_0 (1 + lam)) = sum w K f, which fixes lam through one scalar equation
    w, K = g.quad_weights, 3.0 * np.exp(-g.nodes)

    def h(lam):
        f = np.cumprod(1.0 / (1.0 + w * (1.0 + lam)))
        return np.sum(w * K * f) - 1.0

    return brentq(h, 0.5, 1.5, xtol=1e-15)


def test_age_eigenvalue_matches_discrete_characteristic_equation():
    _, g, _, t = triple("age_structured")
    assert abs(t.lam - discrete_age_root(g)) <= 1e-9
    # the first-order scheme sits about one cell width below the continuous root
    assert abs(t.lam - 1.0) <= 2.0 * g.dx


def test_age_dual_is_exponential():
    _, g, _, t = triple("age_structured")
    sel = g.nodes <= 10.0
    psi = t.phi[sel] / t.phi[0]
    assert np.max(np.abs(psi - np.exp(-g.nodes[sel])) / np.exp(-g.nodes[sel])) <= 1e-2


@pytest.mark.parametrize("name", NAMES)
def test_eigentriple_contract(name):
    _, g, op, t = triple(name)
    assert np.all(t.f_inf >= 0.0) and np.all(t.phi >= 0.0)
    assert weighted_norm(t.f_inf, g, t.norm_spec) == pytest.approx(1.0, abs=1e-12)
    assert abs(pairing(t.phi, t.f_inf, g) - 1.0) <= 1e-8
    assert max(t.residuals) <= 1e-10
    assert np.min(t.f_inf[1:-1]) > 0.0


@pytest.mark.parametrize("name", NAMES)
def test_projector_examples(name, rng):
    _, g, op, t = triple(name)
    P = Projector(t)
    f = rng.standard_normal(g.N)
    scale = np.max(np.abs(P(f)))
    assert np.max(np.abs(P(t.f_inf) - t.f_inf)) <= 1e-8
    assert np.max(np.abs(P(f - P(f)))) <= 1e-8 * scale
    assert np.max(np.abs(P(P(f)) - P(f))) <= 1e-8 * scale
    assert pairing(t.phi, P(f), g) == pytest.approx(pairing(t.phi, f, g), rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_projector_commutes(name, rng):
    _, g, op, t = triple(name)
    P = Projector(t)
    f = rng.standard_normal(g.N)
    lhs = op.matrix @ P(f)
    assert np.max(np.abs(lhs - t.lam * P(f))) <= 1e-8 * max(1.0, np.max(np.abs(P(f))))
    rhs = P(op.matrix @ f)
    assert np.max(np.abs(rhs - t.lam * P(f))) <= 1e-6 * max(1.0, np.max(np.abs(P(f))))


def test_projector_matrix_agrees():
    _, g, _, t = triple("self_similar")
    f = np.cos(g.nodes)
    assert np.allclose(Projector(t).matrix() @ f, Projector(t)(f), rtol=1e-12, atol=1e-14)


def test_synthetic_gap():
    op = matrix_operator(np.diag([0.0, -2.0]))
    t = eigentriple(op)
    assert t.lam == pytest.approx(0.0, abs=1e-12)
    est = spectral_gap_estimate(op, t, T=10.0, dt=0.01)
    assert est.a_ss == pytest.approx(-2.0, abs=1e-3)
    assert est.gap == pytest.approx(2.0, abs=1e-3)


def test_implicit_euler_rate_inverts_the_factor():
    dt, mu = 0.05, -1.7
    slope = -np.log(1.0 - dt * mu) / dt
    assert implicit_euler_rate(slope, dt, 0.0) == pytest.approx(mu, abs=1e-12)
    assert implicit_euler_rate(-1.0, 1e-9, 0.5) == pytest.approx(-0.5, abs=1e-6)


def test_fit_log_slope():
    t = np.linspace(0.0, 4.0, 41)
    assert fit_log_slope(t, 3.0 - 0.7 * t, (2.0, 4.0)) == pytest.approx(-0.7, abs=1e-12)
    with pytest.raises(ValueError):
        fit_log_slope(t, t, (2.0, 2.2))


@pytest.mark.parametrize("name", NAMES)
def test_gap_below_lambda(name):
    _, g, op, t = triple(name)
    est = spectral_gap_estimate(op, t, T=6.0, dt=0.02, seeds=(0,))
    assert est.a_ss < t.lam


@pytest.mark.parametrize("K0", [0.5, 2.0])
def test_eigenvalue_linear_in_rate(K0):
    g = make_grid(20.0, 2049)
    lam, _ = principal_eigenpair(assemble(mitosis_model(TotalRate.constant(K0)), g))
    assert abs(lam - K0) <= 2e-2 * K0


def test_duality_link():
    _, g, op, t = triple("self_similar")
    f = random_profile(g, 3)
    dt = 0.01
    f1 = Stepper(op, dt)(f)
    before, after = pairing(t.phi, f, g), pairing(t.phi, f1, g)
    assert abs(after - np.exp(t.lam * dt) * before) <= dt ** 2 * abs(before)


def test_deflation_rejects_principal_mode():
    _, g, op, t = triple("self_similar")
    with pytest.raises(ConvergenceError):
        deflated_log_norms(op, t, np.zeros(g.N), 1.0, 0.1)


def test_nonconvergence_raises():
    op = assemble(mitosis_model(TotalRate.constant(1.0)), make_grid(20.0, 257))
    with pytest.raises(ConvergenceError):
        principal_eigenpair(op, tol=1e-30, max_iter=2)


def test_csv_round_trip(tmp_path):
    _, g, _, t = triple("self_similar")
    path = tmp_path / "eig.csv"
    t.to_csv(path)
    meta, x, f, phi = read_eigentriple_csv(path)
    assert meta["lambda"] == t.lam
    assert np.array_equal(x, g.nodes) and np.array_equal(f, t.f_inf) and np.array_equal(phi, t.phi)


@settings(max_examples=20)
@given(st.integers(0, 10 ** 6))
def test_random_profile_positive_and_resolution_free(seed):
    coarse, fine = make_grid(8.0, 65), make_grid(8.0, 129)
    pc, pf = random_profile(coarse, seed), random_profile(fine, seed)
    assert np.all(pc > 0.0)
    assert np.allclose(pc, pf[::2], rtol=0, atol=1e-14)
    assert np.max(np.abs(random_modulation(fine, seed))) <= 0.5 + 1e-15
