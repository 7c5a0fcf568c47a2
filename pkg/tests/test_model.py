from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inelastic1d.model import (EnvelopeSpec, ModelParams, NormConvergenceError, PotentialSpec, build_initial_state,
                               build_superposition_state, coupling_matrix, coupling_table, impact_time, packet,
                               superposition_alpha, superposition_alpha_printed, weighted_norm)
from inelastic1d.solver import SolverConfig, evolve_exact, evolve_free
from inelastic1d.spectral import SpatialGrid, grid_for


def test_impact_time_examples():
    assert impact_time(ModelParams(eps=0.1, r0=0.5, a=1.0, v0=1.0)) == pytest.approx(0.5)
    assert impact_time(ModelParams(eps=0.1, r0=2.0, a=1.0, v0=2.0)) == pytest.approx(0.5)
    p = ModelParams(eps=0.1, r0=1.0, a=1.0)
    assert impact_time(p) == 0.0
    assert not p.stationary


def test_impact_time_rejects_bad_speed():
    with pytest.raises(ValueError):
        impact_time(SimpleNamespace(v0=0.0, r0=0.0, a=1.0))
    with pytest.raises(ValueError):
        ModelParams(eps=0.1, v0=-1.0)
    with pytest.raises(ValueError):
        ModelParams(eps=0.0)
    with pytest.raises(ValueError):
        ModelParams(eps=0.1, branch=0)


def test_stationarity_flag():
    assert ModelParams(eps=0.1, r0=0.5).stationary
    assert not ModelParams(eps=0.1, r0=1.5).stationary
    assert ModelParams(eps=0.1, r0=1.5, branch=-1).stationary
    assert not ModelParams(eps=0.1, r0=0.5, branch=-1).stationary


def test_params_helpers():
    p = ModelParams(eps=0.1)
    assert p.tau == 0.5
    assert p.carrier_wavenumber == pytest.approx(100.0)
    assert p.with_eps(0.05).eps == 0.05 and p.with_eps(0.05).r0 == p.r0
    m = p.mirrored()
    assert (m.r0, m.branch) == (1.5, -1)
    assert m.mirrored() == p


@pytest.fixture(scope="module")
def grid01():
    p = ModelParams(eps=0.1)
    return p, grid_for(p.r0 - 3, p.a + p.v0 * p.t + 3, p.eps, p.v0)


def test_initial_state_norm_and_populations(grid01):
    p, g = grid01
    s = build_initial_state(p, g)
    assert s.norm() == pytest.approx(1.0, abs=1e-8)
    pops = s.populations()
    assert pops[0] == pytest.approx(1.0, abs=1e-8)
    assert np.all(pops[1:] == 0)


def test_initial_state_momentum_at_carrier(grid01):
    p, g = grid01
    s = build_initial_state(p, g)
    fk = g.to_momentum(s.f[0])
    w = np.abs(fk) ** 2 * g.dk
    mean_k = np.sum(g.k * w)
    assert mean_k == pytest.approx(p.v0 / p.eps ** 2, rel=1e-6)
    assert s.momentum_halfline_probability(0, 1) == pytest.approx(1.0, abs=1e-6)


def test_initial_state_left_branch():
    p = ModelParams(eps=0.1, r0=1.5, branch=-1)
    g = grid_for(-3.0, 4.5, p.eps, p.v0)
    s = build_initial_state(p, g)
    assert s.momentum_halfline_probability(0, -1) == pytest.approx(1.0, abs=1e-6)


def test_underresolved_grid_rejected():
    p = ModelParams(eps=0.1)
    g = SpatialGrid(length=7.0, n=256, origin=-2.5)
    with pytest.raises(ValueError, match="points"):
        build_initial_state(p, g)


def test_packet_is_carrier_times_envelope(grid01):
    p, g = grid01
    f = packet(p, g, EnvelopeSpec.gaussian())
    x = (g.x - p.r0) / p.eps
    expected = p.eps ** -0.5 * np.exp(1j * p.v0 * g.x / p.eps ** 2) * np.pi ** -0.25 * np.exp(-x * x / 2)
    np.testing.assert_allclose(f, expected, atol=1e-12)


def test_zero_potential_round_trip(grid01):
    p, g = grid01
    s0 = build_initial_state(p, g)
    fwd = evolve_exact(s0, p.t, SolverConfig(), PotentialSpec.zero_potential())
    back = evolve_free(fwd, 0.0)
    assert back.distance(s0) < 1e-7


def test_coupling_zero_potential():
    p = ModelParams(eps=0.1)
    z = PotentialSpec.zero_potential()
    for n, m, R in [(0, 0, 1.0), (2, 5, 0.93), (4, 4, 1.2)]:
        assert coupling_matrix(n, m, R, p, z) == 0.0
        assert coupling_matrix(n, m, R, p, z, method="xi") == 0.0


def test_coupling_gaussian_example():
    p = ModelParams(eps=0.1)
    expected = (1.5) ** -0.5
    assert coupling_matrix(0, 0, p.a, p) == pytest.approx(expected, abs=1e-12)
    assert coupling_matrix(0, 0, p.a, p, method="xi") == pytest.approx(expected, abs=1e-12)


def test_coupling_symmetry():
    table = coupling_table(6, np.linspace(-5, 5, 21), PotentialSpec.gaussian())
    np.testing.assert_array_equal(table, np.transpose(table, (0, 2, 1)))


def test_coupling_paths_agree(rng):
    p = ModelParams(eps=0.1)
    v = PotentialSpec.gaussian(0.7, 1.3)
    worst = 0.0
    for _ in range(25):
        n, m = rng.integers(0, 7, size=2)
        R = p.a + p.eps * rng.uniform(-6, 6)
        worst = max(worst, abs(coupling_matrix(n, m, R, p, v) - coupling_matrix(n, m, R, p, v, method="xi")))
    assert worst < 1e-7


def test_coupling_rejects_unknown_method():
    with pytest.raises(ValueError):
        coupling_matrix(0, 0, 1.0, ModelParams(eps=0.1), method="magic")


def test_potential_transform_is_fourier_transform():
    v = PotentialSpec.gaussian(0.8, 1.4)
    x = np.linspace(-40, 40, 16001)
    for xi in (0.0, 0.7, -1.9):
        num = np.trapezoid(v(x) * np.exp(-1j * xi * x), x) / np.sqrt(2 * np.pi)
        assert v.hat(xi) == pytest.approx(num, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-8, 8), st.floats(0.3, 3.0))
def test_potential_transform_hermitian(xi, w):
    v = PotentialSpec.gaussian(1.0, w)
    assert v.hat(-xi) == pytest.approx(np.conj(v.hat(xi)), abs=1e-15)


def test_derivative_callbacks_match_differences():
    v = PotentialSpec.gaussian(1.2, 0.9)
    eta = EnvelopeSpec.gaussian(1.3)
    x = np.linspace(-4, 4, 41)
    h = 1e-5
    for j in (1, 2, 3):
        fd = (v.deriv(x + h, j - 1) - v.deriv(x - h, j - 1)) / (2 * h)
        np.testing.assert_allclose(v.deriv(x, j), fd, atol=1e-7)
        fd = (eta.deriv(x + h, j - 1) - eta.deriv(x - h, j - 1)) / (2 * h)
        np.testing.assert_allclose(eta.deriv(x, j), fd, atol=1e-7)
        fd = (v.hat_deriv(x + h, j - 1) - v.hat_deriv(x - h, j - 1)) / (2 * h)
        np.testing.assert_allclose(v.hat_deriv(x, j), fd, atol=1e-7)


def test_specs_cached_and_mirrored():
    assert PotentialSpec.gaussian() is PotentialSpec.gaussian(1.0, 1.0)
    assert EnvelopeSpec.gaussian() is EnvelopeSpec.gaussian(1.0)
    assert PotentialSpec.zero_potential() is PotentialSpec.zero_potential()
    eta = EnvelopeSpec.gaussian()
    assert eta.l2_norm() == pytest.approx(1.0, abs=1e-12)
    shifted = EnvelopeSpec(deriv=lambda x, j=0: eta.deriv(np.asarray(x) - 1.0, j))
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(shifted.mirrored()(x), shifted(-x))
    np.testing.assert_allclose(shifted.mirrored().deriv(x, 1), -shifted.deriv(-x, 1))


def test_weighted_norm_definition_collapse():
    eta = EnvelopeSpec.gaussian()
    assert weighted_norm(eta.deriv, 0, 2) == pytest.approx(1.0, abs=1e-10)


def test_weighted_norm_gaussian_oracle():
    eta = EnvelopeSpec.gaussian()
    x = np.linspace(-30, 30, 200001)
    d1 = np.sqrt(np.trapezoid(eta.deriv(x, 1) ** 2, x))
    d0 = np.sqrt(np.trapezoid((eta(x) * np.sqrt(1 + x * x)) ** 2, x))
    val = weighted_norm(eta.deriv, 1, 2)
    assert val == pytest.approx(d0 + d1, rel=1e-10)
    # closed form: ||eta'|| = 1/sqrt(2), ||<x> eta|| = sqrt(3/2)
    assert val == pytest.approx(np.sqrt(0.5) + np.sqrt(1.5), rel=1e-10)


def test_weighted_norm_homogeneous_and_list_form():
    eta = EnvelopeSpec.gaussian()
    base = weighted_norm(eta.deriv, 2, 1)
    scaled = weighted_norm([lambda x, j=j: -3.0 * eta.deriv(x, j) for j in range(3)], 2, 1)
    assert scaled == pytest.approx(3.0 * base, rel=1e-12)
    assert weighted_norm(eta.deriv, 1, np.inf) > 0
    with pytest.raises(ValueError):
        weighted_norm([eta], 2)


def test_weighted_norm_tail_failure():
    slow = lambda x, j=0: (1 + np.asarray(x) ** 2) ** -0.3  # noqa: E731
    with pytest.raises(NormConvergenceError):
        weighted_norm(slow, 0, 2)


def test_alpha_formulas():
    for eps in (0.1, 0.05):
        p = ModelParams(eps=eps)
        assert abs(superposition_alpha(p) - 2 ** -0.5) < 1e-8
        assert abs(superposition_alpha_printed(p) - 2 ** -0.5) < 1e-8
    # overlapping packets: both formulas still normalize the same state
    p = ModelParams(eps=0.3, r0=0.05, v0=0.2)
    a, b = superposition_alpha(p), superposition_alpha_printed(p)
    assert abs(a - 2 ** -0.5) > 1e-3
    assert a == pytest.approx(b, rel=1e-6)


def test_superposition_state_normalized():
    p = ModelParams(eps=0.1)
    g = grid_for(-p.r0 - p.v0 * p.t - 3, p.a + p.v0 * p.t + 3, p.eps, p.v0)
    s, alpha = build_superposition_state(p, g)
    assert s.norm() == pytest.approx(1.0, abs=1e-8)
    assert alpha == pytest.approx(2 ** -0.5, abs=1e-8)
    assert s.momentum_halfline_probability(0, 1) == pytest.approx(0.5, abs=1e-6)
