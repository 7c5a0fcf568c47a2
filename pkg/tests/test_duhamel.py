import numpy as np
import pytest

from inelastic1d.duhamel import (IntegrationDomain, duhamel_fields, duhamel_sum, duhamel_term, critical_point,
                                 extrapolate_coefficient, trig_interpolate)
from inelastic1d.expansion import order1_coeff, order2_double, order2_single
from inelastic1d.experiments import default_grid, exact_run, fit_slope
from inelastic1d.model import ModelParams, PotentialSpec, build_initial_state
from inelastic1d.solver import evolve_exact, evolve_free

X = np.linspace(-4, 4, 33)


@pytest.fixture(scope="module")
def fields():
    out = {}
    for eps in (0.1, 0.05, 0.025):
        p = ModelParams(eps=eps)
        out[eps] = (p, *duhamel_fields(p.t, p))
    return out


def _norm(term_x, v):
    return np.sqrt(np.sum(np.abs(v) ** 2) * (term_x[1] - term_x[0]))


def test_zero_potential_terms_vanish(stationary):
    z = PotentialSpec.zero_potential()
    t1, t2 = duhamel_fields(stationary.t, stationary, potential=z)
    assert t1.norm() == 0 and t2.norm() == 0
    assert np.all(duhamel_term(1, stationary.t, 1, stationary, X, z, method="z") == 0)


def test_routes_agree(fields):
    p, t1, _ = fields[0.1]
    ref = trig_interpolate(t1.x, t1.values[1], X)
    scale = np.max(np.abs(ref))
    for method in ("z", "s"):
        val = duhamel_term(1, p.t, 1, p, X, method=method)
        assert np.max(np.abs(val - ref)) < 1e-7 * scale


def test_operator_route_interpolation(fields):
    p, t1, _ = fields[0.1]
    direct = duhamel_term(1, p.t, 2, p)
    np.testing.assert_allclose(direct, t1.values[2], atol=1e-14)
    np.testing.assert_allclose(duhamel_term(1, p.t, 2, p, t1.x[::7]), t1.values[2, ::7], atol=1e-12)


def test_term_argument_validation(stationary):
    with pytest.raises(ValueError):
        duhamel_term(3, 1.0, 0, stationary)
    with pytest.raises(ValueError):
        duhamel_term(1, 0.0, 0, stationary)
    with pytest.raises(ValueError):
        duhamel_term(2, 1.0, 0, stationary, X, method="z")
    with pytest.raises(ValueError):
        duhamel_term(1, 1.0, 0, stationary, method="s")
    with pytest.raises(ValueError):
        duhamel_term(1, 1.0, 0, stationary, X, method="magic")


def test_left_branch_parity():
    p = ModelParams(eps=0.1)
    q = p.mirrored()
    a = duhamel_term(1, p.t, 1, p, X, method="z")
    b = duhamel_term(1, q.t, 1, q, -X, method="z")
    np.testing.assert_allclose(b, -a, atol=1e-14)
    f1, _ = duhamel_fields(p.t, p, n_max=4, points=256)
    g1, _ = duhamel_fields(q.t, q, n_max=4, points=256)
    np.testing.assert_allclose(trig_interpolate(g1.x, g1.values[1], -X), -trig_interpolate(f1.x, f1.values[1], X),
                               atol=1e-12)


def test_first_term_minus_expansion_is_third_order(fields):
    eps, res = [], []
    for e, (p, t1, _) in fields.items():
        x = t1.x
        approx = e * order1_coeff(1, p, x) + e * e * order2_single(1, p, x)
        eps.append(e)
        res.append(_norm(x, t1.values[1] - approx))
    assert fit_slope(eps, res).slope >= 2.7


def test_second_term_leading_order(fields):
    ratios = []
    for e, (p, _, t2) in fields.items():
        ratios.append(_norm(t2.x, t2.values[1] - e * e * order2_double(1, p, t2.x)) / e ** 2)
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 0.3 * ratios[0]


def test_nonstationary_first_term_decays_fast():
    eps = (0.2, 0.1, 0.05)
    norms = []
    for e in eps:
        p = ModelParams(eps=e, r0=1.5)
        t1, _ = duhamel_fields(p.t, p, points=256)
        norms.append(t1.norm() ** 2)
    # eps = 0.2 is pre-asymptotic; the bound is checked once the packet is well separated
    for e, val in zip(eps[1:], norms[1:]):
        assert val < e ** 4
    assert norms[2] / norms[1] < (eps[2] / eps[1]) ** 8


def test_sum_order0_is_free():
    p = ModelParams(eps=0.2)
    g = default_grid(p)
    s0 = build_initial_state(p, g)
    assert duhamel_sum(0, p.t, p, g).distance(evolve_free(s0, p.t)) < 1e-12
    with pytest.raises(ValueError):
        duhamel_sum(3, p.t, p, g)


def test_sum_error_decreases_with_order():
    p = ModelParams(eps=0.1)
    _, exact = exact_run(p)
    g = exact.grid
    errs = [duhamel_sum(k, p.t, p, g).distance(exact) for k in range(3)]
    assert errs[0] > 5 * errs[1] > 25 * errs[2]


def test_weak_coupling_first_term():
    p = ModelParams(eps=0.1)
    weak = PotentialSpec.gaussian(1e-3, 1.0)
    s0 = build_initial_state(p, default_grid(p))
    exact = evolve_exact(s0, p.t, potential=weak)
    free = evolve_free(s0, p.t)
    first = duhamel_sum(1, p.t, p, s0.grid, potential=weak)
    diff = exact.distance(free)
    assert exact.distance(first) < 5e-3 * diff


def test_critical_point_approaches_impact_time():
    gaps = []
    for e in (0.1, 0.05, 0.025):
        p = ModelParams(eps=e)
        gaps.append(abs(critical_point(1, 1, p)[0] - p.tau))
        assert gaps[-1] <= 2 * e
    assert gaps[0] > gaps[1] > gaps[2]


def test_critical_point_second_order():
    p = ModelParams(eps=0.05)
    loc = critical_point(2, 1, p, span=6.0, points=61)
    assert loc.shape == (2,) and loc[0] <= loc[1]
    assert np.all(np.abs(loc - p.tau) <= 3 * p.eps)
    with pytest.raises(ValueError):
        critical_point(1, 1, ModelParams(eps=0.1, r0=1.5))


def test_integration_domain():
    p = ModelParams(eps=0.1)
    dom = IntegrationDomain.from_params(2, p.t, p)
    lo, hi = dom.z_bounds
    assert lo == pytest.approx(-5.0) and hi == pytest.approx(5.0)
    assert dom.to_s(dom.to_z(0.3)) == pytest.approx(0.3)
    pts = np.array([[-1.0, 2.0], [2.0, -1.0], [-6.0, 0.0], [0.0, 20.0]])
    np.testing.assert_array_equal(dom.contains(pts), [True, False, False, False])
    np.testing.assert_array_equal(dom.contains(pts, limit=True), [True, False, True, True])
    rng = np.random.default_rng(5)
    z = np.sort(rng.uniform(-30, 30, size=(500, 2)), axis=1)
    inside = dom.contains(z)
    assert np.all(dom.contains(z[inside], limit=True))


def test_extrapolate_polynomial():
    eps = [0.04, 0.02, 0.01, 0.005]
    samples = {e: np.array([2.0 - 3.0 * e + 0.5 * e ** 2, 1j * e]) for e in eps}
    c0, c1 = extrapolate_coefficient(samples, 3)
    np.testing.assert_allclose(c0, [2.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(c1, [-3.0, 1j], atol=1e-10)


def test_trig_interpolate_outside_is_zero():
    x = -4.0 + 0.25 * np.arange(32)
    vals = np.exp(-x ** 2)
    out = trig_interpolate(x, vals, np.array([-10.0, 0.1, 10.0]))
    assert out[0] == 0 and out[2] == 0
    assert out[1].real == pytest.approx(np.exp(-0.01), abs=1e-6)
