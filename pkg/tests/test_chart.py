import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qew import models
from qew.chart import (
    Chart,
    ChartSample,
    ScalarField,
    bochner_residual,
    curvature,
    fd_jet,
    inverse_metric,
    min_form_eigenvalue,
    weighted_tensors,
)
from qew.errors import ConditioningWarning, DomainError
from qew.weight import INF, Weight


def test_fd_jet_on_cubic_polynomial():
    f = lambda x: x[0] ** 3 + 2 * x[0] * x[1] - x[1] ** 2  # noqa: E731
    x = np.array([0.3, -0.7])
    v, d1, d2 = fd_jet(f, x, 1e-3)
    assert v == pytest.approx(f(x))
    np.testing.assert_allclose(d1, [3 * 0.09 + 2 * -0.7, 2 * 0.3 + 1.4], atol=1e-6)
    np.testing.assert_allclose(d2, [[1.8, 2.0], [2.0, -2.0]], atol=1e-6)


def test_cosh_line_bakry_emery():
    # f = -2 log cosh t, m = 2: f'' - f'^2/2 = -2 sech^2 - 2 tanh^2 = -2
    s = models.cosh_line(2.0).sample([0.7])
    wc = weighted_tensors(s, Weight(2))
    np.testing.assert_allclose(wc.bakry_emery, [[-2.0]], atol=1e-14)
    assert wc.ricci[0, 0] == 0.0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gaussian_soliton_is_identity(n, rng):
    s = models.gaussian_soliton(n).sample(rng.uniform(-1, 1, n))
    np.testing.assert_allclose(weighted_tensors(s, INF).bakry_emery, np.eye(n), atol=1e-14)


@pytest.mark.parametrize("k,radius", [(2, 1.0), (3, 1.0), (2, 2.5), (4, 0.7)])
def test_round_sphere_ricci(k, radius):
    chart = models.round_sphere(k, radius)
    s = chart.sample(np.linspace(0.8, 1.9, k))
    wc = curvature(s)
    np.testing.assert_allclose(wc.ricci, (k - 1) / radius**2 * s.metric, atol=1e-12)
    assert wc.scalar == pytest.approx(k * (k - 1) / radius**2)


@pytest.mark.parametrize("k", [2, 3])
def test_hyperbolic_ricci(k):
    s = models.hyperbolic(k).sample(np.r_[np.full(k - 1, 0.2), 0.8])
    np.testing.assert_allclose(curvature(s).ricci, -(k - 1) * s.metric, atol=1e-12)


def test_sphere_ricci_by_stencil_has_truncation_error_only():
    chart = models.round_sphere(2)
    x = np.array([1.1, 0.4])
    exact = curvature(chart.sample(x)).ricci
    errs = [np.abs(curvature(chart.sample(x, h)).ricci - exact).max() for h in (2e-3, 1e-3)]
    assert errs[0] < 1e-5
    assert 3.0 < errs[0] / errs[1] < 5.0


def _conformally_flat(phi: ScalarField, n: int) -> Chart:
    """``g = exp(2 phi) delta`` with hand-written jets."""

    def jet(x):
        p, dp, d2p = phi.value(x), phi.grad(x), phi.hess(x)
        g = math.exp(2 * p) * np.eye(n)
        dg = 2 * np.einsum("k,ij->kij", dp, g)
        d2g = np.einsum("lk,ij->lkij", 4 * np.outer(dp, dp) + 2 * d2p, g)
        return g, dg, d2g

    return Chart(n, lambda x: jet(x)[0], jet)


@pytest.mark.parametrize("seed", range(4))
def test_conformally_flat_ricci_oracle(seed):
    # Ric = -(n-2)(Hess phi - dphi dphi) - (Lap phi + (n-2)|dphi|^2) delta  (Euclidean derivatives)
    n = 3
    rng = np.random.default_rng(seed)
    phi = models.random_trig_field(n, rng, scale=0.3)
    x = rng.uniform(-0.5, 0.5, n)
    _, dp, d2p = phi.jet(x)
    expected = -(n - 2) * (d2p - np.outer(dp, dp)) - (np.trace(d2p) + (n - 2) * dp @ dp) * np.eye(n)
    np.testing.assert_allclose(curvature(_conformally_flat(phi, n).sample(x)).ricci, expected, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.floats(0.1, 50.0), dim=st.integers(1, 4))
def test_weighted_invariants(seed, m, dim):
    s = models.random_analytic_chart(dim, seed).sample(np.zeros(dim))
    w = weighted_tensors(s, Weight(m))
    inf = weighted_tensors(s, INF)
    df = s.potential_d1
    np.testing.assert_allclose(w.bakry_emery - inf.bakry_emery, -np.outer(df, df) / m, atol=1e-12)
    assert np.trace(w.metric_inv @ w.hess_f) == pytest.approx(w.laplacian_f, abs=1e-12)
    assert w.drift_laplacian_f + w.grad_f_sq == pytest.approx(w.laplacian_f, abs=1e-12)
    np.testing.assert_allclose(w.ricci, w.ricci.T, atol=1e-12)


def test_infinite_weight_drops_quadratic_term_exactly():
    s = models.random_analytic_chart(3, 1).sample(np.zeros(3))
    inf = weighted_tensors(s, INF)
    assert np.array_equal(inf.bakry_emery, inf.ricci + inf.hess_f)


def test_degenerate_metric_is_a_domain_error():
    with pytest.raises(DomainError, match="smallest eigenvalue"):
        inverse_metric(np.diag([1.0, -1e-3]))
    with pytest.raises(DomainError):
        models.hyperbolic(2).sample([0.0, 0.0])


def test_sample_validates_shapes_and_is_read_only():
    with pytest.raises(DomainError):
        ChartSample([0.0, 0.0], np.eye(2), np.zeros((2, 2)), np.zeros((2, 2, 2, 2)))
    s = models.flat(2).sample([0.0, 0.0])
    with pytest.raises(ValueError):
        s.metric[0, 0] = 3.0


def test_symmetry_check():
    s = models.random_analytic_chart(3, 2).sample(np.zeros(3))
    s.check_symmetries()
    d2 = np.array(s.metric_d2)
    d2[0, 1, 0, 0] += 1e-3
    with pytest.raises(DomainError, match="metric_d2"):
        ChartSample(s.point, s.metric, s.metric_d1, d2).check_symmetries()


def test_min_form_eigenvalue_is_relative_to_metric():
    g = np.diag([4.0, 9.0])
    assert min_form_eigenvalue(np.diag([8.0, 9.0]), g) == pytest.approx(1.0)


# ---------------------------------------------------------------- Bochner

def test_bochner_flat_quadratics_exact():
    u = models.quadratic([[2.0, 0.5], [0.5, 1.0]], [0.3, -0.2])
    chart = models.flat(2, models.quadratic([[1.0, 0.2], [0.2, 3.0]], [0.1, 0.4]))
    for m in (Weight(3), INF):
        assert abs(bochner_residual(chart, u, [0.2, -0.4], m)) < 1e-9


def test_bochner_round_sphere_cos_theta():
    e0 = np.array([1.0, 0.0])
    u = ScalarField(lambda x: math.cos(x[0]), lambda x: -math.sin(x[0]) * e0,
                    lambda x: -math.cos(x[0]) * np.outer(e0, e0))
    chart = models.round_sphere(2)
    for x in ([0.7, 0.3], [1.2, 2.0], [2.2, -1.0]):
        res = bochner_residual(chart, u, x, INF, h=1e-3)
        assert abs(res) < 1e-6
        assert res.warning is None


@pytest.mark.parametrize("seed", [0, 3, 11])
def test_bochner_second_order_on_random_charts(seed):
    chart = models.random_analytic_chart(3, seed)
    u = models.random_trig_field(3, np.random.default_rng(seed + 100))
    x = np.full(3, 0.1)
    r = [bochner_residual(chart, u, x, Weight(4), h).value for h in (2e-3, 1e-3, 5e-4)]
    assert 3.5 <= r[0] / r[1] <= 4.5
    assert 3.5 <= r[1] / r[2] <= 4.5


def test_bochner_tiny_step_warns():
    chart = models.random_analytic_chart(2, 0)
    u = models.random_trig_field(2, np.random.default_rng(1))
    with pytest.warns(ConditioningWarning):
        res = bochner_residual(chart, u, np.zeros(2), INF, h=1e-7)
    assert res.warning is not None and res.roundoff > 1e-6
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConditioningWarning)
        bochner_residual(chart, u, np.zeros(2), INF, h=1e-3)
