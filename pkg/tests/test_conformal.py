import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qew import models
from qew.chart import Chart, ScalarField, drift_laplacian, weighted_tensors
from qew.conformal import (
    RescaleSpec,
    SourceTerm,
    change_identity_residual,
    corollary_lower_bound,
    inverse_rescale,
    laplacian_identity_residual,
    rescale_triple,
)
from qew.errors import DomainError, HypothesisViolated
from qew.weight import INF, Weight


def _sec_line() -> Chart:
    """``f = -log cos t`` on ``(-pi/2, pi/2)``: ``f'' - f'^2 = 1`` and ``f'' > 0``."""
    return models.flat(1, ScalarField(
        lambda x: -math.log(math.cos(x[0])),
        lambda x: np.array([math.tan(x[0])]),
        lambda x: np.array([[1 / math.cos(x[0]) ** 2]]),
    ))


@pytest.mark.parametrize("m_tilde", [2.0, 5.0, 31.0])
def test_one_dimensional_hand_computation(m_tilde):
    # in 1-D, Ric_f~^m~(g~) = (m~/k) f'' and Delta~_f~ u = exp(2f/k)(u'' - f'u')
    chart = models.cosh_line(2.0)
    spec = RescaleSpec(Weight(m_tilde), 1)
    k = m_tilde - 1
    t = 0.45
    s = chart.sample([t])
    fpp = s.potential_d2[0, 0]
    tilde = rescale_triple(s, spec)
    assert weighted_tensors(tilde, spec.m_tilde).bakry_emery[0, 0] == pytest.approx(m_tilde / k * fpp, abs=1e-13)
    du, d2u = np.array([0.3]), np.array([[-1.2]])
    expected = math.exp(2 * s.potential / k) * (-1.2 - s.potential_d1[0] * 0.3)
    assert drift_laplacian(tilde, du, d2u) == pytest.approx(expected, abs=1e-13)


def _cases():
    yield "cosh", models.cosh_line(2.0), [np.array([t]) for t in (-1.3, 0.2, 0.7, 1.9)]
    for n in (2, 3):
        yield f"gaussian{n}", models.gaussian_soliton(n), [np.full(n, 0.3), np.linspace(-0.6, 0.4, n)]
    for seed in (0, 1):
        yield f"random{seed}", models.random_analytic_chart(3, seed), [np.full(3, 0.1), np.array([0.3, -0.2, 0.0])]


@pytest.mark.parametrize("label,chart,points", list(_cases()), ids=[c[0] for c in _cases()])
@pytest.mark.parametrize("m_tilde", [3.0, 31.0])
def test_identities_with_exact_jets(label, chart, points, m_tilde):
    spec = RescaleSpec(Weight(m_tilde), chart.dim)
    u = models.random_trig_field(chart.dim, np.random.default_rng(5))
    for x in points:
        assert np.abs(change_identity_residual(chart, spec, x)).max() < 1e-8
        assert abs(laplacian_identity_residual(chart, spec, u, x)) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_stencil_residuals_are_second_order(seed):
    chart = models.random_analytic_chart(3, seed)
    spec = RescaleSpec(Weight(5.0), 3)
    u = models.random_trig_field(3, np.random.default_rng(seed + 7))
    x = np.array([0.1, -0.05, 0.2])
    change = [np.linalg.norm(change_identity_residual(chart, spec, x, h)) for h in (1e-3, 5e-4)]
    lap = [abs(laplacian_identity_residual(chart, spec, u, x, h)) for h in (1e-3, 5e-4)]
    assert 3.5 <= change[0] / change[1] <= 4.5
    assert 3.5 <= lap[0] / lap[1] <= 4.5


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 5000), m_tilde=st.floats(0.5, 100.0), dim=st.integers(2, 4))
def test_round_trip(seed, m_tilde, dim):
    spec = RescaleSpec(Weight(m_tilde), dim)
    s = models.random_analytic_chart(dim, seed).sample(np.zeros(dim))
    back = inverse_rescale(rescale_triple(s, spec), spec)
    for name in ("metric", "metric_d1", "metric_d2", "potential_d1", "potential_d2"):
        np.testing.assert_allclose(getattr(back, name), getattr(s, name), atol=1e-10, rtol=1e-10)
    assert back.potential == pytest.approx(s.potential, abs=1e-12)


def test_rescale_spec_domain():
    with pytest.raises(DomainError):
        RescaleSpec(INF, 3)
    with pytest.raises(DomainError):
        RescaleSpec(Weight(1.0), 1)
    with pytest.raises(DomainError):
        RescaleSpec(Weight(0), 3)
    spec = RescaleSpec(31, 3)
    assert spec.denominator == 32
    assert spec.exponent_metric == -2 / 32 and spec.exponent_potential == 31 / 32


def test_mode_errors():
    chart = models.gaussian_soliton(2)
    spec = RescaleSpec(Weight(3.0), 2)
    with pytest.raises(DomainError):
        change_identity_residual(chart.sample([0.0, 0.0]), spec, h=1e-3)
    with pytest.raises(DomainError):
        change_identity_residual(chart, spec)
    with pytest.raises(DomainError):
        change_identity_residual(models.gaussian_soliton(3).sample(np.zeros(3)), spec)


def test_lower_bound_with_positive_source_gives_nonnegativity():
    s = _sec_line().sample([0.6])
    res = corollary_lower_bound(s, RescaleSpec(Weight(5.0), 1), SourceTerm(1.0, 0.0))
    assert res.passed and res.implies_nonnegative
    assert res.rescaled_min_eigenvalue >= -1e-12


def test_lower_bound_with_negative_source():
    # flat plane, f linear: Ric_f = 0 and Delta_f f = -|a|^2
    a = np.array([0.6, -0.8])
    chart = models.flat(2, models.quadratic(np.zeros((2, 2)), a))
    res = corollary_lower_bound(chart.sample([0.2, 0.1]), RescaleSpec(Weight(31.0), 2), SourceTerm(-1.0))
    assert res.passed and not res.implies_nonnegative
    assert res.rescaled_min_eigenvalue < 0


def test_lower_bound_hypotheses():
    spec = RescaleSpec(Weight(4.0), 2)
    with pytest.raises(HypothesisViolated, match="Ric_f"):
        corollary_lower_bound(models.hyperbolic(2).sample([0.0, 1.0]), spec, SourceTerm(0.0))
    chart = models.flat(2, models.quadratic(np.zeros((2, 2)), [0.6, -0.8]))
    with pytest.raises(HypothesisViolated, match="source"):
        corollary_lower_bound(chart.sample([0.0, 0.0]), spec, SourceTerm(-2.0))


def test_source_term_rejects_non_finite():
    with pytest.raises(DomainError):
        SourceTerm(math.inf)
