import math

import numpy as np
import pytest
from scipy import integrate

from qew.cohomogeneity import QuasiEinsteinSpec, shoot
from qew.errors import ContractError, DomainError, HypothesisViolated
from qew.estimates import (
    BallSpec,
    completeness_constant,
    conformal_length,
    gradient_bound,
    gradient_constant,
    gradient_estimate_check,
    laplacian_comparison_check,
    minimal_m_tilde,
    rescale_profile,
    soliton_rescale_workflow,
    threshold_holds,
)
from qew.weight import INF, Weight


@pytest.fixture(scope="module")
def bryant():
    return shoot(QuasiEinsteinSpec(3, INF, 0.0), -0.5, 10.0)


@pytest.fixture(scope="module")
def blowup3():
    return shoot(QuasiEinsteinSpec(3, Weight(2), 0.0), 0.3, 10.0)


def test_constants():
    assert gradient_constant(3, 2) == 66
    assert gradient_bound(3, 2, 1.0) == 66
    assert gradient_bound(3, 2, 2.0) == 16.5
    # m~^2 - 24 m~ - 216 = 0 has positive root 12 + sqrt(360)
    root = 12 + math.sqrt(360)
    assert completeness_constant(3, root) / root == pytest.approx(1.0)
    assert minimal_m_tilde(3) == 31 == math.ceil(root)
    assert threshold_holds(3, 31) and not threshold_holds(3, 30)


def test_gradient_estimate_on_line_blowup():
    # m = 1: Ric_f^1 = 0 and Delta_f f = 0, both hypotheses hold
    p = shoot(QuasiEinsteinSpec(1, Weight(1), 0.0), 1.0, 0.99)
    for c, a in [(0.3, 0.3), (0.5, 0.4), (0.8, 0.15)]:
        est = gradient_estimate_check(p, BallSpec(c, a))
        assert est.hypotheses_hold and est.passed
        assert est.barrier.observed <= est.barrier.bound


def test_line_with_m2_violates_source_hypothesis():
    p = shoot(QuasiEinsteinSpec(1, Weight(2), 0.0), 1.0, 1.5)
    with pytest.raises(HypothesisViolated, match="source_admissible"):
        gradient_estimate_check(p, BallSpec(0.7, 0.5))
    est = gradient_estimate_check(p, BallSpec(0.7, 0.5), hypotheses="report")
    assert not est.hypotheses["source_admissible"][1]


def test_gradient_estimate_n3(blowup3):
    for ball in [BallSpec(0.5, 0.6), BallSpec(1.0, 0.9), BallSpec(1.5, 0.5), BallSpec(1.9, 0.1)]:
        est = gradient_estimate_check(blowup3, ball)
        assert est.hypotheses_hold and est.passed
        assert est.center.bound == pytest.approx(66 / ball.a**2)


def test_barrier_margin_shrinks_towards_blowup(blowup3):
    r_star = blowup3.classification.r_star
    margins = [gradient_estimate_check(blowup3, BallSpec(r_star - 0.25 - d, 0.2)).barrier.margin
               for d in (0.8, 0.4, 0.0)]
    assert margins[0] > margins[1] > margins[2] > 0


def test_estimate_argument_errors(blowup3, bryant):
    with pytest.raises(DomainError):
        gradient_estimate_check(blowup3, BallSpec(1.9, 0.5))
    with pytest.raises(ContractError):
        gradient_estimate_check(bryant, BallSpec(1.0, 0.5))
    with pytest.raises(DomainError):
        BallSpec(1.0, 0.0)
    with pytest.raises(ValueError):
        gradient_estimate_check(blowup3, BallSpec(1.0, 0.5), hypotheses="maybe")


def test_laplacian_comparison(blowup3):
    assert laplacian_comparison_check(blowup3).passed
    trivial = shoot(QuasiEinsteinSpec(3, Weight(2), 0.0), 0.0, 5.0)
    cmp = laplacian_comparison_check(trivial)
    # flat space: Delta_f r = 2/r against (m+2)/r
    assert cmp.margin == pytest.approx(0.5, abs=1e-9)


def test_rescaled_profile_carries_transported_source(bryant):
    rp = rescale_profile(bryant, Weight(31))
    src = rp.source
    assert src.c1 == pytest.approx(-bryant.mu.value * 31 / 32)
    lap = rp.drift_laplacian_f()
    np.testing.assert_allclose(lap, src(rp.f), rtol=1e-6, atol=1e-8)


def test_conformal_length_against_arclength_oracle(bryant):
    # the length of [rho0, rho1] in exp(f~/m~) d rho is r(rho1) - r(rho0)
    k = 32.0
    rho = np.concatenate([[0.0], bryant.r[0] + integrate.cumulative_trapezoid(np.exp(-bryant.f / k), bryant.r, initial=0.0)])
    r = np.concatenate([[0.0], bryant.r])
    expected = np.interp(5.0, rho, r)
    got = conformal_length(bryant, Weight(31), (0.0, 5.0))
    assert got == pytest.approx(expected, rel=1e-5)


def test_workflow_on_bryant(bryant):
    rep = soliton_rescale_workflow(bryant, Weight(31))
    assert rep.passed
    names = {c.name for c in rep.checks}
    assert {"ric_f_nonnegative", "transported_lower_bound", "completeness_threshold",
            "conformal_length_finite"} <= names
    assert rep.minimal_m_tilde == 31
    assert math.isfinite(rep.length) and rep.length > 0
    assert any("does not imply" in n for n in rep.notes)


def test_workflow_threshold_fails_below_31(bryant):
    rep = soliton_rescale_workflow(bryant, Weight(30))
    failed = [c.name for c in rep.checks if not c.passed]
    assert failed == ["completeness_threshold"]


def test_workflow_contracts(blowup3, bryant):
    with pytest.raises(ContractError):
        soliton_rescale_workflow(blowup3, Weight(31))
    with pytest.raises(ContractError):
        soliton_rescale_workflow(bryant, INF)
    with pytest.raises(DomainError):
        conformal_length(bryant, Weight(31), (0.0, 1e3))
