"""The conformal rescaling ``g~ = exp(-2f/(m+n-2)) g``, ``f~ = m f/(m+n-2)``.

Under this change the weighted tensor of the new triple picks up a
*positive* multiple of ``df (x) df``, which is what lets a lower bound on
``Ric_f`` be transported to a lower bound on ``Ric_f~^m(g~)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chart import (
    Chart,
    ChartSample,
    ScalarField,
    drift_laplacian,
    min_form_eigenvalue,
    weighted_tensors,
)
from .errors import DomainError, HypothesisViolated, NumericalError
from .weight import INF, Weight

EXACT_TOL = 1e-9
STENCIL_TOL = 1e-5


@dataclass(frozen=True)
class RescaleSpec:
    m_tilde: Weight
    dim: int

    def __post_init__(self):
        m = Weight.parse(self.m_tilde)
        object.__setattr__(self, "m_tilde", m)
        if m.is_infinite:
            raise DomainError("the rescaling needs a finite weight")
        if self.dim < 1:
            raise DomainError(f"dimension must be >= 1, got {self.dim}")
        if self.denominator <= 0:
            raise DomainError(f"m~ + n - 2 must be positive, got {self.denominator:g}")

    @property
    def denominator(self) -> float:
        return self.m_tilde.value + self.dim - 2

    @property
    def exponent_metric(self) -> float:
        return -2.0 / self.denominator

    @property
    def exponent_potential(self) -> float:
        return self.m_tilde.value / self.denominator


@dataclass(frozen=True)
class SourceTerm:
    """``Delta_f f = c1 exp(c2 f)``."""

    c1: float
    c2: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.c1) and math.isfinite(self.c2)):
            raise DomainError("source constants must be finite")

    def __call__(self, t):
        return self.c1 * np.exp(self.c2 * np.asarray(t, dtype=float))


def conformal_sample(sample: ChartSample, a: float, b: float) -> ChartSample:
    """``g' = exp(a f) g`` and ``f' = b f`` with derivatives by the chain rule."""
    g, dg, d2g = sample.metric, sample.metric_d1, sample.metric_d2
    f, df, d2f = sample.potential, sample.potential_d1, sample.potential_d2
    phi = math.exp(a * f)
    new_g = phi * g
    # d_k g'_ij = phi (a f_k g_ij + d_k g_ij)
    inner = a * np.einsum("k,ij->kij", df, g) + dg
    new_dg = phi * inner
    new_d2g = phi * (
        a * np.einsum("l,kij->lkij", df, inner)
        + a * np.einsum("lk,ij->lkij", d2f, g)
        + a * np.einsum("k,lij->lkij", df, dg)
        + d2g
    )
    return ChartSample(sample.point, new_g, new_dg, new_d2g, b * f, b * df, b * d2f)


def rescale_triple(sample: ChartSample, spec: RescaleSpec) -> ChartSample:
    """Jets of ``(g~, f~)`` from those of ``(g, f)``."""
    _check_dim(sample, spec)
    return conformal_sample(sample, spec.exponent_metric, spec.exponent_potential)


def inverse_rescale(sample: ChartSample, spec: RescaleSpec) -> ChartSample:
    """Undo :func:`rescale_triple`: ``g = exp(2 f~/m~) g~`` and ``f = f~ (m~+n-2)/m~``."""
    _check_dim(sample, spec)
    return conformal_sample(sample, 2.0 / spec.m_tilde.value, 1.0 / spec.exponent_potential)


def rescaled_chart(chart: Chart, spec: RescaleSpec) -> Chart:
    """The rescaled triple as plain functions, for independent differencing.

    No exact jets are attached on purpose: sampling this chart re-differences
    ``g~`` itself rather than reusing the chain rule.
    """
    if chart.dim != spec.dim:
        raise DomainError(f"chart dimension {chart.dim} does not match spec dimension {spec.dim}")
    pot = chart.potential
    fval = (lambda x: 0.0) if pot is None else pot.value
    a, b = spec.exponent_metric, spec.exponent_potential
    return Chart(
        chart.dim,
        lambda x: math.exp(a * fval(x)) * np.asarray(chart.metric(x)),
        None,
        ScalarField(lambda x: b * fval(x)),
        chart.h,
    )


def _check_dim(sample: ChartSample, spec: RescaleSpec) -> None:
    if sample.dim != spec.dim:
        raise DomainError(f"sample dimension {sample.dim} does not match spec dimension {spec.dim}")


def _sources(source, spec: RescaleSpec, x, h):
    """(rescaled sample, original sample) for either exact or stencil evaluation."""
    if isinstance(source, ChartSample):
        if h is not None:
            raise DomainError("a fixed sample carries no stencil; pass a Chart to difference")
        return rescale_triple(source, spec), source
    if x is None:
        raise DomainError("a point is required when evaluating a chart")
    if h is None:
        original = source.sample(x)
        return rescale_triple(original, spec), original
    original = source.sample(x) if source.exact else source.sample(x, h)
    return rescaled_chart(source, spec).sample(x, h), original


def change_identity_rhs(sample: ChartSample, spec: RescaleSpec) -> np.ndarray:
    """``Ric + Hess f + (df (x) df + Delta_f f g) / (m~+n-2)`` from the original triple."""
    wc = weighted_tensors(sample, INF)
    k = spec.denominator
    df = sample.potential_d1
    return wc.ricci + wc.hess_f + (np.outer(df, df) + wc.drift_laplacian_f * sample.metric) / k


def change_identity_residual(source: ChartSample | Chart, spec: RescaleSpec, x=None, h: float | None = None) -> np.ndarray:
    """``Ric_f~^m~(g~)`` minus the closed-form right-hand side.

    With a ``ChartSample`` (or a chart and ``h=None``) the left side comes
    from the chain-rule jets of the rescaled triple and the residual is pure
    roundoff. With a chart and a step ``h`` the rescaled metric is
    re-differenced, and the residual is the ``O(h^2)`` stencil error.
    """
    tilde, original = _sources(source, spec, x, h)
    lhs = weighted_tensors(tilde, spec.m_tilde).bakry_emery
    return lhs - change_identity_rhs(original, spec)


def laplacian_identity_residual(source: ChartSample | Chart, spec: RescaleSpec, u: ScalarField,
                                x=None, h: float | None = None) -> float:
    """``Delta~_f~ u - exp(2f/(m~+n-2)) Delta_f u`` at the sample point."""
    tilde, original = _sources(source, spec, x, h)
    pt = original.point
    # exact test-function jets when available: differencing u only adds roundoff
    _, du, d2u = u.jet(pt, None if (h is None or u.exact) else h)
    lhs = drift_laplacian(tilde, du, d2u)
    rhs = math.exp(2 * original.potential / spec.denominator) * drift_laplacian(original, du, d2u)
    return float(lhs - rhs)


@dataclass(frozen=True)
class LowerBoundResult:
    """Outcome of the transported lower bound at one point."""

    margin: float
    tol: float
    rescaled_min_eigenvalue: float
    source: SourceTerm

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tol

    @property
    def implies_nonnegative(self) -> bool:
        """The bound gives ``Ric_f~^m~(g~) >= 0`` only when ``c1 >= 0``."""
        return self.source.c1 >= 0


def corollary_lower_bound(sample: ChartSample, spec: RescaleSpec, src: SourceTerm,
                          tol: float = EXACT_TOL) -> LowerBoundResult:
    """Check ``Ric_f~^m~(g~) >= c1/(m~+n-2) exp((c2 + 2/(m~+n-2)) f) g~`` at a point.

    Hypotheses ``Ric_f >= 0`` and ``Delta_f f = c1 exp(c2 f)`` are verified
    first; failures raise :class:`HypothesisViolated` rather than producing a
    verdict.
    """
    wc = weighted_tensors(sample, INF)
    if not np.all(np.isfinite(wc.bakry_emery)) or not math.isfinite(wc.drift_laplacian_f):
        raise NumericalError("non-finite curvature at sample point")
    ric_f_min = min_form_eigenvalue(wc.bakry_emery, sample.metric)
    if ric_f_min < -tol:
        raise HypothesisViolated(f"Ric_f has eigenvalue {ric_f_min:.3e} < 0")
    expected = float(src(sample.potential))
    scale = 1.0 + abs(expected)
    if abs(wc.drift_laplacian_f - expected) > tol * scale:
        raise HypothesisViolated(
            f"source equation fails: Delta_f f = {wc.drift_laplacian_f:.6g}, c1 exp(c2 f) = {expected:.6g}"
        )
    tilde = rescale_triple(sample, spec)
    be = weighted_tensors(tilde, spec.m_tilde).bakry_emery
    k = spec.denominator
    bound = src.c1 / k * math.exp((src.c2 + 2.0 / k) * sample.potential)
    margin = min_form_eigenvalue(be - bound * tilde.metric, tilde.metric)
    return LowerBoundResult(margin, tol, min_form_eigenvalue(be, tilde.metric), src)
