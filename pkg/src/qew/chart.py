"""Curvature and weighted curvature on coordinate charts.

All tensors live in the coordinate frame. Derivative arrays put the
derivative indices first: ``metric_d1[k, i, j] = d_k g_ij`` and
``metric_d2[l, k, i, j] = d_l d_k g_ij``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import ConditioningWarning, DomainError
from .weight import Weight

Array = np.ndarray
DEFAULT_STEP = 1e-4
SYMMETRY_TOL = 1e-10


def _frozen(a) -> Array:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------

def fd_jet(func: Callable[[Array], Array], x, h: float) -> tuple[Array, Array, Array]:
    """Value, gradient and Hessian of ``func`` at ``x`` by central differences.

    Works for array-valued ``func``; derivative axes are prepended. Both
    stencils are second order in ``h``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = np.asarray(func(x), dtype=float)
    d1 = np.empty((n,) + f0.shape)
    d2 = np.empty((n, n) + f0.shape)
    eye = np.eye(n) * h
    plus = [np.asarray(func(x + eye[k]), dtype=float) for k in range(n)]
    minus = [np.asarray(func(x - eye[k]), dtype=float) for k in range(n)]
    for k in range(n):
        d1[k] = (plus[k] - minus[k]) / (2 * h)
        d2[k, k] = (plus[k] - 2 * f0 + minus[k]) / h**2
    for k in range(n):
        for l in range(k + 1, n):
            pp = func(x + eye[k] + eye[l])
            pm = func(x + eye[k] - eye[l])
            mp = func(x - eye[k] + eye[l])
            mm = func(x - eye[k] - eye[l])
            d2[k, l] = d2[l, k] = (np.asarray(pp) - pm - mp + mm) / (4 * h**2)
    return f0, d1, d2


@dataclass(frozen=True)
class ScalarField:
    """A smooth function on a chart, with optional exact derivatives."""

    value: Callable[[Array], float]
    grad: Callable[[Array], Array] | None = None
    hess: Callable[[Array], Array] | None = None

    @property
    def exact(self) -> bool:
        return self.grad is not None and self.hess is not None

    def jet(self, x, h: float | None = None) -> tuple[float, Array, Array]:
        """``(u, du, d2u)`` at ``x``; exact when possible unless a step ``h`` is forced."""
        x = np.asarray(x, dtype=float)
        if h is None and self.exact:
            return float(self.value(x)), np.asarray(self.grad(x), float), np.asarray(self.hess(x), float)
        u, du, d2u = fd_jet(self.value, x, DEFAULT_STEP if h is None else h)
        return float(u), du, d2u

    def __add__(self, other: "ScalarField") -> "ScalarField":
        grad = hess = None
        if self.exact and other.exact:
            grad = lambda x: self.grad(x) + other.grad(x)  # noqa: E731
            hess = lambda x: self.hess(x) + other.hess(x)  # noqa: E731
        return ScalarField(lambda x: self.value(x) + other.value(x), grad, hess)

    def scaled(self, c: float) -> "ScalarField":
        grad = hess = None
        if self.exact:
            grad = lambda x: c * np.asarray(self.grad(x))  # noqa: E731
            hess = lambda x: c * np.asarray(self.hess(x))  # noqa: E731
        return ScalarField(lambda x: c * self.value(x), grad, hess)


def constant_field(c: float, dim: int) -> ScalarField:
    return ScalarField(lambda x: c, lambda x: np.zeros(dim), lambda x: np.zeros((dim, dim)))


# --------------------------------------------------------------------------
# samples and charts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartSample:
    """Metric and potential 2-jets at one chart point."""

    point: Array
    metric: Array
    metric_d1: Array
    metric_d2: Array
    potential: float = 0.0
    potential_d1: Array | None = None
    potential_d2: Array | None = None

    def __post_init__(self):
        n = np.asarray(self.metric).shape[0]
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("point", _frozen(np.atleast_1d(self.point)))
        set_("metric", _frozen(self.metric))
        set_("metric_d1", _frozen(self.metric_d1))
        set_("metric_d2", _frozen(self.metric_d2))
        set_("potential", float(self.potential))
        set_("potential_d1", _frozen(np.zeros(n) if self.potential_d1 is None else self.potential_d1))
        set_("potential_d2", _frozen(np.zeros((n, n)) if self.potential_d2 is None else self.potential_d2))
        shapes = {
            "point": (n,),
            "metric": (n, n),
            "metric_d1": (n, n, n),
            "metric_d2": (n, n, n, n),
            "potential_d1": (n,),
            "potential_d2": (n, n),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise DomainError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def dim(self) -> int:
        return self.metric.shape[0]

    def check_symmetries(self, tol: float = SYMMETRY_TOL) -> None:
        """Raise ``DomainError`` if the index symmetries of the jets are broken."""
        g, dg, d2g, d2f = self.metric, self.metric_d1, self.metric_d2, self.potential_d2
        scale = 1.0 + max(np.abs(g).max(), np.abs(dg).max(initial=0), np.abs(d2g).max(initial=0))
        bad = {
            "metric": np.abs(g - g.T).max(),
            "metric_d1": np.abs(dg - dg.transpose(0, 2, 1)).max(initial=0),
            "metric_d2 (i,j)": np.abs(d2g - d2g.transpose(0, 1, 3, 2)).max(initial=0),
            "metric_d2 (k,l)": np.abs(d2g - d2g.transpose(1, 0, 2, 3)).max(initial=0),
            "potential_d2": np.abs(d2f - d2f.T).max(initial=0),
        }
        for name, err in bad.items():
            if err > tol * scale:
                raise DomainError(f"{name} is not symmetric (defect {err:.3e})")

    def with_potential(self, f: float, df, d2f) -> "ChartSample":
        return ChartSample(self.point, self.metric, self.metric_d1, self.metric_d2, f, df, d2f)


@dataclass(frozen=True)
class Chart:
    """A metric and potential given as functions of chart coordinates.

    ``metric_jet`` returns exact ``(g, dg, d2g)``; without it the metric is
    differenced with step ``h``.
    """

    dim: int
    metric: Callable[[Array], Array]
    metric_jet: Callable[[Array], tuple[Array, Array, Array]] | None = None
    potential: ScalarField | None = None
    h: float = DEFAULT_STEP

    @property
    def exact(self) -> bool:
        return self.metric_jet is not None and (self.potential is None or self.potential.exact)

    def sample(self, x, h: float | None = None) -> ChartSample:
        """Jets at ``x``: exact callbacks when available, else central differences.

        Passing ``h`` forces finite differences with that step.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if h is None and self.metric_jet is not None:
            g, dg, d2g = self.metric_jet(x)
        else:
            g, dg, d2g = fd_jet(self.metric, x, self.h if h is None else h)
            dg = 0.5 * (dg + dg.transpose(0, 2, 1))
            d2g = 0.5 * (d2g + d2g.transpose(0, 1, 3, 2))
        if self.potential is None:
            f, df, d2f = 0.0, np.zeros(self.dim), np.zeros((self.dim, self.dim))
        else:
            f, df, d2f = self.potential.jet(x, h if h is not None else (None if self.potential.exact else self.h))
        return ChartSample(x, g, dg, d2g, f, df, d2f)

    def with_potential(self, potential: ScalarField | None) -> "Chart":
        return Chart(self.dim, self.metric, self.metric_jet, potential, self.h)


# --------------------------------------------------------------------------
# curvature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedCurvature:
    christoffel: Array
    ricci: Array
    scalar: float
    metric_inv: Array
    hess_f: Array | None = None
    laplacian_f: float | None = None
    drift_laplacian_f: float | None = None
    grad_f_sq: float | None = None
    bakry_emery: Array | None = None
    weight: Weight | None = None


def inverse_metric(g: Array) -> Array:
    """Inverse of an SPD metric via Cholesky; degenerate metrics raise ``DomainError``."""
    try:
        factor = linalg.cho_factor(g, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        eig = np.linalg.eigvalsh(0.5 * (g + g.T)) if np.all(np.isfinite(g)) else [np.nan]
        raise DomainError(f"metric is not positive definite: smallest eigenvalue {np.min(eig):.6g}") from None
    ginv = linalg.cho_solve(factor, np.eye(g.shape[0]))
    return 0.5 * (ginv + ginv.T)


def christoffel(sample: ChartSample, ginv: Array | None = None) -> Array:
    """``gamma[k, i, j] = Gamma^k_ij``."""
    if ginv is None:
        ginv = inverse_metric(sample.metric)
    return np.einsum("kl,lij->kij", ginv, _first_kind(sample.metric_d1))


def _first_kind(dg: Array) -> Array:
    """``Gamma_{l i j} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)`` indexed ``[l, i, j]``."""
    return 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)


def curvature(sample: ChartSample) -> WeightedCurvature:
    """Christoffel symbols, Ricci tensor and scalar curvature at the sample point."""
    g, dg, d2g = sample.metric, sample.metric_d1, sample.metric_d2
    ginv = inverse_metric(g)
    first = _first_kind(dg)
    gamma = np.einsum("kl,lij->kij", ginv, first)
    # d_m Gamma_{l i j}
    dfirst = 0.5 * (np.einsum("mijl->mlij", d2g) + np.einsum("mjil->mlij", d2g) - d2g)
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dg, ginv)
    dgamma = np.einsum("mkl,lij->mkij", dginv, first) + np.einsum("kl,mlij->mkij", ginv, dfirst)
    ric = (
        np.einsum("kkij->ij", dgamma)
        - np.einsum("jkik->ij", dgamma)
        + np.einsum("kkl,lij->ij", gamma, gamma)
        - np.einsum("kjl,lik->ij", gamma, gamma)
    )
    ric = 0.5 * (ric + ric.T)
    return WeightedCurvature(
        christoffel=gamma,
        ricci=ric,
        scalar=float(np.einsum("ij,ij->", ginv, ric)),
        metric_inv=ginv,
    )


def hessian(d1: Array, d2: Array, gamma: Array) -> Array:
    """Covariant Hessian ``d_i d_j u - Gamma^k_ij d_k u``."""
    h = d2 - np.einsum("kij,k->ij", gamma, d1)
    return 0.5 * (h + h.T)


def weighted_tensors(sample: ChartSample, m: Weight) -> WeightedCurvature:
    """All curvature quantities including ``Ric_f^m = Ric + Hess f - (1/m) df (x) df``."""
    base = curvature(sample)
    ginv, gamma = base.metric_inv, base.christoffel
    df = sample.potential_d1
    hess_f = hessian(df, sample.potential_d2, gamma)
    lap = float(np.einsum("ij,ij->", ginv, hess_f))
    grad_sq = float(df @ ginv @ df)
    be = base.ricci + hess_f - m.reciprocal * np.outer(df, df)
    return WeightedCurvature(
        christoffel=gamma,
        ricci=base.ricci,
        scalar=base.scalar,
        metric_inv=ginv,
        hess_f=hess_f,
        laplacian_f=lap,
        drift_laplacian_f=lap - grad_sq,
        grad_f_sq=grad_sq,
        bakry_emery=0.5 * (be + be.T),
        weight=m,
    )


def drift_laplacian(sample: ChartSample, du: Array, d2u: Array, gamma: Array | None = None, ginv: Array | None = None) -> float:
    """``Delta_f u = Delta u - <grad f, grad u>`` from the jets of ``u``."""
    if ginv is None:
        ginv = inverse_metric(sample.metric)
    if gamma is None:
        gamma = christoffel(sample, ginv)
    return float(np.einsum("ij,ij->", ginv, hessian(du, d2u, gamma)) - sample.potential_d1 @ ginv @ du)


def min_form_eigenvalue(form: Array, metric: Array) -> float:
    """Smallest eigenvalue of a symmetric bilinear form relative to ``metric``."""
    return float(linalg.eigh(0.5 * (form + form.T), metric, eigvals_only=True)[0])


# --------------------------------------------------------------------------
# Bochner formula
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Residual:
    """A scalar residual together with the stencil's roundoff estimate."""

    value: float
    h: float
    roundoff: float
    warning: str | None = field(default=None)

    def __float__(self) -> float:
        return self.value

    def __abs__(self) -> float:
        return abs(self.value)


def _roundoff_check(h: float, scale: float) -> tuple[float, str | None]:
    eps = np.finfo(float).eps
    roundoff = 8 * eps * max(scale, 1.0) / h**2
    msg = None
    if roundoff > 1e-6 * max(scale, 1.0):
        msg = f"step h={h:.3g} is too small for double precision (roundoff ~{roundoff:.2e})"
        warnings.warn(msg, ConditioningWarning, stacklevel=3)
    return roundoff, msg


def bochner_residual(chart: Chart, u: ScalarField, x, m: Weight, h: float = 1e-3) -> Residual:
    """Residual of the weighted Bochner formula at ``x``.

    ``1/2 Delta_f |grad u|^2 - |Hess u|^2 - <grad u, grad Delta_f u>
    - Ric_f^m(grad u, grad u) - (1/m) <grad f, grad u>^2``.

    The pointwise quantities ``|grad u|^2`` and ``Delta_f u`` are built from the
    chart's jets; their derivatives are taken by central differences of step
    ``h``, so the residual is ``O(h^2)`` on smooth data.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def grad_sq(y):
        s = chart.sample(y)
        _, du, _ = u.jet(y)
        return du @ inverse_metric(s.metric) @ du

    def drift_lap_u(y):
        s = chart.sample(y)
        _, du, d2u = u.jet(y)
        return drift_laplacian(s, du, d2u)

    s = chart.sample(x)
    wc = weighted_tensors(s, m)
    ginv, gamma = wc.metric_inv, wc.christoffel
    _, du, d2u = u.jet(x)
    q, dq, d2q = fd_jet(grad_sq, x, h)
    _, dl, _ = fd_jet(drift_lap_u, x, h)

    half_drift_q = 0.5 * drift_laplacian(s, dq, d2q, gamma, ginv)
    hess_u = hessian(du, d2u, gamma)
    hess_sq = float(np.einsum("ia,jb,ij,ab->", ginv, ginv, hess_u, hess_u))
    up = ginv @ du
    cross = float(up @ dl)
    be_term = float(up @ wc.bakry_emery @ up)
    fu = float(s.potential_d1 @ up)
    value = half_drift_q - hess_sq - cross - be_term - m.reciprocal * fu**2
    roundoff, msg = _roundoff_check(h, abs(float(q)) + abs(drift_lap_u(x)))
    return Residual(float(value), h, roundoff, msg)
