"""Warped products ``g + exp(-2f/m) h`` over a base carrying the potential ``f``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .chart import Chart, ChartSample, curvature, weighted_tensors
from .errors import DomainError
from .weight import Weight

FIBER_TOL = 1e-9


@dataclass(frozen=True)
class FiberSpec:
    """An Einstein fiber ``(N^m, h)`` with ``Ric(h) = einstein_constant * h``, sampled at ``point``."""

    dim: int
    einstein_constant: float
    chart: Chart
    point: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"fiber dimension must be >= 1, got {self.dim}")
        if self.chart.dim != self.dim:
            raise DomainError(f"fiber chart has dimension {self.chart.dim}, expected {self.dim}")
        pt = np.full(self.dim, 1.0) if self.point is None else np.atleast_1d(np.asarray(self.point, float))
        object.__setattr__(self, "point", pt)

    def sample(self) -> ChartSample:
        return self.chart.sample(self.point)

    def check_einstein(self, tol: float = FIBER_TOL) -> float:
        """Sup-norm of ``Ric(h) - mu_h h``; raises ``DomainError`` above ``tol``."""
        s = self.sample()
        defect = float(np.abs(curvature(s).ricci - self.einstein_constant * s.metric).max())
        if defect > tol * (1 + abs(self.einstein_constant)):
            raise DomainError(f"fiber is not Einstein with constant {self.einstein_constant:g} (defect {defect:.3e})")
        return defect


def sphere_fiber(k: int, radius: float = 1.0) -> FiberSpec:
    mu = (k - 1) / radius**2
    return FiberSpec(k, mu, models.round_sphere(k, radius), np.linspace(1.0, 1.4, k))


def hyperbolic_fiber(k: int) -> FiberSpec:
    return FiberSpec(k, -(k - 1.0), models.hyperbolic(k), np.r_[np.full(k - 1, 0.3), 1.2])


def flat_fiber(k: int) -> FiberSpec:
    return FiberSpec(k, 0.0, models.torus(k), np.zeros(k))


FIBERS = {"sphere": sphere_fiber, "hyperbolic": hyperbolic_fiber, "flat": flat_fiber}


@dataclass(frozen=True)
class WarpedSample:
    base: ChartSample
    fiber: FiberSpec
    total: ChartSample

    @property
    def weight(self) -> Weight:
        return Weight(self.fiber.dim)


def assemble(base: ChartSample, fiber: FiberSpec, m: Weight | None = None) -> WarpedSample:
    """Jets of ``g + exp(-2f/m) h`` on the product chart, by the product and chain rules."""
    if m is not None and (m.is_infinite or m.value != fiber.dim):
        raise DomainError(f"weight m={m} must equal the fiber dimension {fiber.dim}")
    fiber.check_einstein()
    n, k = base.dim, fiber.dim
    N = n + k
    hs = fiber.sample()
    h, dh, d2h = hs.metric, hs.metric_d1, hs.metric_d2
    f, df, d2f = base.potential, base.potential_d1, base.potential_d2
    c = -2.0 / k
    psi = math.exp(c * f)
    dpsi = c * psi * df
    d2psi = psi * (c * c * np.outer(df, df) + c * d2f)

    g = np.zeros((N, N))
    dg = np.zeros((N, N, N))
    d2g = np.zeros((N, N, N, N))
    B, F = slice(0, n), slice(n, N)
    g[B, B] = base.metric
    g[F, F] = psi * h
    dg[B, B, B] = base.metric_d1
    dg[B, F, F] = np.einsum("a,ij->aij", dpsi, h)
    dg[F, F, F] = psi * dh
    d2g[B, B, B, B] = base.metric_d2
    d2g[B, B, F, F] = np.einsum("ab,ij->abij", d2psi, h)
    cross = np.einsum("a,bij->abij", dpsi, dh)
    d2g[B, F, F, F] = cross
    d2g[F, B, F, F] = cross.transpose(1, 0, 2, 3)
    d2g[F, F, F, F] = psi * d2h
    total = ChartSample(np.r_[base.point, fiber.point], g, dg, d2g)
    return WarpedSample(base, fiber, total)


def einstein_residual(ws: WarpedSample, lam: float) -> np.ndarray:
    """``Ric(gbar) - lambda gbar`` on the product chart."""
    return curvature(ws.total).ricci - lam * ws.total.metric


def mu_field(base: ChartSample, m: Weight, lam: float) -> float:
    """Pointwise ``mu = -(Delta_f f - m lambda) exp(-2f/m) / m``."""
    if m.is_infinite:
        raise DomainError("mu_field needs a finite weight")
    wc = weighted_tensors(base, m)
    mv = m.value
    return -(wc.drift_laplacian_f - mv * lam) * math.exp(-2.0 * base.potential / mv) / mv


def base_residual(base: ChartSample, m: Weight, lam: float) -> np.ndarray:
    """``Ric_f^m - lambda g`` on the base."""
    return weighted_tensors(base, m).bakry_emery - lam * base.metric
