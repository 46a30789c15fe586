"""Gradient estimate, Laplacian comparison and the soliton rescaling workflow on radial profiles.

Distances on a radial profile are measured along the ray through the ball
centre (and, past the origin, along the opposite ray), where the ansatz
metric makes them exact. The ball supremum is therefore taken over a
geodesic segment through the centre; since the estimate bounds the supremum
over the whole ball, it bounds this one too.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .cohomogeneity import (
    Profile,
    QuasiEinsteinSpec,
    Source,
    bakry_emery_min,
    profile_source,
)
from .conformal import STENCIL_TOL, RescaleSpec, SourceTerm, corollary_lower_bound
from .errors import ContractError, DomainError, HypothesisViolated
from .report import Check
from .weight import Weight

VERDICT_TOL = 1e-9
HYPOTHESIS_TOL = 1e-8
SOURCE_TOL = 1e-6
QUAD_RTOL = 1e-8


@dataclass(frozen=True)
class BallSpec:
    center_r: float
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"ball radius must be positive, got {self.a}")
        if self.center_r < 0:
            raise DomainError("ball centre must have r >= 0")


@dataclass(frozen=True)
class EstimateReport:
    bound: float
    observed: float
    witness: float
    tol: float = VERDICT_TOL

    @property
    def margin(self) -> float:
        return self.bound - self.observed

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tol * max(abs(self.bound), 1.0)


@dataclass(frozen=True)
class GradientEstimate:
    center: EstimateReport
    barrier: EstimateReport
    hypotheses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.center.passed and self.barrier.passed

    @property
    def hypotheses_hold(self) -> bool:
        return all(ok for _, ok in self.hypotheses.values())


def gradient_constant(n: int, m: float) -> float:
    """``2 n (m + n + 6)``."""
    return 2.0 * n * (m + n + 6)


def gradient_bound(n: int, m: float, a: float) -> float:
    return gradient_constant(n, m) / a**2


def _finite_weight(profile: Profile) -> float:
    if profile.spec.m.is_infinite:
        raise ContractError("the estimate needs a finite weight m")
    return profile.spec.m.value


def _ball_indices(profile: Profile, ball: BallSpec) -> np.ndarray:
    lo = max(ball.center_r - ball.a, 0.0)
    hi = ball.center_r + ball.a
    return np.flatnonzero((profile.r >= lo - 1e-12) & (profile.r <= hi + 1e-12))


def _check_ball_range(profile: Profile, ball: BallSpec) -> None:
    r0, r1 = profile.r[0], profile.r[-1]
    if ball.center_r + ball.a > r1:
        raise DomainError(f"ball reaches r={ball.center_r + ball.a:g} beyond the computed range {r1:g}")
    if profile.n == 1 and ball.center_r - ball.a < r0:
        raise DomainError(f"ball reaches t={ball.center_r - ball.a:g} before the computed range {r0:g}")
    if not r0 <= ball.center_r <= r1:
        raise DomainError("ball centre outside the computed range")


def eigenvalue_tolerance(profile: Profile, idx) -> float:
    """Tolerance for the sign of ``Ric_f^m`` on integrated data.

    Near the origin the curvature terms carry ``1/w^2`` factors whose
    cancellation loses ``eps/w^2`` absolutely.
    """
    idx = np.asarray(idx)
    tol = HYPOTHESIS_TOL * (1.0 + float(np.max(np.abs(profile.fpp[idx])) + np.max(profile.fp[idx] ** 2)))
    if profile.n > 1:
        tol += 64 * np.finfo(float).eps * float(np.max(1.0 / profile.w[idx] ** 2))
    return tol


def _hypotheses(profile: Profile, idx: np.ndarray, mode: str) -> dict:
    n = profile.n
    out = {}
    if len(idx):
        lowest = float(np.min(bakry_emery_min(profile, idx)))
        out["bakry_emery_nonnegative"] = (lowest, lowest >= -eigenvalue_tolerance(profile, idx))
    src = profile_source(profile)
    out["source_admissible"] = (src.c1 * (src.c2 + 2.0 / n), src.admissible(n, HYPOTHESIS_TOL))
    if len(idx):
        lap = profile.drift_laplacian_f()[idx]
        phi = src(profile.f[idx])
        err = float(np.max(np.abs(lap - phi) / (1 + np.abs(phi))))
        out["source_equation"] = (err, err <= SOURCE_TOL)
    if mode == "enforce":
        bad = [k for k, (_, ok) in out.items() if not ok]
        if bad:
            detail = ", ".join(f"{k}={out[k][0]:.3e}" for k in bad)
            raise HypothesisViolated(f"hypotheses fail: {detail}")
    return out


def _grad_sq_at(profile: Profile, r: float) -> float:
    if profile.dense is not None:
        return profile.state_at(r).fp ** 2
    return float(np.interp(r, profile.r, profile.fp) ** 2)


def _segment(profile: Profile, ball: BallSpec, idx: np.ndarray):
    """Signed distances ``d`` from the centre and ``|grad f|^2`` at those points."""
    c, a = ball.center_r, ball.a
    ds, gs = [0.0], [_grad_sq_at(profile, c)]
    g = profile.fp**2
    for j in idx:
        d = profile.r[j] - c
        if abs(d) < a:
            ds.append(d)
            gs.append(g[j])
        if profile.n > 1 and c + profile.r[j] < a:
            ds.append(-(c + profile.r[j]))
            gs.append(g[j])
    order = np.argsort(ds, kind="stable")
    return np.asarray(ds)[order], np.asarray(gs)[order]


def _refined_max(d: np.ndarray, F: np.ndarray) -> tuple[float, float]:
    """Discrete maximum, refined by the vertex of the parabola through its neighbours."""
    k = int(np.argmax(F))
    best, where = float(F[k]), float(d[k])
    if 0 < k < len(F) - 1:
        x, y = d[k - 1:k + 2], F[k - 1:k + 2]
        if np.all(np.diff(x) > 0):
            c2, c1, c0 = np.polyfit(x, y, 2)
            if c2 < 0:
                v = -c1 / (2 * c2)
                if x[0] <= v <= x[2]:
                    val = c0 + c1 * v + c2 * v * v
                    if val > best:
                        best, where = float(val), float(v)
    return best, where


def gradient_estimate_check(profile: Profile, ball: BallSpec, hypotheses: str = "enforce",
                            tol: float = VERDICT_TOL) -> GradientEstimate:
    """Check ``|grad f|^2(x) <= 2n(m+n+6)/a^2`` and the barrier bound
    ``sup (a^2 - d^2)^2 |grad f|^2 <= 2n(m+n+6) a^2`` on a ball.

    ``hypotheses="enforce"`` raises :class:`HypothesisViolated` when
    ``Ric_f^m >= 0`` or the source condition fails; ``"report"`` records them
    and still evaluates the inequalities.
    """
    if hypotheses not in ("enforce", "report"):
        raise ValueError("hypotheses must be 'enforce' or 'report'")
    m = _finite_weight(profile)
    _check_ball_range(profile, ball)
    idx = _ball_indices(profile, ball)
    hyp = _hypotheses(profile, idx, hypotheses)
    const = gradient_constant(profile.n, m)
    a = ball.a
    d, G = _segment(profile, ball, idx)
    F = (a * a - d * d) ** 2 * G
    sup, where = _refined_max(d, F)
    center = EstimateReport(const / a**2, float(G[d == 0.0][0]), ball.center_r, tol)
    barrier = EstimateReport(const * a**2, sup, ball.center_r + where, tol)
    return GradientEstimate(center, barrier, hyp)


@dataclass(frozen=True)
class ComparisonReport:
    margin: float
    witness: float
    tol: float
    hypotheses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tol


def laplacian_comparison_check(profile: Profile, m: Weight | None = None, hypotheses: str = "enforce",
                               tol: float = VERDICT_TOL) -> ComparisonReport:
    """``Delta_f r <= (m+n-1)/r`` for the distance from the origin of a radial profile.

    ``Delta_f r = (n-1) w'/w - f'``. Only the origin is used as centre, where
    the distance function is smooth on the whole computed range.
    """
    m = profile.spec.m if m is None else m
    if m.is_infinite:
        raise ContractError("Laplacian comparison needs a finite weight m")
    idx = np.flatnonzero(profile.r > 0)
    hyp = {}
    lowest = float(np.min(bakry_emery_min(profile, idx, m)))
    hyp["bakry_emery_nonnegative"] = (lowest, lowest >= -eigenvalue_tolerance(profile, idx))
    if hypotheses == "enforce" and not hyp["bakry_emery_nonnegative"][1]:
        raise HypothesisViolated(f"Ric_f^m has eigenvalue {lowest:.3e} < 0")
    r = profile.r[idx]
    n = profile.n
    lap_r = ((n - 1) * profile.wp[idx] / profile.w[idx] if n > 1 else 0.0) - profile.fp[idx]
    # relative margin: the bound blows up at the origin
    bound = (m.value + n - 1) / r
    rel = (bound - lap_r) / bound
    k = int(np.argmin(rel))
    return ComparisonReport(float(rel[k]), float(r[k]), tol, hyp)


# --------------------------------------------------------------------------
# conformal rescaling of profiles
# --------------------------------------------------------------------------

def completeness_constant(n: int, m_tilde: float) -> float:
    """``C = sqrt(8 n (m~ + n + 6))``: twice the gradient constant's square root."""
    return math.sqrt(8.0 * n * (m_tilde + n + 6))


def threshold_holds(n: int, m_tilde: float) -> bool:
    return completeness_constant(n, m_tilde) / m_tilde < 1


def minimal_m_tilde(n: int) -> int:
    """Smallest integer ``m~`` with ``C/m~ < 1``; ``m~^2 - 8n m~ - 8n(n+6)`` is increasing past its root."""
    m = 1
    while not threshold_holds(n, m):
        m += 1
    return m


def rescale_profile(profile: Profile, m_tilde: Weight) -> Profile:
    """The rescaled triple ``(g~, f~)`` as a radial profile in ``g~``-arclength ``rho``.

    ``d rho = exp(-f/k) dr`` with ``k = m~ + n - 2``; ``w~ = exp(-f/k) w``;
    ``f~ = (m~/k) f``. The returned profile's ``spec`` carries the weight ``m~``;
    its ``lam`` is not meaningful. Its ``source`` is the transported one.
    """
    spec = RescaleSpec(m_tilde, profile.n)
    k, b = spec.denominator, spec.exponent_potential
    r, w, wp, f, fp, wpp, fpp = profile.r, profile.w, profile.wp, profile.f, profile.fp, profile.wpp, profile.fpp
    e = np.exp(f / k)
    rho = _arclength(profile, k)
    src = profile_source(profile)
    if src.offset != 0:
        raise ContractError("only sources of the form c1 exp(c2 f) transport to a rescaled source")
    new_src = Source(b * src.c1, (src.c2 + 2.0 / k) / b)
    out = Profile(
        spec=QuasiEinsteinSpec(profile.n, m_tilde, 0.0),
        shoot_param=profile.shoot_param,
        r=rho,
        w=w / e if profile.n > 1 else np.ones_like(w),
        wp=wp - fp * w / k if profile.n > 1 else np.zeros_like(w),
        f=b * f,
        fp=b * e * fp,
        wpp=e * (wpp - fpp * w / k - fp * wp / k) if profile.n > 1 else np.zeros_like(w),
        fpp=b * e**2 * (fpp + fp**2 / k),
        classification=profile.classification,
        message=f"rescaled with m~={m_tilde}",
        source=new_src,
    )
    out.dense = _RescaledDense(profile, k, b, rho)
    return out


def _arclength(profile: Profile, k: float) -> np.ndarray:
    """``rho(r) = int_0^r exp(-f/k)``, the stretch below the first grid point from the seed series."""
    r, f = profile.r, profile.f
    rho = np.empty_like(r)
    rho[0] = r[0] * math.exp(-f[0] / k)
    integrand = (lambda t: math.exp(-profile.state_at(t).f / k)) if profile.dense is not None else None
    for i in range(1, len(r)):
        if integrand is not None:
            piece, _ = integrate.quad(integrand, r[i - 1], r[i], epsabs=0, epsrel=1e-12)
        else:
            piece = 0.5 * (math.exp(-f[i - 1] / k) + math.exp(-f[i] / k)) * (r[i] - r[i - 1])
        rho[i] = rho[i - 1] + piece
    return rho


class _RescaledDense:
    """``rho -> (w~, w~', f~, f~')`` by inverting the arclength on the original dense solution."""

    def __init__(self, profile: Profile, k: float, b: float, rho: np.ndarray):
        self.p, self.k, self.b, self.rho = profile, k, b, rho

    def radius(self, rho: float) -> float:
        p, k = self.p, self.k
        if rho <= self.rho[0]:
            return rho * math.exp(p.f[0] / k)
        i = int(np.clip(np.searchsorted(self.rho, rho) - 1, 0, len(self.rho) - 2))
        r0, r1 = p.r[i], p.r[i + 1]

        def gap(t):
            piece, _ = integrate.quad(lambda s: math.exp(-p.state_at(s).f / k), r0, t, epsabs=0, epsrel=1e-12)
            return self.rho[i] + piece - rho

        lo, hi = gap(r0), gap(r1)
        if lo >= 0:
            return r0
        if hi <= 0:
            return r1
        return optimize.brentq(gap, r0, r1, xtol=1e-14, rtol=1e-14)

    def __call__(self, rho: float) -> np.ndarray:
        p, k, b = self.p, self.k, self.b
        r = self.radius(rho)
        if r < p.r[0]:
            st = p.state(0)
            f, fp, w, wp = st.f, st.fp * r / max(p.r[0], 1e-300), r, 1.0
        else:
            st = p.state_at(r)
            f, fp, w, wp = st.f, st.fp, st.w, st.wp
        e = math.exp(f / k)
        if p.n == 1:
            return np.array([1.0, 0.0, b * f, b * e * fp])
        return np.array([w / e, wp - fp * w / k, b * f, b * e * fp])


def conformal_length(profile: Profile, m_tilde: Weight, segment: tuple[float, float],
                     rescaled: Profile | None = None) -> float:
    """``g``-length of the ``g~``-unit-speed radial segment ``[t0, t1]``: ``int exp(f~/m~) dt``."""
    t0, t1 = map(float, segment)
    if rescaled is None:
        rescaled = rescale_profile(profile, m_tilde)
    lo = 0.0 if profile.n > 1 else rescaled.r[0]
    if not (lo <= t0 <= t1 <= rescaled.r[-1]):
        raise DomainError(f"segment [{t0}, {t1}] outside the rescaled range [{lo}, {rescaled.r[-1]:.6g}]")
    mt = m_tilde.value
    value, _ = integrate.quad(lambda t: math.exp(rescaled.dense(t)[2] / mt), t0, t1,
                              epsabs=0, epsrel=QUAD_RTOL, limit=200)
    return float(value)


# --------------------------------------------------------------------------
# the steady-soliton workflow
# --------------------------------------------------------------------------

@dataclass
class WorkflowReport:
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    minimal_m_tilde: int = 0
    rescaled: Profile | None = field(default=None, repr=False)
    length: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def default_balls(rescaled: Profile, count: int = 4) -> list[BallSpec]:
    """Balls of radius a quarter of the rescaled range, centred along it."""
    top = rescaled.r[-1]
    a = top / 4
    return [BallSpec(c, a) for c in np.linspace(a, top - a, count)]


def soliton_rescale_workflow(profile: Profile, m_tilde: Weight, balls: list[BallSpec] | None = None,
                             segment: tuple[float, float] = (0.0, 5.0), tol: float = STENCIL_TOL) -> WorkflowReport:
    """Rescale a steady soliton, transport the curvature bound, and run the estimates on the result.

    Checks: ``Ric_f >= 0`` on the input; the transported lower bound at every
    grid point; the completeness threshold ``C/m~ < 1``; the gradient estimate
    on the rescaled profile; a finite conformal length over ``segment``.
    Whether ``Ric_f~^m~(g~) >= 0`` actually holds (it needs ``c1 >= 0``, i.e.
    ``mu <= 0``) is reported as a note.
    """
    if not profile.spec.is_steady_soliton:
        raise ContractError("the workflow takes a steady soliton profile (m = inf, lambda = 0)")
    if m_tilde.is_infinite:
        raise ContractError("m~ must be finite")
    n = profile.n
    rep = WorkflowReport()
    ric_f = bakry_emery_min(profile)
    eig_tol = eigenvalue_tolerance(profile, np.arange(len(profile)))
    if np.min(ric_f) < -eig_tol:
        raise HypothesisViolated(f"Ric_f has eigenvalue {np.min(ric_f):.3e} < 0")
    rep.checks.append(Check.margin("ric_f_nonnegative", float(np.min(ric_f)), eig_tol))

    mu = profile.mu.value
    src = SourceTerm(-mu, 0.0)
    spec = RescaleSpec(m_tilde, n)
    lower = [corollary_lower_bound(profile.polar_sample(i), spec, src, tol) for i in range(len(profile))]
    margin = min(res.margin for res in lower)
    rep.checks.append(Check.margin("transported_lower_bound", margin, tol))
    rescaled_min = min(res.rescaled_min_eigenvalue for res in lower)
    rep.notes.append(
        f"rescaled Bakry-Emery min eigenvalue {rescaled_min:.6e}; c1={src.c1:.6e} "
        f"({'implies' if src.c1 >= 0 else 'does not imply'} nonnegativity)"
    )

    C = completeness_constant(n, m_tilde.value)
    rep.minimal_m_tilde = minimal_m_tilde(n)
    rep.checks.append(Check("completeness_threshold", C / m_tilde.value, 1.0, C / m_tilde.value < 1))
    rep.notes.append(f"C={C:.10g} minimal_integer_m_tilde={rep.minimal_m_tilde}")

    rescaled = rescale_profile(profile, m_tilde)
    rep.rescaled = rescaled
    for k, ball in enumerate(balls or default_balls(rescaled)):
        est = gradient_estimate_check(rescaled, ball, hypotheses="report")
        rep.checks.append(Check.margin(f"rescaled_gradient_center[{k}]", est.center.margin,
                                       VERDICT_TOL * est.center.bound))
        rep.checks.append(Check.margin(f"rescaled_gradient_barrier[{k}]", est.barrier.margin,
                                       VERDICT_TOL * est.barrier.bound))
        if not est.hypotheses_hold:
            failed = sorted(name for name, (_, ok) in est.hypotheses.items() if not ok)
            rep.notes.append(f"ball[{k}] c={ball.center_r:.6g} a={ball.a:.6g} hypotheses not met: {','.join(failed)}")

    rep.length = conformal_length(profile, m_tilde, segment, rescaled)
    rep.checks.append(Check("conformal_length_finite", rep.length, math.inf,
                            bool(math.isfinite(rep.length) and rep.length > 0)))
    return rep

