"""Rotationally symmetric quasi-Einstein metrics by shooting.

The ansatz is ``g = dr^2 + w(r)^2 g_{S^{n-1}}`` with a radial potential
``f(r)``. ``Ric_f^m = lambda g`` reduces to

    w'' = -lambda w + w' f' + (n-2)(1 - w'^2)/w
    f'' =  lambda + f'^2/m + (n-1) w''/w

and for ``n = 1`` (the line, no sphere factor) to ``f'' = lambda + f'^2/m``.
The reduction is cross-checked against the chart engine by
:func:`ansatz_residual`.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .chart import ChartSample, curvature, min_form_eigenvalue, weighted_tensors
from .errors import ContractError, DomainError, NumericalError
from .models import sphere_factors
from .weight import Weight

SEED_OFFSET = 1e-4
RTOL = 1e-10
ATOL = 1e-12
BLOWUP_THRESHOLD = 1e8
WARP_FLOOR = 1e-6
TRIVIAL_TOL = 1e-10
SEED_RESIDUAL_TOL = 1e-7
MU_FP_CAP = 1e3  # |f'| beyond which mu is not estimated
MU_W_FLOOR = 1e-3

COMPLETE = "complete-to-horizon"
BLOWUP = "potential-blow-up"
DEGENERATE = "warping-degenerate"
TRIVIAL = "trivial"

# provenance tags for mu
MU_WARPED = "warped-fiber"
MU_SOLITON = "soliton-trace"
MU_SCALAR = "scalar-plus-gradient"


@dataclass(frozen=True)
class QuasiEinsteinSpec:
    n: int
    m: Weight
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "m", Weight.parse(self.m))
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if not math.isfinite(self.lam):
            raise DomainError("lambda must be finite")

    @property
    def eps(self) -> float:
        return self.m.reciprocal

    @property
    def is_steady_soliton(self) -> bool:
        return self.m.is_infinite and self.lam == 0


@dataclass(frozen=True)
class ProfileState:
    r: float
    w: float
    wp: float
    f: float
    fp: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.wp, self.f, self.fp])


def _rhs_arrays(w, wp, fp, n: int, eps: float, lam: float):
    if n == 1:
        return np.zeros_like(np.asarray(w, float)), lam + eps * fp * fp
    # 1 - w'^2 factored to keep precision near the seed where w' ~ 1
    wpp = -lam * w + wp * fp + (n - 2) * (1 - wp) * (1 + wp) / w
    fpp = lam + eps * fp * fp + (n - 1) * wpp / w
    return wpp, fpp


def ode_rhs(state: ProfileState, spec: QuasiEinsteinSpec) -> tuple[float, float]:
    """``(w'', f'')`` at a state."""
    if spec.n > 1 and not state.w > 0:
        raise DomainError(f"warping must be positive, got w={state.w}")
    wpp, fpp = _rhs_arrays(state.w, state.wp, state.fp, spec.n, spec.eps, spec.lam)
    return float(wpp), float(fpp)


# --------------------------------------------------------------------------
# cross-oracle against the chart engine
# --------------------------------------------------------------------------

def default_angles(n: int) -> np.ndarray:
    return np.linspace(0.9, 1.3, max(n - 1, 0))


def polar_sample(state: ProfileState, wpp: float, fpp: float, n: int, angles=None) -> ChartSample:
    """2-jets of the ansatz metric and potential at ``(r, angles)`` in polar coordinates."""
    if n == 1:
        return ChartSample([state.r], np.eye(1), np.zeros((1, 1, 1)), np.zeros((1, 1, 1, 1)),
                           state.f, [state.fp], [[fpp]])
    theta = default_angles(n) if angles is None else np.asarray(angles, float)
    s, ds, d2s = sphere_factors(theta)
    w, wp = state.w, state.wp
    g = np.zeros((n, n))
    dg = np.zeros((n, n, n))
    d2g = np.zeros((n, n, n, n))
    g[0, 0] = 1.0
    A = slice(1, n)
    w2, dw2, d2w2 = w * w, 2 * w * wp, 2 * (wp * wp + w * wpp)
    for i in range(n - 1):
        a = i + 1
        g[a, a] = w2 * s[i]
        dg[0, a, a] = dw2 * s[i]
        dg[A, a, a] = w2 * ds[:, i]
        d2g[0, 0, a, a] = d2w2 * s[i]
        d2g[0, A, a, a] = dw2 * ds[:, i]
        d2g[A, 0, a, a] = dw2 * ds[:, i]
        d2g[A, A, a, a] = w2 * d2s[:, :, i]
    df = np.zeros(n)
    df[0] = state.fp
    d2f = np.zeros((n, n))
    d2f[0, 0] = fpp
    return ChartSample(np.r_[state.r, theta], g, dg, d2g, state.f, df, d2f)


def ansatz_residual(state: ProfileState, spec: QuasiEinsteinSpec, angles=None) -> np.ndarray:
    """``Ric_f^m - lambda g`` from the chart engine, using ``(w'', f'')`` from :func:`ode_rhs`."""
    wpp, fpp = ode_rhs(state, spec)
    s = polar_sample(state, wpp, fpp, spec.n, angles)
    return weighted_tensors(s, spec.m).bakry_emery - spec.lam * s.metric


# --------------------------------------------------------------------------
# seeds
# --------------------------------------------------------------------------

def compatible_w3(spec: QuasiEinsteinSpec, s: float) -> float:
    """Cubic warping coefficient forced by smooth closure: ``2 s - 6 (n-1) w3 = lambda``."""
    return (2 * s - spec.lam) / (6 * (spec.n - 1))


def series_seed(spec: QuasiEinsteinSpec, s: float, eps0: float = SEED_OFFSET, f0: float = 0.0,
                w3: float | None = None) -> ProfileState:
    """State near the origin from ``w = r + w3 r^3``, ``f = f0 + s r^2``.

    For ``n = 1`` there is no closure condition: the state sits at ``r = 0``
    with ``f'(0) = s``.
    """
    if spec.n == 1:
        return ProfileState(0.0, 1.0, 0.0, f0, s)
    if w3 is None:
        w3 = compatible_w3(spec, s)
    r = eps0
    return ProfileState(r, r + w3 * r**3, 1 + 3 * w3 * r**2, f0 + s * r**2, 2 * s * r)


def seed_residual(spec: QuasiEinsteinSpec, s: float, eps0: float = SEED_OFFSET, f0: float = 0.0,
                  w3: float | None = None) -> float:
    """Mismatch between the ODE second derivatives and those of the series at the seed."""
    if spec.n == 1:
        return 0.0
    if w3 is None:
        w3 = compatible_w3(spec, s)
    st = series_seed(spec, s, eps0, f0, w3)
    wpp, fpp = ode_rhs(st, spec)
    return max(abs(wpp - 6 * w3 * eps0), abs(fpp - 2 * s))


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Classification:
    kind: str
    r_star: float | None = None

    def __str__(self) -> str:
        return self.kind if self.r_star is None else f"{self.kind}({self.r_star:.10g})"


@dataclass(frozen=True)
class MuEstimate:
    value: float
    deviation: float
    tag: str
    pointwise: np.ndarray = field(repr=False, default=None)

    @property
    def relative_deviation(self) -> float:
        return self.deviation / abs(self.value) if self.value else self.deviation


@dataclass(frozen=True)
class Source:
    """``Delta_f f = phi(f)`` with ``phi(t) = offset + c1 exp(c2 t)``."""

    c1: float
    c2: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        return self.offset + self.c1 * np.exp(self.c2 * np.asarray(t, dtype=float))

    def derivative(self, t):
        return self.c1 * self.c2 * np.exp(self.c2 * np.asarray(t, dtype=float))

    def admissible(self, n: int, tol: float = 0.0) -> bool:
        """Whether ``phi' + (2/n) phi >= 0`` on the whole real line.

        ``phi' + (2/n) phi = (2/n) offset + c1 (c2 + 2/n) exp(c2 t)``: the
        exponential dominates at one end of the line and vanishes at the other.
        """
        lead = self.c1 * (self.c2 + 2.0 / n)
        if self.c2 == 0 or lead == 0:
            return (2.0 / n) * (self.offset + (self.c1 if self.c2 == 0 else 0.0)) >= -tol
        return self.offset >= -tol and lead >= -tol


@dataclass
class Profile:
    """A sampled solution of the reduced system."""

    spec: QuasiEinsteinSpec
    shoot_param: float
    r: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    wpp: np.ndarray
    fpp: np.ndarray
    classification: Classification | None = None
    mu: MuEstimate | None = None
    mu_checks: dict = field(default_factory=dict)
    dense: Callable[[float], np.ndarray] | None = field(default=None, repr=False)
    message: str = ""
    source: Source | None = None

    def __len__(self) -> int:
        return len(self.r)

    @property
    def n(self) -> int:
        return self.spec.n

    def state(self, i: int) -> ProfileState:
        return ProfileState(float(self.r[i]), float(self.w[i]), float(self.wp[i]), float(self.f[i]), float(self.fp[i]))

    def state_at(self, r: float) -> ProfileState:
        """Dense evaluation between grid points."""
        if self.dense is None:
            raise ContractError("profile carries no dense output")
        if not (self.r[0] - 1e-12 <= r <= self.r[-1] + 1e-12):
            raise DomainError(f"r={r} outside computed range [{self.r[0]}, {self.r[-1]}]")
        w, wp, f, fp = self.dense(r)
        return ProfileState(float(r), float(w), float(wp), float(f), float(fp))

    def drift_laplacian_f(self) -> np.ndarray:
        """``Delta_f f = f'' + (n-1)(w'/w) f' - f'^2`` per grid point."""
        lap = self.fpp + ((self.n - 1) * self.wp / self.w * self.fp if self.n > 1 else 0.0)
        return lap - self.fp**2

    def scalar_curvature(self) -> np.ndarray:
        n = self.n
        if n == 1:
            return np.zeros_like(self.r)
        return -2 * (n - 1) * self.wpp / self.w + (n - 1) * (n - 2) * (1 - self.wp) * (1 + self.wp) / self.w**2

    def polar_sample(self, i: int, angles=None) -> ChartSample:
        return polar_sample(self.state(i), float(self.wpp[i]), float(self.fpp[i]), self.n, angles)


def _from_arrays(spec, s, r, y, dense=None, message="") -> Profile:
    w, wp, f, fp = (np.asarray(v, float) for v in y)
    wpp, fpp = _rhs_arrays(w, wp, fp, spec.n, spec.eps, spec.lam)
    return Profile(spec, s, np.asarray(r, float), w, wp, f, fp, np.asarray(wpp, float), np.asarray(fpp, float),
                   dense=dense, message=message)


def _integrate(spec: QuasiEinsteinSpec, seed: ProfileState, r_max: float, rtol: float, atol: float,
               max_step: float):
    n, eps, lam = spec.n, spec.eps, spec.lam

    def rhs(r, y):
        w, wp, f, fp = y
        wpp, fpp = _rhs_arrays(w, wp, fp, n, eps, lam)
        return [0.0 if n == 1 else wp, wpp, fp, fpp]

    def blowup(r, y):
        return abs(y[3]) - BLOWUP_THRESHOLD

    blowup.terminal = True
    events = [blowup]
    if n > 1:
        def collapse(r, y):
            return y[0] - WARP_FLOOR

        collapse.terminal = True
        collapse.direction = -1
        events.append(collapse)
    with np.errstate(all="ignore"):
        return solve_ivp(rhs, (seed.r, r_max), seed.as_array(), method="DOP853", rtol=rtol, atol=atol,
                         events=events, dense_output=True, max_step=max_step)


def shoot(spec: QuasiEinsteinSpec, s: float, r_max: float, f0: float = 0.0, eps0: float = SEED_OFFSET,
          rtol: float = RTOL, atol: float = ATOL, max_step: float | None = None) -> Profile:
    """Integrate from the smooth-closure seed to ``r_max`` or a singularity, then classify.

    ``s`` is ``f''(0)/2`` for ``n >= 2`` and ``f'(0)`` for the line model.
    """
    if not r_max > 0:
        raise DomainError("r_max must be positive")
    seed = series_seed(spec, s, eps0, f0)
    if spec.n > 1:
        res = seed_residual(spec, s, eps0, f0)
        if res > SEED_RESIDUAL_TOL:
            raise NumericalError(f"seed residual {res:.3e} exceeds {SEED_RESIDUAL_TOL:g}")
    if max_step is None:
        max_step = (r_max - seed.r) / 500
    sol = _integrate(spec, seed, r_max, rtol, atol, max_step)
    finite = np.all(np.isfinite(sol.y), axis=0)
    r, y = sol.t[finite], sol.y[:, finite]
    profile = _from_arrays(spec, s, r, y, sol.sol, sol.message)
    if sol.status == -1:
        singular = abs(profile.fp[-1]) > 1e4 or (spec.n > 1 and profile.w[-1] < 1e-3)
        if not singular:
            raise NumericalError(f"integrator failed at r={r[-1]:.6g}: {sol.message}")
    profile.classification = classify_solution(profile, sol)
    if spec.n == 1 and profile.classification.kind == COMPLETE:
        profile.classification = _backward_branch(spec, s, r_max, f0, rtol, atol, max_step)
    profile.mu = profile_mu(profile)
    if spec.is_steady_soliton:
        profile.mu_checks[MU_SCALAR] = steady_invariant(profile)
    profile.mu_checks[profile.mu.tag] = profile.mu
    return profile


def _backward_branch(spec: QuasiEinsteinSpec, s: float, r_max: float, f0: float, rtol: float, atol: float,
                     max_step: float) -> Classification:
    """Completeness of the line model needs ``t < 0`` too.

    ``t -> -t`` maps solutions to solutions with ``f'(0)`` negated, so the
    backward branch is a forward run from ``-s``; a pole there is reported
    as a blow-up at negative ``r*``.
    """
    seed = ProfileState(0.0, 1.0, 0.0, f0, -s)
    sol = _integrate(spec, seed, r_max, rtol, atol, max_step)
    finite = np.all(np.isfinite(sol.y), axis=0)
    mirror = _from_arrays(spec, -s, sol.t[finite], sol.y[:, finite])
    cls = classify_solution(mirror, sol)
    if cls.kind == BLOWUP:
        return Classification(BLOWUP, -cls.r_star)
    return Classification(COMPLETE)


def _blowup_radius(profile: Profile) -> float:
    """Fit ``1/f' = (r* - r)/A`` through the last three points and return ``r*``."""
    r, inv = profile.r[-3:], 1.0 / profile.fp[-3:]
    slope, intercept = np.polyfit(r, inv, 1)
    return float(-intercept / slope)


def _space_form(kappa: float, r: np.ndarray) -> np.ndarray:
    if kappa > 0:
        return np.sin(math.sqrt(kappa) * r) / math.sqrt(kappa)
    if kappa < 0:
        return np.sinh(math.sqrt(-kappa) * r) / math.sqrt(-kappa)
    return r.copy()


def lambda_consistent(profile: Profile, tol: float = 1e-6) -> bool:
    """With constant potential, ``Ric = lambda g`` forces the space-form warping."""
    spec = profile.spec
    if spec.n == 1:
        return abs(spec.lam) <= tol
    model = _space_form(spec.lam / (spec.n - 1), profile.r)
    return bool(np.max(np.abs(profile.w - model)) <= tol * max(1.0, np.max(np.abs(model))))


def classify_solution(profile: Profile, sol=None) -> Classification:
    """Singular endings take precedence; then triviality; otherwise complete to ``r_max``."""
    ev = getattr(sol, "t_events", None) or [[], []]
    blew_up = len(ev[0]) > 0 or (sol is not None and sol.status == -1 and abs(profile.fp[-1]) > 1e4)
    collapsed = len(ev) > 1 and len(ev[1]) > 0 or (sol is not None and sol.status == -1 and profile.n > 1
                                                   and profile.w[-1] < 1e-3)
    if blew_up and len(profile) >= 3:
        return Classification(BLOWUP, _blowup_radius(profile))
    if collapsed:
        return Classification(DEGENERATE, float(profile.r[-1] + profile.w[-1] / abs(profile.wp[-1])))
    if np.max(np.abs(profile.fp)) < TRIVIAL_TOL and lambda_consistent(profile):
        return Classification(TRIVIAL)
    return Classification(COMPLETE)


def profile_mu(profile: Profile) -> MuEstimate:
    """The fiber constant ``mu`` per grid point: warped-product form for finite ``m``,
    soliton form ``-(Delta_f f + 2 lambda f)`` for ``m = inf``."""
    spec = profile.spec
    lap = profile.drift_laplacian_f()
    if spec.m.is_finite:
        m = spec.m.value
        mu = -(lap - m * spec.lam) * np.exp(-2 * profile.f / m) / m
        tag = MU_WARPED
    else:
        mu = -(lap + 2 * spec.lam * profile.f)
        tag = MU_SOLITON
    trusted = _trusted(profile)
    mean = float(np.mean(mu[trusted]))
    return MuEstimate(mean, float(np.max(np.abs(mu[trusted] - mean))), tag, mu)


def _trusted(profile: Profile) -> np.ndarray:
    """Grid points away from a singular end, where ``Delta_f f`` is not swamped by cancellation."""
    mask = np.abs(profile.fp) <= MU_FP_CAP
    if profile.n > 1:
        mask &= profile.w >= MU_W_FLOOR * np.max(profile.w)
    return mask if np.count_nonzero(mask) >= 3 else np.ones(len(profile), bool)


def profile_source(profile: Profile) -> Source:
    """The source ``phi`` with ``Delta_f f = phi(f)`` carried by the profile.

    For a quasi-Einstein profile this is ``m lambda - m mu exp(2t/m)`` (finite
    ``m``) or ``-mu - 2 lambda t`` (solitons, only representable for
    ``lambda = 0``).
    """
    if profile.source is not None:
        return profile.source
    spec = profile.spec
    mu = (profile.mu or profile_mu(profile)).value
    if spec.m.is_finite:
        m = spec.m.value
        return Source(-m * mu, 2.0 / m, m * spec.lam)
    if spec.lam != 0:
        raise ContractError("a shrinking or expanding soliton source is linear in f, not exponential")
    return Source(-mu, 0.0)


def steady_invariant(profile: Profile) -> MuEstimate:
    """``R + |grad f|^2`` per grid point for a steady soliton."""
    if not profile.spec.is_steady_soliton:
        raise ContractError("R + |grad f|^2 is constant only for steady solitons (m = inf, lambda = 0)")
    vals = profile.scalar_curvature() + profile.fp**2
    trusted = _trusted(profile)
    mean = float(np.mean(vals[trusted]))
    return MuEstimate(mean, float(np.max(np.abs(vals[trusted] - mean))), MU_SCALAR, vals)


def bakry_emery_min(profile: Profile, indices: Sequence[int] | None = None, m: Weight | None = None) -> np.ndarray:
    """Smallest eigenvalue of ``Ric_f^m`` relative to ``g`` at grid points, via the chart engine."""
    m = profile.spec.m if m is None else m
    idx = range(len(profile)) if indices is None else indices
    return np.array([
        min_form_eigenvalue(weighted_tensors(s := profile.polar_sample(i), m).bakry_emery, s.metric)
        for i in idx
    ])


def ricci_defect(profile: Profile, indices: Sequence[int] | None = None) -> tuple[float, float]:
    """Largest ``|Ric|`` eigenvalue relative to ``g`` over grid points, with its roundoff tolerance."""
    idx = np.arange(len(profile)) if indices is None else np.asarray(indices)
    worst = 0.0
    for i in idx:
        sample = profile.polar_sample(int(i))
        ric = curvature(sample).ricci
        worst = max(worst, -min_form_eigenvalue(ric, sample.metric), -min_form_eigenvalue(-ric, sample.metric))
    tol = 1e-8
    if profile.n > 1:
        tol += 64 * np.finfo(float).eps * float(np.max(1.0 / profile.w[idx] ** 2))
    return worst, tol


def is_counterexample(profile: Profile, tol: float = 1e-6) -> bool:
    """Whether a run would contradict ``mu >= 0`` (with equality only when Ricci-flat).

    Only complete runs count; ``mu`` within ``tol`` of zero is accepted when
    the metric is Ricci-flat to roundoff.
    """
    if profile.classification is None or profile.classification.kind != COMPLETE:
        return False
    mu = (profile.mu or profile_mu(profile)).value
    if mu < -tol:
        return True
    if mu <= tol:
        defect, flat_tol = ricci_defect(profile)
        return defect > flat_tol
    return False


def line_blowup_radius(v0: float, m: Weight) -> float:
    """Pole of ``f' = v0/(1 - v0 t/m)``, the ``lambda = 0`` line solution."""
    if m.is_infinite or v0 <= 0:
        return math.inf
    return m.value / v0


def _shoot_one(args):
    spec, s, r_max, kwargs = args
    return shoot(spec, s, r_max, **kwargs)


def sweep(spec: QuasiEinsteinSpec, values: Sequence[float], r_max: float, workers: int | None = None,
          **kwargs) -> list[Profile]:
    """Shoot once per parameter value; runs are independent and may use a process pool."""
    jobs = [(spec, float(s), r_max, kwargs) for s in values]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            profiles = list(pool.map(_shoot_one, jobs))
        for p in profiles:
            p.dense = None
        return profiles
    return [_shoot_one(j) for j in jobs]
