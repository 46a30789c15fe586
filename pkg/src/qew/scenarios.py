"""Scenario files: schema validation and the five verification suites.

A scenario is one TOML file::

    name = "cosh-identities"
    kind = "chart-identities"

    [params]
    m = 2
    samples = 5

Every kind declares its parameters with explicit defaults; unknown keys,
wrong types and out-of-domain values are rejected before any computation.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import models
from .chart import ScalarField, bochner_residual, weighted_tensors
from .cohomogeneity import (
    BLOWUP,
    TRIVIAL,
    Profile,
    QuasiEinsteinSpec,
    is_counterexample,
    line_blowup_radius,
    seed_residual,
    shoot,
)
from .conformal import RescaleSpec, change_identity_residual, laplacian_identity_residual
from .errors import ConfigError, DomainError
from .estimates import (
    BallSpec,
    default_balls,
    gradient_constant,
    gradient_estimate_check,
    laplacian_comparison_check,
    soliton_rescale_workflow,
)
from .report import Check, VerificationReport, emit_csv
from .warped import FIBERS, assemble, base_residual, einstein_residual, mu_field
from .weight import Weight

KINDS = ("chart-identities", "warped-product", "shoot", "estimate-suite", "rescale-workflow")
TOL_ENV = "QEW_TOL"
CONVERGENCE_BAND = (3.5, 4.5)


# --------------------------------------------------------------------------
# schema
# --------------------------------------------------------------------------

def _number(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite")
    return float(v)


def _positive(name, v):
    v = _number(name, v)
    if v <= 0:
        raise ConfigError(f"{name}: must be positive, got {v:g}")
    return v


def _integer(lo):
    def parse(name, v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{name}: expected an integer, got {v!r}")
        if v < lo:
            raise ConfigError(f"{name}: must be >= {lo}, got {v}")
        return v
    return parse


def _weight(name, v):
    try:
        return Weight.parse(v)
    except DomainError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def _finite_weight(name, v):
    w = _weight(name, v)
    if w.is_infinite:
        raise ConfigError(f"{name}: must be finite")
    return w


def _choice(*options):
    def parse(name, v):
        if v not in options:
            raise ConfigError(f"{name}: expected one of {', '.join(options)}, got {v!r}")
        return v
    return parse


def _boolean(name, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{name}: expected true or false, got {v!r}")
    return v


def _filename(name, v):
    if v is None:
        return None
    if not isinstance(v, str) or not v or Path(v).name != v:
        raise ConfigError(f"{name}: expected a plain file name, got {v!r}")
    return v


def _pair(name, v):
    if not (isinstance(v, list) and len(v) == 2):
        raise ConfigError(f"{name}: expected a pair [lo, hi]")
    lo, hi = (_number(name, x) for x in v)
    if not lo < hi:
        raise ConfigError(f"{name}: need lo < hi")
    return (lo, hi)


def _balls(name, v):
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{name}: expected a list of [centre, radius] pairs")
    out = []
    for item in v:
        if not (isinstance(item, list) and len(item) == 2):
            raise ConfigError(f"{name}: each ball is [centre, radius]")
        c, a = _number(name, item[0]), _positive(name, item[1])
        if c < 0:
            raise ConfigError(f"{name}: centre must be >= 0")
        out.append(BallSpec(c, a))
    return out


def _optional(parse):
    return lambda name, v: None if v is None else parse(name, v)


@dataclass(frozen=True)
class Param:
    default: Any
    parse: Callable[[str, Any], Any]


SCHEMAS: dict[str, dict[str, Param]] = {
    "chart-identities": {
        "model": Param("cosh", _choice("cosh", "gaussian", "sphere", "random")),
        "n": Param(1, _integer(1)),
        "m": Param(2.0, _weight),
        "c": Param(1.0, _positive),
        "radius": Param(1.0, _positive),
        "seed": Param(0, _integer(0)),
        "samples": Param(5, _integer(1)),
        "m_tilde": Param(31.0, _finite_weight),
        "bochner_h": Param(1e-3, _positive),
        "bochner_tol": Param(1e-6, _positive),
        "convergence": Param(False, _boolean),
        "stencil_h": Param(1e-3, _positive),
        "tol": Param(1e-8, _positive),
    },
    "warped-product": {
        "m": Param(2, _integer(1)),
        "c": Param(1.0, _positive),
        "fiber": Param("hyperbolic", _choice(*FIBERS)),
        "lambda": Param(None, _optional(_number)),
        "mu": Param(None, _optional(_number)),
        "perturb": Param(0.0, _number),
        "samples": Param(100, _integer(2)),
        "t_range": Param([-2.0, 2.0], _pair),
        "tol": Param(1e-8, _positive),
    },
    "shoot": {
        "n": Param(3, _integer(1)),
        "m": Param("inf", _weight),
        "lambda": Param(0.0, _number),
        "shoot_param": Param(-0.5, _number),
        "r_max": Param(10.0, _positive),
        "f0": Param(0.0, _number),
        "eps0": Param(1e-4, _positive),
        "rtol": Param(1e-10, _positive),
        "atol": Param(1e-12, _positive),
        "seed_tol": Param(1e-7, _positive),
        "blowup_rtol": Param(0.01, _positive),
        "expect": Param(None, _optional(_choice("complete-to-horizon", "potential-blow-up",
                                                 "warping-degenerate", "trivial"))),
        "csv": Param(None, _filename),
        "tol": Param(1e-6, _positive),
    },
    "estimate-suite": {
        "n": Param(3, _integer(1)),
        "m": Param(2.0, _finite_weight),
        "lambda": Param(0.0, _number),
        "shoot_param": Param(0.3, _number),
        "r_max": Param(10.0, _positive),
        "balls": Param(None, _balls),
        "hypotheses": Param("enforce", _choice("enforce", "report")),
        "comparison": Param(True, _boolean),
        "tol": Param(1e-9, _positive),
    },
    "rescale-workflow": {
        "n": Param(3, _integer(2)),
        "shoot_param": Param(-0.5, _number),
        "r_max": Param(10.0, _positive),
        "m_tilde": Param(31.0, _finite_weight),
        "segment": Param([0.0, 5.0], _pair),
        "balls": Param(None, _balls),
        "csv": Param(None, _filename),
        "tol": Param(1e-5, _positive),
    },
}


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    params: dict

    def with_param(self, key: str, value) -> "Scenario":
        schema = SCHEMAS[self.kind]
        if key not in schema:
            raise ConfigError(f"params.{key}: not a parameter of kind {self.kind}")
        return Scenario(self.name, self.kind, {**self.params, key: schema[key].parse(f"params.{key}", value)})


def validate(doc: dict) -> Scenario:
    unknown = set(doc) - {"name", "kind", "params"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    name, kind = doc.get("name"), doc.get("kind")
    if not isinstance(name, str) or not name or any(ch.isspace() for ch in name):
        raise ConfigError("name: expected a non-empty string without whitespace")
    if kind not in SCHEMAS:
        raise ConfigError(f"kind: expected one of {', '.join(KINDS)}, got {kind!r}")
    raw = doc.get("params", {})
    if not isinstance(raw, dict):
        raise ConfigError("params: expected a table")
    schema = SCHEMAS[kind]
    bad = set(raw) - set(schema)
    if bad:
        raise ConfigError(f"params: unknown keys for kind {kind}: {', '.join(sorted(bad))}")
    # defaults go through the parsers too, so "inf" becomes a Weight
    params = {key: p.parse(f"params.{key}", raw.get(key, p.default)) for key, p in schema.items()}
    return Scenario(name, kind, params)


def load(path: str | Path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    return validate(doc)


def tolerance_override(environ) -> float | None:
    raw = environ.get(TOL_ENV)
    if raw is None or raw == "":
        return None
    try:
        tol = float(raw)
    except ValueError:
        raise ConfigError(f"{TOL_ENV}: not a number: {raw!r}") from None
    if not (math.isfinite(tol) and tol > 0):
        raise ConfigError(f"{TOL_ENV}: must be a positive number")
    return tol


# --------------------------------------------------------------------------
# chart identities
# --------------------------------------------------------------------------

def _test_function(dim: int) -> ScalarField:
    """A fixed smooth ``u`` with exact jets and nondegenerate Hessian."""
    A = np.diag(np.linspace(1.0, 2.0, dim)) + 0.3 * np.ones((dim, dim))
    u = models.quadratic(A, np.linspace(0.5, -0.5, dim) if dim > 1 else [0.4])
    for axis in range(dim):
        u = u + models.sine_potential(0.3, 1.0 + 0.5 * axis, dim, axis)
    return u


def _cos_first(dim: int) -> ScalarField:
    """``u = cos x_0``: the height function on the round sphere in polar angles."""
    e0 = np.eye(dim)[0]
    return ScalarField(lambda x: math.cos(x[0]), lambda x: -math.sin(x[0]) * e0,
                       lambda x: -math.cos(x[0]) * np.outer(e0, e0))


def _identity_model(p):
    """(chart, expected lambda or None, point sampler)."""
    model, rng = p["model"], np.random.default_rng(p["seed"])
    if model == "cosh":
        m = p["m"]
        if m.is_infinite:
            raise ConfigError("params.m: the cosh model needs a finite weight")
        chart = models.cosh_line(m.value, p["c"])
        return chart, -m.value * p["c"] ** 2, lambda: rng.uniform(-2, 2, size=1)
    n = p["n"]
    if model == "gaussian":
        lam = 1.0 if p["m"].is_infinite else None
        return models.gaussian_soliton(n), lam, lambda: rng.uniform(-0.5, 0.5, size=n)
    if model == "sphere":
        if n < 2:
            raise ConfigError("params.n: the sphere model needs n >= 2")
        chart = models.round_sphere(n, p["radius"])
        return chart, (n - 1) / p["radius"] ** 2, lambda: rng.uniform(0.7, 2.4, size=n)
    chart = models.random_analytic_chart(n, seed=p["seed"])
    return chart, None, lambda: rng.uniform(-0.5, 0.5, size=n)


def _ratio(coarse: float, fine: float) -> float:
    return abs(coarse) / abs(fine) if fine else math.inf


def _band_check(name: str, ratio: float) -> Check:
    lo, hi = CONVERGENCE_BAND
    return Check(name, ratio, hi - lo, bool(lo <= ratio <= hi))


def run_chart_identities(sc: Scenario, tol: float) -> VerificationReport:
    p = sc.params
    chart, lam, draw = _identity_model(p)
    m = p["m"]
    spec = RescaleSpec(p["m_tilde"], chart.dim)
    u = _cos_first(chart.dim) if p["model"] == "sphere" else _test_function(chart.dim)
    points = [draw() for _ in range(p["samples"])]
    rep = VerificationReport(sc.name, sc.kind)
    if lam is not None:
        worst = max(float(np.abs(weighted_tensors(chart.sample(x), m).bakry_emery
                                 - lam * chart.sample(x).metric).max()) for x in points)
        rep.add(Check.below("quasi_einstein", worst, tol))
    change = max(float(np.abs(change_identity_residual(chart, spec, x)).max()) for x in points)
    rep.add(Check.below("change_identity", change, tol))
    lap = max(abs(laplacian_identity_residual(chart, spec, u, x)) for x in points)
    rep.add(Check.below("laplacian_identity", lap, tol))
    boch = max(abs(bochner_residual(chart, u, x, m, p["bochner_h"])) for x in points)
    rep.add(Check.below("bochner", boch, p["bochner_tol"]))
    if p["convergence"]:
        h = p["stencil_h"]
        x = points[0]
        pairs = {
            "change_identity_convergence": [float(np.linalg.norm(change_identity_residual(chart, spec, x, hh)))
                                            for hh in (h, h / 2)],
            "laplacian_identity_convergence": [laplacian_identity_residual(chart, spec, u, x, hh)
                                               for hh in (h, h / 2)],
            "bochner_convergence": [bochner_residual(chart, u, x, m, hh).value for hh in (h, h / 2)],
        }
        for name, (coarse, fine) in pairs.items():
            rep.add(_band_check(name, _ratio(coarse, fine)))
    rep.notes.append(f"model={p['model']} dim={chart.dim} m={m} m_tilde={p['m_tilde']} points={len(points)}")
    return rep


# --------------------------------------------------------------------------
# warped product
# --------------------------------------------------------------------------

def run_warped_product(sc: Scenario, tol: float) -> VerificationReport:
    p = sc.params
    k, c = p["m"], p["c"]
    m = Weight(k)
    potential = models.log_cosh_potential(k, c)
    if p["perturb"]:
        potential = potential + models.sine_potential(p["perturb"], 1.0)
    base = models.flat(1, potential)
    fiber = FIBERS[p["fiber"]](k)
    lam = -k * c**2 if p["lambda"] is None else p["lambda"]
    mu_expected = -(k - 1) * c**2 if p["mu"] is None else p["mu"]
    rep = VerificationReport(sc.name, sc.kind)
    rep.add(Check.below("fiber_einstein", fiber.check_einstein(math.inf), tol))
    ts = np.linspace(*p["t_range"], p["samples"])
    total, on_base, mus = 0.0, 0.0, []
    for t in ts:
        s = base.sample([t])
        ws = assemble(s, fiber, m)
        total = max(total, float(np.abs(einstein_residual(ws, lam)).max()))
        on_base = max(on_base, float(np.abs(base_residual(s, m, lam)).max()))
        mus.append(mu_field(s, m, lam))
    mus = np.asarray(mus)
    rep.add(Check.below("einstein_residual", total, tol))
    rep.add(Check.below("base_quasi_einstein", on_base, tol))
    rep.add(Check.below("mu_value", float(np.mean(mus)) - mu_expected, tol))
    rep.add(Check.below("mu_constancy", float(np.std(mus)), tol))
    rep.notes.append(f"fiber={p['fiber']} m={k} lambda={lam:.10g} mu_mean={np.mean(mus):.10g}")
    return rep


# --------------------------------------------------------------------------
# shooting
# --------------------------------------------------------------------------

def _shoot(p, m: Weight) -> Profile:
    spec = QuasiEinsteinSpec(p["n"], m, p["lambda"])
    return shoot(spec, p["shoot_param"], p["r_max"], f0=p.get("f0", 0.0),
                 eps0=p.get("eps0", 1e-4), rtol=p.get("rtol", 1e-10), atol=p.get("atol", 1e-12))


def _nonexistence_witness(profile: Profile, tol: float) -> Check:
    """Fails iff a complete run has ``mu < 0``, or ``mu = 0`` without being Ricci-flat."""
    return Check("nonexistence_witness", profile.mu.value, tol, not is_counterexample(profile, tol))


def _closed_form_line(profile: Profile, p, rep: VerificationReport) -> None:
    """``f' = v0/(1 - v0 t/m)`` and its pole for the line model with lambda = 0."""
    v0, m = p["shoot_param"], profile.spec.m
    mv = math.inf if m.is_infinite else m.value
    r = profile.r
    exact = v0 / (1 - v0 * r / mv) if m.is_finite else np.full_like(r, v0)
    keep = r <= 0.9 * line_blowup_radius(v0, m) if v0 > 0 else np.ones_like(r, bool)
    err = float(np.max(np.abs(profile.fp[keep] - exact[keep]) / (1 + np.abs(exact[keep]))))
    rep.add(Check.below("closed_form_fprime", err, p["tol"]))
    r_star = line_blowup_radius(v0, m)
    if math.isfinite(r_star) and r_star < p["r_max"]:
        got = profile.classification.r_star if profile.classification.kind == BLOWUP else math.nan
        rel = abs(got - r_star) / r_star if math.isfinite(got) else math.inf
        rep.add(Check.below("blowup_radius", rel, p["blowup_rtol"]))


def run_shoot(sc: Scenario, tol: float) -> tuple[VerificationReport, Profile]:
    p = {**sc.params, "tol": tol}
    m = p["m"]
    spec = QuasiEinsteinSpec(p["n"], m, p["lambda"])
    rep = VerificationReport(sc.name, sc.kind)
    if spec.n > 1:
        res = seed_residual(spec, p["shoot_param"], p["eps0"], p["f0"])
        rep.add(Check.below("seed_residual", res, p["seed_tol"]))
    profile = _shoot(p, m)
    cls, mu = profile.classification, profile.mu
    if cls.kind == TRIVIAL:
        rep.add(Check.below("mu_constancy", mu.deviation, tol))
    else:
        rep.add(Check.below("mu_constancy", mu.relative_deviation, tol))
    if spec.is_steady_soliton and cls.kind != TRIVIAL:
        inv = profile.mu_checks["scalar-plus-gradient"]
        rep.add(Check.below("steady_invariant_constancy", inv.relative_deviation, tol))
        rep.add(Check.below("steady_invariant_matches_mu", abs(inv.value - mu.value) / abs(mu.value), tol))
        rep.add(Check("steady_invariant_positive", inv.value, 0.0, inv.value > 0))
    if m.is_finite and spec.lam == 0:
        rep.add(_nonexistence_witness(profile, tol))
    if spec.n == 1 and spec.lam == 0:
        _closed_form_line(profile, p, rep)
    if p["expect"] is not None:
        rep.add(Check("classification", 0.0 if cls.kind == p["expect"] else 1.0, 0.0, cls.kind == p["expect"]))
    r_star = "" if cls.r_star is None else f" r_star={cls.r_star:.10g}"
    rep.notes.append(f"classification={cls.kind}{r_star}")
    rep.notes.append(f"mu={mu.value:.10g} tag={mu.tag} points={len(profile)} r_end={profile.r[-1]:.10g}")
    return rep, profile


# --------------------------------------------------------------------------
# estimates
# --------------------------------------------------------------------------

def _safe_balls(profile: Profile, balls):
    if balls is not None:
        return balls
    return default_balls(profile, 3)


def run_estimate_suite(sc: Scenario, tol: float) -> VerificationReport:
    p = sc.params
    m = p["m"]
    profile = _shoot(p, m)
    n = p["n"]
    rep = VerificationReport(sc.name, sc.kind)
    rep.notes.append(f"classification={profile.classification.kind} gradient_constant={gradient_constant(n, m.value):g}")
    for k, ball in enumerate(_safe_balls(profile, p["balls"])):
        est = gradient_estimate_check(profile, ball, p["hypotheses"], tol)
        rep.add(Check.margin(f"gradient_center[{k}]", est.center.margin, tol * max(est.center.bound, 1.0)))
        rep.add(Check.margin(f"gradient_barrier[{k}]", est.barrier.margin, tol * max(est.barrier.bound, 1.0)))
        if not est.hypotheses_hold:
            failed = sorted(name for name, (_, ok) in est.hypotheses.items() if not ok)
            rep.notes.append(f"ball[{k}] hypotheses not met: {','.join(failed)}")
    if p["comparison"]:
        cmp = laplacian_comparison_check(profile, hypotheses=p["hypotheses"], tol=tol)
        rep.add(Check.margin("laplacian_comparison", cmp.margin, tol))
    return rep


def run_rescale_workflow(sc: Scenario, tol: float) -> tuple[VerificationReport, Profile]:
    p = sc.params
    profile = shoot(QuasiEinsteinSpec(p["n"], Weight.infinite(), 0.0), p["shoot_param"], p["r_max"])
    wf = soliton_rescale_workflow(profile, p["m_tilde"], p["balls"], p["segment"], tol)
    rep = VerificationReport(sc.name, sc.kind, list(wf.checks), list(wf.notes))
    rep.notes.append(f"conformal_length={wf.length:.12g} segment={list(p['segment'])}")
    return rep, wf.rescaled


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def run_scenario(sc: Scenario | str | Path, out_dir: str | Path | None = None,
                 tol: float | None = None) -> VerificationReport:
    """Run one scenario (or the scenario file at a path); write any requested CSV into ``out_dir``.

    ``tol`` (normally from ``QEW_TOL``) replaces the scenario's verdict tolerance.
    """
    if not isinstance(sc, Scenario):
        sc = load(sc)
    tol = sc.params["tol"] if tol is None else tol
    start = time.perf_counter()
    profile = None
    if sc.kind == "chart-identities":
        rep = run_chart_identities(sc, tol)
    elif sc.kind == "warped-product":
        rep = run_warped_product(sc, tol)
    elif sc.kind == "shoot":
        rep, profile = run_shoot(sc, tol)
    elif sc.kind == "estimate-suite":
        rep = run_estimate_suite(sc, tol)
    else:
        rep, profile = run_rescale_workflow(sc, tol)
    csv_name = sc.params.get("csv")
    if csv_name and profile is not None:
        emit_csv(profile, Path(out_dir or ".") / csv_name)
    rep.timing = time.perf_counter() - start
    return rep
