"""Closed-form charts and test functions with exact derivatives."""
from __future__ import annotations

import numpy as np

from .chart import Chart, ScalarField
from .errors import DomainError

Array = np.ndarray


def _const_metric_jet(g: Array):
    n = g.shape[0]
    return lambda x: (g.copy(), np.zeros((n, n, n)), np.zeros((n, n, n, n)))


def flat(n: int, potential: ScalarField | None = None) -> Chart:
    eye = np.eye(n)
    return Chart(n, lambda x: eye.copy(), _const_metric_jet(eye), potential)


# ---------------------------------------------------------------- spheres

def sphere_factors(theta: Array) -> tuple[Array, Array, Array]:
    """Diagonal of the round metric in nested polar angles, with derivatives.

    ``s_i = prod_{j<i} sin^2 theta_j``; returns ``(s, ds[a, i], d2s[a, b, i])``.
    """
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    sin, cos = np.sin(theta), np.cos(theta)
    s = np.array([np.prod(sin[:i] ** 2) for i in range(k)])
    ds = np.zeros((k, k))
    d2s = np.zeros((k, k, k))
    # d/dθ sin²θ = sin 2θ, d²/dθ² sin²θ = 2 cos 2θ; factors with j >= i are absent
    for i in range(k):
        for a in range(i):
            others = np.prod([sin[j] ** 2 for j in range(i) if j != a])
            ds[a, i] = others * np.sin(2 * theta[a])
            d2s[a, a, i] = others * 2 * np.cos(2 * theta[a])
            for b in range(i):
                if b != a:
                    rest = np.prod([sin[j] ** 2 for j in range(i) if j not in (a, b)])
                    d2s[a, b, i] = rest * np.sin(2 * theta[a]) * np.sin(2 * theta[b])
    del cos
    return s, ds, d2s


def round_sphere(k: int, radius: float = 1.0, potential: ScalarField | None = None) -> Chart:
    """Round ``S^k`` of the given radius in nested polar coordinates; ``Ric = (k-1)/radius^2 g``."""
    r2 = radius**2

    def jet(x):
        s, ds, d2s = sphere_factors(x)
        g = r2 * np.diag(s)
        dg = np.zeros((k, k, k))
        d2g = np.zeros((k, k, k, k))
        for i in range(k):
            dg[:, i, i] = r2 * ds[:, i]
            d2g[:, :, i, i] = r2 * d2s[:, :, i]
        return g, dg, d2g

    return Chart(k, lambda x: jet(x)[0], jet, potential)


def hyperbolic(k: int, potential: ScalarField | None = None) -> Chart:
    """Upper half-space ``y^-2 (dx_1^2 + ... + dy^2)`` with ``y`` the last coordinate; ``Ric = -(k-1) g``."""
    eye = np.eye(k)

    def height(x):
        if not x[-1] > 0:
            raise DomainError(f"the upper half-space needs y > 0, got {x[-1]:g}")
        return x[-1]

    def jet(x):
        y = height(x)
        dg = np.zeros((k, k, k))
        d2g = np.zeros((k, k, k, k))
        dg[-1] = -2 * y**-3 * eye
        d2g[-1, -1] = 6 * y**-4 * eye
        return y**-2 * eye, dg, d2g

    return Chart(k, lambda x: height(x) ** -2 * eye, jet, potential)


def torus(k: int) -> Chart:
    """Flat torus chart (locally the identity metric)."""
    return flat(k)


# ---------------------------------------------------------------- potentials

def quadratic(A, b=None, c: float = 0.0) -> ScalarField:
    """``u(x) = 1/2 x.A.x + b.x + c`` with symmetric ``A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    A = 0.5 * (A + A.T)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    return ScalarField(
        lambda x: 0.5 * x @ A @ x + b @ x + c,
        lambda x: A @ x + b,
        lambda x: A.copy(),
    )


def gaussian_potential(n: int) -> ScalarField:
    """``f = |x|^2 / 2``: with the flat metric, ``Ric_f = g`` (Gaussian soliton)."""
    return quadratic(np.eye(n))


def log_cosh_potential(m: float, c: float = 1.0) -> ScalarField:
    """``f(t) = -m log cosh(c t)`` on the line; ``Ric_f^m = -m c^2``."""
    return ScalarField(
        lambda x: -m * np.log(np.cosh(c * x[0])),
        lambda x: np.array([-m * c * np.tanh(c * x[0])]),
        lambda x: np.array([[-m * c**2 / np.cosh(c * x[0]) ** 2]]),
    )


def sine_potential(amplitude: float, frequency: float = 1.0, dim: int = 1, axis: int = 0) -> ScalarField:
    """``amplitude * sin(frequency * x_axis)``."""

    def grad(x):
        g = np.zeros(dim)
        g[axis] = amplitude * frequency * np.cos(frequency * x[axis])
        return g

    def hess(x):
        h = np.zeros((dim, dim))
        h[axis, axis] = -amplitude * frequency**2 * np.sin(frequency * x[axis])
        return h

    return ScalarField(lambda x: amplitude * np.sin(frequency * x[axis]), grad, hess)


def cosh_line(m: float = 2.0, c: float = 1.0) -> Chart:
    """The line ``dt^2`` with ``f = -m log cosh(ct)``: quasi-Einstein with ``lambda = -m c^2``."""
    return flat(1, log_cosh_potential(m, c))


def gaussian_soliton(n: int) -> Chart:
    return flat(n, gaussian_potential(n))


# ---------------------------------------------------------------- random analytic data

def random_trig_field(dim: int, rng: np.random.Generator, terms: int = 3, scale: float = 0.5) -> ScalarField:
    """Sum of random plane waves plus a random quadratic; analytic with exact jets."""
    amp = rng.normal(size=terms) * scale
    freq = rng.normal(size=(terms, dim))
    phase = rng.uniform(0, 2 * np.pi, size=terms)
    quad = quadratic(rng.normal(size=(dim, dim)) * scale, rng.normal(size=dim) * scale, rng.normal())

    def value(x):
        return float(amp @ np.sin(freq @ x + phase))

    def grad(x):
        return (amp * np.cos(freq @ x + phase)) @ freq

    def hess(x):
        w = -amp * np.sin(freq @ x + phase)
        return np.einsum("p,pi,pj->ij", w, freq, freq)

    return ScalarField(value, grad, hess) + quad


def random_analytic_chart(dim: int, seed: int = 0, terms: int = 3, amplitude: float = 0.15,
                          potential: bool = True) -> Chart:
    """A random analytic metric ``S + sum_p C_p sin(w_p.x + phi_p)`` near the origin.

    ``S`` has eigenvalues in ``[1, 2]`` and the perturbation is small enough to
    stay positive definite on the unit ball.
    """
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    base = q @ np.diag(rng.uniform(1.0, 2.0, size=dim)) @ q.T
    coef = rng.normal(size=(terms, dim, dim)) * amplitude / dim
    coef = 0.5 * (coef + coef.transpose(0, 2, 1))
    freq = rng.normal(size=(terms, dim))
    phase = rng.uniform(0, 2 * np.pi, size=terms)

    def metric(x):
        return base + np.einsum("p,pij->ij", np.sin(freq @ x + phase), coef)

    def jet(x):
        arg = freq @ x + phase
        dg = np.einsum("p,pk,pij->kij", np.cos(arg), freq, coef)
        d2g = -np.einsum("p,pl,pk,pij->lkij", np.sin(arg), freq, freq, coef)
        return metric(x), dg, d2g

    field = random_trig_field(dim, rng) if potential else None
    return Chart(dim, metric, jet, field)
