"""q-scale functions W, W' and Z of the dual (spectrally negative) process.

Two models have W as a finite sum of exponentials: Brownian motion with drift
and compound Poisson input with exponential jumps. Other models with a
Gaussian part go through contour inversion of the tilted transform

    int_0^inf exp(-s x) exp(-Phi x) W(x) dx = 1 / (psi(s + Phi) - q),

which is analytic for Re s > 0 apart from the simple pole at s = 0.
Bounded-variation models with general jumps solve the renewal equation

    c W(x) = 1 + int_0^x W(x - y) (q + rate P(J > y)) dy

instead: their transforms contain exp(-s * const) factors that grow on the
left part of any Talbot contour, and the contour sum stalls near 1e-4.
"""
from __future__ import annotations

import enum
import math

import numpy as np
from scipy.interpolate import CubicSpline

from . import talbot
from .errors import DomainError, UnsupportedModelError
from .levy_model import Exponential, LevyModel
from .quadrature import decay_breaks, integrate_panels


class Method(str, enum.Enum):
    CLOSED_FORM_BROWNIAN = "closed-form-brownian"
    CLOSED_FORM_CPP_EXP = "closed-form-cpp-exp"
    NUMERIC_INVERSION = "numeric-inversion"
    RENEWAL_EQUATION = "renewal-equation"


def default_method(model: LevyModel) -> Method:
    if not model.has_jumps:
        return Method.CLOSED_FORM_BROWNIAN
    if model.sigma == 0 and isinstance(model.jumps, Exponential):
        return Method.CLOSED_FORM_CPP_EXP
    if model.sigma == 0:
        return Method.RENEWAL_EQUATION
    return Method.NUMERIC_INVERSION


def _solve_renewal(forcing, kernel, c, h):
    """Trapezoid solution of c u(x) = forcing(x) + int_0^x u(x - y) kernel(y) dy."""
    n = len(forcing)
    u = np.empty(n)
    u[0] = forcing[0] / c
    denom = c - 0.5 * h * kernel[0]
    for i in range(1, n):
        conv = np.dot(kernel[1:i], u[i - 1:0:-1]) + 0.5 * kernel[i] * u[0]
        u[i] = (forcing[i] + h * conv) / denom
    return u


def kink_points(jumps, x_max):
    """Where renewal solutions lose smoothness: multiples of the lower end of the jump support."""
    start = getattr(jumps, "scale", None) or getattr(jumps, "size", None)
    if start is None:
        return np.zeros(0)
    pts = start * np.arange(1, 6)
    return pts[pts < x_max]


class PiecewiseSpline:
    """Cubic splines on the cells between given break points, so derivative jumps stay sharp."""

    def __init__(self, x, y, breaks=()):
        idx = sorted({int(np.argmin(np.abs(x - b))) for b in breaks} - {0, len(x) - 1})
        self.cuts = x[idx] if idx else np.zeros(0)
        bounds = [0] + idx + [len(x) - 1]
        self.parts = [CubicSpline(x[a:b + 1], y[a:b + 1]) for a, b in zip(bounds[:-1], bounds[1:])]

    def __call__(self, t, nu=0):
        t = np.asarray(t, dtype=float)
        if len(self.parts) == 1:
            return self.parts[0](t, nu)
        which = np.searchsorted(self.cuts, t, side="right")
        out = np.empty(t.shape)
        for k, part in enumerate(self.parts):
            sel = which == k
            if np.any(sel):
                out[sel] = part(t[sel], nu)
        return out


class _RenewalTables:
    """Tilted W, W' and int_0^x W on a uniform grid, Richardson-extrapolated in the step."""

    def __init__(self, model, q, phi, x_max, step):
        c, lam, jumps = model.drift, model.jump_rate, model.jumps
        w0 = 1.0 / c
        tables = []
        n = int(math.ceil(x_max / step))
        for k in (1, 2):
            h = step / k
            x = h * np.arange(n * k + 1)
            k = np.exp(-phi * x) * (q + lam * jumps.survival(x))
            u = _solve_renewal(np.exp(-phi * x), k, c, h)
            v = _solve_renewal(w0 * k, k, c, h)
            # e^{-phi x} int_0^x W = e^{-phi x} int_0^x u(y) e^{phi y} dy
            g = u * np.exp(phi * x)
            cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (g[1:] + g[:-1]))]) * np.exp(-phi * x)
            tables.append((x, u, v, cum))
        (x1, u1, v1, c1), (_, u2, v2, c2) = tables
        self.x = x1
        self.x_max = x1[-1]
        kinks = kink_points(jumps, self.x_max)
        self._splines = [PiecewiseSpline(x1, (4 * fine[::2] - coarse) / 3, kinks)
                         for coarse, fine in ((u1, u2), (v1, v2), (c1, c2))]

    def __call__(self, which, x):
        """which: 0 -> tilted W, 1 -> tilted W', 2 -> tilted integral of W."""
        return self._splines[which](np.minimum(x, self.x_max))


class ScaleFunction:
    """W^(q), W^(q)' and Z^(q) for one (model, q) pair.

    Closed-form evaluators keep W as ``sum_i coefs[i] * exp(rates[i] x)`` with
    ``rates[0] == Phi(q)``; callers use that representation to cancel the
    dominant exponential exactly in tail quantities.
    """

    def __init__(self, model: LevyModel, q: float, method=None, n_nodes: int = 32,
                 renewal_step: float = 0.005, renewal_span: float = 30.0):
        if not q > 0:
            raise DomainError(f"q must be positive, got {q}", code="scale_fn.domain")
        self.model = model
        self.q = float(q)
        self.phi = model.phi(self.q)
        self.method = Method(method) if method is not None else default_method(model)
        self.n_nodes = n_nodes
        self.w0 = 1.0 / model.drift if model.bounded_variation else 0.0
        self.coefs = self.rates = None
        self._tables = None
        if self.method is Method.RENEWAL_EQUATION:
            if model.sigma != 0 or not model.has_jumps:
                raise UnsupportedModelError("renewal-equation method needs sigma = 0 and jumps",
                                            code="scale_fn.unsupported")
            self._tables = _RenewalTables(model, self.q, self.phi, renewal_span / self.phi,
                                          renewal_step)
        if self.method is Method.CLOSED_FORM_BROWNIAN:
            if model.has_jumps:
                raise UnsupportedModelError("Brownian closed form needs a model without jumps",
                                            code="scale_fn.unsupported")
            s2, mu = model.sigma ** 2, model.drift
            delta = math.sqrt(mu * mu + 2 * self.q * s2) / s2
            omega = mu / s2
            self.coefs = np.array([1.0, -1.0]) / (s2 * delta)
            self.rates = np.array([delta - omega, -(delta + omega)])
        elif self.method is Method.CLOSED_FORM_CPP_EXP:
            if model.sigma != 0 or not isinstance(model.jumps, Exponential):
                raise UnsupportedModelError(
                    "compound Poisson closed form needs sigma = 0 and exponential jumps",
                    code="scale_fn.unsupported")
            p, lam, mu, q = model.drift, model.jump_rate, model.jumps.rate, self.q
            b = q + lam - mu * p
            disc = math.sqrt(b * b + 4 * p * q * mu)
            q_plus, q_minus = (b + disc) / (2 * p), (b - disc) / (2 * p)
            a_plus = (mu + q_plus) / (q_plus - q_minus)
            a_minus = (mu + q_minus) / (q_plus - q_minus)
            self.coefs = np.array([a_plus, -a_minus]) / p
            self.rates = np.array([q_plus, q_minus])
        self._psi_prime_phi = float(model.psi_prime(self.phi))

    @property
    def closed_form(self):
        return self.coefs is not None

    @property
    def psi_prime_phi(self):
        return self._psi_prime_phi

    def _tilted_inverse(self, transform, x):
        phi, q, psi = self.phi, self.q, self.model.psi_complex

        def tilted(s):
            with np.errstate(invalid="ignore", over="ignore"):
                d = psi(s + phi) - q
            # heavy-tailed jump transforms overflow far left on the contour, where e^{st} ~ 0
            d = np.where(np.isfinite(d), d, np.inf)
            return transform(s, d)

        return talbot.invert(tilted, x, self.n_nodes)

    def invert(self, transform, x):
        """Contour inversion of an arbitrary transform at x > 0."""
        return talbot.invert(transform, x, self.n_nodes)

    # -- W ----------------------------------------------------------------

    def w_tilted(self, x):
        """exp(-Phi x) W(x) for x >= 0 (bounded, tends to 1/psi'(Phi))."""
        x = np.asarray(x, dtype=float)
        if self.closed_form:
            out = (self.coefs[None, :] * np.exp(np.multiply.outer(np.atleast_1d(x), self.rates - self.phi))).sum(axis=1)
        elif self._tables is not None:
            out = self._tables(0, np.maximum(np.atleast_1d(x), 0.0))
        else:
            xs = np.atleast_1d(x)
            out = np.full(xs.shape, self.w0)
            pos = xs > 0
            if pos.any():
                out[pos] = self._tilted_inverse(lambda s, d: 1.0 / d, xs[pos])
        out = np.where(np.atleast_1d(x) < 0, 0.0, out)
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def w(self, x):
        """W^(q)(x); zero for x < 0."""
        x = np.asarray(x, dtype=float)
        if self.closed_form:
            xs = np.atleast_1d(x)
            out = (self.coefs[None, :] * np.exp(np.multiply.outer(np.maximum(xs, 0.0), self.rates))).sum(axis=1)
            out = np.where(xs < 0, 0.0, out)
            return out.reshape(x.shape) if x.ndim else float(out[0])
        return self.w_tilted(x) * np.exp(self.phi * np.maximum(x, 0.0))

    def w_prime(self, x):
        """Derivative of W on x > 0."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("w_prime is only defined for x > 0", code="scale_fn.domain")
        xs = np.atleast_1d(x)
        if self.closed_form:
            out = (self.coefs * self.rates * np.exp(np.multiply.outer(xs, self.rates))).sum(axis=1)
        elif self._tables is not None:
            out = self._tables(1, xs) * np.exp(self.phi * xs)
        else:
            w0 = self.w0
            out = self._tilted_inverse(lambda s, d: (s + self.phi) / d - w0, xs) * np.exp(self.phi * xs)
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def z(self, x):
        """Z^(q)(x) = 1 + q int_0^x W."""
        x = np.asarray(x, dtype=float)
        xs = np.atleast_1d(x)
        out = np.ones(xs.shape)
        pos = xs > 0
        if pos.any():
            xp = xs[pos]
            if self.closed_form:
                terms = self.coefs * np.expm1(np.multiply.outer(xp, self.rates)) / self.rates
                out[pos] = 1.0 + self.q * terms.sum(axis=1)
            elif self._tables is not None:
                out[pos] = 1.0 + self.q * self._tables(2, xp) * np.exp(self.phi * xp)
            else:
                phi = self.phi
                tilted = self._tilted_inverse(lambda s, d: 1.0 / ((s + phi) * d), xp)
                out[pos] = 1.0 + self.q * tilted * np.exp(phi * xp)
        return out.reshape(x.shape) if x.ndim else float(out[0])

    # -- checks -----------------------------------------------------------

    def laplace_transform(self, theta):
        """int_0^inf exp(-theta y) W(y) dy by quadrature plus an asymptotic tail."""
        gap = theta - self.phi
        if not gap > 0:
            raise DomainError(f"transform of W diverges for theta <= Phi(q) = {self.phi}",
                              code="scale_fn.domain")
        breaks = decay_breaks(gap, span=37.0)
        end = breaks[-1]
        body = integrate_panels(lambda y: np.exp(-gap * y) * self.w_tilted(y), breaks)
        tail = math.exp(-gap * end) / (gap * self._psi_prime_phi)
        return body + tail

    def laplace_residual(self, theta):
        """Relative residual of int exp(-theta y) W(y) dy = 1/(psi(theta) - q)."""
        target = float(self.model.psi(theta)) - self.q
        return abs(self.laplace_transform(theta) * target - 1.0)

    def describe(self):
        return {"method": self.method.value, "q": self.q, "phi": self.phi, "w0": self.w0,
                "nodes": self.n_nodes}
