"""Fluctuation identities at an independent exponential time e_q.

Everything here is expressed through the running supremum S = sup X on
[0, e_q] and the independent gap G = S - X(e_q) ~ Exp(Phi(q)). Started from
x, the workload reflected at zero satisfies, in law,

    Y(e_q) = S + (x - G)^+,

which gives the transition law, its atom at zero and an exact sampler.

Closed-form scale functions are sums of exponentials whose leading term
exp(Phi x) cancels out of every bounded quantity below, so those paths
subtract it symbolically. Other models go through the law of S directly,
either through a defective renewal equation (no Gaussian part) or through
contour inversion of its survival transform.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import DomainError, UnsupportedModelError
from .levy_model import LevyModel, Pareto
from .quadrature import _GL_W, _GL_X
from .scale_fn import PiecewiseSpline, ScaleFunction, _solve_renewal, kink_points


def inf_law_rate(ev: ScaleFunction) -> float:
    """Rate of the exponential law of -inf X over [0, e_q]."""
    return ev.phi


# ---------------------------------------------------------------------------
# law of the supremum


class _RenewalSupremum:
    """Survival and density of S for bounded-variation models.

    Tilting W by exp(-Phi x) factors psi(s) - q = (s - Phi) g(s) with
    g(s) = c - int exp(-s y) m(y) dy and m(y) = rate * E[exp(-Phi (J - y)); J > y].
    Hence S is a geometric sum of ladder heights with density m / (c - q/Phi),
    and the survival solves c s(y) = int_y^inf m + int_0^y s(y - u) m(u) du.
    """

    def __init__(self, ev, x_max, step):
        model = ev.model
        c, phi, q = model.drift, ev.phi, ev.q
        self.atom = q / (phi * c)
        m_total = c - q / phi
        runs = []
        n = int(math.ceil(x_max / step))
        for k in (1, 2):
            h = step / k
            y = h * np.arange(n * k + 1)
            m = model.jump_rate * model.jumps.tilted_tail(y, phi)
            m_tail = m_total - np.concatenate([[0.0], np.cumsum(0.5 * h * (m[1:] + m[:-1]))])
            surv = _solve_renewal(m_tail, m, c, h)
            dens = _solve_renewal(self.atom * m, m, c, h)
            runs.append((y, surv, dens))
        (y1, s1, d1), (_, s2, d2) = runs
        surv = (4 * s2[::2] - s1) / 3
        dens = (4 * d2[::2] - d1) / 3
        self.x_max = y1[-1]
        kinks = kink_points(model.jumps, self.x_max)
        self._surv = PiecewiseSpline(y1, surv, kinks)
        self._dens = PiecewiseSpline(y1, dens, kinks)
        self._s_end = float(surv[-1])
        gamma = model.cramer_root(q)
        if gamma is not None:
            self._extend = lambda u: np.exp(-gamma * (u - self.x_max))
            self._extend_rate = lambda u: gamma * np.ones_like(u)
        elif isinstance(model.jumps, Pareto):
            # ladder heights inherit the jump density ~ y^(-a-1), so S decays like y^(-a)
            a = model.jumps.tail_index
            self._extend = lambda u: (u / self.x_max) ** (-a)
            self._extend_rate = lambda u: a / u
        else:
            self._extend = lambda u: np.zeros_like(u)
            self._extend_rate = lambda u: np.zeros_like(u)
        self.grid = y1
        self.grid_survival = surv

    def survival(self, y):
        inside = y <= self.x_max
        far = np.maximum(y, self.x_max)
        tail = self._s_end * self._extend(far)
        return np.where(inside, self._surv(np.minimum(y, self.x_max)), tail)

    def density(self, y):
        inside = y <= self.x_max
        far = np.maximum(y, self.x_max)
        tail = self._s_end * self._extend(far) * self._extend_rate(far)
        return np.where(inside, self._dens(np.minimum(y, self.x_max)), tail)


class _InvertedSupremum:
    """Survival and density of S by contour inversion (models with a Gaussian part)."""

    def __init__(self, ev):
        self.ev = ev
        self.atom = 0.0
        self._table = None

    def _transform(self, kind):
        ev = self.ev
        phi, q, psi = ev.phi, ev.q, ev.model.psi_complex

        def f(s):
            with np.errstate(invalid="ignore", over="ignore"):
                d = psi(s) - q
                d = np.where(np.isfinite(d), d, np.inf)
                lst = q * (s - phi) / (phi * d)
            return (1.0 - lst) / s if kind == "survival" else lst

        return f

    def _eval(self, kind, y):
        out = np.zeros(y.shape) if kind == "density" else np.ones(y.shape)
        pos = y > 0
        if pos.any():
            out[pos] = self.ev.invert(self._transform(kind), y[pos])
        return out

    def survival(self, y):
        return np.clip(self._eval("survival", y), 0.0, 1.0)

    def density(self, y):
        return np.maximum(self._eval("density", y), 0.0)

    def table(self):
        """Survival on a uniform grid with spline interpolants, built once."""
        if self._table is None:
            gamma = self.ev.model.cramer_root(self.ev.q)
            rate = gamma if gamma is not None else self.ev.phi
            y = np.linspace(0.0, 36.0 / rate, 6001)
            surv = self.survival(y)
            dens = self.density(y)
            self._table = (y, surv, CubicSpline(y, surv), CubicSpline(y, dens), rate)
        return self._table

    def fast(self):
        """Spline evaluators used inside the sampler's Newton iteration."""
        y, _, s_spl, d_spl, rate = self.table()
        end = y[-1]
        s_end = float(s_spl(end))

        def surv(u):
            return np.where(u <= end, s_spl(np.minimum(u, end)), s_end * np.exp(-rate * (u - end)))

        def dens(u):
            return np.where(u <= end, d_spl(np.minimum(u, end)), rate * s_end * np.exp(-rate * (u - end)))

        return surv, dens


class SupremumLaw:
    """Law of S = sup of X over [0, e_q]: an atom at zero plus a density.

    ``survival(y) = P(S > y)`` is computed without forming Z - (q/Phi) W,
    whose two terms both grow like exp(Phi y).
    """

    def __init__(self, ev: ScaleFunction, renewal_step=0.005, renewal_span=30.0):
        model = ev.model
        if not model.regular:
            raise UnsupportedModelError(
                "law of the supremum needs a C^1 scale function (Gaussian part or "
                "absolutely continuous jumps)", code="fluctuation.unsupported_model")
        self.ev = ev
        self.q = ev.q
        self.phi = ev.phi
        self.atom = self.q / self.phi * ev.w0
        self._backend = None
        if ev.closed_form:
            a, r = ev.coefs, ev.rates
            # the Phi term drops out of both survival and density
            self._surv_coefs = self.q * a[1:] * (1.0 / r[1:] - 1.0 / self.phi)
            self._dens_coefs = self.q * a[1:] * (r[1:] / self.phi - 1.0)
            self._rates = r[1:]
        elif model.sigma == 0:
            self._backend = _RenewalSupremum(ev, renewal_span / self.phi, renewal_step)
        else:
            self._backend = _InvertedSupremum(ev)

    @property
    def closed_form(self):
        return self._backend is None

    def _apply(self, y, fn):
        y = np.asarray(y, dtype=float)
        ys = np.atleast_1d(y)
        out = fn(ys)
        return out.reshape(y.shape) if y.ndim else float(out[0])

    def survival(self, y):
        """P(S > y); equals 1 for y < 0."""
        def fn(ys):
            yp = np.maximum(ys, 0.0)
            if self.closed_form:
                val = (self._surv_coefs * np.exp(np.multiply.outer(yp, self._rates))).sum(axis=1)
            else:
                val = self._backend.survival(yp)
            return np.where(ys < 0, 1.0, val)
        return self._apply(y, fn)

    def cdf(self, y):
        return 1.0 - self.survival(y)

    def density(self, y):
        """Density of the absolutely continuous part on y > 0 (zero for y <= 0)."""
        def fn(ys):
            yp = np.maximum(ys, 0.0)
            if self.closed_form:
                val = (self._dens_coefs * np.exp(np.multiply.outer(yp, self._rates))).sum(axis=1)
            else:
                val = self._backend.density(yp)
            return np.where(ys <= 0, 0.0, val)
        return self._apply(y, fn)

    def laplace(self, s):
        """E exp(-s S) = q (s - Phi) / (Phi (psi(s) - q)), continuous at s = Phi."""
        s = float(s)
        if s < 0:
            raise DomainError("transform of S needs s >= 0", code="fluctuation.domain")
        if s == 0:
            return 1.0
        if abs(s - self.phi) < 1e-7 * max(1.0, self.phi):
            return self.q / (self.phi * self.ev.psi_prime_phi)
        return self.q * (s - self.phi) / (self.phi * (float(self.ev.model.psi(s)) - self.q))

    def mean(self):
        """E S = 1/Phi - psi'(0)/q, minus the derivative of the transform at zero."""
        return 1.0 / self.phi - self.ev.model.psi_prime0 / self.q

    def sample(self, rng, size):
        """Inverse-CDF draws; the atom is hit when U falls above P(S > 0)."""
        u = rng.random(size)
        out = np.zeros(size)
        pos = u < 1.0 - self.atom
        if not pos.any():
            return out
        up = u[pos]
        if self.closed_form and len(self._rates) == 1:
            out[pos] = np.log(up / self._surv_coefs[0]) / self._rates[0]
        else:
            out[pos] = self._invert_survival(up)
        return out

    def _invert_survival(self, u, tol=1e-10):
        """Solve P(S > y) = u by Newton steps on the log-survival, kept inside a bracket."""
        if self.closed_form:
            surv_fn, dens_fn = self.survival, self.density
            y = np.maximum(-np.log(u) / -self._rates.max(), 0.0)
        else:
            if isinstance(self._backend, _RenewalSupremum):
                surv_fn, dens_fn = self._backend.survival, self._backend.density
                grid, surv = self._backend.grid, self._backend.grid_survival
            else:
                surv_fn, dens_fn = self._backend.fast()
                grid, surv = self._backend.table()[:2]
            level = np.maximum.accumulate(-np.log(np.maximum(surv, 1e-300)))
            level, first = np.unique(level, return_index=True)
            inv = PchipInterpolator(level, grid[first], extrapolate=True)
            y = np.maximum(inv(-np.log(u)), 0.0)
        lo = np.zeros_like(y)
        hi = np.full_like(y, np.inf)
        for _ in range(100):
            s = np.maximum(surv_fn(y), 1e-300)
            f = dens_fn(y)
            g = np.log(s) - np.log(u)  # decreasing in y
            hi = np.where(g < 0, np.minimum(hi, y), hi)
            lo = np.where(g >= 0, np.maximum(lo, y), lo)
            with np.errstate(divide="ignore", invalid="ignore"):
                new = y + g * s / f
            bad = ~np.isfinite(new) | (new <= lo) | (new >= hi)
            mid = np.where(np.isfinite(hi), 0.5 * (lo + hi), 2.0 * lo + 1.0)
            new = np.where(bad, mid, new)
            if np.all(np.abs(new - y) <= tol * np.maximum(1.0, y)):
                return new
            y = new
        return y


def sup_law(ev: ScaleFunction) -> SupremumLaw:
    law = getattr(ev, "_sup_law", None)
    if law is None:
        law = SupremumLaw(ev)
        ev._sup_law = law
    return law


# ---------------------------------------------------------------------------
# resolvent and transition law


def _gl_segments(lo, hi, f, panels=2):
    """int_lo^hi f for vectors lo, hi using ``panels`` equal Gauss-Legendre panels."""
    total = np.zeros(np.shape(lo))
    width = (hi - lo) / panels
    for k in range(panels):
        a = lo + k * width
        mid = a + 0.5 * width
        nodes = mid[:, None] + 0.5 * width[:, None] * _GL_X[None, :]
        total += 0.5 * width * (f(nodes) @ _GL_W)
    return total


def _conv_term(law, x, y):
    """Phi * int_{(y-x)^+}^{y} exp(-Phi (x - y + u)) f_S(u) du, vectorised in y."""
    phi = law.phi
    lo = np.maximum(y - x, 0.0)

    def integrand(u):
        return np.exp(-phi * (x - y[:, None] + u)) * law.density(u)

    return phi * _gl_segments(lo, y, integrand, panels=4)


def resolvent(ev: ScaleFunction, x, y):
    """q-potential density r(x, y) = exp(-Phi x) W(y) - W(y - x) of X killed below zero."""
    if x < 0:
        raise DomainError("resolvent needs x >= 0", code="fluctuation.domain")
    y = np.asarray(y, dtype=float)
    ys = np.atleast_1d(y)
    if np.any(ys <= 0):
        raise DomainError("resolvent needs y > 0", code="fluctuation.domain")
    phi = ev.phi
    if ev.closed_form:
        a, r = ev.coefs, ev.rates
        below = math.exp(-phi * x) * ev.w(np.minimum(ys, x))
        above = (a[1:] * np.exp(np.multiply.outer(ys, r[1:]))
                 * (math.exp(-phi * x) - np.exp(-r[1:] * x))).sum(axis=1)
        out = np.where(ys < x, below, above)
    else:
        law = sup_law(ev)
        out = _conv_term(law, x, ys) / ev.q
        out = out + np.where(ys < x, (phi / ev.q) * law.atom * np.exp(-phi * (x - ys)), 0.0)
    return out.reshape(y.shape) if y.ndim else float(out[0])


def resolvent_integral_form(ev: ScaleFunction, x, y):
    """Quadrature of int_{[(x-y)^+, x]} exp(-Phi z) (W'(y-x+z) - Phi W(y-x+z)) dz.

    The integrand is the derivative of exp(-Phi z) W(y - x + z) in z, so the
    result equals ``resolvent`` once the atom of W at zero is accounted for;
    kept as an independent check on the closed form.
    """
    phi = ev.phi
    lo = max(x - y, 0.0)

    def f(z):
        u = y - x + z
        return math.exp(-phi * z) * (ev.w_prime(u) - phi * ev.w(u))

    val, _ = integrate.quad(f, lo, x, epsabs=1e-13, epsrel=1e-12, limit=200)
    if y < x:
        # the lower endpoint sits at u = 0, where W jumps from 0 to W(0)
        val += math.exp(-phi * lo) * ev.w0
    return val


class TransitionLaw:
    """Law of the reflected workload at e_q given the start x.

    With ``strict_paper=True`` the atom is exp(-Phi x) W(0), without the
    q/Phi factor; that version does not integrate to one unless q = Phi.
    """

    def __init__(self, ev: ScaleFunction, strict_paper=False):
        self.ev = ev
        self.q = ev.q
        self.phi = ev.phi
        self.strict_paper = strict_paper
        self.sup = sup_law(ev)

    def atom(self, x):
        coef = self.ev.w0 if self.strict_paper else self.sup.atom
        return coef * np.exp(-self.phi * np.asarray(x, dtype=float))

    def density(self, x, y):
        """h(x, y) = (q/Phi) exp(-Phi x) W'(y) - q W(y - x) for y > 0."""
        if x < 0:
            raise DomainError("transition needs x >= 0", code="fluctuation.domain")
        y = np.asarray(y, dtype=float)
        ys = np.atleast_1d(y)
        ev, q, phi = self.ev, self.q, self.phi
        if ev.closed_form:
            a, r = ev.coefs, ev.rates
            e = math.exp(-phi * x)
            below = e * (q / phi) * (a * r * np.exp(np.multiply.outer(np.minimum(ys, x), r))).sum(axis=1)
            above = (q * a[1:] * np.exp(np.multiply.outer(ys, r[1:]))
                     * ((r[1:] / phi) * e - np.exp(-r[1:] * x))).sum(axis=1)
            out = np.where(ys < x, below, above)
        else:
            law = self.sup
            out = math.exp(-phi * x) * law.density(ys) + _conv_term(law, x, ys)
            out = out + np.where(ys < x, law.atom * phi * np.exp(-phi * (x - ys)), 0.0)
        out = np.where(ys <= 0, 0.0, out)
        return out.reshape(y.shape) if y.ndim else float(out[0])

    def survival(self, x, y):
        """P_x(Y(e_q) > y) = Z(y - x) - (q/Phi) exp(-Phi x) W(y), for y >= 0."""
        y = np.asarray(y, dtype=float)
        ys = np.atleast_1d(y)
        ev, q, phi = self.ev, self.q, self.phi
        e = math.exp(-phi * x)
        if ev.closed_form:
            a, r = ev.coefs, ev.rates
            below = 1.0 - (q / phi) * e * ev.w(np.clip(ys, 0.0, x))
            above = (q * a[1:] * (np.exp(np.multiply.outer(ys - x, r[1:])) / r[1:]
                                  - e * np.exp(np.multiply.outer(ys, r[1:])) / phi)).sum(axis=1)
            out = np.where(ys < x, below, above)
        else:
            law = self.sup
            # Y = S + (x - G)^+ with G ~ Exp(Phi)
            lo = np.minimum(np.maximum(x - ys, 0.0), x)
            certain = 1.0 - np.exp(-phi * lo)

            def integrand(g):
                return phi * np.exp(-phi * g) * law.survival(ys[:, None] - x + g)

            mixed = _gl_segments(lo, np.full_like(ys, x), integrand, panels=4)
            out = e * law.survival(ys) + certain + mixed
        out = np.where(ys < 0, 1.0, out)
        return out.reshape(y.shape) if y.ndim else float(out[0])

    def cdf(self, x, y):
        return 1.0 - self.survival(x, y)

    def laplace(self, x, s):
        """E_x exp(-s Y(e_q)), vectorised in x; s >= 0.

        Uses E exp(-s (x - G)^+) = (Phi exp(-s x) - s exp(-Phi x)) / (Phi - s)
        together with the transform of S. In strict-paper mode the atom term
        carries the printed coefficient, so the value at s = 0 differs from 1.
        """
        x = np.asarray(x, dtype=float)
        phi = self.phi
        if abs(s - phi) < 1e-7 * max(1.0, phi):
            gap = np.exp(-phi * x) * (1.0 + phi * x)
        else:
            gap = (phi * np.exp(-s * x) - s * np.exp(-phi * x)) / (phi - s)
        out = self.sup.laplace(s) * gap
        if self.strict_paper:
            out = out + (self.ev.w0 - self.sup.atom) * np.exp(-phi * x)
        return out

    def total_mass(self, x):
        """atom(x) plus the integral of h(x, .), by panel quadrature and the exact tail."""
        gamma = self.ev.model.cramer_root(self.q)
        rate = gamma if gamma is not None else self.phi
        pieces = [np.geomspace(1e-7, 1.0, 15), 1.0 + np.arange(1, 41) * (1.0 / rate)]
        if x > 0:
            pieces += [x + np.geomspace(1e-7, 1.0, 15), x - np.geomspace(1e-7, x, 15)]
        jumps = self.ev.model.jumps
        if isinstance(jumps, Pareto):
            # the density of S has kinks at multiples of the jump scale
            kinks = jumps.scale * np.arange(1, 21)
            pieces += [kinks, kinks + x]
        breaks = np.unique(np.concatenate([[0.0]] + pieces))
        breaks = breaks[breaks >= 0]
        body = 0.0
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _GL_X
            body += 0.5 * (hi - lo) * float(np.dot(_GL_W, self.density(x, nodes)))
        return float(self.atom(x)) + body + float(self.survival(x, breaks[-1]))


def transition(ev: ScaleFunction, strict_paper=False) -> TransitionLaw:
    return TransitionLaw(ev, strict_paper=strict_paper)


# ---------------------------------------------------------------------------
# exact path simulation at e_q


def _segment_cumsum(values, starts):
    """Cumulative sums restarted at each index in ``starts`` (which must include 0)."""
    total = np.cumsum(values)
    offsets = np.zeros(len(values))
    offsets[starts[1:]] = total[starts[1:] - 1]
    owner = np.zeros(len(values), dtype=np.int64)
    owner[starts] = starts
    return total - offsets[np.maximum.accumulate(owner)]


def simulate_extremes(model: LevyModel, q, size, rng, chunk=250_000):
    """Exact draws of (X(e_q), sup, inf) over [0, e_q].

    Supports models without a Gaussian part (event by event) and Brownian
    motion with drift (endpoint first, then the bridge extremes). Returns a
    dict of arrays with keys ``end``, ``sup`` and ``inf``.
    """
    if model.sigma > 0 and model.has_jumps:
        raise UnsupportedModelError("exact path simulation covers Brownian motion or "
                                    "models without a Gaussian part", code="fluctuation.unsupported_model")
    ends, sups, infs = [], [], []
    done = 0
    while done < size:
        n = min(chunk, size - done)
        if model.has_jumps:
            e, s, i = _cpp_extremes(model, q, n, rng)
        else:
            e, s, i = _bm_extremes(model, q, n, rng)
        ends.append(e)
        sups.append(s)
        infs.append(i)
        done += n
    return {"end": np.concatenate(ends), "sup": np.concatenate(sups), "inf": np.concatenate(infs)}


def _bm_extremes(model, q, n, rng):
    t = rng.exponential(1.0 / q, n)
    var = model.sigma ** 2 * t
    end = np.sqrt(var) * rng.standard_normal(n) - model.drift * t
    # extremes of the bridge from 0 to `end`: P(min < m) = exp(-2 m (m - end) / var)
    lo = 0.5 * (end - np.sqrt(end * end - 2.0 * var * np.log(rng.random(n))))
    hi = 0.5 * (end + np.sqrt(end * end - 2.0 * var * np.log(rng.random(n))))
    return end, hi, lo


def _cpp_extremes(model, q, n, rng):
    lam, c = model.jump_rate, model.drift
    total = lam + q
    # jumps before the timer rings; every event (jump or ring) waits Exp(lam + q)
    k = rng.geometric(q / total, n) - 1
    events = k + 1
    starts = np.concatenate([[0], np.cumsum(events)[:-1]])
    m = int(events.sum())
    waits = rng.exponential(1.0 / total, m)
    jumps = np.zeros(m)
    is_jump = np.ones(m, dtype=bool)
    is_jump[starts + events - 1] = False
    jumps[is_jump] = model.jumps.sample(rng, int(is_jump.sum()))
    step = jumps - c * waits
    after = _segment_cumsum(step, starts)
    before = after - jumps
    last = starts + events - 1
    end = after[last]
    sup = np.maximum(np.maximum.reduceat(after, starts), 0.0)
    inf = np.minimum(np.minimum.reduceat(before, starts), 0.0)
    return end, sup, inf


def simulate_reflected(model: LevyModel, q, x, size, rng):
    """Exact draws of the workload at e_q started from x (reflection at zero)."""
    ext = simulate_extremes(model, q, size, rng)
    return x + ext["end"] + np.maximum(0.0, -x - ext["inf"])


# ---------------------------------------------------------------------------
# one-step sampler


def step_sample(ev: ScaleFunction, z, rng, size=None, method=None):
    """Draw Y(e_q) given Y(0) = z as S + (z - G)^+.

    ``z`` may be an array, in which case one draw per entry is returned.
    ``method`` is ``"inverse"`` (inverse CDF of S) or ``"path"`` (exact
    event-by-event simulation of S); by default models without a Gaussian
    part and without a closed form use the path method.
    """
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise DomainError("step_sample needs z >= 0", code="fluctuation.domain")
    n = size if size is not None else (z_arr.size if z_arr.ndim else 1)
    s = sample_supremum(ev, rng, n, method)
    g = rng.exponential(1.0 / ev.phi, n)
    out = s + np.maximum(z_arr - g, 0.0)
    if size is None and z_arr.ndim == 0:
        return float(out[0])
    return out


def sample_supremum(ev: ScaleFunction, rng, n, method=None):
    model = ev.model
    if method is None:
        method = "path" if (model.sigma == 0 and not ev.closed_form) else "inverse"
    if method == "path":
        return simulate_extremes(model, ev.q, n, rng)["sup"]
    if method == "inverse":
        return sup_law(ev).sample(rng, n)
    raise DomainError(f"unknown sampling method {method!r}", code="fluctuation.domain")


# ---------------------------------------------------------------------------
# goodness of fit of sampled draws against the analytic laws


def ks_distance(draws, cdf, atom=0.0):
    """Kolmogorov distance between the empirical law of ``draws`` and a law with
    an atom at zero plus a continuous part with distribution function ``cdf``."""
    d = np.sort(np.asarray(draws, dtype=float))
    n = d.size
    values, counts = np.unique(d, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    f = np.asarray(cdf(values), dtype=float)
    f_left = f.copy()
    if values[0] == 0.0:
        f_left[0] = 0.0
        f[0] = atom
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f_left))))


def transition_chi_square(law: TransitionLaw, x, draws, bins=50):
    """Pearson test of draws from Y(e_q) | Y(0) = x against the analytic law.

    The positive part is cut into ``bins`` cells of equal analytic
    probability; the atom at zero, when present, is one extra cell.
    """
    draws = np.sort(np.asarray(draws, dtype=float))
    n = draws.size
    atom = float(law.atom(x))
    ys = np.concatenate([[0.0], np.geomspace(1e-6, 1.5 * float(draws[-1]) + 1.0, 4000)])
    cdf = np.maximum.accumulate(law.cdf(x, ys))
    cdf_u, keep = np.unique(cdf, return_index=True)
    levels = atom + (1.0 - atom) * np.arange(1, bins) / bins
    edges = np.interp(levels, cdf_u, ys[keep])
    probs = np.diff(np.concatenate([[atom], law.cdf(x, edges), [1.0]]))
    n_atom = int(np.count_nonzero(draws == 0.0))
    counts = np.diff(np.concatenate([[n_atom], np.searchsorted(draws, edges, side="right"), [n]]))
    observed, expected = counts, probs * n
    if atom > 0:
        observed = np.concatenate([[n_atom], observed])
        expected = np.concatenate([[atom * n], expected])
    expected = expected * observed.sum() / expected.sum()
    res = stats.chisquare(observed, expected)
    return {"chi2": float(res.statistic), "p_value": float(res.pvalue), "atom": atom,
            "atom_frequency": n_atom / n, "edges": edges, "observed": counts, "expected": probs * n}
