"""Spectrally positive Lévy input: Laplace exponent of the dual and its inverse.

The input is X(t) = sigma*B(t) - drift*t + (compound Poisson jumps), so the
dual -X is spectrally negative and

    psi(theta) = log E exp(-theta X(1))
               = drift*theta + sigma^2 theta^2 / 2 - rate*(1 - E exp(-theta J)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import mpmath
import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError, ModelError


@dataclass(frozen=True)
class Exponential:
    """Exponential jump sizes with the given rate (mean 1/rate)."""

    rate: float

    kind = "exponential"
    lattice = False
    absolutely_continuous = True

    def __post_init__(self):
        if not self.rate > 0:
            raise ModelError(f"exponential jump rate must be positive, got {self.rate}")

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def mgf_bound(self):
        """Infimum of theta for which E exp(-theta J) is finite."""
        return -self.rate

    def laplace(self, theta):
        return self.rate / (self.rate + theta)

    def laplace_deriv(self, theta):
        """E[J exp(-theta J)] = -d/dtheta E exp(-theta J)."""
        return self.rate / (self.rate + theta) ** 2

    def survival(self, u):
        return np.exp(-self.rate * np.maximum(u, 0.0))

    def tilted_tail(self, y, theta):
        """E[exp(-theta (J - y)); J > y] for y >= 0."""
        return np.exp(-self.rate * np.asarray(y, dtype=float)) * self.rate / (self.rate + theta)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def to_dict(self):
        return {"type": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Pareto:
    """Pareto(tail_index, scale): P(J > u) = (scale/u)^tail_index for u >= scale."""

    tail_index: float
    scale: float = 1.0

    kind = "pareto"
    lattice = False
    absolutely_continuous = True
    mgf_bound = 0.0

    def __post_init__(self):
        if not self.tail_index > 1:
            raise ModelError(f"Pareto tail index must exceed 1 (finite mean), got {self.tail_index}")
        if not self.scale > 0:
            raise ModelError(f"Pareto scale must be positive, got {self.scale}")

    @property
    def mean(self):
        a = self.tail_index
        return a * self.scale / (a - 1.0)

    def _tail_integral(self, theta):
        # int_{x_m}^inf exp(-theta x) x^{-a} dx
        a, xm = self.tail_index, self.scale
        if theta == 0.0:
            return xm ** (1.0 - a) / (a - 1.0)
        val, _ = integrate.quad(lambda x: math.exp(-theta * x) * x ** (-a), xm, np.inf,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        return val

    def _laplace_complex(self, s):
        a, xm = self.tail_index, self.scale
        z = mpmath.mpc(s) * xm
        if z == 0:
            return 1.0 + 0.0j
        return complex(a * z ** a * mpmath.gammainc(-a, z))

    def laplace(self, theta):
        theta_arr = np.asarray(theta)
        if np.iscomplexobj(theta_arr):
            out = np.array([self._laplace_complex(complex(s)) for s in theta_arr.ravel()])
            return out.reshape(theta_arr.shape) if theta_arr.ndim else out[0]
        xm = self.scale
        # survival form: E e^{-tJ} = e^{-t x_m} - t x_m^a int_{x_m}^inf e^{-tx} x^{-a} dx
        vals = [math.exp(-t * xm) - t * xm ** self.tail_index * self._tail_integral(t)
                for t in np.atleast_1d(theta_arr).astype(float)]
        return np.array(vals).reshape(theta_arr.shape) if theta_arr.ndim else vals[0]

    def laplace_deriv(self, theta):
        theta_arr = np.asarray(theta, dtype=float)
        coef = self.tail_index * self.scale ** self.tail_index
        vals = [coef * self._tail_integral(t) for t in np.atleast_1d(theta_arr)]
        return np.array(vals).reshape(theta_arr.shape) if theta_arr.ndim else vals[0]

    def survival(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u < self.scale, 1.0, (self.scale / np.maximum(u, self.scale)) ** self.tail_index)

    def tilted_tail(self, y, theta):
        """E[exp(-theta (J - y)); J > y] for y >= 0 and theta > 0.

        Above the scale this is a (x_m theta)^a e^z Gamma(-a, z) with z = theta y.
        The incomplete gamma of negative order comes from the downward
        recurrence e^z Gamma(s, z) = (e^z Gamma(s+1, z) - z^s) / s.
        """
        a, xm = self.tail_index, self.scale
        y = np.asarray(y, dtype=float)
        z = theta * np.maximum(y, xm)
        n = math.ceil(a)
        base = n - a  # order of the starting point, in [0, 1)
        with np.errstate(over="ignore"):
            if base == 0.0:
                g = special.exp1(z) * np.exp(z)
            else:
                g = special.gammaincc(base, z) * special.gamma(base) * np.exp(z)
        # large z: asymptotic series of e^z Gamma(base, z)
        big = z > 600
        if np.any(big):
            zb = z[big] if z.ndim else z
            g = np.where(big, zb ** (base - 1) * (1 + (base - 1) / zb + (base - 1) * (base - 2) / zb ** 2), g)
        s = base
        for _ in range(n):
            s -= 1.0
            g = (g - z ** s) / s
        above = a * (xm * theta) ** a * g
        below = np.exp(theta * y) * self.laplace(theta)
        return np.where(y < xm, below, above)

    def sample(self, rng, size):
        return self.scale * rng.random(size) ** (-1.0 / self.tail_index)

    def to_dict(self):
        return {"type": self.kind, "tail_index": self.tail_index, "scale": self.scale}


@dataclass(frozen=True)
class Deterministic:
    """Jumps of constant size. Violates the scale-function regularity condition."""

    size: float

    kind = "deterministic"
    lattice = True
    absolutely_continuous = False
    mgf_bound = -np.inf

    def __post_init__(self):
        if not self.size > 0:
            raise ModelError(f"deterministic jump size must be positive, got {self.size}")

    @property
    def mean(self):
        return self.size

    def laplace(self, theta):
        return np.exp(-self.size * np.asarray(theta))

    def laplace_deriv(self, theta):
        return self.size * np.exp(-self.size * np.asarray(theta))

    def survival(self, u):
        return np.where(np.asarray(u) < self.size, 1.0, 0.0)

    def tilted_tail(self, y, theta):
        y = np.asarray(y, dtype=float)
        return np.where(y < self.size, np.exp(-theta * (self.size - y)), 0.0)

    def sample(self, rng, size):
        return np.full(size, self.size)

    def to_dict(self):
        return {"type": self.kind, "size": self.size}


JumpDist = Union[Exponential, Pareto, Deterministic]

_JUMP_TYPES = {"exponential": Exponential, "pareto": Pareto, "deterministic": Deterministic}


def jump_dist_from_dict(d):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _JUMP_TYPES:
        raise ModelError(f"unknown jump distribution type {kind!r}; expected one of {sorted(_JUMP_TYPES)}")
    return _JUMP_TYPES[kind](**d)


def _hybrid_root(f, fprime, lo, hi, rtol=1e-14, maxiter=200):
    """Root of an increasing function on [lo, hi] (f(lo) < 0 < f(hi)).

    Newton steps are taken from the current iterate and replaced by bisection
    whenever they leave the bracket.
    """
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        d = fprime(x)
        x_new = x - fx / d if d > 0 else None
        if x_new is None or not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= rtol * max(abs(x_new), 1e-300) or hi - lo <= rtol * max(abs(hi), 1e-300):
            return x_new
        x = x_new
    raise ConvergenceError(f"root search did not converge in [{lo}, {hi}]", code="levy_model.root")


@dataclass(frozen=True)
class LevyModel:
    """Spectrally positive Lévy input X.

    Parameters
    ----------
    sigma : float
        Gaussian coefficient (workload per square-root time).
    drift : float
        Service speed; X decreases at this rate between jumps.
    jump_rate : float
        Poisson intensity of the upward jumps.
    jumps : JumpDist or None
        Jump-size law, present iff ``jump_rate > 0``.
    """

    sigma: float = 0.0
    drift: float = 0.0
    jump_rate: float = 0.0
    jumps: Optional[JumpDist] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        problems = []
        if self.sigma < 0:
            problems.append(f"sigma must be >= 0, got {self.sigma}")
        if self.drift < 0:
            problems.append(f"drift must be >= 0, got {self.drift}")
        if self.jump_rate < 0:
            problems.append(f"jump_rate must be >= 0, got {self.jump_rate}")
        if (self.jump_rate > 0) != (self.jumps is not None):
            problems.append("jumps must be given exactly when jump_rate > 0")
        if problems:
            raise ModelError("; ".join(problems))
        if not (self.sigma > 0 or (self.jump_rate > 0 and self.drift > 0)):
            raise ModelError("monotone paths: need sigma > 0, or both jumps and a positive drift",
                             code="levy_model.monotone")
        if self.psi_prime0 < 0:
            raise ModelError(
                f"stability: E[X(1)] > 0 (E[X(1)] = {-self.psi_prime0:.6g}); "
                "the workload would drift to infinity",
                code="levy_model.stability")

    # -- structural flags -------------------------------------------------

    @property
    def has_jumps(self):
        return self.jump_rate > 0

    @property
    def regular(self):
        """Whether the scale function is C^1 (Gaussian part or a.c. jump law)."""
        return self.sigma > 0 or (self.has_jumps and self.jumps.absolutely_continuous)

    @property
    def bounded_variation(self):
        return self.sigma == 0

    @property
    def mean_increment(self):
        """E[X(1)] = rate*E[J] - drift."""
        return (self.jump_rate * self.jumps.mean if self.has_jumps else 0.0) - self.drift

    @property
    def psi_prime0(self):
        """Right derivative of psi at zero, i.e. -E[X(1)]."""
        return -self.mean_increment

    @property
    def mgf_bound(self):
        """Infimum of the (possibly negative) domain on which psi is finite."""
        return self.jumps.mgf_bound if self.has_jumps else -np.inf

    # -- Laplace exponent -------------------------------------------------

    def _psi(self, theta):
        val = self.drift * theta + 0.5 * self.sigma ** 2 * theta * theta
        if self.has_jumps:
            val = val - self.jump_rate * (1.0 - self.jumps.laplace(theta))
        return val

    def psi(self, theta):
        """Laplace exponent of the dual, defined for theta >= 0."""
        t = np.asarray(theta, dtype=float)
        if np.any(t < 0) or np.any(np.isnan(t)):
            raise DomainError(f"psi requires theta >= 0, got {theta}", code="levy_model.domain")
        return self._psi(t if t.ndim else float(t))

    def psi_extended(self, theta):
        """psi on its full real domain, including negative arguments where finite."""
        t = np.asarray(theta, dtype=float)
        if np.any(t <= self.mgf_bound) and not (self.mgf_bound == 0 and np.all(t >= 0)):
            raise DomainError(f"psi is infinite at theta={theta} (domain is theta > {self.mgf_bound})",
                              code="levy_model.domain")
        return self._psi(t if t.ndim else float(t))

    def psi_complex(self, s):
        """Analytic continuation of psi to complex arguments (used by contour inversion)."""
        return self._psi(np.asarray(s, dtype=complex))

    def log_mgf(self, alpha):
        """log E exp(alpha X(1)) = psi(-alpha)."""
        return self.psi_extended(-np.asarray(alpha, dtype=float))

    def _psi_prime(self, theta):
        val = self.drift + self.sigma ** 2 * theta
        if self.has_jumps:
            val = val - self.jump_rate * self.jumps.laplace_deriv(theta)
        return val

    def psi_prime(self, theta):
        t = np.asarray(theta, dtype=float)
        if np.any(t < 0):
            raise DomainError(f"psi_prime requires theta >= 0, got {theta}", code="levy_model.domain")
        return self._psi_prime(t if t.ndim else float(t))

    def psi_prime_extended(self, theta):
        """Derivative of psi on its full real domain."""
        t = np.asarray(theta, dtype=float)
        if np.any(t <= self.mgf_bound) and not (self.mgf_bound == 0 and np.all(t >= 0)):
            raise DomainError(f"psi is infinite near theta={theta}", code="levy_model.domain")
        return self._psi_prime(t if t.ndim else float(t))

    def levy_tail(self, u):
        """Tail of the Lévy measure of X: rate * P(J > u)."""
        u_arr = np.asarray(u, dtype=float)
        if np.any(u_arr <= 0):
            raise DomainError(f"levy_tail requires u > 0, got {u}", code="levy_model.domain")
        if not self.has_jumps:
            return np.zeros_like(u_arr) if u_arr.ndim else 0.0
        out = self.jump_rate * self.jumps.survival(u_arr)
        return out if u_arr.ndim else float(out)

    # -- inverse ----------------------------------------------------------

    def phi(self, q):
        """Right inverse Phi(q): the largest root of psi(theta) = q."""
        if not q > 0:
            raise DomainError(f"phi requires q > 0, got {q}", code="levy_model.domain")
        key = ("phi", float(q))
        if key in self._cache:
            return self._cache[key]
        slope = self.psi_prime0
        hi = max(1e-8, q / slope + 1.0) if slope > 0 else 1.0
        while self._psi(hi) <= q:
            hi *= 2.0
            if hi > 1e300:
                raise ConvergenceError("could not bracket Phi(q)", code="levy_model.root")
        root = _hybrid_root(lambda t: self._psi(t) - q, self._psi_prime, 0.0, hi)
        self._cache[key] = root
        return root

    def cramer_root(self, q):
        """Decay rate gamma > 0 solving log E exp(gamma X(1)) = q, or None.

        Equivalently -gamma is the negative root of psi(theta) = q. It does not
        exist when the jump law has no exponential moments.
        """
        if not q > 0:
            raise DomainError(f"cramer_root requires q > 0, got {q}", code="levy_model.domain")
        key = ("cramer", float(q))
        if key in self._cache:
            return self._cache[key]
        bound = self.mgf_bound
        if bound == 0.0:
            self._cache[key] = None
            return None
        # psi is convex with psi(0) = 0 and psi'(0) >= 0, so psi = q has one negative root
        if np.isfinite(bound):
            k = 1
            lo = 0.5 * bound
            while self._psi(lo) <= q:
                k += 1
                if k > 1000:
                    self._cache[key] = None
                    return None
                lo = bound - bound * 0.5 ** k
        else:
            lo = -1.0
            while self._psi(lo) <= q:
                lo *= 2.0
        root = _hybrid_root(lambda t: self._psi(-t) - q, lambda t: -self._psi_prime(-t),
                            0.0, -lo)
        self._cache[key] = root
        return root

    def to_dict(self):
        return {
            "sigma": self.sigma,
            "drift": self.drift,
            "jump_rate": self.jump_rate,
            "jumps": self.jumps.to_dict() if self.jumps is not None else None,
        }

    @classmethod
    def from_dict(cls, d):
        jumps = d.get("jumps")
        return cls(sigma=float(d.get("sigma", 0.0)), drift=float(d.get("drift", 0.0)),
                   jump_rate=float(d.get("jump_rate", 0.0)),
                   jumps=jump_dist_from_dict(jumps) if jumps else None)


def brownian(sigma=1.0, drift=1.0):
    """X(t) = sigma B(t) - drift t."""
    return LevyModel(sigma=sigma, drift=drift)


def cpp_exponential(speed=2.0, rate=1.0, mu=1.0, sigma=0.0):
    """Compound Poisson input with Exponential(mu) jumps served at the given speed."""
    return LevyModel(sigma=sigma, drift=speed, jump_rate=rate, jumps=Exponential(mu))
