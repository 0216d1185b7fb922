"""Adjustment functionals and the workload chain embedded at review epochs.

Z_n is the workload right after the n-th adjustment and U_n the workload
right before it, so U_{n+1} = Y(e_q) started from Z_n and Z_n = F(U_n).
Distributions are kept as an atom at zero plus a positive part; point
masses away from zero (a deterministic level b) are carried separately.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import (ConvergenceError, DomainError, PreconditionError,
                     TruncationError, UnsupportedModelError)
from .fluctuation import TransitionLaw, sample_supremum, sup_law, transition
from .levy_model import Deterministic, Exponential, jump_dist_from_dict
from .quadrature import _GL_W, _GL_X, decay_breaks, nodes_weights
from .scale_fn import ScaleFunction

BLaw = Union[Deterministic, Exponential]


# ---------------------------------------------------------------------------
# functionals


@dataclass(frozen=True)
class Clearing:
    """F(y) = 0: all work is removed at each review."""

    name = "clearing"
    dominated = True

    def apply(self, y, rng=None):
        return np.zeros_like(np.asarray(y, dtype=float))

    def to_dict(self):
        return {"type": self.name}


@dataclass(frozen=True)
class ConstantLevel:
    """F(y) = B: the workload is reset to a fresh draw of B."""

    b: BLaw
    name = "constant_level"
    dominated = True

    def apply(self, y, rng=None):
        y = np.asarray(y, dtype=float)
        return _draw_b(self.b, rng, y.shape)

    def to_dict(self):
        return {"type": self.name, "b": self.b.to_dict()}


@dataclass(frozen=True)
class ReflectAroundB:
    """F(y) = (B - y)^+."""

    b: BLaw
    name = "reflect_around_b"
    dominated = True

    def apply(self, y, rng=None):
        y = np.asarray(y, dtype=float)
        return np.maximum(_draw_b(self.b, rng, y.shape) - y, 0.0)

    def to_dict(self):
        return {"type": self.name, "b": self.b.to_dict()}


@dataclass(frozen=True)
class Proportional:
    """F(y) = delta * y with 0 < delta < 1. No dominating variable exists."""

    delta: float
    name = "proportional"
    dominated = False

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"proportional factor must lie in (0, 1), got {self.delta}",
                              code="embedded_chain.domain")

    def apply(self, y, rng=None):
        return self.delta * np.asarray(y, dtype=float)

    def to_dict(self):
        return {"type": self.name, "delta": self.delta}


@dataclass(frozen=True)
class Custom:
    """User hook: ``fn(y, rng)`` must map an array of workloads to adjusted workloads.

    Analytic solvers do not accept it; only simulation does.
    """

    fn: Callable
    label: str = "custom"
    name = "custom"
    dominated = False

    def apply(self, y, rng=None):
        return np.maximum(np.asarray(self.fn(np.asarray(y, dtype=float), rng), dtype=float), 0.0)

    def to_dict(self):
        return {"type": self.name, "label": self.label}


FunctionalSpec = Union[Clearing, ConstantLevel, ReflectAroundB, Proportional, Custom]


def _draw_b(b, rng, shape):
    if isinstance(b, Deterministic):
        return np.full(shape, b.size)
    if rng is None:
        raise DomainError("a random level B needs a random generator", code="embedded_chain.domain")
    return b.sample(rng, shape)


def dominating_variable(f):
    """The variable F_0 >= F(y) for all y, or None when no such variable exists."""
    if isinstance(f, Clearing):
        return 0.0
    if isinstance(f, (ConstantLevel, ReflectAroundB)):
        return f.b
    return None


def functional_from_dict(d):
    d = dict(d)
    kind = d.get("type")
    if kind == "clearing":
        return Clearing()
    if kind in ("constant_level", "reflect_around_b"):
        if "b" not in d:
            raise DomainError(f"functional {kind!r} needs a 'b' entry", code="embedded_chain.domain")
        b = jump_dist_from_dict(d["b"])
        if not isinstance(b, (Deterministic, Exponential)):
            raise DomainError("B must be deterministic or exponential", code="embedded_chain.domain")
        return ConstantLevel(b) if kind == "constant_level" else ReflectAroundB(b)
    if kind == "proportional":
        return Proportional(float(d["delta"]))
    raise DomainError(f"unknown functional type {kind!r}", code="embedded_chain.domain")


def apply_functional(f: FunctionalSpec, y, rng=None):
    """One draw of F(y) per entry of ``y``; a float in, a float out."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise DomainError("workload must be nonnegative", code="embedded_chain.domain")
    out = f.apply(y_arr, rng)
    return float(out) if y_arr.ndim == 0 else out


def b_laplace(b, s):
    """E exp(-s B)."""
    if isinstance(b, Deterministic):
        return math.exp(-s * b.size)
    return b.rate / (b.rate + s)


# ---------------------------------------------------------------------------
# distributions


@dataclass
class StationaryDistribution:
    """Atom at zero plus a positive part.

    The positive part is one of: a density on a sorted grid (trapezoid
    weights), an array of samples, or a scaled Exponential(rate). Point
    masses away from zero live in ``point_masses``.
    """

    atom: float
    provenance: str
    grid: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None
    exp_rate: Optional[float] = None
    point_masses: dict = field(default_factory=dict)
    weights: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def cell_weights(self):
        return self.weights if self.weights is not None else _trapezoid_weights(self.grid)

    @property
    def kind(self):
        if self.grid is not None:
            return "grid"
        if self.samples is not None:
            return "samples"
        return "parametric"

    def positive_mass(self):
        extra = sum(self.point_masses.values())
        if self.kind == "grid":
            return float(np.dot(self.cell_weights(), self.density)) + extra
        return 1.0 - self.atom

    def expect(self, g):
        """E g(X) for a vectorised g."""
        if self.kind == "samples":
            return float(np.mean(g(self.samples)))
        total = self.atom * float(g(np.zeros(1))[0])
        for loc, mass in self.point_masses.items():
            total += mass * float(g(np.array([loc]))[0])
        if self.kind == "grid":
            total += float(np.dot(self.cell_weights() * self.density, g(self.grid)))
        else:
            mass = 1.0 - self.atom - sum(self.point_masses.values())
            x, w = nodes_weights(decay_breaks(self.exp_rate, span=45.0))
            total += mass * float(np.dot(w, self.exp_rate * np.exp(-self.exp_rate * x) * g(x)))
        return total

    def laplace(self, s):
        return self.expect(lambda y: np.exp(-s * y))

    def positive_density(self, y):
        """Density of the continuous part (no atoms) at the points ``y``."""
        y = np.asarray(y, dtype=float)
        if self.kind == "grid":
            return np.interp(y, self.grid, self.density, right=0.0)
        if self.kind == "parametric":
            mass = 1.0 - self.atom - sum(self.point_masses.values())
            return mass * self.exp_rate * np.exp(-self.exp_rate * y)
        raise DomainError("sample-based distributions have no density", code="embedded_chain.domain")

    def to_rows(self):
        """(x, value) rows: first the atom, then the positive part."""
        rows = [(0.0, self.atom)]
        rows += sorted(self.point_masses.items())
        if self.kind == "grid":
            rows += list(zip(self.grid.tolist(), self.density.tolist()))
        return rows


def _trapezoid_weights(grid):
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def tv_distance(a: StationaryDistribution, b: StationaryDistribution, x_max=None, n=20001):
    """Total variation distance between two atom-plus-density laws."""
    total = abs(a.atom - b.atom)
    locs = set(a.point_masses) | set(b.point_masses)
    total += sum(abs(a.point_masses.get(k, 0.0) - b.point_masses.get(k, 0.0)) for k in locs)
    if x_max is None:
        x_max = max(d.grid[-1] if d.kind == "grid" else 40.0 / d.exp_rate for d in (a, b))
    y = np.linspace(0.0, x_max, n)
    diff = np.abs(a.positive_density(y) - b.positive_density(y))
    total += float(np.dot(_trapezoid_weights(y), diff))
    return 0.5 * total


# ---------------------------------------------------------------------------
# kernel


class KernelLaw:
    """Law of F(Y(e_q)) given Y(0) = x."""

    def __init__(self, atom, density=None, point_masses=None, tail=None, laplace=None):
        self.atom = atom
        self._density = density
        self.point_masses = point_masses or {}
        self._tail = tail
        self._laplace = laplace

    def density(self, y):
        y = np.asarray(y, dtype=float)
        if self._density is None:
            return np.zeros_like(y)
        return np.where(y > 0, self._density(np.maximum(y, 1e-300)), 0.0)

    def tail(self, t):
        """P(F(Y) > t) for t > 0."""
        return self._tail(t) if self._tail is not None else 0.0

    def laplace(self, s):
        return self._laplace(s)


def kernel_density(ev: ScaleFunction, f: FunctionalSpec, x: float, law: Optional[TransitionLaw] = None):
    """Push the transition law at x through the functional F."""
    if x < 0:
        raise DomainError("kernel needs x >= 0", code="embedded_chain.domain")
    if isinstance(f, Custom):
        raise UnsupportedModelError("no analytic kernel for a custom functional",
                                    code="embedded_chain.unsupported")
    if isinstance(f, Clearing):
        return KernelLaw(1.0, laplace=lambda s: 1.0)
    if isinstance(f, ConstantLevel):
        if isinstance(f.b, Deterministic):
            return KernelLaw(0.0, point_masses={f.b.size: 1.0},
                             tail=lambda t: float(f.b.size > t), laplace=lambda s: b_laplace(f.b, s))
        beta = f.b.rate
        return KernelLaw(0.0, density=lambda y: beta * np.exp(-beta * y),
                         tail=lambda t: math.exp(-beta * t), laplace=lambda s: b_laplace(f.b, s))
    law = law or transition(ev)
    if isinstance(f, Proportional):
        d = f.delta
        return KernelLaw(float(law.atom(x)),
                         density=lambda y: law.density(x, y / d) / d,
                         tail=lambda t: float(law.survival(x, t / d)),
                         laplace=lambda s: float(law.laplace(x, d * s)))
    if isinstance(f, ReflectAroundB):
        if isinstance(f.b, Exponential):
            beta = f.b.rate
            # memorylessness: given (B - Y)^+ > 0 it is again Exponential(beta)
            positive = float(law.laplace(x, beta))
            return KernelLaw(1.0 - positive,
                             density=lambda y: positive * beta * np.exp(-beta * y),
                             tail=lambda t: positive * math.exp(-beta * t),
                             laplace=lambda s: 1.0 - positive + positive * beta / (beta + s))
        b = f.b.size
        # (b - Y)^+ is 0 when Y >= b, b when Y = 0, and b - Y in between
        at_zero = float(law.survival(x, b))
        at_b = float(law.atom(x))

        def lst(s):
            yy = 0.5 * b * (1.0 + _GL_X)
            body = 0.5 * b * float(np.dot(_GL_W, np.exp(-s * (b - yy)) * law.density(x, yy)))
            return at_zero + at_b * math.exp(-s * b) + body

        return KernelLaw(at_zero,
                         density=lambda y: np.where(y < b, law.density(x, np.maximum(b - y, 1e-300)), 0.0),
                         point_masses={b: at_b},
                         tail=lambda t: 1.0 - float(law.survival(x, b - t)) if t < b else 0.0,
                         laplace=lst)
    raise UnsupportedModelError(f"unsupported functional {f!r}", code="embedded_chain.unsupported")


# ---------------------------------------------------------------------------
# simulation


@dataclass
class ChainSamples:
    """Post-adjustment (z) and pre-adjustment (u) states, one row per independent chain."""

    z: np.ndarray
    u: np.ndarray
    seed: int
    shards: int

    @property
    def u_flat(self):
        return self.u.ravel()

    @property
    def z_flat(self):
        return self.z.ravel()

    def mean_se(self, values):
        """Mean of per-sample ``values`` (shaped like ``u``) and its standard error.

        The chains are independent, so the spread of chain means gives the
        error without any assumption on the autocorrelation within a chain.
        """
        values = np.asarray(values, dtype=float).reshape(self.u.shape)
        means = values.mean(axis=1)
        k = len(means)
        return float(means.mean()), float(means.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan


def _run_shard(ev, f, chains, length, burnin, x0, seed_seq, method):
    rng = np.random.default_rng(seed_seq)
    phi = ev.phi
    z_out = np.empty((length, chains))
    u_out = np.empty((length, chains))
    u = np.full(chains, float(x0))
    total = burnin + length
    block = max(1, (1 << 18) // chains)
    t = 0
    while t < total:
        nb = min(block, total - t)
        s_blk = sample_supremum(ev, rng, nb * chains, method).reshape(nb, chains)
        g_blk = rng.exponential(1.0 / phi, (nb, chains))
        for i in range(nb):
            z = f.apply(u, rng)
            u = s_blk[i] + np.maximum(z - g_blk[i], 0.0)
            k = t + i - burnin
            if k >= 0:
                z_out[k] = z
                u_out[k] = u
        t += nb
    return z_out.T, u_out.T


def simulate_chain(ev: ScaleFunction, f: FunctionalSpec, n: int, burnin: int = 100, seed: int = 0,
                   shards: int = 1, chains: Optional[int] = None, x0: float = 0.0,
                   method: Optional[str] = None, workers: int = 1) -> ChainSamples:
    """Run independent copies of the chain and keep ``n`` post-burn-in epochs in total.

    Chains are split over ``shards`` streams spawned from ``seed``; results
    depend only on (seed, shards, chains) and not on ``workers``.
    """
    if n < 1:
        raise DomainError("need at least one draw", code="embedded_chain.domain")
    if chains is None:
        chains = int(min(1000, max(1, n // 1000)))
    chains = max(shards, chains)
    length = -(-n // chains)
    parts = [len(p) for p in np.array_split(np.arange(chains), shards)]
    seeds = np.random.SeedSequence(seed).spawn(shards)
    jobs = [(ev, f, k, length, burnin, x0, sq, method) for k, sq in zip(parts, seeds)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _run_shard(*a), jobs))
    else:
        results = [_run_shard(*a) for a in jobs]
    z = np.concatenate([r[0] for r in results])
    u = np.concatenate([r[1] for r in results])
    return ChainSamples(z=z, u=u, seed=seed, shards=shards)


def empirical_distribution(samples, provenance="MonteCarlo"):
    samples = np.asarray(samples, dtype=float).ravel()
    return StationaryDistribution(atom=float(np.mean(samples == 0.0)), provenance=provenance,
                                  samples=samples)


def coupling_witness(ev: ScaleFunction, f: FunctionalSpec, starts=(0.0, 10.0), chains=2000,
                     epochs=200, seed=0, method=None):
    """Fraction of synchronously coupled chain pairs not yet merged, per epoch.

    Both copies share every random input, so once they meet they stay
    together; the fraction bounds the total-variation distance between the
    laws started from the two points.
    """
    rng = np.random.default_rng(seed)
    a = np.full(chains, float(starts[0]))
    b = np.full(chains, float(starts[1]))
    apart = np.empty(epochs)
    for t in range(epochs):
        s = sample_supremum(ev, rng, chains, method)
        g = rng.exponential(1.0 / ev.phi, chains)
        state = rng.bit_generator.state
        za = f.apply(a, rng)
        rng.bit_generator.state = state
        zb = f.apply(b, rng)
        a = s + np.maximum(za - g, 0.0)
        b = s + np.maximum(zb - g, 0.0)
        apart[t] = np.mean(a != b)
    below = np.nonzero(apart < 0.01)[0]
    return {"uncoupled": apart, "epochs_to_001": int(below[0]) + 1 if below.size else None}


# ---------------------------------------------------------------------------
# analytic stationary laws


def _truncation_mass(ev, f, law, x_max):
    """Upper bound on the kernel mass above x_max from any state in [0, x_max]."""
    if isinstance(f, Clearing):
        return 0.0
    if isinstance(f, (ConstantLevel, ReflectAroundB)):
        b = f.b
        return float(b.survival(x_max)) if isinstance(b, Exponential) else float(b.size > x_max)
    if isinstance(f, Proportional):
        # Y is stochastically increasing in its start, so x = x_max is the worst case
        return float(law.survival(x_max, x_max / f.delta))
    raise UnsupportedModelError(f"no analytic kernel for {f!r}", code="embedded_chain.unsupported")


def default_x_max(ev, f, law=None, target=1e-9):
    if isinstance(f, Clearing):
        return 1.0
    if isinstance(f, (ConstantLevel, ReflectAroundB)):
        if isinstance(f.b, Deterministic):
            return f.b.size
        return -math.log(target) / f.b.rate
    law = law or transition(ev)
    x = 1.0 / ev.phi
    while _truncation_mass(ev, f, law, x) > target:
        x *= 1.5
    return x


def stationary_grid(ev: ScaleFunction, f: FunctionalSpec, x_max: Optional[float] = None,
                    n_grid: int = 2000, tol: float = 1e-12, max_iter: int = 100_000,
                    strict_paper: bool = False) -> StationaryDistribution:
    """Power iteration on the kernel discretised at composite Gauss-Legendre nodes on (0, x_max].

    States are the atom at zero, the quadrature nodes and any point mass of
    F (a deterministic level b). Rows are renormalised; the largest
    correction is reported in ``meta['row_defect']``.
    """
    law = transition(ev, strict_paper=strict_paper)
    if x_max is None:
        x_max = default_x_max(ev, f, law)
    trunc = _truncation_mass(ev, f, law, x_max)
    if trunc > 1e-8:
        raise TruncationError(f"kernel mass {trunc:.3g} lies above x_max = {x_max}; enlarge x_max")
    panels = max(1, n_grid // 20)
    mids, wts = nodes_weights(np.linspace(0.0, x_max, panels + 1))
    n_grid = len(mids)
    extra = []
    if isinstance(f, (ConstantLevel, ReflectAroundB)) and isinstance(f.b, Deterministic):
        extra = [f.b.size]
    states = np.concatenate([[0.0], mids, extra])
    m = len(states)
    K = np.zeros((m, m))
    for i, x in enumerate(states):
        k = kernel_density(ev, f, float(x), law)
        K[i, 0] = k.atom
        K[i, 1:n_grid + 1] = k.density(mids) * wts
        for loc, mass in k.point_masses.items():
            K[i, n_grid + 1 + extra.index(loc)] += mass
    rows = K.sum(axis=1)
    defect = float(np.max(np.abs(rows - 1.0)))
    K /= rows[:, None]
    p = np.zeros(m)
    p[0] = 1.0
    for it in range(max_iter):
        nxt = p @ K
        diff = 0.5 * np.abs(nxt - p).sum()
        p = nxt
        if diff < tol:
            break
    else:
        raise ConvergenceError(f"power iteration did not reach {tol} in {max_iter} steps",
                               code="embedded_chain.convergence")
    return StationaryDistribution(
        atom=float(p[0]), provenance="GridPowerIteration", grid=mids, density=p[1:n_grid + 1] / wts,
        weights=wts, point_masses={loc: float(p[n_grid + 1 + j]) for j, loc in enumerate(extra)},
        meta={"x_max": x_max, "n_grid": n_grid, "truncation_bound": trunc, "row_defect": defect,
              "iterations": it + 1, "tolerance": tol})


def _gap_laplace_weight(phi, beta):
    """int E exp(-beta (z - G)^+) Exp(beta)(dz) with G ~ Exp(phi)."""
    return (phi + 2.0 * beta) / (2.0 * (phi + beta))


def pi_zero_fixed_point(ev: ScaleFunction, beta: float):
    """Stationary law of Z for F(y) = (B - y)^+ with B ~ Exponential(beta).

    By memorylessness Z = 0 with probability pi0 and is Exponential(beta)
    otherwise. Then pi0 = 1 - E exp(-beta U) with
    E exp(-beta U) = E exp(-beta S) * (pi0 + (1 - pi0) M), which is linear in pi0.
    """
    if not beta > 0:
        raise DomainError("beta must be positive", code="embedded_chain.domain")
    ls = sup_law(ev).laplace(beta)
    m = _gap_laplace_weight(ev.phi, beta)
    pi0 = (1.0 - ls * m) / (1.0 + ls * (1.0 - m))
    dist = StationaryDistribution(atom=pi0, provenance="ClosedFormFixedPoint", exp_rate=beta,
                                  meta={"sup_laplace": ls, "gap_weight": m})
    return pi0, dist


def pizero_integral(ev: ScaleFunction, beta: float, pi: StationaryDistribution):
    """pi(0) = int pi(dx) int F_B(dt) int_t^inf h(x, y) dy evaluated by quadrature.

    This is the probability that the workload exceeds B, computed from the
    transition density itself rather than from transforms.
    """
    law = transition(ev)

    def inner(xs):
        out = []
        for x in np.atleast_1d(xs):
            # the survival in t has a kink at t = x
            br = np.unique(np.concatenate([decay_breaks(beta, span=40.0), [x]]))
            t, wt = nodes_weights(br)
            out.append(float(np.dot(wt * beta * np.exp(-beta * t), law.survival(float(x), t))))
        return np.array(out)

    return pi.expect(inner)


def _kernel_laplace(ev, f, law, xs, s):
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if isinstance(f, Clearing):
        return np.ones_like(xs)
    if isinstance(f, ConstantLevel):
        return np.full_like(xs, b_laplace(f.b, s))
    if isinstance(f, Proportional):
        return law.laplace(xs, f.delta * s)
    if isinstance(f, ReflectAroundB) and isinstance(f.b, Exponential):
        beta = f.b.rate
        pos = law.laplace(xs, beta)
        return 1.0 - pos + pos * beta / (beta + s)
    return np.array([kernel_density(ev, f, float(x), law).laplace(s) for x in xs])


def balance_residual(ev: ScaleFunction, f: FunctionalSpec, pi: StationaryDistribution,
                     s_grid=None, strict_paper=False):
    """max over s of |E_pi exp(-s Z) - int pi(dx) E_x exp(-s F(Y(e_q)))|.

    The atom of pi is counted once on each side.
    """
    if s_grid is None:
        s_grid = np.geomspace(0.05, 20.0, 20)
    law = transition(ev, strict_paper=strict_paper)
    worst = 0.0
    for s in s_grid:
        lhs = pi.laplace(float(s))
        rhs = pi.expect(lambda x, s=float(s): _kernel_laplace(ev, f, law, x, s))
        worst = max(worst, abs(lhs - rhs))
    return worst
