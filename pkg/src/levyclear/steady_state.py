"""Law of the time-stationary workload V.

Poisson review epochs see time averages, so V has the law of the
pre-adjustment state U. Given the stationary law pi of the post-adjustment
chain,

    E g(V) = int pi(dx) [ int g(y) h(x, y) dy + g(0) (q/Phi) W(0) exp(-Phi x) ].

For exponential test functions everything reduces to transforms of S and
of G ~ Exp(Phi):

    E exp(-s V) = E exp(-s S) * (Phi E exp(-s F(V)) - s E exp(-Phi F(V))) / (Phi - s).
"""
from __future__ import annotations

import math

import numpy as np

from .embedded_chain import (Clearing, ConstantLevel, Custom, Proportional, ReflectAroundB,
                             StationaryDistribution, b_laplace, pi_zero_fixed_point,
                             stationary_grid)
from .errors import ConvergenceError, DomainError, PoleError, UnsupportedModelError
from .fluctuation import sup_law, transition
from .levy_model import Deterministic, Exponential
from .quadrature import nodes_weights
from .scale_fn import ScaleFunction

_NEAR_PHI = 1e-6


def _gap_factor(phi, s, f_vals):
    """(Phi exp(-s F) - s exp(-Phi F)) / (Phi - s), continuous at s = Phi."""
    f_vals = np.asarray(f_vals, dtype=float)
    if abs(s - phi) < _NEAR_PHI:
        return np.exp(-phi * f_vals) * (1.0 + phi * f_vals)
    return (phi * np.exp(-s * f_vals) - s * np.exp(-phi * f_vals)) / (phi - s)


def analytic_pi(ev: ScaleFunction, f, **grid_options) -> StationaryDistribution:
    """Stationary law of the post-adjustment chain by the most direct analytic route."""
    if isinstance(f, Clearing):
        return StationaryDistribution(atom=1.0, provenance="ClosedFormFixedPoint", exp_rate=1.0)
    if isinstance(f, ConstantLevel):
        if isinstance(f.b, Deterministic):
            return StationaryDistribution(atom=0.0, provenance="ClosedFormFixedPoint",
                                          exp_rate=1.0, point_masses={f.b.size: 1.0})
        return StationaryDistribution(atom=0.0, provenance="ClosedFormFixedPoint", exp_rate=f.b.rate)
    if isinstance(f, ReflectAroundB) and isinstance(f.b, Exponential):
        return pi_zero_fixed_point(ev, f.b.rate)[1]
    if isinstance(f, Custom):
        raise UnsupportedModelError("custom functionals have no analytic stationary law",
                                    code="steady_state.unsupported")
    return stationary_grid(ev, f, **grid_options)


def steady_functional(ev: ScaleFunction, pi: StationaryDistribution, g, strict_paper=False):
    """E g(V) by nested quadrature over pi and the transition density.

    ``g`` must be vectorised and bounded. With ``strict_paper`` the atom
    term uses W(0) instead of (q/Phi) W(0).
    """
    law = transition(ev, strict_paper=strict_paper)
    gamma = ev.model.cramer_root(ev.q)
    rate = min(gamma, ev.phi) if gamma is not None else ev.phi
    far = np.arange(1, 41) * (1.0 / rate)
    with np.errstate(divide="ignore", invalid="ignore"):
        g0 = float(np.asarray(g(np.zeros(1)))[0])
    if not math.isfinite(g0):
        raise DomainError("g(0) is not finite", code="steady_state.domain")

    def inner(xs):
        out = np.empty(len(np.atleast_1d(xs)))
        for i, x in enumerate(np.atleast_1d(xs)):
            near = np.geomspace(1e-6, 1.0, 12)
            pieces = [[0.0], near, 1.0 + far]
            if x > 0:
                pieces += [x + near, np.maximum(x - near, 0.0)]
            br = np.unique(np.concatenate(pieces))
            y, w = nodes_weights(br)
            gy = np.asarray(g(y), dtype=float)
            if not np.all(np.isfinite(gy)):
                raise DomainError("g is not finite on the integration range", code="steady_state.domain")
            out[i] = float(np.dot(w * law.density(float(x), y), gy)) + g0 * float(law.atom(x))
        return out

    return pi.expect(inner)


def steady_cdf(ev: ScaleFunction, pi: StationaryDistribution, t):
    """P(V <= t) = int pi(dx) P_x(Y(e_q) <= t), using the exact transition distribution function."""
    law = transition(ev)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([pi.expect(lambda xs, tt=tt: np.array([float(law.cdf(float(x), tt))
                                                         for x in np.atleast_1d(xs)]))
                    for tt in t_arr])
    return float(out[0]) if np.ndim(t) == 0 else out


def steady_lst(ev: ScaleFunction, pi: StationaryDistribution, s, strict_paper=False):
    """E exp(-s V) = int pi(dx) E_x exp(-s Y(e_q)), using the transform of the transition law."""
    law = transition(ev, strict_paper=strict_paper)
    return pi.expect(lambda xs: law.laplace(np.atleast_1d(xs), float(s)))


def lst_constant_level(ev: ScaleFunction, b, s):
    """E exp(-s V) when every review resets the workload to a fresh B (None means B = 0)."""
    if s < 0:
        raise DomainError("transform argument must be nonnegative", code="steady_state.domain")
    if s == 0:
        return 1.0
    phi = ev.phi
    ls = sup_law(ev).laplace(s)
    if b is None:
        return ls
    if abs(s - phi) < _NEAR_PHI:
        # l'Hopital: E[exp(-Phi B)(1 + Phi B)]
        return ls * (b_laplace(b, phi) + phi * float(b.laplace_deriv(phi)))
    return ls * (phi * b_laplace(b, s) - s * b_laplace(b, phi)) / (phi - s)


def key_equation_residual(ev: ScaleFunction, u, fu, s, chain_shape=None):
    """Residual of E exp(-sV) = E exp(-sS) (Phi E exp(-sF(V)) - s E exp(-Phi F(V))) / (Phi - s).

    ``u`` holds pre-adjustment samples and ``fu`` the matching adjusted
    values F(u). Returns (residual, standard error). The per-sample
    difference is averaged over independent chains when ``chain_shape``
    (chains, length) is given, and treated as i.i.d. otherwise.
    """
    u = np.asarray(u, dtype=float).ravel()
    fu = np.asarray(fu, dtype=float).ravel()
    ls = sup_law(ev).laplace(s)
    d = np.exp(-s * u) - ls * _gap_factor(ev.phi, s, fu)
    if chain_shape is not None:
        means = d.reshape(chain_shape).mean(axis=1)
        return float(means.mean()), float(means.std(ddof=1) / math.sqrt(len(means)))
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(len(d)))


# ---------------------------------------------------------------------------
# proportional adjustment


def _proportional_parts(ev, delta, s, tol, depth):
    """Infinite product P(s) = prod g(delta^j s) and series T(s) = sum_k delta^k prod_{j<=k} g(delta^j s)."""
    q, psi = ev.q, ev.model.psi
    prod = 1.0
    series = 0.0
    j = 0
    while True:
        u = s * delta ** j
        pv = float(psi(u))
        denom = q - pv
        if denom == 0.0 or abs(denom) < 1e-14 * q:
            raise PoleError(f"factor q - psi(delta^{j} s) vanishes at j = {j}",
                            code="steady_state.pole")
        prod *= q / denom
        series += delta ** j * prod
        j += 1
        if depth is not None:
            if j >= depth:
                break
            continue
        # remaining factors are 1 + O(psi(delta^j s)/q), remaining series terms O(delta^j)
        rest_prod = math.expm1(abs(float(psi(s * delta ** j))) / (q * (1.0 - delta)))
        rest_series = delta ** j / (1.0 - delta) * abs(prod) * (1.0 + rest_prod)
        if rest_prod < tol and rest_series < tol:
            break
        if j > 100_000:
            raise ConvergenceError("proportional product did not settle", code="steady_state.convergence")
    return prod, series, j


def lst_proportional(ev: ScaleFunction, delta, s, tol=1e-14, depth=None, strict_paper=False):
    """E exp(-s V) for F(y) = delta * y.

    The functional equation v(s) = g(s) v(delta s) - (s/Phi) g(s) v(delta Phi)
    with g = q/(q - psi) iterates to

        v(s) = P(s) - v(delta Phi) (s/Phi) T(s),

    and evaluating at s = delta Phi gives v(delta Phi) = P / (1 + delta T)
    there. ``strict_paper`` flips the sign in front of the series, which
    does not satisfy the functional equation.
    """
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)", code="steady_state.domain")
    if s < 0:
        raise DomainError("transform argument must be nonnegative", code="steady_state.domain")
    phi = ev.phi
    sign = 1.0 if strict_paper else -1.0
    p_star, t_star, _ = _proportional_parts(ev, delta, delta * phi, tol, depth)
    denom = 1.0 - sign * delta * t_star
    if denom == 0.0:
        raise PoleError("degenerate equation for v(delta Phi)", code="steady_state.degenerate")
    v_star = p_star / denom
    if s == 0:
        return 1.0
    p, t, _ = _proportional_parts(ev, delta, s, tol, depth)
    return p + sign * v_star * (s / phi) * t


def proportional_truncation_depth(ev, delta, s, tol=1e-14):
    return _proportional_parts(ev, delta, s, tol, None)[2]


def proportional_equation_residual(ev: ScaleFunction, delta, s, strict_paper=False):
    """v(s) - [q/(q - psi(s)) v(delta s) + q s / (Phi (psi(s) - q)) v(delta Phi)]."""
    q, phi = ev.q, ev.phi
    v = lambda t: lst_proportional(ev, delta, t, strict_paper=strict_paper)
    ps = float(ev.model.psi(s))
    return v(s) - (q / (q - ps) * v(delta * s) + q * s / (phi * (ps - q)) * v(delta * phi))


# ---------------------------------------------------------------------------
# compound Poisson input with exponential jumps, reflection around Exp(beta)


def _check_cpp(ev):
    m = ev.model
    if not (m.sigma == 0 and isinstance(m.jumps, Exponential)):
        raise UnsupportedModelError("needs compound Poisson input with exponential jumps and no "
                                    "Gaussian part", code="steady_state.unsupported")


def cpp_reflect_pieces(ev: ScaleFunction, beta):
    """Ingredients of the printed assembly: roots q+ and q-, A-, G(q), H(theta, u).

    ``u_tilde`` arguments are transforms theta -> int exp(-theta x) u(dx).
    """
    _check_cpp(ev)
    m = ev.model
    p, lam, mu, q = m.drift, m.jump_rate, m.jumps.rate, ev.q
    b = q + lam - mu * p
    disc = math.sqrt(b * b + 4 * p * q * mu)
    qp, qm = (b + disc) / (2 * p), (b - disc) / (2 * p)
    a_plus = (mu + qp) / (qp - qm)
    a_minus = (mu + qm) / (qp - qm)

    def H(theta, u_tilde):
        return (q / p) * a_minus * (
            u_tilde(qp) * (qp - qm) / ((theta - qp) * (theta - qm))
            - u_tilde(theta) * 2 * qp / (theta ** 2 - qp ** 2)
            + u_tilde(theta + qp - qm) * 2 * qm / (theta ** 2 - qm ** 2))

    G = beta * q / (p * (beta - qm)) * (qm - qp) / (qm * qp)
    return {"q_plus": qp, "q_minus": qm, "A_plus": a_plus, "A_minus": a_minus, "G": G, "H": H, "p": p}


def lst_cpp_reflect(ev: ScaleFunction, beta, s, strict_paper=False):
    """E exp(-s V) for F(y) = (B - y)^+, B ~ Exponential(beta), compound Poisson input.

    Default: with pi = pi0 delta_0 + (1 - pi0) Exp(beta) and
    pi~(theta) = pi0 + (1 - pi0) beta / (beta + theta),

        E exp(-s V) = q (pi~(Phi) - pi~(s)) / (psi(s) - q) + pi~(Phi) E exp(-s S).

    The first term is the resolvent contribution and the second combines the
    density and the atom of the transition law. ``strict_paper`` instead
    assembles H(s, pi) + q pi~(Phi)(s - Phi)/(Phi(psi(s) - q)) + W(0) pi~(Phi) with
    pi~(theta) = pi(0) + beta/(beta + theta) and pi(0) from G(q) and H.
    """
    _check_cpp(ev)
    q, phi = ev.q, ev.phi
    if strict_paper:
        pc = cpp_reflect_pieces(ev, beta)
        H, G, qp = pc["H"], pc["G"], pc["q_plus"]
        poles = [r for r in (qp, -qp, pc["q_minus"], -pc["q_minus"]) if abs(s - r) < 1e-8]
        if poles:
            raise PoleError(f"printed H(theta, u) is singular at theta = {poles[0]:.12g}",
                            code="steady_state.pole")
        eps = lambda t: beta / (beta + t)
        pi0 = (G * beta / (beta + qp) + H(0.0, eps) - H(beta, eps)) / (1.0 - G)
        pit = lambda t: pi0 + beta / (beta + t)
        psi_s = float(ev.model.psi(s))
        return (H(s, pit) + q * pit(phi) * (s - phi) / (phi * (psi_s - q))
                + (pc["A_plus"] - pc["A_minus"]) / pc["p"] * pit(phi))
    if s == 0:
        return 1.0
    pi0, _ = pi_zero_fixed_point(ev, beta)
    pit = lambda t: pi0 + (1.0 - pi0) * beta / (beta + t)
    ls = sup_law(ev).laplace(s)
    if abs(s - phi) < _NEAR_PHI:
        # q (pi~(Phi) - pi~(s)) / (psi(s) - q) -> -q pi~'(Phi) / psi'(Phi)
        d_pit = -(1.0 - pi0) * beta / (beta + phi) ** 2
        return -q * d_pit / ev.psi_prime_phi + pit(phi) * ls
    return q * (pit(phi) - pit(s)) / (float(ev.model.psi(s)) - q) + pit(phi) * ls


def cpp_reflect_pi_zero_printed(ev: ScaleFunction, beta):
    """pi(0) from the printed closed form (G(q) and H), for comparison with the fixed point."""
    pc = cpp_reflect_pieces(ev, beta)
    eps = lambda t: beta / (beta + t)
    return (pc["G"] * beta / (beta + pc["q_plus"]) + pc["H"](0.0, eps) - pc["H"](beta, eps)) / (1.0 - pc["G"])


def lst_grid(ev, f, s_values, pi=None):
    """E exp(-s V) on a grid of s, choosing the closed form where one exists."""
    out = []
    for s in s_values:
        s = float(s)
        if isinstance(f, Clearing):
            out.append(lst_constant_level(ev, None, s))
        elif isinstance(f, ConstantLevel):
            out.append(lst_constant_level(ev, f.b, s))
        elif isinstance(f, Proportional):
            out.append(lst_proportional(ev, f.delta, s))
        elif isinstance(f, ReflectAroundB) and isinstance(f.b, Exponential) and \
                ev.model.sigma == 0 and isinstance(ev.model.jumps, Exponential):
            out.append(lst_cpp_reflect(ev, f.b.rate, s))
        else:
            pi = pi if pi is not None else analytic_pi(ev, f)
            out.append(steady_lst(ev, pi, s))
    return np.array(out)
