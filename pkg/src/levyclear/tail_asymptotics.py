"""Tail asymptotes of the pre-adjustment workload U, sandwich bounds and empirical fits.

Two regimes are covered. In the light-tailed (Cramér) regime the decay rate
is the positive root gamma of log E exp(gamma X(1)) = q, i.e. -gamma is the
negative root of psi = q. In the heavy-tailed regime the jump tail is
convolution equivalent with index alpha and P(U > x) ~ K * Pi_bar(x).

Ladder processes are never simulated. They enter only through

    kappa(q, beta) = (q - psi(beta)) / (Phi(q) - beta),   kappa_hat(q, alpha) = Phi(q) + alpha,

which is the Wiener-Hopf factorisation q - psi(beta) = kappa(q, beta) * kappa_hat(q, -beta)
written in terms of the dual exponent psi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .embedded_chain import Clearing, FunctionalSpec
from .errors import PreconditionError, UnsupportedModelError
from .fluctuation import sample_supremum, sup_law
from .levy_model import Deterministic
from .scale_fn import ScaleFunction


@dataclass
class TailAsymptote:
    """Predicted tail of U.

    ``regime`` is ``"cramer"`` (``P(U > x) ~ constant * exp(-rate x)``) or
    ``"convolution-equivalent"`` (``P(U > x) ~ constant * Pi_bar(x)``).
    """

    regime: str
    constant: float
    rate: Optional[float] = None
    alpha: Optional[float] = None
    constant_se: float = 0.0
    inputs: dict = field(default_factory=dict)
    tail_function: Optional[Callable] = field(default=None, repr=False)

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        if self.regime == "cramer":
            return self.constant * np.exp(-self.rate * x)
        return self.constant * self.tail_function(x)

    def to_dict(self):
        out = {"regime": self.regime, "constant": self.constant, "constant_se": self.constant_se,
               "rate": self.rate, "alpha": self.alpha}
        out.update({k: v for k, v in self.inputs.items() if not callable(v)})
        return out


# -- ladder exponents --------------------------------------------------------

def kappa(ev: ScaleFunction, beta):
    """Upward ladder exponent kappa(q, beta) for beta < Phi(q)."""
    beta = np.asarray(beta, dtype=float)
    return (ev.q - ev.model.psi_extended(beta)) / (ev.phi - beta)


def kappa_hat(ev: ScaleFunction, alpha):
    """Downward ladder exponent; the downward ladder height of X is the running infimum itself."""
    return ev.phi + np.asarray(alpha, dtype=float)


def kappa_at_zero(ev: ScaleFunction):
    return ev.q / ev.phi


def _require_cramer_root(ev):
    gamma = ev.model.cramer_root(ev.q)
    if gamma is None:
        raise PreconditionError(
            "no exponential moments: log E exp(theta X(1)) = q has no positive root; "
            "use the convolution-equivalent regime", code="tail_asymptotics.heavy_tail")
    return gamma


def m_q(ev: ScaleFunction):
    """Derivative of kappa(q, .) at its zero beta = -gamma.

    From q - psi(-gamma) = 0 the quotient rule leaves -psi'(-gamma) / (Phi + gamma).
    """
    gamma = _require_cramer_root(ev)
    return float(-ev.model.psi_prime_extended(-gamma) / (ev.phi + gamma))


def m_q_at_phi(ev: ScaleFunction):
    """The shortcut psi'(Phi)/(2 Phi), kept for strict-paper comparisons.

    It is the kappa derivative evaluated at the wrong root and does not pass
    the finite-difference check.
    """
    return float(ev.psi_prime_phi / (2.0 * ev.phi))


def m_q_finite_difference(ev: ScaleFunction, h=1e-4):
    gamma = _require_cramer_root(ev)
    return float((kappa(ev, -gamma + h) - kappa(ev, -gamma - h)) / (2.0 * h))


# -- Cramér regime -----------------------------------------------------------

def _hill_index(log_values, k_max=1000):
    """Hill estimate of the tail index of exp(log_values), with its standard error."""
    top = np.sort(log_values[log_values > 0])
    k = min(k_max, top.size // 10)
    if k < 50:
        return math.inf, 0.0
    excess = top[-k:] - top[-k - 1]
    index = 1.0 / float(excess.mean())
    return index, index / math.sqrt(k)


def cramer_condition(ev: ScaleFunction, fu_samples, rel_tol=0.05):
    """Check the three Cramér conditions as far as they can be checked.

    The moment condition E exp(gamma F(U)) < inf is judged twice: the sample
    mean has to stabilise when the sample size doubles, and the Hill estimate
    of the tail index of exp(gamma F(U)) must not sit clearly below one. The
    second test catches infinite means, where the standard error used by the
    first one is itself meaningless.
    """
    gamma = ev.model.cramer_root(ev.q)
    report = {"root": gamma, "non_lattice": not isinstance(ev.model.jumps, Deterministic)}
    if gamma is None:
        report.update(satisfied=False, moment_stable=False,
                      reason="no positive root of log E exp(theta X(1)) = q")
        return report
    logs = gamma * np.asarray(fu_samples, dtype=float).ravel()
    v = np.exp(logs)
    n = len(v)
    halves = [float(v[: max(1, n // 4)].mean()), float(v[: max(1, n // 2)].mean()), float(v.mean())]
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    index, index_se = _hill_index(logs)
    stable = (all(np.isfinite(halves)) and abs(halves[2] - halves[1]) <= 3 * se + rel_tol * halves[2]
              and index + 3 * index_se > 1.0)
    report.update(satisfied=bool(stable and report["non_lattice"]), moment_stable=bool(stable),
                  moment_means=halves, moment_se=se, tail_index=index, tail_index_se=index_se)
    return report


def _mean_se(values, shape):
    values = np.asarray(values, dtype=float)
    if shape is not None and values.size == int(np.prod(shape)) and shape[0] > 1:
        means = values.reshape(shape).mean(axis=1)
        return float(means.mean()), float(means.std(ddof=1) / math.sqrt(len(means)))
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def cramer_asymptote(ev: ScaleFunction, f: FunctionalSpec, fu_samples=None, chain_shape=None,
                     strict_paper=False) -> TailAsymptote:
    """Exponential tail of U.

    ``fu_samples`` are stationary draws of F(U) (the post-adjustment states).
    The returned constant is

        C = P(G > F(U)) * kappa(q, 0) / (gamma * m(q)),   G ~ Exp(Phi) independent,

    which is the exact tail constant of the supremum S at an exponential time
    multiplied by P(G > F(U)). Since U = S + (F(U') - G)^+ with S independent
    of the second term, the exact constant is C_S * E exp(gamma (F(U) - G)^+);
    it is reported as ``inputs["constant_exact"]`` and exceeds C unless F = 0.
    """
    model = ev.model
    if isinstance(model.jumps, Deterministic):
        raise UnsupportedModelError("lattice jump law: the Cramér asymptote needs non-lattice jumps",
                                    code="tail_asymptotics.lattice")
    gamma = _require_cramer_root(ev)
    phi = ev.phi
    if fu_samples is None:
        if not isinstance(f, Clearing):
            raise PreconditionError("samples of F(U) are required unless F is clearing",
                                    code="tail_asymptotics.precondition")
        fu_samples = np.zeros(2)
    fu = np.asarray(fu_samples, dtype=float).ravel()
    cond = cramer_condition(ev, fu)
    if not cond["moment_stable"]:
        raise PreconditionError("E exp(gamma F(U)) does not stabilise under doubling; the tail "
                                "of F(U) looks heavier than exponential", code="tail_asymptotics.heavy_tail")
    k0 = kappa_at_zero(ev)
    m = m_q_at_phi(ev) if strict_paper else m_q(ev)
    rate = phi if strict_paper else gamma
    c_sup = k0 / (rate * m)
    p_gap, p_gap_se = _mean_se(np.exp(-phi * fu), chain_shape)
    # E exp(gamma (z - G)^+) for G ~ Exp(phi), integrated over G in closed form
    with np.errstate(over="ignore"):
        lift = np.exp(-phi * fu) + phi * (np.exp(gamma * fu) - np.exp(-phi * fu)) / (phi + gamma)
    lift_mean, lift_se = _mean_se(lift, chain_shape)
    inputs = {"phi": phi, "gamma": gamma, "kappa_q0": k0, "kappa_hat_q0": float(kappa_hat(ev, 0.0)),
              "m_q": m, "m_q_finite_difference": m_q_finite_difference(ev),
              "p_gap": p_gap, "p_gap_se": p_gap_se, "constant_supremum": c_sup,
              "constant_exact": c_sup * lift_mean, "constant_exact_se": c_sup * lift_se,
              "strict_paper": strict_paper}
    return TailAsymptote("cramer", constant=c_sup * p_gap, rate=rate, constant_se=c_sup * p_gap_se,
                         inputs=inputs)


# -- convolution-equivalent regime -------------------------------------------

def convolution_equiv_asymptote(ev: ScaleFunction, f: FunctionalSpec, alpha: float, c: float = 0.0,
                                fu_samples=None, chain_shape=None) -> TailAsymptote:
    """Heavy tail P(U > x) ~ K Pi_bar(x) for a jump law asserted to lie in S(alpha).

    ``c`` is the constant in P(F(y) > x) ~ c Pi_bar(x). With L = log E exp(alpha X(1)),

        K = c q/(q - L) + q/(q - L)^2 * (E exp(alpha F(U)) + (Phi + alpha)/Phi * E[(1 - exp(-alpha (G - F(U)))); G > F(U)]).

    The last expectation is integrated over G ~ Exp(Phi) in closed form,
    e^{-Phi z} alpha/(Phi + alpha), which removes one layer of Monte Carlo.
    """
    if alpha < 0 or c < 0:
        raise PreconditionError("alpha and c must be nonnegative", code="tail_asymptotics.precondition")
    q, phi = ev.q, ev.phi
    log_mgf = float(ev.model.log_mgf(alpha)) if alpha > 0 else 0.0
    if not log_mgf < q:
        raise PreconditionError(f"log E exp(alpha X(1)) = {log_mgf} >= q; the Cramér regime applies instead",
                                code="tail_asymptotics.precondition")
    gap = q - log_mgf
    if alpha == 0:
        k, k_se, moments = c + 1.0 / q, 0.0, (1.0, 0.0, 0.0, 0.0)
    else:
        if fu_samples is None:
            raise PreconditionError("samples of F(U) are required for alpha > 0",
                                    code="tail_asymptotics.precondition")
        fu = np.asarray(fu_samples, dtype=float).ravel()
        e1, e1_se = _mean_se(np.exp(alpha * fu), chain_shape)
        e2, e2_se = _mean_se(np.exp(-phi * fu) * alpha / (phi + alpha), chain_shape)
        w = q / gap ** 2
        k = c * q / gap + w * (e1 + (phi + alpha) / phi * e2)
        k_se = w * math.hypot(e1_se, (phi + alpha) / phi * e2_se)
        moments = (e1, e1_se, e2, e2_se)
    inputs = {"phi": phi, "log_mgf_alpha": log_mgf, "mgf_x_eq": q / gap, "c": c,
              "e_exp_alpha_fu": moments[0], "e_exp_alpha_fu_se": moments[1],
              "gap_term": moments[2], "gap_term_se": moments[3]}
    return TailAsymptote("convolution-equivalent", constant=k, alpha=alpha, constant_se=k_se,
                         inputs=inputs, tail_function=ev.model.levy_tail)


# -- empirical fits ----------------------------------------------------------

@dataclass
class TailFit:
    mode: str
    x: np.ndarray
    survival: np.ndarray
    survival_se: np.ndarray
    exceedances: int
    window: tuple
    rate: Optional[float] = None
    rate_ci: Optional[tuple] = None
    rate_se: Optional[float] = None
    ratio: Optional[np.ndarray] = None
    ratio_ci: Optional[np.ndarray] = None

    def level(self, rate):
        """Empirical P(U > x) exp(rate x) on the window grid."""
        return self.survival * np.exp(rate * self.x)


def empirical_tail_fit(samples, window=(0.99, 0.9999), mode="light", tail_function=None,
                       n_points=25, n_boot=400, seed=0, min_exceedances=500) -> TailFit:
    """Fit the empirical tail of ``samples`` between two quantiles.

    Light mode regresses log P(U > x) on x; the confidence interval comes from a
    multinomial bootstrap of the counts in the window cells, which is the same
    as resampling the data because the fit depends only on those counts.
    Heavy mode returns P(U > x) / tail_function(x) with binomial intervals.
    """
    lo_q, hi_q = window
    if not 0 < lo_q < hi_q < 1:
        raise PreconditionError(f"bad quantile window {window}", code="tail_asymptotics.window")
    data = np.asarray(samples, dtype=float).ravel()
    n = data.size
    lo, hi = np.quantile(data, [lo_q, hi_q])
    exceed = int(np.count_nonzero(data > lo))
    if exceed < min_exceedances or not hi > lo:
        raise PreconditionError(f"only {exceed} exceedances in the window; widen it or draw more samples",
                                code="tail_asymptotics.window")
    x = np.linspace(lo, hi, n_points)
    sorted_data = np.sort(data)
    counts_above = n - np.searchsorted(sorted_data, x, side="right")
    surv = counts_above / n
    surv_se = np.sqrt(surv * (1 - surv) / n)
    fit = TailFit(mode=mode, x=x, survival=surv, survival_se=surv_se, exceedances=exceed,
                  window=(float(lo), float(hi)))
    if mode == "light":
        fit.rate = float(-np.polyfit(x, np.log(surv), 1)[0])
        cells = np.append(-np.diff(counts_above), counts_above[-1])
        rng = np.random.default_rng(seed)
        draws = rng.multinomial(n, np.append(cells, n - cells.sum()) / n, size=n_boot)[:, :-1]
        boot_above = np.cumsum(draws[:, ::-1], axis=1)[:, ::-1]
        with np.errstate(divide="ignore"):
            logs = np.log(boot_above / n)
        ok = np.all(np.isfinite(logs), axis=1)
        slopes = -np.polyfit(x, logs[ok].T, 1)[0]
        fit.rate_se = float(slopes.std(ddof=1))
        fit.rate_ci = tuple(float(v) for v in np.quantile(slopes, [0.025, 0.975]))
    elif mode == "heavy":
        if tail_function is None:
            raise PreconditionError("heavy mode needs a reference tail function",
                                    code="tail_asymptotics.precondition")
        ref = np.asarray(tail_function(x), dtype=float)
        fit.ratio = surv / ref
        fit.ratio_ci = np.stack([(surv - 1.96 * surv_se) / ref, (surv + 1.96 * surv_se) / ref], axis=1)
    else:
        raise PreconditionError(f"unknown fit mode {mode!r}", code="tail_asymptotics.precondition")
    return fit


# -- sandwich bounds ---------------------------------------------------------

def tail_bounds_check(ev: ScaleFunction, f: FunctionalSpec, u_samples, fu_samples, x_grid,
                      rng: np.random.Generator, n_aux=None, n_se=3.0):
    """Check lower(x) <= P(U > x) <= upper(x) empirically on ``x_grid``.

    lower(x) = P(S > x) P(G > F(U)) and
    upper(x) = P(X(e_q) + F(U) > x) + lower(x), where S, G and X(e_q) = S - G'
    are drawn independently (Wiener-Hopf) and F(U) is an independent
    resample of ``fu_samples``.
    """
    u = np.sort(np.asarray(u_samples, dtype=float).ravel())
    fu = np.asarray(fu_samples, dtype=float).ravel()
    n_aux = n_aux or u.size
    phi = ev.phi
    s1 = np.sort(sample_supremum(ev, rng, n_aux))
    s2 = sample_supremum(ev, rng, n_aux)
    x_eq = s2 - rng.exponential(1.0 / phi, n_aux)
    f_ind = rng.choice(fu, size=n_aux, replace=True)
    upper_sum = np.sort(x_eq + f_ind)
    p_gap = float(np.mean(np.exp(-phi * fu)))

    def surv(sorted_vals, xs):
        return (sorted_vals.size - np.searchsorted(sorted_vals, xs, side="right")) / sorted_vals.size

    xs = np.asarray(x_grid, dtype=float)
    mid, p_sup, p_sum = surv(u, xs), surv(s1, xs), surv(upper_sum, xs)
    lower = p_sup * p_gap
    upper = p_sum + lower
    se_mid = np.sqrt(mid * (1 - mid) / u.size)
    se_low = np.sqrt(p_sup * (1 - p_sup) / n_aux) * p_gap
    se_up = np.sqrt(p_sum * (1 - p_sum) / n_aux + se_low ** 2)
    low_bad = lower - n_se * np.hypot(se_low, se_mid) > mid
    up_bad = mid - n_se * np.hypot(se_up, se_mid) > upper
    violations = [{"x": float(x), "side": side, "lower": float(lo), "middle": float(m), "upper": float(up)}
                  for x, lo, m, up, lb, ub in zip(xs, lower, mid, upper, low_bad, up_bad)
                  for side, bad in (("lower", lb), ("upper", ub)) if bad]
    return {"x": xs, "lower": lower, "middle": mid, "upper": upper, "lower_se": se_low,
            "middle_se": se_mid, "upper_se": se_up, "p_gap": p_gap, "violations": violations,
            "ordered": bool(np.all(lower <= upper))}


def supremum_tail_constant(ev: ScaleFunction):
    """exp(gamma x) P(S > x) as x -> inf, from the analytic law (for checks)."""
    gamma = _require_cramer_root(ev)
    law = sup_law(ev)
    # far enough for the subleading poles to be negligible, near enough that
    # the numeric survival (absolute accuracy ~1e-12) still carries digits
    x = 12.0 / gamma
    return float(law.survival(x) * math.exp(gamma * x))


__all__ = ["TailAsymptote", "TailFit", "kappa", "kappa_hat", "kappa_at_zero", "m_q", "m_q_at_phi",
           "m_q_finite_difference", "cramer_condition", "cramer_asymptote",
           "convolution_equiv_asymptote", "empirical_tail_fit", "tail_bounds_check",
           "supremum_tail_constant"]
