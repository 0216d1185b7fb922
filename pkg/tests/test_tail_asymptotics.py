import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyclear import tail_asymptotics as ta
from levyclear.embedded_chain import Clearing, ConstantLevel, ReflectAroundB, simulate_chain
from levyclear.errors import PreconditionError, UnsupportedModelError
from levyclear.fluctuation import sample_supremum, sup_law
from levyclear.levy_model import Deterministic, Exponential, LevyModel, cpp_exponential
from levyclear.scale_fn import ScaleFunction


def test_kappa_product_is_q(ev_cpp, ev_bm, ev_pareto):
    for ev in (ev_cpp, ev_bm, ev_pareto):
        assert ta.kappa_at_zero(ev) * ta.kappa_hat(ev, 0.0) == pytest.approx(ev.q, rel=1e-15)
        assert float(ta.kappa(ev, 0.0)) == pytest.approx(ta.kappa_at_zero(ev), rel=1e-12)


def test_kappa_vanishes_at_cramer_root(ev_cpp):
    gamma = ev_cpp.model.cramer_root(ev_cpp.q)
    assert abs(float(ta.kappa(ev_cpp, -gamma))) < 1e-12


@pytest.mark.parametrize("name", ["ev_cpp", "ev_bm", "ev_jd"])
def test_m_q_against_finite_differences(name, request):
    ev = request.getfixturevalue(name)
    assert abs(ta.m_q(ev) - ta.m_q_finite_difference(ev)) < 1e-6


@settings(max_examples=15, deadline=None)
@given(q=st.floats(0.1, 5.0), extra=st.floats(0.1, 2.0))
def test_m_q_random_cpp(q, extra):
    ev = ScaleFunction(cpp_exponential(1.0 + extra, 1.0, 1.0), q)
    # the root approaches the jump-transform pole for large drifts, which inflates the
    # O(h^2) truncation error of the difference quotient; a smaller step keeps it below 1e-6
    assert abs(ta.m_q(ev) - ta.m_q_finite_difference(ev, h=2e-5)) < 1e-6


def test_shortcut_m_fails_finite_differences(ev_cpp):
    assert ta.m_q(ev_cpp) == pytest.approx(4 + 2 * math.sqrt(2), rel=1e-10)
    assert abs(ta.m_q_at_phi(ev_cpp) - ta.m_q_finite_difference(ev_cpp)) > 1.0


def test_clearing_constant_matches_supremum_tail(ev_cpp, ev_jd):
    for ev in (ev_cpp, ev_jd):
        asym = ta.cramer_asymptote(ev, Clearing())
        assert asym.rate == pytest.approx(ev.model.cramer_root(ev.q))
        assert asym.inputs["p_gap"] == 1.0
        assert asym.constant == pytest.approx(ta.supremum_tail_constant(ev), rel=1e-6)


def test_cpp_clearing_numbers(ev_cpp):
    asym = ta.cramer_asymptote(ev_cpp, Clearing())
    assert asym.rate == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    assert asym.constant == pytest.approx(1 - 1 / math.sqrt(2), rel=1e-9)
    # the closed-form supremum law is a pure exponential beyond its atom, so the asymptote is exact here
    law = sup_law(ev_cpp)
    assert float(law.survival(20.0)) == pytest.approx(float(asym.predict(20.0)), rel=1e-6)


def test_cramer_rejects_lattice_and_heavy(ev_pareto):
    lattice = ScaleFunction(LevyModel(drift=2.0, jump_rate=1.0, jumps=Deterministic(1.0)), 1.0)
    with pytest.raises(UnsupportedModelError):
        ta.cramer_asymptote(lattice, Clearing())
    with pytest.raises(PreconditionError) as err:
        ta.cramer_asymptote(ev_pareto, Clearing())
    assert err.value.code == "tail_asymptotics.heavy_tail"
    assert not ta.cramer_condition(ev_pareto, np.zeros(10))["satisfied"]


def test_cramer_needs_samples(ev_cpp):
    with pytest.raises(PreconditionError):
        ta.cramer_asymptote(ev_cpp, ReflectAroundB(Exponential(1.0)))


def test_cramer_moment_check_flags_heavy_samples(ev_cpp):
    rng = np.random.default_rng(1)
    heavy = rng.exponential(1.0 / 0.5, 200_000)  # E exp(gamma F) is infinite for rate 0.5 < gamma
    assert not ta.cramer_condition(ev_cpp, heavy)["moment_stable"]
    assert ta.cramer_condition(ev_cpp, rng.exponential(1.0, 200_000))["moment_stable"]


def test_exact_constant_dominates(ev_cpp):
    cs = simulate_chain(ev_cpp, ReflectAroundB(Exponential(1.0)), 200_000, seed=4)
    asym = ta.cramer_asymptote(ev_cpp, ReflectAroundB(Exponential(1.0)), cs.z_flat, cs.z.shape)
    assert asym.inputs["constant_exact"] > asym.constant
    assert asym.constant == pytest.approx(asym.inputs["constant_supremum"] * asym.inputs["p_gap"])


def test_alpha_zero_collapse(ev_pareto):
    for c in (0.0, 0.5, 2.0):
        asym = ta.convolution_equiv_asymptote(ev_pareto, Clearing(), 0.0, c)
        assert asym.constant == pytest.approx(c + 1.0 / ev_pareto.q, rel=1e-12)
    asym = ta.convolution_equiv_asymptote(ev_pareto, Clearing(), 0.0)
    x = np.array([5.0, 50.0])
    assert np.allclose(asym.predict(x), x ** -2.5)


def test_alpha_near_zero_is_continuous(ev_cpp):
    fu = np.zeros(1000)
    k = ta.convolution_equiv_asymptote(ev_cpp, Clearing(), 1e-9, 0.0, fu).constant
    assert k == pytest.approx(1.0 / ev_cpp.q, rel=1e-6)


def test_convolution_precondition(ev_cpp):
    # Exponential(1) jumps: log E exp(alpha X(1)) reaches q = 1 before alpha = 1
    with pytest.raises(PreconditionError):
        ta.convolution_equiv_asymptote(ev_cpp, Clearing(), 0.9, 0.0, np.zeros(10))


def test_exponential_synthetic_fit():
    x = np.random.default_rng(7).exponential(0.5, 2_000_000)
    fit = ta.empirical_tail_fit(x)
    assert fit.rate == pytest.approx(2.0, abs=0.05)
    assert fit.rate_ci[0] < 2.0 < fit.rate_ci[1]


def test_cpp_clearing_fit(ev_cpp):
    rng = np.random.default_rng(8)
    fit = ta.empirical_tail_fit(sample_supremum(ev_cpp, rng, 2_000_000))
    assert fit.rate == pytest.approx(ev_cpp.model.cramer_root(1.0), rel=0.05)


def test_heavy_mode_ratio():
    x = np.random.default_rng(9).pareto(2.5, 2_000_000) + 1.0
    fit = ta.empirical_tail_fit(x, mode="heavy", tail_function=lambda t: t ** -2.5)
    assert np.all(np.abs(fit.ratio - 1) < 0.2)
    with pytest.raises(PreconditionError):
        ta.empirical_tail_fit(x, mode="heavy")


def test_too_few_exceedances():
    with pytest.raises(PreconditionError):
        ta.empirical_tail_fit(np.random.default_rng(0).exponential(1.0, 20_000))


def test_bad_window():
    with pytest.raises(PreconditionError):
        ta.empirical_tail_fit(np.ones(10), window=(0.9, 0.5))


def test_bounds_clearing_lower_is_tight(ev_cpp):
    cs = simulate_chain(ev_cpp, Clearing(), 500_000, seed=5)
    rep = ta.tail_bounds_check(ev_cpp, Clearing(), cs.u_flat, cs.z_flat, np.linspace(0, 6, 20),
                               np.random.default_rng(6))
    assert rep["violations"] == [] and rep["ordered"] and rep["p_gap"] == 1.0
    ok = np.abs(rep["lower"] - rep["middle"]) < 4 * np.hypot(rep["lower_se"], rep["middle_se"]) + 1e-12
    assert np.all(ok)


@pytest.mark.parametrize("f", [ReflectAroundB(Exponential(1.0)), ConstantLevel(Exponential(2.0))])
def test_bounds_hold(ev_cpp, f):
    cs = simulate_chain(ev_cpp, f, 500_000, seed=7)
    rep = ta.tail_bounds_check(ev_cpp, f, cs.u_flat, cs.z_flat, np.linspace(0, 8, 20),
                               np.random.default_rng(8))
    assert rep["violations"] == [] and rep["ordered"]


def test_asymptote_dict(ev_cpp):
    d = ta.cramer_asymptote(ev_cpp, Clearing()).to_dict()
    assert d["regime"] == "cramer" and "m_q" in d and "gamma" in d
