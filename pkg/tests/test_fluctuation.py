import math

import numpy as np
import pytest
from scipy import integrate, stats

from levyclear.errors import DomainError, UnsupportedModelError
from levyclear.fluctuation import (inf_law_rate, ks_distance, resolvent, resolvent_integral_form,
                                   sample_supremum, simulate_extremes, simulate_reflected, step_sample,
                                   sup_law, transition, transition_chi_square)
from levyclear.levy_model import Deterministic, LevyModel, cpp_exponential
from levyclear.scale_fn import ScaleFunction


def test_inf_rate_brownian(ev_bm):
    assert inf_law_rate(ev_bm) == pytest.approx(math.sqrt(3) - 1, rel=1e-13)


@pytest.mark.parametrize("name,model", [("ev_bm", "bm"), ("ev_cpp", "cpp")])
def test_inf_is_exponential_by_path_simulation(name, model, request, rng):
    ev, m = request.getfixturevalue(name), request.getfixturevalue(model)
    draws = -simulate_extremes(m, 1.0, 200_000, rng)["inf"]
    mean, se = draws.mean(), draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(mean - 1.0 / inf_law_rate(ev)) < 3 * se


def test_sup_atoms(ev_bm, ev_cpp):
    assert sup_law(ev_bm).atom == 0.0
    assert sup_law(ev_cpp).atom == pytest.approx((1.0 / ev_cpp.phi) * 0.5, rel=1e-13)
    big = ScaleFunction(cpp_exponential(2.0, 1.0, 1.0), 1e4)
    assert sup_law(big).atom == pytest.approx(1.0, abs=2e-4)


def test_sup_law_rejects_lattice_jumps():
    ev = ScaleFunction(LevyModel(drift=2.0, jump_rate=1.0, jumps=Deterministic(1.0)), 1.0)
    with pytest.raises(UnsupportedModelError):
        sup_law(ev)


@pytest.mark.parametrize("name,tol", [("ev_bm", 1e-8), ("ev_cpp", 1e-8), ("ev_jd", 1e-6), ("ev_pareto", 1e-6)])
def test_sup_law_total_mass(name, tol, request):
    law = sup_law(request.getfixturevalue(name))
    mass = law.atom + integrate.quad(lambda y: float(law.density(y)), 0, np.inf, limit=400,
                                     points=None)[0]
    assert mass == pytest.approx(1.0, abs=tol)


@pytest.mark.parametrize("name", ["ev_bm", "ev_cpp"])
def test_sup_cdf_formula(name, request):
    ev = request.getfixturevalue(name)
    law = sup_law(ev)
    xs = np.linspace(0.1, 8, 30)
    assert np.allclose(law.cdf(xs), 1 + ev.q / ev.phi * ev.w(xs) - ev.z(xs), atol=1e-12)


@pytest.mark.parametrize("name", ["ev_bm", "ev_cpp", "ev_jd", "ev_pareto"])
def test_sup_cdf_monotone_and_differentiable(name, request):
    law = sup_law(request.getfixturevalue(name))
    xs = np.linspace(0.05, 10, 200)
    cdf = law.cdf(xs)
    assert np.all(np.diff(cdf) >= -1e-12)
    h = 1e-5
    fd = (law.cdf(xs + h) - law.cdf(xs - h)) / (2 * h)
    assert np.max(np.abs(fd - law.density(xs))) < 1e-5


def test_sup_laplace_transform(ev_cpp, ev_jd):
    for ev in (ev_cpp, ev_jd):
        law = sup_law(ev)
        s = 0.8
        num = law.atom + integrate.quad(lambda y: math.exp(-s * y) * float(law.density(y)), 0, np.inf, limit=400)[0]
        ref = ev.q * (s - ev.phi) / (ev.phi * (float(ev.model.psi(s)) - ev.q))
        assert num == pytest.approx(ref, abs=1e-7)
        assert law.laplace(s) == pytest.approx(ref, rel=1e-10)


def test_resolvent_vanishes_at_zero(ev_bm, ev_cpp):
    for ev in (ev_bm, ev_cpp):
        assert resolvent(ev, 0.0, np.array([0.5, 2.0])) == pytest.approx([0.0, 0.0], abs=1e-14)


def test_resolvent_against_integral_form(ev_bm):
    assert resolvent(ev_bm, 1.0, 2.0) == pytest.approx(resolvent_integral_form(ev_bm, 1.0, 2.0), abs=1e-8)


@pytest.mark.parametrize("name", ["ev_bm", "ev_cpp"])
def test_killing_identity(name, request):
    ev = request.getfixturevalue(name)
    for x in (0.5, 1.0, 3.0):
        mass = integrate.quad(lambda y: float(resolvent(ev, x, y)), 0, np.inf, points=None, limit=200)[0]
        assert ev.q * mass == pytest.approx(1 - math.exp(-ev.phi * x), abs=1e-6)


def test_transition_from_zero_is_supremum(ev_cpp):
    law, sup = transition(ev_cpp), sup_law(ev_cpp)
    ys = np.linspace(0.1, 6, 20)
    assert np.allclose(law.density(0.0, ys), sup.density(ys), atol=1e-13)
    assert float(law.atom(0.0)) == pytest.approx(sup.atom)


@pytest.mark.parametrize("name", ["ev_bm", "ev_cpp", "ev_jd"])
def test_transition_mass(name, request):
    law = transition(request.getfixturevalue(name))
    for x in (0.0, 1.0, 2.0):
        assert law.total_mass(x) == pytest.approx(1.0, abs=1e-6)


def test_transition_mass_pareto(ev_pareto):
    law = transition(ev_pareto)
    assert law.total_mass(1.0) == pytest.approx(1.0, abs=1e-4)


def test_strict_atom_breaks_normalisation(ev_cpp):
    strict = transition(ev_cpp, strict_paper=True)
    assert float(strict.atom(0.0)) == pytest.approx(ev_cpp.w0)
    assert strict.total_mass(0.0) - 1.0 == pytest.approx(ev_cpp.w0 * (1 - ev_cpp.q / ev_cpp.phi), abs=1e-8)


def test_transition_density_against_exact_paths(bm, ev_bm, rng):
    ys = simulate_reflected(bm, 1.0, 2.0, 1_000_000, rng)
    edges = np.linspace(0, 6, 31)
    counts = np.histogram(ys, edges)[0]
    width = edges[1] - edges[0]
    law = transition(ev_bm)
    cell = [integrate.quad(lambda y: float(law.density(2.0, y)), a, b)[0] / width
            for a, b in zip(edges[:-1], edges[1:])]
    assert np.max(np.abs(counts / (ys.size * width) - cell)) < 0.01


def test_transition_survival_against_cpp_paths(cpp, ev_cpp, rng):
    ys = simulate_reflected(cpp, 1.0, 1.5, 400_000, rng)
    law = transition(ev_cpp)
    for y in (0.5, 1.5, 3.0, 6.0):
        p = np.mean(ys > y)
        assert abs(p - law.survival(1.5, y)) < 4 * math.sqrt(p * (1 - p) / ys.size) + 1e-12


def test_transition_domain(ev_cpp):
    with pytest.raises(DomainError):
        transition(ev_cpp).density(-1.0, 1.0)


def test_step_sample_from_zero(ev_cpp, rng):
    sup = sup_law(ev_cpp)
    draws = step_sample(ev_cpp, 0.0, rng, size=200_000)
    assert ks_distance(draws, sup.cdf, sup.atom) < 1.5 * 1.36 / math.sqrt(draws.size)


def test_step_sample_large_start(ev_bm, rng):
    z = 50.0 / ev_bm.phi
    draws = step_sample(ev_bm, z, rng, size=200_000)
    target = z - 1 / ev_bm.phi + sup_law(ev_bm).mean()
    assert abs(draws.mean() - target) < 3 * draws.std(ddof=1) / math.sqrt(draws.size)


@pytest.mark.parametrize("name", ["ev_cpp", "ev_bm", "ev_pareto"])
def test_step_sample_chi_square(name, request, rng):
    ev = request.getfixturevalue(name)
    law = transition(ev)
    for x in (0.0, 0.5, 2.0):
        res = transition_chi_square(law, x, step_sample(ev, x, rng, size=100_000))
        assert res["p_value"] > 0.001


def test_step_sample_scalar_and_vector(ev_cpp, rng):
    assert isinstance(step_sample(ev_cpp, 1.0, rng), float)
    assert step_sample(ev_cpp, np.array([0.0, 1.0, 2.0]), rng).shape == (3,)
    with pytest.raises(DomainError):
        step_sample(ev_cpp, -1.0, rng)


def test_path_and_inverse_samplers_agree(ev_pareto, rng):
    a = sample_supremum(ev_pareto, rng, 100_000, method="path")
    b = sample_supremum(ev_pareto, rng, 100_000, method="inverse")
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_sup_sampler_matches_law_jump_diffusion(ev_jd, rng):
    law = sup_law(ev_jd)
    draws = sample_supremum(ev_jd, rng, 100_000)
    assert ks_distance(draws, law.cdf) < 1.5 * 1.36 / math.sqrt(draws.size)


def test_ks_distance_self_check(rng):
    d = rng.exponential(1.0, 50_000)
    assert ks_distance(d, lambda y: 1 - np.exp(-y)) == pytest.approx(stats.kstest(d, "expon").statistic, abs=1e-12)
