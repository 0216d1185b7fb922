"""Command-line entry point: ``levyclear <subcommand> --config run.json``.

Each subcommand writes one CSV (17 significant digits, header row) and a
JSON sidecar carrying the library version, the config hash, the seed, the
tolerances and the wall time. Failures print a machine-readable error record
on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import tail_asymptotics as ta
from .config import STATIONARY_METHODS, RunConfig, emit_config, parse_config
from .embedded_chain import ReflectAroundB, pi_zero_fixed_point, simulate_chain, stationary_grid
from .errors import ConfigError, LevyClearError, UnsupportedModelError
from .fluctuation import ks_distance, step_sample, sup_law, transition, transition_chi_square
from .levy_model import Exponential
from .scale_fn import ScaleFunction
from .steady_state import analytic_pi, lst_grid, steady_cdf, steady_functional

COMMANDS = ("model-info", "scale", "transition", "stationary", "lst", "steady", "simulate", "tail",
            "sample-step", "compare")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _evaluator(cfg: RunConfig):
    s = cfg.solver
    return ScaleFunction(cfg.model, cfg.q, method=cfg.scale_method, n_nodes=s["talbot_nodes"])


def _chain(cfg: RunConfig, ev):
    sim = cfg.simulation
    return simulate_chain(ev, cfg.functional, sim["draws"], burnin=sim["burnin"], seed=sim["seed"],
                          shards=sim["shards"], chains=sim["chains"])


# -- subcommands: each returns (header, rows, summary) ------------------------

def cmd_model_info(cfg, ev):
    m = cfg.model
    thetas = cfg.grid_points("0:5:51")
    rows = [(t, float(m.psi(t)), float(m.psi_prime(max(t, 1e-12)))) for t in thetas]
    gamma = m.cramer_root(cfg.q)
    summary = {"phi": ev.phi, "psi_prime_0": m.psi_prime0, "cramer_root": gamma, "regular": m.regular,
               "bounded_variation": m.bounded_variation, "w0": ev.w0, "scale_method": ev.method.value}
    return ["theta", "psi", "psi_prime"], rows, summary


def cmd_scale(cfg, ev):
    xs = cfg.grid_points("0:10:101")
    pos = xs > 0
    wp = np.full(xs.shape, np.nan)
    if pos.any():
        wp[pos] = ev.w_prime(xs[pos])
    rows = zip(xs, ev.w(xs), wp, ev.z(xs))
    return ["x", "W", "Wprime", "Z"], rows, ev.describe()


def cmd_transition(cfg, ev):
    law = transition(ev, strict_paper=cfg.solver["strict_paper"])
    ys = cfg.grid_points("0:10:101")
    rows, masses = [], {}
    for x in cfg.starts:
        dens, cdf = law.density(x, ys), law.cdf(x, ys)
        rows += [(x, y, d, c) for y, d, c in zip(ys, dens, cdf)]
        masses[_fmt(x)] = {"atom": float(law.atom(x)), "total_mass": law.total_mass(x)}
    return ["x", "y", "density", "cdf"], rows, {"starts": masses}


def cmd_stationary(cfg, ev):
    """Stationary law of the post-adjustment chain; ``--method`` picks mc, grid or fixed-point."""
    s = cfg.solver
    method = s["method"] if s["method"] in STATIONARY_METHODS else "grid"
    if method == "mc":
        cfg.require_for("simulate")
        ch = _chain(cfg, ev)
        z = ch.z_flat
        atom = float(np.mean(z == 0.0))
        edges = np.quantile(z[z > 0], np.linspace(0.0, 1.0, 201)) if atom < 1 else np.zeros(1)
        counts = np.histogram(z[z > 0], bins=edges)[0] if atom < 1 else np.zeros(0)
        mids = 0.5 * (edges[1:] + edges[:-1])
        dens = counts / (z.size * np.diff(edges)) if atom < 1 else np.zeros(0)
        rows = [(0.0, atom)] + list(zip(mids, dens))
        return ["y", "mass_or_density"], rows, {"atom": atom, "provenance": "MonteCarlo",
                                                 "draws": z.size}
    if method == "fixed-point":
        if not (isinstance(cfg.functional, ReflectAroundB) and isinstance(cfg.functional.b, Exponential)):
            raise UnsupportedModelError("the fixed-point solver needs reflect-around-B with exponential B",
                                        code="embedded_chain.unsupported")
        pi0, pi = pi_zero_fixed_point(ev, cfg.functional.b.rate)
        ys = cfg.grid_points("0:10:101")
        rows = [(0.0, pi0)] + [(y, d) for y, d in zip(ys[ys > 0], pi.positive_density(ys[ys > 0]))]
        return ["y", "mass_or_density"], rows, {"atom": pi0, "provenance": pi.provenance}
    pi = stationary_grid(ev, cfg.functional, x_max=s["x_max"], n_grid=s["n_grid"], tol=s["tol"],
                         strict_paper=s["strict_paper"])
    rows = pi.to_rows()
    summary = {"atom": pi.atom, "point_masses": {_fmt(k): v for k, v in pi.point_masses.items()},
               "positive_mass": pi.positive_mass(), "provenance": pi.provenance, "meta": pi.meta}
    return ["y", "mass_or_density"], rows, summary


def cmd_lst(cfg, ev):
    s_values = cfg.grid_points("0.1:5:10")
    analytic = lst_grid(ev, cfg.functional, s_values)
    ch = _chain(cfg, ev)
    rows = []
    worst = 0.0
    for s, a in zip(s_values, analytic):
        mc, se = ch.mean_se(np.exp(-s * ch.u))
        worst = max(worst, abs(a - mc) / se if se > 0 else 0.0)
        rows.append((s, a, mc, se))
    return ["s", "analytic", "mc", "mc_se"], rows, {"max_abs_z": worst, "draws": ch.u.size}


def cmd_steady(cfg, ev):
    """E g(V) for g in the configured family, by nested quadrature over the stationary law.

    Exponentials are compared with the closed-form transform, indicators give
    the distribution function and moments use g(y) = y^k for grid values k.
    """
    strict = cfg.solver["strict_paper"]
    pi = analytic_pi(ev, cfg.functional)
    family = cfg.steady_family
    rows = []
    if family == "exponential":
        s_values = cfg.grid_points("0.1:5:10")
        closed = lst_grid(ev, cfg.functional, s_values, pi=pi)
        for s, c in zip(s_values, closed):
            nested = steady_functional(ev, pi, lambda y, s=s: np.exp(-s * y), strict_paper=strict)
            rows.append((s, nested, c))
        header = ["s", "expectation", "closed_form_lst"]
    elif family == "indicator":
        header = ["t", "expectation"]
        rows = [(t, steady_cdf(ev, pi, t)) for t in cfg.grid_points("0:10:21")]
    else:
        header = ["k", "expectation"]
        rows = [(k, steady_functional(ev, pi, lambda y, k=k: y ** k, strict_paper=strict))
                for k in cfg.grid_points("1:3:3")]
    return header, rows, {"family": family, "pi_atom": pi.atom, "pi_provenance": pi.provenance}


def cmd_simulate(cfg, ev):
    ch = _chain(cfg, ev)
    levels = np.linspace(0.0, 1.0, 1001)
    u_q, z_q = np.quantile(ch.u_flat, levels), np.quantile(ch.z_flat, levels)
    mean_u, se_u = ch.mean_se(ch.u)
    atom, atom_se = ch.mean_se(ch.z == 0.0)
    summary = {"draws": ch.u.size, "chains": ch.u.shape[0], "mean_u": mean_u, "mean_u_se": se_u,
               "atom_frequency": atom, "atom_frequency_se": atom_se}
    return ["level", "u_quantile", "z_quantile"], zip(levels, u_q, z_q), summary


def cmd_tail(cfg, ev):
    ch = _chain(cfg, ev)
    t = cfg.tail
    window = tuple(t["window"])
    strict = cfg.solver["strict_paper"]
    if t["regime"] == "cramer":
        asym = ta.cramer_asymptote(ev, cfg.functional, ch.z_flat, ch.z.shape, strict_paper=strict)
        fit = ta.empirical_tail_fit(ch.u_flat, window, mode="light", seed=cfg.simulation["seed"])
        fit_summary = {"fitted_rate": fit.rate, "fitted_rate_ci": fit.rate_ci,
                       "rate_relative_error": abs(fit.rate - asym.rate) / asym.rate,
                       "empirical_level": float(np.mean(fit.level(asym.rate)))}
    else:
        asym = ta.convolution_equiv_asymptote(ev, cfg.functional, t["alpha"], t["c"], ch.z_flat, ch.z.shape)
        fit = ta.empirical_tail_fit(ch.u_flat, window, mode="heavy", tail_function=cfg.model.levy_tail)
        ratio = fit.ratio / asym.constant
        fit_summary = {"ratio_min": float(ratio.min()), "ratio_max": float(ratio.max())}
    pred = asym.predict(fit.x)
    rows = zip(fit.x, fit.survival, pred, fit.survival / pred,
               (fit.survival - 1.96 * fit.survival_se) / pred, (fit.survival + 1.96 * fit.survival_se) / pred)
    summary = {"asymptote": asym.to_dict(), "window": fit.window, "exceedances": fit.exceedances, **fit_summary}
    return ["x", "empirical", "predicted", "ratio", "ratio_ci_low", "ratio_ci_high"], rows, summary


def cmd_sample_step(cfg, ev):
    """Raw one-step draws per start; the chi-square test against the analytic law goes in the sidecar."""
    law = transition(ev)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.simulation["seed"]))
    n = cfg.simulation["draws"]
    rows, tests = [], {}
    for x in cfg.starts:
        draws = step_sample(ev, x, rng, size=n)
        res = transition_chi_square(law, x, draws)
        tests[_fmt(x)] = {k: res[k] for k in ("chi2", "p_value", "atom", "atom_frequency")}
        if x == 0:
            sup = sup_law(ev)
            tests[_fmt(x)]["ks_vs_supremum"] = ks_distance(draws, sup.cdf, sup.atom)
        rows.append(np.column_stack([np.full(n, x), draws]))
    return ["x", "draw"], np.concatenate(rows), {"tests": tests}


HANDLERS = {"model-info": cmd_model_info, "scale": cmd_scale, "transition": cmd_transition,
            "stationary": cmd_stationary, "lst": cmd_lst, "steady": cmd_steady,
            "simulate": cmd_simulate, "tail": cmd_tail, "sample-step": cmd_sample_step}


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_subcommand(command: str, cfg: RunConfig) -> dict:
    """Run one subcommand and write its CSV and sidecar; returns the sidecar."""
    cfg.require_for(command)
    out = Path(cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    ev = _evaluator(cfg)
    header, rows, summary = HANDLERS[command](cfg, ev)
    stem = command.replace("-", "_")
    csv_path = out / f"{stem}.csv"
    write_csv(csv_path, header, rows)
    sidecar = {"library_version": __version__, "command": command, "config_hash": cfg.hash(),
               "config": json.loads(emit_config(cfg)), "seed": cfg.simulation["seed"],
               "shards": cfg.simulation["shards"], "tolerances": {"solver_tol": cfg.solver["tol"]},
               "wall_time_s": time.perf_counter() - start, "csv": csv_path.name,
               "csv_sha256": _digest(csv_path), "summary": summary}
    sidecar = _jsonable(sidecar)
    (out / f"{stem}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8")
    return sidecar


def compare_sidecars(a_path, b_path) -> dict:
    """Compare two runs; differing config hashes are an error, not a diff."""
    a = json.loads(Path(a_path).read_text())
    b = json.loads(Path(b_path).read_text())
    if a.get("config_hash") != b.get("config_hash"):
        raise LevyClearError(f"config hash mismatch: {a.get('config_hash')} vs {b.get('config_hash')}",
                             code="cli.hash_mismatch")
    return {"config_hash": a["config_hash"], "identical_csv": a.get("csv_sha256") == b.get("csv_sha256")}


def build_parser():
    p = argparse.ArgumentParser(prog="levyclear",
                                description="Reflected Lévy storage with random clearing at review epochs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "compare":
            sp.add_argument("first")
            sp.add_argument("second")
            continue
        sp.add_argument("--config", required=True, help="JSON run config ('-' reads stdin)")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--shards", type=int)
        sp.add_argument("--method", help="scale-function method, or mc | grid | fixed-point for stationary")
        sp.add_argument("--strict-paper", action="store_true",
                        help="reproduce the printed formulas verbatim, including known errors")
        sp.add_argument("--grid", help="evaluation grid 'a:b:n'")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            print(json.dumps(compare_sidecars(args.first, args.second)))
            return 0
        text = sys.stdin.read() if args.config == "-" else Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text).with_overrides(seed=args.seed, shards=args.shards, method=args.method,
                                                strict_paper=args.strict_paper, grid=args.grid, out=args.out)
        sidecar = run_subcommand(args.command, cfg)
    except ConfigError as exc:
        print(json.dumps(exc.record()), file=sys.stderr)
        return 2
    except LevyClearError as exc:
        print(json.dumps(exc.record()), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"code": "cli.io", "message": str(exc)}), file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "csv": sidecar["csv"], "config_hash": sidecar["config_hash"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
