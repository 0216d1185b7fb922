"""Run configuration: JSON parsing with full validation, canonical emission and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .embedded_chain import Clearing, functional_from_dict
from .errors import ConfigError, LevyClearError
from .levy_model import LevyModel
from .scale_fn import Method

SCHEMA_VERSION = 1
STATISTICAL_COMMANDS = {"simulate", "tail", "sample-step", "lst"}
MIN_DRAWS = 10_000
STATIONARY_METHODS = ("mc", "grid", "fixed-point")
STEADY_FAMILIES = ("exponential", "indicator", "moment")

_SOLVER_DEFAULTS = {"method": None, "n_grid": 2000, "x_max": None, "tol": 1e-12,
                    "talbot_nodes": 32, "strict_paper": False}
_SIM_DEFAULTS = {"draws": 1_000_000, "burnin": 100, "seed": None, "shards": 1, "chains": None}
_TAIL_DEFAULTS = {"regime": "cramer", "alpha": 0.0, "c": 0.0, "window": [0.99, 0.9999]}
_TOP_KEYS = {"schema_version", "model", "q", "functional", "solver", "simulation", "tail", "grid",
             "starts", "steady_family", "output"}


def parse_grid(text):
    """``"a:b:n"`` -> (a, b, n) with n >= 2 and a < b."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except (ValueError, AttributeError):
        raise ConfigError(f"grid: expected 'a:b:n', got {text!r}") from None
    if n < 2 or not a < b:
        raise ConfigError(f"grid: need a < b and n >= 2, got {text!r}")
    return a, b, n


@dataclass(frozen=True)
class RunConfig:
    model: LevyModel
    q: float
    functional: object = field(default_factory=Clearing)
    solver: dict = field(default_factory=lambda: dict(_SOLVER_DEFAULTS))
    simulation: dict = field(default_factory=lambda: dict(_SIM_DEFAULTS))
    tail: dict = field(default_factory=lambda: copy.deepcopy(_TAIL_DEFAULTS))
    grid: Optional[str] = None
    starts: tuple = (0.0,)
    steady_family: str = "exponential"
    output: dict = field(default_factory=lambda: {"dir": "out"})
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return {"schema_version": self.schema_version, "model": self.model.to_dict(), "q": self.q,
                "functional": self.functional.to_dict(), "solver": dict(self.solver),
                "simulation": dict(self.simulation), "tail": copy.deepcopy(self.tail),
                "grid": self.grid, "starts": list(self.starts), "steady_family": self.steady_family, "output": dict(self.output)}

    def grid_points(self, default):
        a, b, n = parse_grid(self.grid or default)
        return np.linspace(a, b, n)

    def with_overrides(self, seed=None, shards=None, method=None, strict_paper=None, grid=None, out=None):
        """Apply command-line flags; the result is validated like a parsed config."""
        d = self.to_dict()
        if seed is not None:
            d["simulation"]["seed"] = seed
        if shards is not None:
            d["simulation"]["shards"] = shards
        if method is not None:
            d["solver"]["method"] = method
        if strict_paper:
            d["solver"]["strict_paper"] = True
        if grid is not None:
            d["grid"] = grid
        if out is not None:
            d["output"]["dir"] = out
        return from_dict(d)

    def require_for(self, command):
        """Invariants that depend on the subcommand."""
        if command not in STATISTICAL_COMMANDS:
            return
        issues = []
        if self.simulation.get("seed") is None:
            issues.append(f"simulation.seed: required for '{command}' (no implicit entropy)")
        if self.simulation["draws"] < MIN_DRAWS:
            issues.append(f"simulation.draws: must be >= {MIN_DRAWS} for '{command}'")
        if issues:
            raise ConfigError(issues)

    @property
    def scale_method(self):
        m = self.solver["method"]
        return None if m in STATIONARY_METHODS else m

    def hash(self):
        """Digest of everything that affects results; the output location is left out."""
        d = self.to_dict()
        del d["output"]
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _merge(section, defaults, raw, issues):
    if raw is None:
        return dict(defaults)
    if not isinstance(raw, dict):
        issues.append(f"{section}: expected an object")
        return dict(defaults)
    unknown = sorted(set(raw) - set(defaults))
    issues.extend(f"{section}.{k}: unknown field" for k in unknown)
    out = copy.deepcopy(defaults)
    out.update({k: v for k, v in raw.items() if k in defaults})
    return out


def _positive(name, value, issues, integer=False, allow_zero=False):
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind):
        issues.append(f"{name}: expected {'an integer' if integer else 'a number'}, got {value!r}")
        return
    if value < 0 or (value == 0 and not allow_zero):
        issues.append(f"{name}: must be {'>= 0' if allow_zero else 'positive'}, got {value!r}")


def from_dict(d) -> RunConfig:
    """Validate a decoded document; every problem is collected before raising."""
    issues = []
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a JSON object")
    issues.extend(f"{k}: unknown field" for k in sorted(set(d) - _TOP_KEYS))
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        issues.append(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    model = None
    if "model" not in d:
        issues.append("model: missing")
    else:
        try:
            model = LevyModel.from_dict(d["model"])
        except LevyClearError as exc:
            issues.append(f"model: {exc}")
        except (TypeError, ValueError, AttributeError) as exc:
            issues.append(f"model: malformed ({exc})")

    q = d.get("q")
    if q is None:
        issues.append("q: missing")
    else:
        _positive("q", q, issues)

    functional = Clearing()
    if d.get("functional") is not None:
        try:
            functional = functional_from_dict(d["functional"])
        except LevyClearError as exc:
            issues.append(f"functional: {exc}")
        except (TypeError, ValueError, KeyError, AttributeError) as exc:
            issues.append(f"functional: malformed ({exc})")

    solver = _merge("solver", _SOLVER_DEFAULTS, d.get("solver"), issues)
    methods = sorted(m.value for m in Method) + list(STATIONARY_METHODS)
    if solver["method"] is not None and solver["method"] not in methods:
        issues.append(f"solver.method: unknown {solver['method']!r}; choose from {methods}")
    _positive("solver.n_grid", solver["n_grid"], issues, integer=True)
    _positive("solver.tol", solver["tol"], issues)
    _positive("solver.talbot_nodes", solver["talbot_nodes"], issues, integer=True)
    if solver["x_max"] is not None:
        _positive("solver.x_max", solver["x_max"], issues)
    if not isinstance(solver["strict_paper"], bool):
        issues.append("solver.strict_paper: expected true or false")

    sim = _merge("simulation", _SIM_DEFAULTS, d.get("simulation"), issues)
    _positive("simulation.draws", sim["draws"], issues, integer=True)
    _positive("simulation.burnin", sim["burnin"], issues, integer=True, allow_zero=True)
    _positive("simulation.shards", sim["shards"], issues, integer=True)
    if sim["seed"] is not None:
        _positive("simulation.seed", sim["seed"], issues, integer=True, allow_zero=True)
    if sim["chains"] is not None:
        _positive("simulation.chains", sim["chains"], issues, integer=True)

    tail = _merge("tail", _TAIL_DEFAULTS, d.get("tail"), issues)
    if tail["regime"] not in ("cramer", "convolution-equivalent"):
        issues.append(f"tail.regime: expected 'cramer' or 'convolution-equivalent', got {tail['regime']!r}")
    _positive("tail.alpha", tail["alpha"], issues, allow_zero=True)
    _positive("tail.c", tail["c"], issues, allow_zero=True)
    w = tail["window"]
    if not (isinstance(w, list) and len(w) == 2 and all(isinstance(v, (int, float)) for v in w)
            and 0 < w[0] < w[1] < 1):
        issues.append(f"tail.window: expected two quantile levels 0 < lo < hi < 1, got {w!r}")

    grid = d.get("grid")
    if grid is not None:
        try:
            parse_grid(grid)
        except ConfigError as exc:
            issues.extend(exc.issues)

    starts = d.get("starts", [0.0])
    if not (isinstance(starts, list) and starts and
            all(isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0 for v in starts)):
        issues.append(f"starts: expected a nonempty list of nonnegative numbers, got {starts!r}")
        starts = [0.0]

    family = d.get("steady_family", "exponential")
    if family not in STEADY_FAMILIES:
        issues.append(f"steady_family: expected one of {list(STEADY_FAMILIES)}, got {family!r}")

    output = _merge("output", {"dir": "out"}, d.get("output"), issues)

    if issues:
        raise ConfigError(issues)
    return RunConfig(model=model, q=float(q), functional=functional, solver=solver, simulation=sim,
                     tail=tail, grid=grid, starts=tuple(float(v) for v in starts), steady_family=family,
                     output=output)


def parse_config(text: str) -> RunConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None
    return from_dict(d)


def emit_config(cfg: RunConfig) -> str:
    """Canonical JSON text: sorted keys, so equal configs hash equally."""
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2)


__all__ = ["RunConfig", "parse_config", "emit_config", "from_dict", "parse_grid", "SCHEMA_VERSION",
           "STATISTICAL_COMMANDS"]
