import csv
import json

import numpy as np
import pytest

from levyclear.cli import compare_sidecars, main, run_subcommand
from levyclear.config import emit_config, from_dict, parse_config, parse_grid
from levyclear.embedded_chain import Proportional
from levyclear.errors import ConfigError, LevyClearError

BM_CLEARING = {"schema_version": 1, "model": {"sigma": 1.0, "drift": 1.0}, "q": 1.0,
               "functional": {"type": "clearing"}, "simulation": {"seed": 42}}
CPP_REFLECT = {"schema_version": 1, "q": 1.0,
               "model": {"drift": 2.0, "jump_rate": 1.0, "jumps": {"type": "exponential", "rate": 1.0}},
               "functional": {"type": "reflect_around_b", "b": {"type": "exponential", "rate": 1.0}},
               "simulation": {"seed": 7, "draws": 20_000}}


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_minimal_config():
    cfg = from_dict(BM_CLEARING)
    assert cfg.q == 1.0 and cfg.simulation["seed"] == 42 and cfg.model.sigma == 1.0


def test_round_trip():
    for doc in (BM_CLEARING, CPP_REFLECT):
        cfg = from_dict(doc)
        assert parse_config(emit_config(cfg)) == cfg
    cfg = from_dict({**CPP_REFLECT, "functional": Proportional(0.25).to_dict(), "grid": "0:2:5"})
    assert parse_config(emit_config(cfg)) == cfg


def test_stability_message():
    doc = {**CPP_REFLECT, "model": {"drift": 0.5, "jump_rate": 1.0, "jumps": {"type": "exponential", "rate": 1.0}}}
    with pytest.raises(ConfigError, match=r"stability: E\[X\(1\)\] > 0"):
        from_dict(doc)


def test_every_issue_is_listed():
    doc = {"schema_version": 3, "q": -1.0, "model": {"sigma": 1.0, "drift": 1.0},
           "solver": {"tol": 0, "bogus": 1}, "tail": {"window": [0.5, 0.2]}}
    with pytest.raises(ConfigError) as err:
        from_dict(doc)
    text = str(err.value)
    for needle in ("schema_version", "q:", "solver.tol", "solver.bogus", "tail.window"):
        assert needle in text
    assert len(err.value.issues) >= 5


def test_missing_seed_on_simulation():
    cfg = from_dict({**BM_CLEARING, "simulation": {}})
    with pytest.raises(ConfigError, match="seed"):
        cfg.require_for("simulate")
    cfg.require_for("scale")
    with pytest.raises(ConfigError, match="draws"):
        from_dict({**BM_CLEARING, "simulation": {"seed": 1, "draws": 500}}).require_for("lst")


def test_grid_parser():
    assert parse_grid("0:5:11") == (0.0, 5.0, 11)
    for bad in ("0:5", "5:0:3", "a:b:c", "0:1:1"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_hash_ignores_output_only():
    a = from_dict(BM_CLEARING)
    assert a.hash() == a.with_overrides(out="elsewhere").hash()
    assert a.hash() != a.with_overrides(seed=43).hash()


def test_scale_command(tmp_path, capsys):
    path = write_config(tmp_path, BM_CLEARING)
    assert main(["scale", "--config", str(path), "--out", str(tmp_path / "o"), "--grid", "0:2:5"]) == 0
    header, rows = read_csv(tmp_path / "o" / "scale.csv")
    assert header == ["x", "W", "Wprime", "Z"]
    assert len(rows) == 5 and float(rows[0][1]) == 0.0
    side = json.loads((tmp_path / "o" / "scale.json").read_text())
    assert side["config_hash"] == from_dict({**BM_CLEARING, "grid": "0:2:5"}).hash()
    assert {"library_version", "seed", "tolerances", "wall_time_s"} <= set(side)
    assert json.loads(capsys.readouterr().out)["csv"] == "scale.csv"


def test_seventeen_digit_output(tmp_path):
    path = write_config(tmp_path, BM_CLEARING)
    main(["scale", "--config", str(path), "--out", str(tmp_path), "--grid", "1:1.5:2"])
    _, rows = read_csv(tmp_path / "scale.csv")
    assert len(rows[0][1].replace(".", "").lstrip("0")) >= 15


def test_reproducible_csv(tmp_path):
    path = write_config(tmp_path, CPP_REFLECT)
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == (tmp_path / "b" / "simulate.csv").read_bytes()
    assert compare_sidecars(tmp_path / "a" / "simulate.json", tmp_path / "b" / "simulate.json")["identical_csv"]


def test_compare_hash_mismatch(tmp_path, capsys):
    path = write_config(tmp_path, CPP_REFLECT)
    main(["simulate", "--config", str(path), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "8"])
    with pytest.raises(LevyClearError):
        compare_sidecars(tmp_path / "a" / "simulate.json", tmp_path / "b" / "simulate.json")
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a" / "simulate.json"), str(tmp_path / "b" / "simulate.json")]) == 1
    assert json.loads(capsys.readouterr().err)["code"] == "cli.hash_mismatch"


def test_exit_codes(tmp_path, capsys):
    bad = write_config(tmp_path, {**BM_CLEARING, "q": "one"}, "bad.json")
    assert main(["scale", "--config", str(bad), "--out", str(tmp_path)]) == 2
    record = json.loads(capsys.readouterr().err)
    assert any("q" in issue for issue in record["issues"])
    no_seed = write_config(tmp_path, {**BM_CLEARING, "simulation": {}}, "noseed.json")
    assert main(["simulate", "--config", str(no_seed), "--out", str(tmp_path)]) == 2
    capsys.readouterr()
    heavy = {**BM_CLEARING, "model": {"drift": 2.0, "jump_rate": 1.0, "jumps": {"type": "pareto", "tail_index": 2.5, "scale": 1.0}},
             "simulation": {"seed": 1, "draws": 20_000}}
    assert main(["tail", "--config", str(write_config(tmp_path, heavy, "h.json")), "--out", str(tmp_path)]) == 1
    assert json.loads(capsys.readouterr().err)["code"] == "tail_asymptotics.heavy_tail"


@pytest.mark.parametrize("method,col", [("fixed-point", "mass_or_density"), ("grid", "mass_or_density"),
                                        ("mc", "mass_or_density")])
def test_stationary_methods(tmp_path, method, col):
    path = write_config(tmp_path, CPP_REFLECT)
    assert main(["stationary", "--config", str(path), "--out", str(tmp_path), "--method", method]) == 0
    header, rows = read_csv(tmp_path / "stationary.csv")
    assert header[1] == col
    assert float(rows[0][0]) == 0.0 and abs(float(rows[0][1]) - 0.29289) < 0.02


def test_lst_command(tmp_path):
    doc = {**CPP_REFLECT, "functional": {"type": "constant_level", "b": {"type": "deterministic", "size": 2.0}},
           "simulation": {"seed": 3, "draws": 200_000}}
    assert main(["lst", "--config", str(write_config(tmp_path, doc)), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "lst.csv")
    assert header == ["s", "analytic", "mc", "mc_se"]
    vals = np.array(rows, dtype=float)
    assert len(vals) == 10 and np.all(np.abs(vals[:, 1] - vals[:, 2]) < 3 * vals[:, 3])


def test_transition_and_steady(tmp_path):
    path = write_config(tmp_path, CPP_REFLECT)
    assert main(["transition", "--config", str(path), "--out", str(tmp_path)]) == 0
    assert read_csv(tmp_path / "transition.csv")[0] == ["x", "y", "density", "cdf"]
    for family in ("exponential", "indicator", "moment"):
        doc = {**CPP_REFLECT, "steady_family": family}
        assert main(["steady", "--config", str(write_config(tmp_path, doc)), "--out", str(tmp_path)]) == 0
        header, rows = read_csv(tmp_path / "steady.csv")
        assert header[1] == "expectation" and rows


def test_model_info_and_strict_flag(tmp_path):
    path = write_config(tmp_path, CPP_REFLECT)
    side = run_subcommand("model-info", parse_config(path.read_text()).with_overrides(out=str(tmp_path)))
    assert side["command"] == "model-info"
    assert main(["transition", "--config", str(path), "--out", str(tmp_path), "--strict-paper"]) == 0
    side = json.loads((tmp_path / "transition.json").read_text())
    assert side["config"]["solver"]["strict_paper"] is True


def test_config_from_stdin(tmp_path, monkeypatch):
    import io
    monkeypatch.setattr("sys.stdin", io.StringIO(json.dumps(BM_CLEARING)))
    assert main(["model-info", "--config", "-", "--out", str(tmp_path)]) == 0
