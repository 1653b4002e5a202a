import json
import subprocess
import sys

import numpy as np
import pytest

from hjbounds.bounds import BoundEvaluator, intervals_from_csv, intervals_to_csv
from hjbounds.characteristics import load_bundle
from hjbounds.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, UsageError, default_threads, main, parse_grid, parse_point
from hjbounds.config import ConfigError, RunConfig, double_integrator, paper_example_6, preset


@pytest.fixture(scope="module")
def desk_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "desk.hjb"
    assert main(["precompute", "--preset", "double-integrator", "--out", str(path)]) == EXIT_OK
    return path


@pytest.fixture(scope="module")
def ex6_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "ex6.hjb"
    assert main(["precompute", "--preset", "paper-example-6", "--out", str(path)]) == EXIT_OK
    return path


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


# --- parsing -------------------------------------------------------------------------


def test_parse_grid():
    assert parse_grid("-1:1:3,0:2:5") == [(-1.0, 1.0, 3), (0.0, 2.0, 5)]
    for bad in ("1:2", "a:b:c", "1:0:5", "0:1:0"):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_parse_point():
    assert parse_point("-0.5, 1,2e-1").tolist() == [-0.5, 1.0, 0.2]
    with pytest.raises(UsageError):
        parse_point("1,x")


def test_thread_env(monkeypatch):
    monkeypatch.setenv("HJB_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("HJB_THREADS", "many")
    with pytest.raises(UsageError):
        default_threads()
    monkeypatch.delenv("HJB_THREADS")
    assert default_threads() >= 1


# --- config ---------------------------------------------------------------------------


def test_preset_matches_example_setup():
    cfg = preset("paper-example-6")
    assert cfg.levels == [0.0, 0.3, 0.6, 0.9, 1.2] and cfg.counts == [85, 84, 84, 84, 84]
    assert cfg.grid.step == 0.0083 and (cfg.system.t0, cfg.system.T) == (0.0, 1.5)


def test_config_json_round_trip(tmp_path):
    cfg = preset("double-integrator")
    again = RunConfig.load(write_config(tmp_path, cfg.to_dict()))
    assert again.to_json() == cfg.to_json()


def test_config_rejects_unknown_fields():
    doc = double_integrator()
    doc["colour"] = "blue"
    with pytest.raises(ConfigError, match="colour"):
        RunConfig.from_dict(doc)
    doc = double_integrator()
    doc["system"]["F"] = [["0"]]
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


@pytest.mark.parametrize(
    "patch",
    [
        lambda d: d["grid"].update(step=0.0),
        lambda d: d.update(levels=[0.5, 0.25] + d["levels"][2:]),
        lambda d: d.update(counts=d["counts"][:-1]),
        lambda d: d.update(levels=[-1.0] + d["levels"][1:]),
        lambda d: d.update(scheme="euler"),
        lambda d: d["cost"].update(center=[0.0, 0.0, 0.0]),
        lambda d: d["grid"].update(T=5.0),
    ],
)
def test_config_validation(patch):
    doc = double_integrator()
    patch(doc)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(doc)


# --- verbs ---------------------------------------------------------------------------


def test_check_preset(capsys):
    assert main(["check", "--preset", "paper-example-6"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


def test_check_dominant_disturbance(tmp_path, capsys):
    doc = paper_example_6()
    doc["system"]["E"][1] = ["3*(0.5+0.5*sin(pi/2*t))"]
    assert main(["check", "--config", write_config(tmp_path, doc)]) == EXIT_VALIDATION
    assert "kappa" in capsys.readouterr().out


def test_check_reversed_horizon(tmp_path, capsys):
    doc = paper_example_6()
    doc["system"].update(t0=1.5, T=0.0)
    assert main(["check", "--config", write_config(tmp_path, doc)]) == EXIT_VALIDATION
    assert "T > t0" in capsys.readouterr().err


def test_unknown_preset_and_missing_config(capsys):
    assert main(["check", "--preset", "nope"]) == EXIT_VALIDATION
    assert main(["check"]) == EXIT_VALIDATION
    assert main(["check", "--config", "/nonexistent/cfg.json"]) == EXIT_RUNTIME


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["check", "--config", str(path)]) == EXIT_VALIDATION


def test_precompute_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.hjb", tmp_path / "b.hjb"
    assert main(["precompute", "--preset", "paper-example-6", "--out", str(a)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "characteristics: 421 over 5 levels, 182 nodes" in out and "wall time" in out
    assert main(["precompute", "--preset", "paper-example-6", "--threads", "4", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_seed_override_reproducible(tmp_path):
    a, b = tmp_path / "a.hjb", tmp_path / "b.hjb"
    assert main(["precompute", "--preset", "double-integrator", "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert main(["precompute", "--preset", "double-integrator", "--seed", "7", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert load_bundle(a).metadata["seed"] == 7


def test_trivial_one_d_precompute_fast(tmp_path, capsys):
    doc = {
        "system": {"A": [["0"]], "B": [["1"]], "E": [["0.5"]], "U": {"box": [[-1], [1]]}, "D": {"box": [[-1], [1]]}, "t0": 0, "T": 1},
        "cost": {"type": "euclidean_norm", "center": [0.0]},
        "levels": [0.5, 1.0],
        "counts": [2, 2],
        "grid": {"t0": 0, "T": 1, "step": 0.01},
    }
    out = tmp_path / "one.hjb"
    assert main(["precompute", "--config", write_config(tmp_path, doc), "--out", str(out)]) == EXIT_OK
    secs = float(capsys.readouterr().out.split("wall time: ")[1].split(" s")[0])
    assert secs < 1.0


def test_eval_origin(ex6_file, capsys):
    assert main(["eval", "--bundle", str(ex6_file), "--time", "0", "0,0,0"]) == EXIT_OK
    _, (iv,) = intervals_from_csv(capsys.readouterr().out)
    assert iv.lower <= 0 <= iv.upper + 1e-12 and iv.upper - iv.lower <= 1e-6


def test_eval_terminal_time(ex6_file, capsys):
    assert main(["eval", "--bundle", str(ex6_file), "--time", "1.5", "1,1,1", "-0.5,0.2,0"]) == EXIT_OK
    _, ivs = intervals_from_csv(capsys.readouterr().out)
    assert ivs[0].upper == pytest.approx(np.sqrt(3), abs=1e-12)
    assert ivs[0].lower <= np.sqrt(3) + 1e-12
    assert ivs[1].lower <= np.hypot(0.5, 0.2) <= ivs[1].upper + 1e-12


def test_eval_batch_matches_single(desk_file, tmp_path, rng):
    pts = rng.uniform(-2, 2, (1000, 2))
    pf = tmp_path / "pts.csv"
    pf.write_text("x1,x2\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in pts))
    out = tmp_path / "out.csv"
    assert main(["eval", "--bundle", str(desk_file), "--time", "0.25", "--points-file", str(pf), "--threads", "2", "--out", str(out)]) == EXIT_OK
    P, ivs = intervals_from_csv(out.read_text())
    assert np.array_equal(P, pts)
    ev = BoundEvaluator(load_bundle(desk_file))
    for x, iv in zip(pts[::25], ivs[::25]):
        ref = ev.interval(0.25, x)
        assert (iv.lower, iv.upper) == (ref.lower, ref.upper)


def test_eval_wrong_dimension(desk_file):
    assert main(["eval", "--bundle", str(desk_file), "--time", "0", "1,2,3"]) == EXIT_VALIDATION


def test_eval_snapped_time_noted(desk_file, capsys):
    assert main(["eval", "--bundle", str(desk_file), "--time", "0.0012", "0.1,0.1"]) == EXIT_OK
    assert "snapped" in capsys.readouterr().err


def test_grid_csv_threads_and_round_trip(desk_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["grid", "--bundle", str(desk_file), "--time", "0", "--grid", "-1.5:1.5:13,-1:1:9"]
    assert main(base + ["--threads", "1", "--out", str(a)]) == EXIT_OK
    assert main(base + ["--threads", "4", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert intervals_to_csv(*intervals_from_csv(text)) == text
    assert b"\r" not in a.read_bytes()


def test_grid_json(desk_file, capsys):
    assert main(["grid", "--bundle", str(desk_file), "--time", "0", "--grid", "-1:1:3,0:0:1", "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["points"]) == 3 and len(doc["upper"]) == 3


def test_grid_axis_mismatch(desk_file):
    assert main(["grid", "--bundle", str(desk_file), "--time", "0", "--grid", "-1:1:3"]) == EXIT_VALIDATION


def test_reach(desk_file, tmp_path, capsys):
    out = tmp_path / "labels.csv"
    assert main(["reach", "--bundle", str(desk_file), "--time", "0", "--gamma", "0.75", "--grid", "-2:2:21,-2:2:21", "--out", str(out)]) == EXIT_OK
    summary = capsys.readouterr().out
    assert "REACH_INNER=" in summary and "points=441" in summary
    lines = out.read_text().splitlines()
    assert lines[0] == "x1,x2,label" and len(lines) == 442


def test_oracle_compare(desk_file, tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    args = ["oracle-compare", "--preset", "double-integrator", "--bundle", str(desk_file), "--grid", "-2:2:41,-2:2:41", "--out", str(out)]
    assert main(args) == EXIT_OK
    summary = capsys.readouterr().out
    assert "beyond_3eps=0" in summary
    lines = out.read_text().splitlines()
    assert lines[0] == "x1,x2,lower,oracle,upper,eps,below_lower,above_upper"
    assert len(lines) == 41 * 41 + 1


def test_bench(tmp_path, capsys):
    assert main(["bench", "--preset", "double-integrator", "--count", "11", "--out", str(tmp_path / "b")]) == EXIT_OK
    rep = json.loads((tmp_path / "b" / "bench.json").read_text())
    assert rep["access_points"] == 22 and rep["bundle_bytes"] == (tmp_path / "b" / "bundle.hjb").stat().st_size
    assert rep["access_mean_ms"] <= rep["access_max_ms"]


def test_corrupt_bundle_exit(tmp_path):
    bad = tmp_path / "bad.hjb"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--bundle", str(bad), "--time", "0", "0,0"]) == EXIT_VALIDATION


def test_missing_bundle_exit(tmp_path):
    assert main(["eval", "--bundle", str(tmp_path / "none.hjb"), "--time", "0", "0,0"]) == EXIT_RUNTIME


def test_time_outside_horizon(desk_file):
    assert main(["eval", "--bundle", str(desk_file), "--time", "5", "0,0"]) == EXIT_RUNTIME


def test_argparse_usage_exit():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_VALIDATION


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "hjbounds.cli", "check", "--preset", "double-integrator"], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout
