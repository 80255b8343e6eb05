"""Config parsing, scenario loading, exit codes and output trees."""

import json
import os

import numpy as np
import pytest

from delaymorse import ConstantDelay, PhaseSpace
from delaymorse.cli import main
from delaymorse.scenario import ConfigError, ValidationError, load_scenario, parse_config

QUICK_RUN = """\
name = quickrun
feedback.family = tanh
feedback.b = 1.6            # delayed gain
space.M = 2.5
space.K = 1.0
delay.kind = constant
delay.r0 = 1.0
run.step = 0.02
run.horizon = 8.0
ensemble.size = 2
ensemble.seed = 7
ensemble.slope = 0.55
ensemble.knots = 5
validate.skip = H3
"""

SWEEP_ONLY = """\
name = quicksweep
sweep.A = 0.0
sweep.B_from = -1.4
sweep.B_to = -1.8
sweep.B_steps = 5
sweep.tau = 1.0
"""

BAD_LAG_GROWTH = """\
name = badlag
feedback.family = linear
feedback.A = 0.0
feedback.B = -2.0
space.M = 2.0
space.K = 1.0
delay.kind = implicit
delay.lag = mill
delay.p = 0.5
delay.q = 0.1
validate.skip = H3
"""


def _write(tmp_path, text, fname="scenario.cfg"):
    path = tmp_path / fname
    path.write_text(text)
    return str(path)


def _tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_parse_config_roundtrip():
    raw = parse_config(QUICK_RUN)
    assert raw["name"] == "quickrun"
    assert raw["feedback.b"] == "1.6"
    assert raw["validate.skip"] == "H3"


def test_parse_config_duplicate_key_names_line():
    text = "name = x\nspace.M = 1\nspace.M = 2\n"
    with pytest.raises(ConfigError, match=r"line 3.*duplicate"):
        parse_config(text)


def test_parse_config_unknown_key_names_line():
    with pytest.raises(ConfigError, match=r"line 2.*unknown key"):
        parse_config("name = x\nbogus.key = 1\n")


def test_parse_config_requires_assignment():
    with pytest.raises(ConfigError, match="expected"):
        parse_config("name = x\njust words\n")


def test_parse_config_requires_name():
    with pytest.raises(ConfigError, match="name"):
        parse_config("space.M = 1\nspace.K = 1\n")


def test_load_scenario_builds_objects():
    scn = load_scenario(QUICK_RUN)
    assert scn.name == "quickrun"
    assert isinstance(scn.space, PhaseSpace)
    assert scn.space.M == 2.5
    assert isinstance(scn.delay_model, ConstantDelay)
    assert scn.run_cfg.step == 0.02
    assert scn.ensemble["size"] == 2
    assert scn.ensemble["amplitude"] == 0.9  # default
    assert scn.skips == frozenset({"H3"})


def test_load_scenario_rejects_bad_amplitude():
    text = QUICK_RUN + "ensemble.amplitude = 1.5\n"
    with pytest.raises(ConfigError, match="amplitude"):
        load_scenario(text)


def test_load_scenario_rejects_bad_slope():
    text = QUICK_RUN.replace("ensemble.slope = 0.55", "ensemble.slope = 0.8")
    with pytest.raises(ConfigError, match="slope"):
        load_scenario(text)


def test_load_scenario_rejects_bad_family():
    with pytest.raises(ConfigError, match="feedback.family"):
        load_scenario(QUICK_RUN.replace("feedback.family = tanh",
                                        "feedback.family = cubic"))


def test_load_scenario_rejects_bad_number():
    with pytest.raises(ConfigError, match="not a number"):
        load_scenario(QUICK_RUN.replace("run.step = 0.02", "run.step = fast"))


def test_cli_missing_file_is_config_error(tmp_path, capsys):
    code = main(["run", str(tmp_path / "absent.cfg"), "--out-dir", str(tmp_path / "o")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_cli_bad_config_is_exit_2(tmp_path, capsys):
    path = _write(tmp_path, "name = x\nbogus = 1\n")
    code = main(["validate", path])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_validate_passes(tmp_path, capsys):
    path = _write(tmp_path, QUICK_RUN)
    code = main(["validate", path, "--samples", "100"])
    out = capsys.readouterr().out
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[-1] == "quickrun: hypotheses hold"
    doc = json.loads("\n".join(lines[:-1]))
    assert doc["feedback"]["effective_failures"] == []
    assert doc["delay"]["pairs_checked"] == 0  # constant lag has no pairs


def test_cli_validate_rejects_thin_sampling(tmp_path, capsys):
    path = _write(tmp_path, QUICK_RUN)
    code = main(["validate", path, "--samples", "50"])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_validate_failure_names_tag(tmp_path, capsys):
    path = _write(tmp_path, BAD_LAG_GROWTH)
    code = main(["validate", path, "--samples", "100"])
    err = capsys.readouterr().err
    assert code == 3
    assert "validation failure" in err
    assert "(ID4)" in err


def test_cli_run_fails_fast_before_writing(tmp_path, capsys):
    path = _write(tmp_path, BAD_LAG_GROWTH + "run.step = 0.02\nrun.horizon = 8.0\n"
                  "ensemble.size = 1\nensemble.seed = 1\n")
    out_dir = tmp_path / "out"
    code = main(["run", path, "--out-dir", str(out_dir)])
    assert code == 3
    assert not out_dir.exists()


def test_cli_run_tree_and_report(tmp_path, capsys):
    path = _write(tmp_path, QUICK_RUN)
    out_dir = tmp_path / "out"
    code = main(["run", path, "--out-dir", str(out_dir)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "quickrun: 2 runs" in stdout
    names = sorted(os.listdir(out_dir))
    assert names == [
        "morse.json",
        "spectrum.json",
        "traj_000.csv",
        "traj_001.csv",
        "vtrace_000.csv",
        "vtrace_001.csv",
    ]
    doc = json.load(open(out_dir / "morse.json"))
    assert set(doc) == {"scenario", "spectrum", "runs", "report", "failures"}
    assert len(doc["runs"]) == 2
    for row in doc["runs"]:
        assert set(row) == {"member", "seed", "label", "v_tail", "tail_sup", "error"}
        assert row["error"] is None
        assert row["label"] is not None
    spec = json.load(open(out_dir / "spectrum.json"))
    assert spec["m_star"] == 2
    assert spec["n_star"] == 2
    assert spec["hyperbolic"] is True


def test_cli_run_deterministic_and_thread_invariant(tmp_path):
    path = _write(tmp_path, QUICK_RUN)
    dirs = [str(tmp_path / f"out{i}") for i in range(3)]
    assert main(["run", path, "--out-dir", dirs[0]]) == 0
    assert main(["run", path, "--out-dir", dirs[1]]) == 0
    assert main(["run", path, "--out-dir", dirs[2], "--threads", "2"]) == 0
    base = _tree(dirs[0])
    assert _tree(dirs[1]) == base
    assert _tree(dirs[2]) == base


def test_cli_seed_override_changes_trajectories(tmp_path):
    path = _write(tmp_path, QUICK_RUN)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", path, "--out-dir", a]) == 0
    assert main(["run", path, "--out-dir", b, "--seed-override", "123"]) == 0
    with open(os.path.join(a, "traj_000.csv"), "rb") as fa:
        with open(os.path.join(b, "traj_000.csv"), "rb") as fb:
            assert fa.read() != fb.read()
    doc = json.load(open(os.path.join(b, "morse.json")))
    assert all(row["seed"] == 123 for row in doc["runs"])


def test_cli_run_overrides_step_and_horizon(tmp_path):
    path = _write(tmp_path, QUICK_RUN)
    out_dir = tmp_path / "out"
    code = main(["run", path, "--out-dir", str(out_dir),
                 "--step", "0.025", "--horizon", "9.0"])
    assert code == 0
    data = np.genfromtxt(out_dir / "traj_000.csv", delimiter=",", names=True)
    assert float(data["t"][-1]) == 9.0
    steps = np.diff(data["t"][:5])
    np.testing.assert_allclose(steps, 0.025, atol=1e-12)


def test_cli_run_plots(tmp_path):
    path = _write(tmp_path, QUICK_RUN)
    out_dir = tmp_path / "out"
    code = main(["run", path, "--out-dir", str(out_dir), "--plots"])
    assert code == 0
    for fname in ("trajectories.png", "vtrace.png"):
        assert (out_dir / fname).stat().st_size > 1000


def test_cli_member_escape_is_runtime_failure(tmp_path, capsys):
    # strong gain against a tight bound: every member leaves the ball
    text = QUICK_RUN.replace("space.M = 2.5", "space.M = 0.3")
    text = text.replace("feedback.b = 1.6", "feedback.b = 3.0")
    path = _write(tmp_path, text)
    out_dir = tmp_path / "out"
    code = main(["run", path, "--out-dir", str(out_dir)])
    assert code == 4
    assert "runtime failure" in capsys.readouterr().err
    doc = json.load(open(out_dir / "morse.json"))
    assert len(doc["failures"]) > 0
    assert all("BoundViolation" in f["error"] for f in doc["failures"])


def test_cli_sweep_csv_and_plot(tmp_path, capsys):
    path = _write(tmp_path, SWEEP_ONLY)
    out_dir = tmp_path / "out"
    code = main(["sweep", path, "--out-dir", str(out_dir), "--plots"])
    assert code == 0
    assert "5 grid points" in capsys.readouterr().out
    with open(out_dir / "sweep.csv") as fh:
        header = fh.readline().strip()
        rows = fh.read().strip().splitlines()
    assert header == "A,B,tau,m_star,hyperbolic,n_star,axis_min"
    assert len(rows) == 5
    counts = [int(float(r.split(",")[3])) for r in rows]
    assert set(counts) == {0, 2}
    assert (out_dir / "stability.png").stat().st_size > 1000


def test_cli_sweep_without_section_is_exit_2(tmp_path, capsys):
    path = _write(tmp_path, QUICK_RUN)
    code = main(["sweep", path, "--out-dir", str(tmp_path / "o")])
    assert code == 2


def test_cli_run_without_ensemble_is_exit_2(tmp_path, capsys):
    path = _write(tmp_path, SWEEP_ONLY)
    code = main(["run", path, "--out-dir", str(tmp_path / "o")])
    assert code == 2
    assert "config error" in capsys.readouterr().err
