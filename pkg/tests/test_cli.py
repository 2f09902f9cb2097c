import csv
import subprocess
import sys
from pathlib import Path

import pytest

from hbmes.cli import main
from hbmes.config import RunConfig, load_config, parse_config
from hbmes.errors import ConfigurationError
from hbmes.traces import load_traces

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TINY = CONFIGS / "tiny.cfg"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- configuration ------------------------------------------------------------------------------

def test_empty_config_is_reference():
    assert parse_config("") == RunConfig()
    assert load_config(None) == RunConfig()


@pytest.mark.parametrize("name", ["tiny.cfg", "case1.cfg", "case2.cfg", "smoke.cfg"])
def test_resolved_echo_round_trips(name):
    cfg = load_config(CONFIGS / name)
    echo = cfg.dump()
    again = parse_config(echo)
    assert again == cfg
    assert again.dump() == echo


def test_presets_differ_only_in_pv_area_and_grids():
    a, b = load_config(CONFIGS / "case1.cfg"), load_config(CONFIGS / "case2.cfg")
    assert (a.system.h_pv, b.system.h_pv) == (100.0, 250.0)
    assert (a.grids.N_bess, b.grids.N_bess) == (7, 21)
    assert a.system.with_(h_pv=250.0) == b.system and a.training == b.training


def test_overridden_marker():
    echo = parse_config("[grids]\nN_bess = 5\n[run]\nseed = 0\n").dump()
    assert "N_bess = 5  # overridden" in echo
    assert "N_hess = 7\n" in echo
    assert "seed = 0\n" in echo  # same as the default, so not marked


@pytest.mark.parametrize("text, fragment", [
    ("[system]\neta_pv = 1.5\n", "eta_pv"),
    ("[grids]\nN_bess = one\n", "[grids] N_bess"),
    ("[grids]\nN_bess = 1\n", "[grids] N_bess"),
    ("[training]\nlearning_rate = 0.1\n", "[training] learning_rate: unknown key"),
    ("[training]\nchi = 1\n", "[run] chi"),
    ("[run]\nalgorithm = ppo\n", "[run] algorithm"),
    ("[system]\nJ = 2\nbeta_min = 20, 20, 20\n", "beta_min"),
    ("[nonsense]\nx = 1\n", "unknown section"),
])
def test_field_level_errors(text, fragment):
    with pytest.raises(ConfigurationError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        parse_config(text)


def test_trainer_configs_share_disturbance():
    cfg = parse_config("[run]\nchi = 1.5\n")
    t, d = cfg.trainer_configs()
    assert t.chi == d.chi == 1.5


# --- subcommands --------------------------------------------------------------------------------

def test_train_emits_log_checkpoint_and_echo(tmp_path, capsys):
    code, out, _ = run(capsys, "--config", TINY, "--out", tmp_path, "train")
    assert code == 0
    rows = read_rows(tmp_path / "reward_log.csv")
    assert len(rows) == 10
    assert list(rows[0]) == ["episode", "total_reward", "reward_bess", "reward_hess", "reward_thermal_mean"]
    assert (tmp_path / "checkpoint.bin").exists()
    echoed = load_config(tmp_path / "resolved.cfg")
    assert echoed == load_config(TINY).with_run(out=str(tmp_path))


def test_train_is_reproducible(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "train", "--config", TINY, "--out", tmp_path / d, "--seed", 5)[0] == 0
    for name in ("reward_log.csv", "checkpoint.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def echo(d):  # the echo records the output directory, which differs by construction
        return [ln for ln in (tmp_path / d / "resolved.cfg").read_text().splitlines() if not ln.startswith("out =")]

    assert echo("a") == echo("b")
    run(capsys, "train", "--config", TINY, "--out", tmp_path / "c", "--seed", 6)
    assert (tmp_path / "a" / "reward_log.csv").read_bytes() != (tmp_path / "c" / "reward_log.csv").read_bytes()


def test_missing_trace_file_names_path(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(TINY.read_text() + f"train = {tmp_path / 'nowhere.csv'}\n")
    code, _, err = run(capsys, "train", "--config", cfg, "--out", tmp_path / "o")
    assert code != 0
    assert "nowhere.csv" in err


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[grids]\nN_bess = 1\n")
    code, _, err = run(capsys, "train", "--config", cfg, "--out", tmp_path)
    assert code == 2 and "N_bess" in err


def test_evaluate_untrained_checkpoint(tmp_path, capsys):
    cfg = tmp_path / "zero.cfg"
    cfg.write_text(TINY.read_text().replace("episodes = 10\nbatch_size = 8\nbuffer_size = 200\nwarmup_fraction",
                                            "episodes = 0\nbatch_size = 8\nbuffer_size = 200\nwarmup_fraction", 1))
    assert run(capsys, "train", "--config", cfg, "--out", tmp_path)[0] == 0
    assert len(read_rows(tmp_path / "reward_log.csv")) == 0
    code, out, _ = run(capsys, "evaluate", "--config", cfg, "--out", tmp_path)
    assert code == 0
    summary = {r["metric"]: float(r["value"]) for r in read_rows(tmp_path / "report_summary.csv")}
    parts = sum(summary[f"C{k}"] for k in range(1, 7))
    assert summary["total_cost"] == pytest.approx(parts, abs=1e-9)
    assert summary["atd"] >= 0
    slots = read_rows(tmp_path / "report_slots.csv")
    assert len(slots) == 24 and "beta_in_2" in slots[0]


def test_evaluate_shape_mismatch(tmp_path, capsys):
    assert run(capsys, "train", "--config", TINY, "--out", tmp_path)[0] == 0
    other = tmp_path / "three.cfg"
    other.write_text(TINY.read_text().replace("J = 2", "J = 3"))
    code, _, err = run(capsys, "evaluate", "--config", other, "--out", tmp_path)
    assert code == 2
    assert "actors" in err


def test_compare_two_baselines(tmp_path, capsys):
    code, out, _ = run(capsys, "compare", "--config", TINY, "--out", tmp_path, "--policies", "b1,b2")
    assert code == 0
    rows = read_rows(tmp_path / "compare.csv")
    assert [r["policy"] for r in rows] == ["b1", "b2"]
    assert {"total_cost", "atd", "C1", "C6"} <= set(rows[0])


def test_compare_with_oracle_bounds_the_rest(tmp_path, capsys):
    run(capsys, "train", "--config", TINY, "--out", tmp_path)
    code, _, _ = run(capsys, "compare", "--config", TINY, "--out", tmp_path, "--policies", "b1,b2,proposed,oracle")
    assert code == 0
    rows = {r["policy"]: r for r in read_rows(tmp_path / "compare.csv")}
    bound = float(rows["oracle"]["objective"])
    assert all(bound <= float(r["objective"]) + 1e-9 for r in rows.values())
    assert {r["slots"] for r in rows.values()} == {"2"}


def test_compare_unknown_policy_lists_names(tmp_path, capsys):
    code, _, err = run(capsys, "compare", "--config", TINY, "--out", tmp_path, "--policies", "b1,mpc")
    assert code == 2
    assert "mpc" in err and "proposed, b1, b2, b3, oracle" in err


def test_ddqn_train_then_evaluate(tmp_path, capsys):
    cfg = tmp_path / "ddqn.cfg"
    cfg.write_text(TINY.read_text() + "\n[run]\nalgorithm = ddqn\n")
    assert run(capsys, "train", "--config", cfg, "--out", tmp_path)[0] == 0
    code, _, _ = run(capsys, "evaluate", "--config", cfg, "--out", tmp_path)
    assert code == 0
    code, _, _ = run(capsys, "compare", "--config", cfg, "--out", tmp_path, "--policies", "b3",
                     "--ddqn-checkpoint", tmp_path / "checkpoint.bin")
    assert code == 0


def test_synth_traces_round_trip(tmp_path, capsys):
    code, _, _ = run(capsys, "synth-traces", "--config", TINY, "--out", tmp_path)
    assert code == 0
    assert len(load_traces(tmp_path / "train.csv")) == 48
    assert len(load_traces(tmp_path / "test.csv")) == 24


def test_oracle_subcommand(tmp_path, capsys):
    code, out, _ = run(capsys, "oracle", "--config", TINY, "--out", tmp_path)
    assert code == 0 and "objective" in out
    plan = read_rows(tmp_path / "oracle_plan.csv")
    assert len(plan) == 2 and "P_sp_2" in plan[0]


def test_oracle_refuses_big_search(tmp_path, capsys):
    code, _, err = run(capsys, "oracle", "--config", CONFIGS / "case1.cfg", "--out", tmp_path)
    assert code == 1 and "ceiling" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hbmes", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("train", "evaluate", "compare", "synth-traces", "oracle"):
        assert name in proc.stdout
