import csv
import json

import numpy as np
import pytest

from d2dmarl.experiment import (ConfigError, ExperimentConfig, SchemaError, compare,
                                moving_average, plan_jobs, reward_curve, run)
from d2dmarl.experiment.cli import main
from d2dmarl.metrics import METRIC_FIELDS

SMALL_CELL = {"num_cues": 4, "num_rbs": 4, "num_d2d": 4}
TINY_TRAINER = {"actor_hidden": [8, 6], "critic_hidden": [12, 8, 4], "batch_size": 8, "lam": 2}


def cfg(tmp_path, **kw):
    base = dict(cell=SMALL_CELL, trainer=TINY_TRAINER, baselines={"dqn_hidden": [8]},
                algorithms=["RANDOM"], warmup_slots=20, train_slots=20, eval_slots=30,
                seeds=[0], output_dir=str(tmp_path / "out"))
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_random_single_seed_bookkeeping(tmp_path):
    detail, summary, failed = run(cfg(tmp_path))
    assert failed == 0
    assert len(rows(tmp_path / "out/detail.csv")) == 1
    assert len(rows(tmp_path / "out/summary.csv")) == 1
    assert json.loads((tmp_path / "out/config.json").read_text())["algorithms"] == ["RANDOM"]


def test_n_sweep_row_count(tmp_path):
    c = cfg(tmp_path, cell={}, sweep_axis="num_d2d", sweep_values=[10, 20, 30, 40, 50],
            seeds=[0, 1, 2], eval_slots=5)
    run(c)
    d = rows(tmp_path / "out/detail.csv")
    assert len(d) == 15
    assert [r["num_d2d"] for r in d[::3]] == ["10", "20", "30", "40", "50"]


def test_summary_means_equal_hand_means(tmp_path):
    run(cfg(tmp_path, seeds=[0, 1, 2], algorithms=["RANDOM", "SLA"]))
    d, s = rows(tmp_path / "out/detail.csv"), rows(tmp_path / "out/summary.csv")
    for srow in s:
        mine = [r for r in d if r["algorithm"] == srow["algorithm"]]
        assert int(srow["n_seeds"]) == 3 and srow["n_failed"] == "0"
        for m in METRIC_FIELDS:
            assert float(srow[m]) == pytest.approx(np.mean([float(r[m]) for r in mine]),
                                                   rel=1e-14)


def test_rerun_is_byte_identical(tmp_path):
    c = cfg(tmp_path, algorithms=["MAAC", "QL", "RANDOM"], seeds=[0, 1])
    run(c, output_dir=tmp_path / "a")
    run(c, output_dir=tmp_path / "b")
    for rel in ("detail.csv", "summary.csv", "weights/MAAC_N4_lam3_s1/actor_2.bin",
                "logs/QL_N4_s0.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_lambda_sweep_dedups_independent_algorithms(tmp_path):
    c = cfg(tmp_path, algorithms=["NAAC", "MAAC"], sweep_axis="lam", sweep_values=[1, 2, 3])
    jobs, layout = plan_jobs(c, tmp_path)
    assert len(layout) == 6 and len(jobs) == 4  # 3 NAAC + 1 MAAC
    detail, _, _ = run(c)
    maac = [r for r in detail if r["algorithm"] == "MAAC"]
    assert len(maac) == 3 and all(r["lam"] == 3 for r in maac)
    assert [r["lam"] for r in detail if r["algorithm"] == "NAAC"] == [1, 2, 3]


def test_config_hash_tracks_content(tmp_path):
    a, b = cfg(tmp_path), cfg(tmp_path, output_dir="elsewhere")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != cfg(tmp_path, eval_slots=31).config_hash()
    assert len(a.config_hash()) == 16


@pytest.mark.parametrize("bad", [dict(seeds=[]), dict(algorithms=["PPO"]),
                                 dict(sweep_axis="lam", sweep_values=[4], algorithms=["NAAC"]),
                                 dict(sweep_axis="num_d2d"), dict(eval_slots=0),
                                 dict(cell={"num_cues": 3})])
def test_invalid_configs(tmp_path, bad):
    with pytest.raises(ConfigError):
        cfg(tmp_path, **bad)


def test_failed_run_is_recorded_and_others_continue(tmp_path, monkeypatch):
    from d2dmarl.experiment import runner

    real = runner.train_job

    def boom(job, env):
        if job.algorithm == "SLA":
            raise RuntimeError("injected")
        return real(job, env)

    monkeypatch.setattr(runner, "train_job", boom)
    detail, summary, failed = run(cfg(tmp_path, algorithms=["SLA", "RANDOM"]))
    assert failed == 1
    by = {r["algorithm"]: r for r in detail}
    assert by["SLA"]["status"] == "failed" and "injected" in by["SLA"]["error"]
    assert by["RANDOM"]["status"] == "ok"
    assert {s["algorithm"]: s["n_failed"] for s in summary} == {"SLA": 1, "RANDOM": 0}


# -- compare ------------------------------------------------------------------

def write_summary(path, recs):
    fields = ["schema_version", "algorithm", "sweep_axis", "sweep_value",
              *[m for m in METRIC_FIELDS if m != "slots"]]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in recs:
            base = {m: 0.5 for m in fields[4:]}
            base.update(schema_version=1, sweep_axis="num_d2d")
            base.update(r)
            w.writerow(base)
    return path


def test_compare_single_input_passthrough(tmp_path):
    p = write_summary(tmp_path / "a.csv", [{"algorithm": "MAAC", "sweep_value": 10}])
    fields, out = compare([p])
    assert out == rows(p) and fields == list(rows(p)[0])


def test_compare_orders_algorithms(tmp_path):
    a = write_summary(tmp_path / "a.csv", [{"algorithm": "MAAC", "sweep_value": 10,
                                            "cue_outage_prob": 0.01, "sum_d2d_rate": 30}])
    b = write_summary(tmp_path / "b.csv", [{"algorithm": "RANDOM", "sweep_value": 10,
                                            "cue_outage_prob": 0.2, "sum_d2d_rate": 20}])
    _, out = compare([a, b])
    rank = {r["algorithm"]: r for r in out}
    assert rank["MAAC"]["rank_cue_outage_prob"] == 1 and rank["RANDOM"]["rank_cue_outage_prob"] == 2
    assert rank["MAAC"]["rank_sum_d2d_rate"] == 1 and rank["RANDOM"]["rank_sum_d2d_rate"] == 2


def test_compare_flags_missing_point(tmp_path):
    a = write_summary(tmp_path / "a.csv", [{"algorithm": "MAAC", "sweep_value": v}
                                           for v in (10, 20)])
    b = write_summary(tmp_path / "b.csv", [{"algorithm": "QL", "sweep_value": 10}])
    _, out = compare([a, b])
    flagged = [r for r in out if r["flag"] == "missing"]
    assert len(out) == 4
    assert [(r["algorithm"], r["sweep_value"]) for r in flagged] == [("QL", "20")]
    assert flagged[0]["rank_sum_d2d_rate"] == ""


def test_compare_schema_mismatch(tmp_path):
    a = write_summary(tmp_path / "a.csv", [{"algorithm": "MAAC", "sweep_value": 10}])
    b = tmp_path / "b.csv"
    b.write_text("algorithm,foo\nQL,1\n")
    with pytest.raises(SchemaError):
        compare([a, b])
    c = write_summary(tmp_path / "c.csv", [{"algorithm": "QL", "sweep_value": 10,
                                            "schema_version": 2}])
    with pytest.raises(SchemaError):
        compare([a, c])


# -- reward curve -------------------------------------------------------------

def test_moving_average_window_one_is_raw():
    x = np.random.default_rng(0).normal(size=50)
    assert np.array_equal(moving_average(x, 1), x)


def test_moving_average_constant():
    assert np.allclose(moving_average(np.full(40, 3.25), 7), 3.25, rtol=0, atol=1e-15)


def test_moving_average_step_gives_ramp():
    # step at t0: y[t0 + j] = (j + 1) / w for j < w, then 1
    t0, w = 10, 4
    x = np.r_[np.zeros(t0), np.ones(12)]
    y = moving_average(x, w)
    assert np.all(y[:t0] == 0)
    assert y[t0:t0 + w] == pytest.approx([0.25, 0.5, 0.75, 1.0])
    assert np.all(y[t0 + w:] == 1)
    with pytest.raises(ValueError):
        moving_average(x, 0)


def test_reward_curve_reads_training_log(tmp_path):
    c = cfg(tmp_path, algorithms=["MAAC"])
    run(c)
    curve = reward_curve(tmp_path / "out/logs/MAAC_N4_lam3_s0.csv", 5)
    assert len(curve) == 40 and curve[0]["smoothed"] == curve[0]["total_reward"]


# -- CLI ----------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    path = tmp_path / "c.json"
    c = cfg(tmp_path)
    path.write_text(json.dumps(c.to_dict()))
    monkeypatch.setenv("D2DMARL_OUTPUT_DIR", str(tmp_path / "envdir"))
    assert main(["sweep", "--config", str(path)]) == 0
    assert (tmp_path / "envdir/detail.csv").exists()
    assert main(["sweep", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"seeds": []}')
    assert main(["sweep", "--config", str(bad)]) == 1
    assert main(["reward-curve", str(tmp_path / "x.csv"), "--window", "0"]) == 1
    capsys.readouterr()
    assert main(["prop1", "--agents", "2", "--samples", "1000"]) == 0
    assert capsys.readouterr().out.startswith("num_agents,estimate,reference")


def test_cli_train_then_execute(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg(tmp_path).to_dict()))
    out = tmp_path / "t"
    assert main(["train", "--config", str(path), "--algorithm", "NAAC", "--output", str(out)]) == 0
    assert sorted(p.name for p in (out / "weights").iterdir()) == [f"actor_{i}.bin"
                                                                   for i in range(4)]
    capsys.readouterr()
    assert main(["execute", "--config", str(path), "--weights", str(out / "weights"),
                 "--slots", "10"]) == 0
    assert json.loads(capsys.readouterr().out)["slots"] == 10
    assert main(["train", "--config", str(path), "--algorithm", "QL"]) == 1


def test_cli_run_failure_exit_code(tmp_path, monkeypatch):
    from d2dmarl.experiment import runner

    def boom(job, env):
        raise RuntimeError("injected")

    monkeypatch.setattr(runner, "train_job", boom)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg(tmp_path).to_dict()))
    assert main(["sweep", "--config", str(path)]) == 2
