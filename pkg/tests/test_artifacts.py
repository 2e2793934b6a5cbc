import json
import re

import numpy as np
import pytest

from resus_rl.artifacts import TRACE_HEADER, RunManifest, fmt, read_qtable, read_trace_csv, write_qtable, write_report_json, write_trace_csv
from resus_rl.harness import ConstantDose, EpisodeLog, PIDController, ScenarioConfig, evaluate
from resus_rl.pid import PidGains
from resus_rl.plotting import render_svg
from resus_rl.rl_agent import LearningParams, QTable, greedy_action


def test_trace_csv_layout(tmp_path):
    log, _ = evaluate(ConstantDose(5.0), ScenarioConfig())
    path = write_trace_csv(log, tmp_path / "t.csv")
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().split("\n")
    assert lines[0] == "t_min,bv_true_ml,bv_measured_ml,state_id,action_idx,dose_ml_kg_h,u_ml_min,reward"
    assert ",".join(TRACE_HEADER) == lines[0]
    assert len(raw.decode().splitlines()) == 101
    rows = read_trace_csv(path)
    assert float(rows[5]["bv_true_ml"]) == log.records[5].bv_true
    assert all("e" not in v.lower() for r in rows for v in r.values())


def test_empty_log_header_only(tmp_path):
    path = write_trace_csv(EpisodeLog(), tmp_path / "e.csv")
    assert path.read_text() == ",".join(TRACE_HEADER) + "\n"


def test_fmt_positional():
    assert fmt(1e-10) == "0.0000000001"
    assert fmt(25.0) == "25.0"
    assert float(fmt(0.1 + 0.2)) == 0.1 + 0.2


def test_qtable_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    q = QTable(rng.uniform(0, 1e-3, (18, 6)) ** 3, rng.integers(0, 50, (18, 6)))
    path, sidecar = write_qtable(q, tmp_path / "q.csv", LearningParams(), {"episodes": 7, "seed": 1})
    assert len(path.read_text().splitlines()) == 18
    back, meta = read_qtable(path)
    assert np.array_equal(back.values, q.values)
    assert np.array_equal(back.visit_counts, q.visit_counts)
    assert all(greedy_action(back, s) == greedy_action(q, s) for s in range(1, 19))
    assert meta["learning"]["gamma"] == 0.69 and meta["metadata"]["episodes"] == 7


def test_qtable_wrong_shape(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2,3\n")
    with pytest.raises(ValueError):
        read_qtable(tmp_path / "bad.csv")


def test_report_json_sorted_and_stable(tmp_path):
    _, rep = evaluate(ConstantDose(0.0), ScenarioConfig())
    a = write_report_json(rep, tmp_path / "a.json").read_bytes()
    b = write_report_json(rep, tmp_path / "b.json").read_bytes()
    assert a == b
    d = json.loads(a)
    assert d["n"] == 100 and len(d["pe_series"]) == 100


def test_svg_two_panels_and_legend(tmp_path):
    sc = ScenarioConfig()
    rl, _ = evaluate(ConstantDose(25.0, name="RL"), sc)
    pid, _ = evaluate(PIDController(PidGains(kp=30.0, ki=0.1)), sc)
    path = render_svg([rl, pid], tmp_path / "f.svg", bv_target=5000.0)
    text = path.read_text()
    assert text.lstrip().startswith("<?xml") and "<svg" in text
    assert "<script" not in text
    assert ">RL<" in text and ">PID<" in text
    assert len(re.findall(r'<g id="axes_\d+"', text)) == 2
    again = render_svg([rl, pid], tmp_path / "g.svg", bv_target=5000.0)
    assert again.read_bytes() == path.read_bytes()


def test_manifest_lists_outputs(tmp_path):
    m = RunManifest(tmp_path, "train", {"a": 1}, 42, ["x.csv"])
    m.write()
    assert json.loads(m.path.read_text())["status"] == "running"
    with pytest.raises(FileNotFoundError):
        m.finish()
    (tmp_path / "x.csv").write_text("")
    m.finish()
    data = json.loads(m.path.read_text())
    assert data["status"] == "complete" and data["outputs"] == ["x.csv"] and data["master_seed"] == 42
