"""CLI end-to-end tests (invoking main() directly)."""

import json

import numpy as np
import pytest

from deabench.cli import main
from deabench.model import write_panel_csv

FOUR_FIRM_CSV = """id,in:x1,in:x2,out:y
1,0.5,1,1
2,1.5,0.5,1
3,1.75,1.25,1
4,2.5,1.25,1
"""


@pytest.fixture
def panel_file(tmp_path):
    path = tmp_path / "four_firms.csv"
    path.write_text(FOUR_FIRM_CSV)
    return path


def test_eff_writes_golden_scores(panel_file, tmp_path, capsys):
    out = tmp_path / "rep"
    code = main(["eff", "--panel", str(panel_file), "--out", str(out)])
    assert code == 0
    lines = (out / "efficiency.csv").read_text().splitlines()
    assert lines[0] == "id,score,peers"
    scores = [float(line.split(",")[1]) for line in lines[1:]]
    assert scores == pytest.approx([1.0, 1.0, 0.59, 0.50], abs=5e-3)
    payload = json.loads((out / "efficiency.json").read_text())
    assert len(payload["scores"]) == 4


def test_cf_golden_third_firm(panel_file, tmp_path):
    out = tmp_path / "rep"
    code = main(["cf", "--panel", str(panel_file), "--firm", "3",
                 "--estar", "0.8", "--nu2", "1", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "cf_3.json").read_text())
    assert payload["plan"]["inputs"] == pytest.approx([1.53, 0.80], abs=1e-2)
    assert payload["verification"]["verified"] is True
    assert (out / "spider_3.png").stat().st_size > 0


def test_cf_target_below_score_exits_2(panel_file, tmp_path, capsys):
    code = main(["cf", "--panel", str(panel_file), "--firm", "4",
                 "--estar", "0.4", "--out", str(tmp_path)])
    assert code == 2
    assert "below the current score" in capsys.readouterr().err


def test_cf_unknown_firm_exits_2(panel_file, tmp_path):
    code = main(["cf", "--panel", str(panel_file), "--firm", "nope",
                 "--estar", "0.8", "--out", str(tmp_path)])
    assert code == 2


def test_cf_locked_feature(panel_file, tmp_path):
    out = tmp_path / "rep"
    code = main(["cf", "--panel", str(panel_file), "--firm", "3",
                 "--estar", "0.8", "--lock", "x1", "--out", str(out)])
    assert code == 0
    payload = json.loads((out / "cf_3.json").read_text())
    assert payload["plan"]["inputs"][0] == pytest.approx(1.75, abs=1e-9)


def test_batch_writes_tables_and_figures(panel_file, tmp_path):
    out = tmp_path / "rep"
    code = main(["batch", "--panel", str(panel_file), "--estar", "0.8",
                 "--config", "l2", "--out", str(out)])
    assert code == 0
    batch = json.loads((out / "batch_l2.json").read_text())
    assert batch["n_analyzed"] == 2
    assert batch["n_skipped"] == 2
    heat = json.loads((out / "heatmap_l2.json").read_text())
    assert np.array(heat["changed"]).sum() == 3
    assert (out / "heatmap_l2.png").stat().st_size > 0
    freq = (out / "change_frequency_l2.csv").read_text()
    assert freq.startswith("feature,change_frequency")


def test_synth_roundtrip(tmp_path):
    out = tmp_path / "synth"
    code = main(["synth", "--seed", "5", "--firms", "12", "--inputs", "2",
                 "--outputs", "1", "--out", str(out)])
    assert code == 0
    assert (out / "panel.csv").exists()
    code = main(["eff", "--panel", str(out / "panel.csv"), "--out", str(out)])
    assert code == 0


def test_usage_error_on_bad_panel(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("nope\n")
    assert main(["eff", "--panel", str(bad), "--out", str(tmp_path)]) == 2
