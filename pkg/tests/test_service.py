"""HTTP service tests via the in-process test client."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from deabench.cli import main as cli_main
from deabench.service import create_app

FOUR_FIRM_CSV = """id,in:x1,in:x2,out:y
1,0.5,1,1
2,1.5,0.5,1
3,1.75,1.25,1
4,2.5,1.25,1
"""


@pytest.fixture
def client():
    return TestClient(create_app())


@pytest.fixture
def panel_id(client):
    resp = client.post("/panels", content=FOUR_FIRM_CSV,
                       headers={"content-type": "text/csv"})
    assert resp.status_code == 200
    return resp.json()["panel_id"]


def test_upload_reports_cleaning(client):
    csv = "id,in:a,out:b\nok,1,1\nbad,0,2\n"
    resp = client.post("/panels", content=csv, headers={"content-type": "text/csv"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["removed"] == ["bad"]
    assert body["n_dmus"] == 1


def test_upload_rejects_garbage(client):
    resp = client.post("/panels", content="not,a,panel\n1,2,3\n",
                       headers={"content-type": "text/csv"})
    assert resp.status_code == 422
    assert resp.json()["code"] == "bad_panel"


def test_efficiency_endpoint_golden(client, panel_id):
    resp = client.get(f"/panels/{panel_id}/efficiency")
    assert resp.status_code == 200
    scores = [row["score"] for row in resp.json()["scores"]]
    assert scores == pytest.approx([1.0, 1.0, 0.59, 0.50], abs=5e-3)


def test_unknown_panel_is_404(client):
    assert client.get("/panels/nope/efficiency").status_code == 404
    assert client.get("/panels/nope/efficiency").json()["code"] == "unknown_panel"


def test_counterfactual_golden(client, panel_id):
    resp = client.post(f"/panels/{panel_id}/counterfactual",
                       json={"firm": "3", "e_star": 0.8, "nu2": 1.0})
    assert resp.status_code == 200
    body = resp.json()
    assert body["plan"]["inputs"] == pytest.approx([1.53, 0.80], abs=1e-2)
    assert body["verification"]["verified"] is True


def test_counterfactual_zero_change(client, panel_id):
    base = client.get(f"/panels/{panel_id}/efficiency").json()["scores"][3]["score"]
    resp = client.post(f"/panels/{panel_id}/counterfactual",
                       json={"firm": "4", "e_star": base})
    assert resp.status_code == 200
    body = resp.json()
    assert body["cost"]["weighted"] == 0.0
    assert body["plan"]["inputs"] == pytest.approx([2.5, 1.25], abs=1e-9)


def test_counterfactual_below_score_is_422(client, panel_id):
    resp = client.post(f"/panels/{panel_id}/counterfactual",
                       json={"firm": "4", "e_star": 0.4})
    assert resp.status_code == 422
    assert resp.json()["code"] == "target_below_score"


def test_counterfactual_unknown_firm_is_404(client, panel_id):
    resp = client.post(f"/panels/{panel_id}/counterfactual",
                       json={"firm": "99", "e_star": 0.8})
    assert resp.status_code == 404


def test_batch_job_flow(client, panel_id):
    resp = client.post(f"/panels/{panel_id}/batch",
                       json={"e_star": 0.8, "preset": "l2"})
    assert resp.status_code == 202
    job_id = resp.json()["job_id"]
    for _ in range(200):
        status = client.get(f"/jobs/{job_id}").json()
        if status["status"] != "running":
            break
        time.sleep(0.05)
    assert status["status"] == "done"
    result = status["result"]
    assert result["n_analyzed"] == 2
    assert result["stats"]["mean_l0"] == pytest.approx(1.5)
    heat = client.get(f"/panels/{panel_id}/heatmap", params={"job": job_id})
    assert heat.status_code == 200
    assert sum(sum(r) for r in heat.json()["changed"]) == 3


def test_unknown_job_is_404(client):
    assert client.get("/jobs/nope").status_code == 404


def test_spider_endpoint(client, panel_id):
    resp = client.get(f"/panels/{panel_id}/spider/3", params={"e_star": 0.8})
    assert resp.status_code == 200
    body = resp.json()
    assert body["axes"] == ["x1", "x2"]
    assert "farrell" in body["series"]
    assert body["series"]["l2"][1] == pytest.approx(0.80 / 1.25, abs=1e-2)
    ratios = body["series"]["farrell"]
    assert ratios[0] == pytest.approx(ratios[1], abs=1e-9)


def test_spider_below_score_is_422(client, panel_id):
    resp = client.get(f"/panels/{panel_id}/spider/4", params={"e_star": 0.3})
    assert resp.status_code == 422


def test_upload_size_limit(client):
    big = "id,in:a,out:b\n" + ("x,1,1\n" * 2_000_000)
    resp = client.post("/panels", content=big.encode(),
                       headers={"content-type": "text/csv"})
    assert resp.status_code == 413


def test_cli_and_service_json_byte_identical(client, panel_id, tmp_path):
    panel_path = tmp_path / "four.csv"
    panel_path.write_text(FOUR_FIRM_CSV)
    out = tmp_path / "rep"
    assert cli_main(["cf", "--panel", str(panel_path), "--firm", "3",
                     "--estar", "0.8", "--nu2", "1", "--out", str(out)]) == 0
    cli_bytes = (out / "cf_3.json").read_bytes()
    resp = client.post(f"/panels/{panel_id}/counterfactual",
                       json={"firm": "3", "e_star": 0.8, "nu2": 1.0})
    assert resp.content == cli_bytes
