import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from pagegen.core import tree_from_dict
from pagegen.fixtures import band_rows
from pagegen.server import create_app

OVERRIDES = {"separation.window_size": 3, "separation.var_thr": 10,
             "separation.diff_thr": 50, "separation.portion_thr": 0.5,
             "separation.max_depth": 1}


@pytest.fixture
def client(tmp_path):
    app = create_app(runs_root=tmp_path / "runs")
    with TestClient(app) as c:
        yield c


def strip_png_bytes():
    gray = band_rows([(10, 3), (200, 4), (10, 3)], width=10)
    buf = io.BytesIO()
    Image.fromarray(np.repeat(gray[:, :, None], 3, axis=2)).save(buf, "PNG")
    return buf.getvalue()


def create_run(client, mode="rule"):
    resp = client.post("/api/runs", files={
        "image": ("strips.png", strip_png_bytes(), "image/png")},
        data={"mode": mode, "overrides": json.dumps(OVERRIDES),
              "mock": json.dumps({"kind": "echo"})})
    assert resp.status_code == 201, resp.text
    return resp.json()["run_id"]


class TestRunLifecycle:
    def test_create_and_fetch_tree(self, client):
        run_id = create_run(client)
        manifest = client.get(f"/api/runs/{run_id}").json()
        assert manifest["status"] == "complete"
        assert manifest["mode"] == "rule"

        tree_data = client.get(f"/api/runs/{run_id}/tree").json()
        tree = tree_from_dict(tree_data)  # validates schema + invariants
        assert len(tree.leaves()) == 3

    def test_unknown_run_404(self, client):
        assert client.get("/api/runs/nope").status_code == 404
        assert client.get("/api/runs/nope/tree").status_code == 404

    def test_bad_image_400(self, client):
        resp = client.post("/api/runs", files={
            "image": ("x.png", b"not a png", "image/png")},
            data={"mode": "rule"})
        assert resp.status_code == 400

    def test_bad_mode_422(self, client):
        resp = client.post("/api/runs", files={
            "image": ("x.png", strip_png_bytes(), "image/png")},
            data={"mode": "magic"})
        assert resp.status_code == 422


class TestSegmentEndpoints:
    def test_segment_image_is_png_crop(self, client):
        run_id = create_run(client)
        resp = client.get(f"/api/runs/{run_id}/segments/0.1/image")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        im = Image.open(io.BytesIO(resp.content))
        assert im.size == (10, 4)  # middle strip rows [3, 7)

    def test_segment_code(self, client):
        run_id = create_run(client)
        resp = client.get(f"/api/runs/{run_id}/segments/0.1/code")
        assert resp.status_code == 200
        body = resp.json()
        assert body["version"] == 1
        assert "<!--seg:0.1-->" in body["html"]

    def test_unknown_segment_404(self, client):
        run_id = create_run(client)
        assert client.get(f"/api/runs/{run_id}/segments/9/code").status_code == 404


class TestRegenerateEndpoint:
    def test_rule_mode_changes_leaf_and_final(self, client):
        run_id = create_run(client)
        before = client.get(f"/api/runs/{run_id}").json()["fragment_versions"]
        resp = client.post(f"/api/runs/{run_id}/segments/0.1/regenerate")
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["version"] == 2
        assert body["changed"] == ["0.1", "final"]
        after = client.get(f"/api/runs/{run_id}").json()["fragment_versions"]
        diff = {k for k in after if after[k] != before.get(k)}
        assert diff == {"0.1", "final"}

    def test_unknown_segment_404(self, client):
        run_id = create_run(client)
        resp = client.post(f"/api/runs/{run_id}/segments/9.9/regenerate")
        assert resp.status_code == 404


class TestHtmlAndStats:
    def test_final_html_content_type(self, client):
        run_id = create_run(client)
        resp = client.get(f"/api/runs/{run_id}/html")
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("text/html")
        assert "<!--seg:" in resp.text

    def test_stats(self, client):
        run_id = create_run(client)
        stats = client.get(f"/api/runs/{run_id}/stats").json()
        assert stats["total_calls"] == 4  # 3 leaves + final
        assert sum(stats["calls_per_depth"]) == stats["total_calls"]
