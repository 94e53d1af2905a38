"""HTTP service exposing runs, segments, regeneration and previews."""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, HTMLResponse

from .core import ModelConfig, RasterError, Raster, load_config
from .pipeline import RunDir, execute_run, load_prompts, regenerate_segment
from .provider import HttpProvider, MockProvider, ProviderError
from .segment import build_tree

import io

import numpy as np
from PIL import Image


def create_app(runs_root="runs", config_path=None, mock_script=None) -> FastAPI:
    app = FastAPI(title="pagegen")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    runs_root = Path(runs_root)
    runs_root.mkdir(parents=True, exist_ok=True)
    default_mock = json.loads(Path(mock_script).read_text()) if mock_script else None
    run_locks: dict = {}
    locks_guard = threading.Lock()

    def run_lock(run_id: str) -> threading.Lock:
        with locks_guard:
            return run_locks.setdefault(run_id, threading.Lock())

    def get_run(run_id: str) -> RunDir:
        run = RunDir(runs_root / run_id)
        if not (run.path / "manifest.json").exists():
            raise HTTPException(404, f"unknown run {run_id}")
        return run

    def provider_for(run: RunDir):
        mock_path = run.path / "mock.json"
        if mock_path.exists():
            return MockProvider.from_file(mock_path)
        snapshot = run.manifest()["config"]["model"]
        return HttpProvider(ModelConfig(**{
            k: snapshot[k] for k in ("endpoint", "model_name", "temperature",
                                     "max_output_tokens", "concurrency_limit",
                                     "retry_budget") if k in snapshot}))

    @app.post("/api/runs", status_code=201)
    async def create_run(image: UploadFile = File(...),
                         mode: str = Form("agent"),
                         overrides: str = Form("{}"),
                         mock: str = Form("")):
        try:
            raw = await image.read()
            rgb = np.asarray(Image.open(io.BytesIO(raw)).convert("RGB"))
            raster = Raster.from_rgb(rgb)
        except Exception as exc:
            raise HTTPException(400, f"cannot decode image: {exc}")
        try:
            sep, model, pipe = load_config(config_path, json.loads(overrides))
        except Exception as exc:
            raise HTTPException(422, f"bad config overrides: {exc}")
        if mode not in ("agent", "rule"):
            raise HTTPException(422, f"unknown mode {mode!r}")

        script = json.loads(mock) if mock else default_mock
        run = RunDir.create(runs_root, mode=mode, config_snapshot={
            "separation": sep.__dict__, "model": model.__dict__,
            "pipeline": {"mode": mode}})
        if script:
            (run.path / "mock.json").write_text(json.dumps(script))
            provider = MockProvider(script, config=model)
        else:
            provider = HttpProvider(model)
        prompts = load_prompts(pipe.prompt_dir or None)
        tree = build_tree(raster, sep)
        try:
            with run_lock(run.run_id):
                execute_run(run, raster, tree, provider, prompts, mode)
        except ProviderError as exc:
            raise HTTPException(502, f"generation failed: {exc}")
        return {"run_id": run.run_id}

    @app.get("/api/runs/{run_id}")
    def manifest(run_id: str):
        return get_run(run_id).manifest()

    @app.get("/api/runs/{run_id}/tree")
    def tree(run_id: str):
        run = get_run(run_id)
        path = run.path / "tree.json"
        if not path.exists():
            raise HTTPException(404, "run has no tree")
        return json.loads(path.read_text())

    @app.get("/api/runs/{run_id}/segments/{segment_id}/image")
    def segment_image(run_id: str, segment_id: str):
        run = get_run(run_id)
        path = run.segment_image_path(segment_id)
        if not path.exists():
            # only leaf crops are persisted; cut internal nodes on demand
            tree_path = run.path / "tree.json"
            if not tree_path.exists():
                raise HTTPException(404, f"no image for segment {segment_id}")
            from .core import tree_from_json
            from .segment import crop
            tree = tree_from_json(tree_path.read_text())
            if segment_id not in tree.nodes:
                raise HTTPException(404, f"no image for segment {segment_id}")
            run.write_segment_image(
                segment_id, crop(run.load_input(),
                                 tree.node(segment_id).region))
        return FileResponse(path, media_type="image/png")

    @app.get("/api/runs/{run_id}/segments/{segment_id}/code")
    def segment_code(run_id: str, segment_id: str):
        run = get_run(run_id)
        try:
            html, version = run.load_fragment(segment_id)
        except FileNotFoundError as exc:
            raise HTTPException(404, str(exc))
        return {"segment_id": segment_id, "html": html, "version": version}

    @app.post("/api/runs/{run_id}/segments/{segment_id}/regenerate")
    def regenerate(run_id: str, segment_id: str):
        run = get_run(run_id)
        with run_lock(run_id):
            try:
                doc, changed = regenerate_segment(
                    run, segment_id, provider_for(run), load_prompts())
            except KeyError as exc:
                raise HTTPException(404, str(exc))
            except ProviderError as exc:
                raise HTTPException(502, f"regeneration failed: {exc}")
            html, version = run.load_fragment(segment_id)
        return {"segment_id": segment_id, "version": version,
                "changed": changed, "html": html}

    @app.get("/api/runs/{run_id}/html")
    def final_html(run_id: str):
        run = get_run(run_id)
        if not (run.path / "final.html").exists():
            raise HTTPException(404, "run has no final.html")
        return HTMLResponse(run.final_html())

    @app.get("/api/runs/{run_id}/stats")
    def stats(run_id: str):
        run = get_run(run_id)
        path = run.path / "stats.json"
        if not path.exists():
            raise HTTPException(404, "run has no stats")
        return json.loads(path.read_text())

    return app
