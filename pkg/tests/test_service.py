"""Preview service endpoints: revisions, render modes, export, CLI parity."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from pbrboost.cli import main
from pbrboost.geometry import (
    TextureMap,
    float_to_u8,
    load_mesh,
    load_texture,
    save_mesh,
)
from pbrboost.materials import SegmentEntry, SegmentTable, load_recommendations
from pbrboost.segmentation import load_mask, save_mask
from pbrboost.service import PALETTE, Session, create_app

from fixtures import two_segment_sphere


def make_session(**overrides) -> Session:
    mesh, mask = two_segment_sphere()
    table = SegmentTable((SegmentEntry(0, "upper", 0.2, 1.0),
                          SegmentEntry(1, "lower", 0.6, 0.0)), 0.7, 0.0)
    kwargs = dict(mesh=mesh, mask=mask, table=table,
                  albedo=TextureMap.full(4, 4, (0.7, 0.55, 0.35)).quantized(),
                  resolution=64, material_res=128)
    kwargs.update(overrides)
    return Session(**kwargs)


@pytest.fixture()
def client():
    return TestClient(create_app(make_session()))


def png_pixels(body: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(body)).convert("RGB"))


def test_segments_listing_sorted_with_counts(client):
    resp = client.get("/api/segments")
    assert resp.status_code == 200
    assert resp.headers["X-Revision"] == "0"
    body = resp.json()
    assert [e["id"] for e in body] == [0, 1]
    assert [e["name"] for e in body] == ["upper", "lower"]
    assert body[0]["roughness"] == 0.2 and body[0]["metalness"] == 1.0
    assert body[1]["roughness"] == 0.6 and body[1]["metalness"] == 0.0
    mesh, _ = two_segment_sphere()
    assert all(e["face_count"] > 0 for e in body)
    assert sum(e["face_count"] for e in body) == mesh.num_faces


def test_endpoints_409_without_session(tmp_path):
    client = TestClient(create_app(None))
    assert client.get("/api/segments").status_code == 409
    put = client.put("/api/segments/0", json={"roughness": 0.5, "metalness": 0.5})
    assert put.status_code == 409
    assert client.get("/api/render").status_code == 409
    assert client.post("/api/export").status_code == 409


def test_put_bumps_revision_and_reads_back(client):
    resp = client.put("/api/segments/1", json={"roughness": 0.9, "metalness": 0.25})
    assert resp.status_code == 200
    assert resp.json() == {"revision": 1}
    listing = client.get("/api/segments")
    assert listing.headers["X-Revision"] == "1"
    body = listing.json()
    assert body[1]["roughness"] == 0.9 and body[1]["metalness"] == 0.25
    assert body[0]["roughness"] == 0.2 and body[0]["metalness"] == 1.0
    again = client.put("/api/segments/0", json={"roughness": 0.3, "metalness": 0.0})
    assert again.json() == {"revision": 2}


def test_put_unknown_segment_is_404(client):
    resp = client.put("/api/segments/99", json={"roughness": 0.5, "metalness": 0.5})
    assert resp.status_code == 404
    assert client.get("/api/segments").headers["X-Revision"] == "0"


def test_put_out_of_range_is_422(client):
    assert client.put("/api/segments/0",
                      json={"roughness": 1.5, "metalness": 0.0}).status_code == 422
    assert client.put("/api/segments/0",
                      json={"roughness": 0.5, "metalness": -0.1}).status_code == 422
    assert client.put("/api/segments/0",
                      json={"roughness": "shiny"}).status_code == 422
    assert client.get("/api/segments").headers["X-Revision"] == "0"


def test_render_modes_return_png_with_revision(client):
    for mode in ("relight", "albedo", "normal", "segments"):
        resp = client.get(f"/api/render?azimuth=40&elevation=25&mode={mode}")
        assert resp.status_code == 200, mode
        assert resp.headers["content-type"] == "image/png"
        assert resp.headers["X-Revision"] == "0"
        assert resp.content[:4] == b"\x89PNG"


def test_render_rejects_bad_mode_and_angles(client):
    assert client.get("/api/render?mode=xray").status_code == 422
    assert client.get("/api/render?elevation=91").status_code == 422
    assert client.get("/api/render?elevation=-91").status_code == 422
    assert client.get("/api/render?rig=disco").status_code == 422
    assert client.get("/api/render?rig=ambient").status_code == 200


def test_render_is_deterministic_at_fixed_revision(client):
    first = client.get("/api/render?azimuth=40&elevation=25&mode=relight")
    second = client.get("/api/render?azimuth=40&elevation=25&mode=relight")
    assert first.content == second.content


def test_edit_changes_relight_but_not_geometry_modes(client):
    url = "/api/render?azimuth=40&elevation=25&mode="
    before = {m: client.get(url + m).content
              for m in ("relight", "albedo", "normal", "segments")}
    client.put("/api/segments/0", json={"roughness": 0.95, "metalness": 0.0})
    after = {m: client.get(url + m) for m in before}
    assert all(r.headers["X-Revision"] == "1" for r in after.values())
    assert after["relight"].content != before["relight"]
    for mode in ("albedo", "normal", "segments"):
        assert after[mode].content == before[mode]


def test_segments_mode_uses_palette_colors(client):
    resp = client.get("/api/render?mode=segments")
    pixels = png_pixels(resp.content).reshape(-1, 3)
    observed = {tuple(px) for px in pixels} - {(0, 0, 0)}
    expected = {tuple(float_to_u8(PALETTE[i])) for i in (0, 1)}
    assert observed == expected


def test_export_writes_bundle_and_tracks_edits(tmp_path):
    session = make_session(export_dir=tmp_path / "gltf")
    client = TestClient(create_app(session))
    client.put("/api/segments/1", json={"roughness": 0.15, "metalness": 0.85})
    resp = client.post("/api/export")
    assert resp.status_code == 200
    body = resp.json()
    assert body["revision"] == 1
    for path in body["paths"].values():
        assert Path(path).exists()
    materials = json.loads((tmp_path / "gltf" / "materials.json").read_text())
    entry = [s for s in materials["segments"] if s["id"] == 1][0]
    assert entry["roughness"] == 0.15 and entry["metalness"] == 0.85


def test_export_disk_failure_is_500(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    session = make_session(export_dir=blocker / "sub")
    client = TestClient(create_app(session))
    assert client.post("/api/export").status_code == 500


def test_root_serves_html_fallback(monkeypatch, tmp_path):
    monkeypatch.setenv("PBRBOOST_FRONTEND_DIR", str(tmp_path / "missing"))
    client = TestClient(create_app(make_session()))
    resp = client.get("/")
    assert resp.status_code == 200
    assert "/api" in resp.text


def test_root_serves_static_bundle_when_present(monkeypatch, tmp_path):
    dist = tmp_path / "dist"
    dist.mkdir()
    (dist / "index.html").write_text("<html><body>editor</body></html>")
    monkeypatch.setenv("PBRBOOST_FRONTEND_DIR", str(dist))
    client = TestClient(create_app(make_session()))
    resp = client.get("/")
    assert resp.status_code == 200
    assert "editor" in resp.text


def test_render_parity_with_cli_relight(tmp_path):
    mesh, mask = two_segment_sphere()
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    mask_path = tmp_path / "mask.txt"
    save_mask(mask, mask_path)
    rec = tmp_path / "rec.json"
    rec.write_text(json.dumps({
        "default": {"roughness": 0.7, "metalness": 0.0},
        "segments": [
            {"id": 0, "name": "upper", "roughness": 0.2, "metalness": 1.0},
            {"id": 1, "name": "lower", "roughness": 0.6, "metalness": 0.0},
        ],
    }))
    albedo = tmp_path / "albedo.png"
    TextureMap.full(4, 4, (0.7, 0.55, 0.35)).save_png(albedo)
    assert main(["assign", str(obj), str(mask_path),
                 "--recommendations", str(rec), "--res", "128",
                 "--out-roughness", str(tmp_path / "rough.png"),
                 "--out-metalness", str(tmp_path / "metal.png")]) == 0
    out = tmp_path / "relit.png"
    assert main(["relight", str(obj), "--albedo", str(albedo),
                 "--roughness", str(tmp_path / "rough.png"),
                 "--metalness", str(tmp_path / "metal.png"),
                 "--azimuth", "40", "--elevation", "25",
                 "--size", "64", "--out", str(out)]) == 0

    loaded = load_mesh(obj)
    loaded_mask = load_mask(mask_path)
    session = Session(mesh=loaded, mask=loaded_mask,
                      table=load_recommendations(rec, loaded_mask),
                      albedo=load_texture(albedo, channels=3),
                      resolution=64, material_res=128)
    client = TestClient(create_app(session))
    resp = client.get("/api/render?azimuth=40&elevation=25&mode=relight")
    assert resp.content == out.read_bytes()
