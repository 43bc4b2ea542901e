"""Command-line interface: exit codes, output files, and determinism."""

from __future__ import annotations

import json

import numpy as np
import pytest
from PIL import Image

from pbrboost.cli import main
from pbrboost.errors import DivergedLoss
from pbrboost.geometry import TextureMap, save_mesh
from pbrboost.primitives import quad, uv_sphere
from pbrboost.raster import render_gbuffer
from pbrboost.segmentation import (
    ViewLabels,
    default_view_set,
    load_mask,
    save_label_set,
    save_mask,
)

from fixtures import quad_front_views, two_segment_sphere, write_constant_normal_oracle


def write_truth_labels(directory, mesh, truth, res=64):
    """Ground-truth segment labels seen from the six canonical views."""
    views = []
    for cam in default_view_set(res, res, mesh=mesh):
        gbuf = render_gbuffer(mesh, cam)
        labels = np.full((res, res), -1, dtype=np.int32)
        labels[gbuf.coverage] = truth[gbuf.face_id[gbuf.coverage]]
        views.append(ViewLabels(cam, labels))
    save_label_set(directory, views)


def png_bytes_set(path) -> set:
    return set(np.asarray(Image.open(path)).ravel().tolist())


def relabel_agreement(found: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of faces matching truth under the best id permutation."""
    hit = 0
    for seg in np.unique(found):
        values, counts = np.unique(truth[found == seg], return_counts=True)
        hit += counts.max()
    return hit / truth.size


# ---------------------------------------------------------------------------
# mask
# ---------------------------------------------------------------------------


def test_mask_from_label_directory(tmp_path, capsys):
    mesh, mask = two_segment_sphere()
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    write_truth_labels(tmp_path / "labels", mesh, mask.face_segments)
    out = tmp_path / "mask.txt"
    rc = main(["mask", str(obj), "--labels-dir", str(tmp_path / "labels"),
               "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "segments: 2" in stdout
    fused = load_mask(out)
    assert fused.segment_count == 2
    assert relabel_agreement(fused.face_segments, mask.face_segments) == 1.0
    lines = out.read_text().splitlines()
    assert lines[0] == "pbrmask v1 2"
    assert len(lines) == 1 + mesh.num_faces


def test_mask_fallback_single_cluster(tmp_path, capsys):
    mesh = uv_sphere(segments=12, rings=7)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    rc = main(["mask", str(obj), "--fallback-k", "1", "--view-res", "48",
               "--out", str(tmp_path / "mask.txt")])
    assert rc == 0
    assert "segments: 1" in capsys.readouterr().out


def test_mask_fallback_separates_albedo_bands(tmp_path, capsys):
    mesh = uv_sphere(segments=16, rings=9)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    bands = np.zeros((96, 96, 3))
    bands[:32, :, 0] = 1.0
    bands[32:64, :, 1] = 1.0
    bands[64:, :, 2] = 1.0
    albedo = tmp_path / "albedo.png"
    TextureMap.from_array(bands).save_png(albedo)
    rc = main(["mask", str(obj), "--fallback-k", "3", "--albedo", str(albedo),
               "--view-res", "96", "--out", str(tmp_path / "mask.txt")])
    assert rc == 0
    assert "segments: 3" in capsys.readouterr().out


def test_mask_missing_labels_dir_is_input_error(tmp_path, capsys):
    mesh = uv_sphere(segments=8, rings=5)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    rc = main(["mask", str(obj), "--labels-dir", str(tmp_path / "absent")])
    assert rc == 2
    assert capsys.readouterr().err.startswith("error:")


def test_mask_requires_exactly_one_source(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["mask", str(tmp_path / "mesh.obj"),
              "--labels-dir", "x", "--fallback-k", "2"])
    assert exc.value.code == 2


def test_mask_fallback_k_below_one_is_input_error(tmp_path, capsys):
    mesh = uv_sphere(segments=8, rings=5)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    rc = main(["mask", str(obj), "--fallback-k", "0"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# assign
# ---------------------------------------------------------------------------


@pytest.fixture()
def sphere_on_disk(tmp_path):
    mesh, mask = two_segment_sphere()
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    mask_path = tmp_path / "mask.txt"
    save_mask(mask, mask_path)
    return obj, mask_path


def test_assign_defaults_bake_constant_maps(tmp_path, sphere_on_disk):
    obj, mask_path = sphere_on_disk
    rough = tmp_path / "rough.png"
    metal = tmp_path / "metal.png"
    rc = main(["assign", str(obj), str(mask_path), "--res", "64",
               "--out-roughness", str(rough), "--out-metalness", str(metal)])
    assert rc == 0
    assert png_bytes_set(rough) == {204}
    assert png_bytes_set(metal) == {0}


def test_assign_recommendations_bake_table_values(tmp_path, sphere_on_disk):
    obj, mask_path = sphere_on_disk
    rec = tmp_path / "rec.json"
    rec.write_text(json.dumps({"segments": [
        {"id": 0, "name": "upper", "roughness": 0.2, "metalness": 1.0},
        {"id": 1, "name": "lower", "roughness": 0.6, "metalness": 0.0},
    ]}))
    rough = tmp_path / "rough.png"
    metal = tmp_path / "metal.png"
    rc = main(["assign", str(obj), str(mask_path), "--res", "64",
               "--recommendations", str(rec),
               "--out-roughness", str(rough), "--out-metalness", str(metal)])
    assert rc == 0
    assert png_bytes_set(rough) == {51, 153}
    assert png_bytes_set(metal) == {0, 255}


def test_assign_malformed_json_is_input_error(tmp_path, sphere_on_disk, capsys):
    obj, mask_path = sphere_on_disk
    bad = tmp_path / "rec.json"
    bad.write_text("{not json")
    rc = main(["assign", str(obj), str(mask_path),
               "--recommendations", str(bad)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_assign_unknown_segment_id_is_input_error(tmp_path, sphere_on_disk, capsys):
    obj, mask_path = sphere_on_disk
    rec = tmp_path / "rec.json"
    rec.write_text(json.dumps({"segments": [
        {"id": 7, "name": "ghost", "roughness": 0.5, "metalness": 0.5}]}))
    rc = main(["assign", str(obj), str(mask_path),
               "--recommendations", str(rec)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------------


def refine_args(obj, oracle_dir, out, **overrides):
    options = {"--t0": "1.0", "--rounds": "2", "--steps": "120",
               "--hidden-width": "16", "--levels": "3", "--table-size": "512",
               "--base-resolution": "4", "--finest-resolution": "16",
               "--res": "64"}
    options.update(overrides)
    argv = ["refine", str(obj), "--oracle-dir", str(oracle_dir),
            "--out", str(out)]
    for key, value in options.items():
        argv += [key, value]
    return argv


@pytest.fixture()
def quad_oracle(tmp_path):
    mesh = quad(1.0)
    obj = tmp_path / "quad.obj"
    save_mesh(mesh, obj)
    tilt = np.array([0.0, -np.sin(np.radians(10.0)), np.cos(np.radians(10.0))])
    write_constant_normal_oracle(tmp_path / "oracle", quad_front_views(mesh), tilt)
    return obj, tmp_path / "oracle"


def test_refine_improves_and_writes_metrics(tmp_path, quad_oracle, capsys):
    obj, oracle_dir = quad_oracle
    out = tmp_path / "normal_uv.png"
    rc = main(refine_args(obj, oracle_dir, out))
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "angular error:" in stdout
    assert out.exists()
    metrics = json.loads((tmp_path / "normal_uv.png.metrics.json").read_text())
    assert len(metrics["round_losses"]) == 2
    assert metrics["held_out_views"] is False
    before = np.mean(metrics["angular_error_deg"]["before"])
    after = np.mean(metrics["angular_error_deg"]["after"])
    assert after < 0.5 * before


def test_refine_is_deterministic(tmp_path, quad_oracle):
    obj, oracle_dir = quad_oracle
    first = tmp_path / "a.png"
    second = tmp_path / "b.png"
    assert main(refine_args(obj, oracle_dir, first, **{"--seed": "5"})) == 0
    assert main(refine_args(obj, oracle_dir, second, **{"--seed": "5"})) == 0
    assert first.read_bytes() == second.read_bytes()
    a = json.loads((tmp_path / "a.png.metrics.json").read_text())
    b = json.loads((tmp_path / "b.png.metrics.json").read_text())
    assert a == b


def test_refine_zero_rounds_is_input_error(tmp_path, quad_oracle, capsys):
    obj, oracle_dir = quad_oracle
    rc = main(refine_args(obj, oracle_dir, tmp_path / "n.png",
                          **{"--rounds": "0"}))
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_refine_t0_outside_unit_interval_is_input_error(tmp_path, quad_oracle, capsys):
    obj, oracle_dir = quad_oracle
    rc = main(refine_args(obj, oracle_dir, tmp_path / "n.png",
                          **{"--t0": "1.5"}))
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_refine_diverged_loss_exits_3(tmp_path, quad_oracle, capsys, monkeypatch):
    obj, oracle_dir = quad_oracle

    def explode(*args, **kwargs):
        raise DivergedLoss(0, 17)

    monkeypatch.setattr("pbrboost.cli.refine", explode)
    rc = main(refine_args(obj, oracle_dir, tmp_path / "n.png"))
    assert rc == 3
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# relight
# ---------------------------------------------------------------------------


def test_relight_default_maps_match_explicit_defaults(tmp_path):
    mesh = uv_sphere(segments=12, rings=7)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    implicit = tmp_path / "implicit.png"
    assert main(["relight", str(obj), "--size", "48",
                 "--out", str(implicit)]) == 0
    rough = tmp_path / "rough.png"
    metal = tmp_path / "metal.png"
    TextureMap.full(4, 4, 0.8, channels=1).save_png(rough)
    TextureMap.full(4, 4, 0.0, channels=1).save_png(metal)
    explicit = tmp_path / "explicit.png"
    assert main(["relight", str(obj), "--size", "48",
                 "--roughness", str(rough), "--metalness", str(metal),
                 "--out", str(explicit)]) == 0
    assert implicit.read_bytes() == explicit.read_bytes()


def test_relight_camera_json_matches_orbit_flags(tmp_path):
    from pbrboost.geometry import frame_camera

    mesh = uv_sphere(segments=12, rings=7)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    cam = frame_camera(mesh, 30.0, 20.0, 48, 48, "orthographic")
    cam_path = tmp_path / "camera.json"
    cam_path.write_text(json.dumps(cam.to_json()))
    by_flags = tmp_path / "flags.png"
    by_json = tmp_path / "json.png"
    assert main(["relight", str(obj), "--size", "48",
                 "--out", str(by_flags)]) == 0
    assert main(["relight", str(obj), "--camera", str(cam_path),
                 "--out", str(by_json)]) == 0
    assert by_flags.read_bytes() == by_json.read_bytes()


def test_relight_rerun_is_byte_identical(tmp_path):
    mesh = uv_sphere(segments=12, rings=7)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    first = tmp_path / "a.png"
    second = tmp_path / "b.png"
    for out in (first, second):
        assert main(["relight", str(obj), "--size", "48",
                     "--azimuth", "75", "--elevation", "-10",
                     "--out", str(out)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_relight_missing_mesh_is_input_error(tmp_path, capsys):
    rc = main(["relight", str(tmp_path / "nope.obj")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# export / parser
# ---------------------------------------------------------------------------


def test_export_requires_material_maps(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["export", str(tmp_path / "mesh.obj"),
              "--albedo", "a.png", "--roughness", "r.png"])
    assert exc.value.code == 2


def test_export_recommendations_without_mask_is_input_error(tmp_path, capsys):
    mesh = uv_sphere(segments=8, rings=5)
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    maps = {}
    for name, channels in (("albedo", 3), ("rough", 1), ("metal", 1)):
        path = tmp_path / f"{name}.png"
        TextureMap.full(4, 4, 0.5, channels=channels).save_png(path)
        maps[name] = str(path)
    rec = tmp_path / "rec.json"
    rec.write_text(json.dumps({"segments": []}))
    rc = main(["export", str(obj), "--albedo", maps["albedo"],
               "--roughness", maps["rough"], "--metalness", maps["metal"],
               "--recommendations", str(rec),
               "--out-dir", str(tmp_path / "gltf")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["polish"])
    assert exc.value.code == 2
