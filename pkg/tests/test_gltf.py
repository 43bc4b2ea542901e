"""glTF 2.0 bundle writer and its structural validator."""

from __future__ import annotations

import json

import numpy as np
import pytest
from PIL import Image

from pbrboost.cli import main
from pbrboost.geometry import TextureMap, float_to_u8, save_mesh
from pbrboost.gltf_export import export_gltf, load_gltf_positions, validate_gltf
from pbrboost.materials import SegmentEntry, SegmentTable
from pbrboost.primitives import uv_sphere
from pbrboost.segmentation import save_mask

from fixtures import two_segment_sphere


@pytest.fixture()
def bundle(tmp_path):
    mesh = uv_sphere(segments=10, rings=7)
    gradient = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    roughness = TextureMap.from_array(gradient)
    metalness = TextureMap.full(8, 8, 1.0, channels=1)
    albedo = TextureMap.full(8, 8, (0.9, 0.5, 0.2))
    table = SegmentTable((SegmentEntry(0, "body", 0.4, 0.1),), 0.8, 0.0)
    paths = export_gltf(mesh, tmp_path, roughness=roughness,
                        metalness=metalness, albedo=albedo, table=table,
                        name="ball")
    return mesh, roughness, metalness, paths


def test_export_validates_clean_and_writes_everything(bundle):
    _, _, _, paths = bundle
    assert validate_gltf(paths["gltf"]) == []
    assert set(paths) == {"buffer", "gltf", "albedo", "metallicRoughness",
                          "materials"}
    for path in paths.values():
        assert json.loads(json.dumps(path))  # path strings are plain JSON
    gltf = json.loads(open(paths["gltf"]).read())
    assert gltf["asset"]["version"] == "2.0"


def test_positions_roundtrip_exactly(bundle):
    mesh, _, _, paths = bundle
    exported = load_gltf_positions(paths["gltf"])
    expected = np.unique(mesh.positions.astype(np.float32), axis=0)
    assert np.array_equal(np.unique(exported, axis=0), expected)


def test_indices_rebuild_the_triangle_corners(bundle):
    mesh, _, _, paths = bundle
    gltf = json.loads(open(paths["gltf"]).read())
    from pbrboost.gltf_export import _read_accessor

    buffers = [open(paths["buffer"], "rb").read()]
    prim = gltf["meshes"][0]["primitives"][0]
    positions = _read_accessor(gltf, buffers, prim["attributes"]["POSITION"])
    indices = _read_accessor(gltf, buffers, prim["indices"]).ravel()
    corners = positions[indices].reshape(-1, 3, 3)
    assert np.array_equal(corners, mesh.corner_positions().astype(np.float32))


def test_metallic_roughness_channel_packing(bundle):
    _, roughness, metalness, paths = bundle
    packed = np.asarray(Image.open(paths["metallicRoughness"]))
    assert np.all(packed[:, :, 0] == 255)
    assert np.array_equal(packed[:, :, 1], float_to_u8(roughness.data[:, :, 0]))
    assert np.array_equal(packed[:, :, 2], float_to_u8(metalness.data[:, :, 0]))


def test_materials_json_matches_table(bundle, tmp_path):
    _, _, _, paths = bundle
    table = SegmentTable((SegmentEntry(0, "body", 0.4, 0.1),), 0.8, 0.0)
    assert json.loads(open(paths["materials"]).read()) == table.to_json()


def test_minimal_export_uses_color_factor(tmp_path):
    mesh = uv_sphere(segments=8, rings=5)
    paths = export_gltf(mesh, tmp_path,
                        roughness=TextureMap.full(4, 4, 0.5, channels=1),
                        metalness=TextureMap.full(4, 4, 0.0, channels=1))
    assert validate_gltf(paths["gltf"]) == []
    assert "albedo" not in paths and "materials" not in paths
    gltf = json.loads(open(paths["gltf"]).read())
    pbr = gltf["materials"][0]["pbrMetallicRoughness"]
    assert pbr["baseColorFactor"] == [1.0, 1.0, 1.0, 1.0]
    assert "baseColorTexture" not in pbr


def test_mismatched_map_resolutions_rejected(tmp_path):
    mesh = uv_sphere(segments=8, rings=5)
    with pytest.raises(ValueError):
        export_gltf(mesh, tmp_path,
                    roughness=TextureMap.full(8, 8, 0.5, channels=1),
                    metalness=TextureMap.full(4, 4, 0.0, channels=1))


def test_validator_flags_truncated_buffer(bundle, tmp_path):
    _, _, _, paths = bundle
    data = open(paths["buffer"], "rb").read()
    open(paths["buffer"], "wb").write(data[:-8])
    problems = validate_gltf(paths["gltf"])
    assert any("byteLength" in p for p in problems)
    assert any("overrun" in p for p in problems)


def test_validator_flags_wrong_position_bounds(bundle):
    _, _, _, paths = bundle
    gltf = json.loads(open(paths["gltf"]).read())
    gltf["accessors"][0]["min"] = [9.0, 9.0, 9.0]
    open(paths["gltf"], "w").write(json.dumps(gltf))
    problems = validate_gltf(paths["gltf"])
    assert any("min/max" in p for p in problems)


def test_validator_flags_out_of_range_index(bundle):
    _, _, _, paths = bundle
    gltf = json.loads(open(paths["gltf"]).read())
    view = gltf["bufferViews"][gltf["accessors"][3]["bufferView"]]
    data = bytearray(open(paths["buffer"], "rb").read())
    offset = view.get("byteOffset", 0)
    data[offset:offset + 4] = (10 ** 6).to_bytes(4, "little")
    open(paths["buffer"], "wb").write(bytes(data))
    problems = validate_gltf(paths["gltf"])
    assert any("index out of range" in p for p in problems)


def test_validator_flags_missing_texture_file(bundle):
    import os

    _, _, _, paths = bundle
    os.remove(paths["metallicRoughness"])
    problems = validate_gltf(paths["gltf"])
    assert any("file missing" in p for p in problems)


def test_cli_export_full_bundle(tmp_path, capsys):
    mesh, mask = two_segment_sphere()
    obj = tmp_path / "mesh.obj"
    save_mesh(mesh, obj)
    mask_path = tmp_path / "mask.txt"
    save_mask(mask, mask_path)
    rec = tmp_path / "rec.json"
    rec.write_text(json.dumps({"segments": [
        {"id": 0, "name": "upper", "roughness": 0.2, "metalness": 1.0},
        {"id": 1, "name": "lower", "roughness": 0.6, "metalness": 0.0},
    ]}))
    textures = {}
    for stem, channels, value in (("albedo", 3, (0.7, 0.5, 0.3)),
                                  ("rough", 1, 0.4), ("metal", 1, 0.0),
                                  ("normal", 3, (0.5, 0.5, 1.0))):
        path = tmp_path / f"{stem}.png"
        TextureMap.full(8, 8, value, channels=channels).save_png(path)
        textures[stem] = str(path)
    out_dir = tmp_path / "gltf"
    rc = main(["export", str(obj), "--albedo", textures["albedo"],
               "--roughness", textures["rough"],
               "--metalness", textures["metal"],
               "--normal-uv", textures["normal"],
               "--mask", str(mask_path), "--recommendations", str(rec),
               "--out-dir", str(out_dir), "--name", "asset"])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert f"wrote {out_dir / 'asset.gltf'}" in stdout
    assert validate_gltf(out_dir / "asset.gltf") == []
    materials = json.loads((out_dir / "materials.json").read_text())
    assert [s["name"] for s in materials["segments"]] == ["upper", "lower"]
    gltf = json.loads((out_dir / "asset.gltf").read_text())
    assert "normalTexture" in gltf["materials"][0]
