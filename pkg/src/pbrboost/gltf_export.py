"""glTF 2.0 export of a mesh with metallic-roughness materials.

One .gltf JSON, one little-endian binary buffer, and PNG textures. Roughness
packs into the green channel and metalness into the blue channel of a single
metallicRoughness image, the layout glTF samplers expect. A structural
self-check validates the written bundle before returning.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import TextureMap, TriMesh, float_to_u8
from .materials import SegmentTable

_COMPONENT_SIZE = {5125: 4, 5126: 4}  # UNSIGNED_INT, FLOAT
_TYPE_SIZE = {"SCALAR": 1, "VEC2": 2, "VEC3": 3}


def _unify_vertices(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Collapse (position, uv, normal) corner triples into shared vertices."""
    corners = mesh.triangles.reshape(-1, 3)
    unique, inverse = np.unique(corners, axis=0, return_inverse=True)
    positions = mesh.positions[unique[:, 0]].astype(np.float32)
    uvs = mesh.uvs[unique[:, 1]].astype(np.float64)
    uvs[:, 1] = 1.0 - uvs[:, 1]  # glTF texture space starts at the top-left
    normals = mesh.normals[unique[:, 2]]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return (positions, uvs.astype(np.float32), normals.astype(np.float32),
            inverse.astype(np.uint32))


def _pack_metallic_roughness(roughness: TextureMap, metalness: TextureMap) -> np.ndarray:
    if roughness.channels != 1 or metalness.channels != 1:
        raise ValueError("material maps must be single-channel")
    if roughness.data.shape != metalness.data.shape:
        raise ValueError("roughness and metalness maps must share a resolution")
    h, w = roughness.data.shape[:2]
    packed = np.empty((h, w, 3), dtype=np.uint8)
    packed[:, :, 0] = 255  # occlusion slot, unused
    packed[:, :, 1] = float_to_u8(roughness.data[:, :, 0])
    packed[:, :, 2] = float_to_u8(metalness.data[:, :, 0])
    return packed


def export_gltf(mesh: TriMesh, out_dir: str | Path, *,
                roughness: TextureMap, metalness: TextureMap,
                albedo: TextureMap | None = None,
                normal_uv: TextureMap | None = None,
                table: SegmentTable | None = None,
                name: str = "asset") -> dict[str, str]:
    """Write the glTF bundle and return the paths of everything written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    positions, uvs, normals, indices = _unify_vertices(mesh)

    blobs = [positions.tobytes(), normals.tobytes(), uvs.tobytes(),
             indices.tobytes()]
    offsets = np.concatenate([[0], np.cumsum([len(b) for b in blobs])])
    buffer_bytes = b"".join(blobs)
    bin_name = f"{name}.bin"
    (out / bin_name).write_bytes(buffer_bytes)

    buffer_views = []
    for i, blob in enumerate(blobs):
        buffer_views.append({
            "buffer": 0,
            "byteOffset": int(offsets[i]),
            "byteLength": len(blob),
            "target": 34963 if i == 3 else 34962,
        })
    accessors = [
        {"bufferView": 0, "componentType": 5126, "count": len(positions),
         "type": "VEC3",
         "min": [float(v) for v in positions.min(axis=0)],
         "max": [float(v) for v in positions.max(axis=0)]},
        {"bufferView": 1, "componentType": 5126, "count": len(normals),
         "type": "VEC3"},
        {"bufferView": 2, "componentType": 5126, "count": len(uvs),
         "type": "VEC2"},
        {"bufferView": 3, "componentType": 5125, "count": len(indices),
         "type": "SCALAR"},
    ]

    paths = {"buffer": str(out / bin_name)}
    images, textures = [], []

    def add_texture(stem: str, data: np.ndarray) -> int:
        from PIL import Image

        file_name = f"{stem}.png"
        Image.fromarray(data).save(out / file_name)
        images.append({"uri": file_name})
        textures.append({"sampler": 0, "source": len(images) - 1})
        paths[stem] = str(out / file_name)
        return len(textures) - 1

    pbr: dict = {"metallicFactor": 1.0, "roughnessFactor": 1.0}
    material: dict = {"name": name, "pbrMetallicRoughness": pbr}
    if albedo is not None:
        pbr["baseColorTexture"] = {
            "index": add_texture("albedo", float_to_u8(albedo.data))}
    else:
        pbr["baseColorFactor"] = [1.0, 1.0, 1.0, 1.0]
    pbr["metallicRoughnessTexture"] = {
        "index": add_texture("metallicRoughness",
                             _pack_metallic_roughness(roughness, metalness))}
    if normal_uv is not None:
        material["normalTexture"] = {
            "index": add_texture("normal", float_to_u8(normal_uv.data))}

    gltf = {
        "asset": {"version": "2.0", "generator": "pbrboost"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0, "name": name}],
        "meshes": [{"primitives": [{
            "attributes": {"POSITION": 0, "NORMAL": 1, "TEXCOORD_0": 2},
            "indices": 3,
            "material": 0,
        }]}],
        "materials": [material],
        "samplers": [{"magFilter": 9729, "minFilter": 9729,
                      "wrapS": 10497, "wrapT": 10497}],
        "images": images,
        "textures": textures,
        "buffers": [{"uri": bin_name, "byteLength": len(buffer_bytes)}],
        "bufferViews": buffer_views,
        "accessors": accessors,
    }
    if not textures:
        del gltf["samplers"], gltf["images"], gltf["textures"]

    gltf_path = out / f"{name}.gltf"
    gltf_path.write_text(json.dumps(gltf, indent=2), encoding="utf-8")
    paths["gltf"] = str(gltf_path)

    if table is not None:
        mat_path = out / "materials.json"
        mat_path.write_text(json.dumps(table.to_json(), indent=2),
                            encoding="utf-8")
        paths["materials"] = str(mat_path)

    problems = validate_gltf(gltf_path)
    if problems:
        raise SchemaError(str(gltf_path), "; ".join(problems))
    return paths


def _accessor_in_bounds(gltf: dict, buffers: list[bytes], index: int) -> bool:
    """Whether the accessor's bytes actually exist in the loaded buffer."""
    acc = gltf["accessors"][index]
    view = gltf["bufferViews"][acc["bufferView"]]
    if view["buffer"] >= len(buffers):
        return False
    end = (view.get("byteOffset", 0) + acc.get("byteOffset", 0)
           + _COMPONENT_SIZE[acc["componentType"]]
           * _TYPE_SIZE[acc["type"]] * acc["count"])
    return end <= len(buffers[view["buffer"]])


def _read_accessor(gltf: dict, buffers: list[bytes], index: int) -> np.ndarray:
    acc = gltf["accessors"][index]
    view = gltf["bufferViews"][acc["bufferView"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    n = acc["count"] * _TYPE_SIZE[acc["type"]]
    dtype = np.dtype("<u4") if acc["componentType"] == 5125 else np.dtype("<f4")
    data = np.frombuffer(buffers[view["buffer"]], dtype=dtype, count=n, offset=start)
    return data.reshape(acc["count"], _TYPE_SIZE[acc["type"]])


def validate_gltf(gltf_path: str | Path) -> list[str]:
    """Structural self-check; returns a list of problems (empty = valid)."""
    gltf_path = Path(gltf_path)
    problems: list[str] = []
    try:
        gltf = json.loads(gltf_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        return [f"unreadable glTF JSON: {exc}"]

    if gltf.get("asset", {}).get("version") != "2.0":
        problems.append("asset.version is not 2.0")

    buffers = []
    for i, buf in enumerate(gltf.get("buffers", [])):
        path = gltf_path.parent / buf["uri"]
        if not path.exists():
            problems.append(f"buffer {i} file missing: {buf['uri']}")
            buffers.append(b"")
            continue
        data = path.read_bytes()
        buffers.append(data)
        if len(data) != buf["byteLength"]:
            problems.append(f"buffer {i} byteLength {buf['byteLength']} "
                            f"!= file size {len(data)}")

    views = gltf.get("bufferViews", [])
    for i, view in enumerate(views):
        end = view.get("byteOffset", 0) + view["byteLength"]
        if view["buffer"] >= len(buffers):
            problems.append(f"bufferView {i} references missing buffer")
        elif end > len(buffers[view["buffer"]]):
            problems.append(f"bufferView {i} overruns its buffer")

    for i, acc in enumerate(gltf.get("accessors", [])):
        if acc["bufferView"] >= len(views):
            problems.append(f"accessor {i} references missing bufferView")
            continue
        view = views[acc["bufferView"]]
        size = (_COMPONENT_SIZE[acc["componentType"]]
                * _TYPE_SIZE[acc["type"]] * acc["count"])
        if acc.get("byteOffset", 0) + size > view["byteLength"]:
            problems.append(f"accessor {i} overruns its bufferView")

    for m, mesh_obj in enumerate(gltf.get("meshes", [])):
        for p, prim in enumerate(mesh_obj.get("primitives", [])):
            n_acc = len(gltf.get("accessors", []))
            refs_ok = True
            for attr, idx in prim.get("attributes", {}).items():
                if idx >= n_acc:
                    problems.append(f"mesh {m} primitive {p} {attr} accessor missing")
                    refs_ok = False
            pos_acc = prim["attributes"].get("POSITION")
            idx_acc = prim.get("indices")
            if idx_acc is not None and idx_acc >= n_acc:
                problems.append(f"mesh {m} primitive {p} indices accessor missing")
                refs_ok = False
            if not refs_ok or pos_acc is None or idx_acc is None:
                continue
            if not (_accessor_in_bounds(gltf, buffers, pos_acc)
                    and _accessor_in_bounds(gltf, buffers, idx_acc)):
                problems.append(f"mesh {m} primitive {p} data exceeds buffer bytes")
                continue
            positions = _read_accessor(gltf, buffers, pos_acc)
            indices = _read_accessor(gltf, buffers, idx_acc)
            if indices.size and int(indices.max()) >= len(positions):
                problems.append(f"mesh {m} primitive {p} index out of range")
            if indices.size % 3 != 0:
                problems.append(f"mesh {m} primitive {p} index count not triangular")
            stated_min = gltf["accessors"][pos_acc].get("min")
            stated_max = gltf["accessors"][pos_acc].get("max")
            if stated_min is None or stated_max is None:
                problems.append("POSITION accessor lacks min/max")
            else:
                actual_min = positions.min(axis=0)
                actual_max = positions.max(axis=0)
                if (not np.allclose(stated_min, actual_min, atol=1e-7)
                        or not np.allclose(stated_max, actual_max, atol=1e-7)):
                    problems.append("POSITION min/max do not match buffer data")

    for i, img in enumerate(gltf.get("images", [])):
        if not (gltf_path.parent / img["uri"]).exists():
            problems.append(f"image {i} file missing: {img['uri']}")
    for i, tex in enumerate(gltf.get("textures", [])):
        if tex["source"] >= len(gltf.get("images", [])):
            problems.append(f"texture {i} references missing image")
    for i, mat in enumerate(gltf.get("materials", [])):
        refs = []
        pbr = mat.get("pbrMetallicRoughness", {})
        for slot in ("baseColorTexture", "metallicRoughnessTexture"):
            if slot in pbr:
                refs.append(pbr[slot]["index"])
        if "normalTexture" in mat:
            refs.append(mat["normalTexture"]["index"])
        for r in refs:
            if r >= len(gltf.get("textures", [])):
                problems.append(f"material {i} references missing texture")
    return problems


def load_gltf_positions(gltf_path: str | Path) -> np.ndarray:
    """Positions back out of an exported bundle (roundtrip checks)."""
    gltf_path = Path(gltf_path)
    gltf = json.loads(gltf_path.read_text(encoding="utf-8"))
    buffers = [(gltf_path.parent / b["uri"]).read_bytes()
               for b in gltf["buffers"]]
    prim = gltf["meshes"][0]["primitives"][0]
    return _read_accessor(gltf, buffers, prim["attributes"]["POSITION"]).astype(np.float64)
