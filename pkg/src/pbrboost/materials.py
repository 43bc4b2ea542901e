"""Per-segment material values and their baking into roughness/metalness UVs.

A SegmentTable is immutable; every edit returns a new table. That is what
lets the preview service hand snapshots to in-flight renders while accepting
edits concurrently.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import RangeError, SchemaError, UnknownSegment, UVOverlapWarning
from .geometry import EMPTY, TextureMap, TriMesh
from .segmentation import SemanticMask3D

DEFAULT_ROUGHNESS = 0.8
DEFAULT_METALNESS = 0.0


@dataclass(frozen=True)
class SegmentEntry:
    segment_id: int
    name: str
    roughness: float
    metalness: float


@dataclass(frozen=True)
class SegmentTable:
    """Material values for every segment of a mask, plus the fallback default."""

    entries: tuple  # of SegmentEntry, sorted by segment_id
    default_roughness: float = DEFAULT_ROUGHNESS
    default_metalness: float = DEFAULT_METALNESS

    def __post_init__(self):
        ids = [e.segment_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise SchemaError("segments", "duplicate segment id")
        object.__setattr__(self, "entries",
                           tuple(sorted(self.entries, key=lambda e: e.segment_id)))

    @staticmethod
    def from_mask(mask: SemanticMask3D,
                  default: tuple = (DEFAULT_ROUGHNESS, DEFAULT_METALNESS)) -> "SegmentTable":
        entries = tuple(SegmentEntry(i, f"segment_{i}", default[0], default[1])
                        for i in range(mask.segment_count))
        return SegmentTable(entries, default[0], default[1])

    def get(self, segment_id: int) -> SegmentEntry:
        for e in self.entries:
            if e.segment_id == segment_id:
                return e
        raise UnknownSegment(segment_id)

    def values(self) -> np.ndarray:
        """(S, 2) roughness/metalness array indexed by segment id."""
        count = max(e.segment_id for e in self.entries) + 1 if self.entries else 0
        out = np.tile([self.default_roughness, self.default_metalness], (count, 1))
        for e in self.entries:
            out[e.segment_id] = (e.roughness, e.metalness)
        return out

    def to_json(self) -> dict:
        return {
            "default": {"roughness": self.default_roughness,
                        "metalness": self.default_metalness},
            "segments": [{"id": e.segment_id, "name": e.name,
                          "roughness": e.roughness, "metalness": e.metalness}
                         for e in self.entries],
        }


def set_segment_values(table: SegmentTable, segment_id: int,
                       roughness: float, metalness: float) -> SegmentTable:
    """Pure update: returns a table with one entry changed."""
    if not (0.0 <= roughness <= 1.0):
        raise RangeError(f"roughness {roughness} outside [0, 1]")
    if not (0.0 <= metalness <= 1.0):
        raise RangeError(f"metalness {metalness} outside [0, 1]")
    table.get(segment_id)  # raises UnknownSegment
    entries = tuple(SegmentEntry(e.segment_id, e.name, roughness, metalness)
                    if e.segment_id == segment_id else e
                    for e in table.entries)
    return SegmentTable(entries, table.default_roughness, table.default_metalness)


def _check_unit(path: str, value) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(path, "expected a number")
    if not (0.0 <= value <= 1.0):
        raise SchemaError(path, f"value {value} outside [0, 1]")
    return float(value)


def load_recommendations(path: str | Path, mask: SemanticMask3D) -> SegmentTable:
    """Read a recommendation JSON and fill unmentioned segments with defaults.

    Schema: {"default": {"roughness": r, "metalness": m},
             "segments": [{"id": i, "name": n, "roughness": r, "metalness": m}]}
    """
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("$", "root must be an object")

    default_r, default_m = DEFAULT_ROUGHNESS, DEFAULT_METALNESS
    if "default" in obj:
        d = obj["default"]
        if not isinstance(d, dict):
            raise SchemaError("default", "must be an object")
        if "roughness" in d:
            default_r = _check_unit("default.roughness", d["roughness"])
        if "metalness" in d:
            default_m = _check_unit("default.metalness", d["metalness"])

    named: dict[int, SegmentEntry] = {}
    seg_list = obj.get("segments", [])
    if not isinstance(seg_list, list):
        raise SchemaError("segments", "must be a list")
    for i, rec in enumerate(seg_list):
        where = f"segments[{i}]"
        if not isinstance(rec, dict):
            raise SchemaError(where, "must be an object")
        if "id" not in rec:
            raise SchemaError(f"{where}.id", "missing")
        seg_id = rec["id"]
        if not isinstance(seg_id, int) or isinstance(seg_id, bool):
            raise SchemaError(f"{where}.id", "must be an integer")
        if seg_id < 0 or seg_id >= mask.segment_count:
            raise UnknownSegment(seg_id)
        if seg_id in named:
            raise SchemaError(f"{where}.id", f"segment {seg_id} listed twice")
        name = rec.get("name", f"segment_{seg_id}")
        if not isinstance(name, str):
            raise SchemaError(f"{where}.name", "must be a string")
        rough = _check_unit(f"{where}.roughness", rec.get("roughness", default_r))
        metal = _check_unit(f"{where}.metalness", rec.get("metalness", default_m))
        named[seg_id] = SegmentEntry(seg_id, name, rough, metal)

    entries = tuple(named.get(i, SegmentEntry(i, f"segment_{i}", default_r, default_m))
                    for i in range(mask.segment_count))
    return SegmentTable(entries, default_r, default_m)


# ---------------------------------------------------------------------------
# UV-space rasterization (shared by material and normal baking)
# ---------------------------------------------------------------------------


@dataclass
class UVRaster:
    """Texel ownership of the UV layout.

    ``face_id``/``bary`` describe the winning (lowest-index) triangle per
    texel; ``extra_claims`` lists (texel_flat_index, face) pairs for every
    additional triangle that also covered an owned texel.
    """

    resolution: int
    face_id: np.ndarray  # (R, R) int32, EMPTY where no triangle
    bary: np.ndarray  # (R, R, 3)
    extra_claims: list

    @property
    def covered(self) -> np.ndarray:
        return self.face_id != EMPTY


def rasterize_uv(mesh: TriMesh, resolution: int) -> UVRaster:
    """Rasterize triangles into UV space by their texture coordinates.

    Texel (ix, iy) center corresponds to uv ((ix+.5)/R, 1-(iy+.5)/R). Both UV
    winding orientations are filled (mirrored islands are legal); the lowest
    face index wins contested texels.
    """
    r = resolution
    uv = mesh.corner_uvs()
    px = np.empty_like(uv)
    px[:, :, 0] = uv[:, :, 0] * r
    px[:, :, 1] = (1.0 - uv[:, :, 1]) * r

    face_buf = np.full((r, r), EMPTY, dtype=np.int32)
    bary_buf = np.zeros((r, r, 3))
    extra: list = []

    for f in range(mesh.num_faces):
        p0, p1, p2 = px[f]
        area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
        if area2 == 0.0:
            continue
        swapped = False
        if area2 < 0.0:
            p1, p2 = p2, p1
            area2 = -area2
            swapped = True
        x0 = max(0, int(np.ceil(min(p0[0], p1[0], p2[0]) - 0.5)))
        x1 = min(r - 1, int(np.floor(max(p0[0], p1[0], p2[0]) - 0.5)))
        y0 = max(0, int(np.ceil(min(p0[1], p1[1], p2[1]) - 0.5)))
        y1 = min(r - 1, int(np.floor(max(p0[1], p1[1], p2[1]) - 0.5)))
        if x1 < x0 or y1 < y0:
            continue
        gx, gy = np.meshgrid(np.arange(x0, x1 + 1) + 0.5,
                             np.arange(y0, y1 + 1) + 0.5)
        e0 = _edge(p1, p2, gx, gy)
        e1 = _edge(p2, p0, gx, gy)
        e2 = _edge(p0, p1, gx, gy)
        inside = _covers(e0, p1, p2) & _covers(e1, p2, p0) & _covers(e2, p0, p1)
        if not inside.any():
            continue
        lam = np.stack([e0, e1, e2], axis=-1) / area2
        if swapped:
            lam = lam[:, :, [0, 2, 1]]
        tile_face = face_buf[y0:y1 + 1, x0:x1 + 1]
        free = inside & (tile_face == EMPTY)
        tile_face[free] = f
        bary_buf[y0:y1 + 1, x0:x1 + 1][free] = lam[free]
        contested = inside & ~free
        if contested.any():
            ys, xs = np.nonzero(contested)
            flat = (ys + y0) * r + (xs + x0)
            extra.extend((int(t), f) for t in flat)

    return UVRaster(r, face_buf, bary_buf, extra)


def _edge(a, b, gx, gy):
    return (b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0])


def _covers(e, a, b):
    dx, dy = b[0] - a[0], b[1] - a[1]
    inclusive = (dy == 0.0 and dx > 0.0) or dy < 0.0
    return (e > 0.0) | ((e == 0.0) & inclusive)


def dilate_nearest(data: np.ndarray, covered: np.ndarray) -> np.ndarray:
    """Fill uncovered texels with their nearest covered texel's value."""
    if covered.all():
        return data
    if not covered.any():
        return data
    _, (iy, ix) = ndimage.distance_transform_edt(~covered, return_indices=True)
    return data[iy, ix]


def bake_material_uvs(mesh: TriMesh, mask: SemanticMask3D, table: SegmentTable,
                      resolution: int = 1024,
                      uv_raster: UVRaster | None = None) -> tuple[TextureMap, TextureMap]:
    """Bake per-segment roughness and metalness into single-channel UV maps.

    Warns UVOverlapWarning when overlapping UV islands disagree on material
    values (the lower face index wins). Pass a precomputed ``uv_raster`` to
    share rasterization with other bakes at the same resolution.
    """
    if resolution < 64:
        raise ValueError("bake resolution must be at least 64")
    if len(mask.face_segments) != mesh.num_faces:
        raise ValueError("mask does not match mesh face count")
    raster = uv_raster if uv_raster is not None else rasterize_uv(mesh, resolution)
    values = table.values()  # (S, 2)

    covered = raster.covered
    seg_map = np.zeros((resolution, resolution), dtype=np.int64)
    seg_map[covered] = mask.face_segments[raster.face_id[covered]]
    texel_vals = np.zeros((resolution, resolution, 2))
    texel_vals[covered] = values[seg_map[covered]]

    conflicts = 0
    for flat, face in raster.extra_claims:
        owner_face = raster.face_id.ravel()[flat]
        a = values[mask.face_segments[owner_face]]
        b = values[mask.face_segments[face]]
        if not np.array_equal(a, b):
            conflicts += 1
    if conflicts:
        warnings.warn(
            f"{conflicts} texels claimed by triangles with different material "
            f"values; lowest face index kept", UVOverlapWarning)

    texel_vals = dilate_nearest(texel_vals, covered)
    rough = TextureMap.from_array(texel_vals[:, :, 0:1])
    metal = TextureMap.from_array(texel_vals[:, :, 1:2])
    return rough, metal
