"""Local HTTP service for the interactive adjust-and-relight loop.

Material edits swap in a new immutable SegmentTable under a lock and bump a
revision counter; renders snapshot (revision, table) up front, so every PNG
response reflects exactly the revision named in its X-Revision header even
while edits race in.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .cli import relight_frame
from .errors import RangeError, UnknownSegment
from .geometry import TextureMap, TriMesh, encode_normal_map, frame_camera
from .gltf_export import export_gltf
from .materials import (
    SegmentTable,
    bake_material_uvs,
    rasterize_uv,
    set_segment_values,
)
from .raster import render_gbuffer
from .refine import render_with_normal_map
from .segmentation import SemanticMask3D
from .shading import LightRig, default_rig

# fixed 16-color palette for segment previews, keyed by id mod 16
PALETTE = np.array([
    [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
    [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230],
    [210, 245, 60], [250, 190, 212], [0, 128, 128], [220, 190, 255],
    [170, 110, 40], [255, 250, 200], [128, 0, 0], [170, 255, 195],
], dtype=np.float64) / 255.0

RENDER_MODES = ("relight", "albedo", "normal", "segments")


def _ambient_rig() -> LightRig:
    return LightRig((), np.array([1.0, 1.0, 1.0]))


def _front_rig() -> LightRig:
    return LightRig(((np.array([0.0, 0.0, 1.0]), np.array([2.5, 2.5, 2.5])),),
                    np.array([0.02, 0.02, 0.02]))


RIG_PRESETS = {
    "default": default_rig,
    "ambient": _ambient_rig,
    "front": _front_rig,
}


@dataclass
class Session:
    """One loaded asset plus its mutable material table."""

    mesh: TriMesh
    mask: SemanticMask3D
    table: SegmentTable | None = None
    albedo: TextureMap | None = None
    normal_uv: TextureMap | None = None
    resolution: int = 512
    material_res: int = 1024
    export_dir: str | Path = "gltf"
    revision: int = 0

    def __post_init__(self):
        if len(self.mask.face_segments) != len(self.mesh.triangles):
            raise ValueError("mask face count does not match the mesh")
        if self.table is None:
            self.table = SegmentTable.from_mask(self.mask)
        self._lock = threading.Lock()
        self._uv_raster = rasterize_uv(self.mesh, self.material_res)
        self._bake_cache: tuple[int, TextureMap, TextureMap] | None = None

    def snapshot(self) -> tuple[int, SegmentTable]:
        with self._lock:
            return self.revision, self.table

    def update_segment(self, segment_id: int, roughness: float,
                       metalness: float) -> int:
        with self._lock:
            self.table = set_segment_values(self.table, segment_id,
                                            roughness, metalness)
            self.revision += 1
            return self.revision

    def material_maps(self, revision: int,
                      table: SegmentTable) -> tuple[TextureMap, TextureMap]:
        """Baked maps for one table snapshot, quantized like PNGs on disk.

        Quantization keeps service renders byte-identical to the offline
        pipeline, which reads the maps back from 8-bit files.
        """
        with self._lock:
            cached = self._bake_cache
        if cached is not None and cached[0] == revision:
            return cached[1], cached[2]
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rough, metal = bake_material_uvs(self.mesh, self.mask, table,
                                             self.material_res,
                                             uv_raster=self._uv_raster)
        rough, metal = rough.quantized(), metal.quantized()
        with self._lock:
            self._bake_cache = (revision, rough, metal)
        return rough, metal


class SegmentUpdate(BaseModel):
    roughness: float
    metalness: float


def _frontend_dist() -> Path | None:
    override = os.environ.get("PBRBOOST_FRONTEND_DIR")
    if override:
        p = Path(override)
        return p if p.is_dir() else None
    repo = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return repo if repo.is_dir() else None


def create_app(session: Session | None = None) -> FastAPI:
    app = FastAPI(title="pbrboost preview service")
    state = {"session": session}

    def need_session() -> Session:
        s = state["session"]
        if s is None:
            raise HTTPException(status_code=409, detail="no session loaded")
        return s

    @app.get("/api/segments")
    def get_segments() -> Response:
        s = need_session()
        rev, table = s.snapshot()
        counts = s.mask.face_counts()
        body = [{
            "id": e.segment_id,
            "name": e.name,
            "roughness": e.roughness,
            "metalness": e.metalness,
            "face_count": int(counts[e.segment_id]),
        } for e in table.entries]
        return JSONResponse(body, headers={"X-Revision": str(rev)})

    @app.put("/api/segments/{segment_id}")
    def put_segment(segment_id: int, update: SegmentUpdate) -> dict:
        s = need_session()
        try:
            revision = s.update_segment(segment_id, update.roughness,
                                        update.metalness)
        except UnknownSegment as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except RangeError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"revision": revision}

    @app.get("/api/render")
    def get_render(azimuth: float = 30.0, elevation: float = 20.0,
                   mode: str = "relight", rig: str = "default") -> Response:
        s = need_session()
        if mode not in RENDER_MODES:
            raise HTTPException(status_code=422, detail=f"unknown mode {mode!r}")
        if rig not in RIG_PRESETS:
            raise HTTPException(status_code=422, detail=f"unknown rig {rig!r}")
        if not (-90.0 <= elevation <= 90.0):
            raise HTTPException(status_code=422,
                                detail="elevation must lie in [-90, 90]")
        rev, table = s.snapshot()
        cam = frame_camera(s.mesh, azimuth, elevation, s.resolution,
                           s.resolution, "orthographic")
        gbuf = render_gbuffer(s.mesh, cam, albedo_uv=s.albedo)

        if mode == "relight":
            rough, metal = s.material_maps(rev, table)
            image = relight_frame(s.mesh, cam, s.albedo, rough, metal,
                                  s.normal_uv, RIG_PRESETS[rig](), gbuf=gbuf)
        elif mode == "albedo":
            image = np.zeros_like(gbuf.albedo)
            image[gbuf.coverage] = gbuf.albedo[gbuf.coverage]
        elif mode == "normal":
            normals = (render_with_normal_map(s.mesh, cam, s.normal_uv, gbuf=gbuf)
                       if s.normal_uv is not None else gbuf.normal)
            image = encode_normal_map(normals, mask=gbuf.coverage).data
        else:
            image = np.zeros((s.resolution, s.resolution, 3))
            seg = s.mask.face_segments[gbuf.face_id[gbuf.coverage]]
            image[gbuf.coverage] = PALETTE[seg % len(PALETTE)]

        png = TextureMap.from_array(image).to_png_bytes()
        return Response(content=png, media_type="image/png",
                        headers={"X-Revision": str(rev)})

    @app.post("/api/export")
    def post_export() -> dict:
        s = need_session()
        rev, table = s.snapshot()
        rough, metal = s.material_maps(rev, table)
        try:
            paths = export_gltf(s.mesh, s.export_dir, albedo=s.albedo,
                                roughness=rough, metalness=metal,
                                normal_uv=s.normal_uv, table=table)
        except OSError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        return {"revision": rev, "paths": paths}

    dist = _frontend_dist()
    if dist is not None:
        app.mount("/", StaticFiles(directory=str(dist), html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index() -> str:
            return ("<html><body><h1>pbrboost preview service</h1>"
                    "<p>UI bundle not built; the JSON API is live under "
                    "/api.</p></body></html>")

    return app
