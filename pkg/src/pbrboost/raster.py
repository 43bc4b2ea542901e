"""CPU triangle rasterizer producing per-view GBuffers.

Determinism contract: the visible winner at each pixel is the lexicographic
minimum of (depth, face index), so the output is independent of triangle
iteration order. Pixel coverage follows the top-left fill rule: shared edges
light each pixel exactly once, with no cracks and no double coverage.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import (
    EMPTY,
    Camera,
    GBuffer,
    TextureMap,
    TriMesh,
    camera_matrices,
    integrate_normal,
    tangent_frames,
    tangent_vectors,
)


def render_gbuffer(mesh: TriMesh, cam: Camera, albedo_uv: TextureMap | None = None,
                   cull_backfaces: bool = True) -> GBuffer:
    """Z-buffered rasterization of the mesh into per-pixel attributes.

    Interpolation is perspective-correct (reduces to affine for orthographic
    cameras). Back-facing and zero-area triangles are skipped. ``albedo_uv``
    is sampled bilinearly at the interpolated UV; None renders white.
    """
    if albedo_uv is not None and albedo_uv.channels != 3:
        raise ValueError("albedo texture must have 3 channels")
    w, h = cam.width, cam.height
    xf = camera_matrices(cam)
    proj = xf.project(mesh.positions)  # (P, 4): x_pix, y_pix, depth, inv_w

    tri_pos = mesh.triangles[:, :, 0]
    pix = proj[tri_pos][:, :, :2]  # (F, 3, 2)
    depth_c = proj[tri_pos][:, :, 2]
    inv_w_c = proj[tri_pos][:, :, 3]

    depth_buf = np.full((h, w), np.inf)
    face_buf = np.full((h, w), EMPTY, dtype=np.int32)
    lam_buf = np.zeros((h, w, 3))

    perspective = cam.kind == "perspective"
    for f in range(mesh.num_faces):
        if perspective and depth_c[f].min() <= 1e-9:
            continue  # behind the eye; framed cameras never hit this
        p0, p1, p2 = pix[f]
        area2 = _cross2(p1 - p0, p2 - p0)
        if area2 == 0.0:
            continue
        # front faces are clockwise in y-down pixel space (negative area here)
        swapped = False
        if area2 < 0.0:
            p1, p2 = p2, p1
            area2 = -area2
            swapped = True
        elif cull_backfaces:
            continue

        x0 = max(0, math.ceil(min(p0[0], p1[0], p2[0]) - 0.5))
        x1 = min(w - 1, math.floor(max(p0[0], p1[0], p2[0]) - 0.5))
        y0 = max(0, math.ceil(min(p0[1], p1[1], p2[1]) - 0.5))
        y1 = min(h - 1, math.floor(max(p0[1], p1[1], p2[1]) - 0.5))
        if x1 < x0 or y1 < y0:
            continue

        cx = np.arange(x0, x1 + 1) + 0.5
        cy = np.arange(y0, y1 + 1) + 0.5
        gx, gy = np.meshgrid(cx, cy)

        e0 = _edge(p1, p2, gx, gy)
        e1 = _edge(p2, p0, gx, gy)
        e2 = _edge(p0, p1, gx, gy)
        inside = (
            _covers(e0, p1, p2) & _covers(e1, p2, p0) & _covers(e2, p0, p1)
        )
        if not inside.any():
            continue

        lam = np.stack([e0, e1, e2], axis=-1) / area2
        if swapped:
            lam = lam[:, :, [0, 2, 1]]  # back to the mesh's corner order
        dpix = lam[:, :, 0] * depth_c[f, 0] + lam[:, :, 1] * depth_c[f, 1] \
            + lam[:, :, 2] * depth_c[f, 2]
        if perspective:
            # perspective-correct: weight by 1/w before normalizing
            pw = lam * inv_w_c[f]
            lam = pw / pw.sum(axis=-1, keepdims=True)
            dpix = lam[:, :, 0] * depth_c[f, 0] + lam[:, :, 1] * depth_c[f, 1] \
                + lam[:, :, 2] * depth_c[f, 2]

        tile_d = depth_buf[y0:y1 + 1, x0:x1 + 1]
        wins = inside & (dpix < tile_d)  # equal depth keeps the earlier face
        if not wins.any():
            continue
        tile_d[wins] = dpix[wins]
        face_buf[y0:y1 + 1, x0:x1 + 1][wins] = f
        lam_buf[y0:y1 + 1, x0:x1 + 1][wins] = lam[wins]

    return _resolve(mesh, cam, albedo_uv, face_buf, depth_buf, lam_buf)


def _cross2(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _edge(a, b, gx, gy):
    """Signed area of (a, b, pixel); positive inside for clockwise triangles."""
    return (b[0] - a[0]) * (gy - a[1]) - (b[1] - a[1]) * (gx - a[0])


def _covers(e, a, b):
    """Top-left rule: pixels exactly on an edge belong to top or left edges."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    inclusive = (dy == 0.0 and dx > 0.0) or dy < 0.0
    return (e > 0.0) | ((e == 0.0) & inclusive)


def _resolve(mesh: TriMesh, cam: Camera, albedo_uv: TextureMap | None,
             face_buf: np.ndarray, depth_buf: np.ndarray,
             lam_buf: np.ndarray) -> GBuffer:
    """Turn the winner buffers into interpolated per-pixel attributes."""
    h, w = face_buf.shape
    coverage = face_buf != EMPTY
    position = np.zeros((h, w, 3))
    normal = np.zeros((h, w, 3))
    normal[:, :] = [0.0, 0.0, 1.0]
    uv = np.zeros((h, w, 2))
    albedo = np.zeros((h, w, 3))

    if coverage.any():
        faces = face_buf[coverage]
        lam = lam_buf[coverage][:, :, None]  # (M, 3, 1)
        position[coverage] = (mesh.corner_positions()[faces] * lam).sum(axis=1)
        n = (mesh.corner_normals()[faces] * lam).sum(axis=1)
        lengths = np.linalg.norm(n, axis=1, keepdims=True)
        lengths[lengths < 1e-12] = 1.0
        normal[coverage] = n / lengths
        uv[coverage] = (mesh.corner_uvs()[faces] * lam).sum(axis=1)
        if albedo_uv is None:
            albedo[coverage] = 1.0
        else:
            albedo[coverage] = albedo_uv.sample(uv[coverage][:, 0], uv[coverage][:, 1])

    return GBuffer(camera=cam, albedo=albedo, position=position, normal=normal,
                   uv=uv, face_id=face_buf, depth=depth_buf, coverage=coverage)


def pixel_tangent_frames(mesh: TriMesh, gbuf: GBuffer) -> np.ndarray:
    """(M, 3, 3) tangent frames for the covered pixels, in raster order.

    The tangent is the face's direction of increasing u projected off the
    per-pixel interpolated normal, so frames vary smoothly across a face.
    """
    dpdu = tangent_vectors(mesh)
    faces = gbuf.face_id[gbuf.coverage]
    return tangent_frames(dpdu[faces], gbuf.normal[gbuf.coverage])


def render_normal_view(mesh: TriMesh, cam: Camera, field=None,
                       gbuf: GBuffer | None = None) -> np.ndarray:
    """Per-pixel world-space unit normals; uncovered pixels read (0, 0, 1).

    With a bump field, each covered pixel's normal is the field's tangent
    bump rotated into the pixel's tangent frame. Pass a precomputed ``gbuf``
    to skip re-rasterizing.
    """
    if gbuf is None:
        gbuf = render_gbuffer(mesh, cam)
    normals = gbuf.normal.copy()
    if field is not None and gbuf.coverage.any():
        points = gbuf.position[gbuf.coverage]
        frames = pixel_tangent_frames(mesh, gbuf)
        bumps = field.eval_tangent(points)
        normals[gbuf.coverage] = integrate_normal(bumps, frames)
    return normals
