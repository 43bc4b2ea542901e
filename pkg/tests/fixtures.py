"""Shared mesh, view, and oracle builders for the optimizer tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from pbrboost.geometry import (
    Camera,
    TriMesh,
    compute_vertex_normals,
    encode_normal_map,
    frame_camera,
)
from pbrboost.primitives import uv_sphere
from pbrboost.raster import pixel_tangent_frames, render_gbuffer
from pbrboost.segmentation import SemanticMask3D


def wavy_radius(dirs: np.ndarray) -> np.ndarray:
    """Smooth low-frequency radial displacement for the bumpy sphere pair."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    return 1.0 + 0.08 * np.sin(4.0 * x) * np.sin(4.0 * y) * np.cos(3.0 * z)


def bumpy_sphere_coarse() -> TriMesh:
    """512-triangle displaced sphere (the mesh under refinement)."""
    return uv_sphere(segments=16, rings=17, displace=wavy_radius)


def bumpy_sphere_reference() -> TriMesh:
    """20000-triangle displaced sphere standing in for ground truth."""
    return uv_sphere(segments=100, rings=101, displace=wavy_radius)


def two_segment_sphere() -> tuple[TriMesh, SemanticMask3D]:
    """Sphere split at the equator: segment 0 above y=0, segment 1 below."""
    mesh = uv_sphere(segments=16, rings=9)
    centroids = mesh.corner_positions().mean(axis=1)
    segments = (centroids[:, 1] < 0.0).astype(np.int32)
    return mesh, SemanticMask3D(segments, 2)


def orbit_views(mesh: TriMesh, count: int, width: int, height: int,
                azimuth_offset: float = 0.0,
                elevation_pattern: tuple[float, ...] = (0.0, 30.0)) -> list[Camera]:
    cams = []
    for i in range(count):
        az = azimuth_offset + 360.0 * i / count
        el = elevation_pattern[i % len(elevation_pattern)]
        cams.append(frame_camera(mesh, az, el, width, height, "orthographic"))
    return cams


def quad_front_views(mesh: TriMesh, width: int = 48, height: int = 48) -> list[Camera]:
    """Four oblique views that all see the +Z face of a flat quad."""
    cams = []
    for az, el in ((-30.0, 0.0), (-10.0, 15.0), (10.0, 0.0), (30.0, 15.0)):
        cams.append(frame_camera(mesh, az, el, width, height, "orthographic"))
    return cams


def write_constant_normal_oracle(directory: Path, views: list[Camera],
                                 normal: np.ndarray) -> None:
    """File-backed oracle whose every pixel holds one world-space normal."""
    directory.mkdir(parents=True, exist_ok=True)
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    for i, cam in enumerate(views):
        image = np.broadcast_to(normal, (cam.height, cam.width, 3)).copy()
        encode_normal_map(image).save_png(directory / f"view_{i}.png")
    payload = [cam.to_json() for cam in views]
    (directory / "cameras.json").write_text(json.dumps(payload), encoding="utf-8")


def micro_gradient_setup(seed: int = 3):
    """3-triangle mesh plus rendered points, frames, and tilted targets.

    Small enough that central finite differences over every parameter stay
    cheap; returned targets are unit normals a few degrees off the geometry.
    """
    positions = np.array([
        [-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0],
        [-1.0, 1.0, 0.0], [0.0, -1.0, 1.0],
    ])
    uvs = np.array([
        [0.05, 0.05], [0.45, 0.05], [0.45, 0.45],
        [0.05, 0.45], [0.7, 0.7],
    ])
    tris = np.array([[0, 1, 2], [0, 2, 3], [1, 4, 2]], dtype=np.int32)
    triangles = np.stack([tris, tris, tris], axis=2)
    normals = compute_vertex_normals(positions, tris)
    mesh = TriMesh(positions=positions, uvs=uvs, normals=normals,
                   triangles=triangles)
    cam = frame_camera(mesh, 15.0, 20.0, 24, 24, "orthographic")
    gbuf = render_gbuffer(mesh, cam)
    points = gbuf.position[gbuf.coverage]
    frames = pixel_tangent_frames(mesh, gbuf)
    rng = np.random.default_rng(seed)
    tilt = gbuf.normal[gbuf.coverage] + 0.2 * rng.standard_normal(points.shape)
    targets = tilt / np.linalg.norm(tilt, axis=1, keepdims=True)
    return mesh, points, frames, targets


def normal_loss_and_grads(field, plan, frames, targets):
    """MSE between field-perturbed normals and targets, plus its gradients.

    Mirrors the optimization chain: raw offset, flat-bias add, tangent frame
    rotation, normalization, mean squared pixel error.
    """
    from pbrboost.bump import FLAT_BUMP

    n_px = plan.count
    raw, cache = field.raw_with_cache(plan)
    world = np.einsum("nij,nj->ni", frames, raw + FLAT_BUMP)
    lengths = np.linalg.norm(world, axis=1, keepdims=True)
    n_f = world / lengths
    diff = n_f - targets
    loss = float(np.sum(diff * diff) / n_px)
    g = (2.0 / n_px) * diff
    d_world = (g - n_f * np.sum(n_f * g, axis=1, keepdims=True)) / lengths
    d_raw = np.einsum("nij,ni->nj", frames, d_world)
    grads = field.backward(plan, cache, d_raw)
    return loss, grads


def flat_gradient(field, grads) -> np.ndarray:
    """Gradient dict flattened in the same order as get_flat_params."""
    return np.concatenate([grads[name].ravel() for name, _ in field.param_items()])
