"""Procedural test meshes: quad, cube, UV sphere (optionally displaced).

These exist for tests and demos; pipeline inputs normally arrive as OBJ files.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .geometry import TriMesh, compute_vertex_normals


def quad(size: float = 1.0) -> TriMesh:
    """Two-triangle square in the z=0 plane facing +Z, UVs spanning [0,1]²."""
    s = size / 2.0
    positions = np.array([
        [-s, -s, 0.0],
        [s, -s, 0.0],
        [s, s, 0.0],
        [-s, s, 0.0],
    ])
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    idx = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    triangles = np.stack([idx, idx, idx], axis=2)
    return TriMesh(positions, uvs, normals, triangles)


def cube(size: float = 1.0) -> TriMesh:
    """Axis-aligned cube, 12 triangles, flat normals, one UV island per face.

    Islands live in a 3x2 atlas grid with a small inset so bilinear taps
    never bleed across faces.
    """
    s = size / 2.0
    positions = np.array([
        [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
        [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
    ])
    # (corner indices CCW from outside, outward normal)
    faces = [
        ((4, 5, 6, 7), (0, 0, 1)),    # +Z
        ((1, 0, 3, 2), (0, 0, -1)),   # -Z
        ((5, 1, 2, 6), (1, 0, 0)),    # +X
        ((0, 4, 7, 3), (-1, 0, 0)),   # -X
        ((7, 6, 2, 3), (0, 1, 0)),    # +Y
        ((0, 1, 5, 4), (0, -1, 0)),   # -Y
    ]
    uvs = []
    normals = []
    tris = []
    inset = 0.02
    for f, (corners, n) in enumerate(faces):
        col, row = f % 3, f // 3
        u0, v0 = col / 3.0 + inset, row / 2.0 + inset
        u1, v1 = (col + 1) / 3.0 - inset, (row + 1) / 2.0 - inset
        base = len(uvs)
        uvs.extend([[u0, v0], [u1, v0], [u1, v1], [u0, v1]])
        normals.append(n)
        for a, b in ((1, 2), (2, 3)):
            tris.append([
                (corners[0], base, f),
                (corners[a], base + a, f),
                (corners[b], base + b, f),
            ])
    return TriMesh(positions, np.array(uvs, dtype=np.float64),
                   np.array(normals, dtype=np.float64),
                   np.array(tris, dtype=np.int32))


def uv_sphere(segments: int = 32, rings: int = 21, radius: float = 1.0,
              displace: Callable[[np.ndarray], np.ndarray] | None = None) -> TriMesh:
    """Latitude-longitude sphere with 2 * segments * (rings - 1) triangles.

    ``displace`` maps unit directions (N, 3) to radii (N,), producing a
    star-shaped surface; normals are then recomputed area-weighted. Without
    displacement the exact analytic normals (the directions) are used.
    """
    if segments < 3 or rings < 2:
        raise ValueError("need at least 3 segments and 2 rings")
    i = np.arange(rings + 1)
    j = np.arange(segments + 1)
    theta = np.pi * i / rings  # 0 at +Y pole
    phi = 2.0 * np.pi * (j % segments) / segments  # seam column duplicates phi=0
    sin_t, cos_t = np.sin(theta)[:, None], np.cos(theta)[:, None]
    sin_p, cos_p = np.sin(phi)[None, :], np.cos(phi)[None, :]
    # azimuth 0 on +Z to match the camera convention
    dirs = np.stack([
        (sin_t * sin_p).ravel(),
        np.broadcast_to(cos_t, (rings + 1, segments + 1)).ravel(),
        (sin_t * cos_p).ravel(),
    ], axis=1)
    lengths = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / np.maximum(lengths, 1e-300)
    # poles: all columns collapse to the same point; fix direction exactly
    dirs[:segments + 1] = [0.0, 1.0, 0.0]
    dirs[-(segments + 1):] = [0.0, -1.0, 0.0]

    radii = displace(dirs) if displace is not None else np.full(len(dirs), radius)
    positions = dirs * radii[:, None]

    u = (j / segments)[None, :]
    v = (1.0 - i / rings)[:, None]
    uvs = np.stack([
        np.broadcast_to(u, (rings + 1, segments + 1)).ravel(),
        np.broadcast_to(v, (rings + 1, segments + 1)).ravel(),
    ], axis=1)

    def gi(ri: int | np.ndarray, ci: int | np.ndarray) -> np.ndarray:
        return ri * (segments + 1) + ci

    tris = []
    for r in range(rings):
        for c in range(segments):
            a, b = gi(r, c), gi(r, c + 1)
            d, e = gi(r + 1, c), gi(r + 1, c + 1)
            if r > 0:
                tris.append([a, d, b])
            if r < rings - 1:
                tris.append([b, d, e])
    idx = np.array(tris, dtype=np.int32)
    triangles = np.stack([idx, idx, idx], axis=2)

    if displace is None:
        normals = dirs
    else:
        normals = compute_vertex_normals(positions, idx)
        # seam/pole duplicates accumulate separately; average by direction key
        normals = _merge_duplicate_normals(positions, normals)
    return TriMesh(positions, uvs, normals, triangles)


def _merge_duplicate_normals(positions: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Average normals across vertices that share a position (seam, poles)."""
    keys = np.round(positions * 1e9).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    summed = np.zeros((inverse.max() + 1, 3))
    np.add.at(summed, inverse, normals)
    merged = summed[inverse]
    lengths = np.linalg.norm(merged, axis=1, keepdims=True)
    lengths[lengths < 1e-20] = 1.0
    return merged / lengths
