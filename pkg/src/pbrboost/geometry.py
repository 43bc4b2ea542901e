"""Core mesh, camera, texture, and raster-buffer types.

Conventions used throughout the toolkit:

- World space is right-handed, cameras orbit the world origin.
- Pixel space has x growing right and y growing down; pixel centers sit at
  integer + 0.5.
- Texture v=0 maps to the bottom image row (Wavefront convention); PNG row 0
  is the top row.
- All raster/texture math is float64 in [0, 1]; 8-bit quantization happens
  only at PNG boundaries, with round-half-up.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingUVs, ParseError

EMPTY = -1  # face_id of uncovered pixels

# Perspective cameras carry no field-of-view in their public fields; a fixed
# vertical FOV keeps the transform a pure function of the Camera value.
PERSPECTIVE_FOV_DEG = 45.0


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------


@dataclass
class TriMesh:
    """Indexed triangle mesh with per-corner position/uv/normal indices.

    ``triangles`` has shape (F, 3, 3): for face f and corner c,
    ``triangles[f, c]`` is ``(position_index, uv_index, normal_index)``.
    """

    positions: np.ndarray  # (P, 3) float64
    uvs: np.ndarray  # (T, 2) float64, in [0, 1]
    normals: np.ndarray  # (N, 3) float64, unit
    triangles: np.ndarray  # (F, 3, 3) int32
    face_segments: np.ndarray | None = None  # (F,) int32

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3, 3)
        if self.face_segments is not None:
            self.face_segments = np.asarray(self.face_segments, dtype=np.int32)

    @property
    def num_faces(self) -> int:
        return self.triangles.shape[0]

    def validate(self) -> None:
        """Check index ranges, unit normals, and UV bounds."""
        tri = self.triangles
        if tri.size and tri.min() < 0:
            raise ParseError("negative index in triangle table")
        if tri[:, :, 0].size and tri[:, :, 0].max() >= len(self.positions):
            raise ParseError("position index out of range")
        if tri[:, :, 1].size and tri[:, :, 1].max() >= len(self.uvs):
            raise ParseError("uv index out of range")
        if tri[:, :, 2].size and tri[:, :, 2].max() >= len(self.normals):
            raise ParseError("normal index out of range")
        lengths = np.linalg.norm(self.normals, axis=1)
        if lengths.size and np.any(np.abs(lengths - 1.0) > 1e-4):
            raise ParseError("non-unit normal in mesh")
        if self.uvs.size and (self.uvs.min() < 0.0 or self.uvs.max() > 1.0):
            raise ParseError("uv outside [0,1] after wrapping")
        if self.face_segments is not None and len(self.face_segments) != self.num_faces:
            raise ParseError("face_segments length mismatch")

    def corner_positions(self) -> np.ndarray:
        """(F, 3, 3) world positions of each triangle corner."""
        return self.positions[self.triangles[:, :, 0]]

    def corner_uvs(self) -> np.ndarray:
        return self.uvs[self.triangles[:, :, 1]]

    def corner_normals(self) -> np.ndarray:
        return self.normals[self.triangles[:, :, 2]]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (min, max) corners of the position cloud."""
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def bounding_radius(self) -> float:
        """Largest vertex distance from the world origin (orbit target)."""
        return float(np.linalg.norm(self.positions, axis=1).max())


def compute_vertex_normals(positions: np.ndarray, pos_indices: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals from face geometry.

    The cross product of two triangle edges already scales with face area, so
    accumulating raw cross products and normalizing at the end gives the
    area weighting for free.
    """
    normals = np.zeros_like(positions)
    p0 = positions[pos_indices[:, 0]]
    p1 = positions[pos_indices[:, 1]]
    p2 = positions[pos_indices[:, 2]]
    face_n = np.cross(p1 - p0, p2 - p0)
    for c in range(3):
        np.add.at(normals, pos_indices[:, c], face_n)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    lengths[lengths < 1e-20] = 1.0
    return normals / lengths


def _wrap_uv(uvs: np.ndarray) -> np.ndarray:
    """Wrap UVs into [0,1] by fractional part; values already in range stay put.

    Keeping exact 1.0 intact matters: seam vertices at u=1 must not jump to 0.
    """
    out = uvs.copy()
    outside = (out < 0.0) | (out > 1.0)
    out[outside] = out[outside] - np.floor(out[outside])
    return out


def load_mesh(path: str | Path) -> TriMesh:
    """Load a Wavefront OBJ file (v/vt/vn/f records).

    Faces with more than three corners are fan-triangulated. Missing normals
    are recomputed as area-weighted vertex normals. Raises ParseError on
    malformed records and MissingUVs when the material pipeline cannot run.
    """
    path = Path(path)
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    normals: list[list[float]] = []
    corners: list[tuple[int, int, int]] = []  # (pos, uv, normal), -1 = absent
    face_sizes: list[int] = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    positions.append([float(x) for x in parts[1:4]])
                elif tag == "vt":
                    uvs.append([float(x) for x in parts[1:3]])
                elif tag == "vn":
                    normals.append([float(x) for x in parts[1:4]])
                elif tag == "f":
                    if len(parts) < 4:
                        raise ParseError("face with fewer than 3 corners", lineno)
                    face = [_parse_corner(tok, len(positions), len(uvs), len(normals), lineno)
                            for tok in parts[1:]]
                    corners.extend(face)
                    face_sizes.append(len(face))
                # other records (o, g, s, mtllib, usemtl, ...) are ignored
            except ParseError:
                raise
            except (ValueError, IndexError) as exc:
                raise ParseError(f"malformed {tag} record: {exc}", lineno) from None

    if not positions:
        raise ParseError("no vertex positions in file")
    if not face_sizes:
        raise ParseError("no faces in file")

    corner_arr = np.asarray(corners, dtype=np.int64)
    if np.any(corner_arr[:, 1] < 0):
        raise MissingUVs(f"{path.name}: mesh has no texture coordinates")

    # fan-triangulate
    tri_corners: list[np.ndarray] = []
    offset = 0
    for size in face_sizes:
        face = corner_arr[offset:offset + size]
        for k in range(1, size - 1):
            tri_corners.append(np.stack([face[0], face[k], face[k + 1]]))
        offset += size
    triangles = np.stack(tri_corners).astype(np.int64)

    pos_arr = np.asarray(positions, dtype=np.float64)
    uv_arr = _wrap_uv(np.asarray(uvs, dtype=np.float64))

    if normals and np.all(triangles[:, :, 2] >= 0):
        normal_arr = np.asarray(normals, dtype=np.float64)
        lengths = np.linalg.norm(normal_arr, axis=1, keepdims=True)
        lengths[lengths < 1e-20] = 1.0
        normal_arr = normal_arr / lengths
    else:
        normal_arr = compute_vertex_normals(pos_arr, triangles[:, :, 0])
        triangles[:, :, 2] = triangles[:, :, 0]

    mesh = TriMesh(pos_arr, uv_arr, normal_arr, triangles.astype(np.int32))
    mesh.validate()
    return mesh


def _parse_corner(token: str, np_: int, nt: int, nn: int,
                  lineno: int) -> tuple[int, int, int]:
    """Resolve one f-record corner ``v[/vt[/vn]]`` to 0-based indices."""
    fields = token.split("/")
    if len(fields) > 3:
        raise ParseError(f"face corner has too many fields: {token!r}", lineno)

    def resolve(text: str, count: int, what: str) -> int:
        if text == "":
            return -1
        idx = int(text)
        if idx == 0:
            raise ParseError(f"{what} index 0 (OBJ indices are 1-based)", lineno)
        resolved = idx - 1 if idx > 0 else count + idx
        if resolved < 0 or resolved >= count:
            raise ParseError(f"{what} index {idx} out of range", lineno)
        return resolved

    vi = resolve(fields[0], np_, "position")
    ti = resolve(fields[1], nt, "uv") if len(fields) > 1 else -1
    ni = resolve(fields[2], nn, "normal") if len(fields) > 2 else -1
    return (vi, ti, ni)


def save_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Write a Wavefront OBJ; inverse of load_mesh up to float formatting."""
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]:.10g} {p[1]:.10g} {p[2]:.10g}")
    for t in mesh.uvs:
        lines.append(f"vt {t[0]:.10g} {t[1]:.10g}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.10g} {n[1]:.10g} {n[2]:.10g}")
    for tri in mesh.triangles:
        corner = " ".join(f"{c[0] + 1}/{c[1] + 1}/{c[2] + 1}" for c in tri)
        lines.append(f"f {corner}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Camera
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Camera:
    """Orbit camera aimed at the world origin.

    Azimuth 0 / elevation 0 places the camera on +Z; azimuth 90 on +X;
    elevation 90 on +Y. ``distance`` applies to perspective cameras only,
    ``ortho_scale`` (the half-extent of the view box) to orthographic only.
    """

    kind: str  # "orthographic" | "perspective"
    azimuth_deg: float
    elevation_deg: float
    width: int
    height: int
    distance: float = 2.5
    ortho_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("orthographic", "perspective"):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.width < 16 or self.height < 16:
            raise ValueError("camera resolution must be at least 16x16")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "azimuth_deg": self.azimuth_deg,
            "elevation_deg": self.elevation_deg,
            "width": self.width,
            "height": self.height,
            "distance": self.distance,
            "ortho_scale": self.ortho_scale,
        }

    @staticmethod
    def from_json(obj: dict) -> "Camera":
        return Camera(
            kind=obj["kind"],
            azimuth_deg=float(obj["azimuth_deg"]),
            elevation_deg=float(obj["elevation_deg"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            distance=float(obj.get("distance", 2.5)),
            ortho_scale=float(obj.get("ortho_scale", 1.0)),
        )


def save_camera(cam: Camera, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cam.to_json(), indent=2) + "\n", encoding="utf-8")


def load_camera(path: str | Path) -> Camera:
    return Camera.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class CameraTransform:
    """Resolved view/projection state for one Camera."""

    camera: Camera
    eye: np.ndarray  # (3,) camera position (meaningful for perspective)
    right: np.ndarray  # (3,) world-space camera axes
    up: np.ndarray
    back: np.ndarray  # points from target toward the camera

    def world_to_view(self, points: np.ndarray) -> np.ndarray:
        """Rotate/translate world points into camera coordinates."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        rel = pts - self.eye
        return np.stack([rel @ self.right, rel @ self.up, rel @ self.back], axis=1)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Project world points to (x_pixel, y_pixel, depth, inv_w).

        Depth is the positive view-space distance in front of the camera;
        inv_w is 1 for orthographic and 1/depth for perspective (used for
        perspective-correct interpolation).
        """
        cam = self.camera
        view = self.world_to_view(points)
        depth = -view[:, 2]  # camera looks along its local -Z
        aspect = cam.width / cam.height
        if cam.kind == "orthographic":
            x_ndc = view[:, 0] / (cam.ortho_scale * aspect)
            y_ndc = view[:, 1] / cam.ortho_scale
            inv_w = np.ones_like(depth)
        else:
            half_tan = math.tan(math.radians(PERSPECTIVE_FOV_DEG) / 2.0)
            safe = np.maximum(depth, 1e-12)
            x_ndc = view[:, 0] / (safe * half_tan * aspect)
            y_ndc = view[:, 1] / (safe * half_tan)
            inv_w = 1.0 / safe
        x_pix = (x_ndc + 1.0) * 0.5 * cam.width
        y_pix = (1.0 - (y_ndc + 1.0) * 0.5) * cam.height
        return np.stack([x_pix, y_pix, depth, inv_w], axis=1)

    def view_directions(self, points: np.ndarray) -> np.ndarray:
        """Unit vectors from surface points toward the camera."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self.camera.kind == "orthographic":
            return np.broadcast_to(self.back, pts.shape).copy()
        d = self.eye - pts
        return d / np.linalg.norm(d, axis=1, keepdims=True)


def camera_matrices(cam: Camera) -> CameraTransform:
    """Build the deterministic right-handed look-at transform for a camera.

    The camera frame is the canonical frame (+X right, +Y up, +Z back)
    rotated by elevation about X and then azimuth about Y, which keeps the
    transform continuous at the poles (no up-vector degeneracy).
    """
    az = math.radians(cam.azimuth_deg)
    el = math.radians(cam.elevation_deg)
    ry = np.array([
        [math.cos(az), 0.0, math.sin(az)],
        [0.0, 1.0, 0.0],
        [-math.sin(az), 0.0, math.cos(az)],
    ])
    rx = np.array([
        [1.0, 0.0, 0.0],
        [0.0, math.cos(-el), -math.sin(-el)],
        [0.0, math.sin(-el), math.cos(-el)],
    ])
    rot = ry @ rx
    right = rot @ np.array([1.0, 0.0, 0.0])
    up = rot @ np.array([0.0, 1.0, 0.0])
    back = rot @ np.array([0.0, 0.0, 1.0])
    dist = cam.distance if cam.kind == "perspective" else max(cam.ortho_scale * 4.0, 1.0)
    eye = back * dist
    return CameraTransform(camera=cam, eye=eye, right=right, up=up, back=back)


def frame_camera(mesh: TriMesh, azimuth_deg: float, elevation_deg: float,
                 width: int = 512, height: int = 512, kind: str = "orthographic",
                 margin: float = 1.15) -> Camera:
    """Camera that fully frames the mesh from the given orbit angles.

    Framing uses the largest vertex distance from the origin, so the object
    stays in view for any azimuth/elevation even when it is not centered.
    """
    radius = max(mesh.bounding_radius(), 1e-6) * margin
    if kind == "orthographic":
        return Camera(kind, azimuth_deg, elevation_deg, width, height,
                      ortho_scale=radius)
    half_fov = math.radians(PERSPECTIVE_FOV_DEG) / 2.0
    distance = radius / math.sin(half_fov) * 1.05
    return Camera(kind, azimuth_deg, elevation_deg, width, height,
                  distance=distance)


# ---------------------------------------------------------------------------
# Textures
# ---------------------------------------------------------------------------


@dataclass
class TextureMap:
    """2D raster over UV space; data is (height, width, channels) in [0, 1]."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError("TextureMap supports 1 or 3 channels")
        self.data = np.asarray(self.data, dtype=np.float64).reshape(
            self.height, self.width, self.channels)
        np.clip(self.data, 0.0, 1.0, out=self.data)

    @staticmethod
    def full(width: int, height: int, value, channels: int | None = None) -> "TextureMap":
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        channels = channels or len(value)
        data = np.broadcast_to(value, (height, width, channels)).copy()
        return TextureMap(width, height, channels, data)

    @staticmethod
    def from_array(data: np.ndarray) -> "TextureMap":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        h, w, c = data.shape
        return TextureMap(w, h, c, data)

    def sample(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Bilinear sample at UV coordinates; edges clamp.

        v=0 is the bottom texture row. Returns (..., channels).
        """
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        x = u * self.width - 0.5
        y = (1.0 - v) * self.height - 0.5
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        fx = (x - x0)[..., None]
        fy = (y - y0)[..., None]
        x0c = np.clip(x0, 0, self.width - 1)
        x1c = np.clip(x0 + 1, 0, self.width - 1)
        y0c = np.clip(y0, 0, self.height - 1)
        y1c = np.clip(y0 + 1, 0, self.height - 1)
        d = self.data
        top = d[y0c, x0c] * (1 - fx) + d[y0c, x1c] * fx
        bot = d[y1c, x0c] * (1 - fx) + d[y1c, x1c] * fx
        return top * (1 - fy) + bot * fy

    def quantized(self) -> "TextureMap":
        """Snap values to the 8-bit grid (what a PNG round-trip would yield)."""
        return TextureMap(self.width, self.height, self.channels,
                          float_to_u8(self.data) / 255.0)

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        _to_pil(self).save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str | Path) -> None:
        _to_pil(self).save(str(path), format="PNG")


def _to_pil(tex: TextureMap) -> Image.Image:
    raw = float_to_u8(tex.data)
    if tex.channels == 1:
        return Image.fromarray(raw[:, :, 0], mode="L")
    return Image.fromarray(raw, mode="RGB")


def load_texture(path: str | Path, channels: int | None = None) -> TextureMap:
    """Read an 8-bit PNG (gray or RGB) into a TextureMap."""
    img = Image.open(str(path))
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if channels != 1 else "L")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    tex = TextureMap.from_array(arr)
    if channels is not None and tex.channels != channels:
        raise ValueError(f"{path}: expected {channels}-channel texture, got {tex.channels}")
    return tex


def float_to_u8(values: np.ndarray) -> np.ndarray:
    """Quantize [0,1] floats to bytes with round-half-up."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# Normal map encoding
# ---------------------------------------------------------------------------


def encode_normal_map(normals: np.ndarray, mask: np.ndarray | None = None) -> TextureMap:
    """Encode unit vectors into an RGB texture, one byte step per 2/255.

    Each component maps through round_half_up((c + 1)/2 * 255)/255, so the
    stored floats sit exactly on the 8-bit grid. Pixels outside ``mask``
    encode the flat normal (0, 0, 1).
    """
    n = np.asarray(normals, dtype=np.float64)
    if n.ndim == 2:
        n = n[None, :, :]
    h, w, _ = n.shape
    enc = float_to_u8((n + 1.0) * 0.5).astype(np.float64) / 255.0
    if mask is not None:
        flat = np.array([128, 128, 255], dtype=np.float64) / 255.0
        enc[~mask] = flat
    return TextureMap(w, h, 3, enc)


def decode_normal_map(tex: TextureMap | np.ndarray) -> np.ndarray:
    """Inverse of encode_normal_map; returns renormalized unit vectors."""
    data = tex.data if isinstance(tex, TextureMap) else np.asarray(tex, dtype=np.float64)
    n = data * 2.0 - 1.0
    lengths = np.linalg.norm(n, axis=-1, keepdims=True)
    lengths[lengths < 1e-12] = 1.0
    return n / lengths


# ---------------------------------------------------------------------------
# G-buffer
# ---------------------------------------------------------------------------


@dataclass
class GBuffer:
    """Per-pixel geometry and material attributes from a visibility pass."""

    camera: Camera
    albedo: np.ndarray  # (H, W, 3)
    position: np.ndarray  # (H, W, 3) world space
    normal: np.ndarray  # (H, W, 3) unit shading normals on coverage
    uv: np.ndarray  # (H, W, 2)
    face_id: np.ndarray  # (H, W) int32, EMPTY where uncovered
    depth: np.ndarray  # (H, W) float64, +inf where uncovered
    coverage: np.ndarray  # (H, W) bool

    @property
    def width(self) -> int:
        return self.camera.width

    @property
    def height(self) -> int:
        return self.camera.height


def tangent_vectors(mesh: TriMesh) -> np.ndarray:
    """Per-face world-space direction of increasing u (dP/du), unnormalized.

    Degenerate UV mappings fall back to global-up x face-normal so a frame
    can always be built.
    """
    p = mesh.corner_positions()
    t = mesh.corner_uvs()
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    du1 = t[:, 1, 0] - t[:, 0, 0]
    dv1 = t[:, 1, 1] - t[:, 0, 1]
    du2 = t[:, 2, 0] - t[:, 0, 0]
    dv2 = t[:, 2, 1] - t[:, 0, 1]
    det = du1 * dv2 - du2 * dv1
    safe = np.where(np.abs(det) < 1e-12, 1.0, det)
    dpdu = (e1 * dv2[:, None] - e2 * dv1[:, None]) / safe[:, None]

    degenerate = np.abs(det) < 1e-12
    if np.any(degenerate):
        face_n = np.cross(e1, e2)
        lengths = np.linalg.norm(face_n, axis=1, keepdims=True)
        lengths[lengths < 1e-20] = 1.0
        face_n = face_n / lengths
        up = np.array([0.0, 1.0, 0.0])
        fallback = np.cross(np.broadcast_to(up, face_n.shape), face_n)
        tiny = np.linalg.norm(fallback, axis=1) < 1e-6
        fallback[tiny] = np.cross(np.array([1.0, 0.0, 0.0]), face_n[tiny])
        dpdu = np.where(degenerate[:, None], fallback, dpdu)
    return dpdu


def tangent_frames(dpdu: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Orthonormal right-handed (t, b, n) frames as (N, 3, 3) column matrices.

    t is dpdu projected off n; b = n x t. Multiplying a tangent-space vector
    by the matrix yields the world-space vector.
    """
    n = np.asarray(normals, dtype=np.float64)
    t = dpdu - np.sum(dpdu * n, axis=1, keepdims=True) * n
    lengths = np.linalg.norm(t, axis=1, keepdims=True)
    tiny = lengths[:, 0] < 1e-9
    if np.any(tiny):
        up = np.array([0.0, 1.0, 0.0])
        alt = np.cross(np.broadcast_to(up, n[tiny].shape), n[tiny])
        alt_len = np.linalg.norm(alt, axis=1, keepdims=True)
        small = alt_len[:, 0] < 1e-6
        alt[small] = np.cross(np.array([1.0, 0.0, 0.0]), n[tiny][small])
        t = t.copy()
        t[tiny] = alt
        lengths = np.linalg.norm(t, axis=1, keepdims=True)
    t = t / lengths
    b = np.cross(n, t)
    return np.stack([t, b, n], axis=2)


def integrate_normal(bumps: np.ndarray, frames: np.ndarray) -> np.ndarray:
    """Rotate tangent-space bump normals into world space and renormalize.

    ``frames`` holds (t, b, n) as columns, so the bump (0, 0, 1) maps to the
    base normal exactly and rotation preserves angles between bumps.
    """
    world = np.einsum("...ij,...j->...i", frames, np.asarray(bumps, dtype=np.float64))
    lengths = np.linalg.norm(world, axis=-1, keepdims=True)
    lengths[lengths < 1e-12] = 1.0
    return world / lengths
