"""Iterative normal refinement against per-view target normals.

Each round renders the current normals, asks the oracle for blended targets,
then runs Adam on the bump field so the rendered normals chase the targets
under a pixel-wise squared error. Targets regenerate at round boundaries from
the updated renders. The optimized field finally bakes into a tangent-space
normal UV.

Geometry is never touched: only the shading normals move.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .bump import FLAT_BUMP, BumpField, make_optimizer
from .encoding import HashGridEncoder
from .errors import (
    DivergedLoss,
    MissingTargetView,
    ParseError,
    ReferenceMeshAbsent,
    UVOverlapWarning,
)
from .geometry import (
    Camera,
    TextureMap,
    TriMesh,
    decode_normal_map,
    encode_normal_map,
    frame_camera,
    integrate_normal,
    tangent_frames,
    tangent_vectors,
)
from .materials import UVRaster, dilate_nearest, rasterize_uv
from .raster import pixel_tangent_frames, render_gbuffer, render_normal_view


def slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation between unit-vector arrays, elementwise.

    t=0 returns a, t=1 returns b exactly. Nearly parallel pairs fall back to
    normalized lerp; antipodal pairs rotate through a deterministic
    perpendicular axis.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if t == 0.0:
        return a.copy()
    if t == 1.0:
        return b.copy()
    dots = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    omega = np.arccos(dots)
    sin_omega = np.sin(omega)

    out = np.empty_like(a)
    regular = sin_omega > 1e-7
    if regular.any():
        so = sin_omega[regular][..., None]
        om = omega[regular][..., None]
        out[regular] = (np.sin((1.0 - t) * om) * a[regular]
                        + np.sin(t * om) * b[regular]) / so

    parallel = ~regular & (dots > 0.0)
    if parallel.any():
        mixed = (1.0 - t) * a[parallel] + t * b[parallel]
        mixed /= np.linalg.norm(mixed, axis=-1, keepdims=True)
        out[parallel] = mixed

    antipodal = ~regular & (dots <= 0.0)
    if antipodal.any():
        av = a[antipodal]
        perp = np.cross(np.broadcast_to([0.0, 1.0, 0.0], av.shape), av)
        tiny = np.linalg.norm(perp, axis=-1) < 1e-6
        perp[tiny] = np.cross([1.0, 0.0, 0.0], av[tiny])
        perp /= np.linalg.norm(perp, axis=-1, keepdims=True)
        ang = t * np.pi
        out[antipodal] = np.cos(ang) * av + np.sin(ang) * perp
    return out


def mean_angular_error_deg(a: np.ndarray, b: np.ndarray,
                           mask: np.ndarray | None = None) -> float:
    """Mean angle in degrees between two unit-normal images."""
    if mask is not None:
        a, b = a[mask], b[mask]
    dots = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return float(np.degrees(np.arccos(dots)).mean())


def default_refine_views(mesh: TriMesh, count: int = 8, width: int = 256,
                         height: int = 256) -> list[Camera]:
    """Orbit cameras with evenly spaced azimuth, elevation alternating 0/30."""
    cams = []
    for i in range(count):
        az = 360.0 * i / count
        el = 30.0 if i % 2 else 0.0
        cams.append(frame_camera(mesh, az, el, width, height, "orthographic"))
    return cams


def holdout_refine_views(mesh: TriMesh, count: int = 4, width: int = 256,
                         height: int = 256) -> list[Camera]:
    """Evaluation cameras staggered between the default refinement orbits."""
    cams = []
    for i in range(count):
        az = 360.0 * (i + 0.5) / count
        cams.append(frame_camera(mesh, az, 15.0, width, height, "orthographic"))
    return cams


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


@dataclass
class NormalOracle:
    """Source of per-view target normals, blended with strength t0.

    file kind: a directory of world-space normal-encoded PNGs, view_{i}.png,
    with a cameras.json that must match the optimization views.
    reference kind: a high-resolution mesh rendered on demand from each view.
    """

    kind: str  # "file" | "reference"
    strength: float
    directory: Path | None = None
    reference_mesh: TriMesh | None = None
    _cache: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("file", "reference"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if not (0.0 <= self.strength <= 1.0):
            raise ValueError("oracle strength must be in [0, 1]")
        if self.kind == "reference" and self.reference_mesh is None:
            raise ReferenceMeshAbsent("reference oracle needs a reference mesh")
        if self.kind == "file":
            if self.directory is None:
                raise MissingTargetView("file oracle needs a directory")
            self.directory = Path(self.directory)

    @staticmethod
    def from_directory(directory: str | Path, strength: float) -> "NormalOracle":
        return NormalOracle("file", strength, directory=Path(directory))

    @staticmethod
    def from_reference(mesh: TriMesh, strength: float) -> "NormalOracle":
        return NormalOracle("reference", strength, reference_mesh=mesh)

    def check_cameras(self, views: list[Camera]) -> None:
        """File oracles must describe exactly the optimization cameras."""
        if self.kind != "file":
            return
        cam_path = self.directory / "cameras.json"
        if not cam_path.exists():
            raise MissingTargetView(f"{self.directory}: missing cameras.json")
        stored = [Camera.from_json(o)
                  for o in json.loads(cam_path.read_text(encoding="utf-8"))]
        if stored != list(views):
            raise ParseError("oracle cameras.json does not match the optimization views")

    def view_normals(self, view: Camera, view_index: int) -> tuple[np.ndarray, np.ndarray]:
        """(normals image, validity mask) of the oracle for one view."""
        key = (view_index, view)
        if key in self._cache:
            return self._cache[key]
        if self.kind == "file":
            path = self.directory / f"view_{view_index}.png"
            if not path.exists():
                raise MissingTargetView(str(path))
            from .geometry import load_texture
            tex = load_texture(path, channels=3)
            if (tex.height, tex.width) != (view.height, view.width):
                raise ParseError(f"{path}: target size does not match camera")
            normals = decode_normal_map(tex)
            valid = np.ones(normals.shape[:2], dtype=bool)
        else:
            gbuf = render_gbuffer(self.reference_mesh, view)
            normals = gbuf.normal
            valid = gbuf.coverage
        self._cache[key] = (normals, valid)
        return self._cache[key]


def oracle_targets(oracle: NormalOracle, view: Camera, current_normals: np.ndarray,
                   albedo_render: np.ndarray | None = None,
                   view_index: int = 0) -> np.ndarray:
    """Per-pixel blended target normals: slerp(current, oracle, t0).

    Pixels the oracle cannot see keep the current normal. ``albedo_render``
    is accepted for interface parity with target generators conditioned on
    albedo; the built-in oracles do not consume it.
    """
    del albedo_render
    oracle_n, valid = oracle.view_normals(view, view_index)
    if oracle_n.shape != current_normals.shape:
        raise ParseError("oracle and render dimensions differ")
    target = current_normals.copy()
    if oracle.strength == 0.0 or not valid.any():
        return target
    target[valid] = slerp(current_normals[valid], oracle_n[valid], oracle.strength)
    return target


# ---------------------------------------------------------------------------
# Refinement loop
# ---------------------------------------------------------------------------


@dataclass
class RefineResult:
    field: BumpField
    round_losses: list
    views: list


@dataclass
class _ViewCache:
    camera: Camera
    coverage: np.ndarray
    base_normals: np.ndarray  # full image
    slice_: slice  # into the concatenated point arrays


def refine(mesh: TriMesh, oracle: NormalOracle, views: list[Camera],
           rounds: int = 3, steps_per_round: int = 400, *,
           hidden_width: int = 64, levels: int = 8, features_per_level: int = 2,
           table_size: int = 2 ** 16, base_resolution: int = 16,
           finest_resolution: int = 256, lr_tables: float = 1e-2,
           lr_network: float = 1e-3, seed: int = 0) -> RefineResult:
    """Optimize a bump field so rendered normals approach oracle targets.

    Per round: render normals per view, blend targets through the oracle,
    then run ``steps_per_round`` Adam steps on the mean squared pixel error.
    Raises DivergedLoss if the loss leaves the reals.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    if len(views) < 4:
        raise ValueError("need at least 4 views")
    oracle.check_cameras(views)

    encoder = HashGridEncoder.for_mesh(
        mesh, levels=levels, features_per_level=features_per_level,
        table_size=table_size, base_resolution=base_resolution,
        finest_resolution=finest_resolution, seed=seed)
    bump_field = BumpField(encoder, hidden_width=hidden_width, seed=seed)
    optimizer, params = make_optimizer(bump_field, lr_tables, lr_network)

    caches: list[_ViewCache] = []
    all_points, all_frames = [], []
    offset = 0
    for cam in views:
        gbuf = render_gbuffer(mesh, cam)
        pts = gbuf.position[gbuf.coverage]
        frames = pixel_tangent_frames(mesh, gbuf)
        caches.append(_ViewCache(cam, gbuf.coverage, gbuf.normal.copy(),
                                 slice(offset, offset + len(pts))))
        all_points.append(pts)
        all_frames.append(frames)
        offset += len(pts)
    points = np.concatenate(all_points)
    frames = np.concatenate(all_frames)
    plan = encoder.plan(points)
    n_px = len(points)
    if n_px == 0:
        raise ValueError("no view covers the mesh")

    def forward():
        raw, cache = bump_field.raw_with_cache(plan)
        q = raw + FLAT_BUMP
        world = np.einsum("nij,nj->ni", frames, q)
        lengths = np.linalg.norm(world, axis=1, keepdims=True)
        n_f = world / lengths
        return n_f, lengths, cache

    round_losses = []
    for round_index in range(rounds):
        n_f, _, _ = forward()
        targets = np.empty_like(n_f)
        for vi, vc in enumerate(caches):
            img = vc.base_normals.copy()
            img[vc.coverage] = n_f[vc.slice_]
            tgt_img = oracle_targets(oracle, vc.camera, img, view_index=vi)
            targets[vc.slice_] = tgt_img[vc.coverage]

        for step in range(steps_per_round):
            n_f, lengths, cache = forward()
            diff = n_f - targets
            loss = float(np.sum(diff * diff) / n_px)
            if not np.isfinite(loss):
                raise DivergedLoss(round_index, step)
            g = (2.0 / n_px) * diff
            d_world = (g - n_f * np.sum(n_f * g, axis=1, keepdims=True)) / lengths
            d_raw = np.einsum("nij,ni->nj", frames, d_world)
            grads = bump_field.backward(plan, cache, d_raw)
            optimizer.step(params, grads)

        n_f, _, _ = forward()
        diff = n_f - targets
        end_loss = float(np.sum(diff * diff) / n_px)
        if not np.isfinite(end_loss):
            raise DivergedLoss(round_index, steps_per_round)
        round_losses.append(end_loss)

    return RefineResult(field=bump_field, round_losses=round_losses,
                        views=list(views))


# ---------------------------------------------------------------------------
# Baking and normal-map rendering
# ---------------------------------------------------------------------------


def bake_normal_uv(mesh: TriMesh, bump_field: BumpField, resolution: int = 1024,
                   uv_raster: UVRaster | None = None) -> TextureMap:
    """Bake the field into a tangent-space normal UV map.

    Covered texels store the refined normal expressed in that texel's own
    tangent frame; uncovered texels copy their nearest covered texel.
    """
    raster = uv_raster if uv_raster is not None else rasterize_uv(mesh, resolution)
    covered = raster.covered
    image = np.zeros((resolution, resolution, 3))
    image[:, :] = FLAT_BUMP
    if raster.extra_claims:
        warnings.warn(f"{len(raster.extra_claims)} texels claimed by multiple "
                      f"UV islands; lowest face index kept", UVOverlapWarning)
    if covered.any():
        faces = raster.face_id[covered]
        lam = raster.bary[covered][:, :, None]
        pts = (mesh.corner_positions()[faces] * lam).sum(axis=1)
        n_o = (mesh.corner_normals()[faces] * lam).sum(axis=1)
        n_o /= np.linalg.norm(n_o, axis=1, keepdims=True)
        frames = tangent_frames(tangent_vectors(mesh)[faces], n_o)
        bumps = bump_field.eval_tangent(pts)
        n_f = integrate_normal(bumps, frames)
        stored = np.einsum("nij,ni->nj", frames, n_f)
        # frame math leaves ~1e-16 noise on exact zeros; zero encodes on the
        # byte-rounding boundary, so snap to keep flat areas at exactly 128
        stored[np.abs(stored) < 1e-9] = 0.0
        image[covered] = stored
        image = dilate_nearest(image, covered)
    return encode_normal_map(image)


def render_with_normal_map(mesh: TriMesh, cam: Camera, normal_uv: TextureMap,
                           gbuf=None) -> np.ndarray:
    """World-space normals from a baked tangent normal map (what engines do)."""
    if gbuf is None:
        gbuf = render_gbuffer(mesh, cam)
    normals = gbuf.normal.copy()
    if gbuf.coverage.any():
        uv = gbuf.uv[gbuf.coverage]
        tangent = decode_normal_map(normal_uv.sample(uv[:, 0], uv[:, 1]))
        frames = pixel_tangent_frames(mesh, gbuf)
        normals[gbuf.coverage] = integrate_normal(tangent, frames)
    return normals


def angular_error_vs_oracle(mesh: TriMesh, oracle: NormalOracle,
                            views: list[Camera],
                            bump_field: BumpField | None = None) -> list[float]:
    """Per-view mean angular error (degrees) against the raw oracle normals."""
    errors = []
    for vi, cam in enumerate(views):
        gbuf = render_gbuffer(mesh, cam)
        rendered = render_normal_view(mesh, cam, field=bump_field, gbuf=gbuf)
        oracle_n, valid = oracle.view_normals(cam, vi)
        both = gbuf.coverage & valid
        errors.append(mean_angular_error_deg(rendered, oracle_n, both))
    return errors
