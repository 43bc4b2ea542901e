"""Cook-Torrance GGX relighting of G-buffers (metallic-roughness workflow).

The shading model matches what glTF consumers implement, so what the preview
service shows is what a downstream engine renders: F0 lerped between 0.04 and
albedo by metalness, Lambert diffuse scaled by (1 - metalness), GGX specular
with Smith height-correlated visibility and Schlick Fresnel, clamp tone map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import QuadratureDiverged
from .geometry import GBuffer, TextureMap, camera_matrices

# alpha (= roughness^2) floor keeps D and the visibility term finite for
# mirror-like inputs without touching any roughness >= 0.01
ALPHA_FLOOR = 1e-4


@dataclass(frozen=True)
class LightRig:
    """Directional lights plus a constant ambient term."""

    directionals: tuple  # of (direction toward light: (3,), radiance rgb: (3,))
    ambient: np.ndarray

    def __post_init__(self):
        dirs = []
        total = np.asarray(self.ambient, dtype=np.float64).copy()
        for d, rgb in self.directionals:
            d = np.asarray(d, dtype=np.float64)
            if abs(np.linalg.norm(d) - 1.0) > 1e-4:
                raise ValueError("light direction must be unit length")
            rgb = np.asarray(rgb, dtype=np.float64)
            if (rgb < 0).any():
                raise ValueError("light radiance must be non-negative")
            dirs.append((d, rgb))
            total += rgb
        object.__setattr__(self, "directionals", tuple(dirs))
        ambient = np.asarray(self.ambient, dtype=np.float64)
        if (ambient < 0).any():
            raise ValueError("ambient radiance must be non-negative")
        object.__setattr__(self, "ambient", ambient)
        if not (total > 0).any():
            raise ValueError("rig needs at least one light with positive radiance")

    def to_json(self) -> dict:
        return {
            "directionals": [{"dir": list(map(float, d)), "rgb": list(map(float, c))}
                             for d, c in self.directionals],
            "ambient": list(map(float, self.ambient)),
        }

    @staticmethod
    def from_json(obj: dict) -> "LightRig":
        directionals = tuple(
            (np.asarray(e["dir"], dtype=np.float64), np.asarray(e["rgb"], dtype=np.float64))
            for e in obj.get("directionals", ())
        )
        return LightRig(directionals, np.asarray(obj.get("ambient", [0.0, 0.0, 0.0]),
                                                 dtype=np.float64))


def save_rig(rig: LightRig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(rig.to_json(), indent=2) + "\n", encoding="utf-8")


def load_rig(path: str | Path) -> LightRig:
    return LightRig.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def default_rig() -> LightRig:
    """Three-point white rig used by the CLI and preview service."""
    key = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
    fill = np.array([-1.0, 0.5, 1.0])
    fill /= np.linalg.norm(fill)
    rim = np.array([0.0, -0.3, -1.0])
    rim /= np.linalg.norm(rim)
    return LightRig(
        directionals=(
            (key, np.array([2.2, 2.2, 2.2])),
            (fill, np.array([0.7, 0.7, 0.7])),
            (rim, np.array([0.4, 0.4, 0.4])),
        ),
        ambient=np.array([0.03, 0.03, 0.03]),
    )


def ggx_distribution(n_dot_h: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """GGX normal distribution D; alpha is roughness squared."""
    a2 = alpha * alpha
    denom = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0
    return a2 / (np.pi * denom * denom)


def smith_visibility(n_dot_l: np.ndarray, n_dot_v: np.ndarray,
                     alpha: np.ndarray) -> np.ndarray:
    """Height-correlated Smith visibility V = G / (4 (n.l)(n.v))."""
    a2 = alpha * alpha
    lv = n_dot_l * np.sqrt(a2 + (1.0 - a2) * n_dot_v * n_dot_v)
    vl = n_dot_v * np.sqrt(a2 + (1.0 - a2) * n_dot_l * n_dot_l)
    return 0.5 / np.maximum(lv + vl, 1e-12)


def schlick_fresnel(h_dot_v: np.ndarray, f0: np.ndarray) -> np.ndarray:
    return f0 + (1.0 - f0) * (1.0 - h_dot_v)[..., None] ** 5


def shade(gbuf: GBuffer, roughness_uv: TextureMap, metalness_uv: TextureMap,
          rig: LightRig, specular: bool = True,
          background: tuple = (0.0, 0.0, 0.0)) -> np.ndarray:
    """Relight a G-buffer; returns an (H, W, 3) image in [0, 1].

    Uncovered pixels take the background color. ``specular=False`` drops the
    microfacet term, leaving Lambert diffuse plus ambient (used by tests with
    closed-form expectations).
    """
    if roughness_uv.channels != 1 or metalness_uv.channels != 1:
        raise ValueError("material maps must be single-channel")
    h_img, w_img = gbuf.coverage.shape
    out = np.empty((h_img, w_img, 3))
    out[:, :] = np.asarray(background, dtype=np.float64)
    cov = gbuf.coverage
    if not cov.any():
        return out

    albedo = gbuf.albedo[cov]
    n = gbuf.normal[cov]
    uv = gbuf.uv[cov]
    rough = roughness_uv.sample(uv[:, 0], uv[:, 1])[:, 0]
    metal = metalness_uv.sample(uv[:, 0], uv[:, 1])[:, 0]
    alpha = np.maximum(rough * rough, ALPHA_FLOOR)

    xf = camera_matrices(gbuf.camera)
    v = xf.view_directions(gbuf.position[cov])
    n_dot_v = np.maximum(np.sum(n * v, axis=1), 1e-6)

    f0 = 0.04 * (1.0 - metal)[:, None] + albedo * metal[:, None]
    diffuse = albedo / np.pi * (1.0 - metal)[:, None]

    color = albedo * rig.ambient
    for light_dir, radiance in rig.directionals:
        n_dot_l = np.sum(n * light_dir, axis=1)
        lit = n_dot_l > 0.0
        if not lit.any():
            continue
        nl = n_dot_l[lit]
        contrib = diffuse[lit].copy()
        if specular:
            h = light_dir + v[lit]
            h /= np.linalg.norm(h, axis=1, keepdims=True)
            n_dot_h = np.clip(np.sum(n[lit] * h, axis=1), 0.0, 1.0)
            h_dot_v = np.clip(np.sum(h * v[lit], axis=1), 0.0, 1.0)
            d = ggx_distribution(n_dot_h, alpha[lit])
            vis = smith_visibility(nl, n_dot_v[lit], alpha[lit])
            f = schlick_fresnel(h_dot_v, f0[lit])
            contrib = contrib + (d * vis)[:, None] * f
        add = np.zeros_like(color)
        add[lit] = contrib * radiance * nl[:, None]
        color = color + add

    out[cov] = np.clip(color, 0.0, 1.0)
    return out


def validate_brdf_normalization(roughness: float, theta_steps: int = 256,
                                phi_steps: int = 1024) -> float:
    """Numerically integrate D(h) (n.h) over the hemisphere; should be 1.

    The zenith nodes follow theta(u) = atan(alpha u / (1 - u)) so the grid
    tracks the lobe width; a uniform grid cannot resolve sharp lobes at low
    roughness. D itself is evaluated through the shading code path.
    """
    alpha = max(roughness * roughness, ALPHA_FLOOR)
    du = 1.0 / theta_steps
    u = (np.arange(theta_steps) + 0.5) * du
    t = alpha * u / (1.0 - u)
    theta = np.arctan(t)
    dtheta_du = (alpha / (1.0 - u) ** 2) / (1.0 + t * t)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    d = ggx_distribution(cos_t, np.full_like(cos_t, alpha))
    ring = d * cos_t * sin_t * dtheta_du * du  # integrand per unit phi
    dphi = 2.0 * np.pi / phi_steps
    total = float(np.sum(ring) * dphi * phi_steps)
    if not np.isfinite(total):
        raise QuadratureDiverged(f"normalization integral for roughness {roughness} "
                                 f"is {total}")
    return total
