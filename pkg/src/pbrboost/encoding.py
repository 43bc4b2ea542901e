"""Multiresolution hash-grid positional encoding with analytic gradients.

Each level is a virtual 3D grid of feature vectors. Coarse levels whose
corner count fits the table index directly; fine levels fold corners through
a spatial hash. Features are trilinearly interpolated per level and
concatenated. The backward pass scatters output gradients into the tables,
which is the only gradient path (query points are fixed surface samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfBounds

HASH_PRIMES = (1, 2654435761, 805459861)


def level_resolutions(levels: int, base: int, finest: int) -> np.ndarray:
    """N_l = floor(base * b^l) with b chosen so the last level hits finest."""
    if levels < 1:
        raise ValueError("need at least one level")
    if levels == 1:
        return np.array([base], dtype=np.int64)
    b = math.exp(math.log(finest / base) / (levels - 1))
    res = np.array([int(math.floor(base * b ** l)) for l in range(levels)],
                   dtype=np.int64)
    if np.any(np.diff(res) <= 0):
        raise ValueError(f"level resolutions {res.tolist()} are not strictly increasing")
    return res


@dataclass
class EncodingPlan:
    """Precomputed gather indices and trilinear weights for a fixed point set."""

    count: int
    indices: np.ndarray  # (N, L, 8) int64 table rows
    weights: np.ndarray  # (N, L, 8) float64


class HashGridEncoder:
    """L levels x T rows x F features over an axis-aligned domain box."""

    def __init__(self, bounds_min, bounds_max, levels: int = 8,
                 features_per_level: int = 2, table_size: int = 2 ** 16,
                 base_resolution: int = 16, finest_resolution: int = 256,
                 seed: int = 0):
        self.bounds_min = np.asarray(bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(bounds_max, dtype=np.float64)
        if np.any(self.bounds_max <= self.bounds_min):
            raise ValueError("degenerate domain box")
        self.levels = levels
        self.features_per_level = features_per_level
        self.table_size = table_size
        self.resolutions = level_resolutions(levels, base_resolution, finest_resolution)
        rng = np.random.default_rng(seed)
        self.tables = rng.uniform(-1e-4, 1e-4,
                                  size=(levels, table_size, features_per_level))

    @staticmethod
    def for_mesh(mesh, margin: float = 0.05, **kwargs) -> "HashGridEncoder":
        lo, hi = mesh.bounds()
        pad = (hi - lo) * margin + 1e-6
        return HashGridEncoder(lo - pad, hi + pad, **kwargs)

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    def corner_index(self, coords: np.ndarray, resolution: int) -> np.ndarray:
        """Table row for integer corner coordinates at one level.

        Direct (collision-free) indexing applies only when the level's full
        corner lattice fits the table and the coordinate is below the
        resolution in every axis; everything else goes through the hash.
        """
        c = coords.astype(np.uint64)
        n = np.uint64(resolution)
        hashed = (c[..., 0] * np.uint64(HASH_PRIMES[0])
                  ^ c[..., 1] * np.uint64(HASH_PRIMES[1])
                  ^ c[..., 2] * np.uint64(HASH_PRIMES[2])) % np.uint64(self.table_size)
        if resolution ** 3 <= self.table_size:
            direct = (c < n).all(axis=-1)
            flat = c[..., 0] + c[..., 1] * n + c[..., 2] * n * n
            return np.where(direct, flat, hashed).astype(np.int64)
        return hashed.astype(np.int64)

    def plan(self, points: np.ndarray) -> EncodingPlan:
        """Resolve trilinear corners and weights for each point and level."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        span = self.bounds_max - self.bounds_min
        unit = (pts - self.bounds_min) / span
        if unit.min() < -1e-9 or unit.max() > 1.0 + 1e-9:
            bad = np.argmax(np.maximum(-unit.min(axis=1), unit.max(axis=1) - 1.0))
            raise OutOfBounds(f"point {pts[bad]} outside encoder domain")
        unit = np.clip(unit, 0.0, 1.0)

        n_pts = len(pts)
        indices = np.empty((n_pts, self.levels, 8), dtype=np.int64)
        weights = np.empty((n_pts, self.levels, 8))
        offsets = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)],
                           dtype=np.int64)
        for l, res in enumerate(self.resolutions):
            scaled = unit * res
            cell = np.minimum(np.floor(scaled), res - 1).astype(np.int64)
            frac = scaled - cell
            corners = cell[:, None, :] + offsets[None, :, :]  # (N, 8, 3)
            indices[:, l, :] = self.corner_index(corners, int(res))
            w = np.where(offsets[None, :, :] == 1, frac[:, None, :],
                         1.0 - frac[:, None, :])
            weights[:, l, :] = w.prod(axis=2)
        return EncodingPlan(n_pts, indices, weights)

    def encode_with_plan(self, plan: EncodingPlan) -> np.ndarray:
        """(N, L*F) features: weighted sum of the 8 corner rows per level."""
        out = np.empty((plan.count, self.levels, self.features_per_level))
        for l in range(self.levels):
            rows = self.tables[l][plan.indices[:, l, :]]  # (N, 8, F)
            out[:, l, :] = (rows * plan.weights[:, l, :, None]).sum(axis=1)
        return out.reshape(plan.count, self.output_dim)

    def encode(self, points: np.ndarray) -> np.ndarray:
        return self.encode_with_plan(self.plan(points))

    def table_gradient(self, plan: EncodingPlan, d_features: np.ndarray) -> np.ndarray:
        """Scatter feature gradients back into table rows.

        bincount per level and feature column; np.add.at is an order of
        magnitude slower for this access pattern.
        """
        d_feat = d_features.reshape(plan.count, self.levels, self.features_per_level)
        grad = np.zeros_like(self.tables)
        for l in range(self.levels):
            flat_idx = plan.indices[:, l, :].ravel()
            contrib = plan.weights[:, l, :, None] * d_feat[:, l, None, :]
            for f in range(self.features_per_level):
                grad[l, :, f] = np.bincount(flat_idx,
                                            weights=contrib[:, :, f].ravel(),
                                            minlength=self.table_size)
        return grad
