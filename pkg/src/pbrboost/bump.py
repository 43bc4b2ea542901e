"""Optimizable bump field: hash-grid encoding feeding a small MLP.

The network maps encoded surface points to a tangent-space normal offset.
The final layer starts at exactly zero, so an untrained field decodes to the
flat tangent normal (0, 0, 1) everywhere and leaves rendered normals
untouched. Forward, backward, and the Adam step are all plain numpy; the
parameter set is small enough that autodiff frameworks would be overkill.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoding import EncodingPlan, HashGridEncoder

FLAT_BUMP = np.array([0.0, 0.0, 1.0])


def _he_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))


class BumpField:
    """encoder -> linear/ReLU -> linear/ReLU -> linear(3), plus (0,0,1) bias."""

    def __init__(self, encoder: HashGridEncoder, hidden_width: int = 64,
                 seed: int = 0):
        self.encoder = encoder
        self.hidden_width = hidden_width
        d = encoder.output_dim
        rng = np.random.default_rng(seed + 1)
        self.net = {
            "w1": _he_init(rng, d, hidden_width),
            "b1": np.zeros(hidden_width),
            "w2": _he_init(rng, hidden_width, hidden_width),
            "b2": np.zeros(hidden_width),
            "w3": np.zeros((hidden_width, 3)),  # zero: identity field at start
            "b3": np.zeros(3),
        }

    # -- forward ----------------------------------------------------------

    def raw_with_cache(self, plan: EncodingPlan) -> tuple[np.ndarray, dict]:
        """Unnormalized 3-vector output plus activations for backward."""
        feats = self.encoder.encode_with_plan(plan)
        z1 = feats @ self.net["w1"] + self.net["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ self.net["w2"] + self.net["b2"]
        h2 = np.maximum(z2, 0.0)
        raw = h2 @ self.net["w3"] + self.net["b3"]
        return raw, {"feats": feats, "z1": z1, "h1": h1, "z2": z2, "h2": h2}

    def eval_tangent(self, points: np.ndarray) -> np.ndarray:
        """Tangent-space unit bump normals at the given surface points."""
        plan = self.encoder.plan(points)
        raw, _ = self.raw_with_cache(plan)
        q = raw + FLAT_BUMP
        lengths = np.linalg.norm(q, axis=1, keepdims=True)
        lengths[lengths < 1e-12] = 1.0
        return q / lengths

    # -- backward ---------------------------------------------------------

    def backward(self, plan: EncodingPlan, cache: dict,
                 d_raw: np.ndarray) -> dict:
        """Gradients of a scalar loss w.r.t. every parameter, given d(raw)."""
        g = {}
        g["w3"] = cache["h2"].T @ d_raw
        g["b3"] = d_raw.sum(axis=0)
        d_h2 = d_raw @ self.net["w3"].T
        d_z2 = d_h2 * (cache["z2"] > 0.0)
        g["w2"] = cache["h1"].T @ d_z2
        g["b2"] = d_z2.sum(axis=0)
        d_h1 = d_z2 @ self.net["w2"].T
        d_z1 = d_h1 * (cache["z1"] > 0.0)
        g["w1"] = cache["feats"].T @ d_z1
        g["b1"] = d_z1.sum(axis=0)
        d_feats = d_z1 @ self.net["w1"].T
        g["tables"] = self.encoder.table_gradient(plan, d_feats)
        return g

    # -- parameter plumbing (finite-difference tests, checkpoints) ---------

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        items = [("tables", self.encoder.tables)]
        items.extend((k, self.net[k]) for k in sorted(self.net))
        return items

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for _, p in self.param_items()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        offset = 0
        for _, p in self.param_items():
            n = p.size
            p[...] = flat[offset:offset + n].reshape(p.shape)
            offset += n
        if offset != len(flat):
            raise ValueError("flat parameter vector has wrong length")


@dataclass
class Adam:
    """Adam with one learning rate per parameter group."""

    lrs: dict
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1 ** t)
            v_hat = self.v[name] / (1.0 - self.beta2 ** t)
            p -= self.lrs[name] * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(field_: BumpField, lr_tables: float = 1e-2,
                   lr_network: float = 1e-3) -> tuple[Adam, dict]:
    """Adam over all field parameters: fast tables, slower network."""
    params = {"tables": field_.encoder.tables}
    params.update(field_.net)
    lrs = {name: (lr_tables if name == "tables" else lr_network) for name in params}
    return Adam(lrs=lrs), params
