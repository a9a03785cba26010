"""Small dense network: shared ReLU trunk feeding several linear heads.

Plain numpy forward/backward in double precision, so analytic gradients can
be checked tightly against central finite differences. The loss is a
per-head mean squared TD error on the taken action, summed over the heads
selected by a mask; the trunk accumulates every active head's gradient.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int = 7
    hidden_dims: tuple[int, ...] = (64, 64)
    num_heads: int = 4
    num_actions: int = 14

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))


@dataclass
class MlpParams:
    trunk_w: list[np.ndarray]
    trunk_b: list[np.ndarray]
    head_w: list[np.ndarray]
    head_b: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.trunk_w, *self.trunk_b, *self.head_w, *self.head_b]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.trunk_w],
                         [b.copy() for b in self.trunk_b],
                         [w.copy() for w in self.head_w],
                         [b.copy() for b in self.head_b])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.trunk_w],
                         [np.zeros_like(b) for b in self.trunk_b],
                         [np.zeros_like(w) for w in self.head_w],
                         [np.zeros_like(b) for b in self.head_b])


def init_params(config: MlpConfig, rng: np.random.Generator) -> MlpParams:
    """He-uniform weights, zero biases."""
    dims = (config.input_dim, *config.hidden_dims)
    trunk_w, trunk_b = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        trunk_w.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        trunk_b.append(np.zeros(fan_out))
    head_w, head_b = [], []
    emb = dims[-1]
    limit = np.sqrt(6.0 / emb)
    for _ in range(config.num_heads):
        head_w.append(rng.uniform(-limit, limit, size=(emb, config.num_actions)))
        head_b.append(np.zeros(config.num_actions))
    return MlpParams(trunk_w, trunk_b, head_w, head_b)


def _trunk_forward(params: MlpParams, x: np.ndarray):
    acts = [x]
    pre = []
    h = x
    for w, b in zip(params.trunk_w, params.trunk_b):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    return acts, pre


def forward(params: MlpParams, x: np.ndarray):
    """Returns (trunk embedding, list of per-head outputs), all (B, .)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature input")
    acts, _ = _trunk_forward(params, x)
    emb = acts[-1]
    heads = [emb @ w + b for w, b in zip(params.head_w, params.head_b)]
    return emb, heads


def head_values(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """All head outputs stacked to (num_heads, B, num_actions)."""
    _, heads = forward(params, x)
    return np.stack(heads)


def td_loss(params: MlpParams, x: np.ndarray, actions: np.ndarray,
            targets: np.ndarray, head_mask: np.ndarray) -> float:
    """Masked sum over heads of mean((Q_h(s, a) - y_h)^2)."""
    _, heads = forward(params, x)
    idx = np.arange(len(actions))
    total = 0.0
    for h, q in enumerate(heads):
        if head_mask[h]:
            err = q[idx, actions] - targets[h]
            total += float(np.mean(err * err))
    return total


def backward(params: MlpParams, x: np.ndarray, actions: np.ndarray,
             targets: np.ndarray, head_mask: np.ndarray):
    """Loss and gradients of td_loss; masked heads get zero gradient."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite TD target")
    batch = x.shape[0]
    idx = np.arange(batch)

    acts, pre = _trunk_forward(params, x)
    emb = acts[-1]
    grads = params.zeros_like()

    loss = 0.0
    d_emb = np.zeros_like(emb)
    for h, (w, b) in enumerate(zip(params.head_w, params.head_b)):
        if not head_mask[h]:
            continue
        q = emb @ w + b
        err = q[idx, actions] - targets[h]
        loss += float(np.mean(err * err))
        dq = np.zeros_like(q)
        dq[idx, actions] = 2.0 * err / batch
        grads.head_w[h] = emb.T @ dq
        grads.head_b[h] = dq.sum(axis=0)
        d_emb += dq @ w.T

    dh = d_emb
    for layer in range(len(params.trunk_w) - 1, -1, -1):
        dz = dh * (pre[layer] > 0.0)
        grads.trunk_w[layer] = acts[layer].T @ dz
        grads.trunk_b[layer] = dz.sum(axis=0)
        if layer > 0:
            dh = dz @ params.trunk_w[layer].T
    return loss, grads


# ---------------------------------------------------------------- optimizers

def sgd_step(params: MlpParams, grads: MlpParams, lr: float) -> MlpParams:
    """Plain in-place gradient step."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    for p, g in zip(params.arrays(), grads.arrays()):
        p -= lr * g
    return params


class AdamState:
    """Adam with bias correction; updates parameters in place."""

    def __init__(self, params: MlpParams, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = params.zeros_like()
        self.v = params.zeros_like()

    def step(self, params: MlpParams, grads: MlpParams) -> MlpParams:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params.arrays(), grads.arrays(),
                              self.m.arrays(), self.v.arrays()):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return params


# --------------------------------------------------------------- checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: MlpParams, config: MlpConfig,
                    metadata: dict | None = None) -> None:
    """Exact (binary float64) round-trip container for network weights."""
    arrays = {}
    for k, w in enumerate(params.trunk_w):
        arrays[f"trunk_w_{k}"] = w
    for k, b in enumerate(params.trunk_b):
        arrays[f"trunk_b_{k}"] = b
    for k, w in enumerate(params.head_w):
        arrays[f"head_w_{k}"] = w
    for k, b in enumerate(params.head_b):
        arrays[f"head_b_{k}"] = b
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(config),
            "metadata": metadata or {}}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(),
                                   dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Returns (params, config, metadata)."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg_dict = meta["config"]
        cfg_dict["hidden_dims"] = tuple(cfg_dict["hidden_dims"])
        config = MlpConfig(**cfg_dict)
        n_hidden = len(config.hidden_dims)
        params = MlpParams(
            trunk_w=[data[f"trunk_w_{k}"] for k in range(n_hidden)],
            trunk_b=[data[f"trunk_b_{k}"] for k in range(n_hidden)],
            head_w=[data[f"head_w_{k}"] for k in range(config.num_heads)],
            head_b=[data[f"head_b_{k}"] for k in range(config.num_heads)],
        )
    return params, config, meta["metadata"]
