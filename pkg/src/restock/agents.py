"""DQN agents with general-value-function heads and directed exploration.

One network serves every product: its parameters are cloned across the
per-product feature rows each period and the chosen actions are assembled
into the joint order. Head 0 estimates the per-product reward; heads 1-3
estimate discounted sums of the wastage, stockout and depletion cumulants.
Their greedy-minimizing policies double as exploration options in the
dez_dqn_gvf variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .env import ACTION_SET, NUM_ACTIONS, NUM_CUMULANTS, NUM_FEATURES, Simulator

VARIANTS = ("dqn", "dqn_gvf", "dez_dqn_gvf")
NUM_GVFS = 3

#: action-source tags recorded in decision logs
TAG_MAIN, TAG_RANDOM, TAG_GVF1, TAG_GVF2, TAG_GVF3 = range(5)
TAG_NAMES = ("main", "random", "gvf1", "gvf2", "gvf3")


class ReplayBuffer:
    """Uniform-sampling ring buffer of per-product transitions."""

    def __init__(self, capacity: int, feature_dim: int = NUM_FEATURES):
        self.capacity = capacity
        self.s = np.empty((capacity, feature_dim))
        self.a = np.empty(capacity, dtype=np.int64)
        self.r = np.empty(capacity)
        self.c = np.empty((capacity, NUM_CUMULANTS))
        self.s_next = np.empty((capacity, feature_dim))
        self.terminal = np.empty(capacity, dtype=bool)
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push_block(self, s, a, r, c, s_next, terminal) -> None:
        k = len(a)
        if k > self.capacity:
            raise ValueError("block larger than buffer capacity")
        idx = (self._head + np.arange(k)) % self.capacity
        self.s[idx] = s
        self.a[idx] = a
        self.r[idx] = r
        self.c[idx] = c
        self.s_next[idx] = s_next
        self.terminal[idx] = terminal
        self._head = (self._head + k) % self.capacity
        self._size = min(self._size + k, self.capacity)

    def sample(self, rng: np.random.Generator, batch: int):
        if self._size < batch:
            raise ValueError("buffer smaller than the requested batch")
        idx = rng.integers(0, self._size, size=batch)
        return (self.s[idx], self.a[idx], self.r[idx], self.c[idx],
                self.s_next[idx], self.terminal[idx])


@dataclass(frozen=True)
class ExplorationSchedule:
    """Linear epsilon anneal over the first ``anneal_frac`` of episodes."""

    eps_start: float = 1.0
    eps_end: float = 0.05
    anneal_frac: float = 0.5

    def value(self, episode: int, total_episodes: int) -> float:
        span = max(1.0, self.anneal_frac * total_episodes)
        frac = min(1.0, episode / span)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class AgentBundle:
    variant: str
    config: nn.MlpConfig
    params: nn.MlpParams
    target: nn.MlpParams
    opt: nn.AdamState
    buffer: ReplayBuffer
    schedule: ExplorationSchedule
    rng: np.random.Generator
    gamma: float = 0.99
    batch_size: int = 64
    train_every: int = 4
    target_sync: int = 500
    train_steps: int = 0
    episodes_seen: int = 0

    @property
    def gvf_heads_enabled(self) -> bool:
        return self.variant in ("dqn_gvf", "dez_dqn_gvf")

    @property
    def dez_enabled(self) -> bool:
        return self.variant == "dez_dqn_gvf"

    @property
    def head_mask(self) -> np.ndarray:
        mask = np.zeros(self.config.num_heads, dtype=bool)
        mask[0] = True
        if self.gvf_heads_enabled:
            mask[1:1 + NUM_GVFS] = True
        return mask


def make_bundle(variant: str, seed: int, lr: float = 1e-3,
                gamma: float = 0.99, buffer_capacity: int = 100_000,
                batch_size: int = 64, train_every: int = 4,
                target_sync: int = 500,
                hidden_dims: tuple[int, ...] = (64, 64),
                schedule: ExplorationSchedule | None = None) -> AgentBundle:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected {VARIANTS}")
    cfg = nn.MlpConfig(input_dim=NUM_FEATURES, hidden_dims=hidden_dims,
                       num_heads=1 + NUM_GVFS, num_actions=NUM_ACTIONS)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, VARIANTS.index(variant)])))
    params = nn.init_params(cfg, rng)
    return AgentBundle(
        variant=variant, config=cfg, params=params, target=params.copy(),
        opt=nn.AdamState(params, lr=lr),
        buffer=ReplayBuffer(buffer_capacity),
        schedule=schedule or ExplorationSchedule(),
        rng=rng, gamma=gamma, batch_size=batch_size,
        train_every=train_every, target_sync=target_sync)


# ------------------------------------------------------------- action choice

def select_actions(params: nn.MlpParams, feats: np.ndarray, epsilon: float,
                   mode: str, rng: np.random.Generator):
    """Pick one action per feature row.

    Returns (action indices, source tags, stacked head values). Greedy
    choices break ties toward the lowest action index. The exploration
    decision is re-made every call (persistence one).
    """
    qs = nn.head_values(params, feats)
    p = feats.shape[0] if feats.ndim == 2 else 1
    actions = np.argmax(qs[0], axis=1)
    tags = np.full(p, TAG_MAIN, dtype=np.int64)

    explore = rng.random(p) < epsilon
    if explore.any():
        if mode == "epsilon_greedy":
            k = int(explore.sum())
            actions[explore] = rng.integers(0, NUM_ACTIONS, size=k)
            tags[explore] = TAG_RANDOM
        elif mode == "dez_greedy":
            g = rng.integers(0, NUM_GVFS + 1, size=p)
            uniform = explore & (g == 0)
            if uniform.any():
                actions[uniform] = rng.integers(0, NUM_ACTIONS,
                                                size=int(uniform.sum()))
                tags[uniform] = TAG_RANDOM
            for k in range(1, NUM_GVFS + 1):
                chosen = explore & (g == k)
                if chosen.any():
                    actions[chosen] = np.argmin(qs[k][chosen], axis=1)
                    tags[chosen] = TAG_RANDOM + k
        else:
            raise ValueError(f"unknown exploration mode {mode!r}")
    return actions, tags, qs


def select_action(params: nn.MlpParams, s: np.ndarray, epsilon: float,
                  mode: str, rng: np.random.Generator):
    """Single-state version; returns (action index, source tag)."""
    actions, tags, _ = select_actions(params, np.atleast_2d(s), epsilon,
                                      mode, rng)
    return int(actions[0]), int(tags[0])


def exploration_mode(bundle: AgentBundle) -> str:
    return "dez_greedy" if bundle.dez_enabled else "epsilon_greedy"


# ----------------------------------------------------------------- learning

def td_targets(bundle: AgentBundle, batch) -> np.ndarray:
    """Per-head bootstrap targets, shape (num_heads, batch).

    The main head bootstraps with a max (reward maximization); GVF heads
    bootstrap with a min, matching their greedy-minimizing policies.
    """
    s, a, r, c, s_next, terminal = batch
    qs_next = nn.head_values(bundle.target, s_next)
    cont = np.where(terminal, 0.0, bundle.gamma)
    targets = np.empty((bundle.config.num_heads, len(a)))
    targets[0] = r + cont * qs_next[0].max(axis=1)
    for k in range(1, 1 + NUM_GVFS):
        targets[k] = c[:, k - 1] + cont * qs_next[k].min(axis=1)
    return targets


def train_step(bundle: AgentBundle, batch=None):
    """One gradient step on the masked heads; syncs the target periodically.

    Returns the loss record, or None when the buffer cannot fill a batch.
    """
    if batch is None:
        if len(bundle.buffer) < bundle.batch_size:
            return None
        batch = bundle.buffer.sample(bundle.rng, bundle.batch_size)
    s, a = batch[0], batch[1]
    targets = td_targets(bundle, batch)
    loss, grads = nn.backward(bundle.params, s, a, targets, bundle.head_mask)
    bundle.opt.step(bundle.params, grads)
    bundle.train_steps += 1
    if bundle.train_steps % bundle.target_sync == 0:
        bundle.target = bundle.params.copy()
    return {"loss": loss, "train_steps": bundle.train_steps}


# ----------------------------------------------------------------- episodes

@dataclass(frozen=True)
class EpisodeMetrics:
    """Per-episode means of the reward and its components."""

    episode: int
    mean_business_reward: float
    mean_empty: float
    mean_critical: float
    mean_wastage: float
    mean_spread: float
    mean_refused: float
    mean_capacity_penalty: float
    epsilon: float

    COLUMNS = ("episode", "mean_business_reward", "mean_empty",
               "mean_critical", "mean_wastage", "mean_spread",
               "mean_refused", "mean_capacity_penalty", "epsilon")

    def as_row(self):
        return [getattr(self, c) for c in self.COLUMNS]


@dataclass
class DecisionLog:
    """Flat per-(period, product) record of evaluation decisions."""

    period: list = field(default_factory=list)
    product: list = field(default_factory=list)
    inventory: list = field(default_factory=list)
    order: list = field(default_factory=list)       # realized demand
    action_index: list = field(default_factory=list)
    action_value: list = field(default_factory=list)
    tag: list = field(default_factory=list)
    gvf1: list = field(default_factory=list)
    gvf2: list = field(default_factory=list)
    gvf3: list = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.concatenate(v) if isinstance(v[0], np.ndarray)
                else np.asarray(v)
                for k, v in self.__dict__.items()}


def run_episode(bundle: AgentBundle, sim: Simulator, start: int, length: int,
                x0: np.ndarray, mode: str = "train", epsilon: float = 0.0,
                episode_index: int = 0, decision_log: DecisionLog | None = None,
                executed_out: np.ndarray | None = None) -> EpisodeMetrics:
    """One pass over a demand window with shared parameters across products.

    Train mode stores one transition per product per period and trains every
    ``train_every`` periods; eval mode acts greedily and leaves the bundle
    untouched.
    """
    if start + length > sim.horizon:
        raise ValueError("window extends past the demand data")
    train = mode == "train"
    p = sim.catalog.num_products
    sim.reset(x0, start)
    sel_mode = exploration_mode(bundle)
    eps = epsilon if train else 0.0

    totals = np.zeros(7)  # reward, empty, critical, wastage, spread, refused, cap
    feats = sim.features()
    for k in range(length):
        actions, tags, qs = select_actions(bundle.params, feats, eps,
                                           sel_mode, bundle.rng)
        out = sim.step(ACTION_SET[actions])
        next_feats = sim.features()

        totals += (out.business_reward, out.b_empty.mean(),
                   out.b_critical.mean(), out.q_waste.mean(), out.spread,
                   out.refused.mean(), out.capacity_penalty)

        if train:
            bundle.buffer.push_block(feats, actions, out.per_product_rewards,
                                     out.cumulants.T, next_feats,
                                     k == length - 1)
            if k % bundle.train_every == 0:
                train_step(bundle)

        if decision_log is not None:
            rows = np.arange(p)
            decision_log.period.append(np.full(p, start + k))
            decision_log.product.append(rows.copy())
            decision_log.inventory.append(feats[:, 0].copy())
            decision_log.order.append(sim.demand[start + k].copy())
            decision_log.action_index.append(actions.copy())
            decision_log.action_value.append(ACTION_SET[actions])
            decision_log.tag.append(tags.copy())
            decision_log.gvf1.append(qs[1][rows, actions])
            decision_log.gvf2.append(qs[2][rows, actions])
            decision_log.gvf3.append(qs[3][rows, actions])

        if executed_out is not None:
            executed_out[k] = out.executed
        feats = next_feats

    if train:
        bundle.episodes_seen += 1
    means = totals / length
    return EpisodeMetrics(
        episode=episode_index, mean_business_reward=means[0],
        mean_empty=means[1], mean_critical=means[2], mean_wastage=means[3],
        mean_spread=means[4], mean_refused=means[5],
        mean_capacity_penalty=means[6], epsilon=eps)


def train_agent(bundle: AgentBundle, sim: Simulator, episodes: int,
                start: int, length: int, x0_provider,
                total_for_schedule: int | None = None) -> list[EpisodeMetrics]:
    """Run a seeded training campaign; ``x0_provider(episode) -> x0``."""
    total = total_for_schedule or episodes
    history = []
    for ep in range(episodes):
        eps = bundle.schedule.value(ep, total)
        history.append(run_episode(bundle, sim, start, length,
                                   x0_provider(ep), mode="train", epsilon=eps,
                                   episode_index=ep))
    return history


def fine_tune(bundle: AgentBundle, sim: Simulator, episodes: int, start: int,
              length: int, x0_provider,
              epsilon: float = 0.1) -> list[EpisodeMetrics]:
    """Continue training under (possibly modified) rewards at constant eps."""
    history = []
    for ep in range(episodes):
        history.append(run_episode(bundle, sim, start, length,
                                   x0_provider(ep), mode="train",
                                   epsilon=epsilon, episode_index=ep))
    return history


# -------------------------------------------------------------- checkpoints

def save_agent(path, bundle: AgentBundle) -> None:
    meta = {"variant": bundle.variant,
            "episodes_seen": bundle.episodes_seen,
            "train_steps": bundle.train_steps,
            "gamma": bundle.gamma}
    nn.save_checkpoint(path, bundle.params, bundle.config, metadata=meta)


def load_agent(path, seed: int = 0, **bundle_kwargs) -> AgentBundle:
    """Restore a trained policy into a fresh bundle (optimizer reset)."""
    params, cfg, meta = nn.load_checkpoint(path)
    bundle = make_bundle(meta["variant"], seed=seed,
                         gamma=meta.get("gamma", 0.99), **bundle_kwargs)
    bundle.config = cfg
    bundle.params = params
    bundle.target = params.copy()
    bundle.opt = nn.AdamState(params, lr=bundle.opt.lr)
    bundle.episodes_seen = meta.get("episodes_seen", 0)
    bundle.train_steps = 0
    return bundle
