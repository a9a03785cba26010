"""Experiment orchestration: seeded runs, transfer, heatmaps, summaries.

A run directory is fully determined by its manifest: re-executing the
manifest reproduces every metrics CSV byte for byte. Wall-clock timings are
kept out of the metrics files (they land in ``timings.json``) so the
determinism contract stays checkable.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, agents, baselines, datagen
from .agents import DecisionLog, EpisodeMetrics
from .config import ExperimentConfig, RewardMod, config_hash
from .env import RewardParams, Simulator

MANIFEST_NAME = "manifest.json"

# purposes for deriving initial-inventory seeds; shared across algorithms
_PURPOSE_TRAIN, _PURPOSE_EVAL, _PURPOSE_FINETUNE = 0, 1, 2


def episode_inventories(p: int, seed: int, purpose: int, episode: int) -> np.ndarray:
    """Initial inventories for (seed, episode), identical for every algorithm."""
    return datagen.initial_inventories(
        p, np.random.SeedSequence([seed, purpose, episode]))


def reward_params(cfg: ExperimentConfig) -> RewardParams:
    return RewardParams(alpha=cfg.env.alpha,
                        wastage_weight=cfg.reward_mod.wastage_weight,
                        critical_override=cfg.reward_mod.critical_override)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = list(reader)
    return columns, rows


def metrics_to_rows(history: list[EpisodeMetrics]):
    return [m.as_row() for m in history]


def heuristic_metrics(sim: Simulator, start: int, length: int,
                      x0: np.ndarray, target: float,
                      episode: int = 0) -> tuple[EpisodeMetrics, np.ndarray]:
    rewards, means, executed = baselines.run_heuristic_episode(
        sim, start, length, x0, target)
    metrics = EpisodeMetrics(
        episode=episode, mean_business_reward=float(rewards.mean()),
        mean_empty=means["empty"], mean_critical=means["critical"],
        mean_wastage=means["wastage"], mean_spread=means["spread"],
        mean_refused=means["refused"],
        mean_capacity_penalty=means["capacity_penalty"], epsilon=0.0)
    return metrics, executed


def make_bundle_from_config(cfg: ExperimentConfig, seed: int) -> agents.AgentBundle:
    a = cfg.agent
    return agents.make_bundle(
        cfg.algorithm, seed=seed, lr=a.lr, gamma=a.gamma,
        buffer_capacity=a.buffer_capacity, batch_size=a.batch_size,
        train_every=a.train_every, target_sync=a.target_sync,
        hidden_dims=a.hidden_dims,
        schedule=agents.ExplorationSchedule(a.eps_start, a.eps_end,
                                            a.anneal_frac))


DECISION_COLUMNS = ("period", "product", "inventory", "order", "action_index",
                    "action_value", "tag", "gvf1", "gvf2", "gvf3")
EVAL_COLUMNS = ("window_start", "window_len") + EpisodeMetrics.COLUMNS
LP_COLUMNS = ("window", "window_start", "window_len", "status",
              "mean_surrogate", "mean_true_reward", "iterations")


def _write_decisions(path, log: DecisionLog) -> None:
    arrays = log.arrays()
    rows = zip(*(arrays[c] for c in DECISION_COLUMNS))
    write_csv(path, DECISION_COLUMNS, rows)


def read_decisions(path) -> dict[str, np.ndarray]:
    columns, rows = read_csv(path)
    if not rows:
        raise ValueError(f"{path}: empty decision log")
    data = np.array(rows, dtype=object)
    out = {}
    for k, c in enumerate(columns):
        col = data[:, k]
        if c in ("period", "product", "action_index", "tag"):
            out[c] = col.astype(int)
        else:
            out[c] = col.astype(float)
    return out


def run_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """Train/evaluate one algorithm on one dataset across seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = datagen.load(cfg.dataset)
    p = ds.spec.products

    manifest = {
        "format": 1,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "dataset_header": {"products": p, "horizon": ds.spec.horizon,
                           "train_len": ds.spec.train_len,
                           "seed": ds.spec.seed, "theta": ds.spec.theta},
    }
    with open(out / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")

    timings = {}
    for seed in cfg.seeds:
        t0 = time.monotonic()
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        _run_seed(cfg, ds, seed, seed_dir)
        timings[f"seed_{seed}"] = time.monotonic() - t0
    with open(out / "timings.json", "w") as fh:
        json.dump(timings, fh, indent=2)
        fh.write("\n")
    return out


def _run_seed(cfg: ExperimentConfig, ds, seed: int, seed_dir: Path) -> None:
    p = ds.spec.products
    rparams = reward_params(cfg)
    sim = Simulator(ds.catalog, ds.demand, rparams,
                    forecast_window=cfg.env.forecast_window)
    train_start, train_len = ds.train_window
    test_start, test_len = ds.test_window
    x0_eval = episode_inventories(p, seed, _PURPOSE_EVAL, 0)

    if cfg.algorithm == "lp_bound":
        rows = []
        for label, (start, length) in (("train", ds.train_window),
                                       ("test", ds.test_window)):
            res = baselines.lp_upper_bound(
                ds.catalog, x0_eval, ds.demand[start:start + length],
                engine=cfg.lp_engine, max_iters=cfg.lp_max_iters,
                time_limit=cfg.lp_time_limit, reward=rparams)
            rows.append([label, start, length, res.status,
                         "" if res.mean_surrogate is None else res.mean_surrogate,
                         "" if res.mean_true_reward is None else res.mean_true_reward,
                         res.iterations])
        write_csv(seed_dir / "lp_bound.csv", LP_COLUMNS, rows)
        return

    if cfg.algorithm == "heuristic":
        train_m, _ = heuristic_metrics(sim, train_start, train_len,
                                       episode_inventories(p, seed,
                                                           _PURPOSE_TRAIN, 0),
                                       cfg.heuristic_target)
        write_csv(seed_dir / "train_metrics.csv", EpisodeMetrics.COLUMNS,
                  [train_m.as_row()])
        eval_m, _ = heuristic_metrics(sim, test_start, test_len, x0_eval,
                                      cfg.heuristic_target)
        write_csv(seed_dir / "eval_metrics.csv", EVAL_COLUMNS,
                  [[test_start, test_len, *eval_m.as_row()]])
        return

    # RL variants
    bundle = make_bundle_from_config(cfg, seed)
    history = agents.train_agent(
        bundle, sim, cfg.episodes, train_start, train_len,
        x0_provider=lambda ep: episode_inventories(p, seed, _PURPOSE_TRAIN, ep))
    write_csv(seed_dir / "train_metrics.csv", EpisodeMetrics.COLUMNS,
              metrics_to_rows(history))

    log = DecisionLog() if cfg.collect_decisions else None
    eval_m = agents.run_episode(bundle, sim, test_start, test_len, x0_eval,
                                mode="eval", decision_log=log)
    write_csv(seed_dir / "eval_metrics.csv", EVAL_COLUMNS,
              [[test_start, test_len, *eval_m.as_row()]])
    if log is not None:
        _write_decisions(seed_dir / "decisions.csv", log)
    agents.save_agent(seed_dir / "checkpoint.npz", bundle)


def replay_manifest(run_dir, out_dir) -> Path:
    """Re-execute a run from its manifest into a fresh directory."""
    with open(Path(run_dir) / MANIFEST_NAME) as fh:
        manifest = json.load(fh)
    cfg = ExperimentConfig.from_dict(manifest["config"])
    return run_experiment(cfg, out_dir)


# ----------------------------------------------------------------- transfer

def evaluate_checkpoint(checkpoint_path, dataset, seed: int,
                        env_params=None, reward_mod: RewardMod = RewardMod(),
                        collect_decisions: bool = False):
    """Greedy evaluation of a stored policy on a dataset's test window.

    Works unchanged across datasets because the observation is per-product
    and normalized; evaluating on the native dataset reproduces the run's
    own eval row exactly.
    """
    ds = dataset if isinstance(dataset, datagen.Dataset) else datagen.load(dataset)
    p = ds.spec.products
    bundle = agents.load_agent(checkpoint_path, seed=seed)
    forecast_window = env_params.forecast_window if env_params else 8
    alpha = env_params.alpha if env_params else 1.0
    rparams = RewardParams(alpha=alpha,
                           wastage_weight=reward_mod.wastage_weight,
                           critical_override=reward_mod.critical_override)
    sim = Simulator(ds.catalog, ds.demand, rparams,
                    forecast_window=forecast_window)
    test_start, test_len = ds.test_window
    x0 = episode_inventories(p, seed, _PURPOSE_EVAL, 0)
    log = DecisionLog() if collect_decisions else None
    metrics = agents.run_episode(bundle, sim, test_start, test_len, x0,
                                 mode="eval", decision_log=log)
    return metrics, log


def evaluate_transfer(checkpoint_path, dataset, seed: int,
                      env_params=None) -> float:
    metrics, _ = evaluate_checkpoint(checkpoint_path, dataset, seed,
                                     env_params=env_params)
    return metrics.mean_business_reward


def transfer_rows(run_dir, dataset_path, env_params=None):
    """Evaluate every seed checkpoint of a run on a foreign dataset."""
    run_dir = Path(run_dir)
    with open(run_dir / MANIFEST_NAME) as fh:
        manifest = json.load(fh)
    cfg = ExperimentConfig.from_dict(manifest["config"])
    ds = datagen.load(dataset_path)
    rows = []
    for seed in cfg.seeds:
        ckpt = run_dir / f"seed_{seed}" / "checkpoint.npz"
        reward = evaluate_transfer(ckpt, ds, seed, env_params=env_params)
        rows.append([cfg.algorithm, cfg.dataset, str(dataset_path), seed,
                     reward])
    return rows


TRANSFER_COLUMNS = ("algorithm", "trained_on", "evaluated_on", "seed",
                    "mean_business_reward")


# ----------------------------------------------------------------- heatmaps

#: bin labels are right edges; a label covers (label - width, label]
INV_EDGES = np.round(np.arange(0.1, 1.01, 0.1), 10)
ORDER_EDGES = np.round(np.arange(0.05, 1.001, 0.05), 10)


@dataclass(frozen=True)
class HeatmapGrid:
    kind: str
    inv_edges: np.ndarray
    order_edges: np.ndarray
    mean: np.ndarray    # (inv bins, order bins); NaN where no samples
    count: np.ndarray

    def populated(self) -> int:
        return int((self.count > 0).sum())


def _bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.clip(np.searchsorted(edges, values, side="left"),
                   0, len(edges) - 1)


def extract_heatmaps(decisions: dict[str, np.ndarray]) -> dict[str, HeatmapGrid]:
    """Bin decisions by (inventory, realized order) and average values.

    Returns a grid for the chosen replenishment quantity plus one per GVF
    head prediction of the chosen action.
    """
    if len(decisions.get("inventory", ())) == 0:
        raise ValueError("empty decision log")
    inv_idx = _bin_index(decisions["inventory"], INV_EDGES)
    ord_idx = _bin_index(decisions["order"], ORDER_EDGES)
    shape = (len(INV_EDGES), len(ORDER_EDGES))
    count = np.zeros(shape)
    np.add.at(count, (inv_idx, ord_idx), 1.0)

    grids = {}
    for kind, column in (("policy", "action_value"), ("gvf1", "gvf1"),
                         ("gvf2", "gvf2"), ("gvf3", "gvf3")):
        total = np.zeros(shape)
        np.add.at(total, (inv_idx, ord_idx), decisions[column])
        with np.errstate(invalid="ignore"):
            mean = np.where(count > 0, total / np.maximum(count, 1.0), np.nan)
        grids[kind] = HeatmapGrid(kind=kind, inv_edges=INV_EDGES,
                                  order_edges=ORDER_EDGES, mean=mean,
                                  count=count.copy())
    return grids


HEATMAP_COLUMNS = ("grid", "inventory_bin", "order_bin", "mean_value", "count")


def heatmap_rows(grids: dict[str, HeatmapGrid]):
    rows = []
    for kind, grid in grids.items():
        for i, inv_edge in enumerate(grid.inv_edges):
            for j, order_edge in enumerate(grid.order_edges):
                if grid.count[i, j] > 0:
                    rows.append([kind, inv_edge, order_edge,
                                 grid.mean[i, j], int(grid.count[i, j])])
    return rows


def order_monotonicity(grid: HeatmapGrid) -> tuple[int, int]:
    """(non-decreasing pairs, total pairs) across adjacent populated order
    bins at fixed inventory bin."""
    good = total = 0
    for i in range(grid.mean.shape[0]):
        row_counts = grid.count[i]
        for j in range(grid.mean.shape[1] - 1):
            if row_counts[j] > 0 and row_counts[j + 1] > 0:
                total += 1
                if grid.mean[i, j + 1] >= grid.mean[i, j] - 1e-12:
                    good += 1
    return good, total


# ---------------------------------------------------------------- fine-tune

FINETUNE_COLUMNS = ("algorithm", "seed", "episode", "mean_business_reward",
                    "mean_empty", "mean_critical", "mean_wastage",
                    "mean_spread", "mean_refused", "mean_capacity_penalty",
                    "epsilon")


def run_finetune_suite(run_dirs: dict[str, Path], dataset_path,
                       reward_mod: RewardMod, out_path,
                       episodes: int = 100, epsilon: float = 0.1,
                       env_params=None) -> Path:
    """Fine-tune stored checkpoints under a modified reward.

    ``run_dirs`` maps algorithm name to its pretraining run directory; all
    algorithms and seeds share per-episode initial inventories.
    """
    ds = datagen.load(dataset_path)
    p = ds.spec.products
    forecast_window = env_params.forecast_window if env_params else 8
    alpha = env_params.alpha if env_params else 1.0
    rparams = RewardParams(alpha=alpha,
                           wastage_weight=reward_mod.wastage_weight,
                           critical_override=reward_mod.critical_override)
    train_start, train_len = ds.train_window

    rows = []
    for algorithm, run_dir in run_dirs.items():
        run_dir = Path(run_dir)
        with open(run_dir / MANIFEST_NAME) as fh:
            cfg = ExperimentConfig.from_dict(json.load(fh)["config"])
        if cfg.algorithm != algorithm:
            raise ValueError(f"{run_dir} holds {cfg.algorithm!r}, "
                             f"not {algorithm!r}")
        for seed in cfg.seeds:
            ckpt = run_dir / f"seed_{seed}" / "checkpoint.npz"
            bundle = agents.load_agent(
                ckpt, seed=seed, lr=cfg.agent.lr,
                buffer_capacity=cfg.agent.buffer_capacity,
                batch_size=cfg.agent.batch_size,
                train_every=cfg.agent.train_every,
                target_sync=cfg.agent.target_sync,
                hidden_dims=cfg.agent.hidden_dims)
            sim = Simulator(ds.catalog, ds.demand, rparams,
                            forecast_window=forecast_window)
            history = agents.fine_tune(
                bundle, sim, episodes, train_start, train_len,
                x0_provider=lambda ep: episode_inventories(
                    p, seed, _PURPOSE_FINETUNE, ep),
                epsilon=epsilon)
            for m in history:
                rows.append([algorithm, seed, *m.as_row()])
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out_path, FINETUNE_COLUMNS, rows)
    return out_path


# ------------------------------------------------------------------ summary

SUMMARY_COLUMNS = ("dataset", "algorithm", "split", "mean", "ci95_halfwidth",
                   "seeds")


def t_interval_halfwidth(values) -> float:
    """95% t-interval half-width over per-seed results."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        return 0.0
    sd = values.std(ddof=1)
    if sd == 0.0:
        return 0.0
    return float(stats.t.ppf(0.975, n - 1) * sd / np.sqrt(n))


def _train_score(columns, rows, window: int = 100) -> float:
    k = columns.index("mean_business_reward")
    vals = [float(r[k]) for r in rows[-window:]]
    return float(np.mean(vals))


def summarize(run_dirs, out_path=None):
    """Per-run train/test means with 95% confidence intervals."""
    summary = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        with open(run_dir / MANIFEST_NAME) as fh:
            manifest = json.load(fh)
        cfg = ExperimentConfig.from_dict(manifest["config"])
        dataset = cfg.dataset
        if cfg.algorithm == "lp_bound":
            per_window: dict[str, list[float]] = {"train": [], "test": []}
            for seed in cfg.seeds:
                cols, rows = read_csv(run_dir / f"seed_{seed}" / "lp_bound.csv")
                ik = cols.index("mean_surrogate")
                wk = cols.index("window")
                for r in rows:
                    if r[ik] != "":
                        per_window[r[wk]].append(float(r[ik]))
            for split in ("train", "test"):
                vals = per_window[split]
                if vals:
                    summary.append([dataset, cfg.algorithm, split,
                                    float(np.mean(vals)),
                                    t_interval_halfwidth(vals), len(vals)])
            continue
        train_scores, test_scores = [], []
        for seed in cfg.seeds:
            cols, rows = read_csv(run_dir / f"seed_{seed}" / "train_metrics.csv")
            train_scores.append(_train_score(cols, rows))
            cols, rows = read_csv(run_dir / f"seed_{seed}" / "eval_metrics.csv")
            k = cols.index("mean_business_reward")
            test_scores.append(float(rows[0][k]))
        summary.append([dataset, cfg.algorithm, "train",
                        float(np.mean(train_scores)),
                        t_interval_halfwidth(train_scores), len(train_scores)])
        summary.append([dataset, cfg.algorithm, "test",
                        float(np.mean(test_scores)),
                        t_interval_halfwidth(test_scores), len(test_scores)])
    if out_path is not None:
        write_csv(out_path, SUMMARY_COLUMNS, summary)
    return summary
