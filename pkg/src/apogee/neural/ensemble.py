"""Bootstrap deep-ensemble training and the on-disk model format."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ..synthgen import (STREAM_BOOTSTRAP, STREAM_INIT, STREAM_MISC, STREAM_TRAIN, Dataset,
                        NormStats, normalize, rng_stream)
from .network import (EVAL, TRAIN, NetworkConfig, backward, copy_params, forward,
                      init_network, is_weight, mse_grad, mse_loss, trainable_names)
from .optim import AdamState, PlateauScheduler, adamw_step

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 256
    epochs: int = 100
    scheduler_patience: int = 10
    scheduler_factor: float = 0.5
    min_lr: float = 1e-6
    ensemble_size: int = 5
    # used only when no explicit validation set is supplied
    validation_fraction: float = 0.2

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "scheduler_patience",
                     "scheduler_factor", "min_lr", "ensemble_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class EnsembleModel:
    members: list[dict[str, np.ndarray]]
    norm: NormStats
    network_config: NetworkConfig
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")

    @property
    def size(self) -> int:
        return len(self.members)

    def member_predictions(self, features: np.ndarray) -> np.ndarray:
        """Eval-mode outputs for raw (unnormalized) features, shape ``(K, n, 2)``."""
        x = normalize(np.atleast_2d(features), self.norm)
        return np.stack([forward(p, self.network_config, x, EVAL)[0] for p in self.members])


def bootstrap_sample(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.integers(0, n, size=n)


def _batches(order: np.ndarray, batch_size: int):
    starts = list(range(0, len(order), batch_size))
    # a trailing batch of one cannot be batch-normalized; fold it into its neighbour
    if len(starts) > 1 and len(order) - starts[-1] == 1:
        starts.pop()
    bounds = starts[1:] + [len(order)]
    for s, e in zip(starts, bounds):
        yield order[s:e]


def train_member(x_train: np.ndarray, y_train: np.ndarray, x_val: np.ndarray,
                 y_val: np.ndarray, net_cfg: NetworkConfig, train_cfg: TrainConfig,
                 init_rng: np.random.Generator, train_rng: np.random.Generator):
    """Train one network on normalized features.

    Returns ``(params, history)`` where ``params`` are the weights from the epoch
    with the lowest validation loss.
    """
    with threadpool_limits(limits=1):
        params = init_network(net_cfg, init_rng)
        decayed = {k for k in params if is_weight(k)}
        names = trainable_names(params)
        opt = AdamState()
        sched = PlateauScheduler(train_cfg.learning_rate, train_cfg.scheduler_patience,
                                 train_cfg.scheduler_factor, train_cfg.min_lr)
        lr = train_cfg.learning_rate
        best_val, best_params = float("inf"), copy_params(params)
        history = []
        n = len(x_train)
        for epoch in range(1, train_cfg.epochs + 1):
            order = train_rng.permutation(n)
            total = 0.0
            for idx in _batches(order, train_cfg.batch_size):
                xb, yb = x_train[idx], y_train[idx]
                pred, cache = forward(params, net_cfg, xb, TRAIN, rng=train_rng)
                loss = mse_loss(pred, yb)
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite training loss at epoch {epoch}")
                grads = backward(params, cache, mse_grad(pred, yb))
                adamw_step(params, {k: grads[k] for k in names}, opt, lr,
                           train_cfg.weight_decay, decayed)
                total += loss * len(idx)
            val_loss = mse_loss(forward(params, net_cfg, x_val, EVAL)[0], y_val)
            if not np.isfinite(val_loss):
                raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
            history.append(EpochRecord(epoch, total / n, val_loss, lr))
            if val_loss < best_val:
                best_val, best_params = val_loss, copy_params(params)
            lr = sched.step(val_loss)
        return best_params, history


def _train_member_job(args):
    k, master_seed, x, y, x_val, y_val, net_cfg, train_cfg = args
    boot = bootstrap_sample(len(x), rng_stream(master_seed, STREAM_BOOTSTRAP, k))
    params, history = train_member(x[boot], y[boot], x_val, y_val, net_cfg, train_cfg,
                                   rng_stream(master_seed, STREAM_INIT, k),
                                   rng_stream(master_seed, STREAM_TRAIN, k))
    log.info("member %d: best val loss %.6g", k, min(h.val_loss for h in history))
    return params, history


def split_validation(dataset: Dataset, fraction: float, master_seed: int):
    """Deterministic train/validation split of one dataset."""
    n = len(dataset)
    n_val = max(1, int(round(n * fraction)))
    if n - n_val < 2:
        raise ValueError("dataset too small to split off a validation set")
    order = rng_stream(master_seed, STREAM_MISC, 0).permutation(n)
    train = Dataset([dataset.samples[i] for i in sorted(order[n_val:])], seed=dataset.seed)
    val = Dataset([dataset.samples[i] for i in sorted(order[:n_val])], seed=dataset.seed)
    return train.with_norm(), val


def train_ensemble(dataset: Dataset, val_set: Dataset | None = None,
                   net_cfg: NetworkConfig | None = None, train_cfg: TrainConfig | None = None,
                   master_seed: int = 0, workers: int = 1):
    """Train ``ensemble_size`` members on bootstrap resamples of ``dataset``.

    Returns ``(model, histories)``.  Each member draws from its own streams keyed
    by ``(master_seed, member)``, so results are identical for any ``workers``.
    """
    net_cfg = net_cfg or NetworkConfig()
    train_cfg = train_cfg or TrainConfig()
    if val_set is None:
        dataset, val_set = split_validation(dataset, train_cfg.validation_fraction, master_seed)
    norm = dataset.norm or NormStats.from_features(dataset.features)
    x = normalize(dataset.features, norm)
    y = dataset.targets
    x_val = normalize(val_set.features, norm)
    y_val = val_set.targets
    jobs = [(k, master_seed, x, y, x_val, y_val, net_cfg, train_cfg)
            for k in range(train_cfg.ensemble_size)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_train_member_job, jobs))
    else:
        out = [_train_member_job(j) for j in jobs]
    members = [p for p, _ in out]
    histories = [h for _, h in out]
    metadata = {
        "master_seed": int(master_seed),
        "train_config": asdict(train_cfg),
        "n_train": len(dataset),
        "n_motors": int(dataset.features[:, 1].max()) + 1,
        "n_val": len(val_set),
        "members": [
            {
                "member": k,
                "stream_keys": {"bootstrap": [STREAM_BOOTSTRAP, k], "init": [STREAM_INIT, k],
                                "train": [STREAM_TRAIN, k]},
                "best_epoch": min(h, key=lambda r: r.val_loss).epoch,
                "best_val_loss": min(r.val_loss for r in h),
                "final_train_loss": h[-1].train_loss,
                "final_val_loss": h[-1].val_loss,
            }
            for k, h in enumerate(histories)
        ],
    }
    return EnsembleModel(members, norm, net_cfg, metadata), histories


def _member_to_json(params: dict[str, np.ndarray], cfg: NetworkConfig) -> dict:
    layers = []
    for i in range(len(cfg.hidden_dims)):
        W = params[f"h{i}.W"]
        layers.append({
            "dims": list(W.shape),
            "weight": W.ravel().tolist(),
            "bias": params[f"h{i}.b"].tolist(),
            "bn_gamma": params[f"h{i}.gamma"].tolist(),
            "bn_beta": params[f"h{i}.beta"].tolist(),
            "bn_running_mean": params[f"h{i}.running_mean"].tolist(),
            "bn_running_var": params[f"h{i}.running_var"].tolist(),
        })
    W = params["out.W"]
    return {"layers": layers,
            "output": {"dims": list(W.shape), "weight": W.ravel().tolist(),
                       "bias": params["out.b"].tolist()}}


def _member_from_json(doc: dict) -> dict[str, np.ndarray]:
    params = {}
    for i, layer in enumerate(doc["layers"]):
        params[f"h{i}.W"] = np.asarray(layer["weight"], float).reshape(layer["dims"])
        params[f"h{i}.b"] = np.asarray(layer["bias"], float)
        params[f"h{i}.gamma"] = np.asarray(layer["bn_gamma"], float)
        params[f"h{i}.beta"] = np.asarray(layer["bn_beta"], float)
        params[f"h{i}.running_mean"] = np.asarray(layer["bn_running_mean"], float)
        params[f"h{i}.running_var"] = np.asarray(layer["bn_running_var"], float)
    out = doc["output"]
    params["out.W"] = np.asarray(out["weight"], float).reshape(out["dims"])
    params["out.b"] = np.asarray(out["bias"], float)
    return params


def model_to_dict(model: EnsembleModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "network_config": model.network_config.to_dict(),
        "norm": model.norm.to_dict(),
        "members": [_member_to_json(p, model.network_config) for p in model.members],
        "metadata": model.metadata,
    }


def model_from_dict(doc: dict) -> EnsembleModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    cfg = NetworkConfig.from_dict(doc["network_config"])
    members = [_member_from_json(m) for m in doc["members"]]
    return EnsembleModel(members, NormStats.from_dict(doc["norm"]), cfg,
                         doc.get("metadata", {}))


def save_model(model: EnsembleModel, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path: str | os.PathLike) -> EnsembleModel:
    return model_from_dict(json.loads(Path(path).read_text()))
