"""Feed-forward regressor built on numpy.

Each hidden block is ``affine -> batch norm -> ReLU -> dropout``.  The head is an
affine map followed by a sigmoid rescaled onto a per-output ``(low, high)`` range,
so predictions always land strictly inside the prior box.

Parameters live in a flat ``dict[str, ndarray]``::

    h{i}.W, h{i}.b, h{i}.gamma, h{i}.beta      trainable
    h{i}.running_mean, h{i}.running_var        buffers
    out.W, out.b                               trainable

Weights are stored ``(fan_in, fan_out)`` and applied as ``x @ W``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRAIN = "train"
EVAL = "eval"


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int = 5
    hidden_dims: tuple[int, ...] = (128, 256, 128)
    output_dim: int = 2
    dropout_p: float = 0.1
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    output_ranges: tuple[tuple[float, float], ...] = ((0.3, 0.9), (0.8, 1.2))

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        object.__setattr__(self, "output_ranges",
                           tuple((float(lo), float(hi)) for lo, hi in self.output_ranges))
        if len(self.output_ranges) != self.output_dim:
            raise ValueError("need one output range per output")
        if any(not lo < hi for lo, hi in self.output_ranges):
            raise ValueError("output ranges must have low < high")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must lie in [0, 1)")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "dropout_p": self.dropout_p,
            "bn_momentum": self.bn_momentum,
            "bn_eps": self.bn_eps,
            "output_ranges": [list(r) for r in self.output_ranges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["hidden_dims"] = tuple(d["hidden_dims"])
        d["output_ranges"] = tuple(tuple(r) for r in d["output_ranges"])
        return cls(**d)


MlpParams = dict  # name -> ndarray; see module docstring


def is_buffer(name: str) -> bool:
    return name.endswith(".running_mean") or name.endswith(".running_var")


def is_weight(name: str) -> bool:
    return name.endswith(".W")


def trainable_names(params: MlpParams) -> list[str]:
    return [k for k in params if not is_buffer(k)]


def init_network(cfg: NetworkConfig, rng: np.random.Generator) -> MlpParams:
    """He-uniform weights, zero biases, identity batch norm."""
    params: MlpParams = {}
    dims = cfg.layer_dims
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-2], dims[1:-1])):
        bound = np.sqrt(6.0 / fan_in)
        params[f"h{i}.W"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"h{i}.b"] = np.zeros(fan_out)
        params[f"h{i}.gamma"] = np.ones(fan_out)
        params[f"h{i}.beta"] = np.zeros(fan_out)
        params[f"h{i}.running_mean"] = np.zeros(fan_out)
        params[f"h{i}.running_var"] = np.ones(fan_out)
    fan_in = dims[-2]
    bound = np.sqrt(6.0 / fan_in)
    params["out.W"] = rng.uniform(-bound, bound, size=(fan_in, dims[-1]))
    params["out.b"] = np.zeros(dims[-1])
    return params


def copy_params(params: MlpParams) -> MlpParams:
    return {k: v.copy() for k, v in params.items()}


def _ranges(cfg: NetworkConfig):
    r = np.asarray(cfg.output_ranges, dtype=float)
    return r[:, 0], r[:, 1]


def _sigmoid(z):
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(params: MlpParams, cfg: NetworkConfig, x: np.ndarray, mode: str = EVAL,
            rng: np.random.Generator | None = None, update_stats: bool = True):
    """Run the network on a batch.  Returns ``(predictions, cache)``.

    In train mode batch norm normalizes with batch statistics (and, when
    ``update_stats`` is set, folds them into the running buffers) and dropout
    is applied if ``rng`` is given.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ShapeMismatch(f"expected (n, {cfg.input_dim}) input, got {x.shape}")
    train = mode == TRAIN
    if train and x.shape[0] < 2:
        raise ShapeMismatch("batch norm needs at least 2 samples in train mode")
    p_drop = cfg.dropout_p if (train and rng is not None) else 0.0
    keep = 1.0 - p_drop
    cache = {"layers": [], "mode": mode}
    a = x
    for i in range(len(cfg.hidden_dims)):
        W, b = params[f"h{i}.W"], params[f"h{i}.b"]
        gamma, beta = params[f"h{i}.gamma"], params[f"h{i}.beta"]
        z = a @ W + b
        if train:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            if update_stats:
                n = z.shape[0]
                m = cfg.bn_momentum
                rm, rv = params[f"h{i}.running_mean"], params[f"h{i}.running_var"]
                rm *= 1.0 - m
                rm += m * mu
                rv *= 1.0 - m
                rv += m * var * n / (n - 1)
        else:
            mu = params[f"h{i}.running_mean"]
            var = params[f"h{i}.running_var"]
        inv_std = 1.0 / np.sqrt(var + cfg.bn_eps)
        zhat = (z - mu) * inv_std
        r = np.maximum(gamma * zhat + beta, 0.0)
        if p_drop > 0.0:
            mask = (rng.random(r.shape) < keep) / keep
            r = r * mask
        else:
            mask = None
        cache["layers"].append((a, zhat, inv_std, r, mask))
        a = r
    z_out = a @ params["out.W"] + params["out.b"]
    s = _sigmoid(z_out)
    low, high = _ranges(cfg)
    span = high - low
    # saturated sigmoids would otherwise round onto (or past) the range ends
    pred = np.clip(low + span * s, np.nextafter(low, high), np.nextafter(high, low))
    cache["head"] = (a, s, span)
    return pred, cache


def predict(params: MlpParams, cfg: NetworkConfig, x: np.ndarray) -> np.ndarray:
    return forward(params, cfg, x, EVAL)[0]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    return 2.0 * (pred - target) / pred.size


def backward(params: MlpParams, cache: dict, dpred: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every trainable tensor.

    ``dpred`` is dL/d(predictions).  Batch-norm gradients include the
    dependence of the batch mean and variance on the inputs.
    """
    if cache["mode"] != TRAIN:
        raise ValueError("backward needs a train-mode forward cache")
    grads = {}
    a, s, span = cache["head"]
    dz = dpred * span * s * (1.0 - s)
    grads["out.W"] = a.T @ dz
    grads["out.b"] = dz.sum(axis=0)
    da = dz @ params["out.W"].T
    for i in reversed(range(len(cache["layers"]))):
        a_in, zhat, inv_std, r, mask = cache["layers"][i]
        if mask is not None:
            da = da * mask
        dr = da * (r > 0.0)
        grads[f"h{i}.beta"] = dr.sum(axis=0)
        grads[f"h{i}.gamma"] = (dr * zhat).sum(axis=0)
        dzhat = dr * params[f"h{i}.gamma"]
        n = zhat.shape[0]
        dz = (inv_std / n) * (n * dzhat - dzhat.sum(axis=0)
                              - zhat * (dzhat * zhat).sum(axis=0))
        grads[f"h{i}.W"] = a_in.T @ dz
        grads[f"h{i}.b"] = dz.sum(axis=0)
        da = dz @ params[f"h{i}.W"].T
    return grads
