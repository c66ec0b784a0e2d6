"""Single-pass parameter estimation from an observed apogee."""

from __future__ import annotations

from dataclasses import dataclass

from .neural.ensemble import EnsembleModel
from .physics import FlightParams, RocketConfig, SimOptions, simulate_flight
from .synthgen import build_features


class MotorIndexMismatch(ValueError):
    pass


@dataclass(frozen=True)
class InferenceResult:
    cd_mean: float
    alpha_mean: float
    cd_std: float
    alpha_std: float
    per_member: tuple[tuple[float, float], ...]
    replayed_apogee: float

    @property
    def params(self) -> FlightParams:
        return FlightParams(self.cd_mean, self.alpha_mean)


@dataclass(frozen=True)
class FailedInference:
    """Placeholder returned by batch_predict for a flight that could not be scored."""
    error: str


def _check_motor(model: EnsembleModel, config: RocketConfig):
    n_motors = model.metadata.get("n_motors")
    idx = config.motor.motor_index
    if n_motors is not None and idx >= n_motors:
        raise MotorIndexMismatch(
            f"motor {config.motor.name!r} has index {idx} but the model was trained "
            f"on {n_motors} motors")


def predict(model: EnsembleModel, h_obs: float, config: RocketConfig,
            sim_opts: SimOptions | None = None) -> InferenceResult:
    """K eval-mode forward passes, mean/std aggregation, one replay simulation."""
    _check_motor(model, config)
    x = build_features(h_obs, config)[None, :]
    members = model.member_predictions(x)[:, 0, :]
    mean = members.mean(axis=0)
    std = members.std(axis=0)
    params = FlightParams(float(mean[0]), float(mean[1]))
    replay = simulate_flight(params, config, sim_opts)
    return InferenceResult(
        cd_mean=params.cd,
        alpha_mean=params.alpha,
        cd_std=float(std[0]),
        alpha_std=float(std[1]),
        per_member=tuple((float(c), float(a)) for c, a in members),
        replayed_apogee=replay.apogee,
    )


def batch_predict(model: EnsembleModel, flights, sim_opts: SimOptions | None = None):
    """``predict`` over ``(h_obs, config)`` pairs; failures become FailedInference entries."""
    out = []
    for h_obs, config in flights:
        try:
            out.append(predict(model, h_obs, config, sim_opts))
        except Exception as exc:  # noqa: BLE001 - reported per item
            out.append(FailedInference(f"{type(exc).__name__}: {exc}"))
    return out
