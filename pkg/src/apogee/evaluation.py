"""Real-flight evaluation: the twelve logged flights, a fixed-coefficient baseline, and error metrics."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .inference import predict
from .motordb import MotorDatabase, MotorNotFound, get_motor
from .neural.ensemble import EnsembleModel
from .physics import FlightParams, RocketConfig, SimOptions, simulate_flight

BASELINE_CD = 0.52
BASELINE_ALPHA = 1.0
CONFIG_MASSES = {"A": 0.322, "B": 0.448}
FLIGHTS_HEADER = ("id", "motor", "config", "measured_m", "valid", "dry_mass_kg")


class EmptyInput(ValueError):
    pass


class FlightFileError(ValueError):
    pass


@dataclass(frozen=True)
class RealFlight:
    id: int
    motor_name: str
    config_label: str
    measured_apogee: float
    valid: bool
    dry_mass: float
    paper_predicted_apogee: float | None = None
    paper_cd: float | None = None
    paper_alpha: float | None = None
    paper_openrocket_apogee: float | None = None


# (id, motor, cfg, measured, ours, openrocket, cd, alpha, valid)
_TABLE = [
    (1, "E35-5W", "B", 169.8, 170.8, 198.2, 0.659, 0.887, True),
    (2, "F24-4W", "A", 281.3, 286.3, 315.6, 0.845, 0.836, True),
    (3, "F24-4W", "A", 246.6, 263.6, 315.6, 0.888, 0.783, True),
    (4, "E35-5W", "A", 174.7, 180.9, 218.4, 0.838, 0.822, True),
    (5, "E35-5W", "A", 154.5, 171.0, 218.4, 0.866, 0.791, False),
    (6, "E35-5W", "A", 131.1, 161.2, 218.4, 0.893, 0.758, False),
    (7, "E35-5W", "A", 166.1, 176.4, 218.4, 0.851, 0.808, False),
    (8, "F24-4W", "A", 199.9, 238.0, 315.6, 0.939, 0.721, False),
    (9, "F24-4W", "A", 241.4, 260.5, 315.6, 0.894, 0.776, True),
    (10, "F39", "B", 185.9, 206.2, 226.5, 0.890, 0.768, True),
    (11, "F39", "B", 196.3, 211.7, 226.5, 0.878, 0.782, True),
    (12, "F39", "B", 198.1, 212.6, 226.5, 0.876, 0.784, True),
]


def builtin_flights(config_masses: dict[str, float] | None = None) -> list[RealFlight]:
    masses = {**CONFIG_MASSES, **(config_masses or {})}
    return [RealFlight(i, motor, cfg, meas, valid, masses[cfg], ours, cd, alpha, ork)
            for i, motor, cfg, meas, ours, ork, cd, alpha, valid in _TABLE]


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y"):
        return True
    if t in ("0", "false", "no", "n"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_real_flights(path: str | os.PathLike | None = None,
                      config_masses: dict[str, float] | None = None) -> list[RealFlight]:
    """Flights from a CSV file, or the built-in twelve when ``path`` is None.

    An empty ``dry_mass_kg`` cell falls back to the configuration-label mass.
    """
    if path is None:
        return builtin_flights(config_masses)
    masses = {**CONFIG_MASSES, **(config_masses or {})}
    path = Path(path)
    flights = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FLIGHTS_HEADER:
            raise FlightFileError(f"{path}:1: expected header {','.join(FLIGHTS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != len(FLIGHTS_HEADER):
                    raise ValueError(f"expected {len(FLIGHTS_HEADER)} columns, got {len(row)}")
                fid, motor, cfg, meas, valid, mass = (c.strip() for c in row)
                if mass:
                    dry = float(mass)
                elif cfg in masses:
                    dry = masses[cfg]
                else:
                    raise ValueError(f"no dry mass and unknown config {cfg!r}")
                measured = float(meas)
                if not measured > 0:
                    raise ValueError("measured_m must be > 0")
                flights.append(RealFlight(int(fid), motor, cfg, measured, _parse_bool(valid), dry))
            except ValueError as exc:
                raise FlightFileError(f"{path}:{lineno}: {exc}") from None
    return flights


def resolve_motor(db: MotorDatabase, designation: str):
    """Exact name, else the designation stripped of its delay suffix (``F24-4W`` -> ``F24``)."""
    try:
        return get_motor(db, designation)
    except MotorNotFound:
        return get_motor(db, designation.split("-")[0])


def flight_config(flight: RealFlight, db: MotorDatabase) -> RocketConfig:
    return RocketConfig(flight.dry_mass, resolve_motor(db, flight.motor_name))


def baseline_predict(config: RocketConfig, sim_opts: SimOptions | None = None) -> float:
    """Apogee under the uncalibrated workflow: geometric Cd and nominal thrust."""
    return simulate_flight(FlightParams(BASELINE_CD, BASELINE_ALPHA), config, sim_opts).apogee


@dataclass
class FlightRow:
    id: int
    motor: str
    config: str
    valid: bool
    measured: float
    predicted: float | None = None
    baseline: float | None = None
    cd: float | None = None
    alpha: float | None = None
    cd_std: float | None = None
    alpha_std: float | None = None
    error_message: str | None = None

    @property
    def error(self) -> float | None:
        """Signed error, predicted minus measured."""
        return None if self.predicted is None else self.predicted - self.measured

    @property
    def baseline_error(self) -> float | None:
        return None if self.baseline is None else self.baseline - self.measured


@dataclass
class Aggregates:
    n: int
    mae: float
    rmse: float
    mean_bias: float
    positive_errors: int


@dataclass
class EvalReport:
    rows: list[FlightRow]
    ours: Aggregates
    baseline: Aggregates | None
    source: str = "model"
    notes: list[str] = field(default_factory=list)

    @property
    def improvement(self) -> float | None:
        if self.baseline is None or self.baseline.mae == 0:
            return None
        return (self.baseline.mae - self.ours.mae) / self.baseline.mae

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d["error"] = r.error
            d["baseline_error"] = r.baseline_error
            rows.append(d)
        return {
            "source": self.source,
            "rows": rows,
            "aggregates": {
                "ours": asdict(self.ours),
                "baseline": asdict(self.baseline) if self.baseline else None,
                "improvement": self.improvement,
            },
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        def fmt(x, spec):
            return "-" if x is None else format(x, spec)

        lines = [f"{'#':>3}  {'Motor':<8} {'Cfg':<3} {'Meas':>7} {'Ours':>7} {'Base':>7} "
                 f"{'Err':>7} {'Cd':>6} {'alpha':>6} {'sd(Cd)':>7} {'sd(a)':>7}"]
        for r in self.rows:
            tag = "" if r.valid else "*"
            lines.append(
                f"{str(r.id) + tag:>3}  {r.motor:<8} {r.config:<3} {r.measured:7.1f} "
                f"{fmt(r.predicted, '7.1f')} {fmt(r.baseline, '7.1f')} {fmt(r.error, '+7.1f')} "
                f"{fmt(r.cd, '6.3f')} {fmt(r.alpha, '6.3f')} {fmt(r.cd_std, '7.4f')} "
                f"{fmt(r.alpha_std, '7.4f')}")
            if r.error_message:
                lines.append(f"     ! {r.error_message}")
        o, b = self.ours, self.baseline
        lines.append(f"Valid flights ({o.n}); * = excluded")
        lines.append(f"  MAE   ours {o.mae:6.1f}   baseline {fmt(b and b.mae, '6.1f')}")
        lines.append(f"  RMSE  ours {o.rmse:6.1f}   baseline {fmt(b and b.rmse, '6.1f')}")
        lines.append(f"  bias  ours {o.mean_bias:+6.1f}   positive errors {o.positive_errors}/{o.n}")
        if self.improvement is not None:
            lines.append(f"  MAE reduction vs baseline: {100 * self.improvement:.1f}%")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def compute_metrics(predicted, measured) -> Aggregates:
    pairs = [(p, m) for p, m in zip(predicted, measured) if p is not None]
    if not pairs:
        raise EmptyInput("no scored flights")
    errs = [p - m for p, m in pairs]
    n = len(errs)
    return Aggregates(
        n=n,
        mae=sum(abs(e) for e in errs) / n,
        rmse=math.sqrt(sum(e * e for e in errs) / n),
        mean_bias=sum(errs) / n,
        positive_errors=sum(e > 0 for e in errs),
    )


def _aggregate(rows: list[FlightRow], attr: str) -> Aggregates | None:
    valid = [r for r in rows if r.valid and getattr(r, attr) is not None]
    if not valid:
        return None
    return compute_metrics([getattr(r, attr) for r in valid], [r.measured for r in valid])


def run_evaluation(model: EnsembleModel | None, flights: list[RealFlight],
                   db: MotorDatabase | None = None, sim_opts: SimOptions | None = None,
                   paper_columns: bool = False) -> EvalReport:
    """Score every flight; aggregates use valid flights only.

    With ``paper_columns`` the published predictions are scored instead of the model.
    Per-flight failures are recorded on the row and do not stop the run.
    """
    rows = []
    for f in flights:
        row = FlightRow(f.id, f.motor_name, f.config_label, f.valid, f.measured_apogee)
        if paper_columns:
            row.predicted, row.baseline = f.paper_predicted_apogee, f.paper_openrocket_apogee
            row.cd, row.alpha = f.paper_cd, f.paper_alpha
        else:
            try:
                config = flight_config(f, db)
                res = predict(model, f.measured_apogee, config, sim_opts)
                row.predicted, row.cd, row.alpha = res.replayed_apogee, res.cd_mean, res.alpha_mean
                row.cd_std, row.alpha_std = res.cd_std, res.alpha_std
                row.baseline = baseline_predict(config, sim_opts)
            except Exception as exc:  # noqa: BLE001 - recorded on the row
                row.error_message = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    ours = _aggregate(rows, "predicted")
    if ours is None:
        raise EmptyInput("no valid flight could be scored")
    report = EvalReport(rows, ours, _aggregate(rows, "baseline"),
                        source="paper" if paper_columns else "model")
    if not paper_columns:
        report.notes.append("motor data are placeholders; real-flight metrics are diagnostics")
    return report
