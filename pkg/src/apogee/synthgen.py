"""Synthetic training corpus: prior sampling, simulation, measurement noise, features."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .motordb import MotorDatabase
from .physics import (DEFAULT_REFERENCE_AREA, FlightParams, NoLiftoffError, RocketConfig,
                      SimOptions, SimulationError, simulate_flight)

log = logging.getLogger(__name__)

FEATURE_NAMES = ("h_obs", "motor_index", "dry_mass", "total_impulse", "burn_time")
CSV_HEADER = FEATURE_NAMES + ("cd_true", "alpha_true", "clean_apogee")
DEFAULT_MASS_RANGE = (0.25, 0.55)

# spawn-key tags separating independent stream families under one master seed
STREAM_SAMPLE = 0
STREAM_BOOTSTRAP = 1
STREAM_INIT = 2
STREAM_TRAIN = 3
STREAM_MISC = 4

# resample budget per index before declaring the prior box degenerate
MAX_RESAMPLES = 1000


def rng_stream(master_seed: int, family: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(master_seed, family, index)``."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(family), int(index)))
    return np.random.Generator(np.random.Philox(seq))


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PriorSpec:
    cd_low: float = 0.3
    cd_high: float = 0.9
    alpha_low: float = 0.8
    alpha_high: float = 1.2
    noise_sigma: float = 3.0

    def __post_init__(self):
        if not self.cd_low < self.cd_high:
            raise ValueError("cd_low must be < cd_high")
        if not self.alpha_low < self.alpha_high:
            raise ValueError("alpha_low must be < alpha_high")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")

    def contains(self, params: FlightParams) -> bool:
        return (self.cd_low <= params.cd <= self.cd_high
                and self.alpha_low <= params.alpha <= self.alpha_high)


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    target: FlightParams
    clean_apogee: float


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_features(cls, x: np.ndarray) -> "NormStats":
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        # constant features (e.g. a single-motor database)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass
class Dataset:
    samples: list[LabeledSample]
    norm: NormStats | None = None
    seed: int | None = None
    rejected: int = 0
    _x: np.ndarray | None = field(default=None, init=False, repr=False)

    def __len__(self):
        return len(self.samples)

    @property
    def features(self) -> np.ndarray:
        if self._x is None:
            self._x = np.array([s.features for s in self.samples], dtype=float).reshape(-1, 5)
        return self._x

    @property
    def targets(self) -> np.ndarray:
        return np.array([[s.target.cd, s.target.alpha] for s in self.samples],
                        dtype=float).reshape(-1, 2)

    @property
    def clean_apogees(self) -> np.ndarray:
        return np.array([s.clean_apogee for s in self.samples], dtype=float)

    def with_norm(self) -> "Dataset":
        self.norm = NormStats.from_features(self.features)
        return self


def sample_flight_setup(rng: np.random.Generator, priors: PriorSpec, db: MotorDatabase,
                        mass_range=DEFAULT_MASS_RANGE,
                        reference_area: float = DEFAULT_REFERENCE_AREA):
    lo, hi = mass_range
    if not lo < hi:
        raise ValueError("mass_range low must be < high")
    cd = rng.uniform(priors.cd_low, priors.cd_high)
    alpha = rng.uniform(priors.alpha_low, priors.alpha_high)
    motor = db.motors[int(rng.integers(len(db)))]
    dry_mass = rng.uniform(lo, hi)
    return FlightParams(cd, alpha), RocketConfig(dry_mass, motor, reference_area)


def add_noise(h: float, sigma: float, rng: np.random.Generator) -> float:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return h
    return max(h + rng.normal(0.0, sigma), 0.0)


def build_features(h_obs: float, config: RocketConfig) -> np.ndarray:
    m = config.motor
    return np.array([h_obs, m.motor_index, config.dry_mass, m.total_impulse, m.burn_time],
                    dtype=float)


def normalize(features, norm: NormStats) -> np.ndarray:
    return (np.asarray(features, dtype=float) - norm.mean) / norm.std


def _generate_one(args):
    index, master_seed, priors, db, mass_range, sim_opts, reference_area = args
    rng = rng_stream(master_seed, STREAM_SAMPLE, index)
    rejected = 0
    for _ in range(MAX_RESAMPLES):
        params, config = sample_flight_setup(rng, priors, db, mass_range, reference_area)
        try:
            result = simulate_flight(params, config, sim_opts)
        except NoLiftoffError:
            rejected += 1
            continue
        except SimulationError as exc:
            raise GenerationError(
                f"sample {index}: {exc} (params={params}, dry_mass={config.dry_mass}, "
                f"motor={config.motor.name})") from exc
        h_obs = add_noise(result.apogee, priors.noise_sigma, rng)
        sample = LabeledSample(build_features(h_obs, config), params, result.apogee)
        return sample, rejected
    raise GenerationError(f"sample {index}: no liftoff after {MAX_RESAMPLES} draws")


def generate_dataset(n: int, priors: PriorSpec | None = None, db: MotorDatabase | None = None,
                     mass_range=DEFAULT_MASS_RANGE, sim_opts: SimOptions | None = None,
                     master_seed: int = 0, workers: int = 1,
                     reference_area: float = DEFAULT_REFERENCE_AREA,
                     allow_rejections: bool = False) -> Dataset:
    """Simulate ``n`` labelled flights.

    Sample ``i`` draws only from the stream keyed by ``(master_seed, i)``, so the
    output does not depend on ``workers``.  NoLiftoff draws are resampled; unless
    ``allow_rejections`` is set, any rejection is treated as a misconfigured prior.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if db is None:
        from .motordb import load_motor_db
        db = load_motor_db()
    priors = priors or PriorSpec()
    sim_opts = sim_opts or SimOptions()
    jobs = [(i, master_seed, priors, db, mass_range, sim_opts, reference_area)
            for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_generate_one, jobs, chunksize=max(1, n // (8 * workers))))
    else:
        out = [_generate_one(j) for j in jobs]
    samples = [s for s, _ in out]
    rejected = sum(r for _, r in out)
    if rejected:
        log.warning("resampled %d no-liftoff draws", rejected)
        if not allow_rejections:
            raise GenerationError(
                f"{rejected} no-liftoff draws inside the prior box; check motors and priors")
    ds = Dataset(samples, seed=master_seed, rejected=rejected)
    return ds.with_norm()


def write_dataset(ds: Dataset, path: str | os.PathLike) -> Path:
    """Write the CSV plus a ``<stem>.norm.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in ds.samples:
            f = s.features
            w.writerow([repr(float(f[0])), str(int(f[1])), repr(float(f[2])),
                        repr(float(f[3])), repr(float(f[4])), repr(float(s.target.cd)),
                        repr(float(s.target.alpha)), repr(float(s.clean_apogee))])
    sidecar = path.with_suffix(".norm.json")
    norm = ds.norm or NormStats.from_features(ds.features)
    doc = {**norm.to_dict(), "seed": ds.seed}
    sidecar.write_text(json.dumps(doc, indent=2) + "\n")
    return sidecar


def read_dataset(path: str | os.PathLike) -> Dataset:
    path = Path(path)
    samples = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if len(vals) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} columns")
            samples.append(LabeledSample(np.array(vals[:5]), FlightParams(vals[5], vals[6]),
                                         vals[7]))
    ds = Dataset(samples)
    sidecar = path.with_suffix(".norm.json")
    if sidecar.exists():
        doc = json.loads(sidecar.read_text())
        ds.norm = NormStats.from_dict(doc)
        ds.seed = doc.get("seed")
    else:
        ds.with_norm()
    return ds
