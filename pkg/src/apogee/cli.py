"""``apogee`` command line: simulate, generate, train, infer, evaluate.

Exit codes: 0 success, 2 usage or input error, 3 physics failure, 4 training failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .evaluation import FlightFileError, load_real_flights, run_evaluation
from .inference import predict
from .motordb import MotorNotFound, ParseError, ValidationError, get_motor, load_motor_db
from .neural.ensemble import DivergenceError, TrainConfig, load_model, save_model, train_ensemble
from .neural.network import NetworkConfig
from .physics import (DEFAULT_REFERENCE_AREA, FlightParams, NoLiftoffError, RocketConfig,
                      SimOptions, SimulationError, simulate_flight)
from .synthgen import (DEFAULT_MASS_RANGE, GenerationError, PriorSpec, generate_dataset,
                       read_dataset, write_dataset)

log = logging.getLogger("apogee")

EXIT_USAGE = 2
EXIT_PHYSICS = 3
EXIT_TRAINING = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    motor_db_path: str | None = None
    sim: SimOptions = field(default_factory=SimOptions)
    priors: PriorSpec = field(default_factory=PriorSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    mass_range: tuple[float, float] = DEFAULT_MASS_RANGE
    reference_area: float = DEFAULT_REFERENCE_AREA
    master_seed: int = 0
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}") from None
        cfg = cls()
        sections = {"sim": SimOptions, "priors": PriorSpec, "train": TrainConfig,
                    "network": NetworkConfig}
        try:
            for key, value in doc.items():
                if key in sections:
                    known = {f.name for f in fields(sections[key])}
                    unknown = set(value) - known
                    if unknown:
                        raise CliError(f"config section {key!r}: unknown keys {sorted(unknown)}")
                    setattr(cfg, key, replace(getattr(cfg, key), **value))
                elif key == "mass_range":
                    cfg.mass_range = (float(value[0]), float(value[1]))
                elif key in ("motor_db_path", "reference_area", "master_seed", "outputs"):
                    setattr(cfg, key, value)
                else:
                    raise CliError(f"unknown config key {key!r}")
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid config {path}: {exc}") from None
        return cfg


def _fmt(x: float) -> str:
    return repr(float(x))


def _load_db(cfg: RunConfig, args):
    path = getattr(args, "motor_db", None) or cfg.motor_db_path
    try:
        return load_motor_db(path)
    except (OSError, ParseError, ValidationError) as exc:
        raise CliError(f"motor database: {exc}") from None


def _rocket(db, args, cfg: RunConfig) -> RocketConfig:
    try:
        motor = get_motor(db, args.motor)
    except MotorNotFound:
        raise CliError(f"unknown motor {args.motor!r} (known: {', '.join(db.name_index)})") from None
    try:
        return RocketConfig(args.dry_mass, motor, args.area or cfg.reference_area)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_simulate(args, cfg: RunConfig) -> int:
    db = _load_db(cfg, args)
    rocket = _rocket(db, args, cfg)
    try:
        params = FlightParams(args.cd, args.alpha)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    try:
        result = simulate_flight(params, rocket, cfg.sim)
    except NoLiftoffError as exc:
        raise CliError(f"no liftoff: {exc}", EXIT_PHYSICS) from None
    except SimulationError as exc:
        raise CliError(f"simulation failed: {exc}", EXIT_PHYSICS) from None
    print(f"apogee_m={_fmt(result.apogee)}")
    print(f"time_to_apogee_s={_fmt(result.time_to_apogee)}")
    if args.trajectory:
        with open(args.trajectory, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "h", "v", "m"])
            for row in result.trajectory:
                w.writerow([_fmt(x) for x in row])
    return 0


def cmd_generate(args, cfg: RunConfig) -> int:
    n = args.n
    if n is None or n < 1:
        raise CliError("-n must be >= 1")
    seed = args.seed if args.seed is not None else cfg.master_seed
    out = args.out or cfg.outputs.get("dataset", "dataset.csv")
    db = _load_db(cfg, args)
    t0 = time.perf_counter()
    try:
        ds = generate_dataset(n, cfg.priors, db, cfg.mass_range, cfg.sim, seed,
                              workers=args.workers, reference_area=cfg.reference_area)
    except GenerationError as exc:
        raise CliError(str(exc), EXIT_PHYSICS) from None
    sidecar = write_dataset(ds, out)
    log.info("generated %d samples in %.1f s", n, time.perf_counter() - t0)
    print(f"samples={len(ds)}")
    print(f"rejected={ds.rejected}")
    print(f"dataset={out}")
    print(f"norm={sidecar}")
    return 0


def _read_dataset(path):
    try:
        return read_dataset(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"dataset {path}: {exc}") from None


def cmd_train(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.master_seed
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.members is not None:
        overrides["ensemble_size"] = args.members
    try:
        train_cfg = replace(cfg.train, **overrides)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    ds = _read_dataset(args.dataset)
    val = _read_dataset(args.val) if args.val else None
    out = Path(args.out or cfg.outputs.get("model", "model.json"))
    try:
        model, histories = train_ensemble(ds, val, cfg.network, train_cfg, seed,
                                          workers=args.workers)
    except DivergenceError as exc:
        raise CliError(f"training diverged: {exc}", EXIT_TRAINING) from None
    save_model(model, out)
    for k, hist in enumerate(histories):
        path = out.with_name(f"{out.stem}.member{k}.losses.csv")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for r in hist:
                w.writerow([r.epoch, _fmt(r.train_loss), _fmt(r.val_loss), _fmt(r.lr)])
    for m in model.metadata["members"]:
        print(f"member={m['member']} best_epoch={m['best_epoch']} "
              f"best_val_loss={_fmt(m['best_val_loss'])}")
    print(f"model={out}")
    return 0


def _load_model(path):
    try:
        return load_model(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"model {path}: {exc}") from None


def cmd_infer(args, cfg: RunConfig) -> int:
    model = _load_model(args.model)
    db = _load_db(cfg, args)
    rocket = _rocket(db, args, cfg)
    try:
        res = predict(model, args.h_obs, rocket, cfg.sim)
    except SimulationError as exc:
        raise CliError(f"replay failed: {exc}", EXIT_PHYSICS) from None
    except ValueError as exc:
        raise CliError(str(exc)) from None
    print(f"cd={_fmt(res.cd_mean)}")
    print(f"alpha={_fmt(res.alpha_mean)}")
    print(f"cd_std={_fmt(res.cd_std)}")
    print(f"alpha_std={_fmt(res.alpha_std)}")
    print(f"replayed_apogee_m={_fmt(res.replayed_apogee)}")
    return 0


def _write_parity(model, heldout_path, out_path):
    ds = _read_dataset(heldout_path)
    preds = model.member_predictions(ds.features)
    mean, std = preds.mean(axis=0), preds.std(axis=0)
    y = ds.targets
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cd_true", "cd_pred", "cd_std", "alpha_true", "alpha_pred", "alpha_std"])
        for t, m, s in zip(y, mean, std):
            w.writerow([_fmt(t[0]), _fmt(m[0]), _fmt(s[0]), _fmt(t[1]), _fmt(m[1]), _fmt(s[1])])
    mae = np.abs(mean - y).mean(axis=0)
    print(f"heldout_cd_mae={_fmt(mae[0])}")
    print(f"heldout_alpha_mae={_fmt(mae[1])}")


def cmd_evaluate(args, cfg: RunConfig) -> int:
    try:
        flights = load_real_flights(None if args.builtin or not args.flights else args.flights)
    except (OSError, FlightFileError) as exc:
        raise CliError(str(exc)) from None
    if args.paper_columns:
        if not args.builtin and args.flights:
            raise CliError("--paper-columns needs the built-in flights")
        report = run_evaluation(None, flights, paper_columns=True)
        model = None
    else:
        if not args.model:
            raise CliError("--model is required unless --paper-columns is given")
        model = _load_model(args.model)
        db = _load_db(cfg, args)
        report = run_evaluation(model, flights, db, cfg.sim)
    sys.stdout.write(report.to_text())
    if args.json:
        Path(args.json).write_text(report.to_json())
    if args.heldout:
        if model is None:
            raise CliError("--heldout needs --model")
        _write_parity(model, args.heldout, args.parity or "parity.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apogee", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--motor-db", help="motor database JSON (overrides $APOGEE_MOTOR_DB)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="forward-simulate one flight")
    s.add_argument("--cd", type=float, required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--motor", required=True)
    s.add_argument("--dry-mass", type=float, required=True)
    s.add_argument("--area", type=float, help="reference area, m^2")
    s.add_argument("--trajectory", help="write t,h,v,m samples to this CSV")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("generate", help="generate a synthetic dataset")
    g.add_argument("-n", type=int, required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", "-o")
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the bootstrap ensemble")
    t.add_argument("dataset")
    t.add_argument("--val", help="validation dataset CSV (default: split from DATASET)")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", "-o")
    t.add_argument("--epochs", type=int)
    t.add_argument("--members", type=int)
    t.add_argument("--workers", type=int, default=1)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="estimate cd and alpha from one apogee")
    i.add_argument("--model", required=True)
    i.add_argument("--h-obs", type=float, required=True)
    i.add_argument("--motor", required=True)
    i.add_argument("--dry-mass", type=float, required=True)
    i.add_argument("--area", type=float)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("evaluate", help="score real flights against the baseline")
    e.add_argument("--model")
    src = e.add_mutually_exclusive_group()
    src.add_argument("--flights", help="flights CSV")
    src.add_argument("--builtin", action="store_true", help="use the built-in 12 flights")
    e.add_argument("--paper-columns", action="store_true",
                   help="score the published predictions instead of a model")
    e.add_argument("--json", help="write the JSON report here")
    e.add_argument("--heldout", help="synthetic dataset CSV for parity output")
    e.add_argument("--parity", help="parity CSV path (default parity.csv)")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
        return args.func(args, cfg)
    except CliError as exc:
        print(f"apogee {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
