"""Motor database: a JSON list of motor records whose order fixes each motor's index."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .physics import MotorSpec

ENV_VAR = "APOGEE_MOTOR_DB"

_FIELDS = {
    "name": "name",
    "total_impulse_ns": "total_impulse",
    "burn_time_s": "burn_time",
    "propellant_mass_kg": "propellant_mass",
    "ramp_fraction": "ramp_fraction",
    "decay_fraction": "decay_fraction",
}


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, motor: str, field_name: str, message: str):
        super().__init__(f"motor {motor!r}, field {field_name!r}: {message}")
        self.motor = motor
        self.field = field_name


class MotorNotFound(KeyError):
    pass


@dataclass(frozen=True)
class MotorDatabase:
    motors: tuple[MotorSpec, ...]
    name_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for i, m in enumerate(self.motors):
            if m.name in index:
                raise ValidationError(m.name, "name", "duplicate motor name")
            if m.motor_index != i:
                raise ValidationError(m.name, "motor_index", f"expected {i}, got {m.motor_index}")
            index[m.name] = i
        object.__setattr__(self, "name_index", index)

    def __len__(self):
        return len(self.motors)

    def __iter__(self):
        return iter(self.motors)

    def get(self, name: str) -> MotorSpec:
        return get_motor(self, name)


def default_db_path() -> Path:
    override = os.environ.get(ENV_VAR)
    if override:
        return Path(override)
    return Path(str(resources.files("apogee") / "data" / "motors.json"))


def _check_record(rec: dict, position: int) -> dict:
    name = rec.get("name", f"<record {position}>")
    missing = [k for k in _FIELDS if k not in rec]
    if missing:
        raise ValidationError(str(name), missing[0], "missing field")
    if not isinstance(rec["name"], str) or not rec["name"]:
        raise ValidationError(str(name), "name", "must be a non-empty string")
    values = {}
    for key, attr in _FIELDS.items():
        if key == "name":
            continue
        val = rec[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ValidationError(name, key, f"expected a number, got {val!r}")
        values[attr] = float(val)
    rules = [
        ("total_impulse_ns", values["total_impulse"] > 0, "must be > 0"),
        ("burn_time_s", values["burn_time"] > 0, "must be > 0"),
        ("propellant_mass_kg", values["propellant_mass"] >= 0, "must be >= 0"),
        ("ramp_fraction", 0 < values["ramp_fraction"] < 1, "must lie in (0, 1)"),
        ("decay_fraction", 0 < values["decay_fraction"] < 1, "must lie in (0, 1)"),
        ("decay_fraction", values["ramp_fraction"] + values["decay_fraction"] < 1,
         "ramp_fraction + decay_fraction must be < 1"),
    ]
    for key, ok, msg in rules:
        if not ok:
            raise ValidationError(name, key, msg)
    values["name"] = name
    return values


def motors_from_records(records: list[dict]) -> MotorDatabase:
    motors = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ParseError(f"motor record {i} is not an object")
        motors.append(MotorSpec(motor_index=i, **_check_record(rec, i)))
    return MotorDatabase(tuple(motors))


def load_motor_db(path: str | os.PathLike | None = None) -> MotorDatabase:
    """Load and validate a motor database.  ``None`` loads the default file."""
    path = Path(path) if path is not None else default_db_path()
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("motors"), list):
        raise ParseError(f"{path}: expected an object with a 'motors' array")
    return motors_from_records(doc["motors"])


def motor_to_record(motor: MotorSpec) -> dict:
    return {key: getattr(motor, attr) for key, attr in _FIELDS.items()}


def write_motor_db(db: MotorDatabase, path: str | os.PathLike) -> None:
    doc = {"motors": [motor_to_record(m) for m in db.motors]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def get_motor(db: MotorDatabase, name: str) -> MotorSpec:
    try:
        return db.motors[db.name_index[name]]
    except KeyError:
        raise MotorNotFound(f"unknown motor {name!r}") from None
