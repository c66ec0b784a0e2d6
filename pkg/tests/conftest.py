import pytest

from apogee.motordb import load_motor_db
from apogee.physics import MotorSpec, RocketConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def db():
    return load_motor_db()


@pytest.fixture
def trapezoid_motor():
    return MotorSpec("T40", total_impulse=40.0, burn_time=1.6, propellant_mass=0.02,
                     ramp_fraction=0.1, decay_fraction=0.3)


@pytest.fixture
def trapezoid_rocket(trapezoid_motor):
    return RocketConfig(0.322, trapezoid_motor)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_data(db):
    from apogee.synthgen import generate_dataset
    train = generate_dataset(1500, db=db, master_seed=101)
    val = generate_dataset(300, db=db, master_seed=102)
    return train, val


@pytest.fixture(scope="session")
def small_trained(small_data):
    """A quickly trained 3-member ensemble with reduced width; returns (model, histories)."""
    from apogee.neural import NetworkConfig, TrainConfig, train_ensemble
    train, val = small_data
    return train_ensemble(train, val, NetworkConfig(hidden_dims=(32, 64, 32)),
                          TrainConfig(epochs=12, ensemble_size=3), master_seed=5)


@pytest.fixture(scope="session")
def small_model(small_trained):
    return small_trained[0]
