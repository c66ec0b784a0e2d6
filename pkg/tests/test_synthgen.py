import math

import numpy as np
import pytest

from apogee.physics import RocketConfig, simulate_flight
from apogee.synthgen import (NormStats, PriorSpec, add_noise, build_features,
                             generate_dataset, normalize, read_dataset, rng_stream,
                             sample_flight_setup, write_dataset)


@pytest.fixture(scope="module")
def corpus(db):
    return generate_dataset(10_000, db=db, master_seed=11)


def test_prior_moments(db):
    rng = rng_stream(5, 0, 0)
    draws = [sample_flight_setup(rng, PriorSpec(), db) for _ in range(100_000)]
    cds = np.array([p.cd for p, _ in draws])
    motors = np.array([c.motor.motor_index for _, c in draws])
    masses = np.array([c.dry_mass for _, c in draws])
    assert abs(cds.mean() - 0.6) <= 0.01
    for k in range(3):
        assert abs(np.mean(motors == k) - 1 / 3) <= 0.02
    assert 0.25 <= masses.min() and masses.max() <= 0.55


def test_same_seed_same_draws(db):
    a = [sample_flight_setup(rng_stream(3, 0, 7), PriorSpec(), db) for _ in range(3)]
    b = [sample_flight_setup(rng_stream(3, 0, 7), PriorSpec(), db) for _ in range(3)]
    assert a == b


def test_noise():
    rng = rng_stream(1, 0, 0)
    assert add_noise(123.4, 0.0, rng) == 123.4
    draws = np.array([add_noise(200.0, 3.0, rng) for _ in range(100_000)])
    assert abs(draws.std() - 3.0) <= 0.05


def test_noise_clamped_at_zero():
    class Fixed:
        def normal(self, loc, scale):
            return -5.0
    assert add_noise(1.0, 3.0, Fixed()) == 0.0


def test_feature_order(db):
    motor = db.get("F24")
    cfg = RocketConfig(0.322, motor)
    x = build_features(200.0, cfg)
    assert x.tolist() == [200.0, 1.0, 0.322, motor.total_impulse, motor.burn_time]
    y = build_features(200.0, RocketConfig(0.322, db.get("F39")))
    assert len(x) == len(y) == 5
    assert set(np.flatnonzero(x != y)) == {1, 3, 4}


def test_normalize():
    norm = NormStats(np.arange(5.0), np.full(5, 2.0))
    assert np.all(normalize(np.arange(5.0), norm) == 0)
    ident = NormStats(np.zeros(5), np.ones(5))
    x = np.array([1.5, 2, -3, 4, 5])
    assert np.array_equal(normalize(x, ident), x)


def test_constant_feature_guard():
    x = np.column_stack([np.arange(10.0), np.zeros(10), np.ones(10), np.ones(10), np.ones(10)])
    norm = NormStats.from_features(x)
    assert np.all(norm.std[1:] == 1.0)


def test_dataset_size_and_norm(corpus):
    assert len(corpus) == 10_000
    assert corpus.rejected == 0
    z = normalize(corpus.features, corpus.norm)
    assert np.all(np.abs(z.mean(axis=0)) <= 1e-6)
    assert np.all(np.abs(z.std(axis=0) - 1) <= 1e-6)


def test_prior_coverage(corpus):
    cd = corpus.targets[:, 0]
    assert cd.min() - 0.3 <= 0.005 and 0.9 - cd.max() <= 0.005
    prior = PriorSpec()
    assert all(prior.contains(s.target) for s in corpus.samples)


def test_noise_signal(corpus):
    dev = np.abs(corpus.features[:, 0] - corpus.clean_apogees).mean()
    assert dev == pytest.approx(3.0 * math.sqrt(2 / math.pi), rel=0.05)


def test_replay_consistency(corpus, db):
    for s in corpus.samples[:200]:
        cfg = RocketConfig(s.features[2], db.motors[int(s.features[1])])
        assert simulate_flight(s.target, cfg).apogee == s.clean_apogee


def test_worker_count_independence(db):
    a = generate_dataset(60, db=db, master_seed=4, workers=1)
    b = generate_dataset(60, db=db, master_seed=4, workers=2)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.targets, b.targets)


def test_rejections_fail_loudly(db):
    from apogee.synthgen import GenerationError
    weak = PriorSpec(alpha_low=0.0, alpha_high=0.05)
    with pytest.raises(GenerationError):
        generate_dataset(3, weak, db, master_seed=1)


def test_csv_round_trip(db, tmp_path):
    ds = generate_dataset(25, db=db, master_seed=9)
    path = tmp_path / "ds.csv"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.targets, ds.targets)
    assert np.array_equal(back.clean_apogees, ds.clean_apogees)
    assert np.array_equal(back.norm.mean, ds.norm.mean)
    assert back.seed == 9
    assert path.read_text().splitlines()[0] == (
        "h_obs,motor_index,dry_mass,total_impulse,burn_time,cd_true,alpha_true,clean_apogee")


def test_invalid_inputs(db):
    with pytest.raises(ValueError):
        generate_dataset(0, db=db)
    with pytest.raises(ValueError):
        PriorSpec(cd_low=0.9, cd_high=0.3)
    with pytest.raises(ValueError):
        sample_flight_setup(rng_stream(0, 0, 0), PriorSpec(), db, (0.5, 0.2))
