import json

import pytest

from apogee.evaluation import (BASELINE_CD, EmptyInput, FlightFileError, baseline_predict,
                               builtin_flights, compute_metrics, flight_config,
                               load_real_flights, resolve_motor, run_evaluation)
from apogee.physics import FlightParams, RocketConfig, simulate_flight


def test_builtin_fixture():
    flights = load_real_flights()
    assert len(flights) == 12
    assert sum(f.valid for f in flights) == 8
    assert [f.id for f in flights if not f.valid] == [5, 6, 7, 8]
    f2 = flights[1]
    assert (f2.motor_name, f2.config_label, f2.measured_apogee) == ("F24-4W", "A", 281.3)
    assert (f2.paper_predicted_apogee, f2.paper_openrocket_apogee) == (286.3, 315.6)
    assert (f2.paper_cd, f2.paper_alpha) == (0.845, 0.836)
    assert flights[0].dry_mass == 0.448 and f2.dry_mass == 0.322


def test_config_mass_override():
    flights = builtin_flights({"A": 0.5})
    assert flights[1].dry_mass == 0.5


def test_metrics_constant_error():
    agg = compute_metrics([15.0, 25.0, 35.0], [10.0, 20.0, 30.0])
    assert (agg.mae, agg.rmse, agg.mean_bias, agg.positive_errors) == (5.0, 5.0, 5.0, 3)


def test_metrics_empty():
    with pytest.raises(EmptyInput):
        compute_metrics([], [])


def test_paper_columns_reproduce_our_side():
    report = run_evaluation(None, load_real_flights(), paper_columns=True)
    assert len(report.rows) == 12
    assert report.ours.n == 8
    assert report.ours.mae == pytest.approx(12.3, abs=0.1)
    assert report.ours.rmse == pytest.approx(14.0, abs=0.1)
    assert report.ours.positive_errors == 8
    assert report.ours.mean_bias == pytest.approx(12.3, abs=0.1)
    assert report.ours.mae <= report.ours.rmse
    assert report.baseline.mae <= report.baseline.rmse


def test_baseline_is_fixed_parameters(db):
    cfg = RocketConfig(0.322, db.get("F24"))
    assert baseline_predict(cfg) == simulate_flight(FlightParams(BASELINE_CD, 1.0), cfg).apogee


def test_baseline_dominates_when_params_worse(db):
    cfg = RocketConfig(0.448, db.get("E35"))
    ours = simulate_flight(FlightParams(0.66, 0.89), cfg).apogee
    assert baseline_predict(cfg) > ours


def test_resolve_delay_suffix(db):
    assert resolve_motor(db, "F24-4W").name == "F24"
    assert resolve_motor(db, "F39").name == "F39"


def test_model_evaluation(small_model, db):
    flights = load_real_flights()
    a = run_evaluation(small_model, flights, db)
    b = run_evaluation(small_model, flights, db)
    assert a.to_json() == b.to_json()
    assert len(a.rows) == 12 and a.ours.n == 8 and a.baseline.n == 8
    assert a.ours.mae <= a.ours.rmse
    row = a.rows[0]
    assert row.error == row.predicted - row.measured
    doc = json.loads(a.to_json())
    assert set(doc["aggregates"]) == {"ours", "baseline", "improvement"}
    assert "Valid flights (8)" in a.to_text()


def test_per_flight_errors_do_not_abort(small_model, db):
    flights = load_real_flights()
    from dataclasses import replace
    flights[0] = replace(flights[0], motor_name="Z99")
    report = run_evaluation(small_model, flights, db)
    assert report.rows[0].error_message and "Z99" in report.rows[0].error_message
    assert report.ours.n == 7


def test_flights_csv(tmp_path, db):
    p = tmp_path / "f.csv"
    p.write_text("id,motor,config,measured_m,valid,dry_mass_kg\n"
                 "1,F24-4W,A,250.0,true,\n"
                 "2,F39,B,190.5,0,0.40\n")
    flights = load_real_flights(p)
    assert flights[0].dry_mass == 0.322 and flights[0].valid
    assert flights[1].dry_mass == 0.40 and not flights[1].valid
    assert flight_config(flights[1], db).motor.name == "F39"


def test_flights_csv_bad_line(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,motor,config,measured_m,valid,dry_mass_kg\n"
                 "1,F24-4W,A,250.0,true,\n"
                 "2,F39,B,abc,true,0.4\n")
    with pytest.raises(FlightFileError, match=":3:"):
        load_real_flights(p)
