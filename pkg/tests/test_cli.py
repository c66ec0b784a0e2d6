import json

import pytest

from apogee.cli import main
from apogee.neural import save_model
from apogee.physics import FlightParams, RocketConfig, simulate_flight


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def parse(out):
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line)


def test_simulate_matches_library(capsys, db, tmp_path):
    traj = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "simulate", "--cd", "0.52", "--alpha", "1.0", "--motor", "F24",
                       "--dry-mass", "0.322", "--trajectory", str(traj))
    assert code == 0
    expected = simulate_flight(FlightParams(0.52, 1.0), RocketConfig(0.322, db.get("F24")))
    assert float(parse(out)["apogee_m"]) == expected.apogee
    lines = traj.read_text().splitlines()
    assert lines[0] == "t,h,v,m" and len(lines) == len(expected.trajectory) + 1


def test_simulate_no_liftoff(capsys):
    code, _, err = run(capsys, "simulate", "--cd", "0.5", "--alpha", "0", "--motor", "F24",
                       "--dry-mass", "0.3")
    assert code == 3 and "no liftoff" in err


def test_simulate_unknown_motor(capsys):
    code, _, err = run(capsys, "simulate", "--cd", "0.5", "--alpha", "1", "--motor", "Z99",
                       "--dry-mass", "0.3")
    assert code == 2 and "unknown motor" in err


def test_bad_args_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--cd", "x"])
    assert info.value.code == 2


def test_generate(capsys, tmp_path):
    out = tmp_path / "ds.csv"
    code, text, _ = run(capsys, "generate", "-n", "30", "--seed", "42", "--out", str(out))
    assert code == 0 and parse(text)["rejected"] == "0"
    assert len(out.read_text().splitlines()) == 31
    first = out.read_bytes()
    run(capsys, "generate", "-n", "30", "--seed", "42", "--out", str(out))
    assert out.read_bytes() == first
    assert json.loads(out.with_suffix(".norm.json").read_text())["seed"] == 42


def test_generate_zero(capsys, tmp_path):
    code, _, _ = run(capsys, "generate", "-n", "0", "--out", str(tmp_path / "x.csv"))
    assert code == 2


def test_train_and_infer(capsys, tmp_path, db):
    ds = tmp_path / "ds.csv"
    run(capsys, "generate", "-n", "200", "--seed", "1", "--out", str(ds))
    model = tmp_path / "m.json"
    code, _, _ = run(capsys, "train", str(ds), "--seed", "2", "--out", str(model),
                     "--epochs", "3", "--members", "2")
    assert code == 0
    doc = json.loads(model.read_text())
    assert len(doc["members"]) == 2 and doc["format_version"] == 1
    for k in range(2):
        lines = (tmp_path / f"m.member{k}.losses.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,lr" and len(lines) == 4
    code, out, _ = run(capsys, "infer", "--model", str(model), "--h-obs", "250", "--motor",
                       "F24", "--dry-mass", "0.322")
    vals = parse(out)
    assert code == 0
    assert set(vals) == {"cd", "alpha", "cd_std", "alpha_std", "replayed_apogee_m"}
    code, out, _ = run(capsys, "simulate", "--cd", vals["cd"], "--alpha", vals["alpha"],
                       "--motor", "F24", "--dry-mass", "0.322")
    assert parse(out)["apogee_m"] == vals["replayed_apogee_m"]


def test_infer_single_member_prints_zero_std(capsys, tmp_path, small_data):
    from apogee.neural import NetworkConfig, TrainConfig, train_ensemble
    model, _ = train_ensemble(*small_data, NetworkConfig(hidden_dims=(8,)),
                              TrainConfig(epochs=1, ensemble_size=1))
    path = tmp_path / "k1.json"
    save_model(model, path)
    _, out, _ = run(capsys, "infer", "--model", str(path), "--h-obs", "200", "--motor", "E35",
                    "--dry-mass", "0.4")
    vals = parse(out)
    assert float(vals["cd_std"]) == 0.0 and float(vals["alpha_std"]) == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_4(capsys, tmp_path):
    ds = tmp_path / "ds.csv"
    run(capsys, "generate", "-n", "50", "--seed", "1", "--out", str(ds))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"learning_rate": 1e300}}))
    code, _, err = run(capsys, "--config", str(cfg), "train", str(ds), "--out",
                       str(tmp_path / "m.json"), "--epochs", "2", "--members", "1")
    assert code == 4 and "diverged" in err


def test_evaluate_paper_columns(capsys):
    code, out, _ = run(capsys, "evaluate", "--builtin", "--paper-columns")
    assert code == 0
    assert "MAE   ours   12.3" in out
    assert "positive errors 8/8" in out


def test_evaluate_model(capsys, tmp_path, small_model, small_data):
    from apogee.synthgen import write_dataset
    model = tmp_path / "m.json"
    save_model(small_model, model)
    held = tmp_path / "held.csv"
    write_dataset(small_data[1], held)
    report = tmp_path / "r.json"
    parity = tmp_path / "p.csv"
    code, out, _ = run(capsys, "evaluate", "--model", str(model), "--builtin", "--json",
                       str(report), "--heldout", str(held), "--parity", str(parity))
    assert code == 0
    doc = json.loads(report.read_text())
    assert len(doc["rows"]) == 12 and doc["aggregates"]["ours"]["n"] == 8
    assert len(parity.read_text().splitlines()) == 301
    assert "heldout_cd_mae" in out


def test_evaluate_malformed_flights(capsys, tmp_path, small_model):
    model = tmp_path / "m.json"
    save_model(small_model, model)
    bad = tmp_path / "f.csv"
    bad.write_text("id,motor,config,measured_m,valid,dry_mass_kg\n1,F24,A,oops,true,\n")
    code, _, err = run(capsys, "evaluate", "--model", str(model), "--flights", str(bad))
    assert code == 2 and ":2:" in err


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sim": {"gravity": 9.0}}))
    _, out_low_g, _ = run(capsys, "--config", str(cfg), "simulate", "--cd", "0.5", "--alpha",
                          "1", "--motor", "F24", "--dry-mass", "0.3")
    _, out_std, _ = run(capsys, "simulate", "--cd", "0.5", "--alpha", "1", "--motor", "F24",
                        "--dry-mass", "0.3")
    assert float(parse(out_low_g)["apogee_m"]) > float(parse(out_std)["apogee_m"])
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, _ = run(capsys, "--config", str(cfg), "simulate", "--cd", "0.5", "--alpha", "1",
                     "--motor", "F24", "--dry-mass", "0.3")
    assert code == 2
