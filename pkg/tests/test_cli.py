import json

import numpy as np
import pandas as pd
import pytest

from miqubo.bench import SelectionModel
from miqubo.cli import build_parser, cli, prepare
from miqubo.config import RunConfig
from miqubo.infotheory import CmiTensor
from miqubo.svr import r2_score

SMALL_PROFILE = '{"n_samples": 400, "n_informative": 2, "n_noise": 3}'


def read(path):
    with open(path, "r", encoding="utf-8") as JSON:
        return json.load(JSON)


@pytest.fixture
def machines_csv(tmp_path):
    """Four numeric columns and a 23-valued location column."""
    rng = np.random.default_rng(0)
    n = 69
    table = pd.DataFrame(
        {
            "CR": rng.integers(0, 2, size=n),
            "year": rng.integers(2008, 2019, size=n),
            "hours": rng.integers(500, 12000, size=n),
            "condition": rng.integers(1, 6, size=n),
            "location": [f"L{i % 23:02d}" for i in range(n)],
        }
    )
    table["price"] = 60000 - 2.5 * table["hours"] + 900 * (table["year"] - 2008)
    path = tmp_path / "machines.csv"
    table.to_csv(path, index=False)
    return path


def test_missing_target(machines_csv, tmp_path, caplog):
    status = cli(
        ["mi-rank", "--seed", "1", "--input", str(machines_csv), "--target", "value",
         "--output", str(tmp_path / "run")]
    )
    assert status == 2
    assert "value" in caplog.text


def test_seed_is_required():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["mi-rank", "--synthetic", "high"])
    assert info.value.code == 2


def test_mi_rank_encodes_locations(machines_csv, tmp_path):
    out = tmp_path / "run"
    status = cli(
        ["mi-rank", "--seed", "1", "--input", str(machines_csv), "--target", "price",
         "--output", str(out)]
    )
    assert status == 0
    report = read(out / "mi_report.json")
    assert len(report["feature_names"]) == 27
    assert report["units"] == "nats"
    assert len(report["explained_variance_ratio"]) == 27
    table = pd.read_csv(out / "mi_report.csv")
    assert len(table) == 27
    assert (out / "mi_rank.svg").exists()


def test_mi_rank_high_preset(tmp_path):
    out = tmp_path / "run"
    assert cli(["mi-rank", "--seed", "4", "--synthetic", "high", "--output", str(out)]) == 0
    assert read(out / "mi_report.json")["concentration"] >= 0.6


def test_select_outputs(tmp_path):
    out = tmp_path / "run"
    status = cli(["select", "--seed", "2", "--synthetic", SMALL_PROFILE, "--output", str(out)])
    assert status == 0
    selection = read(out / "selection.json")
    assert selection["k_values"] == [1, 2, 3, 4, 5]
    assert selection["selections"]["CMI"]["1"] == selection["selections"]["MI"]["1"]
    assert selection["divergence"]["5"] == 0
    matrix = pd.read_csv(out / "selection_matrix.csv")
    assert list(matrix["k"]) == [1, 2, 3, 4, 5]
    assert not matrix["infeasible"].any()
    assert read(out / "qubo.json")["n"] == 5
    stats = read(out / "solver_stats.json")
    assert all("wall_time" not in entry["stats"] for entry in stats.values())
    for name in ("qubo.coo.txt", "qubo_sparsity.svg"):
        assert (out / name).exists()


def test_select_hybrid_is_deterministic(tmp_path):
    args = ["select", "--seed", "7", "--synthetic", SMALL_PROFILE, "--backend", "hybrid", "--k-max", "3"]
    assert cli(args + ["--output", str(tmp_path / "a")]) == 0
    assert cli(args + ["--output", str(tmp_path / "b")]) == 0
    for name in ("selection.json", "selection_matrix.csv", "solver_stats.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pipeline(tmp_path):
    args = ["pipeline", "--seed", "3", "--synthetic", SMALL_PROFILE, "--k-max", "2", "--splits", "2"]
    assert cli(args + ["--output", str(tmp_path / "a")]) == 0
    assert cli(args + ["--output", str(tmp_path / "b")]) == 0
    manifest = read(tmp_path / "a" / "manifest.json")
    assert manifest["stages"] == {"mi-rank": "completed", "select": "completed", "evaluate": "completed"}
    listed = {entry["path"] for entry in manifest["files"]}
    assert {"mi_report.json", "selection.json", "cmi_tensor.json", "cmi_tensor.csv"} <= listed
    assert {"r2_sweep.csv", "r2_plot.svg", "svr_models.json"} <= listed
    assert manifest["seeds"]["master"] == 3
    assert "numpy" in manifest["versions"]
    for name in ("mi_report.csv", "selection.json", "r2_sweep.csv", "r2_sweep.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    sweep = pd.read_csv(tmp_path / "a" / "r2_sweep.csv")
    assert set(sweep["method"]) == {"MI", "CMI"}
    assert len(sweep) == 2 * 2 * 2
    other = read(tmp_path / "b" / "manifest.json")
    assert other["config_hash"] != manifest["config_hash"]


def test_pipeline_failure_keeps_manifest(tmp_path):
    out = tmp_path / "run"
    status = cli(
        ["pipeline", "--seed", "3", "--synthetic", SMALL_PROFILE, "--k-min", "9", "--output", str(out)]
    )
    assert status == 2
    manifest = read(out / "manifest.json")
    assert manifest["stages"]["mi-rank"] == "completed"
    assert manifest["stages"]["select"] == "failed"
    assert manifest["stages"]["evaluate"] == "pending"


def test_evaluate_uses_selection_file(tmp_path):
    out = tmp_path / "run"
    base = ["--seed", "5", "--synthetic", SMALL_PROFILE, "--output", str(out)]
    assert cli(["select", "--k-max", "2"] + base) == 0
    assert cli(["evaluate", "--splits", "2", "--C", "2.0"] + base) == 0
    payload = read(out / "r2_sweep.json")
    assert payload["split"]["count"] == 2
    assert payload["svr"]["C"] == 2.0
    assert {row["k"] for row in payload["scores"]} == {1, 2}


def test_synth(tmp_path):
    out = tmp_path / "run"
    assert cli(["synth", "--seed", "9", "--synthetic", SMALL_PROFILE, "--output", str(out)]) == 0
    table = pd.read_csv(out / "synthetic.csv")
    assert list(table.columns)[-1] == "target"
    assert len(table) == 400
    assert read(out / "synthetic_profile.json")["seed"] == 9


def test_config_file(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"seed": 11, "synthetic": json.loads(SMALL_PROFILE), "bins": 8}))
    out = tmp_path / "run"
    assert cli(["mi-rank", "--seed", "11", "--config", str(config), "--output", str(out)]) == 0
    assert read(out / "mi_report.json")["bins"] == 8
    config.write_text("{not json")
    assert cli(["mi-rank", "--seed", "11", "--config", str(config), "--output", str(out)]) == 2


def test_select_writes_cmi_tensor(tmp_path):
    out = tmp_path / "run"
    assert cli(["select", "--seed", "2", "--synthetic", SMALL_PROFILE, "--k-max", "2", "--output", str(out)]) == 0
    payload = read(out / "cmi_tensor.json")
    assert payload["units"] == "nats"
    tensor = CmiTensor.from_matrix(payload["values"], payload["feature_names"])
    assert tensor.feature_names == tuple(read(out / "selection.json")["feature_names"])
    table = pd.read_csv(out / "cmi_tensor.csv")
    assert list(table["feature"]) == list(tensor.feature_names)
    np.testing.assert_allclose(table.drop(columns="feature").to_numpy(), tensor.values, rtol=1e-10)
    assert (np.diag(tensor.values) >= 0).all()


def test_evaluate_rejects_selection_from_other_dataset(tmp_path, caplog):
    out = tmp_path / "run"
    common = ["--synthetic", SMALL_PROFILE, "--output", str(out)]
    assert cli(["select", "--seed", "5", "--k-max", "2"] + common) == 0
    # the synthetic seed follows the master seed, so the data differ
    status = cli(["evaluate", "--seed", "6", "--splits", "2"] + common)
    assert status == 2
    assert "selection.json" in caplog.text
    assert not (out / "r2_sweep.csv").exists()


def test_evaluate_writes_models(tmp_path):
    out = tmp_path / "run"
    base = ["--seed", "5", "--synthetic", SMALL_PROFILE, "--output", str(out)]
    assert cli(["select", "--k-max", "2"] + base) == 0
    assert cli(["evaluate", "--splits", "2"] + base) == 0
    models = [SelectionModel.from_dict(entry) for entry in read(out / "svr_models.json")]
    assert sorted((m.method, m.k) for m in models) == [("CMI", 1), ("CMI", 2), ("MI", 1), ("MI", 2)]
    selection = read(out / "selection.json")
    for m in models:
        assert list(m.indices) == selection["selections"][m.method][str(m.k)]
    encoded = prepare(RunConfig.from_dict({"seed": 5, "synthetic": json.loads(SMALL_PROFILE)})).encoded
    best = max(r2_score(encoded.target, m.predict(encoded.matrix)) for m in models)
    assert best > 0.5
