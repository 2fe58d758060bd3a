import json

import numpy as np
import pytest

from budgetseg.architecture import SchemaError
from budgetseg.bilinear import bilinear_plane
from budgetseg.cli import main
from budgetseg.cost_model import CostReport
from budgetseg.optimizer import SearchResult
from budgetseg.scenario import load_scenario
from budgetseg.tensor_core import Tensor, read_tensor_csv, write_tensor_csv

SWEEP_MACS = [1360, 21200, 41680, 62160, 82640, 103120, 164560]


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


# --- scenarios ---------------------------------------------------------------

def test_builtin_scenarios():
    rural = load_scenario("rural")
    assert (rural.num_classes, rural.n_cameras, rural.fps_per_camera, rural.budget_gops,
            rural.max_iterations) == (2, 1, 30, 120, 200)
    urban = load_scenario("urban")
    assert urban.images_per_second == 120
    assert load_scenario("parking").budget_gops == 70


def test_scenario_negative_budget(tmp_path):
    raw = json.loads(json.dumps(load_scenario("rural").model_dump()))
    raw["budget_gops"] = -1
    with pytest.raises(SchemaError, match="budget_gops"):
        load_scenario(write_json(tmp_path / "s.json", raw))


def test_scenario_unknown_field(tmp_path):
    raw = load_scenario("rural").model_dump()
    raw["gpu"] = "px2"
    with pytest.raises(SchemaError, match="gpu"):
        load_scenario(write_json(tmp_path / "s.json", raw))


def test_scenario_parse_error_position(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{\n  "name": "x",\n  "budget_gops": 12,,\n}')
    with pytest.raises(SchemaError, match=r"s\.json:3:\d+:"):
        load_scenario(p)


def test_scenario_input_not_divisible(tmp_path):
    raw = load_scenario("rural").model_dump()
    raw["input_w"] = 1000
    with pytest.raises(SchemaError, match="input_w"):
        load_scenario(write_json(tmp_path / "s.json", raw))


# --- cost --------------------------------------------------------------------

def test_cost_width_sweep(tmp_path, capsys):
    out = tmp_path / "sweep.json"
    assert main(["cost", "dsp_sweep", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    for macs in SWEEP_MACS:
        assert f"{macs:,}" in text
    sweep = json.loads(out.read_text())["sweep"]
    assert [row["total_macs"] for row in sweep] == SWEEP_MACS


def test_cost_empty_layer_list(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"input": {"h": 8, "w": 8, "c": 3}, "layers": []})
    out = tmp_path / "r.json"
    assert main(["cost", str(cfg), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["total_macs"] == 0


def test_cost_model_config_verify(tmp_path, capsys):
    cfg = write_json(tmp_path / "m.json", {"width_multiplier": 0.25, "classifier_depth": 512,
                                           "classifier_kernel": 3, "num_classes": 2,
                                           "block_specs_id": "tiny"})
    specs = write_json(tmp_path / "tiny.json", {
        "id": "tiny", "input": {"h": 64, "w": 96}, "cumulative_stride": 32,
        "layers": [{"kind": "standard", "kernel": 3, "stride": 2, "out_channels": 16}]
        + [{"kind": "separable", "kernel": 3, "stride": 2, "out_channels": 32}] * 4
        + [{"kind": "pointwise", "kernel": 1, "out_channels": 64}],
    })
    out = tmp_path / "r.json"
    assert main(["cost", str(cfg), "--block-specs", str(specs), "--verify", "--out", str(out)]) == 0
    assert "match" in capsys.readouterr().out
    report = CostReport.from_dict(json.loads(out.read_text()))
    assert report.total_ops == 2 * report.total_macs > 0


def test_cost_structural_error_names_layer(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {
        "input": {"h": 8, "w": 8, "c": 3},
        "layers": [{"kind": "standard", "kernel": 3, "stride": 2, "out_channels": 4},
                   {"kind": "standard", "kernel": 4, "stride": 2, "out_channels": 4}],
    })
    assert main(["cost", str(cfg)]) == 1
    assert "layers.1" in capsys.readouterr().err


def test_cost_unknown_block_specs(tmp_path, capsys):
    cfg = write_json(tmp_path / "m.json", {"width_multiplier": 1.0, "classifier_depth": 512,
                                           "classifier_kernel": 3, "num_classes": 2,
                                           "block_specs_id": "nope"})
    assert main(["cost", str(cfg)]) == 1


# --- search ------------------------------------------------------------------

def test_search_exhaustive_rural(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["search", "rural", "--method", "exhaustive", "--out", str(out)]) == 0
    res = SearchResult.from_dict(json.loads(out.read_text()))
    assert res.best is not None and 0.95 <= res.utilization <= 1.0
    assert "utilization" in capsys.readouterr().out


def test_search_bo_matches_exhaustive(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["search", "urban", "--method", "bo", "--seed", "7", "--max-iters", "200", "--out", str(a)]) == 0
    assert main(["search", "urban", "--method", "exhaustive", "--out", str(b)]) == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["best"] == rb["best"] and ra["gigaops"] == rb["gigaops"]


def test_search_infeasible(tmp_path, capsys):
    raw = load_scenario("rural").model_dump()
    raw["budget_gops"] = 0.001
    scen = write_json(tmp_path / "s.json", raw)
    out = tmp_path / "r.json"
    assert main(["search", str(scen), "--max-iters", "5", "--out", str(out)]) == 2
    assert json.loads(out.read_text())["best"] is None


def test_search_output_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["search", "parking", "--seed", "3", "--max-iters", "25", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert SearchResult.from_dict(json.loads(a.read_text())).to_dict() == json.loads(a.read_text())


def test_search_missing_file(capsys):
    assert main(["search", "/nonexistent/scenario.json"]) == 1


# --- kernels -----------------------------------------------------------------

def test_kernels_full_64(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernels", "--classes", "7", "--size", "64", "--mode", "full", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    values = np.array([float(v) for v in lines[1:]])
    assert values.size == 64 * 64 * 49
    planes = values.reshape(49, 64 * 64)
    assert np.all(planes == planes[0])
    np.testing.assert_array_equal(planes[0], bilinear_plane(64, 64).coefficients.ravel())


@pytest.mark.parametrize("size,profile", [(3, [0.5, 1, 0.5]), (4, [0.25, 0.75, 0.75, 0.25])])
def test_kernels_small(size, profile, capsys):
    assert main(["kernels", "--classes", "1", "--size", str(size)]) == 0
    lines = capsys.readouterr().out.splitlines()
    values = np.array([float(v) for v in lines[1:]])
    assert values.size == size * size
    np.testing.assert_allclose(values, np.outer(profile, profile).ravel(), atol=1e-12)


# --- upsample ----------------------------------------------------------------

def test_upsample_constant(tmp_path):
    src, out = tmp_path / "x.csv", tmp_path / "y.csv"
    write_tensor_csv(Tensor(np.full((4, 4, 1), 2.5)), src)
    assert main(["upsample", str(src), "--factor", "2", "--out", str(out)]) == 0
    y = read_tensor_csv(out).data
    assert y.shape == (8, 8, 1)
    np.testing.assert_allclose(y[1:7, 1:7], 2.5, atol=1e-12)


@pytest.mark.parametrize("mode", ["diagonal", "full"])
def test_upsample_check(tmp_path, capsys, mode):
    src = tmp_path / "x.csv"
    write_tensor_csv(Tensor(np.random.default_rng(3).standard_normal((8, 8, 2))), src)
    assert main(["upsample", str(src), "--factor", "4", "--mode", mode, "--check"]) == 0
    dev = float(capsys.readouterr().out.strip().split()[-1])
    assert dev <= 1e-10


def test_upsample_odd_factor(tmp_path, capsys):
    src = tmp_path / "x.csv"
    write_tensor_csv(Tensor(np.ones((2, 2, 1))), src)
    assert main(["upsample", str(src), "--factor", "3"]) == 1


def test_upsample_bad_csv(tmp_path, capsys):
    src = tmp_path / "x.csv"
    src.write_text("2,2,1\n1\n2\nabc\n4\n")
    assert main(["upsample", str(src), "--factor", "2"]) == 1
    assert "x.csv:4" in capsys.readouterr().err


# --- validate ----------------------------------------------------------------

def test_validate_shipped_files(capsys):
    from budgetseg.scenario import data_path
    files = sorted(str(p) for p in data_path().rglob("*.json"))
    assert len(files) >= 7
    assert main(["validate", *files]) == 0
    assert capsys.readouterr().out.count(": ok") == len(files)


def test_validate_reports_bad_file(tmp_path, capsys):
    raw = load_scenario("urban").model_dump()
    raw["n_cameras"] = 0
    bad = write_json(tmp_path / "bad.json", raw)
    assert main(["validate", str(bad)]) == 1
    assert "n_cameras" in capsys.readouterr().err
