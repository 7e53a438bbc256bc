import json
import math

import pytest

import rmfgl

CONFIG = {
    "params": {"k": 2, "mu": [[0, 1], [0.5, 0]], "b": [1, 1.5], "r": [0.5, 1]},
    "horizon": 0.5,
    "m_list": [3],
    "paths": 10000,
    "seed": 4,
    "grid_step": 0.05,
}


def test_validate_round_trip():
    cfg = rmfgl.validate_config(CONFIG)
    assert cfg["params"]["k"] == 2
    assert cfg["params"]["tau"] == ["infinite", "infinite"]


def test_invalid_config_has_code():
    bad = json.loads(json.dumps(CONFIG))
    bad["params"]["r"] = [2, 1]
    with pytest.raises(rmfgl.RmfglError) as err:
        rmfgl.validate_config(bad)
    assert err.value.code == "ResetAboveBase"
    with pytest.raises(rmfgl.RmfglError) as err:
        rmfgl.validate_config({**CONFIG, "extra": 1})
    assert err.value.code == "ConfigInvalid"


def test_single_neuron_pmf_oracle():
    pmf = rmfgl.single_neuron_pmf(2.0, 1.0, 1.0)
    assert pmf[0] == pytest.approx(math.exp(-2), abs=1e-14)
    assert pmf[1] == pytest.approx(2 * (math.exp(-1) - math.exp(-2)), abs=1e-13)


def test_stein_and_chen_stein():
    g = rmfgl.stein_solve(1.0, [0], 20)["g"]
    assert g[1] == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert g[2] == pytest.approx(1 - 2 * math.exp(-1), abs=1e-15)
    term1, term2, bound = rmfgl.chen_stein_terms(11, 2.0, 5.0)
    assert term2 == pytest.approx(0.1)
    assert term1 == pytest.approx(0.2616295090390226)


def test_simulators_are_deterministic():
    a = rmfgl.simulate_rmf(CONFIG, 3, path_id=7)
    b = rmfgl.simulate_rmf(CONFIG, 3, path_id=7)
    assert a["counts"] == b["counts"]
    assert len(a["lambda"]) == len(a["times"]) * 3 * 2
    gl = rmfgl.simulate_gl(CONFIG, path_id=1)
    assert gl["times"][-1] == 0.5
    e = rmfgl.simulate_rmf(CONFIG, 3, path_id=7, embedded=True)
    assert e["M"] == 3


def test_empirical_tv_of_identical_law_is_small():
    samples = [k % 2 for k in range(1000)]
    value, se = rmfgl.empirical_tv(samples, 0.5)
    assert 0.0 <= value <= 1.0
    assert se >= 0.0


def test_run_experiment(tmp_path):
    ok, summary = rmfgl.run_experiment(CONFIG, "stein", tmp_path / "out")
    assert ok
    assert summary["stein_equation"] is True
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert "stein.csv" in manifest["files"]
    with pytest.raises(rmfgl.RmfglError) as err:
        rmfgl.run_experiment(CONFIG, "stein", tmp_path / "out")
    assert err.value.code == "OutputDirNotEmpty"
    with pytest.raises(rmfgl.RmfglError) as err:
        rmfgl.emit_summary(tmp_path / "out")
    assert err.value.code == "IncompleteRun"
