import json

import pytest

from incdetect.config import ConfigError, PipelineConfig


def test_defaults_are_canonical():
    c = PipelineConfig()
    assert c.bands == ((8, 13), (14, 22), (22, 30), (30, 45), (2, 45), (8, 30))
    assert (c.window_seconds, c.shift_seconds, c.entropy_bins) == (1.5, 0.125, 32)
    assert (c.cva_tau, c.cva_floor, c.cva_cap) == (0.8, 3, 12)
    assert (c.n_prototypes, c.learning_rate, c.epochs) == (4, 0.01, 20)
    assert len(c.grid_alpha) == 10 and len(c.grid_th) == 8


def test_json_round_trip(tmp_path):
    c = PipelineConfig(bands=[[8, 13], [14, 30]], seed=5, test_runs=[4])
    c.save(tmp_path / "c.json")
    back = PipelineConfig.load(tmp_path / "c.json")
    assert back == c and back.bands == ((8, 13), (14, 30))
    assert back.to_json() == c.to_json()


def test_unknown_keys_rejected():
    d = PipelineConfig().to_dict()
    d["windw_seconds"] = 2.0
    with pytest.raises(ConfigError, match="windw_seconds"):
        PipelineConfig.from_dict(d)


@pytest.mark.parametrize("change", [
    {"bands": [[13, 8]]},
    {"bands": [[100, 300]]},
    {"bands": []},
    {"shift_seconds": 0.0},
    {"shift_seconds": 2.0},
    {"entropy_bins": 1},
    {"cva_tau": 0.0},
    {"cva_floor": 13},
    {"n_prototypes": 0},
    {"grid_alpha": [1.0]},
    {"grid_th": [0.5]},
    {"labeling_mode": "imagery"},
    {"feature_method": "wavelet"},
    {"montage": "XYZ"},
    {"train_runs": [1, 2, 4], "test_runs": [4]},
    {"emg_threshold_left": -1.0},
    {"seed": -1},
])
def test_invalid_values(change):
    with pytest.raises(ConfigError):
        PipelineConfig().replace(**change)


def test_bad_json():
    with pytest.raises(ConfigError):
        PipelineConfig.from_json("{")
    with pytest.raises(ConfigError):
        PipelineConfig.from_json(json.dumps([1, 2]))


def test_replace_keeps_other_fields():
    c = PipelineConfig(seed=9).replace(epochs=3)
    assert c.epochs == 3 and c.seed == 9
