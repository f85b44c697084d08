import json

import numpy as np
import pytest

from conftest import HOUR, ORIGIN, hourly_frame, punch_holes, seasonal_panel
from tsar.model import TsarForecaster
from tsar.persistence import FORMAT_VERSION, ModelFormatError, load, load_file, save, save_file


@pytest.fixture(scope="module")
def model_and_frame():
    frame = hourly_frame(seasonal_panel(24 * 8, 2, seed=3))
    return TsarForecaster(past=5, future=3, k_year=0, k_week=0).fit(frame), frame


def test_round_trip_bit_identical(model_and_frame, tmp_path):
    model, frame = model_and_frame
    path = tmp_path / "m.json"
    save_file(model, path)
    again = load_file(path)
    for t in [ORIGIN + 20 * HOUR, ORIGIN + 500 * HOUR]:
        assert np.array_equal(model.predict(frame, t).values, again.predict(frame, t).values)
    assert again.get_params() == model.get_params()
    assert again.gp_report_ == model.gp_report_
    assert save(again) == save(model)


def test_higher_version(model_and_frame):
    doc = json.loads(save(model_and_frame[0]))
    doc["version"] = FORMAT_VERSION + 1
    with pytest.raises(ModelFormatError, match="version"):
        load(json.dumps(doc).encode())


def test_tampered(model_and_frame):
    doc = json.loads(save(model_and_frame[0]))
    doc["payload"]["sigma"][0] *= 2
    with pytest.raises(ModelFormatError, match="corrupt payload"):
        load(json.dumps(doc).encode())
    doc = json.loads(save(model_and_frame[0]))
    doc["checksum"] = "sha256:00"
    with pytest.raises(ModelFormatError, match="corrupt payload"):
        load(json.dumps(doc).encode())


def test_garbage():
    with pytest.raises(ModelFormatError):
        load(b"\x00not json")
    with pytest.raises(ModelFormatError):
        load(b'{"format": "other"}')


def test_unfitted():
    with pytest.raises(Exception):
        save(TsarForecaster())


def test_infinite_scores_survive():
    x = punch_holes(seasonal_panel(24 * 6, 1, seed=1), 0.1)
    model = TsarForecaster(past=2, future=1, k_year=0, k_week=0, k_day=1, k_trend=0).fit(hourly_frame(x))
    model.gp_report_.evaluations[(0, 0)] = float("inf")
    again = load(save(model))
    assert again.gp_report_.evaluations[(0, 0)] == float("inf")


def test_atomic_write_leaves_no_temp(model_and_frame, tmp_path):
    save_file(model_and_frame[0], tmp_path / "m.json")
    assert [p.name for p in tmp_path.iterdir()] == ["m.json"]
