import csv

import numpy as np
import pytest

from swarmsense.calibration import (
    CSV_COLUMNS,
    CalibrationSetup,
    calibrate_noise,
    draw_trials,
    median_error,
    run_trials,
    wrapped_error_deg,
    write_csv,
)


def test_wrapped_error():
    assert wrapped_error_deg(179.0, -179.0) == pytest.approx(2.0)
    assert wrapped_error_deg(-90.0, 90.0) == pytest.approx(180.0)
    assert wrapped_error_deg(10.0, 10.0) == 0.0


def test_setup_validation():
    with pytest.raises(ValueError):
        CalibrationSetup(s=0.05, r_range=(0.04, 1.0))
    with pytest.raises(ValueError):
        CalibrationSetup(forward="dipole")
    with pytest.raises(ValueError):
        CalibrationSetup(duration=1e-4)


def test_ideal_chain_noiseless_is_exact():
    ts = draw_trials(CalibrationSetup(adc_bits=None), 300, seed=4)
    res = run_trials(ts, 0.0)
    assert res.valid.all()
    assert res.errors.max() < 1e-5
    assert np.allclose(res.est_r, ts.r, rtol=1e-8)


def test_quantization_alone_costs_accuracy():
    ts = draw_trials(CalibrationSetup(), 300, seed=4)
    assert median_error(ts, 0.0) > 1e-3


def test_error_grows_with_noise():
    ts = draw_trials(CalibrationSetup(), 400, seed=2)
    meds = [median_error(ts, s) for s in (1e-7, 1e-6, 1e-5)]
    assert meds[0] < meds[1] < meds[2]


def test_trials_reproducible():
    a = run_trials(draw_trials(CalibrationSetup(), 50, seed=8), 1e-6)
    b = run_trials(draw_trials(CalibrationSetup(), 50, seed=8), 1e-6)
    assert np.array_equal(a.err_alpha_deg, b.err_alpha_deg)


def test_calibrate_hits_target():
    ts = draw_trials(CalibrationSetup(), 300, seed=3)
    res = calibrate_noise(ts, target_median=5.0, tol=0.05)
    assert res.summary()["median"] == pytest.approx(5.0, abs=0.05)


def test_calibrate_works_with_exact_forward():
    ts = draw_trials(CalibrationSetup(forward="exact"), 300, seed=3)
    res = calibrate_noise(ts, target_median=5.0, tol=0.05)
    assert res.summary()["median"] == pytest.approx(5.0, abs=0.05)


def test_csv_round_trip(tmp_path):
    res = run_trials(draw_trials(CalibrationSetup(), 20, seed=1), 1e-6)
    path = tmp_path / "c.csv"
    assert write_csv(path, res) == 20
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert float(rows[1][4]) == res.err_alpha_deg[0]


def test_empty_trials(tmp_path):
    res = run_trials(draw_trials(CalibrationSetup(), 0, seed=1), 0.0)
    assert res.summary()["median"] is None
    path = tmp_path / "e.csv"
    assert write_csv(path, res) == 0
    assert path.read_text().strip() == ",".join(CSV_COLUMNS)
