"""Generator ground-truth checks: beat train, modulation, delay, SNR."""

import numpy as np
import pytest

from scgvitals import siggen
from scgvitals.errors import ValidationError
from scgvitals.siggen import ScgConfig, generate_scg, measured_snr_db


def test_shapes_and_determinism():
    cfg = ScgConfig(fs=120.0, duration=12.0, snr_db=15.0, seed=4)
    a1, a2, truth = generate_scg(cfg)
    assert len(a1) == len(a2) == int(120 * 12)
    b1, b2, _ = generate_scg(cfg)
    assert np.array_equal(a1.az, b1.az)
    assert np.array_equal(a2.ax, b2.ax)
    c1, _, _ = generate_scg(ScgConfig(fs=120.0, duration=12.0, snr_db=15.0, seed=5))
    assert not np.array_equal(a1.az, c1.az)


def test_beat_times_match_heart_rate():
    cfg = ScgConfig(duration=20.0, hr_bpm=75.0)
    _, _, truth = generate_scg(cfg)
    assert truth.beat_times[0] == 0.0
    diffs = np.diff(truth.beat_times)
    assert np.allclose(diffs, 60.0 / 75.0)
    assert len(truth.beat_times) == int(np.ceil(20.0 / (60.0 / 75.0)))


def test_wavelet_shape_at_isolated_beat():
    # one beat far from its neighbors reproduces the windowed cosine exactly
    cfg = ScgConfig(fs=250.0, duration=4.0, hr_bpm=30.0, snr_db=np.inf)
    _, _, truth = generate_scg(cfg)
    t = np.arange(len(truth.clean_acc1)) / 250.0
    tb = truth.beat_times[1]
    sel = np.abs(t - tb) < 3 * siggen.BEAT_SIGMA_S
    tt = t[sel] - tb
    am = 1.0 + siggen.AM_DEPTH * np.sin(2 * np.pi * truth.rr_hz * t[sel])
    expected = (
        siggen.BEAT_AMPLITUDE["x"]
        * am
        * np.exp(-0.5 * (tt / siggen.BEAT_SIGMA_S) ** 2)
        * np.cos(2 * np.pi * siggen.BEAT_CARRIER_HZ * tt)
    )
    assert np.allclose(truth.beat_acc1[0][sel], expected, atol=1e-12)


def test_respiration_only_on_first_site_z():
    cfg = ScgConfig(duration=10.0, snr_db=np.inf)
    _, _, truth = generate_scg(cfg)
    t = np.arange(len(truth.clean_acc1)) / cfg.fs
    resp = siggen.RESP_AMPLITUDE * np.sin(2 * np.pi * truth.rr_hz * t)
    assert np.allclose(truth.clean_acc1.az - truth.beat_acc1[2], resp, atol=1e-12)
    assert np.allclose(truth.clean_acc2.az, truth.beat_acc2[2], atol=1e-12)
    assert np.allclose(truth.clean_acc1.ax, truth.beat_acc1[0], atol=1e-12)


def test_site_delay_is_subsample_exact():
    # densely sample the second site's train and locate its peak: it must
    # sit delay seconds after the first site's, not a rounded sample count
    delay_ms = 41.7
    cfg = ScgConfig(fs=1000.0, duration=3.0, hr_bpm=40.0, ptt_ms=delay_ms, snr_db=np.inf)
    _, _, truth = generate_scg(cfg)
    x1, x2 = truth.beat_acc1[0], truth.beat_acc2[0]
    tb = truth.beat_times[1]
    i1 = int(np.argmax(x1))
    i2 = int(np.argmax(x2))
    assert abs((i2 - i1) / 1000.0 * 1000.0 - delay_ms) <= 1.0  # within one 1 kHz sample
    # cross-correlation locates the lag to within one sample at this rate
    n = len(x1)
    lags = np.arange(-n + 1, n)
    xc = np.correlate(x2, x1, mode="full")
    best = lags[int(np.argmax(xc))]
    assert abs(best - delay_ms / 1000.0 * 1000.0) <= 1.0
    assert tb > 0


def test_amplitude_modulation_depth():
    # beat envelope peaks should vary by the modulation depth over a breath
    cfg = ScgConfig(duration=30.0, hr_bpm=120.0, rr_brpm=6.0, snr_db=np.inf)
    _, _, truth = generate_scg(cfg)
    x = truth.beat_acc1[0]
    fs = cfg.fs
    peaks = []
    for tb in truth.beat_times[1:-1]:
        i = int(round(tb * fs))
        peaks.append(np.abs(x[max(0, i - 3) : i + 4]).max())
    peaks = np.array(peaks)
    ratio = peaks.max() / peaks.min()
    expected = (1 + siggen.AM_DEPTH) / (1 - siggen.AM_DEPTH)
    assert ratio == pytest.approx(expected, rel=0.08)


def test_snr_is_honored_per_axis():
    cfg = ScgConfig(duration=60.0, snr_db=10.0, seed=2)
    _, _, truth = generate_scg(cfg)
    for site in (1, 2):
        for axis in range(3):
            got = measured_snr_db(truth, axis=axis, site=site)
            assert got == pytest.approx(10.0, abs=0.35)
    clean = generate_scg(ScgConfig(duration=5.0, snr_db=np.inf))[2]
    assert measured_snr_db(clean) == np.inf


def test_sensor_clipping_bound():
    cfg = ScgConfig(duration=10.0, snr_db=-10.0, seed=0)
    a1, a2, _ = generate_scg(cfg)
    for s in (a1, a2):
        for ax in (s.ax, s.ay, s.az):
            assert np.max(np.abs(ax)) <= siggen.SENSOR_RANGE_G + 1e-12


def test_config_validation():
    with pytest.raises(ValidationError):
        ScgConfig(hr_bpm=20.0)
    with pytest.raises(ValidationError):
        ScgConfig(rr_brpm=50.0)
    with pytest.raises(ValidationError):
        ScgConfig(duration=0.0)
    with pytest.raises(ValidationError):
        ScgConfig(ptt_ms=-1.0)
    with pytest.raises(ValidationError):
        ScgConfig(seed=-1)
