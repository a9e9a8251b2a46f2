import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from foodchain.signal import (
    CsvFormatError, TimeSeriesFrame, fit_apply_minmax, haar_dwt, haar_idwt, make_windows, read_frame_csv,
    resample_yield, wavelet_denoise, write_frame_csv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def frame_of(*cols, target=None, start="2021-03-01T00:00:00", step=3600):
    n = len(cols[0]) if cols else len(target)
    stamps = np.datetime64(start, "s") + np.arange(n) * np.timedelta64(step, "s")
    chans = {f"c{k}": np.asarray(c, dtype=float) for k, c in enumerate(cols)}
    return TimeSeriesFrame(stamps, chans, np.zeros(n) if target is None else np.asarray(target, float), "y")


def test_minmax_linear_map():
    out, state = fit_apply_minmax(frame_of([2, 4, 6], target=[0, 1, 2]))
    assert out.channels["c0"].tolist() == [0.0, 0.5, 1.0]


def test_minmax_constant_channel_warns_and_zeroes():
    with pytest.warns(UserWarning, match="constant"):
        out, _ = fit_apply_minmax(frame_of([7, 7, 7], target=[1, 2, 3]))
    assert out.channels["c0"].tolist() == [0.0, 0.0, 0.0]


def test_minmax_fit_on_leading_rows_extrapolates():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out, state = fit_apply_minmax(frame_of([2, 4, 6], target=[0, 1, 5]), train_fraction=2 / 3)
    assert out.channels["c0"].tolist() == [0.0, 1.0, 2.0]
    assert state.mins[0] == 2 and state.maxs[0] == 4


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.tuples(st.integers(4, 30), st.integers(1, 3)), elements=finite))
def test_minmax_inverse_recovers_training_rows(mat):
    n = len(mat)
    fr = frame_of(*mat[:, :-1].T, target=mat[:, -1]) if mat.shape[1] > 1 else frame_of(target=mat[:, 0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out, state = fit_apply_minmax(fr, 0.7)
    k = max(1, round(0.7 * n))
    scaled = out.columns()[:k]
    back = state.invert(scaled)
    varying = state.maxs > state.mins
    assert np.allclose(back[:, varying], fr.columns()[:k][:, varying], atol=1e-12 * (1 + np.abs(mat).max()))
    assert np.all(scaled >= -1e-12) and np.all(scaled <= 1 + 1e-12)


def test_haar_oracles():
    assert wavelet_denoise(np.array([5.0, 5, 5, 5])).tolist() == [5, 5, 5, 5]
    assert wavelet_denoise(np.array([1.0, 3, 1, 3])).tolist() == [2, 2, 2, 2]


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.sampled_from([4, 8, 16, 32]), elements=finite), st.integers(1, 2))
def test_denoise_equals_zeroed_detail_reconstruction(x, levels):
    approx, details = haar_dwt(x, levels)
    ref = haar_idwt(approx, [np.zeros_like(d) for d in details])
    assert np.allclose(wavelet_denoise(x, levels), ref, rtol=0, atol=1e-12 * (1 + np.abs(x).max()))


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(2, 65), elements=finite), st.integers(1, 3))
def test_haar_round_trip(x, levels):
    if len(x) % 2 ** levels:
        with pytest.raises(ValueError):
            haar_dwt(x, levels)
        return
    approx, details = haar_dwt(x, levels)
    back = haar_idwt(approx, details)[: len(x)]
    assert np.max(np.abs(back - x)) < 1e-10 * (1 + np.abs(x).max())


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(2, 64), elements=finite), st.integers(1, 2))
def test_denoise_idempotent_length_preserving_and_energy(x, levels):
    if len(x) < 2 ** levels:
        return
    once = wavelet_denoise(x, levels)
    assert once.shape == x.shape
    assert np.array_equal(wavelet_denoise(once, levels), once)
    if len(x) % (2 ** levels) == 0:
        assert np.sum(once ** 2) <= np.sum(x ** 2) * (1 + 1e-12) + 1e-12


def test_denoise_along_an_axis_matches_rowwise():
    X = np.random.default_rng(0).normal(size=(3, 8, 2))
    out = wavelet_denoise(X, 1, axis=1)
    for i in range(3):
        for j in range(2):
            assert np.array_equal(out[i, :, j], wavelet_denoise(X[i, :, j], 1))


def test_denoise_too_deep_raises():
    with pytest.raises(ValueError):
        wavelet_denoise(np.ones(3), levels=2)


@pytest.mark.parametrize("n,expected", [(100, 85), (16, 1)])
def test_window_counts(n, expected):
    data = make_windows(frame_of(np.arange(n)), window=15, horizon_steps=1, splits=None)
    assert len(data) == expected
    assert data.X.shape == (expected, 15, 2)


def test_window_too_short_raises():
    with pytest.raises(ValueError):
        make_windows(frame_of(np.arange(15)), window=15, horizon_steps=1, splits=None)


def test_window_targets_and_leads():
    n = 60
    fr = frame_of(np.arange(n) * 10.0, target=np.arange(n, dtype=float))
    for h, lead in [(1, 1), (2, 6), (3, 12)]:
        data = make_windows(fr, window=5, horizon_steps=h, splits=None)
        assert len(data) == n - 5 - lead + 1
        # last input row holds the target at index i+4; the label is lead hours later
        assert np.array_equal(data.y, data.X[:, -1, -1] + lead)


def test_chronological_splits_never_straddle_or_leak():
    n = 400
    fr = frame_of(np.arange(n), target=np.sin(np.arange(n)))
    data = make_windows(fr, window=15, horizon_steps=3)
    ends = {s: data.input_end[data.mask(s)] for s in ("train", "val", "test")}
    targets = {s: data.target_time[data.mask(s)] for s in ("train", "val", "test")}
    assert targets["train"].max() < ends["val"].min()
    assert targets["val"].max() < ends["test"].min()
    # the windows of each split only contain rows of that split
    assert data.target_time[data.mask("train")].max() < fr.timestamps[int(0.7 * n)]


def test_csv_round_trip_and_line_numbered_errors(tmp_path):
    fr = frame_of([1.5, 2.5, 3.5], target=[0.1, 0.2, 0.3])
    p = tmp_path / "s.csv"
    write_frame_csv(fr, p)
    back = read_frame_csv(p)
    assert back.target.tolist() == fr.target.tolist()
    assert back.channel_names == ["c0"]
    lines = p.read_text().splitlines()
    lines[2] = lines[2].split(",")[0] + ",abc,0.2"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(CsvFormatError, match=":3"):
        read_frame_csv(p)


def test_resample_yield_examples():
    hours = 24 * 8
    env = frame_of(np.full(hours, 10.0), target=np.zeros(hours))
    weekly = TimeSeriesFrame(np.array(["2021-03-01T00:00:00", "2021-03-08T00:00:00"], dtype="datetime64[s]"),
                             {}, np.array([7.0, 14.0]), "yield")
    daily = resample_yield(env, weekly)
    assert daily.target[:8].tolist() == [7, 8, 9, 10, 11, 12, 13, 14]
    assert np.allclose(daily.channels["c0"], 10.0)


def test_resample_yield_daily_mean_and_errors():
    env = frame_of(np.arange(1, 49, dtype=float), target=np.zeros(48))
    weekly = TimeSeriesFrame(np.array(["2021-03-01T00:00:00", "2021-03-02T00:00:00"], dtype="datetime64[s]"),
                             {}, np.array([1.0, 2.0]), "yield")
    daily = resample_yield(env, weekly)
    assert daily.channels["c0"][0] == 12.5
    one = TimeSeriesFrame(np.array(["2021-03-01T00:00:00"], dtype="datetime64[s]"), {}, np.array([1.0]), "yield")
    with pytest.raises(ValueError):
        resample_yield(env, one)
