import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slagflow.dataset import StageLabel
from slagflow.errors import DegenerateSignal, EmptyResult, NotFitted, TooShort, UnknownAxis, ZeroSignal
from slagflow.preprocessing import NormKind, Normalizer, ZSCORE, apply_rms, fit_rms, standardize, window

signals = arrays(
    np.float64,
    st.integers(2, 200),
    elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
)


def test_standardize_example():
    root_1_5 = math.sqrt(1.5)  # (6 - 4) / sqrt(8/3)
    np.testing.assert_allclose(standardize([2, 4, 6]), [-root_1_5, 0.0, root_1_5], rtol=1e-12, atol=1e-15)


def test_standardize_degenerate_and_short():
    with pytest.raises(DegenerateSignal):
        standardize([5, 5, 5])
    with pytest.raises(DegenerateSignal):
        standardize([0.1] * 7)
    with pytest.raises(TooShort):
        standardize([1.0])


@settings(max_examples=200, deadline=None)
@given(signals)
def test_standardize_moments(x):
    assume(x.std() > 1e-6 * max(1.0, np.abs(x).max()))
    z = standardize(x)
    assert len(z) == len(x)
    assert abs(z.mean()) < 1e-6 * max(1.0, abs(x.max()))
    assert abs(z.std() - 1.0) < 1e-6


@settings(max_examples=100, deadline=None)
@given(signals)
def test_standardize_idempotent(x):
    assume(x.std() > 1e-6 * max(1.0, np.abs(x).max()))
    once = standardize(x)
    np.testing.assert_allclose(standardize(once), once, atol=1e-9, rtol=0)


def test_fit_rms_examples():
    norm = fit_rms({"y": [[3, 3], [-3, -3]]})
    assert norm.rms_value["y"] == 3.0
    assert norm.fitted and norm.kind is NormKind.RMS

    ident = fit_rms({"x": [[1, 1, 1, 1]]})
    assert ident.rms_value["x"] == 1.0
    np.testing.assert_array_equal(apply_rms(ident, [0.5, -2.0, 7.0], "x"), [0.5, -2.0, 7.0])


def test_fit_rms_zero_axis():
    with pytest.raises(ZeroSignal):
        fit_rms({"x": [[1.0, 2.0]], "z": [[0.0, 0.0], [0.0]]})
    with pytest.raises(TooShort):
        fit_rms({"x": [[]]})


def test_apply_rms_examples():
    norm = Normalizer(NormKind.RMS, {"y": 3.0}, fitted=True)
    np.testing.assert_array_equal(apply_rms(norm, [3, -3, 6], "y"), [1.0, -1.0, 2.0])
    with pytest.raises(UnknownAxis):
        apply_rms(norm, [1.0], "w")
    with pytest.raises(NotFitted):
        apply_rms(Normalizer(NormKind.RMS), [1.0], "y")
    with pytest.raises(NotFitted):
        apply_rms(ZSCORE, [1.0], "y")


@settings(max_examples=50, deadline=None)
@given(st.lists(signals, min_size=1, max_size=5))
def test_rms_of_normalized_training_data_is_one(train):
    assume(any(np.any(s != 0) for s in train))
    norm = fit_rms({"x": train})
    normalized = np.concatenate([apply_rms(norm, s, "x") for s in train])
    assert math.sqrt(np.mean(normalized**2)) == pytest.approx(1.0, abs=1e-6)


def _pipeline(train, test):
    norm = fit_rms({"y": train})
    return norm, [apply_rms(norm, s, "y") for s in train], [apply_rms(norm, s, "y") for s in test]


def test_rms_has_no_test_leakage():
    rng = np.random.default_rng(0)
    train = [rng.normal(size=300) for _ in range(4)]
    test = [rng.normal(size=300) for _ in range(2)]
    norm_a, train_a, _ = _pipeline(train, test)
    perturbed = [t * 100 + 7 for t in test]
    norm_b, train_b, _ = _pipeline(train, perturbed)
    assert norm_a.rms_value["y"] == norm_b.rms_value["y"]
    for a, b in zip(train_a, train_b):
        assert a.tobytes() == b.tobytes()


@settings(max_examples=50, deadline=None)
@given(signals, st.floats(-1e3, 1e3, allow_nan=False))
def test_apply_rms_is_linear(s, c):
    norm = Normalizer(NormKind.RMS, {"x": 2.5}, fitted=True)
    np.testing.assert_allclose(apply_rms(norm, c * s, "x"), c * apply_rms(norm, s, "x"), rtol=1e-12, atol=1e-300)


def test_normalizer_json_round_trip():
    norm = fit_rms({"x": [[1.0, 2.0]], "y": [[3.0, -4.0]]})
    assert Normalizer.from_dict(json.loads(json.dumps(norm.to_dict()))) == norm


def test_window_counts():
    assert len(window(np.arange(32000.0), 512)) == 62
    one = window(np.arange(512.0), 512)
    assert len(one) == 1
    np.testing.assert_array_equal(one[0].samples, np.arange(512.0))
    with pytest.raises(EmptyResult):
        window(np.arange(511.0), 512)


def test_window_metadata():
    ws = window(np.arange(10.0), 3, label=StageLabel.DURING_SLAG, domain_id=4, axis="z")
    assert [w.window_index for w in ws] == [0, 1, 2]
    assert all(w.label is StageLabel.DURING_SLAG and w.domain_id == 4 and w.axis == "z" for w in ws)
    # window_index * L is the source offset
    assert all(w.samples[0] == 3 * w.window_index for w in ws)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 500), elements=st.floats(-10, 10)), st.integers(1, 64))
def test_window_concatenation(x, length):
    assume(len(x) >= length)
    ws = window(x, length)
    assert len(ws) == len(x) // length
    assert all(len(w) == length for w in ws)
    np.testing.assert_array_equal(np.concatenate([w.samples for w in ws]), x[: len(ws) * length])
