import math
from collections import Counter

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_samples
from slagflow.dataset import StageLabel
from slagflow.errors import EmptyInput, EmptySplit, NonFiniteLoss, TooFewSamples
from slagflow.loading import LoadedSample, Provenance, stack_samples
from slagflow.models import Mode, ModelKind, ModelSpec, build_model, forward, load_checkpoint
from slagflow.training import (
    RunResult,
    TrainSettings,
    accuracy_from_confusion,
    confusion_matrix,
    epoch_seed,
    evaluate,
    split_train_val,
    train_one_run,
    weights_digest,
)

B, S, E = StageLabel.BEFORE_SLAG, StageLabel.DURING_SLAG, StageLabel.EARLY_NO_SLAG
CNN2 = ModelSpec(ModelKind.CNN, 1, 2)


def separable(n_per_class, seed=0, length=32, shift=1.5):
    """Class B sits above zero, class S below."""
    rng = np.random.default_rng(seed)
    out = []
    for label, sign in ((B, 1.0), (S, -1.0)):
        for i in range(n_per_class):
            x = rng.normal(size=(1, length)) + sign * shift
            out.append(LoadedSample(x, label, Provenance(1, ("y",), i)))
    return out


def quick(epochs=3, seed=0, batch_size=8):
    return TrainSettings(epochs=epochs, seed=seed, batch_size=batch_size)


def test_split_sizes_and_stratification():
    samples = make_samples(50)
    train, val = split_train_val(samples, 0.2, seed=1)
    assert len(train) == 80 and len(val) == 20
    assert Counter(s.label for s in val) == {B: 10, S: 10}
    assert {id(s) for s in train}.isdisjoint(id(s) for s in val)


def test_split_minimum_and_too_few():
    train, val = split_train_val(make_samples(2), 0.2, seed=0)
    assert Counter(s.label for s in train) == {B: 1, S: 1}
    assert Counter(s.label for s in val) == {B: 1, S: 1}
    with pytest.raises(TooFewSamples):
        split_train_val(make_samples(1), 0.2, seed=0)


def test_split_is_deterministic():
    samples = make_samples(30)
    a = split_train_val(samples, 0.2, seed=5)
    b = split_train_val(samples, 0.2, seed=5)
    c = split_train_val(samples, 0.2, seed=6)
    ids = lambda part: [id(s) for s in part]
    assert ids(a[1]) == ids(b[1])
    assert ids(a[1]) != ids(c[1])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.integers(2, 40), st.floats(0.05, 0.5), st.integers(0, 1000))
def test_split_partitions(nb, ns, frac, seed):
    samples = make_samples(1, labels=()) + [
        s for lab, n in ((B, nb), (S, ns)) for s in make_samples(n, labels=(lab,))
    ]
    train, val = split_train_val(samples, frac, seed)
    assert Counter(map(id, train + val)) == Counter(map(id, samples))
    for lab in (B, S):
        assert any(s.label is lab for s in train) and any(s.label is lab for s in val)


def test_confusion_and_accuracy_examples():
    y_true = [0] * 10 + [1] * 10
    y_pred = [0] * 9 + [1] + [0] * 2 + [1] * 8
    cm = confusion_matrix(y_true, y_pred, 2)
    assert cm.tolist() == [[9, 1], [2, 8]]
    assert accuracy_from_confusion(cm) == 0.85
    assert accuracy_from_confusion(np.diag([4, 5, 6])) == 1.0
    assert accuracy_from_confusion(confusion_matrix(y_true, [0] * 20, 2)) == 0.5
    with pytest.raises(EmptyInput):
        accuracy_from_confusion(np.zeros((2, 2)))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 4).flatmap(lambda k: st.tuples(
    st.just(k), st.lists(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)), min_size=1, max_size=200))))
def test_confusion_invariants(data):
    k, pairs = data
    y_true, y_pred = zip(*pairs)
    cm = confusion_matrix(y_true, y_pred, k)
    assert cm.sum() == len(pairs)
    assert cm.sum(axis=1).tolist() == [y_true.count(i) for i in range(k)]
    acc = accuracy_from_confusion(cm)
    assert 0.0 <= acc <= 1.0
    assert acc == sum(t == p for t, p in pairs) / len(pairs)


class _Constant(torch.nn.Module):
    def __init__(self, logits):
        super().__init__()
        self.spec = ModelSpec(ModelKind.CNN, 1, len(logits))
        self.dummy = torch.nn.Parameter(torch.zeros(1))
        self.logits = torch.tensor(logits)

    def forward(self, x):
        return self.logits.expand(x.shape[0], -1) + 0 * self.dummy


def test_evaluate_constant_predictor():
    samples = make_samples(10)
    acc, cm = evaluate(_Constant([1.0, 0.0]), samples, (B, S))
    assert acc == 0.5
    assert cm.tolist() == [[10, 0], [10, 0]]


def test_initial_loss_near_log_k():
    for k, labels in ((2, (B, S)), (3, (E, B, S))):
        samples = make_samples(16, labels=labels, length=512)
        x, y = stack_samples(samples, labels)
        for kind in ModelKind:
            for seed in range(4):
                # eval mode: train-mode dropout at p=0.5 adds seed-dependent logit noise
                model = build_model(ModelSpec(kind, 1, k), seed=seed)
                loss = F.cross_entropy(forward(model, x, Mode.EVAL), torch.as_tensor(y)).item()
                assert abs(loss - math.log(k)) <= 0.2 * math.log(k), (kind, k, seed, loss)


def test_one_epoch_run():
    data = separable(20)
    train, val = split_train_val(data, 0.2, 0)
    result = train_one_run(CNN2, train, val, separable(10, seed=1), quick(epochs=1))
    assert result.best_epoch == 1
    assert len(result.per_epoch) == 1
    assert result.classes == ("B", "S")
    assert np.asarray(result.confusion_at_best).sum() == 20


def test_learns_separable_problem():
    train, val = split_train_val(separable(40), 0.2, 0)
    result = train_one_run(CNN2, train, val, separable(20, seed=1), quick(epochs=8))
    assert result.test_acc_at_best >= 0.9
    assert max(m.train_acc for m in result.per_epoch) >= 0.9


def test_best_epoch_is_first_maximum():
    train, val = split_train_val(separable(20, shift=0.3), 0.2, 0)
    result = train_one_run(CNN2, train, val, separable(10, seed=1), quick(epochs=6))
    vals = [m.val_acc for m in result.per_epoch]
    assert result.best_epoch == vals.index(max(vals)) + 1
    assert result.best_val_acc == max(vals)
    assert result.test_acc_at_best == pytest.approx(accuracy_from_confusion(result.confusion_at_best))


def test_run_is_reproducible():
    train, val = split_train_val(separable(20), 0.2, 0)
    test = separable(10, seed=1)
    a = train_one_run(CNN2, train, val, test, quick(seed=9))
    b = train_one_run(CNN2, train, val, test, quick(seed=9))
    c = train_one_run(CNN2, train, val, test, quick(seed=10))
    assert a.per_epoch == b.per_epoch
    assert a.weights_digest == b.weights_digest
    assert a.weights_digest != c.weights_digest


def test_test_set_does_not_influence_training():
    train, val = split_train_val(separable(20), 0.2, 0)
    tracked = train_one_run(CNN2, train, val, separable(10, seed=1), quick(), track_test=True)
    blind = train_one_run(CNN2, train, val, separable(10, seed=1), quick(), track_test=False)
    other = train_one_run(CNN2, train, val, separable(10, seed=77), quick(), track_test=True)
    assert tracked.weights_digest == blind.weights_digest == other.weights_digest
    assert all(m.test_acc is None for m in blind.per_epoch)
    assert [m.val_acc for m in tracked.per_epoch] == [m.val_acc for m in other.per_epoch]


def test_checkpoint_reproduces_best_accuracy(tmp_path):
    train, val = split_train_val(separable(20), 0.2, 0)
    test = separable(10, seed=1)
    result = train_one_run(CNN2, train, val, test, quick(), checkpoint_path=tmp_path / "best.npz")
    model, extra = load_checkpoint(tmp_path / "best.npz")
    assert extra["best_epoch"] == result.best_epoch
    assert weights_digest(model) == weights_digest(result.model)
    acc, cm = evaluate(model, test, (B, S))
    assert acc == result.test_acc_at_best
    assert cm.tolist() == result.confusion_at_best


def test_nan_input_fails_loudly():
    data = separable(10)
    data[0] = LoadedSample(np.full((1, 32), np.nan), B, data[0].provenance)
    train, val = data[:7] + data[10:17], data[7:10] + data[17:]
    with pytest.raises(NonFiniteLoss):
        train_one_run(CNN2, train, val, separable(5, seed=1), quick(epochs=1, batch_size=32))


def test_empty_splits():
    data = separable(5)
    with pytest.raises(EmptySplit):
        train_one_run(CNN2, data, [], data, quick())
    with pytest.raises(EmptySplit):
        train_one_run(CNN2, data, data, [], quick())


def test_run_result_round_trip():
    train, val = split_train_val(separable(10), 0.2, 0)
    result = train_one_run(CNN2, train, val, separable(5, seed=1), quick(epochs=2))
    again = RunResult.from_dict(result.to_dict())
    assert again == result


def test_epoch_seeds_differ():
    assert len({epoch_seed(42, e) for e in range(1, 101)}) == 100
    assert epoch_seed(42, 1) != epoch_seed(43, 1)
