"""Single-run training loop with best-epoch (validation) selection."""
from __future__ import annotations

import copy
import hashlib
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .dataset import StageLabel, sort_stages
from .errors import EmptyInput, EmptySplit, InvalidArg, NonFiniteActivation, NonFiniteLoss, TooFewSamples
from .loading import LoadedSample, class_indices, make_batches, stack_samples
from .models import Mode, ModelSpec, build_model, forward, save_checkpoint

log = logging.getLogger(__name__)

EVAL_CHUNK = 256


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 0.001
    epochs: int = 100
    batch_size: int = 64
    seed: int = 42
    val_fraction: float = 0.2

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArg("learning_rate must be positive")
        if self.epochs < 1:
            raise InvalidArg("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidArg("batch_size must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise InvalidArg("val_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochMetrics:
    train_loss: float
    train_acc: float
    val_acc: float
    test_acc: float | None


@dataclass
class RunResult:
    per_epoch: list[EpochMetrics]
    best_epoch: int
    best_val_acc: float
    test_acc_at_best: float
    confusion_at_best: list[list[int]]
    seed: int
    classes: tuple[str, ...]
    weights_digest: str = ""
    extra: dict = field(default_factory=dict)
    model: nn.Module | None = field(default=None, repr=False, compare=False)  # best-epoch weights, not serialized

    def to_dict(self) -> dict:
        return {
            "per_epoch": [asdict(m) for m in self.per_epoch],
            "best_epoch": self.best_epoch,
            "best_val_acc": self.best_val_acc,
            "test_acc_at_best": self.test_acc_at_best,
            "confusion_at_best": self.confusion_at_best,
            "seed": self.seed,
            "classes": list(self.classes),
            "weights_digest": self.weights_digest,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            per_epoch=[EpochMetrics(**m) for m in d["per_epoch"]],
            best_epoch=int(d["best_epoch"]),
            best_val_acc=float(d["best_val_acc"]),
            test_acc_at_best=float(d["test_acc_at_best"]),
            confusion_at_best=[[int(v) for v in row] for row in d["confusion_at_best"]],
            seed=int(d["seed"]),
            classes=tuple(d["classes"]),
            weights_digest=d.get("weights_digest", ""),
            extra=d.get("extra", {}),
        )


def epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def split_train_val(samples: Sequence[LoadedSample], val_fraction: float, seed: int):
    """Stratified, seeded split. Each class keeps at least one sample on both sides."""
    if not 0 < val_fraction < 1:
        raise InvalidArg("val_fraction must be in (0, 1)")
    by_class: dict[StageLabel, list[int]] = {}
    for i, s in enumerate(samples):
        by_class.setdefault(s.label, []).append(i)
    rng = np.random.default_rng(seed)
    val_idx = set()
    for label in sort_stages(by_class):
        idx = by_class[label]
        if len(idx) < 2:
            raise TooFewSamples(f"class {label.code} has {len(idx)} sample(s); need at least 2")
        n_val = int(np.floor(val_fraction * len(idx) + 0.5))
        n_val = min(max(n_val, 1), len(idx) - 1)
        chosen = rng.permutation(len(idx))[:n_val]
        val_idx.update(idx[j] for j in chosen)
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def accuracy_from_confusion(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise EmptyInput("confusion matrix is empty")
    return float(np.trace(cm) / total)


def predict(model: nn.Module, inputs: np.ndarray) -> np.ndarray:
    """Class indices for a stacked input array; ties go to the lowest class index."""
    preds = []
    for start in range(0, len(inputs), EVAL_CHUNK):
        logits = forward(model, inputs[start : start + EVAL_CHUNK], Mode.EVAL)
        preds.append(np.argmax(logits.cpu().numpy(), axis=1))
    return np.concatenate(preds)


def evaluate(model: nn.Module, samples: Sequence[LoadedSample], classes: Sequence[StageLabel] | None = None):
    """Window-level accuracy and confusion matrix (rows = true class, columns = predicted)."""
    if not samples:
        raise EmptyInput("no samples to evaluate")
    classes = tuple(classes) if classes is not None else sort_stages(s.label for s in samples)
    x, y = stack_samples(samples, classes)
    cm = confusion_matrix(y, predict(model, x), model.spec.num_classes)
    return accuracy_from_confusion(cm), cm


def weights_digest(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in model.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _has_batchnorm(model: nn.Module) -> bool:
    return any(isinstance(m, nn.modules.batchnorm._BatchNorm) for m in model.modules())


def train_one_run(
    model_spec: ModelSpec,
    train: Sequence[LoadedSample],
    val: Sequence[LoadedSample],
    test: Sequence[LoadedSample] | None,
    settings: TrainSettings,
    *,
    classes: Sequence[StageLabel] | None = None,
    track_test: bool = True,
    checkpoint_path=None,
    on_epoch: Callable[[int, EpochMetrics], None] | None = None,
) -> RunResult:
    """Train with Adam on mean cross-entropy and keep the weights of the best validation epoch.

    ``classes`` fixes the label -> index order (default: stage order of the labels present).
    With ``track_test=False`` the test set is only touched once, after training.
    """
    for name, part in (("train", train), ("val", val), ("test", test)):
        if not part:
            raise EmptySplit(f"{name} split is empty")
    classes = tuple(classes) if classes is not None else sort_stages(s.label for s in [*train, *val, *test])
    if len(classes) != model_spec.num_classes:
        raise InvalidArg(f"{len(classes)} classes but model has {model_spec.num_classes} outputs")
    # label check up front so a stray class fails before any training
    for part in (train, val, test):
        class_indices(part, classes)
    x_train, y_train = stack_samples(train, classes)
    x_val, y_val = stack_samples(val, classes)
    x_test, y_test = stack_samples(test, classes)
    k = model_spec.num_classes

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(settings.seed)
        model = build_model(model_spec)
        optimizer = torch.optim.Adam(model.parameters(), lr=settings.learning_rate)
        skip_singletons = _has_batchnorm(model)

        history: list[EpochMetrics] = []
        best_epoch, best_val, best_state = 0, -1.0, None
        for epoch in range(1, settings.epochs + 1):
            losses = []
            for b_idx, batch in enumerate(make_batches(train, settings.batch_size, epoch_seed(settings.seed, epoch), classes)):
                if skip_singletons and len(batch) < 2:
                    # batch-norm cannot estimate statistics from one sample
                    continue
                try:
                    logits = forward(model, batch.inputs, Mode.TRAIN)
                except NonFiniteActivation:
                    raise NonFiniteLoss(f"non-finite logits at epoch {epoch}, batch {b_idx}") from None
                loss = F.cross_entropy(logits, torch.as_tensor(batch.labels))
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(f"loss became {loss.item()} at epoch {epoch}, batch {b_idx}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(loss.item())

            train_acc = accuracy_from_confusion(confusion_matrix(y_train, predict(model, x_train), k))
            val_acc = accuracy_from_confusion(confusion_matrix(y_val, predict(model, x_val), k))
            test_acc = None
            if track_test:
                test_acc = accuracy_from_confusion(confusion_matrix(y_test, predict(model, x_test), k))
            metrics = EpochMetrics(float(np.mean(losses)) if losses else float("nan"), train_acc, val_acc, test_acc)
            history.append(metrics)
            if on_epoch is not None:
                on_epoch(epoch, metrics)
            log.debug("epoch %d: %s", epoch, metrics)
            if val_acc > best_val:
                best_epoch, best_val = epoch, val_acc
                best_state = copy.deepcopy(model.state_dict())

        digest = weights_digest(model)
        model.load_state_dict(best_state)
        cm = confusion_matrix(y_test, predict(model, x_test), k)

    result = RunResult(
        per_epoch=history,
        best_epoch=best_epoch,
        best_val_acc=best_val,
        test_acc_at_best=accuracy_from_confusion(cm),
        confusion_at_best=cm.tolist(),
        seed=settings.seed,
        classes=tuple(c.code for c in classes),
        weights_digest=digest,
        model=model,
    )
    if checkpoint_path is not None:
        save_checkpoint(model, checkpoint_path, extra={"best_epoch": best_epoch, "classes": list(result.classes)})
    return result
