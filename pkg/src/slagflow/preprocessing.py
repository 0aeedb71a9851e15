"""Z-score standardization, train-only RMS normalization and fixed-length windowing."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import StageLabel
from .errors import DegenerateSignal, EmptyResult, NotFitted, TooShort, UnknownAxis, ZeroSignal


class NormKind(enum.Enum):
    ZSCORE = "zscore"
    RMS = "rms"


@dataclass(frozen=True)
class Normalizer:
    kind: NormKind
    rms_value: Mapping[str, float] = field(default_factory=dict)
    fitted: bool = False

    def __post_init__(self):
        if self.kind is NormKind.RMS and self.fitted:
            bad = {a: v for a, v in self.rms_value.items() if not v > 0}
            if bad:
                raise ValueError(f"rms_value must be positive, got {bad}")

    def apply(self, signal, axis: str) -> np.ndarray:
        if self.kind is NormKind.ZSCORE:
            return standardize(signal)
        return apply_rms(self, signal, axis)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "rms_value": dict(self.rms_value), "fitted": self.fitted}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Normalizer":
        return cls(NormKind(data["kind"]), dict(data.get("rms_value", {})), bool(data.get("fitted", False)))


ZSCORE = Normalizer(NormKind.ZSCORE)


def standardize(signal) -> np.ndarray:
    """Return ``(x - mean) / std`` using this signal's own mean and population std."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("standardize expects a 1-D signal")
    if x.size < 2:
        raise TooShort(f"need at least 2 samples, got {x.size}")
    mu = x.mean()
    sigma = x.std()
    # float round-off leaves a tiny non-zero std on constant inputs
    if not sigma > 1e-12 * np.abs(x).max():
        raise DegenerateSignal("signal has zero variance")
    return (x - mu) / sigma


def fit_rms(train_signals: Mapping[str, Sequence]) -> Normalizer:
    """Fit one RMS value per axis over the concatenation of that axis's training signals."""
    if not train_signals:
        raise ValueError("no axes given")
    rms = {}
    for axis, signals in train_signals.items():
        arrays = [np.asarray(s, dtype=np.float64).ravel() for s in signals]
        count = sum(a.size for a in arrays)
        if count == 0:
            raise TooShort(f"axis {axis!r} has no training samples")
        peak = max(float(np.abs(a).max()) if a.size else 0.0 for a in arrays)
        if peak == 0.0:
            raise ZeroSignal(f"axis {axis!r} is identically zero in the training data")
        # scale by the peak so squares neither underflow nor overflow
        total = sum(float(np.dot(a / peak, a / peak)) for a in arrays)
        rms[axis] = peak * math.sqrt(total / count)
    return Normalizer(NormKind.RMS, rms, fitted=True)


def apply_rms(norm: Normalizer, signal, axis: str) -> np.ndarray:
    if norm.kind is not NormKind.RMS or not norm.fitted:
        raise NotFitted("apply_rms needs a fitted RMS normalizer")
    if axis not in norm.rms_value:
        raise UnknownAxis(axis)
    return np.asarray(signal, dtype=np.float64) / norm.rms_value[axis]


@dataclass(frozen=True, eq=False)
class Window:
    samples: np.ndarray
    label: StageLabel | None
    domain_id: int | None
    axis: str | None
    window_index: int

    def __len__(self) -> int:
        return len(self.samples)


def window(
    signal,
    length: int,
    *,
    label: StageLabel | None = None,
    domain_id: int | None = None,
    axis: str | None = None,
) -> list[Window]:
    """Cut ``signal`` into consecutive non-overlapping windows; the tail is dropped."""
    if length < 1:
        raise ValueError("window length must be >= 1")
    x = np.asarray(signal, dtype=np.float64)
    count = x.size // length
    if count == 0:
        raise EmptyResult(f"signal of {x.size} samples is shorter than window length {length}")
    blocks = np.array(x[: count * length]).reshape(count, length)
    return [Window(blocks[i], label, domain_id, axis, i) for i in range(count)]
