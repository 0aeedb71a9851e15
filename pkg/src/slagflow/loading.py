"""Input loading strategies: single-source, parallel multi-channel and selective embedding."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dataset import StageLabel, sort_stages
from .errors import AxisMismatch, LabelConflict, ShapeMismatch, UnalignedAxes
from .preprocessing import Window


@dataclass(frozen=True)
class Provenance:
    domain_id: int | None
    axes: tuple[str, ...]
    window_index: int


@dataclass(frozen=True, eq=False)
class LoadedSample:
    tensor: np.ndarray  # (channels, length)
    label: StageLabel
    provenance: Provenance

    @property
    def shape(self) -> tuple[int, int]:
        return self.tensor.shape


def load_single_source(windows: Sequence[Window], axis: str) -> list[LoadedSample]:
    out = []
    for w in windows:
        if w.axis != axis:
            raise AxisMismatch(f"window {w.window_index} comes from axis {w.axis!r}, expected {axis!r}")
        out.append(LoadedSample(w.samples[np.newaxis, :], w.label, Provenance(w.domain_id, (axis,), w.window_index)))
    return out


def _aligned(window_groups: Mapping[str, Sequence[Window]]) -> tuple[list[str], int]:
    axes = list(window_groups)
    if not axes:
        raise UnalignedAxes("no axes given")
    counts = {a: len(window_groups[a]) for a in axes}
    if len(set(counts.values())) != 1:
        raise UnalignedAxes(f"window counts differ across axes: {counts}")
    n = counts[axes[0]]
    for i in range(n):
        ref = window_groups[axes[0]][i]
        for a in axes[1:]:
            w = window_groups[a][i]
            if w.window_index != ref.window_index or w.domain_id != ref.domain_id or len(w) != len(ref):
                raise UnalignedAxes(f"position {i}: axis {a!r} is not aligned with axis {axes[0]!r}")
    return axes, n


def load_parallel(window_groups: Mapping[str, Sequence[Window]]) -> list[LoadedSample]:
    """Stack aligned windows of every axis as channels (channel order = mapping order)."""
    axes, n = _aligned(window_groups)
    out = []
    for i in range(n):
        ws = [window_groups[a][i] for a in axes]
        labels = {w.label for w in ws}
        if len(labels) != 1:
            raise LabelConflict(f"position {i}: axes disagree on label {sorted(l.code for l in labels)}")
        tensor = np.stack([w.samples for w in ws])
        out.append(LoadedSample(tensor, ws[0].label, Provenance(ws[0].domain_id, tuple(axes), ws[0].window_index)))
    return out


def load_selective_embedding(window_groups: Mapping[str, Sequence[Window]]) -> list[LoadedSample]:
    """Interleave single-channel windows round-robin over axes: a0, b0, c0, a1, b1, c1, ..."""
    axes, n = _aligned(window_groups)
    out = []
    for i in range(n):
        for a in axes:
            w = window_groups[a][i]
            out.append(LoadedSample(w.samples[np.newaxis, :], w.label, Provenance(w.domain_id, (a,), w.window_index)))
    return out


@dataclass(frozen=True, eq=False)
class Batch:
    samples: list[LoadedSample]
    labels: np.ndarray  # class indices aligned with samples

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def inputs(self) -> np.ndarray:
        return np.stack([s.tensor for s in self.samples])


def infer_classes(samples: Sequence[LoadedSample]) -> tuple[StageLabel, ...]:
    return sort_stages(s.label for s in samples)


def class_indices(samples: Sequence[LoadedSample], classes: Sequence[StageLabel]) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([lookup[s.label] for s in samples], dtype=np.int64)
    except KeyError as exc:
        raise LabelConflict(f"label {exc.args[0]} is not among classes {[c.code for c in classes]}") from None


def stack_samples(samples: Sequence[LoadedSample], classes: Sequence[StageLabel]) -> tuple[np.ndarray, np.ndarray]:
    shapes = {s.shape for s in samples}
    if len(shapes) > 1:
        raise ShapeMismatch(f"samples have differing shapes: {sorted(shapes)}")
    return np.stack([s.tensor for s in samples]), class_indices(samples, classes)


def make_batches(
    samples: Sequence[LoadedSample],
    batch_size: int,
    shuffle_seed: int | None = None,
    classes: Sequence[StageLabel] | None = None,
) -> list[Batch]:
    """Split samples into batches, optionally after a seeded permutation. The last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    shapes = {s.shape for s in samples}
    if len(shapes) > 1:
        raise ShapeMismatch(f"samples have differing shapes: {sorted(shapes)}")
    classes = tuple(classes) if classes is not None else infer_classes(samples)
    labels = class_indices(samples, classes)
    order = np.arange(len(samples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(samples))
    batches = []
    for start in range(0, len(samples), batch_size):
        idx = order[start : start + batch_size]
        batches.append(Batch([samples[i] for i in idx], labels[idx]))
    return batches
