"""Ingestion of triaxial slag-flow vibration recordings.

A dataset is addressed through a :class:`DatasetIndex`: a list of
(domain, stage, condition) cells pointing either at CSV files on disk (via a
JSON manifest) or at a synthetic tone generator used when the real recordings
are not available.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    AxisLengthMismatch,
    DuplicateEntry,
    EmptyRecording,
    InvalidSpec,
    MalformedManifest,
    MissingFile,
    ParseError,
)

AXES = ("x", "y", "z")
CANONICAL_RATE_HZ = 6400.0
CANONICAL_LENGTH = 32000
NUM_DOMAINS = 16
MANIFEST_VERSION = 1


class StageLabel(enum.Enum):
    EARLY_NO_SLAG = "E"
    BEFORE_SLAG = "B"
    DURING_SLAG = "S"

    @property
    def code(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        return _STAGE_ORDER.index(self)

    @classmethod
    def from_code(cls, code: str) -> "StageLabel":
        try:
            return cls(code)
        except ValueError:
            raise ValueError(f"unknown stage code {code!r}; expected one of E, B, S") from None


_STAGE_ORDER = list(StageLabel)


def sort_stages(stages) -> tuple[StageLabel, ...]:
    return tuple(sorted(set(stages), key=lambda s: s.index))


class Source(enum.Enum):
    DISK = "disk"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True, eq=False)
class SensorRecording:
    domain_id: int
    stage: StageLabel
    axes: Mapping[str, np.ndarray]
    sample_rate_hz: float
    condition_index: int

    def __post_init__(self):
        if not self.axes:
            raise EmptyRecording(f"domain {self.domain_id} stage {self.stage.code}: no axes")
        lengths = {name: len(values) for name, values in self.axes.items()}
        if len(set(lengths.values())) != 1:
            raise AxisLengthMismatch(f"axis lengths differ: {lengths}")
        if next(iter(lengths.values())) == 0:
            raise EmptyRecording(f"domain {self.domain_id} stage {self.stage.code}: zero samples")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.axes.values())))

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(self.axes)


DEFAULT_TONES = {
    "E": {"x": 30.0, "y": 35.0, "z": 40.0},
    "B": {"x": 60.0, "y": 70.0, "z": 80.0},
    "S": {"x": 120.0, "y": 140.0, "z": 160.0},
}


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Parameters of the tone-plus-noise stand-in dataset.

    ``tone_table`` maps stage code -> axis -> frequency in Hz. A frequency of
    ``None`` leaves that axis as pure noise. Each domain draws its own gain
    ``1 + domain_jitter * u`` and phase ``2*pi*domain_jitter * v`` with
    ``u, v ~ U(-1, 1)``.
    """

    num_domains: int = NUM_DOMAINS
    samples_per_recording: int = CANONICAL_LENGTH
    sample_rate_hz: float = CANONICAL_RATE_HZ
    tone_table: Mapping[str, Mapping[str, float | None]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_TONES.items()}
    )
    amplitude: float = 1.0
    noise_sigma: float = 0.1
    domain_jitter: float = 0.1
    seed: int = 0

    def __eq__(self, other):
        return isinstance(other, SyntheticSpec) and self.to_dict() == other.to_dict()

    @property
    def axes(self) -> tuple[str, ...]:
        first = next(iter(self.tone_table.values()))
        return tuple(first)

    def validate(self) -> "SyntheticSpec":
        if self.num_domains < 1:
            raise InvalidSpec("num_domains must be >= 1")
        if self.samples_per_recording < 1:
            raise InvalidSpec("samples_per_recording must be >= 1")
        if not self.sample_rate_hz > 0:
            raise InvalidSpec("sample_rate_hz must be positive")
        if self.noise_sigma < 0 or self.amplitude < 0 or self.domain_jitter < 0:
            raise InvalidSpec("amplitude, noise_sigma and domain_jitter must be non-negative")
        if not self.tone_table:
            raise InvalidSpec("tone_table is empty")
        axes = None
        nyquist = self.sample_rate_hz / 2
        for code, row in self.tone_table.items():
            try:
                StageLabel.from_code(code)
            except ValueError as exc:
                raise InvalidSpec(str(exc)) from None
            if axes is None:
                axes = tuple(row)
                if not axes:
                    raise InvalidSpec("tone_table rows must name at least one axis")
            elif tuple(row) != axes:
                raise InvalidSpec("every tone_table row must list the same axes in the same order")
            for axis, freq in row.items():
                if freq is None:
                    continue
                if not 0 <= freq < nyquist:
                    raise InvalidSpec(
                        f"tone {freq} Hz for stage {code} axis {axis} is not below Nyquist ({nyquist} Hz)"
                    )
        return self

    def to_dict(self) -> dict:
        return {
            "num_domains": self.num_domains,
            "samples_per_recording": self.samples_per_recording,
            "sample_rate_hz": self.sample_rate_hz,
            "tone_table": {k: dict(v) for k, v in self.tone_table.items()},
            "amplitude": self.amplitude,
            "noise_sigma": self.noise_sigma,
            "domain_jitter": self.domain_jitter,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidSpec(f"unknown synthetic spec fields: {sorted(unknown)}")
        try:
            spec = cls(**data)
            int(spec.num_domains), int(spec.samples_per_recording), float(spec.sample_rate_hz)
        except (TypeError, ValueError) as exc:
            raise InvalidSpec(str(exc)) from None
        return spec


@dataclass(frozen=True, eq=False)
class IndexEntry:
    domain: int
    stage: StageLabel
    condition: int
    sample_rate_hz: float
    path: Path | None = None
    synthetic: SyntheticSpec | None = None

    @property
    def key(self) -> tuple[int, StageLabel, int]:
        return (self.domain, self.stage, self.condition)

    def describe(self) -> str:
        where = str(self.path) if self.path is not None else "synthetic"
        return f"domain {self.domain} stage {self.stage.code}-{self.condition} ({where})"


@dataclass(frozen=True, eq=False)
class DatasetIndex:
    entries: tuple[IndexEntry, ...]
    source: Source
    sample_rate_hz: float
    root: Path | None = None
    synthetic: SyntheticSpec | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[IndexEntry]:
        return iter(self.entries)

    @property
    def domains(self) -> tuple[int, ...]:
        return tuple(sorted({e.domain for e in self.entries}))

    def select(self, domains=None, stages=None) -> list[IndexEntry]:
        return [
            e
            for e in self.entries
            if (domains is None or e.domain in domains) and (stages is None or e.stage in stages)
        ]


@dataclass
class ValidationReport:
    missing: list[tuple[int, StageLabel]]
    length_anomalies: list[tuple[int, StageLabel, int, int]]
    rate_anomalies: list[tuple[int, StageLabel, int, float]]
    unreadable: list[tuple[str, str]]
    expected_length: int
    expected_rate_hz: float

    @property
    def is_complete(self) -> bool:
        return not (self.missing or self.length_anomalies or self.rate_anomalies or self.unreadable)

    def lines(self) -> list[str]:
        out = []
        for domain, stage in self.missing:
            out.append(f"missing: domain {domain} stage {stage.code} ({stage.name})")
        for domain, stage, cond, n in self.length_anomalies:
            out.append(
                f"length anomaly: domain {domain} stage {stage.code}-{cond} has {n} samples,"
                f" expected {self.expected_length}"
            )
        for domain, stage, cond, rate in self.rate_anomalies:
            out.append(
                f"rate anomaly: domain {domain} stage {stage.code}-{cond} at {rate} Hz,"
                f" expected {self.expected_rate_hz}"
            )
        for where, msg in self.unreadable:
            out.append(f"unreadable: {where}: {msg}")
        return out


def _check_unique(entries) -> None:
    seen = set()
    for e in entries:
        if e.key in seen:
            raise DuplicateEntry(
                f"duplicate entry for domain {e.domain}, stage {e.stage.code}, condition {e.condition}"
            )
        seen.add(e.key)


def load_manifest(path) -> DatasetIndex:
    """Read a JSON manifest. Paths are resolved relative to the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedManifest(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise MalformedManifest(f"{path}: top level must be an object")
    for key in ("version", "sample_rate_hz", "entries"):
        if key not in doc:
            raise MalformedManifest(f"{path}: missing field {key!r}")
    if doc["version"] != MANIFEST_VERSION:
        raise MalformedManifest(f"{path}: unsupported manifest version {doc['version']!r}")
    rate = doc["sample_rate_hz"]
    if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not rate > 0:
        raise MalformedManifest(f"{path}: sample_rate_hz must be a positive number")
    rows = doc["entries"]
    if not isinstance(rows, list) or not rows:
        raise MalformedManifest(f"{path}: entries must be a non-empty list")

    root = path.parent
    entries = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or set(row) != {"domain", "stage", "condition", "path"}:
            raise MalformedManifest(f"{path}: entry {i} must have exactly domain, stage, condition, path")
        domain, cond = row["domain"], row["condition"]
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (domain, cond)) or domain < 1:
            raise MalformedManifest(f"{path}: entry {i} domain/condition must be positive integers")
        if row["stage"] not in ("E", "B", "S"):
            raise MalformedManifest(f"{path}: entry {i} stage must be E, B or S")
        if not isinstance(row["path"], str) or not row["path"]:
            raise MalformedManifest(f"{path}: entry {i} path must be a non-empty string")
        entries.append(
            IndexEntry(
                domain=domain,
                stage=StageLabel.from_code(row["stage"]),
                condition=cond,
                sample_rate_hz=float(rate),
                path=(root / row["path"]),
            )
        )
    _check_unique(entries)
    for e in entries:
        if not e.path.is_file():
            raise MissingFile(f"{e.describe()}: file does not exist")
    return DatasetIndex(tuple(entries), Source.DISK, float(rate), root=root)


def _parse_csv_slow(path: Path, n_axes: int) -> list[list[float]]:
    # Diagnostic path: tells ragged columns (AxisLengthMismatch) from bad numbers (ParseError).
    columns: list[list[float]] = [[] for _ in range(n_axes)]
    ended = [False] * n_axes
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > n_axes:
                raise ParseError(f"{path}:{lineno}: {len(row)} fields, header has {n_axes}")
            for j in range(n_axes):
                cell = row[j].strip() if j < len(row) else ""
                if not cell:
                    ended[j] = True
                    continue
                if ended[j]:
                    raise ParseError(f"{path}:{lineno}: gap in column {j + 1}")
                try:
                    columns[j].append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad numeric field {cell!r}") from None
    return columns


def read_csv_axes(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"recording not found: {path}")
    with path.open() as fh:
        header = fh.readline().strip()
    names = [h.strip() for h in header.split(",")] if header else []
    if not names or any(not n for n in names) or len(set(names)) != len(names):
        raise ParseError(f"{path}: header must list distinct axis names, got {header!r}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # header-only file
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError:
        columns = _parse_csv_slow(path, len(names))
        return {n: np.asarray(c, dtype=np.float64) for n, c in zip(names, columns)}
    if data.size == 0:
        return {n: np.empty(0) for n in names}
    if data.shape[1] != len(names):
        raise ParseError(f"{path}: {data.shape[1]} columns, header has {len(names)}")
    return {n: np.ascontiguousarray(data[:, j]) for j, n in enumerate(names)}


def _stage_seed(stage: StageLabel) -> int:
    return stage.index


def synthesize_axes(spec: SyntheticSpec, domain: int, stage: StageLabel) -> dict[str, np.ndarray]:
    n = spec.samples_per_recording
    t = np.arange(n, dtype=np.float64) / spec.sample_rate_hz
    dom_rng = np.random.default_rng([spec.seed, domain])
    gain = 1.0 + spec.domain_jitter * dom_rng.uniform(-1.0, 1.0)
    phase = 2.0 * math.pi * spec.domain_jitter * dom_rng.uniform(-1.0, 1.0)
    noise_rng = np.random.default_rng([spec.seed, domain, 1 + _stage_seed(stage)])
    axes = {}
    for axis, freq in spec.tone_table[stage.code].items():
        signal = np.zeros(n) if freq is None else spec.amplitude * gain * np.sin(2 * math.pi * freq * t + phase)
        if spec.noise_sigma > 0:
            signal = signal + noise_rng.normal(0.0, spec.noise_sigma, n)
        axes[axis] = signal
    return axes


def read_recording(entry: IndexEntry) -> SensorRecording:
    if entry.synthetic is not None:
        axes = synthesize_axes(entry.synthetic, entry.domain, entry.stage)
    elif entry.path is not None:
        axes = read_csv_axes(entry.path)
    else:
        raise ValueError(f"{entry.describe()}: entry has neither a path nor a synthetic descriptor")
    return SensorRecording(
        domain_id=entry.domain,
        stage=entry.stage,
        axes=axes,
        sample_rate_hz=entry.sample_rate_hz,
        condition_index=entry.condition,
    )


def generate_synthetic(spec: SyntheticSpec | None = None) -> DatasetIndex:
    """Index a synthetic dataset. Samples are generated lazily by :func:`read_recording`."""
    spec = (spec or SyntheticSpec()).validate()
    stages = [StageLabel.from_code(c) for c in spec.tone_table]
    entries = tuple(
        IndexEntry(
            domain=d,
            stage=stage,
            condition=d,
            sample_rate_hz=float(spec.sample_rate_hz),
            synthetic=spec,
        )
        for d in range(1, spec.num_domains + 1)
        for stage in sort_stages(stages)
    )
    return DatasetIndex(entries, Source.SYNTHETIC, float(spec.sample_rate_hz), synthetic=spec)


def validate_dataset(
    index: DatasetIndex,
    expected_length: int | None = None,
    expected_rate_hz: float | None = None,
    num_domains: int = NUM_DOMAINS,
) -> ValidationReport:
    """Check grid coverage and per-file length/rate against the canonical recording format.

    For a synthetic index the expected length and rate default to the generator's
    own settings; for disk data they default to 32000 samples at 6400 Hz.
    """
    if index.synthetic is not None:
        expected_length = expected_length or index.synthetic.samples_per_recording
        expected_rate_hz = expected_rate_hz or index.synthetic.sample_rate_hz
    expected_length = expected_length or CANONICAL_LENGTH
    expected_rate_hz = expected_rate_hz or CANONICAL_RATE_HZ

    present = {(e.domain, e.stage) for e in index}
    missing = [
        (d, s) for d in range(1, num_domains + 1) for s in StageLabel if (d, s) not in present
    ]
    length_anomalies, rate_anomalies, unreadable = [], [], []
    for e in index:
        if not math.isclose(e.sample_rate_hz, expected_rate_hz):
            rate_anomalies.append((e.domain, e.stage, e.condition, e.sample_rate_hz))
        try:
            rec = read_recording(e)
        except (ParseError, AxisLengthMismatch, EmptyRecording, MissingFile) as exc:
            unreadable.append((e.describe(), str(exc)))
            continue
        if rec.n_samples != expected_length:
            length_anomalies.append((e.domain, e.stage, e.condition, rec.n_samples))
    return ValidationReport(
        missing, length_anomalies, rate_anomalies, unreadable, expected_length, expected_rate_hz
    )


def write_recording_csv(recording: SensorRecording, path) -> None:
    path = Path(path)
    data = np.column_stack([recording.axes[a] for a in recording.axis_names])
    # %.17g round-trips every float64 exactly
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=",".join(recording.axis_names), comments="")


def write_dataset(index: DatasetIndex, out_dir) -> DatasetIndex:
    """Materialize ``index`` as CSV files plus ``manifest.json`` and return the on-disk index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for e in index:
        rel = f"{e.stage.code}-{e.condition}.csv" if e.condition == e.domain else (
            f"d{e.domain}_{e.stage.code}-{e.condition}.csv"
        )
        write_recording_csv(read_recording(e), out_dir / rel)
        rows.append({"domain": e.domain, "stage": e.stage.code, "condition": e.condition, "path": rel})
    manifest = {"version": MANIFEST_VERSION, "sample_rate_hz": index.sample_rate_hz, "entries": rows}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return load_manifest(out_dir / "manifest.json")
