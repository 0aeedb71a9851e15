"""Leave-one-domain-out folds, the hyperparameter grid, the ablation suite and experiment execution."""
from __future__ import annotations

import enum
import json
import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import AXES, DatasetIndex, SensorRecording, StageLabel, read_recording, sort_stages
from .errors import ConfigError, ExperimentFailed, TooFewDomains
from .loading import LoadedSample, load_parallel, load_selective_embedding, load_single_source
from .models import ModelKind, ModelSpec
from .preprocessing import fit_rms, standardize, window
from .training import RunResult, TrainSettings, split_train_val, train_one_run

log = logging.getLogger(__name__)

DEFAULT_BASE_SEED = 42
FULL_REPEATS = 10
FULL_EPOCHS = 100
FULL_LEARNING_RATE = 0.001
ALL_DOMAINS = tuple(range(1, 17))

E, B, S = StageLabel.EARLY_NO_SLAG, StageLabel.BEFORE_SLAG, StageLabel.DURING_SLAG
TWO_CLASS = (B, S)
THREE_CLASS = (E, B, S)


class Preprocessing(enum.Enum):
    ZSCORE = "zscore"
    RMS = "rms"
    NONE = "none"


class Loading(enum.Enum):
    SINGLE_SOURCE = "single_source"
    PARALLEL = "parallel"
    SELECTIVE_EMBEDDING = "selective_embedding"


@dataclass(frozen=True)
class FoldSpec:
    test_domain: int
    train_domains: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "train_domains", frozenset(self.train_domains))
        if self.test_domain in self.train_domains:
            raise ValueError(f"test domain {self.test_domain} is also a training domain")
        if not self.train_domains:
            raise ValueError("a fold needs at least one training domain")

    @property
    def label(self) -> str:
        return f"fold-{self.test_domain:02d}"

    @property
    def domains(self) -> frozenset[int]:
        return self.train_domains | {self.test_domain}

    def to_dict(self) -> dict:
        return {"test_domain": self.test_domain, "train_domains": sorted(self.train_domains)}

    @classmethod
    def from_dict(cls, d) -> "FoldSpec":
        return cls(int(d["test_domain"]), frozenset(int(x) for x in d["train_domains"]))


def cross_domain_folds(domains: Iterable[int] = ALL_DOMAINS) -> list[FoldSpec]:
    """One fold per domain holding that domain out, highest test domain first."""
    domains = frozenset(domains)
    if len(domains) < 2:
        raise TooFewDomains(f"need at least 2 domains, got {sorted(domains)}")
    return [FoldSpec(d, domains - {d}) for d in sorted(domains, reverse=True)]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model_kind: ModelKind
    preprocessing: Preprocessing
    loading: Loading
    axes: tuple[str, ...]
    classes: tuple[StageLabel, ...]
    window_length: int
    batch_size: int
    folds: tuple[FoldSpec, ...]
    repeats: int = FULL_REPEATS
    settings: TrainSettings = field(default_factory=TrainSettings)

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "classes", sort_stages(self.classes))
        object.__setattr__(self, "folds", tuple(self.folds))
        if self.loading is Loading.SINGLE_SOURCE and len(self.axes) != 1:
            raise ConfigError(f"{self.name}: single-source loading takes exactly one axis")
        if self.loading is not Loading.SINGLE_SOURCE and len(self.axes) < 2:
            raise ConfigError(f"{self.name}: {self.loading.value} loading needs at least two axes")
        if len(set(self.axes)) != len(self.axes):
            raise ConfigError(f"{self.name}: repeated axis")
        if len(self.classes) < 2:
            raise ConfigError(f"{self.name}: need at least two classes")
        if self.window_length < 1 or self.batch_size < 1 or self.repeats < 1:
            raise ConfigError(f"{self.name}: window_length, batch_size and repeats must be positive")
        if not self.folds:
            raise ConfigError(f"{self.name}: no folds")
        if self.settings.batch_size != self.batch_size:
            object.__setattr__(self, "settings", replace(self.settings, batch_size=self.batch_size))

    @property
    def config_id(self) -> str:
        return self.name

    @property
    def in_channels(self) -> int:
        return len(self.axes) if self.loading is Loading.PARALLEL else 1

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.model_kind, in_channels=self.in_channels, num_classes=len(self.classes))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model_kind": self.model_kind.value,
            "preprocessing": self.preprocessing.value,
            "loading": self.loading.value,
            "axes": list(self.axes),
            "classes": [c.code for c in self.classes],
            "window_length": self.window_length,
            "batch_size": self.batch_size,
            "folds": [f.to_dict() for f in self.folds],
            "repeats": self.repeats,
            "settings": self.settings.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        try:
            folds = d.get("folds")
            if folds is None:
                folds = cross_domain_folds(d.get("domains", ALL_DOMAINS))
            else:
                folds = [FoldSpec.from_dict(f) for f in folds]
            return cls(
                name=d["name"],
                model_kind=ModelKind(d["model_kind"]),
                preprocessing=Preprocessing(d["preprocessing"]),
                loading=Loading(d["loading"]),
                axes=tuple(d["axes"]),
                classes=tuple(StageLabel.from_code(c) for c in d["classes"]),
                window_length=int(d["window_length"]),
                batch_size=int(d["batch_size"]),
                folds=tuple(folds),
                repeats=int(d.get("repeats", FULL_REPEATS)),
                settings=TrainSettings(**d.get("settings", {})),
            )
        except (KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad experiment config: {exc!r}") from None


# Hyperparameter grid with reported results: y-axis, before vs during slag, test domain 16.
# (model, preprocessing, batch size, input length, train %, validation %, test mean %, test std %)
GRID_ROWS = [
    (ModelKind.CNN, Preprocessing.ZSCORE, 64, 512, 99.40, 99.67, 76.69, 2.96),
    (ModelKind.CNN, Preprocessing.ZSCORE, 64, 1024, 99.35, 99.59, 68.06, 2.26),
    (ModelKind.CNN, Preprocessing.ZSCORE, 64, 2048, 99.87, 99.13, 71.00, 4.48),
    (ModelKind.CNN, Preprocessing.ZSCORE, 128, 512, 99.93, 99.41, 77.58, 1.76),
    (ModelKind.CNN, Preprocessing.ZSCORE, 128, 1024, 99.88, 99.64, 65.16, 6.17),
    (ModelKind.CNN, Preprocessing.ZSCORE, 128, 2048, 99.37, 99.65, 66.33, 5.47),
    (ModelKind.CNN, Preprocessing.RMS, 64, 512, 99.71, 99.15, 77.66, 1.49),
    (ModelKind.CNN, Preprocessing.RMS, 64, 1024, 99.33, 99.38, 69.03, 3.80),
    (ModelKind.CNN, Preprocessing.RMS, 64, 2048, 99.70, 99.92, 66.00, 4.42),
    (ModelKind.CNN, Preprocessing.RMS, 128, 512, 99.66, 99.13, 76.37, 2.72),
    (ModelKind.CNN, Preprocessing.RMS, 128, 1024, 99.89, 99.60, 66.77, 4.34),
    (ModelKind.CNN, Preprocessing.RMS, 128, 2048, 99.78, 99.16, 66.00, 4.16),
    (ModelKind.CNN_LSTM, Preprocessing.ZSCORE, 64, 512, 99.93, 99.55, 82.06, 2.98),
    (ModelKind.CNN_LSTM, Preprocessing.ZSCORE, 64, 1024, 99.36, 99.76, 65.64, 3.54),
    (ModelKind.CNN_LSTM, Preprocessing.ZSCORE, 64, 2048, 99.69, 99.99, 56.33, 5.47),
    (ModelKind.CNN_LSTM, Preprocessing.ZSCORE, 128, 512, 99.36, 99.62, 81.77, 3.87),
    (ModelKind.CNN_LSTM, Preprocessing.ZSCORE, 128, 1024, 99.37, 99.62, 65.65, 2.98),
    (ModelKind.CNN_LSTM, Preprocessing.ZSCORE, 128, 2048, 99.55, 99.38, 57.41, 4.09),
    (ModelKind.CNN_LSTM, Preprocessing.RMS, 64, 512, 99.69, 99.34, 82.76, 2.91),
    (ModelKind.CNN_LSTM, Preprocessing.RMS, 64, 1024, 99.11, 99.68, 63.55, 5.82),
    (ModelKind.CNN_LSTM, Preprocessing.RMS, 64, 2048, 99.63, 99.82, 55.67, 3.00),
    (ModelKind.CNN_LSTM, Preprocessing.RMS, 128, 512, 99.33, 99.61, 81.45, 3.75),
    (ModelKind.CNN_LSTM, Preprocessing.RMS, 128, 1024, 99.79, 99.82, 65.32, 2.31),
    (ModelKind.CNN_LSTM, Preprocessing.RMS, 128, 2048, 99.93, 99.67, 57.33, 5.54),
]


@dataclass(frozen=True)
class AblationRow:
    method: str
    cnn: bool
    lstm: bool
    rms: bool
    x: bool
    y: bool
    z: bool
    loading: Loading
    classes: tuple[StageLabel, ...]
    described_model: str  # architecture named in the row's free-text description
    note: str


_SINGLE = Loading.SINGLE_SOURCE

# Checkmark columns as printed. ``described_model`` records where the text disagrees.
ABLATION_ROWS = [
    AblationRow("A1", True, False, True, True, False, False, _SINGLE, TWO_CLASS, "cnn_lstm", "x only, B/S"),
    AblationRow("A2", True, False, True, False, True, False, _SINGLE, TWO_CLASS, "cnn_lstm", "y only, B/S"),
    AblationRow("A3", True, False, True, False, False, True, _SINGLE, TWO_CLASS, "cnn_lstm", "z only, B/S"),
    AblationRow("A4", True, True, True, True, False, False, _SINGLE, TWO_CLASS, "lstm", "x only, B/S"),
    AblationRow("A5", True, True, True, False, True, False, _SINGLE, TWO_CLASS, "cnn_lstm", "y only, B/S"),
    AblationRow("A6", True, True, True, False, False, True, _SINGLE, TWO_CLASS, "cnn_lstm", "z only, B/S"),
    AblationRow("A7", True, True, False, False, True, False, _SINGLE, THREE_CLASS, "cnn_lstm", "y only, E/B/S, raw"),
    AblationRow("A8", True, True, True, False, True, False, _SINGLE, THREE_CLASS, "cnn_lstm", "y only, E/B/S"),
    AblationRow("M9", True, True, True, True, True, True, Loading.SELECTIVE_EMBEDDING, TWO_CLASS, "cnn_lstm",
                "xyz selective embedding, B/S"),
    AblationRow("M10", True, True, True, True, True, True, Loading.PARALLEL, TWO_CLASS, "cnn_lstm",
                "xyz parallel channels, B/S"),
]

# Reported accuracies (percent, mean and std) for the ablation methods that have them.
ABLATION_REPORTED = {
    "M9": [(99.10, 0.30)],
    "M10": [(93.56, 2.23), (93.09, 2.50)],  # reported twice with different values
    "A2": [(63.13, 2.00)],
    "A6": [(61.76, 1.67)],
    "A8": [(50.68, 2.93)],
}


def _full_settings(seed: int = DEFAULT_BASE_SEED, batch_size: int = 64) -> TrainSettings:
    return TrainSettings(learning_rate=FULL_LEARNING_RATE, epochs=FULL_EPOCHS, batch_size=batch_size, seed=seed)


def grid_config_name(kind: ModelKind, prep: Preprocessing, batch: int, length: int) -> str:
    return f"{kind.value}-{prep.value}-b{batch}-L{length}"


def hyperparameter_grid(base_seed: int = DEFAULT_BASE_SEED) -> list[ExperimentConfig]:
    """The 24 grid configurations (fold: test on 16, train on 1-15)."""
    fold = cross_domain_folds(ALL_DOMAINS)[0]
    return [
        ExperimentConfig(
            name=grid_config_name(kind, prep, batch, length),
            model_kind=kind,
            preprocessing=prep,
            loading=Loading.SINGLE_SOURCE,
            axes=("y",),
            classes=TWO_CLASS,
            window_length=length,
            batch_size=batch,
            folds=(fold,),
            settings=_full_settings(base_seed, batch),
        )
        for kind, prep, batch, length, *_ in GRID_ROWS
    ]


def ablation_model_kind(row: AblationRow) -> ModelKind:
    if row.cnn and row.lstm:
        return ModelKind.CNN_LSTM
    if row.cnn:
        return ModelKind.CNN
    raise ConfigError(f"{row.method}: no supported model for cnn={row.cnn}, lstm={row.lstm}")


def ablation_suite(base_seed: int = DEFAULT_BASE_SEED, domains: Iterable[int] = ALL_DOMAINS) -> list[ExperimentConfig]:
    """The ten ablation methods A1-A8, M9, M10, each over every leave-one-domain-out fold."""
    folds = tuple(cross_domain_folds(domains))
    configs = []
    for row in ABLATION_ROWS:
        axes = tuple(a for a, on in zip(AXES, (row.x, row.y, row.z)) if on)
        configs.append(
            ExperimentConfig(
                name=row.method,
                model_kind=ablation_model_kind(row),
                preprocessing=Preprocessing.RMS if row.rms else Preprocessing.NONE,
                loading=row.loading,
                axes=axes,
                classes=row.classes,
                window_length=512,
                batch_size=64,
                folds=folds,
                settings=_full_settings(base_seed, 64),
            )
        )
    return configs


def ablation_conflicts() -> list[str]:
    """Rows whose description names a different architecture than the checkmarks."""
    out = []
    for row in ABLATION_ROWS:
        built = ablation_model_kind(row).value
        if row.described_model != built:
            out.append(f"{row.method}: described as {row.described_model} but checkmarks give {built}; built as {built}")
    return out


# ---------------------------------------------------------------- execution


def load_recordings(index: DatasetIndex, config: ExperimentConfig) -> list[SensorRecording]:
    domains = set().union(*(f.domains for f in config.folds))
    entries = index.select(domains=domains, stages=set(config.classes))
    found = {(e.domain, e.stage) for e in entries}
    missing = [(d, s.code) for d in sorted(domains) for s in config.classes if (d, s) not in found]
    if missing:
        raise ConfigError(f"{config.name}: dataset lacks (domain, stage) cells {missing}")
    recordings = [read_recording(e) for e in entries]
    for rec in recordings:
        absent = [a for a in config.axes if a not in rec.axes]
        if absent:
            raise ConfigError(f"{config.name}: domain {rec.domain_id} stage {rec.stage.code} lacks axes {absent}")
    return recordings


def _recording_samples(rec: SensorRecording, config: ExperimentConfig, prepare) -> list[LoadedSample]:
    groups = {
        a: window(prepare(rec, a), config.window_length, label=rec.stage, domain_id=rec.domain_id, axis=a)
        for a in config.axes
    }
    if config.loading is Loading.SINGLE_SOURCE:
        (axis,) = config.axes
        return load_single_source(groups[axis], axis)
    if config.loading is Loading.PARALLEL:
        return load_parallel(groups)
    return load_selective_embedding(groups)


def fold_samples(config: ExperimentConfig, recordings: Sequence[SensorRecording], fold: FoldSpec):
    """Preprocess, window and load every recording of a fold.

    Returns ``(train_pool, test, normalizer)``. RMS statistics come from the
    training domains only; z-scoring uses each file's own statistics.
    """
    train_recs = [r for r in recordings if r.domain_id in fold.train_domains]
    test_recs = [r for r in recordings if r.domain_id == fold.test_domain]
    if not train_recs or not test_recs:
        raise ConfigError(f"{config.name} {fold.label}: no recordings for the train or test side")
    normalizer = None
    if config.preprocessing is Preprocessing.RMS:
        normalizer = fit_rms({a: [r.axes[a] for r in train_recs] for a in config.axes})

        def prepare(rec, axis):
            return normalizer.apply(rec.axes[axis], axis)

    elif config.preprocessing is Preprocessing.ZSCORE:

        def prepare(rec, axis):
            return standardize(rec.axes[axis])

    else:

        def prepare(rec, axis):
            return np.asarray(rec.axes[axis], dtype=np.float64)

    train = [s for r in train_recs for s in _recording_samples(r, config, prepare)]
    test = [s for r in test_recs for s in _recording_samples(r, config, prepare)]
    return train, test, normalizer


def run_seed(config: ExperimentConfig, repeat: int) -> int:
    return config.settings.seed + repeat


def run_single(
    config: ExperimentConfig,
    recordings: Sequence[SensorRecording],
    fold: FoldSpec,
    repeat: int,
    checkpoint_path=None,
) -> RunResult:
    seed = run_seed(config, repeat)
    pool, test, normalizer = fold_samples(config, recordings, fold)
    train, val = split_train_val(pool, config.settings.val_fraction, seed)
    settings = replace(config.settings, seed=seed)
    result = train_one_run(
        config.model_spec(), train, val, test, settings, classes=config.classes, checkpoint_path=checkpoint_path
    )
    result.extra.update(
        {
            "config_id": config.config_id,
            "test_domain": fold.test_domain,
            "repeat": repeat,
            "n_train": len(train),
            "n_val": len(val),
            "n_test": len(test),
            "normalizer": normalizer.to_dict() if normalizer else {"kind": config.preprocessing.value},
            "assumptions": [
                "validation = stratified window-level split of the training domains",
                "best epoch chosen by validation accuracy",
                "RMS fitted per axis over all training-domain recordings",
            ],
        }
    )
    return result


def summarize(values: Sequence[float]) -> tuple[float, float, bool]:
    """Mean and sample standard deviation; with one value the std is reported as 0 and flagged undefined."""
    if not values:
        raise ValueError("nothing to summarize")
    mean = statistics.fmean(values)
    if len(values) < 2:
        return mean, 0.0, False
    return mean, statistics.stdev(values), True


@dataclass
class AggregateResult:
    """Repeats of one configuration on one fold."""

    config_id: str
    test_domain: int
    accuracies: list[float]
    confusions: list[list[list[int]]]
    mean: float = 0.0
    std: float = 0.0
    std_defined: bool = False

    def __post_init__(self):
        self.mean, self.std, self.std_defined = summarize(self.accuracies)

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "test_domain": self.test_domain,
            "accuracies": self.accuracies,
            "confusions": self.confusions,
            "mean": self.mean,
            "std": self.std,
            "std_defined": self.std_defined,
        }

    @classmethod
    def from_dict(cls, d) -> "AggregateResult":
        # mean/std are recomputed from the raw accuracies
        return cls(d["config_id"], int(d["test_domain"]), list(d["accuracies"]), d["confusions"])

    @property
    def total_confusion(self) -> np.ndarray:
        return np.sum(np.asarray(self.confusions, dtype=np.int64), axis=0)


@dataclass
class ExperimentResult:
    """All folds of one configuration. ``mean``/``std`` pool every (fold, repeat) test accuracy."""

    config_id: str
    folds: list[AggregateResult]
    classes: tuple[str, ...] = ()
    config: dict = field(default_factory=dict)
    mean: float = 0.0
    std: float = 0.0
    std_defined: bool = False

    def __post_init__(self):
        self.folds = sorted(self.folds, key=lambda a: -a.test_domain)
        values = self.all_accuracies
        if values:
            self.mean, self.std, self.std_defined = summarize(values)

    @property
    def all_accuracies(self) -> list[float]:
        return [v for f in self.folds for v in f.accuracies]

    @property
    def fold_means(self) -> dict[int, float]:
        return {f.test_domain: f.mean for f in self.folds}

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "classes": list(self.classes),
            "config": self.config,
            "mean": self.mean,
            "std": self.std,
            "std_defined": self.std_defined,
            "folds": [f.to_dict() for f in self.folds],
        }

    @classmethod
    def from_dict(cls, d) -> "ExperimentResult":
        return cls(
            d["config_id"],
            [AggregateResult.from_dict(f) for f in d["folds"]],
            tuple(d.get("classes", ())),
            d.get("config", {}),
        )


def aggregate_runs(config_id: str, runs: Mapping[tuple[int, int], RunResult], classes=(), config=None) -> ExperimentResult:
    """Deterministic reduce over runs keyed by (test_domain, repeat)."""
    by_fold: dict[int, list[tuple[int, RunResult]]] = {}
    for (domain, repeat), run in runs.items():
        by_fold.setdefault(domain, []).append((repeat, run))
    folds = []
    for domain, items in by_fold.items():
        items.sort(key=lambda t: t[0])
        folds.append(
            AggregateResult(
                config_id,
                domain,
                [r.test_acc_at_best for _, r in items],
                [r.confusion_at_best for _, r in items],
            )
        )
    return ExperimentResult(config_id, folds, tuple(classes), dict(config or {}))


def run_path(results_dir, config_id: str, fold: FoldSpec, repeat: int) -> Path:
    return Path(results_dir) / config_id / fold.label / f"repeat-{repeat:02d}.json"


def _load_finished(path: Path, config: ExperimentConfig) -> RunResult | None:
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if doc.get("config") != config.to_dict():
        return None
    try:
        return RunResult.from_dict(doc["result"])
    except (KeyError, TypeError, ValueError):
        return None


def write_run(path: Path, config: ExperimentConfig, fold: FoldSpec, repeat: int, result: RunResult) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": config.to_dict(),
        "fold": fold.to_dict(),
        "repeat": repeat,
        "settings": replace(config.settings, seed=run_seed(config, repeat)).to_dict(),
        "result": result.to_dict(),
    }
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(doc, indent=1))
    tmp.replace(path)


_WORKER_RECORDINGS: list[SensorRecording] = []


def _init_worker(recordings):
    import torch

    torch.set_num_threads(1)
    global _WORKER_RECORDINGS
    _WORKER_RECORDINGS = recordings


def _worker_job(config, fold, repeat, checkpoint_path):
    result = run_single(config, _WORKER_RECORDINGS, fold, repeat, checkpoint_path)
    result.model = None
    return result


def run_experiment(
    config: ExperimentConfig,
    index: DatasetIndex,
    *,
    results_dir=None,
    workers: int = 1,
    save_checkpoints: bool = False,
    resume: bool = True,
) -> ExperimentResult:
    """Run ``repeats`` seeded repeats on every fold and aggregate test accuracy at the best epoch.

    With ``results_dir`` each run is written to ``<config-id>/<fold>/repeat-NN.json`` as it
    finishes, and runs already on disk with an identical config are reused.
    """
    recordings = load_recordings(index, config)
    jobs = [(fold, r) for fold in config.folds for r in range(config.repeats)]
    runs: dict[tuple[int, int], RunResult] = {}
    pending = []
    for fold, repeat in jobs:
        if results_dir is not None and resume:
            done = _load_finished(run_path(results_dir, config.config_id, fold, repeat), config)
            if done is not None:
                log.info("%s %s repeat %d: already done", config.config_id, fold.label, repeat)
                runs[(fold.test_domain, repeat)] = done
                continue
        pending.append((fold, repeat))

    def ckpt(fold, repeat):
        if results_dir is None or not save_checkpoints:
            return None
        path = run_path(results_dir, config.config_id, fold, repeat).with_suffix(".ckpt.npz")
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def finish(fold, repeat, result):
        result.model = None
        runs[(fold.test_domain, repeat)] = result
        if results_dir is not None:
            write_run(run_path(results_dir, config.config_id, fold, repeat), config, fold, repeat, result)
        log.info(
            "%s %s repeat %d: test acc %.4f (best epoch %d)",
            config.config_id, fold.label, repeat, result.test_acc_at_best, result.best_epoch,
        )

    def partial():
        return aggregate_runs(config.config_id, runs, [c.code for c in config.classes], config.to_dict())

    try:
        if workers <= 1:
            for fold, repeat in pending:
                finish(fold, repeat, run_single(config, recordings, fold, repeat, ckpt(fold, repeat)))
        else:
            with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(recordings,)) as pool:
                futures = [
                    (fold, repeat, pool.submit(_worker_job, config, fold, repeat, ckpt(fold, repeat)))
                    for fold, repeat in pending
                ]
                for fold, repeat, fut in futures:
                    finish(fold, repeat, fut.result())
    except Exception as exc:
        raise ExperimentFailed(f"{config.config_id}: {exc}", partial=partial()) from exc

    result = partial()
    if results_dir is not None:
        out = Path(results_dir) / config.config_id
        out.mkdir(parents=True, exist_ok=True)
        (out / "aggregate.json").write_text(json.dumps(result.to_dict(), indent=1))
    return result


def with_overrides(
    config: ExperimentConfig,
    *,
    repeats: int | None = None,
    epochs: int | None = None,
    seed: int | None = None,
    test_domains: Iterable[int] | None = None,
) -> ExperimentConfig:
    """Desk-scale variant of a config: fewer repeats/epochs or a subset of held-out domains."""
    settings = config.settings
    if epochs is not None:
        settings = replace(settings, epochs=epochs)
    if seed is not None:
        settings = replace(settings, seed=seed)
    folds = config.folds
    if test_domains is not None:
        wanted = set(test_domains)
        folds = tuple(f for f in folds if f.test_domain in wanted)
        if not folds:
            raise ConfigError(f"{config.name}: no folds left for test domains {sorted(wanted)}")
    return replace(config, repeats=repeats or config.repeats, settings=settings, folds=folds)
