"""Command-line entry point: ``slagflow {validate,synth,run,report}``.

Exit codes: 0 success, 1 domain failure (incomplete dataset, failed run, nothing to
report), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .dataset import (
    DatasetIndex,
    SyntheticSpec,
    generate_synthetic,
    load_manifest,
    validate_dataset,
    write_dataset,
)
from .errors import ConfigError, ExperimentFailed, InvalidSpec, MalformedManifest, MissingFile
from .experiments import (
    DEFAULT_BASE_SEED,
    FULL_EPOCHS,
    FULL_LEARNING_RATE,
    FULL_REPEATS,
    ExperimentConfig,
    ExperimentResult,
    ablation_conflicts,
    ablation_suite,
    aggregate_runs,
    hyperparameter_grid,
    run_experiment,
    with_overrides,
)
from .reporting import (
    STAGE_NAMES,
    boxplot_data,
    boxplot_points,
    build_table,
    render_boxplot,
    render_confusion,
)
from .training import RunResult

log = logging.getLogger("slagflow")

OUTPUT_ROOT_ENV = "SLAGFLOW_OUTPUT_ROOT"

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


@dataclass
class CliConfig:
    """Declarative description of a ``run`` invocation (JSON on disk)."""

    manifest: Path | None = None
    synthetic: SyntheticSpec | None = None
    experiments: str | dict | list = "ablation"
    output_dir: Path = Path("output")
    base_seed: int = DEFAULT_BASE_SEED
    full_scale: bool = False
    repeats: int | None = None
    epochs: int | None = None
    test_domains: list[int] | None = None
    workers: int = 1
    save_checkpoints: bool = True

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ConfigError("exactly one dataset source (manifest or synthetic) is required")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.full_scale:
            self.repeats, self.epochs = FULL_REPEATS, FULL_EPOCHS

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path = Path(".")) -> "CliConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__) - {"manifest", "synthetic"} | {"dataset"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        dataset = doc.get("dataset")
        if not isinstance(dataset, dict) or len(dataset) != 1 or set(dataset) - {"manifest", "synthetic"}:
            raise ConfigError('dataset must be {"manifest": path} or {"synthetic": {...}}')
        manifest = synthetic = None
        if "manifest" in dataset:
            manifest = (base_dir / dataset["manifest"]).resolve()
        else:
            try:
                synthetic = SyntheticSpec.from_dict(dataset["synthetic"] or {}).validate()
            except InvalidSpec as exc:
                raise ConfigError(f"synthetic dataset: {exc}") from None
        rest = {k: v for k, v in doc.items() if k != "dataset"}
        if "output_dir" in rest:
            rest["output_dir"] = base_dir / rest["output_dir"]
        try:
            return cls(manifest=manifest, synthetic=synthetic, **rest)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def dataset(self) -> DatasetIndex:
        if self.manifest is not None:
            if not self.manifest.is_file():
                raise ConfigError(f"manifest not found: {self.manifest}")
            return load_manifest(self.manifest)
        return generate_synthetic(self.synthetic)

    def experiment_configs(self) -> list[ExperimentConfig]:
        sel = self.experiments
        if sel == "grid":
            configs = hyperparameter_grid(self.base_seed)
        elif sel == "ablation":
            configs = ablation_suite(self.base_seed)
        elif isinstance(sel, dict):
            configs = [ExperimentConfig.from_dict(sel)]
        elif isinstance(sel, list) and all(isinstance(s, (dict, str)) for s in sel):
            named = {c.name: c for c in [*ablation_suite(self.base_seed), *hyperparameter_grid(self.base_seed)]}
            configs = []
            for s in sel:
                if isinstance(s, str):
                    if s not in named:
                        raise ConfigError(f"unknown experiment name {s!r}")
                    configs.append(named[s])
                else:
                    configs.append(ExperimentConfig.from_dict(s))
        else:
            raise ConfigError('experiments must be "grid", "ablation", a config object or a list')
        configs = [
            with_overrides(c, repeats=self.repeats, epochs=self.epochs, test_domains=self.test_domains)
            for c in configs
        ]
        if self.full_scale:
            configs = [replace(c, settings=replace(c.settings, learning_rate=FULL_LEARNING_RATE)) for c in configs]
        return configs


def load_cli_config(path, overrides: dict | None = None) -> CliConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    out_dir = overrides.pop("output_dir", None)
    if isinstance(doc, dict):
        doc.update(overrides)
    cfg = CliConfig.from_dict(doc, base_dir=path.parent)
    if out_dir is not None:
        cfg.output_dir = Path(out_dir)
    return cfg


def output_root(default: Path) -> Path:
    env = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(env) if env else Path(default)


# ------------------------------------------------------------------ commands


def cmd_validate(manifest, expected_length=None, expected_rate=None, out=None) -> int:
    out = out or sys.stdout
    if not Path(manifest).is_file():
        print(f"ERROR: manifest not found: {manifest}", file=out)
        return EXIT_USAGE
    try:
        index = load_manifest(manifest)
    except MissingFile as exc:
        print(f"INCOMPLETE: {exc}", file=out)
        return EXIT_DOMAIN
    except MalformedManifest as exc:
        print(f"ERROR: {exc}", file=out)
        return EXIT_USAGE
    report = validate_dataset(index, expected_length, expected_rate)
    for line in report.lines():
        print(line, file=out)
    print(f"{'COMPLETE' if report.is_complete else 'INCOMPLETE'}: {len(index)} entries", file=out)
    return EXIT_OK if report.is_complete else EXIT_DOMAIN


def cmd_synth(spec_file, out_dir, out=None) -> int:
    out = out or sys.stdout
    try:
        data = json.loads(Path(spec_file).read_text()) if spec_file else {}
        spec = SyntheticSpec.from_dict(data).validate()
    except (OSError, json.JSONDecodeError, InvalidSpec) as exc:
        print(f"ERROR: {exc}", file=out)
        return EXIT_USAGE
    out_dir = Path(out_dir)
    index = write_dataset(generate_synthetic(spec), out_dir)
    (out_dir / "synthetic_spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    report = validate_dataset(index, spec.samples_per_recording, spec.sample_rate_hz, num_domains=spec.num_domains)
    print(f"wrote {len(index)} recordings and manifest.json to {out_dir}", file=out)
    return EXIT_OK if report.is_complete else EXIT_DOMAIN


def cmd_run(config_file, overrides: dict | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        cfg = load_cli_config(config_file, overrides)
        configs = cfg.experiment_configs()
        index = cfg.dataset()
    except (ConfigError, InvalidSpec, MalformedManifest) as exc:
        print(f"ERROR: {exc}", file=out)
        return EXIT_USAGE
    except MissingFile as exc:
        print(f"ERROR: {exc}", file=out)
        return EXIT_DOMAIN
    results_dir = output_root(cfg.output_dir) / "results"
    results_dir.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for config in configs:
        try:
            res = run_experiment(
                config, index, results_dir=results_dir, workers=cfg.workers, save_checkpoints=cfg.save_checkpoints
            )
        except ConfigError as exc:
            print(f"ERROR: {exc}", file=out)
            return EXIT_USAGE
        except ExperimentFailed as exc:
            print(f"FAILED: {exc}", file=out)
            status = EXIT_DOMAIN
            continue
        print(f"{config.config_id}: {100 * res.mean:.2f} ± {100 * res.std:.2f} over {len(res.all_accuracies)} run(s)", file=out)
    return status


def collect_results(results_dir) -> tuple[list[ExperimentResult], list[str]]:
    """Re-aggregate every run JSON under ``results_dir``; unreadable files are returned by name."""
    results_dir = Path(results_dir)
    errors: list[str] = []
    grouped: dict[str, dict] = {}
    for path in sorted(results_dir.glob("*/fold-*/repeat-*.json")):
        try:
            doc = json.loads(path.read_text())
            run = RunResult.from_dict(doc["result"])
            domain = int(doc["fold"]["test_domain"])
            repeat = int(doc["repeat"])
            config = doc["config"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            errors.append(f"{path}: {exc.__class__.__name__}: {exc}")
            continue
        slot = grouped.setdefault(path.parts[-3], {"runs": {}, "config": config})
        slot["runs"][(domain, repeat)] = run
    results = [
        aggregate_runs(cid, g["runs"], g["config"].get("classes", ()), g["config"])
        for cid, g in sorted(grouped.items())
    ]
    return results, errors


def cmd_report(results_dir, out_dir=None, fmt: str = "png", out=None) -> int:
    out = out or sys.stdout
    results_dir = Path(results_dir)
    results, errors = collect_results(results_dir) if results_dir.is_dir() else ([], [])
    for e in errors:
        print(f"corrupted: {e}", file=sys.stderr)
    if not results:
        print(f"ERROR: no run results found under {results_dir}", file=out)
        return EXIT_DOMAIN
    report_dir = Path(out_dir) if out_dir else results_dir.parent / "report"
    ids = {r.config_id for r in results}
    notes = [
        "validation: stratified 20% window-level split of the training domains",
        "best epoch chosen by validation accuracy; test accuracy reported at that epoch",
        "RMS fitted per axis over all training-domain recordings",
    ]
    if ids & {"A1", "A2", "A3", "A4"}:
        notes += ablation_conflicts()

    table = build_table(results, notes)
    (report_dir / "table").mkdir(parents=True, exist_ok=True)
    (report_dir / "table" / "summary.csv").write_text(table.to_csv())
    (report_dir / "table" / "summary.json").write_text(table.to_json())
    for row in table.rows:
        print(f"{row.descriptor}: {row.formatted}", file=out)

    stats = boxplot_data(boxplot_points(results))
    (report_dir / "boxplot").mkdir(parents=True, exist_ok=True)
    (report_dir / "boxplot" / "methods.json").write_text(
        json.dumps(
            {m: {"min": s.minimum, "q1": s.q1, "median": s.median, "q3": s.q3, "max": s.maximum,
                 "outliers": list(s.outliers), "points": list(s.points)} for m, s in stats.items()},
            indent=1,
        )
    )
    render_boxplot(stats, report_dir / "boxplot" / f"methods.{fmt}")

    for res in results:
        labels = [STAGE_NAMES.get(c, c) for c in res.classes] or None
        for fold in res.folds:
            cm = fold.total_confusion
            render_confusion(
                cm,
                labels or [str(i) for i in range(len(cm))],
                report_dir / "confusion" / f"{res.config_id}_fold-{fold.test_domain:02d}",
                title=f"{res.config_id} domain {fold.test_domain}",
                fmt=fmt,
            )
    print(f"report written to {report_dir}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slagflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a manifest against the 16 x 3 recording grid")
    p.add_argument("manifest")
    p.add_argument("--length", type=int, default=None, help="expected samples per recording (default 32000)")
    p.add_argument("--rate", type=float, default=None, help="expected sample rate in Hz (default 6400)")

    p = sub.add_parser("synth", help="write a synthetic dataset with its manifest")
    p.add_argument("out_dir")
    p.add_argument("--spec", default=None, help="JSON file with synthetic generator settings")

    p = sub.add_parser("run", help="run experiments described by a JSON config")
    p.add_argument("config")
    p.add_argument("--repeats", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--base-seed", type=int, dest="base_seed")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--test-domains", type=int, nargs="+", dest="test_domains", help="only run these held-out domains")
    p.add_argument(
        "--full-scale", action="store_true", default=None, dest="full_scale",
        help="pin 10 repeats, 100 epochs and learning rate 0.001",
    )

    p = sub.add_parser("report", help="tables, box-plot data and confusion matrices from run results")
    p.add_argument("results_dir")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("png", "svg"), default="png")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "validate":
        return cmd_validate(args.manifest, args.length, args.rate)
    if args.command == "synth":
        return cmd_synth(args.spec, args.out_dir)
    if args.command == "run":
        overrides = {k: getattr(args, k) for k in (
            "repeats", "epochs", "workers", "base_seed", "output_dir", "full_scale", "test_domains")}
        return cmd_run(args.config, overrides)
    return cmd_report(args.results_dir, args.out, args.format)


if __name__ == "__main__":
    sys.exit(main())
