"""Full-scale reproduction on the real recordings: the 24-config grid and the 10-method ablation suite.

Every config is pinned to 10 repeats x 100 epochs at learning rate 0.001; the ablation suite runs
all 16 leave-one-domain-out folds. Expect days of CPU time; --workers spreads runs over processes.

    python scripts/reproduce_full_scale.py --manifest /data/recordings/manifest.json --output-dir runs/full
    python scripts/reproduce_full_scale.py --dry-run
"""
import argparse
import json
import sys
from pathlib import Path

from slagflow.cli import CliConfig, cmd_report, cmd_run, cmd_validate
from slagflow.experiments import ABLATION_REPORTED, GRID_ROWS, grid_config_name


def plan(selection):
    cfg = CliConfig(manifest=Path("unused.json"), experiments=selection, full_scale=True)
    return cfg.experiment_configs()


def reference_values():
    ref = {grid_config_name(k, p, b, l): [(m, s)] for k, p, b, l, _, _, m, s in GRID_ROWS}
    ref.update(ABLATION_REPORTED)
    return ref


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--manifest", help="manifest.json of the 16 x 3 recording grid")
    parser.add_argument("--output-dir", default="runs/full-scale")
    parser.add_argument("--only", choices=("grid", "ablation", "all"), default="all")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--dry-run", action="store_true", help="print the run plan and exit")
    args = parser.parse_args(argv)

    selections = ["grid", "ablation"] if args.only == "all" else [args.only]
    ref = reference_values()
    total = 0
    for selection in selections:
        for c in plan(selection):
            runs = len(c.folds) * c.repeats
            total += runs
            reported = "; ".join(f"{m:.2f} ± {s:.2f}" for m, s in ref.get(c.config_id, [])) or "-"
            print(
                f"{c.config_id:24s} {c.model_kind.value:8s} {c.preprocessing.value:6s} {c.loading.value:19s} "
                f"axes={''.join(c.axes)} classes={''.join(k.code for k in c.classes)} L={c.window_length} "
                f"batch={c.batch_size} folds={len(c.folds)} repeats={c.repeats} epochs={c.settings.epochs} "
                f"lr={c.settings.learning_rate} reported={reported}"
            )
    print(f"total: {total} runs")
    if args.dry_run:
        return 0
    if not args.manifest:
        parser.error("--manifest is required unless --dry-run is given")

    status = cmd_validate(args.manifest)
    if status != 0:
        print("dataset is incomplete; fix it before a full-scale run", file=sys.stderr)
        return status
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for selection in selections:
        config_file = out / f"{selection}.json"
        config_file.write_text(json.dumps({
            "dataset": {"manifest": str(Path(args.manifest).resolve())},
            "experiments": selection,
            "output_dir": str(out.resolve()),
            "full_scale": True,
            "workers": args.workers,
        }, indent=2))
        status = cmd_run(config_file) or status
    return cmd_report(out / "results") or status


if __name__ == "__main__":
    sys.exit(main())
