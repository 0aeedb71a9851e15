"""Desk-scale ablation on the synthetic tone dataset: a few folds, a few repeats, minutes on a laptop CPU.

    python scripts/desk_ablation.py --output-dir runs/desk --methods M9 M10 A2 --test-domains 16 15
"""
import argparse
import json
import sys
from pathlib import Path

from slagflow.cli import cmd_report, cmd_run


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir", default="runs/desk")
    parser.add_argument("--methods", nargs="+", default=["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "M9", "M10"])
    parser.add_argument("--test-domains", nargs="+", type=int, default=[16])
    parser.add_argument("--repeats", type=int, default=2)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--samples", type=int, default=4096, help="samples per synthetic recording")
    parser.add_argument("--noise", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0, help="synthetic dataset seed")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_file = out / "desk.json"
    config_file.write_text(json.dumps({
        "dataset": {"synthetic": {"samples_per_recording": args.samples, "noise_sigma": args.noise, "seed": args.seed}},
        "experiments": args.methods,
        "output_dir": str(out.resolve()),
        "repeats": args.repeats,
        "epochs": args.epochs,
        "test_domains": args.test_domains,
        "workers": args.workers,
        "save_checkpoints": False,
    }, indent=2))
    status = cmd_run(config_file)
    return cmd_report(out / "results") or status


if __name__ == "__main__":
    sys.exit(main())
