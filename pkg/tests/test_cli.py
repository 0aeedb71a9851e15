import json
from pathlib import Path

import pytest

from slagflow import experiments as ex
from slagflow.cli import CliConfig, load_cli_config, main
from slagflow.dataset import SyntheticSpec, generate_synthetic, write_dataset
from slagflow.errors import ConfigError


@pytest.fixture
def small_dataset(tmp_path):
    index = generate_synthetic(SyntheticSpec(samples_per_recording=1024, seed=2))
    write_dataset(index, tmp_path / "data")
    return tmp_path / "data" / "manifest.json"


def write_config(path, **fields):
    doc = {
        "dataset": {"synthetic": {"samples_per_recording": 1024, "seed": 5}},
        "experiments": "ablation",
        "output_dir": "out",
        "repeats": 1,
        "epochs": 1,
        "test_domains": [16],
        "save_checkpoints": False,
    }
    doc.update(fields)
    path.write_text(json.dumps(doc))
    return path


def test_validate_exit_codes(small_dataset, capsys):
    assert main(["validate", str(small_dataset), "--length", "1024"]) == 0
    assert "COMPLETE" in capsys.readouterr().out

    # wrong expected length is a domain failure, not a usage error
    assert main(["validate", str(small_dataset)]) == 1

    missing = small_dataset.parent / "B-7.csv"
    missing.unlink()
    assert main(["validate", str(small_dataset), "--length", "1024"]) == 1
    assert "B-7.csv" in capsys.readouterr().out

    bad = small_dataset.parent / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", str(bad)]) == 2
    assert main(["validate"]) == 2
    assert main(["validate", str(small_dataset.parent / "absent.json")]) == 2


def test_synth_default_is_complete_and_reproducible(tmp_path):
    assert main(["synth", str(tmp_path / "a")]) == 0
    assert main(["synth", str(tmp_path / "b")]) == 0
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(csvs) == 48
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["validate", str(tmp_path / "a" / "manifest.json")]) == 0


def test_synth_rejects_nyquist_violation(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"sample_rate_hz": 100.0}))  # default tones reach 160 Hz
    assert main(["synth", str(tmp_path / "out"), "--spec", str(spec)]) == 2


def test_cli_config_rules(tmp_path):
    with pytest.raises(ConfigError):
        CliConfig()
    with pytest.raises(ConfigError):
        CliConfig.from_dict({"dataset": {"manifest": "m.json", "synthetic": {}}})
    with pytest.raises(ConfigError):
        CliConfig.from_dict({"dataset": {"synthetic": {}}, "bogus": 1})
    cfg = load_cli_config(write_config(tmp_path / "c.json", full_scale=True))
    (first, *_) = cfg.experiment_configs()
    assert first.repeats == 10 and first.settings.epochs == 100 and first.settings.learning_rate == 0.001
    cfg = load_cli_config(write_config(tmp_path / "c.json"), {"epochs": 4, "output_dir": "elsewhere"})
    assert cfg.epochs == 4 and cfg.output_dir == Path("elsewhere")
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_run_ablation_then_resume_then_report(tmp_path, monkeypatch, capsys):
    config = write_config(tmp_path / "ablation.json")
    assert main(["run", str(config)]) == 0
    results = tmp_path / "out" / "results"
    dirs = sorted(p.name for p in results.iterdir() if p.is_dir())
    assert dirs == sorted(["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "M9", "M10"])
    for d in dirs:
        assert (results / d / "fold-16" / "repeat-00.json").is_file()
        assert (results / d / "aggregate.json").is_file()

    calls = []
    monkeypatch.setattr(ex, "run_single", lambda *a, **k: calls.append(a))
    assert main(["run", str(config)]) == 0
    assert calls == []

    capsys.readouterr()
    assert main(["report", str(results)]) == 0
    report = tmp_path / "out" / "report"
    box = json.loads((report / "boxplot" / "methods.json").read_text())
    assert list(box) == ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "M9", "M10"]
    assert (report / "boxplot" / "methods.png").is_file()
    assert (report / "confusion" / "M9_fold-16.png").is_file()
    assert (report / "confusion" / "A8_fold-16.csv").read_text().count("\n") == 4  # header + E, B, S
    assert (report / "table" / "summary.csv").is_file()
    assert "M10:" in capsys.readouterr().out

    (results / "A3" / "fold-16" / "repeat-00.json").write_text("{garbage")
    assert main(["report", str(results), "--out", str(tmp_path / "r2")]) == 0
    captured = capsys.readouterr()
    assert "A3/fold-16/repeat-00.json" in captured.err
    assert "M9:" in captured.out and "A3:" not in captured.out


def test_run_grid_creates_24_configs(tmp_path, monkeypatch):
    monkeypatch.setenv("SLAGFLOW_OUTPUT_ROOT", str(tmp_path / "root"))
    config = write_config(
        tmp_path / "grid.json",
        experiments="grid",
        dataset={"synthetic": {"samples_per_recording": 4096, "seed": 5}},
    )
    assert main(["run", str(config)]) == 0
    results = tmp_path / "root" / "results"
    assert len([p for p in results.iterdir() if p.is_dir()]) == 24
    assert not (tmp_path / "out").exists()


def test_report_on_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 1
    assert "no run results" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "nowhere")]) == 1


def test_run_with_missing_manifest_file(tmp_path):
    config = write_config(tmp_path / "c.json", dataset={"manifest": "nope/manifest.json"})
    assert main(["run", str(config)]) == 2
