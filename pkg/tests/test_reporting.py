import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_percentile
from slagflow.errors import ShapeMismatch
from slagflow.experiments import AggregateResult, ExperimentResult
from slagflow.reporting import (
    ReportTable,
    boxplot_data,
    boxplot_points,
    build_table,
    five_number,
    format_mean_std,
    render_boxplot,
    render_confusion,
)


def result(config_id, per_fold):
    folds = [AggregateResult(config_id, d, list(accs), [[[1, 0], [0, 1]]] * len(accs)) for d, accs in per_fold.items()]
    return ExperimentResult(config_id, folds, ("B", "S"))


def test_format_mean_std():
    assert format_mean_std(82.76, 0.0) == "82.76 ± 0.00"
    assert format_mean_std(82.76, 2.91) == "82.76 ± 2.91"
    assert format_mean_std(99.1, 0.3) == "99.10 ± 0.30"


def test_single_repeat_row():
    table = build_table([result("M9", {16: [0.8276]})])
    (row,) = table.rows
    assert row.formatted == "82.76 ± 0.00"
    assert not row.std_defined and row.n_runs == 1


def test_rows_are_sorted_naturally():
    table = build_table([result(name, {1: [0.5, 0.6]}) for name in ("M10", "A2", "M9", "A10", "A1")])
    assert [r.descriptor for r in table.rows] == ["A1", "A2", "A10", "M9", "M10"]


def test_five_number_examples():
    stats = five_number([1, 2, 3, 4, 5])
    assert (stats.minimum, stats.q1, stats.median, stats.q3, stats.maximum) == (1, 2, 3, 4, 5)
    assert stats.outliers == ()
    one = five_number([0.7])
    assert one.minimum == one.q1 == one.median == one.q3 == one.maximum == 0.7
    assert one.iqr == 0
    out = five_number([1, 2, 3, 4, 100])
    assert out.outliers == (100.0,)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_five_number_matches_hand_percentiles(values):
    stats = five_number(values)
    for q, got in ((25, stats.q1), (50, stats.median), (75, stats.q3)):
        assert got == pytest.approx(brute_percentile(values, q), abs=1e-12)
    assert stats.minimum == min(values) and stats.maximum == max(values)
    assert stats.minimum <= stats.q1 <= stats.median <= stats.q3 <= stats.maximum
    lo, hi = stats.q1 - 1.5 * stats.iqr, stats.q3 + 1.5 * stats.iqr
    assert sorted(stats.outliers) == sorted(v for v in values if v < lo or v > hi)


def test_boxplot_points_are_fold_means(tmp_path):
    res = [result("M10", {16: [0.9, 1.0], 15: [0.8, 0.8]}), result("A1", {16: [0.5, 0.7]})]
    points = boxplot_points(res)
    assert points["M10"] == pytest.approx([0.95, 0.8])
    data = boxplot_data(points)
    assert list(data) == ["A1", "M10"]
    path = render_boxplot(data, tmp_path / "box.png")
    assert path.stat().st_size > 0


def test_render_confusion(tmp_path):
    art = render_confusion([[9, 1], [2, 8]], ["B", "S"], tmp_path / "cm")
    assert art.accuracy == 0.85
    assert art.image.stat().st_size > 0
    with art.csv.open() as fh:
        rows = list(csv.reader(fh))
    assert rows == [["true\\pred", "B", "S"], ["B", "9", "1"], ["S", "2", "8"]]
    assert render_confusion(np.diag([5, 6, 7]), ["E", "B", "S"], tmp_path / "cm3").accuracy == 1.0
    with pytest.raises(ShapeMismatch):
        render_confusion(np.ones((2, 3)), ["B", "S"], tmp_path / "bad")
    with pytest.raises(ShapeMismatch):
        render_confusion(np.eye(2), ["B"], tmp_path / "bad")


def test_table_json_round_trip():
    table = build_table([result("A1", {16: [0.5, 0.7], 15: [0.6]}), result("M9", {16: [1.0]})], notes=["n"])
    again = ReportTable.from_json(table.to_json())
    assert again == table
    assert table.to_csv().splitlines()[1].startswith("A1,60.00 ± 10.00,")


def test_rows_recompute_from_raw_results():
    results = [result("A1", {16: [0.5, 0.7], 15: [0.6, 0.65]}), result("M10", {16: [0.9, 0.95]})]
    stored = build_table(results)
    raw = [ExperimentResult.from_dict(json.loads(json.dumps(r.to_dict()))) for r in results]
    assert build_table(raw) == stored
    pooled = [0.5, 0.7, 0.6, 0.65]
    assert stored.rows[0].mean == pytest.approx(np.mean(pooled))
    assert stored.rows[0].std == pytest.approx(np.std(pooled, ddof=1))
