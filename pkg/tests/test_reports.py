import csv
import io
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from clozefix.reports import (
    ReportError,
    ScoredSample,
    bins_csv,
    box_stats,
    error_type_averages,
    error_type_csv,
    percentile_bins,
    quantile,
)


def test_mean_per_label():
    samples = [ScoredSample("a", {"dae": 0.2}, "EntE"), ScoredSample("b", {"dae": 0.4}, "EntE")]
    table = error_type_averages(samples)
    assert table["dae"]["EntE"] == pytest.approx(0.3)
    assert table["dae"]["PredE"] is None


def test_single_sample():
    table = error_type_averages([ScoredSample("a", {"x": 0.7}, "NE")])
    assert table["x"]["NE"] == 0.7


def test_unlabeled_rejected():
    with pytest.raises(ReportError, match="b"):
        error_type_averages([ScoredSample("a", {"x": 1}, "NE"), ScoredSample("b", {"x": 1})])


def test_unknown_label_rejected():
    with pytest.raises(ReportError):
        ScoredSample("a", {}, "Typo")


def test_error_type_csv_round_trip():
    samples = [ScoredSample(str(i), {"dae": i / 7, "summac": 1 - i / 9}, lab)
               for i, lab in enumerate(["EntE", "PredE", "NE", "EntE"])]
    table = error_type_averages(samples)
    rows = list(csv.DictReader(io.StringIO(error_type_csv(table))))
    for row in rows:
        for label, value in table[row["metric"]].items():
            assert (row[label] == "" and value is None) or float(row[label]) == value


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40), st.floats(0, 1))
def test_quantile_matches_numpy(values, q):
    assert quantile(sorted(values), q) == pytest.approx(float(np.quantile(values, q)), rel=1e-9, abs=1e-6)


def test_box_stats():
    assert box_stats([4, 1, 3, 2, 5]) == (1, 2, 3, 4, 5)


def test_bins_two_by_two():
    samples = [ScoredSample(f"s{i}", {"a": v, "b": i}) for i, v in enumerate([0.9, 0.1, 0.5, 0.3])]
    bins = percentile_bins(samples, "a", 2)
    assert [b.sample_ids for b in bins] == [["s1", "s3"], ["s2", "s0"]]
    assert bins[0].boxes["b"] == (1, 1.5, 2, 2.5, 3)


def test_bins_tie_break_by_id():
    samples = [ScoredSample(i, {"a": 0.5, "b": 1.0}) for i in ["d", "b", "c", "a"]]
    assert [b.sample_ids for b in percentile_bins(samples, "a", 2)] == [["a", "b"], ["c", "d"]]


def test_bins_errors():
    s = [ScoredSample("a", {"a": 1})]
    with pytest.raises(ReportError):
        percentile_bins(s, "a", 1)
    with pytest.raises(ReportError):
        percentile_bins(s, "a", 2)


@given(st.integers(0, 10_000), st.integers(2, 10), st.integers(10, 120))
def test_equal_population(seed, n_bins, n):
    rng = random.Random(seed)
    samples = [ScoredSample(f"s{i}", {"a": rng.random(), "b": rng.random()}) for i in range(n)]
    sizes = [len(b.sample_ids) for b in percentile_bins(samples, "a", n_bins)]
    assert sum(sizes) == n
    assert max(sizes) - min(sizes) <= 1


def test_bins_csv_parses():
    rng = random.Random(1)
    samples = [ScoredSample(f"s{i}", {"a": rng.random(), "b": rng.random(), "c": rng.random()}) for i in range(20)]
    bins = percentile_bins(samples, "a", 4)
    rows = list(csv.DictReader(io.StringIO(bins_csv(bins))))
    assert len(rows) == 8
    first = rows[0]
    assert float(first["median"]) == bins[0].boxes["b"][2]
