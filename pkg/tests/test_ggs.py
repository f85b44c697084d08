import itertools
import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exhaustive_argmin
from tsar.ggs import HyperRange, SearchReport, greedy_grid_search, neighbors


def table_search(table, width, n_jobs=None):
    ranges = [HyperRange(f"h{i}", range(n)) for i, n in enumerate(table.shape)]
    calls = []
    lock = threading.Lock()

    def evaluate(values):
        with lock:
            calls.append(values)
        return table[values]

    return greedy_grid_search(ranges, evaluate, width, n_jobs), calls


class TestNeighbors:
    def test_width_one(self):
        assert set(neighbors((0, 0), 1, (3, 3))) == {(0, 0), (1, 0), (0, 1)}

    def test_width_two(self):
        assert set(neighbors((0, 0), 2, (3, 3))) == {(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)}

    def test_single_point(self):
        assert neighbors((0,), 5, (1,)) == [(0,)]

    @given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(1, 4), st.data())
    def test_ball(self, sizes, width, data):
        cursor = tuple(data.draw(st.integers(0, n - 1)) for n in sizes)
        got = set(neighbors(cursor, width, sizes))
        want = {
            c for c in itertools.product(*(range(n) for n in sizes))
            if sum(abs(a - b) for a, b in zip(c, cursor)) <= width
        }
        assert got == want


class TestSearch:
    def test_unimodal(self):
        scores = np.array([5.0, 4.0, 3.0, 1.0, 2.0, 6.0])
        report, _ = table_search(scores, 1)
        assert report.cursor == (3,)

    def test_constant(self):
        report, _ = table_search(np.zeros((3, 3)), 1)
        assert report.cursor == (0, 0) and report.n_rounds == 1

    def test_infinite_and_nan_lose(self):
        table = np.array([math.inf, 2.0, math.nan, 1.0])
        report, _ = table_search(table, 1)
        assert report.cursor == (1,)
        assert report.evaluations[(2,)] == math.inf

    def test_tie_prefers_smaller_norm_then_lexicographic(self):
        table = np.full((3, 3), 5.0)
        table[1, 0] = table[0, 1] = 1.0
        assert table_search(table, 1)[0].cursor == (0, 1)

    def test_values_reported(self):
        ranges = [HyperRange("a", [10, 20, 30]), HyperRange("b", ["x", "y"])]
        report = greedy_grid_search(ranges, lambda v: abs(v[0] - 20) + (v[1] == "x"))
        assert report.values == {"a": 20, "b": "y"} and report.score == 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            greedy_grid_search([], lambda v: 0.0)
        with pytest.raises(ValueError):
            greedy_grid_search([HyperRange("a", [1])], lambda v: 0.0, width=0)
        with pytest.raises(ValueError):
            HyperRange("a", [])

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 3), st.sampled_from([None, 4]))
    def test_local_optimality_and_cache(self, seed, width, n_jobs):
        rng = np.random.default_rng(seed)
        table = rng.integers(0, 6, size=(4, 3, 5)).astype(float)
        report, calls = table_search(table, width, n_jobs)
        assert len(calls) == len(set(calls)) == len(report.evaluations)
        best = table[report.cursor]
        for c in neighbors(report.cursor, width, table.shape):
            assert best <= table[c]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31))
    def test_spanning_width_is_exhaustive(self, seed):
        table = np.random.default_rng(seed).integers(0, 4, size=(3, 4, 2)).astype(float)
        report, _ = table_search(table, sum(n - 1 for n in table.shape))
        assert report.cursor == exhaustive_argmin(table)

    def test_deterministic(self):
        table = np.random.default_rng(9).normal(size=(5, 5, 5))
        a, _ = table_search(table, 1)
        b, _ = table_search(table, 1, n_jobs=4)
        assert a == b

    def test_report_round_trip(self):
        table = np.array([[math.inf, 3.0], [1.0, 2.0]])
        report, _ = table_search(table, 1)
        again = SearchReport.from_dict(report.to_dict())
        assert again == report
