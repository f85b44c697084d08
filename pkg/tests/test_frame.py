import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsar.frame import (
    FrameFormatError,
    ObservationMask,
    SeriesFrame,
    SplitSpec,
    TimeGrid,
    deconcat,
    format_timestamp,
    parse_timestamp,
    read_csv,
    split_train_test,
    window_concat,
    write_csv,
)


def frame_of(rows, origin=0, step=1):
    return SeriesFrame.from_array(np.asarray(rows, dtype=float), origin=origin, step=step)


class TestTimeGrid:
    def test_row_time_bijection(self):
        grid = TimeGrid(100, 5, 4)
        assert [grid.timestamp(t) for t in range(4)] == [100, 105, 110, 115]
        assert [grid.index_of(grid.timestamp(t)) for t in range(-3, 7)] == list(range(-3, 7))

    def test_off_grid(self):
        with pytest.raises(ValueError, match="not on the grid"):
            TimeGrid(0, 3600, 2).index_of(1800)

    @pytest.mark.parametrize("step,length", [(0, 1), (-1, 1), (1, -1)])
    def test_invalid(self, step, length):
        with pytest.raises(ValueError):
            TimeGrid(0, step, length)


class TestSeriesFrame:
    def test_duplicate_columns(self):
        with pytest.raises(ValueError, match="unique"):
            SeriesFrame(TimeGrid(0, 1, 1), ("a", "a"), [[1.0, 2.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            SeriesFrame(TimeGrid(0, 1, 3), ("a",), np.zeros((2, 1)))

    def test_immutable(self):
        f = frame_of([[1.0], [2.0]])
        with pytest.raises(ValueError):
            f.values[0, 0] = 3.0

    def test_out_of_range_reads_missing(self):
        f = frame_of([[1.0, 2.0], [3.0, 4.0]], origin=10, step=2)
        assert np.isnan(f.at_time(8)).all()
        assert np.isnan(f.at_time(14)).all()
        np.testing.assert_array_equal(f.at_time(12), [3.0, 4.0])
        rows = f.rows(-2, 4)
        assert np.isnan(rows[:2]).all() and np.isnan(rows[4:]).all()

    def test_pandas_round_trip(self):
        pd = pytest.importorskip("pandas")
        f = frame_of([[1.0, np.nan], [3.0, 4.0]], origin=3600, step=3600)
        df = f.to_pandas()
        assert isinstance(df.index, pd.DatetimeIndex)
        assert SeriesFrame.from_pandas(df).equals(f)


class TestSplit:
    def test_nine_rows(self):
        train, test = split_train_test(frame_of(np.arange(9.0)[:, None]), SplitSpec(2 / 3))
        assert len(train) == 6 and len(test) == 3
        assert test.grid.origin == 6

    def test_clamp(self):
        train, test = split_train_test(frame_of([[1.0], [2.0]]), SplitSpec(0.01))
        assert len(train) == 1 and len(test) == 1
        train, test = split_train_test(frame_of([[1.0], [2.0]]), SplitSpec(0.99))
        assert len(train) == 1 and len(test) == 1

    def test_ignores_missingness(self):
        real = frame_of(np.ones((7, 2)))
        empty = frame_of(np.full((7, 2), np.nan))
        (a, b), (c, d) = split_train_test(real), split_train_test(empty)
        assert a.grid == c.grid and b.grid == d.grid

    def test_too_short(self):
        with pytest.raises(ValueError, match="frame too short to split"):
            split_train_test(frame_of([[1.0]]))

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.5, 1.5])
    def test_bad_ratio(self, ratio):
        with pytest.raises(ValueError):
            SplitSpec(ratio)

    @given(st.integers(2, 200), st.floats(0.001, 0.999))
    def test_concatenation_reproduces(self, T, r):
        f = frame_of(np.arange(T * 2.0).reshape(T, 2), origin=7, step=3)
        train, test = split_train_test(f, SplitSpec(r))
        assert len(train) >= 1 and len(test) >= 1
        assert test.grid.origin == train.grid.timestamp(len(train))
        np.testing.assert_array_equal(np.vstack([train.values, test.values]), f.values)


class TestWindow:
    def test_component_major_order(self):
        f = frame_of([[1.0, 3.0], [2.0, 4.0]])  # a, c / b, d
        np.testing.assert_array_equal(window_concat(f, 0, 1, 1), [1.0, 2.0, 3.0, 4.0])

    def test_far_before_frame(self):
        f = frame_of(np.ones((5, 2)))
        assert np.isnan(window_concat(f, -3, 1, 2)).all()

    def test_partial_overlap(self):
        # frame rows sit at t-1 and t; window covers t-1, t, t+1
        f = frame_of([[5.0], [6.0]])
        out = window_concat(f, 1, 2, 1)
        np.testing.assert_array_equal(out[:2], [5.0, 6.0])
        assert np.isnan(out[2])
        out = window_concat(f, 0, 2, 1)
        assert np.isnan(out[0]) and out[1] == 5.0 and out[2] == 6.0

    def test_deconcat_example(self):
        np.testing.assert_array_equal(deconcat([1, 2, 3, 4], 2, 1, 1), [[1, 3], [2, 4]])

    def test_deconcat_single_component(self):
        np.testing.assert_array_equal(deconcat([1, 2, 3], 1, 2, 1), [[1], [2], [3]])

    def test_deconcat_length_mismatch(self):
        with pytest.raises(ValueError):
            deconcat(np.zeros(5), 2, 1, 1)

    @settings(max_examples=50)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31))
    def test_round_trip(self, M, P, F, seed):
        rng = np.random.default_rng(seed)
        window = rng.standard_normal((P + F, M))
        window[rng.random(window.shape) < 0.3] = np.nan
        flat = window_concat(window, P - 1, P, F)
        np.testing.assert_array_equal(deconcat(flat, M, P, F), window)
        np.testing.assert_array_equal(window_concat(deconcat(flat, M, P, F), P - 1, P, F), flat)


class TestMask:
    def test_partition(self):
        mask = ObservationMask.from_vector([1.0, np.nan, 2.0, np.nan])
        np.testing.assert_array_equal(mask.observed, [0, 2])
        np.testing.assert_array_equal(mask.unobserved, [1, 3])
        assert mask.size == 4

    def test_key_distinguishes(self):
        a = ObservationMask.from_bool([True, False])
        b = ObservationMask.from_bool([False, True])
        assert a.key() != b.key()
        assert a.key() == ObservationMask.from_bool([True, False]).key()


class TestCsv:
    def test_round_trip(self):
        f = frame_of([[1.5, np.nan], [0.1 + 0.2, -3.0]], origin=1_577_836_800, step=3600)
        buf = io.StringIO()
        write_csv(f, buf)
        text = buf.getvalue()
        assert text.splitlines()[1].startswith("2020-01-01T00:00:00Z,1.5,")
        assert read_csv(text).equals(f)

    def test_missing_tokens(self):
        text = "time,a,b\n2020-01-01T00:00:00Z,NaN,\n2020-01-01T01:00:00Z,nan,2\n"
        f = read_csv(text)
        assert np.isnan(f.values[:, 0]).all() and np.isnan(f.values[0, 1]) and f.values[1, 1] == 2

    def test_gap_reports_row(self):
        text = "time,a\n2020-01-01T00:00:00Z,1\n2020-01-01T01:00:00Z,2\n2020-01-01T03:00:00Z,3\n"
        with pytest.raises(FrameFormatError, match="line 4"):
            read_csv(text)

    def test_not_increasing(self):
        text = "time,a\n2020-01-01T01:00:00Z,1\n2020-01-01T00:00:00Z,2\n"
        with pytest.raises(FrameFormatError, match="line 3"):
            read_csv(text)

    def test_bad_number(self):
        with pytest.raises(FrameFormatError, match="line 2"):
            read_csv("time,a\n2020-01-01T00:00:00Z,abc\n2020-01-01T01:00:00Z,1\n")

    def test_header_only(self):
        f = read_csv("time,a,b\n", step=3600)
        assert len(f) == 0 and f.columns == ("a", "b")

    def test_timestamps(self):
        assert parse_timestamp("2020-01-01T00:00:00Z") == 1_577_836_800
        assert parse_timestamp("2020-01-01T01:00:00+01:00") == 1_577_836_800
        assert parse_timestamp("2020-01-01 00:00:00") == 1_577_836_800
        assert format_timestamp(1_577_836_800) == "2020-01-01T00:00:00Z"
