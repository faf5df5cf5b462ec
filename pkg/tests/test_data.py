import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ttcd.data import (SIGMA_FLOOR, AcyclicityError, DataError, TemporalAdjacency, TemporalGraph,
                       TimeSeriesDataset, compute_norm, decode_row, denormalize, encode_row, load_csv,
                       make_windows, normalize, row_labels, slot_to_lag)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_shape_echo(self, tmp_path):
        data = np.random.default_rng(0).normal(size=(1000, 4))
        TimeSeriesDataset(["a", "b", "c", "d"], data).to_csv(tmp_path / "x.csv")
        ds = load_csv(tmp_path / "x.csv")
        assert (ds.n, ds.T) == (4, 1000)
        assert_allclose(ds.data, data, rtol=0, atol=0)

    def test_header_only(self, tmp_path):
        with pytest.raises(DataError, match="no data rows"):
            load_csv(write(tmp_path / "h.csv", "a,b\n"))

    def test_bad_cell_reports_line(self, tmp_path):
        rows = ["a,b"] + [f"{i},{i}" for i in range(5)] + ["abc,1"]
        with pytest.raises(DataError, match="line 7"):
            load_csv(write(tmp_path / "bad.csv", "\n".join(rows) + "\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(DataError, match="line 3"):
            load_csv(write(tmp_path / "r.csv", "a,b\n1,2\n3\n"))

    def test_non_finite(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path / "n.csv", "a\nnan\n"))

    def test_duplicate_names(self):
        with pytest.raises(DataError):
            TimeSeriesDataset(["a", "a"], np.zeros((3, 2)))


class TestNorm:
    def test_closed_form(self):
        s = compute_norm(np.array([[1.0], [2.0], [3.0]]))
        assert_allclose(s.mu, [2.0])
        assert_allclose(s.sigma, [np.sqrt(2 / 3)], atol=1e-15)

    def test_constant_column_floored(self):
        s = compute_norm(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]]))
        assert s.sigma[0] == SIGMA_FLOOR
        assert s.floored.tolist() == [True, False]

    def test_round_trip(self):
        X = np.random.default_rng(1).normal(size=(10, 3)) * 7 + 3
        s = compute_norm(X)
        assert np.abs(denormalize(normalize(X, s), s) - X).max() <= 1e-10

    def test_dataset_round_trip(self):
        ds = TimeSeriesDataset(["a", "b"], np.random.default_rng(2).normal(size=(20, 2)))
        s = compute_norm(ds)
        z = normalize(ds, s)
        assert_allclose(z.data.mean(axis=0), 0, atol=1e-12)
        assert_allclose(z.data.std(axis=0), 1, atol=1e-12)
        assert_allclose(denormalize(z, s).data, ds.data, atol=1e-10)


class TestWindows:
    def test_count_and_shape(self):
        wb = make_windows(np.arange(30.0).reshape(10, 3), 4)
        assert wb.windows.shape == (6, 5, 3)

    def test_first_window(self):
        X = np.arange(30.0).reshape(10, 3)
        assert_allclose(make_windows(X, 4).windows[0], X[0:5])

    def test_boundary(self):
        assert make_windows(np.zeros((5, 2)), 3).windows.shape[0] == 2
        assert make_windows(np.zeros((6, 2)), 4).windows.shape[0] == 2

    def test_single_window(self):
        assert make_windows(np.zeros((5, 2)), 4).windows.shape == (1, 5, 2)

    @pytest.mark.parametrize("l_max", [0, -1, 10])
    def test_invalid_lag(self, l_max):
        with pytest.raises(DataError):
            make_windows(np.zeros((10, 2)), l_max)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40), st.integers(1, 4), st.data())
    def test_last_rows_reconstruct_series(self, T, n, data):
        l_max = data.draw(st.integers(1, T - 1))
        X = np.random.default_rng(T * 10 + n).normal(size=(T, n))
        wb = make_windows(X, l_max)
        assert wb.windows.shape == (T - l_max, l_max + 1, n)
        assert np.array_equal(wb.current, X[l_max:])


class TestRowCodec:
    @given(st.integers(1, 8), st.integers(0, 6), st.data())
    def test_bijection(self, n, l_max, data):
        i = data.draw(st.integers(0, n - 1))
        j = data.draw(st.integers(0, l_max))
        row = encode_row(i, j, l_max)
        assert 0 <= row < n * (l_max + 1)
        assert decode_row(row, l_max) == (i, j)

    def test_labels(self):
        labels = row_labels(["a", "b"], 2)
        assert labels == ["a_lag2", "a_lag1", "a_lag0", "b_lag2", "b_lag1", "b_lag0"]
        assert slot_to_lag(2, 2) == 0


class TestAdjacency:
    def test_shape_check(self):
        with pytest.raises(DataError):
            TemporalAdjacency(np.zeros((19, 4)), ("a", "b", "c", "d"), 4)

    def test_rejects_self_contemporaneous(self):
        W = np.zeros((4, 2))
        W[1, 0] = 0.5  # row (a, lag 0) -> a
        with pytest.raises(DataError):
            TemporalAdjacency(W, ("a", "b"), 1)

    def test_rejects_negative(self):
        with pytest.raises(DataError):
            TemporalAdjacency(-np.ones((4, 2)), ("a", "b"), 1)

    def test_contemporaneous_block(self):
        W = np.zeros((4, 2))
        W[1, 1] = 0.3  # a lag 0 -> b
        W[2, 0] = 0.7  # b lag 1 -> a
        adj = TemporalAdjacency(W, ("a", "b"), 1)
        assert_allclose(adj.contemporaneous, [[0, 0.3], [0, 0]])

    def test_csv(self, tmp_path):
        adj = TemporalAdjacency(np.zeros((4, 2)), ("a", "b"), 1)
        adj.to_csv(tmp_path / "w.csv")
        lines = (tmp_path / "w.csv").read_text().splitlines()
        assert lines[0] == ",a,b"
        assert lines[1].startswith("a_lag1,")


class TestGraph:
    def test_cycle_rejected(self):
        with pytest.raises(AcyclicityError):
            TemporalGraph(["a", "b"], 1, [("a", 0, "b"), ("b", 0, "a")])

    def test_lagged_cycle_allowed(self):
        g = TemporalGraph(["a", "b"], 1, [("a", 1, "b"), ("b", 1, "a"), ("a", 1, "a")])
        assert len(g) == 3

    @pytest.mark.parametrize("edge", [("a", 0, "a"), ("a", 2, "b"), ("a", -1, "b"), ("z", 0, "a")])
    def test_invalid_edges(self, edge):
        with pytest.raises(DataError):
            TemporalGraph(["a", "b"], 1, [edge])

    def test_duplicate(self):
        with pytest.raises(DataError):
            TemporalGraph(["a", "b"], 1, [("a", 1, "b"), ("a", 1, "b", 0.5)])

    def test_json_round_trip(self, tmp_path):
        g = TemporalGraph(["a", "b", "c"], 2, [("a", 0, "b", 0.25), ("c", 2, "a", 1.5)])
        g.to_json(tmp_path / "g.json", extra={"seed": 3})
        assert json.loads((tmp_path / "g.json").read_text())["seed"] == 3
        assert TemporalGraph.from_json(tmp_path / "g.json") == g

    def test_malformed_json(self, tmp_path):
        write(tmp_path / "g.json", '{"variables": ["a"]}')
        with pytest.raises(DataError):
            TemporalGraph.from_json(tmp_path / "g.json")

    def test_topological_order(self):
        g = TemporalGraph(["a", "b", "c"], 1, [("c", 0, "b"), ("b", 0, "a")])
        order = g.contemporaneous_order()
        assert order.index("c") < order.index("b") < order.index("a")

    def test_dot(self):
        dot = TemporalGraph(["a", "b"], 1, [("a", 1, "b", 0.12345)]).to_dot()
        assert '"a_lag1" -> "b_lag0" [label="0.123"]' in dot
        assert "cluster_lag1" in dot and "cluster_lag0" in dot
