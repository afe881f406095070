import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evmod.events import EventWindow, make_events, uniform_sample
from evmod.knn_graph import (
    TimeScale,
    as_points,
    auto_edge_cut,
    build_knn_graph,
    default_min_component,
    denoise,
    embed,
    induced_subgraph,
    knn_lists,
    write_graph,
)

from oracles import knn_union_edges


class TestEmbed:
    def test_affine(self):
        ev = make_events([(5, 7, 5000 + 1000, 1)])
        w = EventWindow(1, 5000, 9000, ev)
        pts = embed(uniform_sample(w, 10, 0), TimeScale(0.01))
        assert pts.coords.tolist() == [[5.0, 7.0, 10.0]]

    def test_full_width_fraction(self):
        # fraction=1 maps one 33,333 us window onto [0, 346]
        s = TimeScale.auto(346, 33_333, fraction=1.0)
        assert s.alpha == pytest.approx(346 / 33_333)
        assert s.alpha * 33_333 == pytest.approx(346)

    def test_auto_default(self):
        assert TimeScale.auto(346, 33_333).alpha == pytest.approx(0.1 * 346 / 33_333)

    @pytest.mark.parametrize("alpha", [0.0, -1.0, float("inf"), float("nan")])
    def test_bad_alpha(self, alpha):
        with pytest.raises(ValueError):
            TimeScale(alpha)


class TestGraph:
    def test_collinear(self):
        g = build_knn_graph(as_points([[0, 0, 0], [1, 0, 0], [5, 0, 0]]), 1)
        assert g.edge_set() == {(0, 1), (1, 2)}

    def test_two_points(self):
        g = build_knn_graph(as_points([[0, 0, 0], [3, 4, 0]]), 1)
        assert g.edge_set() == {(0, 1)}
        assert g.edge_lengths().tolist() == [5.0]

    @pytest.mark.parametrize("n, k", [(1, 1), (5, 0), (5, 5)])
    def test_invalid(self, n, k):
        with pytest.raises(ValueError):
            build_knn_graph(as_points(np.zeros((n, 3)) + np.arange(n)[:, None]), k)

    def test_edges_canonical(self):
        rng = np.random.default_rng(0)
        g = build_knn_graph(as_points(rng.random((60, 3))), 4)
        e = g.edges
        assert np.all(e[:, 0] < e[:, 1])
        assert len(np.unique(e, axis=0)) == len(e)
        assert np.all(g.degrees() >= 4)

    @pytest.mark.parametrize("seed", range(12))
    def test_brute_force_random(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 120))
        X = rng.random((n, 3)) * 50
        for k in {1, min(5, n - 1), n - 1}:
            assert build_knn_graph(as_points(X), k).edge_set() == knn_union_edges(X.tolist(), k)

    @pytest.mark.parametrize("seed", range(12))
    def test_brute_force_integer_ties(self, seed):
        # small integer grid: many exactly tied distances and duplicate points
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(3, 90))
        X = rng.integers(0, 4, size=(n, 3)).astype(float)
        for k in {1, min(3, n - 1), min(7, n - 1)}:
            assert build_knn_graph(as_points(X), k).edge_set() == knn_union_edges(X.tolist(), k)

    def test_neighbour_order_ties_to_lower_index(self):
        X = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]], dtype=float)
        assert knn_lists(X, 2)[0].tolist() == [1, 2]

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.tuples(*[st.integers(-3, 3)] * 3), min_size=2, max_size=40),
        st.integers(1, 6),
    )
    def test_property_matches_oracle(self, pts, k):
        k = min(k, len(pts) - 1)
        X = np.array(pts, dtype=float)
        assert build_knn_graph(as_points(X), k).edge_set() == knn_union_edges(pts, k)

    def test_write_graph(self, tmp_path):
        g = build_knn_graph(as_points([[0, 0, 0], [1, 0, 0], [5, 0, 0]]), 1)
        write_graph(g, tmp_path / "e.txt", tmp_path / "n.csv")
        assert (tmp_path / "e.txt").read_text() == "0 1\n1 2\n"
        assert (tmp_path / "n.csv").read_text().splitlines()[0] == "node,u,v,w,source_index"


def _two_blobs(big=50, small=2):
    # evenly spaced chains: with k=1 each chain is exactly one component
    a = np.zeros((big, 3))
    a[:, 0] = np.arange(big)
    b = np.zeros((small, 3))
    b[:, 0] = 1000 + np.arange(small)
    return as_points(np.vstack([a, b]))


class TestDenoise:
    def test_small_component_removed(self):
        g = build_knn_graph(_two_blobs(), 1)
        res = denoise(g, 5)
        assert len(res.points) == 50
        assert res.removed == 2
        assert res.points.source_index.max() < 50

    def test_threshold_one_identity(self):
        g = build_knn_graph(_two_blobs(), 1)
        res = denoise(g, 1)
        assert res.removed == 0 and len(res.points) == 52

    def test_connected_identity(self):
        pts = as_points(np.random.default_rng(2).random((30, 3)))
        g = build_knn_graph(pts, 29)
        for t in (1, 10, 30):
            assert denoise(g, t).removed == 0

    def test_edge_cut_isolates_far_points(self):
        X = np.vstack([np.random.default_rng(3).random((40, 3)), [[50, 50, 50], [80, 0, 0]]])
        g = build_knn_graph(as_points(X), 5)
        assert denoise(g, 3).removed == 0  # every component is at least k+1 nodes
        res = denoise(g, 3, max_edge_length=2.0)
        assert res.removed == 2

    def test_idempotent(self):
        X = np.vstack([np.random.default_rng(4).random((40, 3)), [[50, 50, 50], [51, 50, 50]]])
        g = build_knn_graph(as_points(X), 1)
        first = denoise(g, 3)
        again = denoise(induced_subgraph(g, first.kept), 3)
        assert again.removed == 0

    def test_default_threshold(self):
        assert default_min_component(45) == 12
        assert default_min_component(4) == 3

    def test_auto_cut_scale(self):
        X = np.random.default_rng(5).random((1000, 3)) * 100
        cut = auto_edge_cut(as_points(X))
        # uniform spacing is (1e6 / 1000) ** (1/3) = 10
        assert 4.5 < cut < 5.5

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            denoise(build_knn_graph(_two_blobs(), 1), 0)
