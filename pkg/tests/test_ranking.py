import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tradeshape.gof import ecdf
from tradeshape.ranking import count_crossings, dominance_matrix, indicator_ranks, ranking_curve


@pytest.mark.parametrize(
    "sample, expected",
    [([2, 9, 5], [9, 5, 2]), ([4, 4], [4, 4]), ([7], [7])],
)
def test_ranking_curve_examples(sample, expected):
    assert ranking_curve(sample, "AAA").volumes.tolist() == expected


def test_ranking_curve_errors():
    with pytest.raises(ValueError):
        ranking_curve([], "AAA")
    with pytest.raises(ValueError):
        ranking_curve([1.0, 0.0], "AAA")


def test_crossing_examples():
    a = ranking_curve([10, 5, 1], "A")
    assert count_crossings(a, ranking_curve([8, 4, 0.5], "B")) == 0
    assert count_crossings(a, ranking_curve([8, 6, 0.5], "B")) == 2
    assert count_crossings(a, ranking_curve([10, 5, 1], "B")) == 0


def test_touching_is_not_a_crossing():
    a = ranking_curve([10, 5, 1], "A")
    assert count_crossings(a, ranking_curve([9, 5, 0.5], "B")) == 0


def test_dominance_examples():
    curves = [ranking_curve([10, 5, 1], "A"), ranking_curve([8, 6, 0.5], "B")]
    d = dominance_matrix(curves)
    assert d.n_pairs == 1 and d.zero_crossing_share == 0.0
    assert d.above_fraction[0, 1] == pytest.approx(2 / 3)
    assert list(d.pair_rows()) == [("A", "B", pytest.approx(2 / 3), pytest.approx(1 / 3), 2)]


def test_scalar_multiples_never_cross():
    base = np.exp(np.random.default_rng(0).normal(size=300))
    curves = [ranking_curve(base * k, f"C{k:02d}") for k in range(1, 11)]
    assert dominance_matrix(curves).zero_crossing_share == 1.0


def test_single_country_empty():
    d = dominance_matrix([ranking_curve([1, 2], "A")])
    assert d.above_fraction.shape == (0, 0) and d.crossings.shape == (0, 0)


positive = st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=40)


@settings(max_examples=80, deadline=None)
@given(positive, positive)
def test_crossings_symmetric(a, b):
    ca, cb = ranking_curve(a, "A"), ranking_curve(b, "B")
    assert count_crossings(ca, cb) == count_crossings(cb, ca)
    d = dominance_matrix([cb, ca])
    np.testing.assert_array_equal(d.crossings, d.crossings.T)
    assert d.above_fraction[0, 1] + d.above_fraction[1, 0] <= 1


@settings(max_examples=80, deadline=None)
@given(positive, st.randoms(use_true_random=False))
def test_curve_matches_ecdf_and_ignores_order(xs, rnd):
    curve = ranking_curve(xs, "A")
    ys = list(xs)
    rnd.shuffle(ys)
    np.testing.assert_array_equal(ranking_curve(ys, "A").volumes, curve.volumes)
    v, h = curve.as_ecdf_points()
    e = ecdf(xs)
    # at each distinct volume the ECDF equals the largest height reached there
    for x in np.unique(v):
        assert e(x) == pytest.approx(h[v == x].max())


def test_indicator_ranks_examples():
    col = indicator_ranks({"A": 3.2, "B": 1.1, "C": 7.8}, "gdp")
    assert col.ranks == {"A": 2, "B": 3, "C": 1}
    assert col.color_index == {"A": 0.5, "B": 1.0, "C": 0.0}
    tie = indicator_ranks({"B": 1.0, "A": 1.0, "C": 0.5}, "gdp_pc")
    assert tie.ranks == {"A": 1, "B": 2, "C": 3}
    one = indicator_ranks({"A": 1.0}, "fitness")
    assert one.ranks == {"A": 1} and one.color_index == {"A": 0.0}


def test_indicator_ranks_errors():
    with pytest.raises(ValueError, match="missing"):
        indicator_ranks({"A": 1.0}, "gdp", ["A", "B"])
    with pytest.raises(ValueError, match="unknown indicator"):
        indicator_ranks({"A": 1.0}, "population")


@given(st.dictionaries(st.text("ABCDEFG", min_size=3, max_size=3), st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_ranks_are_permutation(values):
    col = indicator_ranks(values, "gdp")
    assert sorted(col.ranks.values()) == list(range(1, len(values) + 1))
    assert all(0 <= c <= 1 for c in col.color_index.values())
