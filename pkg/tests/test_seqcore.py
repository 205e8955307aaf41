import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from vsd.seqcore import (
    LabeledDataset,
    QuerySet,
    Sequence,
    SequenceError,
    Vocabulary,
    as_batch,
    empirical_quantile,
    enumerate_space,
    rank,
    relabel,
)


def _ds(fitness, length=3, vocab=2, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, vocab, size=(len(fitness), length))
    return LabeledDataset(x, np.asarray(fitness, float), vocab)


class TestVocabulary:
    def test_round_trip(self):
        v = Vocabulary.from_string("ACGT")
        assert v.size == 4
        for i, s in enumerate("ACGT"):
            assert v.index(s) == i
            assert v.index(v.symbol(i)) == i
        assert v.decode(v.encode("GATTACA")) == "GATTACA"

    def test_rejects_duplicates_and_tiny(self):
        with pytest.raises(SequenceError):
            Vocabulary(("A", "A"))
        with pytest.raises(SequenceError):
            Vocabulary(("A",))

    def test_unknown_symbol(self):
        with pytest.raises(SequenceError):
            Vocabulary.from_string("AB").encode("ABC")


def test_sequence_validate():
    s = Sequence((0, 1, 2))
    s.validate(3, 3)
    with pytest.raises(SequenceError):
        s.validate(2)
    with pytest.raises(SequenceError):
        s.validate(3, 4)
    with pytest.raises(SequenceError):
        Sequence(())


def test_as_batch_forms():
    a = as_batch([Sequence((0, 1)), Sequence((1, 1))])
    b = as_batch(np.array([[0, 1], [1, 1]]))
    np.testing.assert_array_equal(a, b)
    assert as_batch(np.array([1, 0, 1])).shape == (1, 3)
    with pytest.raises(SequenceError):
        as_batch([[0, 1]], length=3)


def test_enumerate_and_rank_are_inverse():
    x = enumerate_space(3, 4)
    assert x.shape == (81, 4)
    np.testing.assert_array_equal(rank(x, 3), np.arange(81))
    assert list(map(tuple, x[:3])) == [(0, 0, 0, 0), (0, 0, 0, 1), (0, 0, 0, 2)]
    assert list(map(tuple, x)) == sorted(itertools.product(range(3), repeat=4))


class TestRelabel:
    def test_boundary_is_strict(self):
        assert relabel(_ds([0.5]), 0.5).labels.tolist() == [0]

    def test_two_points(self):
        assert relabel(_ds([1.0, -1.0]), 0.0).labels.tolist() == [1, 0]

    def test_three_positives_of_ten(self):
        assert relabel(_ds(np.arange(1, 11)), 7).labels.sum() == 3

    def test_order_preserved(self):
        ds = _ds([3.0, 1.0, 2.0])
        b = relabel(ds, 1.5)
        np.testing.assert_array_equal(b.sequences, ds.sequences)
        assert b.labels.tolist() == [1, 0, 1]
        assert b.threshold == 1.5

    def test_empty(self):
        empty = LabeledDataset(np.zeros((0, 3), np.int64), np.zeros(0), 2)
        with pytest.raises(SequenceError, match="empty dataset"):
            relabel(empty, 0.0)

    @given(hst.lists(hst.floats(-10, 10), min_size=1, max_size=50), hst.floats(-10, 10))
    @settings(max_examples=100, deadline=None)
    def test_positive_count_matches_scan(self, ys, tau):
        b = relabel(_ds(ys), tau)
        assert b.labels.sum() == sum(1 for y in ys if y > tau)


class TestQuantile:
    def test_median_of_one_to_ten(self):
        # rank 0.5*9+1 = 5.5 -> halfway between 5 and 6
        assert empirical_quantile(range(1, 11), 0.5) == 5.5

    def test_quarter(self):
        # rank 0.25*3+1 = 1.75 -> 1 + 0.75*(2-1)
        assert empirical_quantile([4, 2, 3, 1], 0.25) == 1.75

    def test_constant(self):
        for g in (0.01, 0.5, 0.99):
            assert empirical_quantile([2.5, 2.5, 2.5], g) == 2.5

    def test_matches_numpy_linear(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=37)
        for g in np.linspace(0.01, 0.99, 21):
            assert empirical_quantile(v, g) == pytest.approx(np.quantile(v, g, method="linear"), abs=1e-12)

    def test_errors(self):
        with pytest.raises(SequenceError):
            empirical_quantile([], 0.5)
        for g in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(SequenceError):
                empirical_quantile([1, 2], g)

    @given(hst.lists(hst.floats(-1e6, 1e6), min_size=1, max_size=40),
           hst.floats(0.001, 0.999), hst.floats(0.001, 0.999))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_gamma(self, vals, g1, g2):
        lo, hi = sorted((g1, g2))
        assert empirical_quantile(vals, lo) <= empirical_quantile(vals, hi) + 1e-9


class TestLabeledDataset:
    def test_rejects_non_finite(self):
        with pytest.raises(SequenceError):
            _ds([1.0, np.nan])

    def test_rejects_out_of_range_tokens(self):
        with pytest.raises(SequenceError):
            LabeledDataset(np.array([[0, 2]]), [1.0], 2)

    def test_immutable_and_extend(self):
        ds = _ds([1.0, 2.0])
        with pytest.raises(ValueError):
            ds.fitness[0] = 5
        bigger = ds.extend(np.array([[1, 1, 1]]), [3.0])
        assert len(bigger) == 3 and len(ds) == 2
        with pytest.raises(SequenceError):
            ds.extend(np.array([[1, 1]]), [3.0])


class TestQuerySet:
    def test_insert_idempotent(self):
        q = QuerySet()
        assert q.insert([0, 1, 1])
        assert not q.insert(np.array([0, 1, 1]))
        assert len(q) == 1
        assert Sequence((0, 1, 1)) in q

    def test_exact_membership_over_full_space(self):
        space = enumerate_space(2, 12)
        rng = np.random.default_rng(0)
        for i in rng.choice(space.shape[0], size=3, replace=False):
            q = QuerySet()
            q.insert(space[i])
            hits = np.array([q.contains(x) for x in space])
            assert hits.sum() == 1 and hits[i]

    def test_copy_is_independent(self):
        q = QuerySet()
        q.insert([1, 2])
        c = q.copy()
        c.insert([2, 2])
        assert len(q) == 1 and len(c) == 2
