import numpy as np
import pytest

from vsd import blackbox as bb
from vsd.seqcore import Vocabulary, enumerate_space


def _write(tmp_path, rows, header="sequence,fitness"):
    p = tmp_path / "land.csv"
    p.write_text("\n".join([header] + rows) + "\n")
    return p


class TestEvaluate:
    def test_noiseless_is_exact(self):
        land = bb.synthetic_landscape(2, 3, seed=0)
        x = enumerate_space(2, 3)
        np.testing.assert_array_equal(bb.evaluate(land, bb.NoisyChannel(0.0), x), land.values)

    def test_noise_band(self):
        const = bb.TabulatedLandscape(np.full(8, 1.5), 3, Vocabulary.of_size(2))
        x = np.zeros((100_000, 3), np.int64)
        y = bb.evaluate(const, bb.NoisyChannel(0.5), x, np.random.default_rng(0))
        # 3 sigma band: 3 * 0.5 / sqrt(1e5)
        assert abs(y.mean() - 1.5) <= 0.005

    def test_domain_errors(self):
        land = bb.synthetic_landscape(2, 3)
        with pytest.raises(bb.LandscapeError):
            bb.evaluate(land, bb.NoisyChannel(), np.zeros((1, 4), np.int64))
        with pytest.raises(bb.LandscapeError):
            bb.evaluate(land, bb.NoisyChannel(), np.array([[0, 2, 0]]))
        with pytest.raises(ValueError):
            bb.evaluate(land, bb.NoisyChannel(0.1), np.zeros((1, 3), np.int64))
        with pytest.raises(ValueError):
            bb.NoisyChannel(-1.0)


class TestLoadLandscape:
    def test_complete_4_pow_8_has_no_fill(self, tmp_path):
        land = bb.synthetic_landscape(4, 8, seed=2)
        path = tmp_path / "tf.csv"
        bb.save_landscape(land, path)
        back = bb.load_landscape(path, vocabulary="ABCD")
        assert back.n_filled == 0
        assert back.values.size == 65_536
        np.testing.assert_array_equal(back.values, land.values)

    def test_missing_rows_filled(self, tmp_path):
        rows = [f"{a}{b},{i}" for i, (a, b) in enumerate([("A", "A"), ("A", "B"), ("B", "B")])]
        land = bb.load_landscape(_write(tmp_path, rows), fill_value=-1.0)
        assert land.n_filled == 1
        assert land(np.array([[1, 0]]))[0] == -1.0
        assert land(np.array([[1, 1]]))[0] == 2.0
        assert land.vocabulary.symbols == ("A", "B")

    def test_empty_fitness_field_filled(self, tmp_path):
        land = bb.load_landscape(_write(tmp_path, ["AA,1", "AB,", "BA,3", "BB,4"]), fill_value=-0.2)
        assert land(np.array([[0, 1]]))[0] == -0.2 and land.n_filled == 1

    def test_duplicate_key(self, tmp_path):
        with pytest.raises(bb.LandscapeError, match="duplicate key"):
            bb.load_landscape(_write(tmp_path, ["AA,1", "AB,2", "AA,3"]))

    def test_malformed_row_reports_line(self, tmp_path):
        with pytest.raises(bb.LandscapeError, match="line 3"):
            bb.load_landscape(_write(tmp_path, ["AA,1", "AB,oops"]))
        with pytest.raises(bb.LandscapeError, match="line 3"):
            bb.load_landscape(_write(tmp_path, ["AA,1", "AB"]))

    def test_inconsistent_length(self, tmp_path):
        with pytest.raises(bb.LandscapeError, match="line 4"):
            bb.load_landscape(_write(tmp_path, ["AA,1", "AB,2", "ABA,3"]))

    def test_bad_header(self, tmp_path):
        with pytest.raises(bb.LandscapeError, match="header"):
            bb.load_landscape(_write(tmp_path, ["AA,1"], header="seq,y"))

    def test_symbol_outside_given_vocabulary(self, tmp_path):
        with pytest.raises(bb.LandscapeError, match="line 2"):
            bb.load_landscape(_write(tmp_path, ["AZ,1"]), vocabulary="AB")


class TestEhrlich:
    def _fn(self, q=4):
        return bb.EhrlichStyleFn(np.array([[1, 2, 3, 4]]), np.array([[0, 1, 3, 4]]), 8, 6, q)

    def test_all_motifs_present(self):
        fn = bb.make_ehrlich(seed=3)
        x = fn.optimal_sequence()
        assert bb.ehrlich_score(fn, x) == 1.0

    def test_no_shared_tokens(self):
        fn = self._fn()
        assert bb.ehrlich_score(fn, np.zeros(8, np.int64)) == 0.0

    def test_half_matched(self):
        fn = self._fn()
        # motif 1,2,_,3,4 at offsets 0,1,3,4; place 1,2 correctly only
        x = np.array([1, 2, 0, 0, 0, 0, 0, 0])
        assert bb.ehrlich_score(fn, x) == 0.5
        # three of four matched -> floor(4 * 0.75) / 4
        x = np.array([0, 0, 1, 2, 0, 3, 0, 0])
        assert bb.ehrlich_score(fn, x) == 0.75

    def test_quantisation_floors(self):
        fn = self._fn(q=2)
        x = np.array([0, 0, 1, 2, 0, 3, 0, 0])
        assert bb.ehrlich_score(fn, x) == 0.5

    def test_range_and_product(self):
        fn = bb.make_ehrlich(vocab_size=6, length=12, n_motifs=3, motif_length=3, quantization=3, seed=1)
        x = np.random.default_rng(0).integers(0, 6, size=(500, 12))
        s = fn(x)
        assert s.min() >= 0 and s.max() <= 1
        q = np.floor(3 * fn.motif_quality(x) + 1e-9) / 3
        np.testing.assert_allclose(s, q.prod(axis=1))
        assert np.all((s == 1.0) == np.all(fn.motif_quality(x) == 1.0, axis=1))

    def test_permutation_covariance(self):
        fn = bb.make_ehrlich(vocab_size=8, length=10, n_motifs=2, motif_length=3, seed=4)
        perm = np.random.default_rng(1).permutation(8)
        fn2 = bb.EhrlichStyleFn(perm[fn.motifs], fn.offsets, fn.length, fn.vocab_size, fn.quantization)
        x = np.random.default_rng(2).integers(0, 8, size=(300, 10))
        np.testing.assert_array_equal(fn(x), fn2(perm[x]))

    def test_motif_longer_than_m(self):
        with pytest.raises(bb.LandscapeError, match="motif longer than M"):
            bb.EhrlichStyleFn(np.array([[0, 1]]), np.array([[0, 5]]), 4, 3)


class TestOracle:
    def test_constant_f_is_prior(self):
        land = bb.TabulatedLandscape(np.full(8, 2.0), 3, Vocabulary.of_size(2))
        post = bb.oracle_posterior(land, bb.NoisyChannel(0.3), 1.0)
        np.testing.assert_allclose(post.probs, 1 / 8, atol=1e-15)
        prior = np.arange(1, 9) / 36
        post = bb.oracle_posterior(land, bb.NoisyChannel(0.3), 1.0, prior)
        np.testing.assert_allclose(post.probs, prior, atol=1e-15)

    def test_noiseless_is_uniform_on_superlevel_set(self):
        land = bb.synthetic_landscape(2, 4, seed=1)
        tau = float(np.median(land.values))
        hard = bb.oracle_posterior(land, bb.NoisyChannel(0.0), tau)
        above = land.values > tau
        np.testing.assert_allclose(hard.probs[above], 1 / above.sum())
        assert np.all(hard.probs[~above] == 0)
        soft = bb.oracle_posterior(land, bb.NoisyChannel(1e-6), tau)
        np.testing.assert_allclose(soft.probs, hard.probs, atol=1e-9)

    def test_normalisation_and_proportionality(self):
        rng = np.random.default_rng(0)
        land = bb.TabulatedLandscape(rng.normal(size=8), 3, Vocabulary.of_size(2))
        post = bb.oracle_posterior(land, bb.NoisyChannel(0.4), 0.1)
        assert post.probs.sum() == pytest.approx(1.0, abs=1e-10)
        from scipy.stats import norm
        lik = norm.cdf((land.values - 0.1) / 0.4)
        np.testing.assert_allclose(post.probs / post.probs[0], lik / lik[0], rtol=1e-10)

    def test_mass_on_superlevel_set_dominates(self):
        values = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0])
        land = bb.TabulatedLandscape(values, 3, Vocabulary.of_size(2))
        # margin 0.5 each side of tau, noise 0.05 <= 0.1 * 0.5
        post = bb.oracle_posterior(land, bb.NoisyChannel(0.05), 0.5)
        assert post.probs[values > 0.5].sum() >= post.probs[values <= 0.5].sum()

    def test_zero_normaliser(self):
        land = bb.TabulatedLandscape(np.zeros(8), 3, Vocabulary.of_size(2))
        with pytest.raises(bb.LandscapeError, match="zero normalizer"):
            bb.oracle_posterior(land, bb.NoisyChannel(0.0), 1.0)

    def test_sample(self):
        land = bb.synthetic_landscape(2, 3, seed=0)
        post = bb.oracle_posterior(land, bb.NoisyChannel(0.1), 0.5)
        x = post.sample(np.random.default_rng(0), 50_000)
        from vsd.seqcore import rank
        freq = np.bincount(rank(x, 2), minlength=8) / 50_000
        np.testing.assert_allclose(freq, post.probs, atol=0.01)
        np.testing.assert_allclose(post.prob(enumerate_space(2, 3)), post.probs)


def test_synthetic_landscape_scaled():
    land = bb.synthetic_landscape(4, 5, seed=3)
    assert land.values.min() == 0.0 and land.values.max() == 1.0
    assert land.superlevel_size(0.5) == int(np.sum(land.values > 0.5))
