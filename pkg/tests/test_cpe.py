import numpy as np
import pytest

from vsd import cpe
from vsd.genmodel import ShapeError
from vsd.seqcore import BinaryDataset, enumerate_space


def _data(labels_fn, m=4, v=3, n=300, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, v, size=(n, m))
    z = labels_fn(x).astype(np.int64)
    return BinaryDataset(x, z, 0.0, v)


def _random_model(arch, seed=0, m=3, v=3, hidden=5):
    base = cpe.zeros(arch, m, v, hidden)
    w = np.random.default_rng(seed).normal(size=base.weights.size)
    return cpe.CpeModel(arch, m, v, w, base.hidden, 1e-6)


@pytest.mark.parametrize("arch", cpe.ARCHITECTURES)
def test_zero_model_predicts_half(arch):
    m = cpe.zeros(arch, 4, 3)
    x = np.zeros((2, 4), np.int64)
    if arch == "additive":
        # prod of sigmoid(0) = 0.5**M
        np.testing.assert_allclose(cpe.predict_prob(m, x), 0.5 ** 4)
    else:
        np.testing.assert_allclose(cpe.predict_prob(m, x), 0.5)
        assert cpe.predict_logprob(m, x[0]) == pytest.approx(np.log(0.5))


@pytest.mark.parametrize("arch", cpe.ARCHITECTURES)
def test_logprob_is_log_of_prob(arch):
    m = _random_model(arch, 1)
    x = enumerate_space(3, 3)
    np.testing.assert_allclose(cpe.predict_logprob(m, x), np.log(cpe.predict_prob(m, x)), atol=1e-12)


@pytest.mark.parametrize("arch", cpe.ARCHITECTURES)
def test_logloss_gradient_finite_differences(arch):
    m = _random_model(arch, 2)
    data = _data(lambda x: x[:, 0] == 1, m=3, v=3, n=40)
    w = m.weights
    g = cpe.logloss_grad(m, data)
    h = 1e-6
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        fd = (cpe.logloss(m, data, w + e) - cpe.logloss(m, data, w - e)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("arch", ["logistic", "mlp"])
def test_separable_problem(arch):
    data = _data(lambda x: x[:, 1] == 2)
    model = cpe.fit_logloss(data, cpe.TrainConfig(architecture=arch, iterations=1000), np.random.default_rng(0))
    assert cpe.logloss(model, data) < 0.1
    assert model.warning is None


def test_additive_fits_conjunction():
    data = _data(lambda x: (x[:, 0] == 0) & (x[:, 2] == 1))
    model = cpe.fit_logloss(data, cpe.TrainConfig(architecture="additive", iterations=2000, lr=0.05),
                            np.random.default_rng(0))
    assert cpe.logloss(model, data) < 0.1


def test_loss_non_increasing_over_trailing_window():
    data = _data(lambda x: (x[:, 0] + x[:, 3]) % 3 == 0, n=500)
    model = cpe.fit_logloss(data, cpe.TrainConfig(iterations=1000), np.random.default_rng(1))
    trace = np.array(model.loss_trace)
    assert trace[-1] <= trace[-100]
    assert trace[-1] < trace[0]


@pytest.mark.parametrize("arch", cpe.ARCHITECTURES)
def test_single_class_trains_to_clamped_rate(arch):
    data = _data(lambda x: np.ones(len(x)))
    model = cpe.fit_logloss(data, cpe.TrainConfig(architecture=arch), np.random.default_rng(0))
    assert model.warning is not None
    p = cpe.predict_prob(model, enumerate_space(3, 4))
    assert np.all(p >= 1 - 1e-6 - 1e-9)
    data0 = _data(lambda x: np.zeros(len(x)))
    p0 = cpe.predict_prob(cpe.fit_logloss(data0, cpe.TrainConfig(architecture=arch)), enumerate_space(3, 4))
    np.testing.assert_allclose(p0, 1e-6, rtol=1e-6)


def test_clamp_bounds():
    base = cpe.zeros("logistic", 2, 2)
    w = np.array([100.0, 0, 0, 0, 0])
    big = cpe.CpeModel("logistic", 2, 2, w, 0, 1e-6)
    p = cpe.predict_prob(big, enumerate_space(2, 2))
    assert p.max() <= 1 - 1e-6 and p.min() >= 1e-6
    assert np.all(np.isfinite(cpe.predict_logprob(cpe.CpeModel("logistic", 2, 2, -w, 0, 1e-6),
                                                  enumerate_space(2, 2))))
    assert base.weights.size == 5


def test_retraining_is_bitwise_deterministic():
    data = _data(lambda x: x[:, 0] > x[:, 1])
    cfg = cpe.TrainConfig(iterations=200)
    a = cpe.fit_logloss(data, cfg, np.random.default_rng(3))
    b = cpe.fit_logloss(data, cfg, np.random.default_rng(3))
    assert a.weights.tobytes() == b.weights.tobytes()


def test_additive_posterior_factorises():
    # p(x) pi(x) with uniform p equals the product of its position marginals
    m = _random_model("additive", 4, m=3, v=3)
    dom = enumerate_space(3, 3)
    post = np.exp(cpe.predict_logprob(m, dom))
    post /= post.sum()
    cube = post.reshape(3, 3, 3)
    marg = [cube.sum(axis=(1, 2)), cube.sum(axis=(0, 2)), cube.sum(axis=(0, 1))]
    prod = np.einsum("i,j,k->ijk", *marg)
    np.testing.assert_allclose(cube, prod, atol=1e-12)


def test_shape_errors():
    m = cpe.zeros("mlp", 3, 2)
    with pytest.raises(ShapeError):
        cpe.predict_prob(m, np.zeros((1, 4), np.int64))
    with pytest.raises(ShapeError):
        cpe.predict_prob(m, np.array([[0, 1, 2]]))


def test_config_validation():
    for bad in (dict(lr=0), dict(iterations=0), dict(clamp=0.5), dict(architecture="cnn")):
        with pytest.raises(ValueError):
            cpe.TrainConfig(**bad)


@pytest.mark.parametrize("arch", cpe.ARCHITECTURES)
def test_serialization(arch):
    m = _random_model(arch, 5, m=4, v=3, hidden=7)
    back = cpe.loads(cpe.dumps(m))
    assert back.hidden == m.hidden
    np.testing.assert_array_equal(back.weights, m.weights)
    with pytest.raises(ShapeError):
        cpe.loads("logistic,4,3\n1.0\n")
