import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctsev.classifiers import (
    ErtParams,
    GbParams,
    LogregParams,
    SvmModel,
    SvmParams,
    build_ensemble,
    kkt_violation,
    load_model,
    loss_and_grad,
    save_model,
    smo,
    train_ert,
    train_gboost,
    train_knn,
    train_logreg,
    train_svm,
    vote,
)
from ctsev.classifiers.model_io import MAGIC, dumps, loads
from ctsev.classifiers.svm import kernel_matrix
from ctsev.errors import CorruptModelError, InvalidParameterError, ModelVersionError


def pad80(X2):
    X = np.zeros((len(X2), 80))
    X[:, : X2.shape[1]] = X2
    return X


def rate_like(rng, n_per_class=25):
    """Feature vectors whose rates cluster by class, like scan features do."""
    y = np.repeat([1, 2, 3, 4], n_per_class)
    centre = (y - 0.5) / 4
    X = np.clip(centre[:, None] + rng.normal(0, 0.06, (len(y), 80)), 0, 1)
    return X, y


def blobs(rng, d=1.0, n=20):
    """Two 2-D blobs separated along x0 by a gap of exactly ``d``; labels 1 and 2."""
    a = np.column_stack([-d / 2 - rng.uniform(0, 1, n), rng.uniform(-1, 1, n)])
    b = np.column_stack([d / 2 + rng.uniform(0, 1, n), rng.uniform(-1, 1, n)])
    # two pinned pairs at matching heights make x0 = 0 the unique max-margin separator
    a[:2] = [[-d / 2, -0.8], [-d / 2, 0.8]]
    b[:2] = [[d / 2, -0.8], [d / 2, 0.8]]
    return pad80(np.vstack([a, b])), np.repeat([1, 2], n)


class TestErt:
    def test_memorizes_distinct_points(self, rng):
        X, y = rate_like(rng)
        model = train_ert(X, y, ErtParams(n_trees=100, seed=1))
        assert (model.predict(X) == y).all()

    def test_random_labels_still_memorized(self, rng):
        X = rng.uniform(size=(60, 80))
        y = rng.integers(1, 5, 60)
        assert (train_ert(X, y, ErtParams(n_trees=30)).predict(X) == y).all()

    def test_single_class(self, rng):
        X = rng.uniform(size=(10, 80))
        model = train_ert(X, np.full(10, 3), ErtParams(n_trees=5))
        assert (model.predict(rng.uniform(size=(20, 80))) == 3).all()

    def test_unanimous_scores(self, rng):
        X = rng.uniform(size=(10, 80))
        model = train_ert(X, np.full(10, 3), ErtParams(n_trees=5))
        cls, scores = model.predict_one(X[0])
        assert cls == 3 and scores[2] == 1.0

    def test_seed_and_threads(self, rng):
        X, y = rate_like(rng, 10)
        a = dumps(train_ert(X, y, ErtParams(n_trees=20, seed=5)))
        b = dumps(train_ert(X, y, ErtParams(n_trees=20, seed=5), threads=3))
        c = dumps(train_ert(X, y, ErtParams(n_trees=20, seed=6)))
        assert a == b and a != c

    def test_params_and_dims(self, rng):
        with pytest.raises(InvalidParameterError):
            ErtParams(k_features=0)
        with pytest.raises(InvalidParameterError):
            ErtParams(n_trees=0)
        with pytest.raises(InvalidParameterError):
            train_ert(np.zeros((0, 80)), [])
        model = train_ert(*rate_like(rng, 3), ErtParams(n_trees=2))
        with pytest.raises(InvalidParameterError):
            model.predict(np.zeros((1, 79)))


class TestGboost:
    @settings(max_examples=5, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_loss_nonincreasing(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(40, 80))
        y = rng.integers(1, 5, 40)
        trace = train_gboost(X, y, GbParams(n_rounds=60)).loss_trace
        assert trace[0] == pytest.approx(np.log(4))
        assert (np.diff(trace) <= 1e-9).all()

    def test_separable_within_fifty_rounds(self, rng):
        X, y = blobs(rng)
        model = train_gboost(X, y, GbParams(n_rounds=50))
        assert (model.predict(X) == y).all()

    def test_single_sample(self):
        X = np.full((1, 80), 0.3)
        model = train_gboost(X, [3], GbParams(n_rounds=1))
        assert model.predict(X).tolist() == [3]
        np.testing.assert_allclose(model.predict_scores(X).sum(), 1.0)


class TestSvm:
    def test_linear_max_margin(self, rng):
        d = 1.0
        X, y = blobs(rng, d)
        model = train_svm(X, y, SvmParams(kernel="linear", C=10))
        assert (model.predict(X) == y).all()
        _, _, sv, coef, b = model.pairs[0]
        w = coef @ sv
        # class 1 is the positive side, lying at x0 < 0
        assert w[0] < 0
        margin = 1 / np.linalg.norm(w)
        assert abs(margin - d / 2) <= 0.05 * d / 2
        assert abs(b / w[0]) <= 0.05 * d / 2  # separator near x0 = 0
        assert model.kkt_max <= 1e-3

    def test_xor_rbf(self):
        X = pad80(np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float))
        y = np.array([1, 1, 2, 2])
        model = train_svm(X, y, SvmParams(kernel="rbf", gamma=1.0, C=10))
        assert (model.predict(X) == y).all()

    def test_kkt_on_noisy_multiclass(self, rng):
        X, y = rate_like(rng, 15)
        X = np.clip(X + rng.normal(0, 0.2, X.shape), 0, 1)
        model = train_svm(X, y, SvmParams(C=1.0, tol=1e-3))
        assert model.kkt_max <= 1e-3
        assert len(model.pairs) == 6

    def test_smo_kkt_binary(self, rng):
        A = rng.normal(size=(50, 3))
        yb = np.where(A[:, 0] + 0.5 * rng.normal(size=50) > 0, 1.0, -1.0)
        K = kernel_matrix(A, A, "rbf", 0.5)
        sol = smo(K, yb, 2.0, tol=1e-4)
        assert sol.converged
        assert abs(sol.alpha @ yb) < 1e-9
        assert kkt_violation(K, yb, sol.alpha, sol.b, 2.0) <= 1e-4

    def test_vote_tie_broken_by_margin(self):
        class Fixed(SvmModel):
            def pair_decisions(self, X):
                # pairs (1,2) (1,3) (1,4) (2,3) (2,4) (3,4): votes 1,1,4,2,2,3 -> (2, 2, 1, 1)
                return np.array([[0.1, 0.1, -0.1, 0.2, 0.3, 0.5]])

        pairs = [(a, b, np.zeros((1, 80)), np.zeros(1), 0.0) for a, b in itertools.combinations([1, 2, 3, 4], 2)]
        model = Fixed(SvmParams(), 1.0, pairs, [1, 2, 3, 4])
        np.testing.assert_array_equal(model.predict_scores(np.zeros(80))[0], [2, 2, 1, 1])
        # summed margins: class 1: 0.1 + 0.1 - 0.1 = 0.1, class 2: -0.1 + 0.2 + 0.3 = 0.4
        assert model.predict(np.zeros(80)).tolist() == [2]

    def test_single_class_constant(self, rng, caplog):
        model = train_svm(rng.uniform(size=(5, 80)), np.full(5, 2))
        assert (model.predict(rng.uniform(size=(3, 80))) == 2).all()
        assert "single class" in caplog.text

    def test_params(self):
        with pytest.raises(InvalidParameterError):
            SvmParams(C=0)
        with pytest.raises(InvalidParameterError):
            SvmParams(kernel="poly")

    def test_threads_independent(self, rng):
        X, y = rate_like(rng, 8)
        assert dumps(train_svm(X, y)) == dumps(train_svm(X, y, threads=4))


class TestKnn:
    def test_one_nn_memorizes(self, rng):
        X, y = rate_like(rng)
        assert (train_knn(X, y, 1).predict(X) == y).all()

    def test_matches_brute_force(self, rng):
        X, y = rate_like(rng, 10)
        Q = rng.uniform(size=(30, 80))
        model = train_knn(X, y, 1)
        for q, p in zip(Q, model.predict(Q)):
            dists = [float(np.sum((q - x) ** 2)) for x in X]
            assert p == y[dists.index(min(dists))]

    def test_equidistant_lower_index_wins(self):
        X = pad80(np.array([[1.0, 0], [-1.0, 0]]))
        assert train_knn(X, [3, 1], 1).predict(np.zeros((1, 80))).tolist() == [3]
        assert train_knn(X[::-1], [1, 3], 1).predict(np.zeros((1, 80))).tolist() == [1]

    def test_vote_tie_smaller_class(self):
        X = pad80(np.array([[1.0, 0], [2.0, 0]]))
        assert train_knn(X, [4, 2], 2).predict(np.zeros((1, 80))).tolist() == [2]

    def test_k_too_large(self, rng):
        with pytest.raises(InvalidParameterError):
            train_knn(rng.uniform(size=(3, 80)), [1, 2, 3], 4)


class TestLogreg:
    def test_gradient_matches_finite_differences(self, rng):
        X = rng.normal(size=(12, 80))
        Y = np.eye(4)[rng.integers(0, 4, 12)]
        theta = rng.normal(scale=0.1, size=80 * 4 + 4)
        _, g = loss_and_grad(theta, X, Y, l2=0.01)
        h = 1e-6
        num = np.array([(loss_and_grad(theta + h * e, X, Y, 0.01)[0] - loss_and_grad(theta - h * e, X, Y, 0.01)[0])
                        / (2 * h) for e in np.eye(len(theta))])
        assert np.linalg.norm(num - g) / np.linalg.norm(g) <= 1e-5

    def test_separable_blobs(self, rng):
        X, y = blobs(rng)
        model = train_logreg(X, y, LogregParams(epochs=500))
        assert (model.predict(X) == y).all()
        np.testing.assert_allclose(model.predict_scores(X).sum(axis=1), 1.0)


class TestEnsemble:
    def test_all_vote_combinations(self):
        kinds = ("gboost", "ert", "svm")
        for votes in itertools.product([1, 2, 3, 4], repeat=3):
            counts = {v: votes.count(v) for v in votes}
            majority = [v for v, c in counts.items() if c >= 2]
            expected = majority[0] if majority else votes[0]
            assert vote(votes, kinds) == expected

    def test_examples(self):
        assert vote((2, 2, 3)) == 2
        assert vote((1, 1, 1)) == 1
        assert vote((1, 2, 3)) == 1
        assert vote((1, 2, 3), priority=("svm", "ert", "gboost")) == 3

    def test_model_votes(self, rng):
        X, y = rate_like(rng, 8)
        ens = build_ensemble(train_gboost(X, y, GbParams(n_rounds=10)), train_ert(X, y, ErtParams(n_trees=10)),
                             train_svm(X, y))
        votes = ens.member_votes(X)
        expected = [vote(v) for v in votes]
        assert ens.predict(X).tolist() == expected
        assert (ens.predict_scores(X).sum(axis=1) == 3).all()

    def test_wrong_members(self, rng):
        X, y = rate_like(rng, 3)
        ert = train_ert(X, y, ErtParams(n_trees=2))
        with pytest.raises(InvalidParameterError):
            build_ensemble(ert, ert, train_svm(X, y))


class TestModelIo:
    @pytest.fixture(scope="class")
    @staticmethod
    def models():
        rng = np.random.default_rng(3)
        X, y = rate_like(rng, 10)
        gb = train_gboost(X, y, GbParams(n_rounds=15))
        ert = train_ert(X, y, ErtParams(n_trees=15))
        svm = train_svm(X, y)
        return [gb, ert, svm, train_knn(X, y, 3), train_logreg(X, y, LogregParams(epochs=50)),
                build_ensemble(gb, ert, svm)]

    def test_roundtrip_predictions(self, models, tmp_path, rng):
        Q = rng.uniform(size=(100, 80))
        for m in models:
            path = tmp_path / f"{m.kind}.bin"
            save_model(m, path)
            back = load_model(path)
            assert type(back) is type(m)
            np.testing.assert_array_equal(back.predict(Q), m.predict(Q))
            np.testing.assert_array_equal(back.predict_scores(Q), m.predict_scores(Q))
            assert dumps(back) == path.read_bytes()

    def test_truncated(self, models):
        data = dumps(models[1])
        assert data.startswith(MAGIC)
        for cut in (len(data) - 1, len(data) // 2, 10):
            with pytest.raises(CorruptModelError):
                loads(data[:cut])

    def test_flipped_byte(self, models):
        data = bytearray(dumps(models[0]))
        data[len(data) // 2] ^= 0xFF
        with pytest.raises(CorruptModelError):
            loads(bytes(data))

    def test_unknown_kind(self):
        import hashlib
        body = MAGIC + struct.pack("<H", 5) + b"bayes" + struct.pack("<I", 2) + b"{}"
        with pytest.raises(ModelVersionError):
            loads(body + hashlib.sha256(body).digest())

    def test_other_version(self, models):
        data = b"CTSEV02" + dumps(models[0])[7:]
        with pytest.raises(ModelVersionError):
            loads(data)

    def test_not_a_model(self, tmp_path):
        (tmp_path / "x").write_bytes(b"hello world, not a model at all" * 3)
        with pytest.raises(CorruptModelError):
            load_model(tmp_path / "x")
