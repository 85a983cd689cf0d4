import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import Pipeline

from coresel import (
    CoresetSelector,
    ProxyClassifier,
    SyntheticSpec,
    generate_synthetic,
    k_center_greedy,
)
from coresel.errors import ArtifactValidationError


@pytest.fixture(scope="module")
def data():
    tf, tl, sf, sl = generate_synthetic(
        SyntheticSpec(n_per_class=30, num_classes=3, dim=6,
                      cluster_separation=6, noise_sigma=1.0, seed=11))
    return tf.data.astype(np.float64), tl.labels, sf.data.astype(np.float64), sl.labels


class TestCoresetSelector:
    def test_matches_direct_library_call(self, data):
        X, y, _, _ = data
        sel = CoresetSelector(method="kcenter", fraction=0.2, random_state=3).fit(X, y)
        from coresel import FeatureMatrix, LabelVector
        direct = k_center_greedy(FeatureMatrix(X), LabelVector(y, 3),
                                 k=len(sel.indices_), seed=3, fraction=0.2)
        assert np.array_equal(sel.indices_, direct.indices)

    def test_transform_selects_rows(self, data):
        X, y, _, _ = data
        sel = CoresetSelector(method="herding", fraction=0.25).fit(X, y)
        out = sel.transform(X)
        np.testing.assert_array_equal(out, X[sel.indices_])
        assert out.shape[0] == len(sel.indices_)

    def test_fit_transform(self, data):
        X, y, _, _ = data
        a = CoresetSelector(method="fl", fraction=0.2).fit_transform(X, y)
        b = CoresetSelector(method="fl", fraction=0.2).fit(X, y).transform(X)
        np.testing.assert_array_equal(a, b)

    def test_balanced_quotas(self, data):
        X, y, _, _ = data
        sel = CoresetSelector(method="random", fraction=0.25, balanced=True,
                              random_state=1).fit(X, y)
        counts = np.bincount(y[sel.indices_], minlength=3)
        assert counts.max() - counts.min() <= 1

    def test_trace_backed_method(self, data):
        X, y, _, _ = data
        sel = CoresetSelector(method="el2n", fraction=0.2, epochs=6,
                              reference_epoch=3).fit(X, y)
        assert len(sel.indices_) == round(0.2 * len(X))
        assert np.all(sel.weights_ == 1.0)

    def test_glister_with_internal_validation_split(self, data):
        X, y, _, _ = data
        sel = CoresetSelector(method="glister", fraction=0.2, epochs=6,
                              reference_epoch=3, val_fraction=0.2).fit(X, y)
        assert len(sel.indices_) == round(0.2 * (len(X) - len(X) // 5))
        assert sel.indices_.max() < len(X)
        # selected rows come from the training side of the split
        assert len(np.unique(sel.indices_)) == len(sel.indices_)

    def test_get_params_clone_roundtrip(self):
        sel = CoresetSelector(method="gc", fraction=0.3, gc_lambda=0.7)
        twin = clone(sel)
        assert twin.get_params() == sel.get_params()

    def test_pipeline_composition(self, data):
        X, y, _, _ = data
        pipe = Pipeline([("select", CoresetSelector(method="kcenter", fraction=0.5))])
        out = pipe.fit_transform(X, y)
        assert out.shape == (round(0.5 * len(X)), X.shape[1])

    def test_unknown_method(self, data):
        X, y, _, _ = data
        with pytest.raises(ArtifactValidationError, match="unknown method"):
            CoresetSelector(method="belief").fit(X, y)

    def test_transform_feature_mismatch(self, data):
        X, y, _, _ = data
        sel = CoresetSelector(method="random", fraction=0.2).fit(X, y)
        with pytest.raises(ArtifactValidationError, match="features"):
            sel.transform(X[:, :3])


class TestProxyClassifier:
    def test_fit_predict_on_separable_data(self, data):
        X, y, Xt, yt = data
        clf = ProxyClassifier(arch="linear", epochs=30, random_state=0).fit(X, y)
        assert clf.score(Xt, yt) >= 0.95
        proba = clf.predict_proba(Xt)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
        assert proba.shape == (len(Xt), 3)

    def test_sample_weight_accepted(self, data):
        X, y, Xt, yt = data
        clf = ProxyClassifier(arch="mlp1", epochs=10, random_state=0)
        clf.fit(X, y, sample_weight=np.ones(len(y)))
        plain = ProxyClassifier(arch="mlp1", epochs=10, random_state=0).fit(X, y)
        np.testing.assert_array_equal(clf.model_.w2, plain.model_.w2)

    def test_clone(self):
        clf = ProxyClassifier(arch="mlp1", hidden_units=16)
        assert clone(clf).get_params()["hidden_units"] == 16
