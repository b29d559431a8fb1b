"""A small MNIST classifier used as the feature and class-probability source
for Inception Score and FID.

The scores it produces live in its own 64-d feature space, so they are
comparable between runs of this package but not with published numbers
computed on other feature extractors.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .autodiff import Tensor, grad, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, batches
from .layers import EuclideanLinear, LeakyReLU
from .metrics import GaussianSummary, fid, inception_score_splits
from .networks import Network
from .optim import Adam
from .rng import Rng
from .validation import check_images, check_labels

MIN_TEST_ACCURACY = 0.96


class EvaluatorQualityError(RuntimeError):
    """The trained classifier is too weak to be a trustworthy metric."""


class MnistEvaluator(ClassifierMixin, BaseEstimator):
    """MLP classifier 784 -> 256 -> 64 -> 10 with LeakyReLU(0.2).

    ``transform`` returns the 64-unit activations used for FID;
    ``predict_proba`` returns the class posteriors used for IS.
    """

    def __init__(self, hidden=(256, 64), slope=0.2, epochs=10, batch_size=256, lr=1e-3, random_state=0):
        self.hidden = hidden
        self.slope = slope
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.random_state = random_state

    def _build(self, rng: Rng) -> Network:
        widths = [784, *self.hidden, 10]
        layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            layers.append(EuclideanLinear(a, b, rng))
            if i < len(widths) - 2:
                layers.append(LeakyReLU(self.slope))
        return Network(layers, "classifier")

    def fit(self, X, y):
        X = check_images(X)
        y = check_labels(y, X)
        rng = Rng(self.random_state)
        net = self._build(rng.spawn(0))
        params = net.parameters()
        opt = Adam(params, lr=self.lr, betas=(0.9, 0.999))
        names = list(params)
        shuffle = rng.spawn(1)
        for _ in range(self.epochs):
            for xb, yb in batches((X, y), self.batch_size, shuffle):
                log_probs = net(Tensor(xb)).log_softmax()
                loss = -(log_probs * Tensor(yb)).sum() * (1.0 / len(xb))
                grads = grad(loss, [params[k] for k in names])
                opt.step({k: g.data for k, g in zip(names, grads)})
        self.network_ = net
        self.classes_ = np.arange(10)
        self.n_features_in_ = X.shape[1]
        return self

    def _forward(self, X, upto: int | None = None, chunk: int = 2048) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_images(X)
        layers = self.network_.layers if upto is None else self.network_.layers[:upto]
        outs = []
        with no_grad():
            for start in range(0, len(X), chunk):
                h = Tensor(X[start : start + chunk])
                for layer in layers:
                    h = layer(h)
                outs.append(h.data)
        return np.concatenate(outs) if outs else np.zeros((0, 10))

    def decision_function(self, X) -> np.ndarray:
        return self._forward(X)

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def transform(self, X) -> np.ndarray:
        """Activations of the last hidden layer (the FID feature space)."""
        return self._forward(X, upto=len(self.network_.layers) - 1)

    # -- metric helpers ---------------------------------------------------------

    def summarize(self, X) -> GaussianSummary:
        return GaussianSummary.from_features(self.transform(X))

    def fid(self, real, X_fake) -> float:
        """FID between ``real`` (a summary or raw images) and generated images."""
        if not isinstance(real, GaussianSummary):
            real = self.summarize(real)
        return fid(real, self.summarize(X_fake))

    def inception_score(self, X, n_splits: int = 10) -> tuple[float, float]:
        return inception_score_splits(self.predict_proba(X), n_splits)

    # -- persistence ------------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "network_")
        meta = {"kind": "evaluator", "params": self.get_params()}
        meta["params"]["hidden"] = list(self.hidden)
        if hasattr(self, "test_accuracy_"):
            meta["test_accuracy"] = self.test_accuracy_
        save_checkpoint(path, self.network_.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "MnistEvaluator":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "evaluator":
            raise ValueError(f"{path} does not hold an evaluator")
        params = dict(meta["params"])
        params["hidden"] = tuple(params["hidden"])
        est = cls(**params)
        net = est._build(Rng(0))
        net.load_state_dict(arrays)
        est.network_ = net
        est.classes_ = np.arange(10)
        est.n_features_in_ = 784
        if "test_accuracy" in meta:
            est.test_accuracy_ = meta["test_accuracy"]
        return est


def train_evaluator(train: Dataset, test: Dataset, seed: int = 0, min_accuracy: float = MIN_TEST_ACCURACY, **params) -> MnistEvaluator:
    """Fit the evaluator and enforce the test-accuracy gate."""
    est = MnistEvaluator(random_state=seed, **params).fit(train.images, train.labels)
    est.test_accuracy_ = float(est.score(test.images, test.labels))
    if est.test_accuracy_ < min_accuracy:
        raise EvaluatorQualityError(f"test accuracy {est.test_accuracy_:.4f} below {min_accuracy}")
    return est
