"""Scikit-learn style estimators: the adversarial trainer and a ball embedding."""
from __future__ import annotations

import contextlib
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .autodiff import DomainError, NonFiniteError, Tensor, concat, grad, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .data import batches, one_hot, sample_noise
from .losses import gan_d_loss, gan_g_loss, wgan_g_loss, wgan_gp_d_loss
from .networks import (
    DISCRIMINATOR_WIDTHS,
    GENERATOR_WIDTHS,
    N_CLASSES,
    NOISE_DIM,
    Network,
    Variant,
    build_discriminator,
    build_generator,
    parse_config,
    render_config,
)
from .optim import Adam
from .poincare import exp_map_zero, log_map_zero
from .rng import Rng
from .validation import check_images, check_labels

DEFAULT_LR = {Variant.GAN: 1e-3, Variant.CGAN: 1e-4, Variant.WGAN_GP: 1e-4}


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite value or left the ball's domain."""

    def __init__(self, epoch: int, reason: str):
        super().__init__(f"diverged during epoch {epoch}: {reason}")
        self.epoch = epoch
        self.reason = reason


@contextlib.contextmanager
def _frozen(net: Network):
    """Temporarily stop recording gradients for ``net``'s parameters."""
    params = list(net.parameters().values())
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, saved):
            p.requires_grad = flag


class HyperbolicGAN(BaseEstimator):
    """GAN, CGAN or WGAN-GP with per-layer euclidean/hyperbolic generator and
    discriminator, trained on flattened images in ``[-1, 1]``.

    ``arch`` is an architecture string such as ``"D_ehhh G_eehe cd=1e-5 cg=1e-3"``.
    ``lr=None`` picks the variant's default learning rate.
    """

    def __init__(
        self,
        arch="D_eeee G_eeee",
        variant="gan",
        epochs=100,
        batch_size=64,
        d_steps=1,
        lr=None,
        beta1=0.5,
        beta2=0.999,
        gp_lambda=10.0,
        noise_dim=NOISE_DIM,
        d_widths=DISCRIMINATOR_WIDTHS,
        g_widths=GENERATOR_WIDTHS,
        random_state=0,
    ):
        self.arch = arch
        self.variant = variant
        self.epochs = epochs
        self.batch_size = batch_size
        self.d_steps = d_steps
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.gp_lambda = gp_lambda
        self.noise_dim = noise_dim
        self.d_widths = d_widths
        self.g_widths = g_widths
        self.random_state = random_state

    # -- setup ------------------------------------------------------------------

    @property
    def effective_lr(self) -> float:
        return float(self.lr) if self.lr is not None else DEFAULT_LR[Variant.parse(self.variant)]

    def initialize(self) -> "HyperbolicGAN":
        """Build fresh networks, optimizers and the training stream."""
        if self.batch_size < 1 or self.d_steps < 1:
            raise ValueError("batch_size and d_steps must be >= 1")
        cfg = parse_config(self.arch, self.variant)
        root = Rng(self.random_state)
        self.config_ = cfg
        self.generator_ = build_generator(cfg, self.g_widths, self.noise_dim, root.spawn(0))
        self.discriminator_ = build_discriminator(cfg, self.d_widths, self.g_widths[-1], root.spawn(1))
        betas = (self.beta1, self.beta2)
        self.g_opt_ = Adam(self.generator_.parameters(), self.effective_lr, betas)
        self.d_opt_ = Adam(self.discriminator_.parameters(), self.effective_lr, betas)
        self.rng_ = root.spawn(2)
        self.epoch_ = 0
        self.history_: list[dict] = []
        self.n_features_in_ = self.g_widths[-1]
        return self

    @property
    def conditional(self) -> bool:
        return self.config_.variant is Variant.CGAN

    def _validate(self, X, y):
        X = check_images(X, n_features=self.g_widths[-1])
        if Variant.parse(self.variant) is Variant.CGAN:
            if y is None:
                raise ValueError("the conditional variant needs labels")
            y = check_labels(y, X)
        else:
            y = np.zeros(len(X), dtype=np.int64)
        return X, y

    def _cond(self, x, labels):
        if labels is None:
            return x
        return concat([x if isinstance(x, Tensor) else Tensor(x), Tensor(labels)])

    def _fake_labels(self, n: int):
        return one_hot(self.rng_.integers(0, N_CLASSES, n)) if self.conditional else None

    # -- one adversarial step ---------------------------------------------------

    def _d_step(self, real: np.ndarray, labels) -> float:
        G, D = self.generator_, self.discriminator_
        params = D.parameters()
        names = list(params)
        n = len(real)
        z = sample_noise(n, self.noise_dim, self.rng_)
        fake_labels = self._fake_labels(n)
        with no_grad():
            fake = G(self._cond(z, fake_labels), training=True, rng=self.rng_).data
        if self.config_.variant is Variant.WGAN_GP:
            eps = self.rng_.uniform(n)

            def critic(x):
                return D(x, training=True, rng=self.rng_)

            loss = wgan_gp_d_loss(critic, real, fake, eps, self.gp_lambda)
        else:
            real_logits = D(self._cond(real, labels), training=True, rng=self.rng_)
            fake_logits = D(self._cond(fake, fake_labels), training=True, rng=self.rng_)
            loss = gan_d_loss(real_logits, fake_logits)
        grads = grad(loss, [params[k] for k in names])
        self.d_opt_.step({k: g.data for k, g in zip(names, grads)})
        return float(loss.data)

    def _g_step(self, n: int) -> float:
        G, D = self.generator_, self.discriminator_
        params = G.parameters()
        names = list(params)
        z = sample_noise(n, self.noise_dim, self.rng_)
        labels = self._fake_labels(n)
        with _frozen(D):
            fake = G(self._cond(z, labels), training=True, rng=self.rng_)
            if self.config_.variant is Variant.WGAN_GP:
                loss = wgan_g_loss(lambda x: D(x, training=True, rng=self.rng_), fake)
            else:
                loss = gan_g_loss(D(self._cond(fake, labels), training=True, rng=self.rng_))
            grads = grad(loss, [params[k] for k in names])
        self.g_opt_.step({k: g.data for k, g in zip(names, grads)})
        return float(loss.data)

    def _run_epoch(self, X: np.ndarray, y: np.ndarray) -> dict:
        epoch = self.epoch_ + 1
        d_losses, g_losses = [], []
        try:
            for real, labels in batches((X, y), self.batch_size, self.rng_):
                labels = labels if self.conditional else None
                for _ in range(self.d_steps):
                    d_losses.append(self._d_step(real, labels))
                g_losses.append(self._g_step(len(real)))
        except (NonFiniteError, DomainError) as exc:
            raise TrainingDiverged(epoch, str(exc)) from exc
        record = {"epoch": epoch, "loss_d": float(np.mean(d_losses)), "loss_g": float(np.mean(g_losses))}
        if not (math.isfinite(record["loss_d"]) and math.isfinite(record["loss_g"])):
            raise TrainingDiverged(epoch, "non-finite mean loss")
        self.epoch_ = epoch
        self.history_.append(record)
        return record

    # -- estimator API ------------------------------------------------------------

    def fit(self, X, y=None, callback=None):
        """Train from scratch for ``epochs`` epochs.

        ``callback(self, record)`` runs after every epoch; returning ``True``
        stops training early.
        """
        self.initialize()
        X, y = self._validate(X, y)
        for _ in range(self.epochs):
            record = self._run_epoch(X, y)
            if callback is not None and callback(self, record):
                break
        return self

    def partial_fit(self, X, y=None):
        """Run one more epoch, initializing on the first call."""
        if not hasattr(self, "generator_"):
            self.initialize()
        X, y = self._validate(X, y)
        self._run_epoch(X, y)
        return self

    def sample(self, n: int, labels=None, rng: Rng | None = None) -> np.ndarray:
        """Generate ``n`` images. For the conditional variant ``labels``
        defaults to the cycle 0, 1, ..., 9, 0, ...
        """
        check_is_fitted(self, "generator_")
        rng = rng or Rng(self.random_state).spawn(3)
        z = sample_noise(n, self.noise_dim, rng)
        onehot = None
        if self.conditional:
            labels = np.arange(n) % N_CLASSES if labels is None else check_labels(labels)
            if len(labels) != n:
                raise ValueError("need one label per sample")
            onehot = one_hot(labels)
        with no_grad():
            return self.generator_(self._cond(z, onehot)).data

    def discriminate(self, X, y=None) -> np.ndarray:
        """Discriminator (or critic) outputs in evaluation mode, one per row."""
        check_is_fitted(self, "discriminator_")
        X, y = self._validate(X, y)
        onehot = one_hot(y) if self.conditional else None
        with no_grad():
            return self.discriminator_(self._cond(X, onehot)).data[:, 0]

    # -- persistence ------------------------------------------------------------

    def _json_params(self) -> dict:
        params = self.get_params()
        params["d_widths"] = list(self.d_widths)
        params["g_widths"] = list(self.g_widths)
        return params

    def save(self, path) -> None:
        """Write parameters, optimizer moments, rng state and history."""
        check_is_fitted(self, "generator_")
        arrays = {}
        for tag, net, opt in (("G", self.generator_, self.g_opt_), ("D", self.discriminator_, self.d_opt_)):
            for k, a in net.state_dict().items():
                arrays[f"{tag}/{k}"] = a
            state = opt.state_dict()
            for moment in ("m", "v"):
                for k, a in state[moment].items():
                    arrays[f"{tag}_opt/{moment}/{k}"] = a
        meta = {
            "kind": "gan",
            "params": self._json_params(),
            "config": render_config(self.config_),
            "variant": self.config_.variant.value,
            "c_d": self.config_.c_d.c if self.config_.c_d else None,
            "c_g": self.config_.c_g.c if self.config_.c_g else None,
            "epoch": self.epoch_,
            "history": self.history_,
            "rng": self.rng_.get_state(),
            "opt_step": {"G": self.g_opt_.t, "D": self.d_opt_.t},
        }
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "HyperbolicGAN":
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "gan":
            raise ValueError(f"{path} does not hold a GAN checkpoint")
        params = dict(meta["params"])
        params["d_widths"] = tuple(params["d_widths"])
        params["g_widths"] = tuple(params["g_widths"])
        est = cls(**params)
        est.initialize()
        for tag, net, opt in (("G", est.generator_, est.g_opt_), ("D", est.discriminator_, est.d_opt_)):
            names = list(net.parameters())
            net.load_state_dict({k: arrays[f"{tag}/{k}"] for k in names})
            state = opt.state_dict()
            state["t"] = meta["opt_step"][tag]
            for moment in ("m", "v"):
                state[moment] = {k: arrays[f"{tag}_opt/{moment}/{k}"] for k in names}
            opt.load_state_dict(state)
        est.rng_.set_state(meta["rng"])
        est.epoch_ = int(meta["epoch"])
        est.history_ = list(meta["history"])
        return est


class PoincareBallEmbedding(TransformerMixin, BaseEstimator):
    """Map euclidean rows onto the Poincare ball of curvature ``c`` through
    the exponential map at the origin; ``inverse_transform`` applies the
    logarithmic map.
    """

    def __init__(self, c=1.0):
        self.c = c

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError("c must be a positive finite number")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        with no_grad():
            return exp_map_zero(X, self.c).data

    def inverse_transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        with no_grad():
            return log_map_zero(X, self.c).data
