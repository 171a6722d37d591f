"""scikit-learn compatible wrappers.

``ToyNetClassifier`` is the saliency source; ``KeepAugment`` is a
transformer producing augmented copies of an image batch ``(N, H, W, C)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from .augment import augment_batch
from .config import AugmentConfig, TransformPolicy
from .nn import _softmax, predict_labels, train_toy
from .saliency import batch_saliency, lowres_shape
from .tensor import ContractError, check_image, resize_bicubic


def check_images(X):
    """Validate a batch and return a float64 ``(N, H, W, C)`` array."""
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4 or len(X) == 0:
        raise ValueError(f"expected a non-empty batch of shape (N, H, W, C), got {X.shape}")
    return np.stack([check_image(img) for img in X])


class ToyNetClassifier(ClassifierMixin, BaseEstimator):
    """Small conv net trained with minibatch SGD.

    Parameters
    ----------
    channels : tuple of int, default=(8, 16)
        Output channels of the conv blocks.
    early_head : bool, default=False
        Train an auxiliary head after the first block.
    aux_coef : float, default=0.3
        Weight of the auxiliary loss.
    epochs, lr, batch_size : SGD settings.
    activation : str, default="softplus"
    random_state : int, default=0
    """

    def __init__(
        self,
        channels=(8, 16),
        early_head=False,
        aux_coef=0.3,
        epochs=10,
        lr=0.05,
        batch_size=32,
        activation="softplus",
        random_state=0,
    ):
        self.channels = channels
        self.early_head = early_head
        self.aux_coef = aux_coef
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.activation = activation
        self.random_state = random_state

    def fit(self, X, y):
        X = check_images(X)
        self.classes_, y_idx = np.unique(np.asarray(y), return_inverse=True)
        self.net_, self.train_accuracy_ = train_toy(
            X,
            y_idx,
            epochs=self.epochs,
            lr=self.lr,
            early_head=self.early_head,
            aux_coef=self.aux_coef,
            rng=self.random_state,
            batch_size=self.batch_size,
            channels=self.channels,
            n_classes=len(self.classes_),
            activation=self.activation,
        )
        return self

    def decision_function(self, X):
        check_is_fitted(self, "net_")
        return self.net_.forward(check_images(X))

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[predict_labels(scores)]

    def label_indices(self, y):
        check_is_fitted(self, "net_")
        y = np.asarray(y)
        idx = np.searchsorted(self.classes_, y)
        if np.any(idx >= len(self.classes_)) or np.any(self.classes_[np.minimum(idx, len(self.classes_) - 1)] != y):
            raise ValueError("y contains labels not seen during fit")
        return idx

    def saliency(self, X, y=None, head="main"):
        """Saliency maps ``(N, H, W)``; without ``y`` the predicted class is used."""
        X = check_images(X)
        labels = predict_labels(self.decision_function(X)) if y is None else self.label_indices(y)
        return batch_saliency(self.net_, X, labels, head=head)


class KeepAugment(TransformerMixin, BaseEstimator):
    """Saliency-preserving augmentation as a transformer.

    ``fit`` trains whatever saliency network the strategy needs (a
    half-resolution copy for ``"low-resolution"``, one with an early head
    for ``"early-head"``); a fitted ``estimator`` is reused as is.
    ``transform`` returns augmented images; :meth:`augment` also returns
    soft labels.
    """

    def __init__(
        self,
        mode="keep-cutout",
        tau=0.6,
        region=16,
        policy=None,
        saliency="full",
        stride=None,
        random_state=0,
        parallelism=1,
        estimator=None,
    ):
        self.mode = mode
        self.tau = tau
        self.region = region
        self.policy = policy
        self.saliency = saliency
        self.stride = stride
        self.random_state = random_state
        self.parallelism = parallelism
        self.estimator = estimator

    def _config(self):
        policy = self.policy if self.policy is not None else TransformPolicy()
        return AugmentConfig(
            mode=self.mode,
            tau=self.tau,
            region=self.region,
            policy=policy,
            saliency=self.saliency,
            seed=self.random_state,
            stride=self.stride,
            parallelism=self.parallelism,
        )

    def fit(self, X, y=None):
        X = check_images(X)
        self.config_ = self._config()
        self.estimator_ = None
        self.classes_ = None if y is None else np.unique(y)
        strategy = self.config_.saliency
        if not self.config_.uses_saliency or not strategy.needs_net:
            return self
        base = self.estimator if self.estimator is not None else ToyNetClassifier()
        if strategy.variant == "early-head" and not base.get_params()["early_head"]:
            base = clone(base).set_params(early_head=True)
        if strategy.variant == "low-resolution":
            lh, lw = lowres_shape(X.shape[1], X.shape[2], strategy.factor)
            X = np.stack([resize_bicubic(img, lh, lw) for img in X])
        if hasattr(base, "net_") and base.net_.input_shape == X.shape[1:]:
            self.estimator_ = base
        else:
            if y is None:
                raise ValueError(f"saliency strategy {strategy.variant!r} needs y to train its network")
            self.estimator_ = clone(base).fit(X, y)
        return self

    def augment(self, X, y=None):
        """Augmented images and soft labels ``(N, n_classes)`` (None without y)."""
        check_is_fitted(self, "config_")
        X = check_images(X)
        cfg = self.config_
        labels = None
        classes = self.classes_
        if y is not None:
            classes = np.unique(y) if classes is None else classes
            labels = np.searchsorted(classes, np.asarray(y))
        net = net_lr = None
        if self.estimator_ is not None:
            if cfg.saliency.variant == "low-resolution":
                net_lr = self.estimator_.net_
            else:
                net = self.estimator_.net_
            if labels is not None and not np.array_equal(self.estimator_.classes_, classes):
                raise ContractError("labels differ from the classes the saliency network was trained on")
        results = augment_batch(X, labels, cfg, net=net, net_lr=net_lr)
        images = np.stack([r.image for r in results])
        if labels is None:
            return images, None
        soft = np.stack([r.label.to_vector(len(classes)) for r in results])
        return images, soft

    def transform(self, X, y=None):
        return self.augment(X, y)[0]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X, y)
