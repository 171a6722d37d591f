"""A small convolutional classifier with hand-written backpropagation.

Layout: ``[conv3x3 -> activation -> avgpool2x2] * n_blocks -> flatten ->
linear``.  An optional early head (global average pool + linear) reads the
output of the first block.  Tensors are channels-last, ``(N, H, W, C)``,
and everything runs in float64.
"""

from __future__ import annotations

import copy

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ContractError, as_generator

ACTIVATIONS = ("softplus", "relu", "identity")


def _act(name, z):
    # softplus is shifted to pass through 0 so flattened features carry no
    # large constant offset into the classifier.
    if name == "softplus":
        return np.logaddexp(0.0, z) - np.log(2.0)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z):
    if name == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * z))  # logistic sigmoid, overflow-free
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


def _conv_forward(x, w, b):
    # x: (N, H, W, Cin); w: (3, 3, Cin, Cout). Same padding, stride 1.
    n, h, wd, cin = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (N, H, W, Cin, 3, 3)
    cols = cols.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * wd, 9 * cin)
    out = cols @ w.reshape(9 * cin, -1) + b
    return out.reshape(n, h, wd, -1), cols


def _conv_backward_input(dout, w):
    n, h, wd, cout = dout.shape
    cin = w.shape[2]
    dcols = dout.reshape(-1, cout) @ w.reshape(9 * cin, cout).T
    dcols = dcols.reshape(n, h, wd, 3, 3, cin)
    dxp = np.zeros((n, h + 2, wd + 2, cin))
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + wd, :] += dcols[:, :, :, i, j, :]
    return dxp[:, 1:-1, 1:-1, :]


def _pool_forward(x):
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    x = x[:, : 2 * h2, : 2 * w2, :]
    return x.reshape(n, h2, 2, w2, 2, c).mean(axis=(2, 4))


def _pool_backward(dout, in_shape):
    n, h, w, c = in_shape
    dx = np.zeros(in_shape)
    up = np.repeat(np.repeat(dout, 2, axis=1), 2, axis=2) * 0.25
    dx[:, : up.shape[1], : up.shape[2], :] = up
    return dx


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class ToyNet:
    """Parameters and forward/backward passes of the toy classifier.

    Parameters
    ----------
    input_shape : tuple of int
        ``(H, W, C)`` of the images the network accepts.
    n_classes : int
        Number of output logits ``K``.
    channels : sequence of int
        Output channels of each conv block; empty gives a linear model on
        the raw pixels.
    early_head : bool
        Attach the auxiliary head after the first block.
    activation : {"softplus", "relu", "identity"}
    rng : seed, Generator or RngStream
        Source of the initial weights.
    """

    def __init__(
        self,
        input_shape,
        n_classes,
        channels=(8, 16),
        early_head=False,
        activation="softplus",
        rng=None,
    ):
        if activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {activation!r}")
        if early_head and not channels:
            raise ContractError("early head needs at least one conv block")
        self.input_shape = tuple(int(v) for v in input_shape)
        self.n_classes = int(n_classes)
        self.channels = tuple(int(c) for c in channels)
        self.activation = activation
        gen = as_generator(rng)

        h, w, cin = self.input_shape
        self.conv_w, self.conv_b = [], []
        for cout in self.channels:
            if h < 2 or w < 2:
                raise ContractError(f"input {self.input_shape} too small for {len(self.channels)} blocks")
            std = np.sqrt(2.0 / (9 * cin))
            self.conv_w.append(gen.normal(0.0, std, size=(3, 3, cin, cout)))
            self.conv_b.append(np.zeros(cout))
            cin, h, w = cout, h // 2, w // 2
        self.feature_shape = (h, w, cin)
        d = h * w * cin
        self.fc_w = gen.normal(0.0, np.sqrt(1.0 / d), size=(d, self.n_classes))
        self.fc_b = np.zeros(self.n_classes)
        if early_head:
            c1 = self.channels[0]
            self.head_w = gen.normal(0.0, np.sqrt(1.0 / c1), size=(c1, self.n_classes))
            self.head_b = np.zeros(self.n_classes)
        else:
            self.head_w = self.head_b = None

    @property
    def has_early_head(self):
        return self.head_w is not None

    # -- parameter plumbing -------------------------------------------------

    def parameters(self):
        """Ordered ``name -> array`` mapping of every trainable tensor."""
        params = {}
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            params[f"conv{i}.weight"] = w
            params[f"conv{i}.bias"] = b
        params["fc.weight"] = self.fc_w
        params["fc.bias"] = self.fc_b
        if self.has_early_head:
            params["head.weight"] = self.head_w
            params["head.bias"] = self.head_b
        return params

    def set_parameters(self, params):
        expected = self.parameters()
        if set(params) != set(expected):
            raise ContractError(
                f"parameter names {sorted(params)} do not match {sorted(expected)}"
            )
        for name, value in params.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != expected[name].shape:
                raise ContractError(f"{name}: shape {value.shape} != {expected[name].shape}")
            kind, attr = name.split(".")
            if kind.startswith("conv"):
                getattr(self, f"conv_{attr[0]}")[int(kind[4:])] = value.copy()
            else:
                setattr(self, f"{kind}_{attr[0]}", value.copy())
        return self

    def config(self):
        return {
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "channels": list(self.channels),
            "early_head": self.has_early_head,
            "activation": self.activation,
        }

    def copy(self):
        return copy.deepcopy(self)

    # -- forward / backward ---------------------------------------------------

    def _check_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ContractError(
                f"network expects images of shape {self.input_shape}, got {x.shape[1:]}"
            )
        return x

    def _forward_blocks(self, x, n_blocks):
        caches = []
        for w, b in zip(self.conv_w[:n_blocks], self.conv_b[:n_blocks]):
            z, cols = _conv_forward(x, w, b)
            a = _act(self.activation, z)
            x = _pool_forward(a)
            caches.append((cols, z, a.shape, x))
        return x, caches

    def _block_grads(self, k, dout, caches):
        # dout is the gradient w.r.t. the pooled output of block k.
        cols, z, a_shape, _ = caches[k]
        return _pool_backward(dout, a_shape) * _act_grad(self.activation, z)

    def _backward_input(self, dout, caches):
        for k in range(len(caches) - 1, -1, -1):
            dz = self._block_grads(k, dout, caches)
            dout = _conv_backward_input(dz, self.conv_w[k])
        return dout

    def forward(self, x):
        """Main-head logits, shape ``(N, K)`` (or ``(K,)`` for one image)."""
        single = np.ndim(x) == 3
        x = self._check_batch(x)
        feats, _ = self._forward_blocks(x, len(self.conv_w))
        logits = feats.reshape(len(x), -1) @ self.fc_w + self.fc_b
        return logits[0] if single else logits

    def forward_early(self, x):
        """Early-head logits computed from the first block only."""
        if not self.has_early_head:
            raise ContractError("network has no early head")
        single = np.ndim(x) == 3
        x = self._check_batch(x)
        feats, _ = self._forward_blocks(x, 1)
        logits = feats.mean(axis=(1, 2)) @ self.head_w + self.head_b
        return logits[0] if single else logits

    def input_gradient(self, x, labels, head="main"):
        """Gradient of the selected logit of each image w.r.t. that image.

        Only the single logit ``logit[n, labels[n]]`` is differentiated, not
        a softmax or loss.  ``head="early"`` backpropagates through the
        first block alone.
        """
        x = self._check_batch(x)
        labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (len(x),))
        if np.any(labels < 0) or np.any(labels >= self.n_classes):
            raise ContractError(f"labels must lie in [0, {self.n_classes})")
        if head == "early":
            if not self.has_early_head:
                raise ContractError("network has no early head")
            feats, caches = self._forward_blocks(x, 1)
            fh, fw = feats.shape[1:3]
            dpool = self.head_w[:, labels].T / (fh * fw)
            dfeat = np.broadcast_to(dpool[:, None, None, :], feats.shape)
        elif head == "main":
            feats, caches = self._forward_blocks(x, len(self.conv_w))
            dfeat = self.fc_w[:, labels].T.reshape(feats.shape)
        else:
            raise ContractError(f"unknown head {head!r}")
        return self._backward_input(np.array(dfeat), caches)

    def loss_and_grads(self, x, y, aux_coef=0.0):
        """Mean cross-entropy (plus ``aux_coef`` x early-head loss) and gradients."""
        x = self._check_batch(x)
        y = np.asarray(y, dtype=np.int64)
        n = len(x)
        rows = np.arange(n)
        feats, caches = self._forward_blocks(x, len(self.conv_w))
        flat = feats.reshape(n, -1)
        logits = flat @ self.fc_w + self.fc_b
        probs = _softmax(logits)
        loss = -np.mean(np.log(probs[rows, y] + 1e-300))
        dlogits = probs.copy()
        dlogits[rows, y] -= 1.0
        dlogits /= n
        grads = {"fc.weight": flat.T @ dlogits, "fc.bias": dlogits.sum(axis=0)}
        dfeat = (dlogits @ self.fc_w.T).reshape(feats.shape)

        use_aux = self.has_early_head and aux_coef != 0.0
        if self.has_early_head:
            grads["head.weight"] = np.zeros_like(self.head_w)
            grads["head.bias"] = np.zeros_like(self.head_b)
        if use_aux:
            first = caches[0][3]
            pooled = first.mean(axis=(1, 2))
            aux_logits = pooled @ self.head_w + self.head_b
            aux_probs = _softmax(aux_logits)
            loss += aux_coef * -np.mean(np.log(aux_probs[rows, y] + 1e-300))
            daux = aux_probs.copy()
            daux[rows, y] -= 1.0
            daux *= aux_coef / n
            grads["head.weight"] = pooled.T @ daux
            grads["head.bias"] = daux.sum(axis=0)
            fh, fw = first.shape[1:3]
            dfirst = np.broadcast_to((daux @ self.head_w.T)[:, None, None, :] / (fh * fw), first.shape)
        else:
            dfirst = None

        if not caches:
            return loss, grads
        dx = dfeat
        for k in range(len(caches) - 1, -1, -1):
            if k == 0 and dfirst is not None:
                dx = dx + dfirst
            dz = self._block_grads(k, dx, caches)
            cols = caches[k][0]
            dflat = dz.reshape(-1, dz.shape[-1])
            grads[f"conv{k}.weight"] = (cols.T @ dflat).reshape(self.conv_w[k].shape)
            grads[f"conv{k}.bias"] = dflat.sum(axis=0)
            if k > 0:
                dx = _conv_backward_input(dz, self.conv_w[k])
        return loss, grads


def predict_labels(logits):
    """Argmax per row; ties resolve to the lowest class index."""
    return np.argmax(np.atleast_2d(logits), axis=1)


def train_toy(
    images,
    labels,
    epochs=10,
    lr=0.05,
    early_head=False,
    aux_coef=0.3,
    rng=0,
    batch_size=32,
    channels=(8, 16),
    n_classes=None,
    activation="softplus",
    net=None,
):
    """Minibatch SGD on cross-entropy.

    With ``early_head`` the objective is ``main + aux_coef * auxiliary``.
    Returns ``(net, train_accuracy)`` where the accuracy is measured on the
    whole training set after the last epoch.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ContractError("training set is empty")
    if len(images) != len(labels):
        raise ContractError(f"{len(images)} images but {len(labels)} labels")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ContractError(f"labels must lie in [0, {n_classes})")
    gen = as_generator(rng)
    if net is None:
        net = ToyNet(
            images.shape[1:],
            n_classes,
            channels=channels,
            early_head=early_head,
            activation=activation,
            rng=gen,
        )
    coef = aux_coef if early_head else 0.0
    for _ in range(epochs):
        order = gen.permutation(len(images))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            _, grads = net.loss_and_grads(images[idx], labels[idx], aux_coef=coef)
            params = net.parameters()
            for name, g in grads.items():
                params[name] -= lr * g
    accuracy = float(np.mean(predict_labels(net.forward(images)) == labels))
    return net, accuracy
