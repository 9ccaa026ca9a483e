"""Fully connected projection head and feature fusion.

The shared latent passes through two affine layers (latent -> 160 -> 80 by
default), each followed by batch normalization; the first is squashed with
tanh and dropped out during training, the second is linear.  The resulting
descriptor is concatenated with the 8 hand-crafted features to form the
fused classifier input.

The encoders are frozen once autoencoder training is done; only this head
(and the classifier readout stacked on it) receives gradient updates
afterwards.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _sigmoid

from .optim import Adam

_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1


def _bn_forward(x, gamma, beta, run_mean, run_var, training):
    if training:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        run_mean *= 1.0 - _BN_MOMENTUM
        run_mean += _BN_MOMENTUM * mu
        run_var *= 1.0 - _BN_MOMENTUM
        run_var += _BN_MOMENTUM * var
    else:
        mu, var = run_mean, run_var
    inv = 1.0 / np.sqrt(var + _BN_EPS)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, training)


def _bn_backward(dy, cache, gamma, g_gamma, g_beta):
    xhat, inv, training = cache
    g_gamma += (dy * xhat).sum(axis=0)
    g_beta += dy.sum(axis=0)
    dxhat = dy * gamma
    if training:
        dx = inv * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
    else:
        dx = dxhat * inv
    return dx


@dataclass
class FusionHead:
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    bn1_gamma: np.ndarray
    bn1_beta: np.ndarray
    bn1_mean: np.ndarray
    bn1_var: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    bn2_gamma: np.ndarray
    bn2_beta: np.ndarray
    bn2_mean: np.ndarray
    bn2_var: np.ndarray
    dropout: float

    @classmethod
    def build(cls, latent_dim, fc_dims, dropout, rng):
        d1, d2 = fc_dims
        lim1 = 1.0 / np.sqrt(latent_dim)
        lim2 = 1.0 / np.sqrt(d1)
        return cls(
            fc1_w=rng.uniform(-lim1, lim1, size=(latent_dim, d1)),
            fc1_b=np.zeros(d1),
            bn1_gamma=np.ones(d1),
            bn1_beta=np.zeros(d1),
            bn1_mean=np.zeros(d1),
            bn1_var=np.ones(d1),
            fc2_w=rng.uniform(-lim2, lim2, size=(d1, d2)),
            fc2_b=np.zeros(d2),
            bn2_gamma=np.ones(d2),
            bn2_beta=np.zeros(d2),
            bn2_mean=np.zeros(d2),
            bn2_var=np.ones(d2),
            dropout=dropout,
        )

    @property
    def out_dim(self):
        return self.fc2_w.shape[1]

    def named_parameters(self):
        return [
            ("fc1_w", self.fc1_w),
            ("fc1_b", self.fc1_b),
            ("bn1_gamma", self.bn1_gamma),
            ("bn1_beta", self.bn1_beta),
            ("fc2_w", self.fc2_w),
            ("fc2_b", self.fc2_b),
            ("bn2_gamma", self.bn2_gamma),
            ("bn2_beta", self.bn2_beta),
        ]

    def arrays(self, prefix=""):
        out = {prefix + name: arr for name, arr in self.named_parameters()}
        out[prefix + "bn1_mean"] = self.bn1_mean
        out[prefix + "bn1_var"] = self.bn1_var
        out[prefix + "bn2_mean"] = self.bn2_mean
        out[prefix + "bn2_var"] = self.bn2_var
        return out

    def load_arrays(self, arrays, prefix=""):
        for name, arr in self.arrays(prefix).items():
            arr[...] = arrays[name]

    def forward(self, z, training=False, rng=None, dropout_mask=None):
        """Project a (B, latent) batch to the (B, out_dim) descriptor.

        In training mode batch statistics feed the BN layers (running stats
        are updated) and dropout is applied after the first block; a mask
        can be passed explicitly for gradient checking.
        """
        a1 = z @ self.fc1_w + self.fc1_b
        b1, bn1_cache = _bn_forward(a1, self.bn1_gamma, self.bn1_beta, self.bn1_mean, self.bn1_var, training)
        t1 = np.tanh(b1)
        if training:
            if dropout_mask is None:
                if rng is None:
                    raise ValueError("training-mode forward needs an rng or an explicit dropout mask")
                dropout_mask = (rng.random(t1.shape) >= self.dropout).astype(np.float64)
            h1 = t1 * dropout_mask / (1.0 - self.dropout)
        else:
            dropout_mask = None
            h1 = t1
        a2 = h1 @ self.fc2_w + self.fc2_b
        out, bn2_cache = _bn_forward(a2, self.bn2_gamma, self.bn2_beta, self.bn2_mean, self.bn2_var, training)
        cache = (z, bn1_cache, t1, dropout_mask, h1, bn2_cache)
        return out, cache

    def backward(self, dout, cache, grads):
        """Accumulate parameter gradients into ``grads`` (dict keyed like
        named_parameters); returns the gradient w.r.t. the latent input."""
        z, bn1_cache, t1, dropout_mask, h1, bn2_cache = cache
        da2 = _bn_backward(dout, bn2_cache, self.bn2_gamma, grads["bn2_gamma"], grads["bn2_beta"])
        grads["fc2_w"] += h1.T @ da2
        grads["fc2_b"] += da2.sum(axis=0)
        dh1 = da2 @ self.fc2_w.T
        if dropout_mask is not None:
            dt1 = dh1 * dropout_mask / (1.0 - self.dropout)
        else:
            dt1 = dh1
        db1 = dt1 * (1.0 - t1 * t1)
        da1 = _bn_backward(db1, bn1_cache, self.bn1_gamma, grads["bn1_gamma"], grads["bn1_beta"])
        grads["fc1_w"] += z.T @ da1
        grads["fc1_b"] += da1.sum(axis=0)
        return da1 @ self.fc1_w.T


def project_and_fuse(model, z, delta, training=False, rng=None):
    """Project the latent through the head and append the hand-crafted
    features: the fused classifier input (80 + 8 = 88 dims by default).

    Inference (training=False) is deterministic: dropout is off and the BN
    layers use their frozen running statistics.
    """
    z = np.asarray(z, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None]
        delta = delta[None]
    if z.shape[1] != model.config.latent_dim:
        raise ValueError(f"latent has {z.shape[1]} dims, expected {model.config.latent_dim}")
    if delta.shape[1] != 8:
        raise ValueError(f"hand-crafted feature block has {delta.shape[1]} dims, expected 8")
    h, _ = model.head.forward(z, training=training, rng=rng)
    x = np.concatenate([h, delta], axis=1)
    return x[0] if squeeze else x


@dataclass
class HeadTrainConfig:
    epochs: int = 300
    lr: float = 3e-3
    weight_decay: float = 1e-4
    seed: int = 0


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_fused_classifier(head, Z, Delta, targets, objective, cfg):
    """Train the projection head jointly with a linear classifier readout.

    ``Z`` is the (n, latent) matrix of frozen encoder latents; ``Delta`` the
    (n, 8) hand-crafted block or None for the no-fusion ablation.  With
    ``objective='softmax'`` the targets are integer class ids; with
    ``objective='bce'`` they form an (n, l) 0/1 matrix and the readout is
    trained with per-label logistic loss.

    Returns (readout_w, readout_b, losses).
    """
    n = Z.shape[0]
    if objective == "softmax":
        n_out = int(targets.max()) + 1 if targets.size else 2
        n_out = max(n_out, 2)
        onehot = np.zeros((n, n_out))
        onehot[np.arange(n), targets.astype(int)] = 1.0
    elif objective == "bce":
        onehot = (np.asarray(targets, dtype=np.float64) > 0).astype(np.float64)
        n_out = onehot.shape[1]
    else:
        raise ValueError(f"unknown objective {objective!r}")

    rng = np.random.default_rng(cfg.seed)
    in_dim = head.out_dim + (Delta.shape[1] if Delta is not None else 0)
    lim = 1.0 / np.sqrt(in_dim)
    readout_w = rng.uniform(-lim, lim, size=(in_dim, n_out))
    readout_b = np.zeros(n_out)

    params = head.named_parameters() + [("readout_w", readout_w), ("readout_b", readout_b)]
    opt = Adam(params, weight_decay=cfg.weight_decay)
    losses = []
    for _ in range(cfg.epochs):
        h, cache = head.forward(Z, training=True, rng=rng)
        x = np.concatenate([h, Delta], axis=1) if Delta is not None else h
        logits = x @ readout_w + readout_b
        if objective == "softmax":
            probs = _softmax(logits)
            loss = -float(np.log(np.clip(probs[np.arange(n), targets.astype(int)], 1e-300, None)).sum()) / n
            dlogits = (probs - onehot) / n
        else:
            probs = _sigmoid(logits)
            loss = -float(
                (onehot * np.log(np.clip(probs, 1e-300, None))
                 + (1.0 - onehot) * np.log(np.clip(1.0 - probs, 1e-300, None))).sum()
            ) / (n * n_out)
            dlogits = (probs - onehot) / (n * n_out)
        grads = {name: np.zeros_like(p) for name, p in params}
        grads["readout_w"] += x.T @ dlogits
        grads["readout_b"] += dlogits.sum(axis=0)
        dx = dlogits @ readout_w.T
        head.backward(dx[:, : head.out_dim], cache, grads)
        opt.step(grads, cfg.lr)
        losses.append(loss)
    return readout_w, readout_b, losses
