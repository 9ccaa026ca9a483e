"""GRU cell primitives with explicit forward and backward passes.

Everything uses the row-vector convention: an input batch is ``(B, d)``,
a hidden batch is ``(B, n)``, and affine maps are ``x @ W + b`` with ``W``
of shape ``(d, n)``.  Single vectors are accepted and returned as 1-D
arrays by the public step functions.

The backward functions accumulate parameter gradients in place into a
"zeros_like" clone of the parameter object and return the gradients with
respect to the step inputs, which is all that backpropagation through
time needs.
"""

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit as _sigmoid


def _uniform_init(rng, fan_in, shape):
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class GruCellParams:
    """Weights of one GRU cell: update gate z, reset gate r, candidate h."""

    W_z: np.ndarray  # (d, n)
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray  # (n, n)
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray  # (n,)
    b_r: np.ndarray
    b_h: np.ndarray

    @classmethod
    def init(cls, input_dim, hidden_dim, rng):
        return cls(
            W_z=_uniform_init(rng, input_dim, (input_dim, hidden_dim)),
            W_r=_uniform_init(rng, input_dim, (input_dim, hidden_dim)),
            W_h=_uniform_init(rng, input_dim, (input_dim, hidden_dim)),
            U_z=_uniform_init(rng, hidden_dim, (hidden_dim, hidden_dim)),
            U_r=_uniform_init(rng, hidden_dim, (hidden_dim, hidden_dim)),
            U_h=_uniform_init(rng, hidden_dim, (hidden_dim, hidden_dim)),
            b_z=np.zeros(hidden_dim),
            b_r=np.zeros(hidden_dim),
            b_h=np.zeros(hidden_dim),
        )

    @property
    def input_dim(self):
        return self.W_z.shape[0]

    @property
    def hidden_dim(self):
        return self.W_z.shape[1]

    def zeros_like(self):
        return GruCellParams(**{f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)})

    def named(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)


@dataclass
class DecoderCellParams:
    """Decoder cell: a GRU cell fed by an embedded previous reconstruction.

    ``embed`` maps the previously emitted vector back into the cell input
    (square, identity at init) and ``readout_w/readout_b`` map the hidden
    state to the reconstructed vector.
    """

    cell: GruCellParams
    embed: np.ndarray  # (d, d)
    readout_w: np.ndarray  # (n, d)
    readout_b: np.ndarray  # (d,)

    @classmethod
    def init(cls, input_dim, hidden_dim, rng):
        return cls(
            cell=GruCellParams.init(input_dim, hidden_dim, rng),
            embed=np.eye(input_dim),
            readout_w=_uniform_init(rng, hidden_dim, (hidden_dim, input_dim)),
            readout_b=np.zeros(input_dim),
        )

    def zeros_like(self):
        return DecoderCellParams(
            cell=self.cell.zeros_like(),
            embed=np.zeros_like(self.embed),
            readout_w=np.zeros_like(self.readout_w),
            readout_b=np.zeros_like(self.readout_b),
        )

    def named(self):
        for name, arr in self.cell.named():
            yield name, arr
        yield "embed", self.embed
        yield "readout_w", self.readout_w
        yield "readout_b", self.readout_b


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def gru_cell_forward(p, x, h_prev):
    """One GRU step on a batch. Returns (h, cache) with cache for backward."""
    a_z = x @ p.W_z + h_prev @ p.U_z + p.b_z
    z = _sigmoid(a_z)
    a_r = x @ p.W_r + h_prev @ p.U_r + p.b_r
    r = _sigmoid(a_r)
    rh = r * h_prev
    a_h = x @ p.W_h + rh @ p.U_h + p.b_h
    hc = np.tanh(a_h)
    h = z * hc + (1.0 - z) * h_prev
    return h, (x, h_prev, z, r, rh, hc)


def gru_cell_backward(p, cache, dh, g):
    """Backward through one GRU step.

    ``dh`` is dJ/dh for this step's output; gradients are accumulated into
    ``g`` (a zeros_like GruCellParams).  Returns (dx, dh_prev).
    """
    x, h_prev, z, r, rh, hc = cache
    dz = dh * (hc - h_prev)
    dhc = dh * z
    dh_prev = dh * (1.0 - z)

    da_h = dhc * (1.0 - hc * hc)
    g.W_h += x.T @ da_h
    g.U_h += rh.T @ da_h
    g.b_h += da_h.sum(axis=0)
    drh = da_h @ p.U_h.T
    dh_prev += drh * r
    dr = drh * h_prev
    dx = da_h @ p.W_h.T

    da_z = dz * z * (1.0 - z)
    g.W_z += x.T @ da_z
    g.U_z += h_prev.T @ da_z
    g.b_z += da_z.sum(axis=0)
    dx += da_z @ p.W_z.T
    dh_prev += da_z @ p.U_z.T

    da_r = dr * r * (1.0 - r)
    g.W_r += x.T @ da_r
    g.U_r += h_prev.T @ da_r
    g.b_r += da_r.sum(axis=0)
    dx += da_r @ p.W_r.T
    dh_prev += da_r @ p.U_r.T
    return dx, dh_prev


def gru_encoder_step(p, s_t, h_prev):
    """Single encoder GRU step; accepts 1-D vectors or (B, ·) batches."""
    s_t, squeeze = _as_batch(s_t)
    h_prev, _ = _as_batch(h_prev)
    if not np.all(np.isfinite(s_t)):
        raise ValueError("encoder step received non-finite input")
    if s_t.shape[1] != p.input_dim or h_prev.shape[1] != p.hidden_dim:
        raise ValueError(
            f"shape mismatch: input {s_t.shape} vs (·, {p.input_dim}), "
            f"hidden {h_prev.shape} vs (·, {p.hidden_dim})"
        )
    h, _ = gru_cell_forward(p, s_t, h_prev)
    return h[0] if squeeze else h


def gru_decoder_step(p, s_hat_prev, h_prev):
    """Single decoder step: embed the previous reconstruction, run the cell,
    emit the next reconstructed vector through the readout.

    Returns (h_t, s_hat_t).
    """
    s_hat_prev, squeeze = _as_batch(s_hat_prev)
    h_prev, _ = _as_batch(h_prev)
    if s_hat_prev.shape[1] != p.cell.input_dim or h_prev.shape[1] != p.cell.hidden_dim:
        raise ValueError(
            f"shape mismatch: reconstruction {s_hat_prev.shape} vs (·, {p.cell.input_dim}), "
            f"hidden {h_prev.shape} vs (·, {p.cell.hidden_dim})"
        )
    e = s_hat_prev @ p.embed
    h, _ = gru_cell_forward(p.cell, e, h_prev)
    s_hat = h @ p.readout_w + p.readout_b
    if squeeze:
        return h[0], s_hat[0]
    return h, s_hat


# sparseness weight pairs (w_f, w_f') indexed by wiring code
WIRING_PAIRS = ((1, 0), (0, 1), (1, 1))


def sparse_mix(f_out, fskip_out, w_t):
    """Combine the standard-path and skip-path states under a sparseness pair.

    ``w_t`` is a (w_f, w_f') pair from {(1,0), (0,1), (1,1)}; the result is
    the weighted sum divided by the number of active paths.
    """
    w_f, w_fp = int(w_t[0]), int(w_t[1])
    if (w_f, w_fp) == (0, 0):
        raise ValueError("sparseness pair (0, 0) is not allowed: at least one path must be active")
    if (w_f, w_fp) == (1, 0):
        return np.asarray(f_out)
    if (w_f, w_fp) == (0, 1):
        return np.asarray(fskip_out)
    return (np.asarray(f_out) + np.asarray(fskip_out)) / 2.0
