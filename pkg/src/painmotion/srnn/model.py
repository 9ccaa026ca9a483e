"""Sparsely-connected GRU autoencoder ensemble with a shared latent layer.

Three encoder/decoder pairs (one per input stream) run GRU cells whose
hidden state at each step comes from the previous state, a state ``L``
steps back, or their mean, selected by a frozen per-step sparseness code.
The encoders' final states are linearly mapped and concatenated into one
shared latent vector, which (projected per decoder) seeds the decoders;
the training objective is the summed squared reconstruction error plus an
L1 penalty on the shared latent.

In the independent ("IF") mode the shared layer is dropped: each decoder
starts from its own encoder's final state, the L1 penalty applies per
autoencoder, and the latent used downstream is the plain concatenation of
final states.

Gradients are computed by hand-written backpropagation through time; see
``grad`` and the finite-difference tests.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..serialize import load_arrays, save_arrays
from .cells import DecoderCellParams, GruCellParams, _uniform_init, gru_cell_backward, gru_cell_forward
from .head import FusionHead


@dataclass
class ModelConfig:
    input_dims: tuple = (13, 13, 4)
    hidden_sizes: tuple = (128, 128, 64)
    skip_lengths: tuple = (3, 3, 2)
    lambda_l1: float = 0.005
    mode: str = "shared"  # "shared" (SF) or "independent" (IF)
    fc_dims: tuple = (160, 80)
    dropout: float = 0.5
    max_len: int = 4096

    def __post_init__(self):
        self.input_dims = tuple(int(d) for d in self.input_dims)
        self.hidden_sizes = tuple(int(n) for n in self.hidden_sizes)
        self.skip_lengths = tuple(int(L) for L in self.skip_lengths)
        self.fc_dims = tuple(int(d) for d in self.fc_dims)
        if not len(self.input_dims) == len(self.hidden_sizes) == len(self.skip_lengths):
            raise ValueError("input_dims, hidden_sizes and skip_lengths must have equal length")
        if self.mode not in ("shared", "independent"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if any(L < 1 for L in self.skip_lengths):
            raise ValueError("skip lengths must be >= 1")

    @property
    def n_autoencoders(self):
        return len(self.input_dims)

    @property
    def latent_dim(self):
        return int(sum(self.hidden_sizes))


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class EnsembleModel:
    """Parameters and forward/backward machinery of the autoencoder ensemble."""

    def __init__(self, config, encoders, decoders, shared_maps, init_w, init_b, enc_wiring, dec_wiring, head):
        self.config = config
        self.encoders = encoders
        self.decoders = decoders
        self.shared_maps = shared_maps  # list of (n_i, n_i), shared mode only
        self.init_w = init_w  # list of (latent_dim, n_i), shared mode only
        self.init_b = init_b
        self.enc_wiring = enc_wiring  # list of int8 code arrays, 0=(1,0) 1=(0,1) 2=(1,1)
        self.dec_wiring = dec_wiring
        self.head = head
        self.channel_stats = None  # optional normalization stats, set by pipelines

    # -- construction -------------------------------------------------------

    @classmethod
    def build(cls, config, seed):
        """Initialize parameters and freeze the sparse wiring from ``seed``."""
        param_ss, wiring_ss = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(param_ss)
        wiring_rng = np.random.default_rng(wiring_ss)
        shared = config.mode == "shared"
        encoders, decoders, shared_maps, init_w, init_b = [], [], [], [], []
        for d, n in zip(config.input_dims, config.hidden_sizes):
            encoders.append(GruCellParams.init(d, n, rng))
            decoders.append(DecoderCellParams.init(d, n, rng))
            if shared:
                shared_maps.append(_uniform_init(rng, n, (n, n)))
                init_w.append(_uniform_init(rng, config.latent_dim, (config.latent_dim, n)))
                init_b.append(np.zeros(n))
        head = FusionHead.build(config.latent_dim, config.fc_dims, config.dropout, rng)
        enc_wiring = [
            wiring_rng.integers(0, 3, size=config.max_len).astype(np.int8)
            for _ in range(config.n_autoencoders)
        ]
        dec_wiring = [
            wiring_rng.integers(0, 3, size=config.max_len).astype(np.int8)
            for _ in range(config.n_autoencoders)
        ]
        return cls(config, encoders, decoders, shared_maps, init_w, init_b, enc_wiring, dec_wiring, head)

    def named_parameters(self):
        """Trainable parameters of the reconstruction objective, in a fixed order."""
        out = []
        for i in range(self.config.n_autoencoders):
            for name, arr in self.encoders[i].named():
                out.append((f"ae{i}.enc.{name}", arr))
            for name, arr in self.decoders[i].named():
                out.append((f"ae{i}.dec.{name}", arr))
            if self.config.mode == "shared":
                out.append((f"ae{i}.shared_w", self.shared_maps[i]))
                out.append((f"ae{i}.init_w", self.init_w[i]))
                out.append((f"ae{i}.init_b", self.init_b[i]))
        return out

    # -- wiring -------------------------------------------------------------

    def _code(self, wiring, t, L):
        """Effective sparseness code at 1-indexed step t; before the skip
        horizon only the standard path exists."""
        if t <= L:
            return 0
        return int(wiring[t - 1])

    def use_standard_wiring(self):
        """Force every sparseness pair to (1, 0): plain GRU reference wiring."""
        for codes in self.enc_wiring + self.dec_wiring:
            codes[:] = 0

    # -- forward ------------------------------------------------------------

    @staticmethod
    def _promote(streams):
        arrs = [np.asarray(s, dtype=np.float64) for s in streams]
        squeeze = arrs[0].ndim == 2
        if squeeze:
            arrs = [a[None] for a in arrs]
        C = arrs[0].shape[1]
        for a in arrs:
            if a.shape[1] != C:
                raise ValueError(f"stream length mismatch: {[a.shape[1] for a in arrs]}")
        return arrs, squeeze

    def _check_length(self, C):
        if C > self.config.max_len:
            raise ValueError(
                f"sequence length {C} exceeds the frozen wiring horizon "
                f"{self.config.max_len}; rebuild the model with a larger max_len"
            )

    def _run_encoder(self, i, X, collect):
        p = self.encoders[i]
        L = self.config.skip_lengths[i]
        codes = self.enc_wiring[i]
        B, C, _ = X.shape
        n = self.config.hidden_sizes[i]
        H = np.zeros((C + 1, B, n))
        caches = [] if collect else None
        for t in range(1, C + 1):
            x = X[:, t - 1, :]
            code = self._code(codes, t, L)
            if code == 0:
                h, cf = gru_cell_forward(p, x, H[t - 1])
                cs = None
            elif code == 1:
                h, cs = gru_cell_forward(p, x, H[t - L])
                cf = None
            else:
                hf, cf = gru_cell_forward(p, x, H[t - 1])
                hs, cs = gru_cell_forward(p, x, H[t - L])
                h = (hf + hs) / 2.0
            H[t] = h
            if collect:
                caches.append((code, cf, cs))
        return H, caches

    def _decoder_init(self, i, z):
        """Initial decoder hidden state for autoencoder i.

        Shared mode projects the latent to the decoder width and squashes
        with tanh so the hidden-state boundedness invariant holds from t=0;
        independent mode hands the encoder's final state over directly.
        """
        if self.config.mode == "shared":
            pre = z @ self.init_w[i] + self.init_b[i]
            return np.tanh(pre), pre
        lo = sum(self.config.hidden_sizes[:i])
        return z[:, lo : lo + self.config.hidden_sizes[i]], None

    def _run_decoder(self, i, h0, C, collect):
        p = self.decoders[i]
        L = self.config.skip_lengths[i]
        codes = self.dec_wiring[i]
        B = h0.shape[0]
        n = self.config.hidden_sizes[i]
        d = self.config.input_dims[i]
        HD = np.zeros((C + 1, B, n))
        HD[0] = h0
        S = np.zeros((C + 1, B, d))  # S[0] = 0 start token
        caches = [] if collect else None
        for t in range(1, C + 1):
            e = S[t - 1] @ p.embed
            code = self._code(codes, t, L)
            if code == 0:
                h, cf = gru_cell_forward(p.cell, e, HD[t - 1])
                cs = None
            elif code == 1:
                h, cs = gru_cell_forward(p.cell, e, HD[t - L])
                cf = None
            else:
                hf, cf = gru_cell_forward(p.cell, e, HD[t - 1])
                hs, cs = gru_cell_forward(p.cell, e, HD[t - L])
                h = (hf + hs) / 2.0
            HD[t] = h
            S[t] = h @ p.readout_w + p.readout_b
            if collect:
                caches.append((code, cf, cs))
        return HD, S, caches

    def _encode_parts(self, arrs, collect=False):
        H_all, caches_all, finals = [], [], []
        for i, X in enumerate(arrs):
            H, caches = self._run_encoder(i, X, collect)
            H_all.append(H)
            caches_all.append(caches)
            finals.append(H[-1])
        if self.config.mode == "shared":
            z = np.concatenate([finals[i] @ self.shared_maps[i] for i in range(len(arrs))], axis=1)
        else:
            z = np.concatenate(finals, axis=1)
        return z, finals, H_all, caches_all

    def encode_shared(self, streams):
        """Run the encoders over time-aligned streams and return the latent.

        Accepts per-stream arrays shaped (C, d_i) or batched (B, C, d_i);
        returns (latent_dim,) or (B, latent_dim) accordingly.
        """
        arrs, squeeze = self._promote(streams)
        self._check_length(arrs[0].shape[1])
        z, _, _, _ = self._encode_parts(arrs)
        return z[0] if squeeze else z

    def decode_ensemble(self, z, length):
        """Reconstruct all streams from a latent vector.

        The decoders emit in reverse order internally; the returned arrays
        are flipped back to forward time order, shaped like the inputs.
        """
        if length < 1:
            raise ValueError("length must be >= 1")
        self._check_length(length)
        z = np.asarray(z, dtype=np.float64)
        squeeze = z.ndim == 1
        if squeeze:
            z = z[None]
        recons = []
        for i in range(self.config.n_autoencoders):
            h0, _ = self._decoder_init(i, z)
            _, S, _ = self._run_decoder(i, h0, length, collect=False)
            rev = S[1:]  # step t reconstructs original index length - t
            fwd = rev[::-1].transpose(1, 0, 2)
            recons.append(fwd[0] if squeeze else fwd)
        return tuple(recons)

    # -- objective ----------------------------------------------------------

    @staticmethod
    def _batch_streams(batch):
        if hasattr(batch, "streams"):
            return batch.streams()
        return batch

    def loss(self, batch):
        """Joint objective: summed squared reconstruction error over all
        autoencoders and steps plus the L1 latent penalty, averaged over the
        batch. Weight decay is handled by the optimizer, not here."""
        J, _ = self._forward_objective(batch, collect=False)
        return J

    def _forward_objective(self, batch, collect):
        arrs, _ = self._promote(self._batch_streams(batch))
        C = arrs[0].shape[1]
        self._check_length(C)
        B = arrs[0].shape[0]
        z, finals, H_all, enc_caches = self._encode_parts(arrs, collect)
        lam = self.config.lambda_l1
        decs = []
        recon = 0.0
        for i, X in enumerate(arrs):
            h0, pre = self._decoder_init(i, z)
            HD, S, caches = self._run_decoder(i, h0, C, collect)
            # step t emits the reconstruction of original index C - t
            diff = S[1:] - X[:, ::-1, :].transpose(1, 0, 2)
            recon += float((diff * diff).sum())
            decs.append((HD, S, caches, diff, pre))
        if self.config.mode == "shared":
            l1 = float(np.abs(z).sum())
        else:
            l1 = float(sum(np.abs(f).sum() for f in finals))
        J = (recon + lam * l1) / B
        state = (arrs, z, finals, H_all, enc_caches, decs, B, C)
        return J, state

    def grad(self, batch):
        """Loss and exact gradients of the joint objective for every
        parameter reported by ``named_parameters``.

        Returns (J, grads) where grads maps parameter name to an array of
        the parameter's shape.
        """
        J, state = self._forward_objective(batch, collect=True)
        arrs, z, finals, H_all, enc_caches, decs, B, C = state
        cfg = self.config
        lam = cfg.lambda_l1
        shared = cfg.mode == "shared"

        g_enc = [p.zeros_like() for p in self.encoders]
        g_dec = [p.zeros_like() for p in self.decoders]
        g_shared = [np.zeros_like(m) for m in self.shared_maps] if shared else []
        g_iw = [np.zeros_like(m) for m in self.init_w] if shared else []
        g_ib = [np.zeros_like(m) for m in self.init_b] if shared else []

        dz = lam * np.sign(z) if shared else np.zeros_like(z)
        d_final = [None] * cfg.n_autoencoders

        for i in range(cfg.n_autoencoders):
            p = self.decoders[i]
            L = cfg.skip_lengths[i]
            HD, S, caches, diff, pre = decs[i]
            dHD = np.zeros_like(HD)
            dS_carry = [np.zeros((B, cfg.input_dims[i])) for _ in range(C + 1)]
            for t in range(C, 0, -1):
                g_s = 2.0 * diff[t - 1] + dS_carry[t]
                g_dec[i].readout_w += HD[t].T @ g_s
                g_dec[i].readout_b += g_s.sum(axis=0)
                dHD[t] += g_s @ p.readout_w.T
                gh = dHD[t]
                code, cf, cs = caches[t - 1]
                if code == 0:
                    de, dhp = gru_cell_backward(p.cell, cf, gh, g_dec[i].cell)
                    dHD[t - 1] += dhp
                elif code == 1:
                    de, dhp = gru_cell_backward(p.cell, cs, gh, g_dec[i].cell)
                    dHD[t - L] += dhp
                else:
                    de, dhp = gru_cell_backward(p.cell, cf, 0.5 * gh, g_dec[i].cell)
                    de2, dhp2 = gru_cell_backward(p.cell, cs, 0.5 * gh, g_dec[i].cell)
                    de += de2
                    dHD[t - 1] += dhp
                    dHD[t - L] += dhp2
                g_dec[i].embed += S[t - 1].T @ de
                dS_carry[t - 1] += de @ p.embed.T
            dh0 = dHD[0]
            if shared:
                dpre = dh0 * (1.0 - np.tanh(pre) ** 2)
                g_iw[i] += z.T @ dpre
                g_ib[i] += dpre.sum(axis=0)
                dz += dpre @ self.init_w[i].T
            else:
                d_final[i] = dh0.copy()

        # latent -> encoder final states
        lo = 0
        for i in range(cfg.n_autoencoders):
            n = cfg.hidden_sizes[i]
            dz_i = dz[:, lo : lo + n]
            if shared:
                g_shared[i] += finals[i].T @ dz_i
                d_final[i] = dz_i @ self.shared_maps[i].T
            else:
                extra = lam * np.sign(finals[i])
                d_final[i] = (d_final[i] if d_final[i] is not None else 0.0) + dz_i + extra
            lo += n

        # encoders, back through time
        for i in range(cfg.n_autoencoders):
            p = self.encoders[i]
            L = cfg.skip_lengths[i]
            H = H_all[i]
            caches = enc_caches[i]
            dH = np.zeros_like(H)
            dH[C] = d_final[i]
            for t in range(C, 0, -1):
                gh = dH[t]
                code, cf, cs = caches[t - 1]
                if code == 0:
                    _, dhp = gru_cell_backward(p, cf, gh, g_enc[i])
                    dH[t - 1] += dhp
                elif code == 1:
                    _, dhp = gru_cell_backward(p, cs, gh, g_enc[i])
                    dH[t - L] += dhp
                else:
                    _, dhp = gru_cell_backward(p, cf, 0.5 * gh, g_enc[i])
                    _, dhp2 = gru_cell_backward(p, cs, 0.5 * gh, g_enc[i])
                    dH[t - 1] += dhp
                    dH[t - L] += dhp2

        grads = {}
        for i in range(cfg.n_autoencoders):
            for name, arr in g_enc[i].named():
                grads[f"ae{i}.enc.{name}"] = arr / B
            for name, arr in g_dec[i].named():
                grads[f"ae{i}.dec.{name}"] = arr / B
            if shared:
                grads[f"ae{i}.shared_w"] = g_shared[i] / B
                grads[f"ae{i}.init_w"] = g_iw[i] / B
                grads[f"ae{i}.init_b"] = g_ib[i] / B
        return J, grads

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        meta = {"kind": "srnn_ensemble", "version": 1, "config": asdict(self.config)}
        arrays = {name: arr for name, arr in self.named_parameters()}
        for i in range(self.config.n_autoencoders):
            arrays[f"wiring.enc{i}"] = self.enc_wiring[i]
            arrays[f"wiring.dec{i}"] = self.dec_wiring[i]
        arrays.update(self.head.arrays("head."))
        if self.channel_stats is not None:
            for k in range(3):
                arrays[f"norm.mean{k}"] = self.channel_stats.means[k]
                arrays[f"norm.std{k}"] = self.channel_stats.stds[k]
            meta["has_stats"] = True
        save_arrays(path, meta, arrays)

    @classmethod
    def load(cls, path):
        from ..dataset import ChannelStats

        meta, arrays = load_arrays(path)
        if meta.get("kind") != "srnn_ensemble":
            raise ValueError(f"{path}: not an ensemble checkpoint")
        config = ModelConfig(**meta["config"])
        model = cls.build(config, seed=0)
        for name, arr in model.named_parameters():
            arr[...] = arrays[name]
        for i in range(config.n_autoencoders):
            model.enc_wiring[i][...] = arrays[f"wiring.enc{i}"]
            model.dec_wiring[i][...] = arrays[f"wiring.dec{i}"]
        model.head.load_arrays(arrays, "head.")
        if meta.get("has_stats"):
            model.channel_stats = ChannelStats(
                means=tuple(arrays[f"norm.mean{k}"] for k in range(3)),
                stds=tuple(arrays[f"norm.std{k}"] for k in range(3)),
            )
        return model


def ensemble_loss(model, batch):
    """Module-level alias for the joint objective (see EnsembleModel.loss)."""
    return model.loss(batch)


def reconstruction_objective(targets, recons, latent, lambda_l1):
    """The objective value from already-computed reconstructions.

    ``targets`` and ``recons`` are matching lists of (C, d) arrays (one per
    autoencoder), ``latent`` the shared latent vector.  Exposed separately
    so the loss formula is testable without running a model forward.
    """
    recon = sum(float(((np.asarray(t) - np.asarray(r)) ** 2).sum()) for t, r in zip(targets, recons))
    return recon + lambda_l1 * float(np.abs(np.asarray(latent)).sum())
