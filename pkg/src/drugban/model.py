"""
The DrugBAN network and its ablation variants.

Tensors are node-major: a drug batch is ``B x N x D_d`` (one row per atom)
and an encoded protein batch is ``B x M x D_p`` (one row per subsequence).
Unbatched ``N x D`` inputs work wherever the batch axis is not needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import HEAD_MODES, TrainConfig
from .errors import ConfigError, DataError, DimensionError, NumericError
from .nn import Linear, Module, uniform_param
from .protein import PAD_INDEX, VOCAB_SIZE
from .rng import substream
from .tensor import Tensor

P_CLAMP = 1e-7


class GCNEncoder(Module):
    def __init__(self, in_dim, embed_dim, hidden, rng, dtype):
        super().__init__()
        self.input_proj = Linear(in_dim, embed_dim, rng, bias=False, dtype=dtype)
        self.n_layers = len(hidden)
        dims = [embed_dim] + list(hidden)
        for i in range(self.n_layers):
            self.register(f"layer{i}", Linear(dims[i], dims[i + 1], rng, dtype=dtype))

    @property
    def out_dim(self):
        return getattr(self, f"layer{self.n_layers - 1}").out_features

    def __call__(self, feats: Tensor, adj: Tensor) -> Tensor:
        h = T.matmul(feats, self.input_proj.weight)
        for i in range(self.n_layers):
            layer = getattr(self, f"layer{i}")
            h = T.relu(layer(T.matmul(adj, h)))
        return h


class CNNEncoder(Module):
    def __init__(self, embed_dim, filters, kernels, rng, dtype):
        super().__init__()
        self.embedding = Tensor(rng.standard_normal((VOCAB_SIZE, embed_dim)).astype(dtype), requires_grad=True)
        self.n_layers = len(filters)
        self.kernels = list(kernels)
        c_in = embed_dim
        for i, (c_out, k) in enumerate(zip(filters, kernels)):
            self.register(f"conv{i}_weight", uniform_param(rng, (c_out, c_in, k), c_in * k, dtype))
            self.register(f"conv{i}_bias", uniform_param(rng, (c_out,), c_in * k, dtype))
            c_in = c_out
        self.out_dim = c_in

    def __call__(self, tokens) -> Tensor:
        x = T.embedding(self.embedding, tokens, pad_index=PAD_INDEX)  # B, L, D
        x = T.swapaxes(x, -1, -2)  # B, D, L
        for i in range(self.n_layers):
            x = T.relu(T.conv1d(x, getattr(self, f"conv{i}_weight"), getattr(self, f"conv{i}_bias")))
        return T.swapaxes(x, -1, -2)  # B, M, C


class BilinearAttention(Module):
    """Shared low-rank bilinear transforms ``U``, ``V`` plus one ``q`` vector per head."""

    def __init__(self, drug_dim, protein_dim, k, heads, stride, rng, dtype):
        super().__init__()
        if heads < 1:
            raise ConfigError("need at least one attention head")
        if k % stride:
            raise ConfigError(f"stride {stride} must divide K={k}")
        self.k, self.heads, self.stride = k, heads, stride
        self.U = uniform_param(rng, (drug_dim, k), drug_dim, dtype)
        self.V = uniform_param(rng, (protein_dim, k), protein_dim, dtype)
        for h in range(heads):
            self.register(f"q{h}", uniform_param(rng, (k,), k, dtype))

    def q(self, head):
        if not 0 <= head < self.heads:
            raise ConfigError(f"head index {head} out of range [0, {self.heads})")
        return getattr(self, f"q{head}")

    def project(self, H_d, H_p, mask=None):
        """Activated projections ``relu(H_d U)`` (masked rows zeroed) and ``relu(H_p V)``."""
        A = T.relu(T.matmul(H_d, self.U))
        if mask is not None:
            A = A * np.asarray(mask, dtype=A.dtype)[..., None]
        Bp = T.relu(T.matmul(H_p, self.V))
        return A, Bp

    def attention_map(self, H_d, H_p, head, mask=None):
        A, Bp = self.project(H_d, H_p, mask)
        return self._map(A, Bp, head)

    def _map(self, A, Bp, head):
        return T.matmul(A * self.q(head), T.swapaxes(Bp, -1, -2))

    def pooling(self, H_d, H_p, I, mask=None):
        A, Bp = self.project(H_d, H_p, mask)
        return self._pool(A, Bp, I)

    @staticmethod
    def _pool(A, Bp, I):
        if I.shape[-2:] != (A.shape[-2], Bp.shape[-2]):
            raise DimensionError(f"interaction map shape {I.shape} does not match N={A.shape[-2]}, M={Bp.shape[-2]}")
        # f'_k = sum_ij I_ij A_ik Bp_jk
        return T.sum_(A * T.matmul(I, Bp), axis=-2)

    def __call__(self, H_d, H_p, mask=None, return_maps=False):
        A, Bp = self.project(H_d, H_p, mask)
        f = None
        maps = []
        for h in range(self.heads):
            I = self._map(A, Bp, h)
            pooled = T.sum_pool_1d(self._pool(A, Bp, I), self.stride)
            f = pooled if f is None else f + pooled
            if return_maps:
                maps.append(I.data.copy())
        return (f, maps) if return_maps else f


class OneSideAttention(Module):
    """Neural attention of one side's pooled vector over the other side's rows (tanh weights)."""

    def __init__(self, key_dim, query_dim, rng, dtype):
        super().__init__()
        self.key_proj = Linear(key_dim, key_dim, rng, dtype=dtype)
        self.query_proj = Linear(query_dim, key_dim, rng, dtype=dtype)

    def __call__(self, keys, query_vec, mask):
        k = T.relu(self.key_proj(keys))  # B, R, D
        q = T.relu(self.query_proj(query_vec))  # B, D
        w = T.tanh(T.matmul(k, q.reshape(*q.shape, 1)))  # B, R, 1
        m = np.asarray(mask, dtype=k.dtype)[..., None]
        return T.sum_(w * k * m, axis=-2) * (1.0 / m.sum(axis=-2))


def _masked_mean(x, mask):
    m = np.asarray(mask, dtype=x.dtype)[..., None]
    return T.sum_(x * m, axis=-2) * (1.0 / m.sum(axis=-2))


class Decoder(Module):
    def __init__(self, in_dim, hidden, rng, dtype, zero_init_output=True):
        super().__init__()
        self.hidden = Linear(in_dim, hidden, rng, dtype=dtype)
        self.out = Linear(hidden, 1, rng, dtype=dtype, zero_init=zero_init_output)

    def __call__(self, f):
        return self.out(T.relu(self.hidden(f))).reshape(f.shape[:-1])


class Discriminator(Module):
    def __init__(self, in_dim, hidden, rng, dtype):
        super().__init__()
        self.in_dim = in_dim
        self.fc1 = Linear(in_dim, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, hidden, rng, dtype=dtype)
        self.fc3 = Linear(hidden, 1, rng, dtype=dtype)

    def __call__(self, h):
        if h.shape[-1] != self.in_dim:
            raise DimensionError(f"discriminator expects width {self.in_dim}, got {h.shape[-1]}")
        x = T.relu(self.fc1(h))
        x = T.relu(self.fc2(x))
        return self.fc3(x).reshape(h.shape[:-1])


@dataclass
class ForwardOutput:
    logits: Tensor
    p: Tensor
    f: Tensor
    maps: list | None = None

    @property
    def g(self):
        return class_distribution(self.p)


class DrugBAN(Module):
    def __init__(self, cfg: TrainConfig, rng=None, dtype=np.float32, head_mode=None, adaptation=None):
        super().__init__()
        self.cfg = cfg
        self.head_mode = head_mode or cfg.head_mode
        self.adaptation = adaptation or cfg.adaptation
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"unknown head mode {self.head_mode!r}")
        if self.adaptation not in ("none", "cdan", "dann"):
            raise ConfigError(f"unknown adaptation {self.adaptation!r}")
        rng = substream(cfg.seed, "init") if rng is None else rng
        self.dtype = dtype
        self.drug_encoder = GCNEncoder(74, cfg.drug_embedding, cfg.gcn_hidden, rng, dtype)
        self.protein_encoder = CNNEncoder(cfg.protein_embedding, cfg.num_filters, cfg.kernel_sizes, rng, dtype)
        D_d, D_p = self.drug_encoder.out_dim, self.protein_encoder.out_dim
        if self.head_mode == "full":
            self.ban = BilinearAttention(D_d, D_p, cfg.ban_dim, cfg.heads, cfg.pool_stride, rng, dtype)
            self.joint_dim = cfg.ban_dim // cfg.pool_stride
        else:
            if self.head_mode == "one_side_drug":
                self.attention = OneSideAttention(D_d, D_p, rng, dtype)
            elif self.head_mode == "one_side_protein":
                self.attention = OneSideAttention(D_p, D_d, rng, dtype)
            self.joint_dim = D_d + D_p
        self.decoder = Decoder(self.joint_dim, cfg.decoder_hidden, rng, dtype, cfg.zero_init_output)
        if self.adaptation != "none":
            width = 2 * self.joint_dim if self.adaptation == "cdan" else self.joint_dim
            self.discriminator = Discriminator(width, cfg.disc_hidden, rng, dtype)

    # -- pieces ------------------------------------------------------------
    def feature_parameters(self):
        return [p for n, p in self.named_parameters() if not n.startswith("discriminator.")]

    def encode_drug(self, feats, adj):
        return self.drug_encoder(T.as_tensor(np.asarray(feats, dtype=self.dtype)), T.as_tensor(np.asarray(adj, dtype=self.dtype)))

    def encode_protein(self, tokens):
        return self.protein_encoder(np.asarray(tokens))

    def joint(self, H_d, H_p, mask, return_maps=False):
        if self.head_mode == "full":
            return self.ban(H_d, H_p, mask, return_maps=return_maps)
        p_mask = np.ones(H_p.shape[:-1])
        if self.head_mode == "linear_concat":
            v_d = T.masked_max(H_d, np.asarray(mask)[..., None] > 0, axis=-2)
            v_p = T.masked_max(H_p, p_mask[..., None] > 0, axis=-2)
        elif self.head_mode == "one_side_drug":
            v_d = self.attention(H_d, _masked_mean(H_p, p_mask), mask)
            v_p = _masked_mean(H_p, p_mask)
        else:
            v_d = _masked_mean(H_d, mask)
            v_p = self.attention(H_p, v_d, p_mask)
        f = T.concat([v_d, v_p], axis=-1)
        return (f, None) if return_maps else f

    def decode(self, f):
        return self.decoder(f)

    def forward(self, batch, return_maps=False) -> ForwardOutput:
        H_d = self.encode_drug(batch.node_feats, batch.adj)
        H_p = self.encode_protein(batch.tokens)
        if return_maps:
            f, maps = self.joint(H_d, H_p, batch.atom_mask, return_maps=True)
        else:
            f, maps = self.joint(H_d, H_p, batch.atom_mask), None
        z = self.decode(f)
        return ForwardOutput(logits=z, p=T.sigmoid(z), f=f, maps=maps)

    __call__ = forward

    def conditioning(self, out: ForwardOutput) -> Tensor:
        """Discriminator input: ``f (x) g`` flattened for CDAN, ``f`` for DANN."""
        if self.adaptation == "cdan":
            return cdan_condition(out.f, out.g)
        return out.f


def class_distribution(p: Tensor) -> Tensor:
    """``g = [1 - p, p]`` along a new last axis."""
    col = p.reshape(*p.shape, 1)
    return T.concat([1.0 - col, col], axis=-1)


def predict(model: DrugBAN, f: Tensor):
    """Decoder on a joint representation: returns ``(p, g)``."""
    z = model.decode(f)
    if not np.isfinite(z.data).all():
        raise NumericError("non-finite decoder logit")
    p = T.sigmoid(z)
    return p, class_distribution(p)


def cdan_condition(f: Tensor, g: Tensor) -> Tensor:
    return T.outer_flatten(f, g)


def _check_labels(labels):
    y = np.asarray(labels, dtype=np.float64)
    if y.size and not np.isin(y, (0.0, 1.0)).all():
        raise DataError("labels must be 0 or 1")
    return y


def bce(p: Tensor, labels, reduction="sum") -> Tensor:
    """Binary cross-entropy on probabilities clamped to ``[1e-7, 1 - 1e-7]``."""
    y = _check_labels(labels).astype(p.dtype)
    if p.data.size == 0:
        return Tensor(np.zeros((), dtype=p.dtype))
    pc = T.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    ll = y * T.log(pc) + (1.0 - y) * T.log(1.0 - pc)
    total = -T.sum_(ll)
    if reduction == "mean":
        return total * (1.0 / p.data.size)
    return total


def l2_penalty(params) -> Tensor:
    total = None
    for p in params:
        term = T.sum_(p * p)
        total = term if total is None else total + term
    return total * 0.5


def loss(p: Tensor, labels, lam: float, params, reduction="sum") -> Tensor:
    """Cross-entropy plus ``(lam / 2) * ||theta||^2`` over every weight matrix and bias."""
    data_term = bce(p, labels, reduction=reduction)
    if lam == 0:
        return data_term
    return data_term + l2_penalty(params) * lam


def adversarial_losses(model: DrugBAN, source_batch, target_batch, omega: float, reduction="mean"):
    """Source classification loss and the domain adversarial loss.

    ``L_adv = E_t log(1 - D(h_t)) + E_s log D(h_s)``, where ``D`` is the
    probability of "source". The discriminator maximises ``L_adv``; a
    gradient-reversal layer between ``h`` and ``D`` makes the feature extractor
    and decoder receive ``-omega`` times the discriminator's gradient, so the
    single objective ``L_s - L_adv`` realises the minimax game in one backward
    pass.

    Returns ``(L_s, L_adv, objective, aux)``.
    """
    if model.adaptation == "none":
        raise ConfigError("model has no discriminator")
    if len(source_batch) == 0 or len(target_batch) == 0:
        raise ConfigError("both source and target batches must be non-empty")
    out_s = model(source_batch)
    out_t = model(target_batch)
    L_s = bce(out_s.p, source_batch.labels, reduction=reduction)
    z_s = model.discriminator(T.gradient_reversal(model.conditioning(out_s), omega))
    z_t = model.discriminator(T.gradient_reversal(model.conditioning(out_t), omega))
    # log D = log_sigmoid(z) and log(1 - D) = log_sigmoid(-z); computed from the
    # logit so a saturated discriminator still receives gradient
    L_adv = T.mean(T.log_sigmoid(z_s)) + T.mean(T.log_sigmoid(-z_t))
    objective = L_s - L_adv
    disc_acc = float(np.concatenate([z_s.data >= 0, z_t.data < 0]).mean())
    return L_s, L_adv, objective, {"disc_acc": disc_acc, "out_source": out_s, "out_target": out_t}
