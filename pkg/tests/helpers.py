"""Small shared fixtures: tiny configs, batches and the end-to-end gradient check."""

from __future__ import annotations

import contextlib

import numpy as np

from drugban import tensor as T
from drugban.config import TrainConfig
from drugban.data import FeatureCache, InteractionPair, collate
from drugban.model import DrugBAN, loss
from drugban.synthetic import random_chain, random_protein
from drugban.tensor import gradcheck


def tiny_config(**overrides):
    base = dict(max_protein_len=12, max_drug_atoms=8, drug_embedding=3, gcn_hidden=[3, 3, 3],
                protein_embedding=3, num_filters=[3, 3, 3], kernel_sizes=[2, 2, 2], ban_dim=6,
                pool_stride=3, heads=2, decoder_hidden=4, disc_hidden=4, zero_init_output=False)
    base.update(overrides)
    return TrainConfig(**base)


def random_pairs(rng, n, protein_length=12, max_heavy=6):
    pairs = []
    for k in range(n):
        smiles = random_chain(rng, int(rng.integers(3, max_heavy + 1)), with_n=bool(k % 2))
        pairs.append(InteractionPair(smiles, random_protein(rng, protein_length), k % 2))
    return pairs


def batch_for(cfg, pairs, dtype=np.float32, max_drug_atoms=None):
    cache = FeatureCache(max_drug_atoms or cfg.max_drug_atoms, cfg.max_protein_len)
    return collate(pairs, cache, dtype=dtype)


@contextlib.contextmanager
def relu_margin():
    """Record the smallest |input| seen by any ReLU while the block runs."""
    seen = [np.inf]
    original = T.relu

    def watched(x):
        if x.data.size:
            seen[0] = min(seen[0], float(np.abs(x.data).min()))
        return original(x)

    T.relu = watched
    try:
        yield seen
    finally:
        T.relu = original


def end_to_end_gradcheck(seed, margin=1e-4, **cfg_overrides):
    """Finite-difference check of the summed BCE w.r.t. every parameter of a
    fp64 model on a 2-pair batch. Instances with a ReLU input within ``margin``
    of the kink are redrawn. Returns ``(max_rel_err, n_parameters)``."""
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        cfg = tiny_config(seed=int(rng.integers(1 << 30)), **cfg_overrides)
        model = DrugBAN(cfg, dtype=np.float64)
        batch = batch_for(cfg, random_pairs(rng, 2), dtype=np.float64)
        with relu_margin() as seen:
            model(batch)
        if seen[0] > margin:
            break
    params = model.parameters()

    def objective(*_):
        return loss(model(batch).p, batch.labels, 0.0, params)

    return gradcheck(objective, params), sum(p.size for p in params)


def engineered_model(drug_rows, protein_rows):
    """A bilinear model whose encoders reproduce hand-chosen representations.

    The drug is ``C.O`` (two unbonded atoms, so the adjacency is the identity)
    and the protein is ``MK``. The input projection maps the C and O type
    channels to ``drug_rows``, the residue embedding maps M and K to
    ``protein_rows``, and every encoder layer is an identity with zero bias.
    With ``U = V = identity`` and ``q = 1`` the interaction map is
    ``drug_rows @ protein_rows.T`` (inputs must be non-negative).
    """
    from drugban.chem import featurize_atoms, parse_smiles
    from drugban.protein import ALPHABET

    drug_rows, protein_rows = np.asarray(drug_rows, float), np.asarray(protein_rows, float)
    K = drug_rows.shape[1]
    cfg = TrainConfig(max_protein_len=2, max_drug_atoms=2, drug_embedding=K, gcn_hidden=[K, K, K],
                      protein_embedding=K, num_filters=[K, K, K], kernel_sizes=[1, 1, 1], ban_dim=K,
                      pool_stride=1, heads=1, decoder_hidden=2)
    model = DrugBAN(cfg, dtype=np.float64)
    feats = featurize_atoms(parse_smiles("C.O"))
    c_col, o_col = (int(np.flatnonzero(row[:43])[0]) for row in feats)
    enc = model.drug_encoder
    enc.input_proj.weight.data[...] = 0.0
    enc.input_proj.weight.data[c_col] = drug_rows[0]
    enc.input_proj.weight.data[o_col] = drug_rows[1]
    for i in range(3):
        layer = getattr(enc, f"layer{i}")
        layer.weight.data[...] = np.eye(K)
        layer.bias.data[...] = 0.0
    prot = model.protein_encoder
    prot.embedding.data[...] = 0.0
    prot.embedding.data[ALPHABET.index("M")] = protein_rows[0]
    prot.embedding.data[ALPHABET.index("K")] = protein_rows[1]
    for i in range(3):
        getattr(prot, f"conv{i}_weight").data[...] = np.eye(K)[:, :, None]
        getattr(prot, f"conv{i}_bias").data[...] = 0.0
    model.ban.U.data[...] = np.eye(K)
    model.ban.V.data[...] = np.eye(K)
    model.ban.q0.data[...] = 1.0
    return model, InteractionPair("C.O", "MK", 1, pair_id="engineered")
