"""Dataset records, CSV ingestion and fixed-shape mini-batch collation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .chem import N_ATOM_FEATURES, featurize_atoms, parse_smiles
from .errors import CapacityError, DataError, ParseError, TokenizationError
from .protein import tokenize

log = logging.getLogger(__name__)

DATASET_COLUMNS = ["smiles", "sequence", "label"]


@dataclass
class InteractionPair:
    smiles: str
    sequence: str
    label: int | None = None
    domain: str = "none"
    drug_id: str = ""
    protein_id: str = ""
    pair_id: str = ""


@dataclass
class Batch:
    node_feats: np.ndarray  # B, Θ_d, 74
    adj: np.ndarray  # B, Θ_d, Θ_d
    atom_mask: np.ndarray  # B, Θ_d
    tokens: np.ndarray  # B, Θ_p
    labels: np.ndarray | None = None
    pairs: list = field(default_factory=list, repr=False)

    def __len__(self):
        return self.tokens.shape[0]


def parse_label(text, row=None):
    text = (text or "").strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}: label {text!r} is not 0/1") from None
    if value not in (0.0, 1.0):
        raise DataError(f"row {row}: label {text!r} is not 0/1")
    return int(value)


def assign_ids(pairs):
    """Give every distinct SMILES / sequence a stable id in order of first appearance."""
    drugs, prots = {}, {}
    for k, p in enumerate(pairs):
        p.drug_id = p.drug_id or drugs.setdefault(p.smiles, f"D{len(drugs):05d}")
        p.protein_id = p.protein_id or prots.setdefault(p.sequence, f"P{len(prots):05d}")
        p.pair_id = p.pair_id or f"{k:06d}"
    return pairs


def read_dataset_csv(path) -> list:
    """Read ``smiles,sequence,label`` rows. Empty labels become ``None``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header != DATASET_COLUMNS:
            raise DataError(f"{path}: header must be exactly {','.join(DATASET_COLUMNS)}, got {','.join(header)}")
        pairs = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}: row {row_no} has {len(row)} fields")
            pairs.append(InteractionPair(smiles=row[0].strip(), sequence=row[1].strip(),
                                         label=parse_label(row[2], row_no)))
    if not pairs:
        raise DataError(f"{path}: no data rows")
    seen = set()
    for p in pairs:
        key = (p.smiles, p.sequence)
        if key in seen:
            raise DataError(f"{path}: duplicate drug/protein pair {p.smiles} / {p.sequence[:20]}...")
        seen.add(key)
    return assign_ids(pairs)


class FeatureCache:
    """Featurizes each distinct molecule and protein once."""

    def __init__(self, max_drug_atoms, max_protein_len):
        self.max_drug_atoms = max_drug_atoms
        self.max_protein_len = max_protein_len
        self._drugs = {}
        self._prots = {}

    def drug(self, smiles):
        if smiles not in self._drugs:
            g = parse_smiles(smiles)
            feats = featurize_atoms(g, self.max_drug_atoms).astype(np.float32)
            adj = g.adjacency_with_self_loops(self.max_drug_atoms)
            self._drugs[smiles] = (feats, adj, g.num_atoms)
        return self._drugs[smiles]

    def protein(self, seq):
        if seq not in self._prots:
            self._prots[seq] = tokenize(seq, self.max_protein_len).indices
        return self._prots[seq]

    def check(self, pairs, budget=0.01):
        """Drop unparseable pairs, logging each; fail if more than ``budget`` of them are bad."""
        good, bad = [], 0
        for p in pairs:
            try:
                self.drug(p.smiles)
                self.protein(p.sequence)
            except (ParseError, TokenizationError, CapacityError) as exc:
                bad += 1
                log.warning("skipping pair %s: %s", p.pair_id or p.smiles, exc)
                continue
            good.append(p)
        if pairs and bad > math.floor(budget * len(pairs)):
            raise DataError(f"{bad} of {len(pairs)} pairs failed to parse (budget {budget:.0%})")
        return good


def collate(pairs, cache: FeatureCache, dtype=np.float32) -> Batch:
    n = len(pairs)
    cap, L = cache.max_drug_atoms, cache.max_protein_len
    feats = np.zeros((n, cap, N_ATOM_FEATURES), dtype=dtype)
    adj = np.zeros((n, cap, cap), dtype=dtype)
    mask = np.zeros((n, cap), dtype=dtype)
    tokens = np.zeros((n, L), dtype=np.int64)
    labels = np.zeros(n, dtype=dtype)
    has_labels = True
    for b, p in enumerate(pairs):
        f, a, n_atoms = cache.drug(p.smiles)
        feats[b] = f
        adj[b] = a
        mask[b, :n_atoms] = 1
        tokens[b] = cache.protein(p.sequence)
        if p.label is None:
            has_labels = False
        else:
            labels[b] = p.label
    return Batch(node_feats=feats, adj=adj, atom_mask=mask, tokens=tokens,
                 labels=labels if has_labels else None, pairs=list(pairs))


def minibatch_collate(pairs, max_drug_atoms, max_protein_len, dtype=np.float32) -> Batch:
    return collate(pairs, FeatureCache(max_drug_atoms, max_protein_len), dtype=dtype)


def iterate_batches(pairs, batch_size, order=None):
    idx = np.arange(len(pairs)) if order is None else order
    for start in range(0, len(idx), batch_size):
        yield [pairs[i] for i in idx[start:start + batch_size]]

