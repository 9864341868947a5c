"""Amino-acid tokenization and composition (PSC) descriptors."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DimensionError, NumericError, TokenizationError

STANDARD = "ACDEFGHIKLMNPQRSTVWY"
ALPHABET = STANDARD + "BZX"
VOCAB_SIZE = len(ALPHABET)  # 23
PAD_INDEX = VOCAB_SIZE
MAX_LENGTH = 1200

_INDEX = {aa: i for i, aa in enumerate(ALPHABET)}
_AMBIGUOUS = {"B": "N", "Z": "Q", "X": "A"}
_DIPEPTIDES = ["".join(p) for p in product(STANDARD, repeat=2)]
PSC_LENGTH = len(STANDARD) + len(_DIPEPTIDES)  # 420


@dataclass(frozen=True)
class ProteinTokenSeq:
    indices: np.ndarray
    true_length: int

    def __len__(self):
        return len(self.indices)


def _check_sequence(seq):
    if not seq:
        raise TokenizationError("empty protein sequence", 0)
    for pos, ch in enumerate(seq):
        if ch not in _INDEX:
            raise TokenizationError(f"unknown residue {ch!r} at position {pos}", pos)


def tokenize(seq: str, max_length: int = MAX_LENGTH) -> ProteinTokenSeq:
    """Map residues to indices; truncate to ``max_length`` and pad the rest with ``PAD_INDEX``."""
    seq = seq.strip().upper()
    _check_sequence(seq)
    seq = seq[:max_length]
    idx = np.full(max_length, PAD_INDEX, dtype=np.int64)
    idx[: len(seq)] = [_INDEX[c] for c in seq]
    return ProteinTokenSeq(indices=idx, true_length=len(seq))


def detokenize(tokens: ProteinTokenSeq) -> str:
    return "".join(ALPHABET[i] for i in tokens.indices[: tokens.true_length])


def psc(seq: str) -> np.ndarray:
    """Amino-acid composition (20) followed by dipeptide composition (400)."""
    seq = seq.strip().upper()
    _check_sequence(seq)
    seq = "".join(_AMBIGUOUS.get(c, c) for c in seq)
    idx = np.array([STANDARD.index(c) for c in seq])
    aac = np.bincount(idx, minlength=20).astype(np.float64) / len(idx)
    dpc = np.zeros(400)
    if len(idx) >= 2:
        dpc = np.bincount(idx[:-1] * 20 + idx[1:], minlength=400).astype(np.float64)
        dpc /= len(idx) - 1
    return np.concatenate([aac, dpc])


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"vector lengths differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise NumericError("cosine distance of a zero vector")
    return float(1.0 - a @ b / (na * nb))


def cosine_distance_matrix(vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    if (norms == 0).any():
        raise NumericError("cosine distance of a zero vector")
    u = x / norms[:, None]
    d = 1.0 - u @ u.T
    np.fill_diagonal(d, 0.0)
    return np.clip(d, 0.0, 2.0)
