"""
In-domain and cross-domain split protocols.

* ``random_split``: 7:1:2 shuffle split.
* ``cold_pair_split``: hold out 5% / 10% of pairs, then drop every training
  pair that shares a drug or protein with the held-out pairs.
* ``clustering_pair_split``: single-linkage clustering of drugs (Jaccard on
  circular fingerprints) and proteins (cosine on composition vectors), a
  random 60% of clusters per side becomes the source domain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import substream

MANIFEST_COLUMNS = ["pair_id", "drug_id", "protein_id", "label", "role", "domain", "seed", "gamma", "frac",
                    "smiles", "sequence"]


def _round(x):
    return int(np.floor(x + 0.5))


def random_split(pairs, ratios=(0.7, 0.1, 0.2), seed=0):
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise DataError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(pairs)
    if n < 3:
        raise DataError(f"need at least 3 pairs to split, got {n}")
    order = substream(seed, "split").permutation(n)
    n_val = _round(ratios[1] * n)
    n_test = _round(ratios[2] * n)
    n_train = n - n_val - n_test
    train = [pairs[i] for i in order[:n_train]]
    val = [pairs[i] for i in order[n_train:n_train + n_val]]
    test = [pairs[i] for i in order[n_train + n_val:]]
    return train, val, test


def cold_pair_split(pairs, val=0.05, test=0.10, seed=0):
    n = len(pairs)
    order = substream(seed, "split").permutation(n)
    n_val, n_test = _round(val * n), _round(test * n)
    val_set = [pairs[i] for i in order[:n_val]]
    test_set = [pairs[i] for i in order[n_val:n_val + n_test]]
    held = val_set + test_set
    drugs = {p.drug_id for p in held}
    prots = {p.protein_id for p in held}
    train = [pairs[i] for i in order[n_val + n_test:]
             if pairs[i].drug_id not in drugs and pairs[i].protein_id not in prots]
    if not train:
        raise DataError("cold-pair split left the training set empty; use a smaller holdout")
    return train, val_set, test_set


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


@dataclass
class ClusterAssignment:
    labels: np.ndarray  # cluster id per entity, numbered by first member
    gamma: float
    linkage: str = "single"

    @property
    def n_clusters(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def members(self):
        out = [[] for _ in range(self.n_clusters)]
        for i, c in enumerate(self.labels):
            out[c].append(i)
        return out


def pairwise_matrix(entities, distance):
    n = len(entities)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = distance(entities[i], entities[j])
    return d


def single_linkage(entities, distance=None, gamma=0.5) -> ClusterAssignment:
    """Agglomerate the closest pair of clusters while their single-link distance is <= ``gamma``.

    Merging edges in ascending distance order (Kruskal) performs exactly the
    single-linkage agglomeration sequence; it stops once the next closest
    inter-cluster distance exceeds ``gamma``. With ``distance=None``,
    ``entities`` is a precomputed symmetric ``n x n`` distance matrix.
    """
    d = np.asarray(entities if distance is None else pairwise_matrix(entities, distance), dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n):
        raise DataError(f"distance matrix must be square, got {d.shape}")
    uf = _UnionFind(n)
    iu, ju = np.triu_indices(n, k=1)
    close = d[iu, ju] <= gamma
    iu, ju, dist = iu[close], ju[close], d[iu, ju][close]
    for k in np.argsort(dist, kind="mergesort"):
        uf.union(int(iu[k]), int(ju[k]))
    roots = [uf.find(i) for i in range(n)]
    relabel = {}
    labels = np.array([relabel.setdefault(r, len(relabel)) for r in roots], dtype=np.int64)
    return ClusterAssignment(labels=labels, gamma=gamma)


@dataclass
class ClusterSplit:
    source: list
    target_train: list
    target_test: list
    n_drug_clusters: int
    n_protein_clusters: int
    n_discarded: int


def clustering_pair_split(pairs, drug_cluster, protein_cluster, frac=0.6, seed=0, test_frac=0.2) -> ClusterSplit:
    """Source/target split from per-entity cluster ids.

    ``drug_cluster`` / ``protein_cluster`` map ``drug_id`` / ``protein_id`` to a
    cluster id. Pairs mixing a selected and a non-selected entity are dropped.
    """
    if not 0 < frac <= 1:
        raise DataError(f"frac must lie in (0, 1], got {frac}")
    rng = substream(seed, "split")
    d_ids = sorted(set(drug_cluster.values()))
    p_ids = sorted(set(protein_cluster.values()))
    d_sel = set(rng.permutation(d_ids)[:_round(frac * len(d_ids))].tolist())
    p_sel = set(rng.permutation(p_ids)[:_round(frac * len(p_ids))].tolist())
    source, target, discarded = [], [], 0
    for p in pairs:
        ds = drug_cluster[p.drug_id] in d_sel
        ps = protein_cluster[p.protein_id] in p_sel
        if ds and ps:
            source.append(p)
        elif not ds and not ps:
            target.append(p)
        else:
            discarded += 1
    counts = f"{len(d_ids)} drug clusters ({len(d_sel)} selected), {len(p_ids)} protein clusters ({len(p_sel)} selected)"
    if not source:
        raise DataError(f"source domain is empty: {counts}")
    if not target:
        raise DataError(f"target domain is empty: {counts}")
    order = rng.permutation(len(target))
    n_test = _round(test_frac * len(target))
    test = [target[i] for i in order[:n_test]]
    train = [target[i] for i in order[n_test:]]
    return ClusterSplit(source=source, target_train=train, target_test=test,
                        n_drug_clusters=len(d_ids), n_protein_clusters=len(p_ids), n_discarded=discarded)


def cluster_split_dataset(pairs, gamma=0.5, frac=0.6, seed=0, n_bits=2048) -> ClusterSplit:
    """Fingerprint, cluster and split a dataset end to end."""
    from .chem import ecfp4, jaccard_distance_matrix, parse_smiles
    from .protein import cosine_distance_matrix, psc

    smiles = sorted({p.smiles for p in pairs})
    seqs = sorted({p.sequence for p in pairs})
    fps = [ecfp4(parse_smiles(s), n_bits) for s in smiles]
    d_lab = single_linkage(jaccard_distance_matrix(fps), gamma=gamma).labels
    p_lab = single_linkage(cosine_distance_matrix([psc(s) for s in seqs]), gamma=gamma).labels
    d_map = dict(zip(smiles, d_lab.tolist()))
    p_map = dict(zip(seqs, p_lab.tolist()))
    drug_cluster = {p.drug_id: d_map[p.smiles] for p in pairs}
    protein_cluster = {p.protein_id: p_map[p.sequence] for p in pairs}
    return clustering_pair_split(pairs, drug_cluster, protein_cluster, frac=frac, seed=seed)


def write_manifest(path, rows, seed, gamma="", frac=""):
    """``rows`` is an iterable of ``(pair, role, domain, label_override)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for pair, role, domain, label in rows:
            w.writerow([pair.pair_id, pair.drug_id, pair.protein_id, "" if label is None else label, role, domain,
                        seed, gamma, frac, pair.smiles, pair.sequence])


def read_manifest(path):
    """Returns a list of ``(pair, role)``; pair.domain is filled from the manifest."""
    from .data import InteractionPair, parse_label

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != MANIFEST_COLUMNS:
            raise DataError(f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}")
        out = []
        for k, row in enumerate(reader, start=2):
            role = row["role"]
            if role not in ("train", "val", "test"):
                raise DataError(f"{path}: row {k} has unknown role {role!r}")
            domain = row["domain"]
            if domain not in ("source", "target", "none"):
                raise DataError(f"{path}: row {k} has unknown domain {domain!r}")
            pair = InteractionPair(smiles=row["smiles"], sequence=row["sequence"], label=parse_label(row["label"], k),
                                   domain=domain, drug_id=row["drug_id"], protein_id=row["protein_id"],
                                   pair_id=row["pair_id"])
            out.append((pair, role))
    if not out:
        raise DataError(f"{path}: manifest has no rows")
    return out
