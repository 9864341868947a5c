import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drugban.data import InteractionPair, assign_ids
from drugban.errors import DataError
from drugban.split import (
    cluster_split_dataset, clustering_pair_split, cold_pair_split, random_split, read_manifest, single_linkage,
    write_manifest,
)
from drugban.synthetic import two_domain_pairs

import oracles


def grid_pairs(n_drugs, n_prots, rng=None, keep=1.0):
    pairs = []
    for d, p in itertools.product(range(n_drugs), range(n_prots)):
        if rng is None or rng.random() < keep:
            pairs.append(InteractionPair("C" * (d + 1), "M" + "A" * (p + 1), (d + p) % 2))
    return assign_ids(pairs)


def ids(pairs):
    return sorted(p.pair_id for p in pairs)


def random_metric(rng, n):
    # distances of random points on a line: a genuine metric with spread-out values
    x = rng.random(n) * 4
    return np.abs(x[:, None] - x[None, :])


# -- random split -----------------------------------------------------------------
def test_random_split_ten_pairs():
    pairs = grid_pairs(5, 2)
    tr, va, te = random_split(pairs, seed=0)
    assert (len(tr), len(va), len(te)) == (7, 1, 2)
    assert sorted(ids(tr) + ids(va) + ids(te)) == ids(pairs)
    again = random_split(pairs, seed=0)
    assert [ids(s) for s in again] == [ids(tr), ids(va), ids(te)]


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 300), st.integers(0, 10_000))
def test_random_split_sizes_within_one(n, seed):
    pairs = assign_ids([InteractionPair(f"C{'C' * (k % 7)}", f"M{k}", 0) for k in range(n)])
    parts = random_split(pairs, seed=seed)
    for part, frac in zip(parts, (0.7, 0.1, 0.2)):
        assert abs(len(part) - frac * n) <= 1
    assert len(set().union(*(ids(p) for p in parts))) == n


def test_random_split_errors():
    with pytest.raises(DataError):
        random_split(grid_pairs(1, 2))
    with pytest.raises(DataError):
        random_split(grid_pairs(3, 3), ratios=(0.5, 0.5, 0.5))


# -- cold pair -------------------------------------------------------------------------
def test_cold_pair_sizes_before_filtering():
    pairs = grid_pairs(10, 10)
    tr, va, te = cold_pair_split(pairs, seed=3)
    assert (len(va), len(te)) == (5, 10)
    held = va + te
    assert not {p.drug_id for p in tr} & {p.drug_id for p in held}
    assert not {p.protein_id for p in tr} & {p.protein_id for p in held}


@pytest.mark.parametrize("seed", range(20))
def test_cold_pair_disjoint(seed):
    rng = np.random.default_rng(seed)
    pairs = grid_pairs(40, 40, rng, keep=0.2)
    tr, va, te = cold_pair_split(pairs, seed=seed)
    held = va + te
    assert not {p.drug_id for p in tr} & {p.drug_id for p in held}
    assert not {p.protein_id for p in tr} & {p.protein_id for p in held}
    assert tr


def test_cold_pair_single_drug_empties_train():
    pairs = assign_ids([InteractionPair("CCO", f"M{'A' * k}", k % 2) for k in range(1, 41)])
    with pytest.raises(DataError, match="smaller holdout"):
        cold_pair_split(pairs)


# -- single linkage -----------------------------------------------------------------------
def test_single_linkage_two_points():
    assert single_linkage(np.array([[0, 0.6], [0.6, 0]])).n_clusters == 2
    assert single_linkage(np.array([[0, 0.4], [0.4, 0]])).n_clusters == 1


def test_single_linkage_chain():
    D = np.array([[0, 0.4, 0.9], [0.4, 0, 0.4], [0.9, 0.4, 0]])
    assert single_linkage(D).n_clusters == 1
    assert oracles.naive_single_linkage(D, 0.5) == [[0, 1, 2]]


def test_single_linkage_with_distance_function():
    pts = [0.0, 0.3, 2.0, 2.2, 5.0]
    a = single_linkage(pts, lambda u, v: abs(u - v), gamma=0.5)
    assert oracles.partition_of(a.labels) == [[0, 1], [2, 3], [4]]
    assert [m for m in a.members()] == [[0, 1], [2, 3], [4]]


@pytest.mark.parametrize("seed", range(20))
def test_single_linkage_matches_naive_agglomeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 11))
    D = random_metric(rng, n)
    gamma = float(rng.choice([0.05, 0.2, 0.5]))
    got = single_linkage(D, gamma=gamma)
    assert oracles.partition_of(got.labels) == oracles.naive_single_linkage(D, gamma)


@pytest.mark.parametrize("seed", range(5))
def test_single_linkage_gap_exceeds_gamma(seed):
    rng = np.random.default_rng(seed)
    D = random_metric(rng, 200)
    a = single_linkage(D, gamma=0.02)
    if a.n_clusters > 1:
        assert oracles.min_intercluster_distance(D, a.labels) > 0.02


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_single_linkage_independent_of_input_order(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    D = random_metric(rng, n)
    perm = rng.permutation(n)
    a = single_linkage(D, gamma=0.1).labels
    b = single_linkage(D[np.ix_(perm, perm)], gamma=0.1).labels
    back = np.empty(n, dtype=int)
    back[perm] = b  # label of original entity perm[k] is b[k]
    assert oracles.partition_of(a) == oracles.partition_of(back)


# -- clustering pair split ------------------------------------------------------------------
def toy_clusters():
    pairs = grid_pairs(4, 4)
    drug_cluster = {p.drug_id: int(p.drug_id[-1]) // 2 for p in pairs}
    protein_cluster = {p.protein_id: int(p.protein_id[-1]) // 2 for p in pairs}
    return pairs, drug_cluster, protein_cluster


@pytest.mark.parametrize("seed", range(4))
def test_toy_cluster_split_matches_enumeration(seed):
    pairs, dc, pc = toy_clusters()
    out = clustering_pair_split(pairs, dc, pc, frac=0.5, seed=seed)
    sel_d = {dc[p.drug_id] for p in out.source}
    sel_p = {pc[p.protein_id] for p in out.source}
    assert len(sel_d) == len(sel_p) == 1
    expect_src = [p for p in pairs if dc[p.drug_id] in sel_d and pc[p.protein_id] in sel_p]
    expect_tgt = [p for p in pairs if dc[p.drug_id] not in sel_d and pc[p.protein_id] not in sel_p]
    assert ids(out.source) == ids(expect_src) and len(expect_src) == 4
    assert ids(out.target_train + out.target_test) == ids(expect_tgt) and len(expect_tgt) == 4
    assert out.n_discarded == 8
    assert (len(out.target_train), len(out.target_test)) == (3, 1)


def test_cluster_split_frac_one_is_an_error():
    pairs, dc, pc = toy_clusters()
    with pytest.raises(DataError, match="target domain is empty.*2 drug clusters"):
        clustering_pair_split(pairs, dc, pc, frac=1.0)


@pytest.mark.parametrize("seed", range(20))
def test_cluster_split_domains_disjoint(seed):
    rng = np.random.default_rng(seed)
    pairs = grid_pairs(12, 12, rng, keep=0.5)
    dc = {p.drug_id: int(rng.integers(0, 5)) for p in pairs}
    dc = {d: dc[d] for d in sorted(dc)}
    pc = {p.protein_id: int(rng.integers(0, 5)) for p in pairs}
    out = clustering_pair_split(pairs, dc, pc, frac=0.6, seed=seed)
    tgt = out.target_train + out.target_test
    assert not {p.drug_id for p in out.source} & {p.drug_id for p in tgt}
    assert not {p.protein_id for p in out.source} & {p.protein_id for p in tgt}
    assert len(out.source) + len(tgt) + out.n_discarded == len(pairs)


def test_end_to_end_cluster_split_is_deterministic():
    src, tgt = two_domain_pairs(40, 40, seed=0)
    pairs = src + tgt
    a = cluster_split_dataset(pairs, gamma=0.5, seed=1)
    b = cluster_split_dataset(pairs, gamma=0.5, seed=1)
    assert ids(a.source) == ids(b.source) and ids(a.target_test) == ids(b.target_test)
    tgt_all = a.target_train + a.target_test
    assert not {p.drug_id for p in a.source} & {p.drug_id for p in tgt_all}


# -- manifest ------------------------------------------------------------------------------
def test_manifest_round_trip(tmp_path):
    pairs = grid_pairs(3, 2)
    rows = [(p, "train", "source", p.label) for p in pairs[:4]] + [(p, "test", "target", None) for p in pairs[4:]]
    path = tmp_path / "m.csv"
    write_manifest(path, rows, seed=5, gamma=0.5, frac=0.6)
    back = read_manifest(path)
    assert [(p.pair_id, p.drug_id, p.protein_id, p.smiles, p.sequence, p.domain, role) for p, role in back] == \
        [(p.pair_id, p.drug_id, p.protein_id, p.smiles, p.sequence, dom, role) for p, role, dom, _ in rows]
    assert [p.label for p, _ in back] == [p.label for p in pairs[:4]] + [None, None]
    header = path.read_text().splitlines()[0].split(",")
    assert header[:9] == ["pair_id", "drug_id", "protein_id", "label", "role", "domain", "seed", "gamma", "frac"]


def test_manifest_rejects_bad_role(tmp_path):
    pairs = grid_pairs(1, 1)
    path = tmp_path / "m.csv"
    write_manifest(path, [(pairs[0], "holdout", "none", 1)], seed=0)
    with pytest.raises(DataError, match="role"):
        read_manifest(path)
