"""
Synthetic interaction datasets with known labelling rules.

``separable_pairs`` labels a pair by XOR of two motifs: a nitrogen atom in
the drug and the residue trigram ``WKW`` in the protein. The label can only
be read from the joint representation, so a model that fits it is using both
encoders and the interaction head.

``two_domain_pairs`` draws a source and a target domain from the same rule
while the target uses a permuted set of feature channels: its atoms and
residues come from a disjoint vocabulary mapped one-to-one onto the source
vocabulary.
"""

from __future__ import annotations

import csv

from .data import DATASET_COLUMNS, InteractionPair, assign_ids
from .rng import substream

MOTIF = "WKW"
BACKGROUND = "ACDEFGHILMNPQRSTVY"  # excludes W and K so the motif never appears by chance


def random_chain(rng, n_heavy, hetero="O", with_n=False, ring=False):
    """Acyclic (optionally one ring) SMILES built from C plus one hetero atom type."""
    atoms = ["C"] * n_heavy
    for i in rng.choice(n_heavy, size=max(1, n_heavy // 4), replace=False):
        atoms[i] = hetero
    if with_n:
        atoms[int(rng.integers(n_heavy))] = "N"
    out = []
    for i, a in enumerate(atoms):
        out.append(a)
        if i and i < n_heavy - 2 and a == "C" and rng.random() < 0.3:
            out.append("(C)")
    s = "".join(out)
    if ring and n_heavy >= 5:
        s = "C1CCCC1" + s
    return s


def random_protein(rng, length, motif=False, alphabet=BACKGROUND):
    seq = "".join(rng.choice(list(alphabet), size=length))
    if motif:
        at = int(rng.integers(0, length - len(MOTIF)))
        seq = seq[:at] + MOTIF + seq[at + len(MOTIF):]
    return seq


def separable_pairs(n=32, seed=0, protein_length=40):
    """``n`` pairs, balanced over the four (nitrogen, motif) cells; label = XOR."""
    rng = substream(seed, "synthetic/separable")
    pairs = []
    for k in range(n):
        has_n, has_motif = bool(k % 2), bool((k // 2) % 2)
        smiles = random_chain(rng, int(rng.integers(5, 11)), with_n=has_n)
        seq = random_protein(rng, protein_length, motif=has_motif)
        pairs.append(InteractionPair(smiles, seq, int(has_n != has_motif)))
    return assign_ids(pairs)


# Target vocabulary: atoms with the same valence as their source counterpart,
# residues under a fixed permutation disjoint from the source background.
ATOM_SWAP = {"N": "P", "O": "S"}
SOURCE_RESIDUES = "ACDEFGHIL"
TARGET_RESIDUES = "MNPQRSTVY"


def two_domain_pairs(n_source=500, n_target=500, seed=0, protein_length=40, rule="or"):
    """Source and target pairs sharing one labelling rule under permuted channels.

    Source drugs use C/N/O and source proteins use residues ``ACDEFGHIL``;
    target drugs use C/P/S and target proteins ``MNPQRSTVY``. The motif is
    ``WKW`` in both domains. The drug motif is the trivalent hetero atom
    (N in source, P in target); ``rule`` combines it with the protein motif
    by ``"or"`` or ``"xor"``. Valence, degree and hydrogen-count channels are
    shared across domains, atom-type and residue identities are not.
    """
    combine = {"or": lambda a, b: a or b, "xor": lambda a, b: a != b}[rule]
    rng = substream(seed, "synthetic/two-domain")

    def draw(n, domain):
        hetero_n = "N" if domain == "source" else ATOM_SWAP["N"]
        hetero_o = "O" if domain == "source" else ATOM_SWAP["O"]
        alphabet = SOURCE_RESIDUES if domain == "source" else TARGET_RESIDUES
        out = []
        for k in range(n):
            has_n, has_motif = bool(k % 2), bool((k // 2) % 2)
            smiles = random_chain(rng, int(rng.integers(5, 11)), hetero=hetero_o)
            if has_n:
                smiles = smiles.replace(hetero_o, hetero_n, 1) if hetero_o in smiles else smiles + hetero_n
            seq = random_protein(rng, protein_length, motif=has_motif, alphabet=alphabet)
            out.append(InteractionPair(smiles, seq, int(combine(has_n, has_motif)), domain=domain))
        return out

    source, target = draw(n_source, "source"), draw(n_target, "target")
    assign_ids(source + target)
    return source, target


def write_dataset_csv(path, pairs, with_labels=True):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for p in pairs:
            w.writerow([p.smiles, p.sequence, "" if (p.label is None or not with_labels) else p.label])
    return path


def label_rule(smiles, sequence, hetero="N"):
    return int((hetero in smiles) != (MOTIF in sequence))


def shuffled(pairs, seed, name="synthetic/shuffle"):
    order = substream(seed, name).permutation(len(pairs))
    return [pairs[i] for i in order]

