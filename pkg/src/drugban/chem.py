"""
SMILES parsing, 74-dim atom featurization and hashed circular fingerprints.

Supported SMILES: organic-subset atoms (B C N O P S F Cl Br I and aromatic
b c n o p s), bracket atoms with H count and charge, bonds ``- = # :``,
ring closures (``1``..``9`` and ``%nn``), branches and ``.`` separated
fragments. Stereo marks and isotopes are rejected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DimensionError, ParseError

ATOM_TYPES = [
    "C", "N", "O", "S", "F", "Si", "P", "Cl", "Br", "Mg", "Na", "Ca", "Fe", "As",
    "Al", "I", "B", "V", "K", "Tl", "Yb", "Sb", "Sn", "Ag", "Pd", "Co", "Se", "Ti",
    "Zn", "H", "Li", "Ge", "Cu", "Au", "Ni", "Cd", "In", "Mn", "Zr", "Cr", "Pt",
    "Hg", "Pb",
]
HYBRIDIZATIONS = ["SP", "SP2", "SP3", "SP3D", "SP3D2"]

# (name, width) in concatenation order
FEATURE_BLOCKS = [
    ("atom_type", 43),
    ("degree", 11),
    ("implicit_h", 7),
    ("formal_charge", 1),
    ("radical_electrons", 1),
    ("hybridization", 5),
    ("total_h", 5),
    ("aromatic", 1),
]
N_ATOM_FEATURES = sum(w for _, w in FEATURE_BLOCKS)
assert N_ATOM_FEATURES == 74

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S", "se": "Se", "as": "As"}
VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,), "Se": (2, 4, 6), "As": (3, 5), "Si": (4,),
}
# elements that contribute a pi bond to an aromatic ring when written lowercase
PI_DONORS = {"B", "C", "N", "P", "As"}

ELEMENTS = set("""H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu
Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce Pr Nd Pm
Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np
Pu Am Cm Bk Cf Es Fm Md No Lr""".split())
ATOMIC_NUMBER = {
    "H": 1, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9, "Na": 11, "Mg": 12, "Al": 13, "Si": 14,
    "P": 15, "S": 16, "Cl": 17, "K": 19, "Ca": 20, "Fe": 26, "Cu": 29, "Zn": 30, "As": 33,
    "Se": 34, "Br": 35, "I": 53, "Pt": 78, "Au": 79, "Hg": 80,
}

BOND_ORDER = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5}


@dataclass
class AtomRecord:
    symbol: str
    degree: int = 0
    implicit_h: int = 0
    formal_charge: int = 0
    radical_electrons: int = 0
    hybridization: str = "UNSPECIFIED"
    total_h: int = 0
    aromatic: bool = False


@dataclass
class MolecularGraph:
    atoms: list
    bonds: list  # (i, j, order, aromatic)
    smiles: str = ""
    _adj: dict = field(default_factory=dict, repr=False)

    @property
    def num_atoms(self):
        return len(self.atoms)

    def neighbors(self, i):
        if not self._adj:
            adj = {k: [] for k in range(len(self.atoms))}
            for a, b, order, arom in self.bonds:
                adj[a].append((b, order, arom))
                adj[b].append((a, order, arom))
            self._adj.update(adj)
        return self._adj[i]

    def adjacency_with_self_loops(self, capacity=None):
        n = len(self.atoms)
        cap = n if capacity is None else capacity
        if n > cap:
            raise CapacityError(f"molecule has {n} atoms but capacity is {cap}")
        a = np.zeros((cap, cap), dtype=np.float32)
        for i, j, _, _ in self.bonds:
            a[i, j] = a[j, i] = 1.0
        a[np.arange(n), np.arange(n)] = 1.0
        return a

    def node_features(self, capacity=None):
        return featurize_atoms(self, capacity)


def _smallest_valence(symbol, used):
    for v in VALENCES.get(symbol, ()):
        if v >= used:
            return v
    return None


def _nominal_valence(symbol, charge):
    vals = VALENCES.get(symbol)
    if not vals:
        return None
    v0 = vals[0]
    if symbol in ("B", "C", "Si"):
        return v0 - abs(charge) if symbol != "B" else v0 - charge
    return v0 + charge


class _Parser:
    def __init__(self, s):
        self.s = s
        self.pos = 0
        self.atoms = []
        self.bonds = []
        self.bracket = []  # whether atom i was a bracket atom
        self.explicit_h = []
        self.rings = {}
        self.offsets = []

    def error(self, msg, offset=None):
        raise ParseError(msg, self.pos if offset is None else offset, self.s)

    def parse(self):
        s = self.s
        prev = None
        stack = []
        pending_bond = None
        pending_at = None
        while self.pos < len(s):
            ch = s[self.pos]
            if ch == "(":
                if prev is None:
                    self.error("branch opened before any atom")
                stack.append((prev, self.pos))
                self.pos += 1
            elif ch == ")":
                if not stack:
                    self.error("unbalanced ')'")
                if pending_bond is not None:
                    self.error("bond symbol before ')'")
                prev = stack.pop()[0]
                self.pos += 1
            elif ch in BOND_ORDER:
                if pending_bond is not None:
                    self.error("two consecutive bond symbols")
                pending_bond, pending_at = ch, self.pos
                self.pos += 1
            elif ch in "/\\":
                self.error("stereo bonds are not supported")
            elif ch == ".":
                if pending_bond is not None:
                    self.error("bond symbol before '.'")
                prev = None
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    self.error("ring closure before any atom")
                start = self.pos
                if ch == "%":
                    num = s[self.pos + 1:self.pos + 3]
                    if len(num) != 2 or not num.isdigit():
                        self.error("'%' must be followed by two digits")
                    label = int(num)
                    self.pos += 3
                else:
                    label = int(ch)
                    self.pos += 1
                if label in self.rings:
                    other, obond, oat = self.rings.pop(label)
                    if pending_bond and obond and pending_bond != obond:
                        self.error("conflicting ring-closure bond symbols", start)
                    if other == prev:
                        self.error("ring closure onto the same atom", start)
                    self._add_bond(other, prev, pending_bond or obond, start)
                else:
                    self.rings[label] = (prev, pending_bond, start)
                pending_bond = None
            elif ch == "[" or ch.isalpha() or ch == "*":
                start = self.pos
                idx = self._atom()
                if prev is not None:
                    self._add_bond(prev, idx, pending_bond, start)
                elif pending_bond is not None:
                    self.error("bond symbol without a preceding atom", pending_at)
                pending_bond = None
                prev = idx
            else:
                self.error(f"unknown symbol {ch!r}")
        if stack:
            self.error("unbalanced '('", stack[-1][1])
        if self.rings:
            label, (_, _, at) = next(iter(self.rings.items()))
            self.error(f"unmatched ring bond {label}", at)
        if pending_bond is not None:
            self.error("dangling bond symbol", pending_at)
        if not self.atoms:
            self.error("no atoms", 0)
        return self._finish()

    def _add_bond(self, i, j, sym, at):
        for a, b, _, _ in self.bonds:
            if {a, b} == {i, j}:
                self.error("duplicate bond", at)
        ai, aj = self.atoms[i], self.atoms[j]
        if sym is None:
            if ai.aromatic and aj.aromatic:
                order, arom = 1.5, True
            else:
                order, arom = 1.0, False
        else:
            order = BOND_ORDER[sym]
            arom = sym == ":"
        self.bonds.append((i, j, order, arom))

    def _atom(self):
        s = self.s
        start = self.pos
        if s[self.pos] == "*":
            self.error("wildcard atom '*' is not supported")
        if s[self.pos] == "[":
            return self._bracket_atom()
        two = s[self.pos:self.pos + 2]
        if two in ("Cl", "Br"):
            sym, arom = two, False
            self.pos += 2
        elif s[self.pos] in ORGANIC:
            sym, arom = s[self.pos], False
            self.pos += 1
        elif s[self.pos] in AROMATIC_ORGANIC:
            sym, arom = AROMATIC_ORGANIC[s[self.pos]], True
            self.pos += 1
        else:
            self.error(f"unknown atom symbol {s[self.pos]!r}", start)
        self.atoms.append(AtomRecord(symbol=sym, aromatic=arom))
        self.bracket.append(False)
        self.explicit_h.append(0)
        self.offsets.append(start)
        return len(self.atoms) - 1

    def _bracket_atom(self):
        s = self.s
        start = self.pos
        end = s.find("]", start)
        if end < 0:
            self.error("unclosed '['", start)
        body = s[start + 1:end]
        i = 0
        if i < len(body) and body[i].isdigit():
            self.error("isotopes are not supported", start + 1)
        # element symbol
        sym = None
        arom = False
        for cand in (body[i:i + 2], body[i:i + 1]):
            if cand in AROMATIC_BRACKET and cand.islower():
                sym, arom = AROMATIC_BRACKET[cand], True
                i += len(cand)
                break
            if cand and cand[0].isupper() and cand in ELEMENTS:
                sym = cand
                i += len(cand)
                break
        if sym is None:
            self.error(f"unknown element in bracket atom [{body}]", start + 1)
        if i < len(body) and body[i] == "@":
            self.error("stereochemistry is not supported", start + 1 + i)
        h = 0
        if i < len(body) and body[i] == "H":
            i += 1
            h = 1
            j = i
            while j < len(body) and body[j].isdigit():
                j += 1
            if j > i:
                h = int(body[i:j])
            i = j
        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            j = i + 1
            while j < len(body) and body[j] == body[i]:
                j += 1
            if j > i + 1:
                charge = sign * (j - i)
                i = j
            else:
                k = j
                while k < len(body) and body[k].isdigit():
                    k += 1
                charge = sign * (int(body[j:k]) if k > j else 1)
                i = k
        if i < len(body):
            if body[i] == ":":
                self.error("atom classes are not supported", start + 1 + i)
            self.error(f"unexpected {body[i]!r} in bracket atom", start + 1 + i)
        self.pos = end + 1
        self.atoms.append(AtomRecord(symbol=sym, formal_charge=charge, aromatic=arom))
        self.bracket.append(True)
        self.explicit_h.append(h)
        self.offsets.append(start)
        return len(self.atoms) - 1

    def _finish(self):
        n = len(self.atoms)
        used = [0.0] * n
        degree = [0] * n
        n_arom = [0] * n
        n_double = [0] * n
        n_triple = [0] * n
        for i, j, order, arom in self.bonds:
            for a in (i, j):
                degree[a] += 1
                if arom:
                    n_arom[a] += 1
                    used[a] += 1.0
                else:
                    used[a] += order
                    n_double[a] += order == 2.0
                    n_triple[a] += order == 3.0
        for k, atom in enumerate(self.atoms):
            sym = atom.symbol
            atom.degree = degree[k]
            sigma = int(round(used[k]))
            # a lowercase donor adds one pi bond unless it already has an exocyclic
            # double bond or the pi bond would exceed its default valence (pyrrole-type
            # n with three connections donates its lone pair instead)
            h_fixed = self.explicit_h[k] if self.bracket[k] else 0
            limit = _nominal_valence(sym, atom.formal_charge) if sym in VALENCES else 0
            pi = int(atom.aromatic and sym in PI_DONORS and not n_double[k] and sigma + h_fixed + 1 <= limit)
            bond_sum = sigma + pi
            if not self.bracket[k]:
                target = _smallest_valence(sym, bond_sum)
                if target is None:
                    raise ParseError(f"valence overflow on {sym} (bond order sum {bond_sum})", self.offsets[k], self.s)
                atom.implicit_h = target - bond_sum
                atom.total_h = atom.implicit_h
            else:
                h = self.explicit_h[k]
                atom.implicit_h = 0
                atom.total_h = h
                nominal = _nominal_valence(sym, atom.formal_charge)
                if nominal is not None:
                    total = bond_sum + h
                    vals = [v + (nominal - VALENCES[sym][0]) for v in VALENCES[sym]]
                    if total > max(vals):
                        raise ParseError(f"valence overflow on [{sym}] (total valence {total})", self.offsets[k], self.s)
                    if total < nominal:
                        atom.radical_electrons = nominal - total
            atom.hybridization = _hybridization(atom, n_arom[k], n_double[k], n_triple[k])
        return MolecularGraph(atoms=self.atoms, bonds=self.bonds, smiles=self.s)


def _hybridization(atom, n_arom, n_double, n_triple):
    if atom.aromatic or n_arom:
        return "SP2"
    if n_triple or n_double >= 2:
        return "SP"
    if n_double == 1:
        return "SP2"
    if atom.degree + atom.total_h == 0:
        return "UNSPECIFIED"
    if atom.symbol in ATOMIC_NUMBER or atom.symbol in VALENCES:
        return "SP3"
    return "UNSPECIFIED"


def parse_smiles(s: str) -> MolecularGraph:
    """Parse a SMILES string. Atom order follows the reading order."""
    if not isinstance(s, str) or not s.strip():
        raise ParseError("empty SMILES", 0, s)
    return _Parser(s.strip()).parse()


def _one_hot(value, width, allowed=None):
    v = np.zeros(width, dtype=np.int64)
    if allowed is not None:
        idx = allowed.index(value) if value in allowed else width - 1
    else:
        idx = value if 0 <= value < width else width - 1
    v[idx] = 1
    return v


def atom_features(atom: AtomRecord) -> np.ndarray:
    parts = [
        _one_hot(atom.symbol, 43, ATOM_TYPES),
        _one_hot(atom.degree, 11),
        _one_hot(atom.implicit_h, 7),
        np.array([atom.formal_charge]),
        np.array([atom.radical_electrons]),
        _one_hot(atom.hybridization, 5, HYBRIDIZATIONS),
        _one_hot(atom.total_h, 5),
        np.array([int(atom.aromatic)]),
    ]
    return np.concatenate(parts).astype(np.int64)


def featurize_atoms(g: MolecularGraph, capacity=None) -> np.ndarray:
    """``capacity x 74`` integer matrix; rows past the real atoms are zero."""
    n = g.num_atoms
    cap = n if capacity is None else capacity
    if n > cap:
        raise CapacityError(f"molecule has {n} atoms but capacity is {cap}")
    out = np.zeros((cap, N_ATOM_FEATURES), dtype=np.int64)
    for i, atom in enumerate(g.atoms):
        out[i] = atom_features(atom)
    return out


def _hash32(*values) -> int:
    h = hashlib.blake2b(repr(values).encode(), digest_size=4)
    return int.from_bytes(h.digest(), "little")


def _bond_code(order, arom):
    return 4 if arom else int(order)


def ecfp4(g: MolecularGraph, n_bits: int = 2048, radius: int = 2) -> np.ndarray:
    """Hashed circular fingerprint (radius 2, i.e. diameter-4 environments) as a bool vector."""
    if g.num_atoms == 0:
        raise ParseError("empty molecule", 0, g.smiles)
    ids = [
        _hash32(a.symbol, a.degree, a.total_h, a.formal_charge, a.aromatic)
        for a in g.atoms
    ]
    seen = set(ids)
    for r in range(1, radius + 1):
        new = []
        for i in range(g.num_atoms):
            env = sorted((_bond_code(o, ar), ids[j]) for j, o, ar in g.neighbors(i))
            new.append(_hash32(r, ids[i], tuple(env)))
        ids = new
        seen.update(ids)
    fp = np.zeros(n_bits, dtype=bool)
    for ident in seen:
        fp[ident % n_bits] = True
    return fp


def fingerprint_hex(fp: np.ndarray) -> str:
    return np.packbits(fp.astype(np.uint8)).tobytes().hex()


def jaccard_distance(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionError(f"fingerprint widths differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return 1.0 - np.logical_and(a, b).sum() / union


def jaccard_distance_matrix(fps) -> np.ndarray:
    x = np.asarray(fps, dtype=np.float64)
    inter = x @ x.T
    counts = x.sum(axis=1)
    union = counts[:, None] + counts[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        d = 1.0 - np.where(union > 0, inter / np.where(union > 0, union, 1), 1.0)
    np.fill_diagonal(d, 0.0)
    return d
