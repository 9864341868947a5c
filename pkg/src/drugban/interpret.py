"""Attention-map extraction and substructure highlight reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import tensor as T
from .data import FeatureCache, collate
from .errors import ConfigError

REPORT_VERSION = 1
CSV_COLUMNS = ["kind", "index", "start", "end", "weight_max", "weight_mean", "selected"]


def top_k_count(n, percent):
    if not 0 < percent <= 100:
        raise ConfigError(f"top-k percentage must be in (0, 100], got {percent}")
    return math.ceil(Fraction(str(percent)) * n / 100)


def top_k_indices(weights, percent=20):
    """Indices of the ``ceil(percent% * n)`` largest weights; ties go to the lower index."""
    w = np.asarray(weights)
    order = np.argsort(-w, kind="stable")
    return order[: top_k_count(w.size, percent)]


def receptive_field(kernel_sizes):
    return 1 + sum(k - 1 for k in kernel_sizes)


@dataclass
class AttentionReport:
    pair_id: str
    maps: list  # per head, n_atoms x M
    atom_weight_max: np.ndarray
    atom_weight_mean: np.ndarray
    position_weight_max: np.ndarray
    position_weight_mean: np.ndarray
    top_atoms: np.ndarray
    topk_percent: float
    windows: list  # (start, end) residue span per encoded column, inclusive
    protein_length: int
    smiles: str = ""
    sequence: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def n_atoms(self):
        return len(self.atom_weight_max)

    @property
    def n_positions(self):
        return len(self.position_weight_max)

    def protein_ranking(self):
        return np.argsort(-self.position_weight_max, kind="stable")


def build_report(maps, pair_id="", topk_percent=20, kernel_sizes=(3, 6, 9), protein_length=None,
                 smiles="", sequence=""):
    """Aggregate per-head ``n_atoms x M`` maps (virtual atoms already removed)."""
    stack = np.stack([np.asarray(m, dtype=np.float32) for m in maps])  # H, N, M
    n_pos = stack.shape[2]
    rf = receptive_field(kernel_sizes)
    windows = [(j, j + rf - 1) for j in range(n_pos)]
    atom_max = stack.max(axis=(0, 2))
    return AttentionReport(
        pair_id=pair_id,
        maps=[m for m in stack],
        atom_weight_max=atom_max,
        atom_weight_mean=stack.mean(axis=(0, 2)),
        position_weight_max=stack.max(axis=(0, 1)),
        position_weight_mean=stack.mean(axis=(0, 1)),
        top_atoms=top_k_indices(atom_max, topk_percent),
        topk_percent=topk_percent,
        windows=windows,
        protein_length=n_pos + rf - 1 if protein_length is None else protein_length,
        smiles=smiles,
        sequence=sequence,
    )


def extract_attention(model, pair, cache: FeatureCache | None = None, topk_percent=20) -> AttentionReport:
    """Forward one pair and report each head's interaction map over its real atoms."""
    if model.head_mode != "full":
        raise ConfigError(f"attention maps need the bilinear head, model has {model.head_mode!r}")
    cfg = model.cfg
    cache = cache or FeatureCache(cfg.max_drug_atoms, cfg.max_protein_len)
    batch = collate([pair], cache, model.dtype)
    n_real = int(batch.atom_mask[0].sum())
    with T.no_grad():
        out = model(batch, return_maps=True)
    maps = [m[0, :n_real] for m in out.maps]
    report = build_report(maps, pair_id=pair.pair_id, topk_percent=topk_percent, kernel_sizes=cfg.kernel_sizes,
                          protein_length=min(len(pair.sequence), cfg.max_protein_len),
                          smiles=pair.smiles, sequence=pair.sequence)
    report.extra["probability"] = float(out.p.data[0])
    return report


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=np.float32).reshape(-1)]


def report_to_dict(report: AttentionReport) -> dict:
    selected = set(report.top_atoms.tolist())
    return {
        "report_version": REPORT_VERSION,
        "pair_id": report.pair_id,
        "smiles": report.smiles,
        "sequence": report.sequence,
        "n_atoms": report.n_atoms,
        "n_positions": report.n_positions,
        "topk_percent": report.topk_percent,
        "maps": [[_floats(row) for row in m] for m in report.maps],
        "atoms": [
            {"index": i, "weight_max": float(report.atom_weight_max[i]),
             "weight_mean": float(report.atom_weight_mean[i]), "selected": i in selected}
            for i in range(report.n_atoms)
        ],
        "top_atoms": [int(i) for i in report.top_atoms],
        "protein_windows": [
            {"column": j, "start": s, "end": e, "includes_padding": e >= report.protein_length,
             "weight_max": float(report.position_weight_max[j]), "weight_mean": float(report.position_weight_mean[j])}
            for j, (s, e) in enumerate(report.windows)
        ],
        "protein_ranking": [int(j) for j in report.protein_ranking()],
        **report.extra,
    }


def emit_report(report: AttentionReport, fmt, path):
    if fmt == "json":
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(report_to_dict(report), fh)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    elif fmt == "csv":
        selected = set(report.top_atoms.tolist())
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for i in range(report.n_atoms):
                    w.writerow(["atom", i, i, i, repr(float(report.atom_weight_max[i])),
                                repr(float(report.atom_weight_mean[i])), int(i in selected)])
                for j, (s, e) in enumerate(report.windows):
                    w.writerow(["protein", j, s, e, repr(float(report.position_weight_max[j])),
                                repr(float(report.position_weight_mean[j])), ""])
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc}") from exc
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return path


def load_report_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    d["maps"] = [np.asarray(m, dtype=np.float32) for m in d["maps"]]
    return d
