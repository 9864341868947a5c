"""Run configuration with the published hyperparameters as defaults."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

MODES = (
    "vanilla",
    "cdan",
    "dann",
    "ablation-linear_concat",
    "ablation-one_side_drug",
    "ablation-one_side_protein",
)
HEAD_MODES = ("full", "linear_concat", "one_side_drug", "one_side_protein")


@dataclass
class TrainConfig:
    # optimisation
    batch_size: int = 64
    lr: float = 5e-5
    max_epochs: int = 100
    l2: float = 0.0
    omega: float = 1.0
    omega_ramp: bool = False
    mode: str = "vanilla"
    seed: int = 0
    source_holdout: float = 0.1
    error_budget: float = 0.01
    # input capacities
    max_protein_len: int = 1200
    max_drug_atoms: int = 290
    # drug encoder
    drug_embedding: int = 128
    gcn_hidden: list = field(default_factory=lambda: [128, 128, 128])
    # protein encoder
    protein_embedding: int = 128
    num_filters: list = field(default_factory=lambda: [128, 128, 128])
    kernel_sizes: list = field(default_factory=lambda: [3, 6, 9])
    # bilinear attention
    heads: int = 2
    ban_dim: int = 768
    pool_stride: int = 3
    # heads
    decoder_hidden: int = 512
    disc_hidden: int = 256
    zero_init_output: bool = True

    def __post_init__(self):
        self.gcn_hidden = [int(x) for x in self.gcn_hidden]
        self.num_filters = [int(x) for x in self.num_filters]
        self.kernel_sizes = [int(x) for x in self.kernel_sizes]
        self.validate()

    @property
    def head_mode(self):
        return self.mode.split("-", 1)[1] if self.mode.startswith("ablation-") else "full"

    @property
    def adaptation(self):
        return self.mode if self.mode in ("cdan", "dann") else "none"

    @property
    def cross_domain(self):
        return self.adaptation != "none"

    @property
    def protein_out_len(self):
        return self.max_protein_len - sum(k - 1 for k in self.kernel_sizes)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        positive = ["batch_size", "max_epochs", "heads", "ban_dim", "pool_stride", "max_protein_len",
                    "max_drug_atoms", "drug_embedding", "protein_embedding", "decoder_hidden", "disc_hidden"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr < 0 or self.l2 < 0 or self.omega < 0:
            raise ConfigError("lr, l2 and omega must be non-negative")
        if self.ban_dim % self.pool_stride:
            raise ConfigError(f"pool_stride {self.pool_stride} must divide ban_dim {self.ban_dim}")
        if len(self.num_filters) != len(self.kernel_sizes):
            raise ConfigError("num_filters and kernel_sizes must have equal length")
        if not self.gcn_hidden or any(h <= 0 for h in self.gcn_hidden + self.num_filters + self.kernel_sizes):
            raise ConfigError("layer widths and kernel sizes must be positive")
        if self.protein_out_len < 1:
            raise ConfigError("kernel sizes exceed max_protein_len")
        if self.cross_domain and self.omega <= 0:
            raise ConfigError(f"mode {self.mode} needs omega > 0")
        if not 0 < self.source_holdout < 1:
            raise ConfigError("source_holdout must lie in (0, 1)")

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
