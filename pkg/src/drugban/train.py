"""Mini-batch training, validation-AUROC model selection and cross-domain adaptation."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import tensor as T
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .data import FeatureCache, collate, iterate_batches
from .errors import DataError, NumericError, TrainingDivergedError
from .metrics import auroc, metrics_record
from .model import DrugBAN, adversarial_losses, bce, l2_penalty
from .nn import Adam
from .rng import substream

log = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "train_loss", "val_auroc", "L_s", "L_adv", "disc_acc"]


@dataclass
class TrainState:
    epoch: int = 0
    best_val_auroc: float = -math.inf
    best_epoch: int = -1
    best_params: dict = field(default_factory=dict, repr=False)

    def update(self, epoch, val_auc, model):
        self.epoch = epoch
        if val_auc > self.best_val_auroc:
            self.best_val_auroc = val_auc
            self.best_epoch = epoch
            self.best_params = model.state_dict()
            return True
        return False


@dataclass
class TrainResult:
    model: DrugBAN
    state: TrainState
    metrics: dict
    history: list


def predict_scores(model, pairs, cache, batch_size=64, logits=False):
    """Interaction probabilities, or decoder logits with ``logits=True``.

    Ranking metrics use the logits: an fp32 sigmoid rounds every logit above
    about 17 to exactly 1.0, which would turn confident predictions into ties.
    """
    out = []
    with T.no_grad():
        for chunk in iterate_batches(pairs, batch_size):
            o = model(collate(chunk, cache, model.dtype))
            out.append((o.logits if logits else o.p).data.astype(np.float64))
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(model, pairs, cache, batch_size=64, seed=None):
    labels = [p.label for p in pairs]
    if any(y is None for y in labels):
        raise DataError("evaluation pairs must all be labeled")
    z = predict_scores(model, pairs, cache, batch_size, logits=True)
    return metrics_record(z, labels, seed=seed, threshold_map=expit)


def _val_auroc(model, pairs, cache, cfg):
    return auroc(predict_scores(model, pairs, cache, cfg.batch_size, logits=True), [p.label for p in pairs])


def _require_both_classes(pairs, what):
    labels = {p.label for p in pairs}
    if None in labels:
        raise DataError(f"{what} contains unlabeled rows")
    if labels != {0, 1}:
        raise DataError(f"{what} needs both positive and negative labels")


def _omega_at(cfg, step, total_steps):
    if not cfg.omega_ramp:
        return cfg.omega
    ramp = max(1.0, 0.2 * total_steps)
    if step >= ramp:
        return cfg.omega
    return cfg.omega * (2.0 / (1.0 + math.exp(-10.0 * step / ramp)) - 1.0)


def _regularised(loss, model, cfg):
    if cfg.l2 > 0:
        loss = loss + l2_penalty(model.parameters()) * cfg.l2
    return loss


def _write_run(run_dir, cfg, result, history):
    if run_dir is None:
        return
    os.makedirs(os.path.join(run_dir, "checkpoints"), exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        fh.write(cfg.to_json() + "\n")
    save_checkpoint(os.path.join(run_dir, "checkpoints", "best.bin"), result.state.best_params, cfg.to_dict())
    with open(os.path.join(run_dir, "metrics.json"), "w") as fh:
        json.dump(result.metrics, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(os.path.join(run_dir, "train_log.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: ("" if row.get(k) is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                        for k in LOG_COLUMNS})


def _mean_loss(model, pairs, cache, cfg):
    total = 0.0
    with T.no_grad():
        for chunk in iterate_batches(pairs, cfg.batch_size):
            b = collate(chunk, cache, model.dtype)
            total += float(bce(model(b).p, b.labels, reduction="sum").data)
    return total / len(pairs)


def train_in_domain(train, val, test, cfg: TrainConfig, run_dir=None, dtype=np.float32) -> TrainResult:
    """Adam on the cross-entropy objective; keep the epoch with the best validation AUROC."""
    cache = FeatureCache(cfg.max_drug_atoms, cfg.max_protein_len)
    train = cache.check(train, cfg.error_budget)
    val = cache.check(val, cfg.error_budget)
    test = cache.check(test, cfg.error_budget)
    if not train:
        raise DataError("empty training set")
    if any(p.label is None for p in train):
        raise DataError("training pairs must be labeled")
    _require_both_classes(val, "validation set")
    model = DrugBAN(cfg, dtype=dtype)
    opt = Adam(model.parameters(), lr=cfg.lr)
    state = TrainState()
    history = []

    val_auc = _val_auroc(model, val, cache, cfg)
    history.append({"epoch": 0, "train_loss": _mean_loss(model, train, cache, cfg), "val_auroc": val_auc})
    state.update(0, val_auc, model)
    for epoch in range(1, cfg.max_epochs + 1):
        order = substream(cfg.seed, f"shuffle/{epoch}").permutation(len(train))
        total, count = 0.0, 0
        for b_idx, chunk in enumerate(iterate_batches(train, cfg.batch_size, order)):
            batch = collate(chunk, cache, dtype)
            try:
                out = model(batch)
                loss = _regularised(bce(out.p, batch.labels, reduction="mean"), model, cfg)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericError("non-finite loss")
                opt.zero_grad()
                loss.backward()
            except NumericError as exc:
                raise TrainingDivergedError(str(exc), epoch=epoch, batch=b_idx) from exc
            opt.step()
            total += value * len(chunk)
            count += len(chunk)
        val_auc = _val_auroc(model, val, cache, cfg)
        improved = state.update(epoch, val_auc, model)
        history.append({"epoch": epoch, "train_loss": total / count, "val_auroc": val_auc})
        log.info("epoch %d loss %.4f val_auroc %.4f%s", epoch, total / count, val_auc, " *" if improved else "")

    model.load_state_dict(state.best_params)
    metrics = evaluate(model, test, cache, cfg.batch_size, seed=cfg.seed) if test else {}
    result = TrainResult(model=model, state=state, metrics=metrics, history=history)
    _write_run(run_dir, cfg, result, history)
    return result


def split_source_holdout(source, cfg):
    order = substream(cfg.seed, "holdout").permutation(len(source))
    n_hold = max(1, int(math.floor(cfg.source_holdout * len(source) + 0.5)))
    hold = [source[i] for i in order[:n_hold]]
    fit = [source[i] for i in order[n_hold:]]
    return fit, hold


def train_cross_domain(source, target_unlabeled, target_test, cfg: TrainConfig, run_dir=None,
                       dtype=np.float32) -> TrainResult:
    """Source-supervised training with a domain discriminator (CDAN or DANN).

    Every step draws one source and one target batch, cycling the shorter
    stream. Model selection uses AUROC on a labeled source holdout, never the
    target labels. With ``mode="vanilla"`` the target stream is ignored, which
    gives the no-adaptation baseline under the same protocol.
    """
    cache = FeatureCache(cfg.max_drug_atoms, cfg.max_protein_len)
    source = cache.check(source, cfg.error_budget)
    target_unlabeled = cache.check(target_unlabeled, cfg.error_budget)
    target_test = cache.check(target_test, cfg.error_budget)
    if any(p.label is None for p in target_test):
        raise DataError("target test set contains unlabeled rows")
    if any(p.label is None for p in source):
        raise DataError("source pairs must be labeled")
    adapt = cfg.adaptation != "none"
    if adapt and not target_unlabeled:
        raise DataError("cross-domain training needs unlabeled target pairs")
    fit, hold = split_source_holdout(source, cfg)
    _require_both_classes(hold, "source holdout")

    model = DrugBAN(cfg, dtype=dtype)
    opt = Adam(model.parameters(), lr=cfg.lr)
    state = TrainState()
    history = []
    bs = cfg.batch_size
    n_steps = max(math.ceil(len(fit) / bs), math.ceil(len(target_unlabeled) / bs) if adapt else 0)
    total_steps = n_steps * cfg.max_epochs

    val_auc = _val_auroc(model, hold, cache, cfg)
    history.append({"epoch": 0, "train_loss": _mean_loss(model, fit, cache, cfg), "val_auroc": val_auc})
    state.update(0, val_auc, model)
    step = 0
    for epoch in range(1, cfg.max_epochs + 1):
        s_order = substream(cfg.seed, f"shuffle/{epoch}").permutation(len(fit))
        t_order = substream(cfg.seed, f"shuffle-target/{epoch}").permutation(len(target_unlabeled)) if adapt else None
        sums = {"L_s": 0.0, "L_adv": 0.0, "disc_acc": 0.0}
        for b_idx in range(n_steps):
            s_idx = [s_order[(b_idx * bs + j) % len(fit)] for j in range(bs)] if adapt else s_order[b_idx * bs:(b_idx + 1) * bs]
            s_batch = collate([fit[i] for i in s_idx], cache, dtype)
            try:
                if adapt:
                    t_idx = [t_order[(b_idx * bs + j) % len(t_order)] for j in range(bs)]
                    t_batch = collate([target_unlabeled[i] for i in t_idx], cache, dtype)
                    omega = _omega_at(cfg, step, total_steps)
                    L_s, L_adv, objective, aux = adversarial_losses(model, s_batch, t_batch, omega)
                    sums["L_adv"] += float(L_adv.data)
                    sums["disc_acc"] += aux["disc_acc"]
                else:
                    L_s = bce(model(s_batch).p, s_batch.labels, reduction="mean")
                    objective = L_s
                objective = _regularised(objective, model, cfg)
                if not math.isfinite(float(objective.data)):
                    raise NumericError("non-finite loss")
                opt.zero_grad()
                objective.backward()
            except NumericError as exc:
                raise TrainingDivergedError(str(exc), epoch=epoch, batch=b_idx) from exc
            opt.step()
            sums["L_s"] += float(L_s.data)
            step += 1
        val_auc = _val_auroc(model, hold, cache, cfg)
        state.update(epoch, val_auc, model)
        row = {"epoch": epoch, "train_loss": sums["L_s"] / n_steps, "val_auroc": val_auc, "L_s": sums["L_s"] / n_steps}
        if adapt:
            row["L_adv"] = sums["L_adv"] / n_steps
            row["disc_acc"] = sums["disc_acc"] / n_steps
        history.append(row)
        log.info("epoch %d L_s %.4f L_adv %s holdout_auroc %.4f", epoch, row["L_s"], row.get("L_adv"), val_auc)

    model.load_state_dict(state.best_params)
    metrics = evaluate(model, target_test, cache, cfg.batch_size, seed=cfg.seed)
    result = TrainResult(model=model, state=state, metrics=metrics, history=history)
    _write_run(run_dir, cfg, result, history)
    return result
