"""
Independent reference implementations used by the unit and acceptance tests.

Everything here is written the slow, obvious way (explicit loops, brute-force
enumeration) and shares no code with the package beyond data containers.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from drugban import tensor as T
from drugban.tensor import Tensor


# -- finite-difference cases ---------------------------------------------------
def _t(rng, *shape, positive=False, away_from=None):
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    kinks = np.atleast_1d(away_from) if away_from is not None else np.zeros(0)
    # keep every entry at least 1e-3 from a kink
    bad = (np.abs(x[..., None] - kinks) < 1e-3).any(axis=-1)
    while bad.any():
        x[bad] = rng.standard_normal(bad.sum())
        bad = (np.abs(x[..., None] - kinks) < 1e-3).any(axis=-1)
    return Tensor(x, requires_grad=True, dtype=np.float64)


def _distinct_max(rng, shape, axis):
    # distinct values with a clear gap so the argmax is stable under +-eps
    x = rng.permutation(int(np.prod(shape))).reshape(shape).astype(np.float64) * 0.1
    return Tensor(x + 0.01 * rng.random(shape), requires_grad=True, dtype=np.float64)


def grad_cases(rng):
    """``name -> (fn, inputs)`` for every differentiable op, at shapes drawn from ``rng``."""
    r, s, c = (int(v) for v in rng.integers(2, 6, size=3))
    L, k = int(rng.integers(6, 11)), int(rng.integers(1, 4))
    stride = int(rng.choice([1, 2, 3]))
    idx = rng.integers(0, 7, size=5)
    idx[int(rng.integers(5))] = 7  # one pad entry
    mask = rng.random((r, s)) < 0.7
    mask[:, 0] = True
    return {
        "add": (lambda a, b: T.add(a, b), [_t(rng, r, s), _t(rng, s)]),
        "sub": (lambda a, b: T.sub(a, b), [_t(rng, r, s), _t(rng, r, 1)]),
        "mul": (lambda a, b: T.mul(a, b), [_t(rng, r, s), _t(rng, s)]),
        "matmul": (lambda a, b: T.matmul(a, b), [_t(rng, r, s), _t(rng, s, c)]),
        "matmul_batched": (lambda a, b: T.matmul(a, b), [_t(rng, 2, r, s), _t(rng, s, c)]),
        "reshape": (lambda a: T.reshape(a, (s, r)), [_t(rng, r, s)]),
        "transpose": (lambda a: T.transpose(a, (1, 2, 0)), [_t(rng, r, s, c)]),
        "concat": (lambda a, b: T.concat([a, b], axis=1), [_t(rng, r, s), _t(rng, r, c)]),
        "sum": (lambda a: T.sum_(a, axis=0), [_t(rng, r, s)]),
        "mean": (lambda a: T.mean(a, axis=1), [_t(rng, r, s)]),
        "masked_max": (lambda a: T.masked_max(a, mask, axis=1), [_distinct_max(rng, (r, s), 1)]),
        "relu": (T.relu, [_t(rng, r, s, away_from=0.0)]),
        "sigmoid": (T.sigmoid, [_t(rng, r, s)]),
        "log_sigmoid": (T.log_sigmoid, [_t(rng, r, s)]),
        "tanh": (T.tanh, [_t(rng, r, s)]),
        "log": (T.log, [_t(rng, r, s, positive=True)]),
        "clip": (lambda a: T.clip(a, -0.5, 0.5), [_t(rng, r, s, away_from=(-0.5, 0.5))]),
        "softmax": (lambda a: T.softmax(a, axis=-1), [_t(rng, r, s)]),
        "conv1d": (lambda x, w, b: T.conv1d(x, w, b), [_t(rng, 2, L), _t(rng, 3, 2, k + 2), _t(rng, 3)]),
        "conv1d_batched": (lambda x, w: T.conv1d(x, w), [_t(rng, 2, c, L), _t(rng, r, c, k)]),
        "embedding": (lambda tab: T.embedding(tab, idx, pad_index=7), [_t(rng, 7, s)]),
        "sum_pool_1d": (lambda v: T.sum_pool_1d(v, stride), [_t(rng, r, 6)]),
        "outer_flatten": (lambda f, g: T.outer_flatten(f, g), [_t(rng, 4), _t(rng, 2)]),
    }


def grl_error(rng, omega=0.7, eps=1e-5):
    """Gradient reversal is not a derivative: its backward must equal ``-omega``
    times the finite-difference derivative of its (identity) forward, composed
    here with a nonlinear tail. Returns the max relative error of that relation."""
    x = _t(rng, *(int(v) for v in rng.integers(2, 6, size=2)))
    w = rng.standard_normal(x.shape)

    def tail(v):
        return T.sum_(T.tanh(v) * w)

    out = tail(T.gradient_reversal(x, omega))
    out.backward()
    worst = 0.0
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(tail(Tensor(x.data)).data)
        flat[i] = orig - eps
        down = float(tail(Tensor(x.data)).data)
        flat[i] = orig
        fd = -omega * (up - down) / (2 * eps)
        an = x.grad.reshape(-1)[i]
        worst = max(worst, abs(fd - an) / max(1.0, abs(fd), abs(an)))
    return worst


# -- bilinear attention, loop forms ----------------------------------------------
def relu(x):
    return np.maximum(x, 0.0)


def bilinear_map_loop(H_d, H_p, U, V, q):
    """``I[i, j] = q . (relu(U^T h_i) * relu(V^T p_j))`` entry by entry."""
    N, M = H_d.shape[0], H_p.shape[0]
    I = np.zeros((N, M))
    for i in range(N):
        a = relu(U.T @ H_d[i])
        for j in range(M):
            b = relu(V.T @ H_p[j])
            I[i, j] = sum(q[k] * a[k] * b[k] for k in range(len(q)))
    return I


def bilinear_pool_double_sum(H_d, H_p, U, V, I):
    """``f'_k = sum_i sum_j relu(U_k . h_i) * I_ij * relu(V_k . p_j)``."""
    K = U.shape[1]
    f = np.zeros(K)
    for k in range(K):
        for i in range(H_d.shape[0]):
            a = max(0.0, float(U[:, k] @ H_d[i]))
            for j in range(H_p.shape[0]):
                b = max(0.0, float(V[:, k] @ H_p[j]))
                f[k] += a * I[i, j] * b
    return f


# -- metrics --------------------------------------------------------------------
def auroc_pairs(scores, labels):
    """Probability that a random positive outscores a random negative (ties count 1/2),
    counted over every (positive, negative) pair."""
    s, y = np.asarray(scores, dtype=np.float64), np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    wins = ties = 0
    for p in pos:
        wins += int((p > neg).sum())
        ties += int((p == neg).sum())
    return Fraction(2 * wins + ties, 2 * len(pos) * len(neg))


def _confusion(scores, labels, t):
    s, y = np.asarray(scores, dtype=np.float64), np.asarray(labels)
    hit = s >= t
    tp = int((hit & (y == 1)).sum())
    fp = int((hit & (y == 0)).sum())
    fn = int((~hit & (y == 1)).sum())
    tn = int((~hit & (y == 0)).sum())
    return tp, fp, fn, tn


def auprc_steps(scores, labels):
    """Step-wise area: sum over distinct thresholds of (recall gain) * precision."""
    n_pos = int(np.sum(labels))
    area, prev_recall = Fraction(0), Fraction(0)
    for t in sorted(set(np.asarray(scores, dtype=np.float64).tolist()), reverse=True):
        tp, fp, _, _ = _confusion(scores, labels, t)
        recall = Fraction(tp, n_pos)
        area += (recall - prev_recall) * Fraction(tp, tp + fp)
        prev_recall = recall
    return area


def best_f1_scan(scores, labels):
    """(threshold, f1, accuracy, sensitivity, specificity); ties go to the larger threshold."""
    best = None
    n = len(scores)
    for t in sorted(set(np.asarray(scores, dtype=np.float64).tolist()), reverse=True):
        tp, fp, fn, tn = _confusion(scores, labels, t)
        f1 = Fraction(2 * tp, 2 * tp + fp + fn)
        if best is None or f1 > best[1]:
            best = (t, f1, Fraction(tp + tn, n), Fraction(tp, tp + fn), Fraction(tn, tn + fp))
    return best


# -- clustering -----------------------------------------------------------------
def naive_single_linkage(D, gamma):
    """Agglomerate the closest pair of clusters (min over members) until no gap is <= gamma."""
    clusters = [[i] for i in range(len(D))]
    while True:
        best = None
        for a, b in itertools.combinations(range(len(clusters)), 2):
            d = min(D[i][j] for i in clusters[a] for j in clusters[b])
            if d <= gamma and (best is None or d < best[0]):
                best = (d, a, b)
        if best is None:
            break
        _, a, b = best
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
    return sorted(sorted(c) for c in clusters)


def partition_of(labels):
    groups = {}
    for i, c in enumerate(labels):
        groups.setdefault(int(c), []).append(i)
    return sorted(groups.values())


def min_intercluster_distance(D, labels):
    labels = np.asarray(labels)
    best = np.inf
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            if labels[i] != labels[j]:
                best = min(best, D[i][j])
    return best
