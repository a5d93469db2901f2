"""Independent reference computations used by the tests.

Nothing here calls into the code paths it is used to check: gradients come
from central finite differences, integrals from dense Riemann sums, counts
from plain loops.
"""

import math
from itertools import combinations

import numpy as np

from legalattr import model as M


def brute_force_phrase_hits(corpus_ids, query):
    hits = []
    q = list(query)
    for d, ids in enumerate(corpus_ids):
        ids = list(ids)
        for i in range(len(ids) - len(q) + 1):
            match = True
            for j in range(len(q)):
                if ids[i + j] != q[j]:
                    match = False
                    break
            if match:
                hits.append((d, i))
    return hits


def fd_param_grads(model, ex, h=1e-6):
    """Central differences of the cross-entropy loss w.r.t. every parameter."""
    out = {}
    for name, arr in model.params().items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = M.loss(model, ex)
            flat[i] = orig - h
            down = M.loss(model, ex)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        out[name] = g
    return out


def fd_input_grads(fn, x, h=1e-6):
    """Central differences of a scalar ``fn(x)`` w.r.t. every element of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = fn(x)
        x[idx] = orig - h
        down = fn(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


def dense_riemann_ig(grad_fn, x, baseline, n=100_000, chunk=2_000):
    """Midpoint Riemann sum of the IG path integral with ``n`` sub-intervals.

    ``grad_fn`` maps a batch of alphas (shape ``(k,)``) to gradients of shape
    ``(k, *x.shape)``.
    """
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    total = np.zeros_like(x)
    for start in range(0, n, chunk):
        k = np.arange(start, min(start + chunk, n))
        alphas = (k + 0.5) / n
        total += grad_fn(alphas).sum(axis=0)
    return (x - baseline) * total / n


def relative_error(a, b, floor=1e-3):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def two_pass_stats(values):
    vals = [float(v) for v in values]
    n = len(vals)
    mean = math.fsum(vals) / n
    var = math.fsum((v - mean) ** 2 for v in vals) / n
    return mean, math.sqrt(var)


def confusion_counts(labels, predicted):
    tp = fp = fn = tn = 0
    for y, p in zip(labels, predicted):
        if y == 1 and p == 1:
            tp += 1
        elif y == 0 and p == 1:
            fp += 1
        elif y == 1 and p == 0:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def power_set_cells(models, rows):
    """Count examples per exact subset of models correct, enumerating every subset."""
    n = len(models)
    counts = {}
    for r in range(n + 1):
        for subset in combinations(range(n), r):
            s = set(subset)
            c = sum(1 for row in rows if all(row[j] == (j in s) for j in range(n)))
            if c:
                counts[frozenset(models[j] for j in subset)] = c
    return counts
