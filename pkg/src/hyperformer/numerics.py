"""Dense matrix helpers, gradient accumulation and a finite-difference checker.

Matrices are plain float64 numpy arrays (rows x cols).  The model's backward
pass is hand-written per operation; this module supplies the shared pieces
plus the validation harness used to check every analytic gradient against
central differences.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyInputError, HyperFormerError


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    return a @ b


def masked_softmax(scores, active_indices):
    """Softmax restricted to `active_indices`; inactive slots are exactly 0.

    Uses max-subtraction so huge scores stay finite.  The active set must be
    non-empty: a node with no incident edges has no attention distribution.
    """
    scores = np.asarray(scores, dtype=np.float64)
    active = np.asarray(sorted(set(int(i) for i in active_indices)), dtype=np.int64)
    if active.size == 0:
        raise EmptyInputError("masked_softmax: empty active index set")
    sub = scores[active]
    e = np.exp(sub - sub.max())
    out = np.zeros_like(scores)
    out[active] = e / e.sum()
    return out


def relu(m):
    return np.maximum(m, 0.0)


def concat_rows(parts):
    """Concatenate row vectors in order into one row vector."""
    parts = list(parts)
    if not parts:
        raise EmptyInputError("concat_rows: empty sequence")
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])


class GradientStore:
    """Accumulates gradients keyed by parameter name.

    Dense parameters accumulate full arrays; the embedding table accumulates
    per-row entries keyed by global feature id, so rows of features absent
    from a batch never appear (the sparse-update contract).
    """

    def __init__(self):
        self.dense = {}
        self.rows = {}

    def add(self, name, grad):
        grad = np.asarray(grad, dtype=np.float64)
        if name in self.dense:
            if self.dense[name].shape != grad.shape:
                raise DimensionError(f"GradientStore[{name}]", self.dense[name].shape, grad.shape)
            self.dense[name] += grad
        else:
            self.dense[name] = grad.copy()

    def add_rows(self, name, ids, rows):
        """Accumulate sparse row gradients: rows[i] belongs to global id ids[i]."""
        bucket = self.rows.setdefault(name, {})
        rows = np.asarray(rows, dtype=np.float64)
        for gid, row in zip(ids, rows):
            gid = int(gid)
            if gid in bucket:
                bucket[gid] += row
            else:
                bucket[gid] = row.copy()

    def row_items(self, name):
        """Sorted (ids, matrix) view of one sparse entry; empty if absent."""
        bucket = self.rows.get(name, {})
        if not bucket:
            return np.empty(0, dtype=np.int64), np.empty((0, 0))
        ids = np.array(sorted(bucket), dtype=np.int64)
        return ids, np.stack([bucket[int(g)] for g in ids])


@dataclass
class FiniteDifferenceReport:
    max_rel_error: float
    checked: int
    failures: list = field(default_factory=list)  # (name, flat_index, analytic, numeric)

    @property
    def passed(self):
        return not self.failures


def finite_difference_check(loss_fn, params, analytic_grads, epsilon=1e-5,
                            tolerance=1e-4, samples_per_param=5, rng=None):
    """Check analytic gradients against central differences.

    `loss_fn(params) -> scalar` must be deterministic.  For each parameter a
    few coordinates are sampled (all of them if the array is small) and
    (f(x+eps) - f(x-eps)) / 2eps is compared to the analytic entry.  Relative
    error uses max(|numeric|, |analytic|, 1) as denominator so near-zero
    gradients do not blow up the ratio.
    """
    if epsilon <= 0:
        raise ValueError("finite_difference_check: epsilon must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    base = loss_fn(params)
    if not np.isfinite(base):
        raise HyperFormerError(f"finite_difference_check: non-finite loss {base}")

    max_rel = 0.0
    checked = 0
    failures = []
    for name in sorted(params):
        p = params[name]
        g = analytic_grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        flat = p.reshape(-1)
        n = flat.size
        if n <= samples_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=samples_per_param, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + epsilon
            up = loss_fn(params)
            flat[c] = orig - epsilon
            down = loss_fn(params)
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise HyperFormerError("finite_difference_check: non-finite perturbed loss")
            numeric = (up - down) / (2.0 * epsilon)
            analytic = g.reshape(-1)[c]
            rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1.0)
            max_rel = max(max_rel, rel)
            checked += 1
            if rel > tolerance:
                failures.append((name, int(c), float(analytic), float(numeric)))
    return FiniteDifferenceReport(max_rel_error=max_rel, checked=checked, failures=failures)
