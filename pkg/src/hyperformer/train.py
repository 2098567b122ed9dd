"""Mini-batch training: BCE loss, Adam with lazy sparse embedding updates,
and the per-epoch loop that rebuilds the hypergraph for every batch."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInputError
from .model import backward_pass, forward_pass


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 20
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    shuffle_seed: int = 0
    negative_samples: int = 4   # two-tower mode: negatives per positive

    def validate(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("adam_beta1", "adam_beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must be in (0,1), got {v}")
        if self.negative_samples < 1:
            raise ConfigError(f"negative_samples must be >= 1, got {self.negative_samples}")


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(logits, labels):
    """Mean binary cross-entropy with logits, in the stable max-form.

    Returns (loss, dLoss/dLogits); the gradient is (sigmoid(z) - y) / n.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"bce_loss: length mismatch {z.shape} vs {y.shape}")
    loss = float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    grad = (sigmoid(z) - y) / len(z)
    return loss, grad


class OptimizerState:
    """First/second Adam moments per parameter plus the shared step counter."""

    def __init__(self, state):
        self.step = 0
        self.m = {name: np.zeros_like(p) for name, p in state.params.items()}
        self.v = {name: np.zeros_like(p) for name, p in state.params.items()}


def adam_step(state, grads, opt, config):
    """Bias-corrected Adam; embedding rows without a gradient entry are left
    bitwise untouched, moments included."""
    opt.step += 1
    t = opt.step
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr, eps = config.learning_rate, config.adam_epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t

    for name, g in grads.dense.items():
        m, v = opt.m[name], opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        state.params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

    ids, rows = grads.row_items("embedding")
    if ids.size:
        m, v = opt.m["embedding"], opt.v["embedding"]
        m[ids] = b1 * m[ids] + (1.0 - b1) * rows
        v[ids] = b2 * v[ids] + (1.0 - b2) * rows * rows
        state.params["embedding"][ids] -= lr * (m[ids] / c1) / (np.sqrt(v[ids] / c2) + eps)


@dataclass
class EpochReport:
    mean_loss: float
    batch_count: int


def make_batches(n, batch_size, rng):
    """Shuffled index batches; a short tail of < 2 is merged into the
    previous batch."""
    perm = rng.permutation(n)
    batches = [perm[lo:lo + batch_size] for lo in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def item_pool_of(split, user_fields):
    """Distinct item-side slot tuples present in a split, in first-seen order."""
    seen = set()
    pool = []
    for inst in split.instances:
        key = tuple(tuple(s) for s in inst.slots[user_fields:])
        if key not in seen:
            seen.add(key)
            pool.append([list(s) for s in inst.slots[user_fields:]])
    return pool


def _with_negatives(batch, item_pool, user_fields, negatives, rng):
    from .data import SparseInstance
    out = list(batch)
    labels = [inst.label for inst in batch]
    for inst in batch:
        for _ in range(negatives):
            item = item_pool[int(rng.integers(len(item_pool)))]
            out.append(SparseInstance(label=0,
                                      slots=[list(s) for s in inst.slots[:user_fields]]
                                      + [list(s) for s in item]))
            labels.append(0)
    return out, np.array(labels, dtype=np.float64)


def train_epoch(train_split, state, opt, config, epoch=0, item_pool=None):
    """One pass: per batch build the hypergraph, forward, BCE, backward, Adam."""
    if not train_split.instances:
        raise EmptyInputError("train_epoch: empty training split")
    config.validate()
    two_tower = state.config.head == "two_tower"
    if two_tower and item_pool is None:
        item_pool = item_pool_of(train_split, state.config.user_fields)
    rng = np.random.default_rng([config.shuffle_seed, epoch])
    batches = make_batches(len(train_split.instances), config.batch_size, rng)
    total = 0.0
    for idx in batches:
        batch = [train_split.instances[i] for i in idx]
        if two_tower:
            batch, labels = _with_negatives(batch, item_pool, state.config.user_fields,
                                            config.negative_samples, rng)
        else:
            labels = np.array([inst.label for inst in batch], dtype=np.float64)
        full = forward_pass(batch, state)
        loss, dlogits = bce_loss(full.logits, labels)
        grads = backward_pass(full, state, dlogits)
        adam_step(state, grads, opt, config)
        total += loss
    return EpochReport(mean_loss=total / len(batches), batch_count=len(batches))
