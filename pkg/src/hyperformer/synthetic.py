"""Synthetic dataset generators with planted structure.

Two generators:

* `generate_synthetic` — CTR-style instances.  Each instance has a latent
  binary group; every field's vocabulary is split into two blocks and values
  are drawn from the instance's group block (with some leakage), power-law
  within the block so each block has head and tail values.  The label is
  1 with probability `p_positive` when the instance carries any value of the
  designated positive set (field 0's positive block), else `p_negative`.
  The cross-field correlation is what gives in-batch message passing
  something to exploit for tail features.

* `generate_retrieval` — user/item interaction pairs with a planted
  group affinity, for the two-tower pipeline.  Fields are
  (u_id, u_attr, i_id, i_attr); the first two are the user side.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset, SparseInstance, build_vocabulary


@dataclass
class SyntheticSpec:
    num_fields: int = 4
    values_per_field: int = 50
    num_instances: int = 2000
    p_positive: float = 0.9
    p_negative: float = 0.1
    power_exponent: float = 1.5
    block_correlation: float = 0.8   # prob a non-label field draws from its group block
    seed: int = 0

    def validate(self):
        if self.num_fields < 1 or self.values_per_field < 2 or self.num_instances < 1:
            raise ValueError(f"SyntheticSpec: non-positive sizes in {self}")
        for name in ("p_positive", "p_negative", "block_correlation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"SyntheticSpec.{name} must be in [0,1], got {v}")


def power_law_probs(count, exponent):
    """Zipf-style probabilities over `count` ranks."""
    p = (1.0 + np.arange(count)) ** (-float(exponent))
    return p / p.sum()


def positive_value_names(spec):
    """Raw value strings of the designated positive set (field 0, even ranks)."""
    return {f"v{j}" for j in range(0, spec.values_per_field, 2)}


def generate_synthetic(spec):
    """Planted-rule CTR dataset; deterministic given spec.seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    half = power_law_probs((spec.values_per_field + 1) // 2, spec.power_exponent)
    other = power_law_probs(spec.values_per_field // 2, spec.power_exponent)
    # block 0 = even ranks (positive block), block 1 = odd ranks
    blocks = (np.arange(0, spec.values_per_field, 2),
              np.arange(1, spec.values_per_field, 2))
    block_probs = (half, other)

    positive_set = positive_value_names(spec)
    records, labels = [], []
    for _ in range(spec.num_instances):
        group = int(rng.integers(2))
        record = {}
        for f in range(spec.num_fields):
            if f == 0 or rng.random() < spec.block_correlation:
                b = group
            else:
                b = 1 - group
            v = int(rng.choice(blocks[b], p=block_probs[b]))
            record[f"f{f}"] = [f"v{v}"]
        carries = any(v in positive_set for v in record["f0"])
        p = spec.p_positive if carries else spec.p_negative
        labels.append(int(rng.random() < p))
        records.append(record)

    schema = [f"f{f}" for f in range(spec.num_fields)]
    vocab = build_vocabulary(records, schema)
    instances = [SparseInstance(label=lab, slots=vocab.encode_record(rec))
                 for lab, rec in zip(labels, records)]
    return Dataset(vocabulary=vocab, instances=instances)


@dataclass
class RetrievalSpec:
    num_users: int = 500
    num_items: int = 300
    num_groups: int = 10
    attr_values: int = 10
    interactions_per_user: int = 10
    affinity: float = 0.95           # prob an interaction stays within the user's group
    attr_fidelity: float = 0.9       # prob the attr value reveals the group
    seed: int = 0

    def validate(self):
        if min(self.num_users, self.num_items, self.num_groups,
               self.attr_values, self.interactions_per_user) < 1:
            raise ValueError(f"RetrievalSpec: non-positive sizes in {self}")
        if not 0.0 <= self.affinity <= 1.0 or not 0.0 <= self.attr_fidelity <= 1.0:
            raise ValueError("RetrievalSpec: affinity/attr_fidelity must be in [0,1]")


USER_FIELDS = 2  # u_id, u_attr come first; i_id, i_attr follow


def generate_retrieval(spec):
    """Positive (user, item) pairs with planted group affinity."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    user_group = rng.integers(spec.num_groups, size=spec.num_users)
    item_group = rng.integers(spec.num_groups, size=spec.num_items)

    def attr_of(group):
        if rng.random() < spec.attr_fidelity:
            return int(group) % spec.attr_values
        return int(rng.integers(spec.attr_values))

    user_attr = [attr_of(g) for g in user_group]
    item_attr = [attr_of(g) for g in item_group]
    items_by_group = [np.flatnonzero(item_group == g) for g in range(spec.num_groups)]

    records, labels = [], []
    for u in range(spec.num_users):
        pool = items_by_group[user_group[u]]
        for _ in range(spec.interactions_per_user):
            if pool.size and rng.random() < spec.affinity:
                i = int(rng.choice(pool))
            else:
                i = int(rng.integers(spec.num_items))
            records.append({"u_id": [f"u{u}"], "u_attr": [f"a{user_attr[u]}"],
                            "i_id": [f"i{i}"], "i_attr": [f"b{item_attr[i]}"]})
            labels.append(1)

    schema = ["u_id", "u_attr", "i_id", "i_attr"]
    vocab = build_vocabulary(records, schema)
    instances = [SparseInstance(label=lab, slots=vocab.encode_record(rec))
                 for lab, rec in zip(labels, records)]
    return Dataset(vocabulary=vocab, instances=instances)
