"""Batched scoring of trained models plus task-level evaluation.

Scoring runs forward passes over consecutive batches, so each test batch
gets its own in-batch hypergraph: tail features borrow context from their
batch neighbours exactly as during training.
"""

import numpy as np

from .data import SparseInstance
from .metrics import auc, logloss, ndcg_at_k, recall_at_k
from .model import forward_pass
from .train import item_pool_of, sigmoid


def score_instances(instances, state, batch_size=256):
    """Click probabilities (or raw tower dot products) in input order."""
    probs = np.empty(len(instances))
    for lo in range(0, len(instances), batch_size):
        batch = instances[lo:lo + batch_size]
        full = forward_pass(batch, state)
        probs[lo:lo + len(batch)] = sigmoid(full.logits)
    return probs


def evaluate_ctr(split, state, batch_size=256):
    probs = score_instances(split.instances, state, batch_size)
    labels = np.array([inst.label for inst in split.instances])
    return auc(probs, labels), logloss(probs, labels)


def _user_key(inst, user_fields):
    return tuple(tuple(s) for s in inst.slots[:user_fields])


def _item_key(inst, user_fields):
    return tuple(tuple(s) for s in inst.slots[user_fields:])


def evaluate_retrieval(test_split, train_split, state, k=10, max_users=None):
    """Full-ranking NDCG@k / Recall@k: every test user's positives are ranked
    against the whole item catalogue (train items plus unseen test items)."""
    uf = state.config.user_fields
    catalog = item_pool_of(train_split, uf)
    known = {tuple(tuple(s) for s in item) for item in catalog}
    for inst in test_split.instances:
        key = _item_key(inst, uf)
        if key not in known:
            known.add(key)
            catalog.append([list(s) for s in inst.slots[uf:]])
    catalog_keys = [tuple(tuple(s) for s in item) for item in catalog]

    relevant = {}
    user_slots = {}
    user_order = []
    for inst in test_split.instances:
        if inst.label != 1:
            continue
        ukey = _user_key(inst, uf)
        if ukey not in relevant:
            relevant[ukey] = set()
            user_slots[ukey] = [list(s) for s in inst.slots[:uf]]
            user_order.append(ukey)
        relevant[ukey].add(_item_key(inst, uf))

    if max_users is not None:
        user_order = user_order[:max_users]

    ndcgs, recalls = [], []
    for ukey in user_order:
        batch = [SparseInstance(label=1, slots=[list(s) for s in user_slots[ukey]]
                                + [list(s) for s in item])
                 for item in catalog]
        full = forward_pass(batch, state)
        ranked = [catalog_keys[i] for i in np.argsort(-full.logits, kind="stable")]
        ndcgs.append(ndcg_at_k(ranked, relevant[ukey], k))
        recalls.append(recall_at_k(ranked, relevant[ukey], k))
    return float(np.mean(ndcgs)), float(np.mean(recalls)), len(user_order)
