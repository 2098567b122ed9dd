"""Ranking and classification metrics, plus the frequency-sliced report."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, HyperFormerError

LOGLOSS_CLIP = 1e-15


def auc(scores, labels):
    """Probability a random positive outranks a random negative; ties 0.5.

    Computed from average ranks (Mann-Whitney U), which is exactly the
    pairwise count with half credit for ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise HyperFormerError("AUC undefined: labels contain a single class")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    ranks[order] = np.arange(1, len(scores) + 1)
    # average ranks within tie groups
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pairwise_auc(scores, labels):
    """O(P*N) brute-force oracle for `auc`."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise HyperFormerError("AUC undefined: labels contain a single class")
    wins = 0.0
    for p in pos:
        wins += (p > neg).sum() + 0.5 * (p == neg).sum()
    return wins / (len(pos) * len(neg))


def logloss(probabilities, labels):
    p = np.clip(np.asarray(probabilities, dtype=np.float64), LOGLOSS_CLIP, 1.0 - LOGLOSS_CLIP)
    y = np.asarray(labels, dtype=np.float64)
    if len(p) != len(y):
        raise ValueError(f"logloss: length mismatch {len(p)} vs {len(y)}")
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def ndcg_at_k(ranked_item_ids, relevant_set, k):
    """Binary-gain NDCG with 1/log2(rank+1) discounts."""
    if k < 1:
        raise ValueError(f"ndcg_at_k: K must be >= 1, got {k}")
    relevant = set(relevant_set)
    if not relevant:
        raise EmptyInputError("ndcg_at_k: empty relevant set")
    dcg = 0.0
    for rank, item in enumerate(ranked_item_ids[:k], start=1):
        if item in relevant:
            dcg += 1.0 / np.log2(rank + 1)
    ideal = sum(1.0 / np.log2(r + 1) for r in range(1, min(k, len(relevant)) + 1))
    return dcg / ideal


def recall_at_k(ranked_item_ids, relevant_set, k):
    if k < 1:
        raise ValueError(f"recall_at_k: K must be >= 1, got {k}")
    relevant = set(relevant_set)
    if not relevant:
        raise EmptyInputError("recall_at_k: empty relevant set")
    hits = sum(1 for item in ranked_item_ids[:k] if item in relevant)
    return hits / len(relevant)


@dataclass
class BucketRow:
    bucket: object           # int bucket index or "overall"
    min_freq: int
    max_freq: int
    count: int
    auc: float               # nan when undefined
    logloss: float


@dataclass
class SlicedReport:
    rows: list

    def to_text(self):
        lines = ["bucket\tminFreq\tmaxFreq\tcount\tauc\tlogloss"]
        for r in self.rows:
            auc_s = "NA" if np.isnan(r.auc) else f"{r.auc:.6f}"
            lines.append(f"{r.bucket}\t{r.min_freq}\t{r.max_freq}\t{r.count}"
                         f"\t{auc_s}\t{r.logloss:.6f}")
        return "\n".join(lines) + "\n"


def _metrics_row(bucket, bounds, probs, labels):
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    try:
        a = auc(probs, labels)
    except HyperFormerError:
        a = float("nan")
    return BucketRow(bucket=bucket, min_freq=bounds[0], max_freq=bounds[1],
                     count=len(labels), auc=a, logloss=logloss(probs, labels))


def sliced_eval(test_split, buckets, score_fn, overlapping=False):
    """Per-frequency-bucket AUC/LogLoss over a test split.

    Default mode assigns each instance to the bucket of its rarest training
    feature (a partition).  With overlapping=True, bucket b instead collects
    every instance containing at least one bucket-b feature, so counts may
    overlap; the overall row is always over all instances once.
    """
    if not test_split.instances:
        raise EmptyInputError("sliced_eval: empty test split")
    probs = np.asarray(score_fn(test_split.instances), dtype=np.float64)
    labels = np.array([inst.label for inst in test_split.instances])
    rows = []
    for b in range(buckets.bucket_count):
        if overlapping:
            mask = np.array([any(buckets.assignment[g] == b for g in inst.all_ids())
                             for inst in test_split.instances])
        else:
            mask = np.array([buckets.bucket_of_instance(inst) == b
                             for inst in test_split.instances])
        bounds = buckets.boundaries[b]
        if mask.sum() == 0:
            rows.append(BucketRow(bucket=b, min_freq=bounds[0], max_freq=bounds[1],
                                  count=0, auc=float("nan"), logloss=float("nan")))
        else:
            rows.append(_metrics_row(b, bounds, probs[mask], labels[mask]))
    overall_bounds = (int(buckets.frequency[buckets.frequency > 0].min()),
                      int(buckets.frequency.max()))
    rows.append(_metrics_row("overall", overall_bounds, probs, labels))
    return SlicedReport(rows=rows)
