"""Hypergraph-transformer embeddings for sparse categorical features."""

from .data import (Dataset, FeatureVocabulary, FrequencyBuckets, SparseInstance,
                   build_vocabulary, compute_frequency_buckets, parse_dataset,
                   serialize_dataset, split_dataset)
from .hypergraph import FeatureHypergraph, build_batch_hypergraph, incidence_oracle
from .model import (ModelConfig, ModelState, ForwardTrace, backward_pass,
                    forward_pass, hyperformer_forward, init_model,
                    instance_embedding, two_tower_score)
from .train import OptimizerState, TrainConfig, adam_step, bce_loss, train_epoch
from .metrics import auc, logloss, ndcg_at_k, recall_at_k, sliced_eval

__all__ = [
    "Dataset", "FeatureVocabulary", "FrequencyBuckets", "SparseInstance",
    "build_vocabulary", "compute_frequency_buckets", "parse_dataset",
    "serialize_dataset", "split_dataset",
    "FeatureHypergraph", "build_batch_hypergraph", "incidence_oracle",
    "ModelConfig", "ModelState", "ForwardTrace", "backward_pass", "forward_pass",
    "hyperformer_forward", "init_model", "instance_embedding", "two_tower_score",
    "OptimizerState", "TrainConfig", "adam_step", "bce_loss", "train_epoch",
    "auc", "logloss", "ndcg_at_k", "recall_at_k", "sliced_eval",
]
