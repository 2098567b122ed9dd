"""End-to-end acceptance gate.

Each test covers one release criterion and prints a single PASS line on
success (pytest -s shows them).  The slow directional experiments live at
the bottom; the full module runs in a few minutes.
"""

import numpy as np
import pytest

from conftest import random_batch
from hyperformer.checkpoint import load_model, save_model
from hyperformer.data import (compute_frequency_buckets, parse_dataset,
                              serialize_dataset, split_dataset)
from hyperformer.hypergraph import build_batch_hypergraph, incidence_oracle
from hyperformer.metrics import (auc, ndcg_at_k, pairwise_auc, recall_at_k,
                                 sliced_eval)
from hyperformer.model import (HEAD_KINDS, ModelConfig, backward_pass, forward_pass,
                               hyperformer_forward, init_model)
from hyperformer.numerics import finite_difference_check
from hyperformer.evaluate import evaluate_ctr, evaluate_retrieval, score_instances
from hyperformer.synthetic import (RetrievalSpec, SyntheticSpec, generate_retrieval,
                                   generate_synthetic)
from hyperformer.train import (OptimizerState, TrainConfig, adam_step, bce_loss,
                               train_epoch)


def full_grads(batch, labels, state):
    full = forward_pass(batch, state)
    _, dlogits = bce_loss(full.logits, labels)
    grads = backward_pass(full, state, dlogits)
    out = {}
    for name, p in state.params.items():
        out[name] = grads.dense.get(name, np.zeros_like(p)).copy()
    if "embedding" in grads.rows:
        for gid, row in grads.rows["embedding"].items():
            out["embedding"][gid] += row
    return out


def train_model(train_split, mcfg, tcfg, num_features):
    state = init_model(mcfg, num_features)
    opt = OptimizerState(state)
    for epoch in range(tcfg.epochs):
        train_epoch(train_split, state, opt, tcfg, epoch=epoch)
    return state


def ctr_pair(seed, epochs=20):
    """Train matched full/ablation models on one planted-rule dataset."""
    ds = generate_synthetic(SyntheticSpec(seed=seed))
    train, _, test = split_dataset(ds, (0.8, 0.1, 0.1), seed=seed)
    tcfg = TrainConfig(batch_size=64, epochs=epochs, learning_rate=0.01,
                       shuffle_seed=seed)
    states = {}
    for use in (True, False):
        mcfg = ModelConfig(embed_dim=16, num_layers=2, num_fields=4,
                           head="logistic", use_hyperformer=use, seed=seed)
        states[use] = train_model(train, mcfg, tcfg, ds.vocabulary.num_features)
    return train, test, states[True], states[False]


def test_criterion_1_gradient_check():
    rng = np.random.default_rng(0)
    worst = 0.0
    for head in HEAD_KINDS:
        for layers in (1, 2):
            for scale in (False, True):
                for ffn in (False, True):
                    cfg = ModelConfig(embed_dim=4, num_layers=layers, num_fields=4,
                                      head=head, scale_scores=scale, use_ffn=ffn,
                                      user_fields=2, seed=7)
                    # differencing across a relu kink is an artifact of the
                    # probe point, not the gradient, so redraw on failure
                    for attempt in range(5):
                        state = init_model(cfg, 24)
                        # jitter zero-initialized biases off the relu kinks
                        for p in state.params.values():
                            p += rng.normal(scale=0.05, size=p.shape)
                        batch = random_batch(rng, n=4, num_fields=4, ids_per_field=6)
                        labels = rng.integers(0, 2, size=4).astype(np.float64)

                        def loss_fn(params):
                            full = forward_pass(batch, state)
                            return bce_loss(full.logits, labels)[0]

                        report = finite_difference_check(
                            loss_fn, state.params, full_grads(batch, labels, state),
                            epsilon=1e-5, tolerance=1e-4, samples_per_param=3, rng=rng)
                        if report.passed:
                            break
                    assert report.passed, (head, layers, scale, ffn, report.failures)
                    worst = max(worst, report.max_rel_error)
    print(f"PASS criterion 1: gradient check over 32 configs, "
          f"max relative error {worst:.2e} < 1e-4")


def test_criterion_2_attention_normalization():
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(1000):
        n = int(rng.integers(2, 12))
        cfg = ModelConfig(embed_dim=int(rng.integers(2, 8)),
                          num_layers=int(rng.integers(1, 3)), num_fields=3,
                          scale_scores=bool(rng.integers(2)),
                          use_ffn=bool(rng.integers(2)), seed=trial)
        state = init_model(cfg, 24)
        trace = hyperformer_forward(random_batch(rng, n=n), state)
        for l in range(cfg.num_layers):
            a = np.add.reduceat(trace.alphas[l], trace.graph.node_csr.ptr[:-1])
            b = np.add.reduceat(trace.betas[l], trace.graph.edge_csr.ptr[:-1])
            worst = max(worst, np.abs(a - 1.0).max(), np.abs(b - 1.0).max())
    assert worst < 1e-12
    print(f"PASS criterion 2: attention rows sum to 1 over 1000 batches, "
          f"max deviation {worst:.2e} < 1e-12")


def test_criterion_3_hypergraph_oracle():
    rng = np.random.default_rng(2)
    for trial in range(1000):
        n = int(rng.integers(1, 33))
        fields = int(rng.integers(1, 6))
        per_field = int(rng.integers(2, 100 // fields + 1))
        batch = random_batch(rng, n=n, num_fields=fields, ids_per_field=per_field)
        g = build_batch_hypergraph(batch)
        assert g.incidence_pairs() == incidence_oracle(batch)
        assert sum(map(len, g.node_incidence)) == sum(map(len, g.edge_incidence))
    print("PASS criterion 3: hypergraph builder matches oracle on 1000 batches")


def test_criterion_4_permutation_equivariance():
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 16))
        cfg = ModelConfig(embed_dim=4, num_layers=2, num_fields=3,
                          use_ffn=bool(trial % 2), seed=trial)
        state = init_model(cfg, 24)
        batch = random_batch(rng, n=n)
        perm = rng.permutation(n)
        t1 = hyperformer_forward(batch, state)
        t2 = hyperformer_forward([batch[i] for i in perm], state)
        for l in range(1, 3):
            denom = np.maximum(np.abs(t1.H[l][perm]), 1e-30)
            worst = max(worst, (np.abs(t2.H[l] - t1.H[l][perm]) / denom).max())
        rows1 = {int(g): t1.F[-1][j] for j, g in enumerate(t1.graph.edge_ids)}
        for j, g in enumerate(t2.graph.edge_ids):
            ref = rows1[int(g)]
            denom = np.maximum(np.abs(ref), 1e-30)
            worst = max(worst, (np.abs(t2.F[-1][j] - ref) / denom).max())
    assert worst < 1e-10
    print(f"PASS criterion 4: permutation equivariance over 100 batches, "
          f"max relative deviation {worst:.2e} < 1e-10")


def test_criterion_5_sparse_update_contract():
    rng = np.random.default_rng(4)
    cfg = ModelConfig(embed_dim=4, num_layers=2, num_fields=3, seed=5)
    state = init_model(cfg, 24)
    opt = OptimizerState(state)
    batch = random_batch(rng, n=6)
    labels = rng.integers(0, 2, size=6).astype(np.float64)
    present = sorted({g for inst in batch for slot in inst.slots for g in slot})
    absent = sorted(set(range(24)) - set(present))
    assert absent, "test needs at least one absent feature"
    before = state.embedding.copy()
    full = forward_pass(batch, state)
    _, dlogits = bce_loss(full.logits, labels)
    adam_step(state, backward_pass(full, state, dlogits), opt, TrainConfig())
    assert np.array_equal(before[absent], state.embedding[absent])
    assert np.array_equal(opt.m["embedding"][absent], np.zeros((len(absent), 4)))
    assert np.array_equal(opt.v["embedding"][absent], np.zeros((len(absent), 4)))
    assert not np.array_equal(before[present], state.embedding[present])
    print(f"PASS criterion 5: {len(absent)} absent embedding rows bitwise "
          f"unchanged after a training step, moments included")


def test_criterion_6_metric_oracles():
    rng = np.random.default_rng(5)
    for case in range(200):
        scores = rng.choice(np.linspace(0, 1, 9), size=50)
        labels = rng.integers(0, 2, size=50)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        assert auc(scores, labels) == pairwise_auc(scores, labels)
    assert ndcg_at_k(["a", "b"], {"a"}, 10) == 1.0
    assert abs(ndcg_at_k(["x", "a"], {"a"}, 10) - 1.0 / np.log2(3.0)) < 1e-12
    want = (1.0 + 0.5) / (1.0 + 1.0 / np.log2(3.0))
    assert abs(ndcg_at_k(["a", "x", "b"], {"a", "b"}, 10) - want) < 1e-12
    assert recall_at_k(["a", "x"], {"a", "b"}, 2) == 0.5
    assert recall_at_k(["a", "b", "c"], {"a", "b", "c"}, 2) == 2.0 / 3.0
    print("PASS criterion 6: rank-based AUC equals brute force on 200 cases; "
          "NDCG@K and Recall@K match closed forms")


def test_criterion_7_learning_signal():
    _, test, full_state, ablation_state = ctr_pair(seed=0)
    full_auc, _ = evaluate_ctr(test, full_state, 64)
    abl_auc, _ = evaluate_ctr(test, ablation_state, 64)
    assert full_auc >= 0.80
    assert full_auc > abl_auc
    print(f"PASS criterion 7: test AUC {full_auc:.4f} >= 0.80 and exceeds "
          f"ablation {abl_auc:.4f}")


def test_criterion_8_tail_slice_direction():
    rare_gain, freq_gain = [], []
    for seed in range(5):
        train, test, full_state, ablation_state = ctr_pair(seed=seed)
        buckets = compute_frequency_buckets(train, 5)
        rows = {}
        for name, state in (("full", full_state), ("abl", ablation_state)):
            report = sliced_eval(test, buckets,
                                 lambda insts, s=state: score_instances(insts, s, 64))
            rows[name] = report.rows
        rare_gain.append(rows["abl"][0].logloss - rows["full"][0].logloss)
        freq_gain.append(rows["abl"][4].logloss - rows["full"][4].logloss)
    rare, freq = float(np.mean(rare_gain)), float(np.mean(freq_gain))
    assert rare >= 0.0
    assert rare >= freq
    print(f"PASS criterion 8: mean rarest-bucket LogLoss gain {rare:.4f} >= 0 "
          f"and >= most-frequent gain {freq:.4f} over 5 seeds")


def test_criterion_9_retrieval_smoke():
    recalls = []
    for seed in range(3):
        ds = generate_retrieval(RetrievalSpec(seed=seed))
        train, _, test = split_dataset(ds, (0.7, 0.1, 0.2), seed=seed)
        mcfg = ModelConfig(embed_dim=16, num_layers=2, num_fields=4,
                           head="two_tower", user_fields=2, seed=seed)
        tcfg = TrainConfig(batch_size=64, epochs=5, learning_rate=0.005,
                           shuffle_seed=seed)
        state = train_model(train, mcfg, tcfg, ds.vocabulary.num_features)
        _, recall, users = evaluate_retrieval(test, train, state, max_users=100)
        assert users > 0
        recalls.append(recall)
    mean_recall = float(np.mean(recalls))
    baseline = 10.0 / 300.0
    assert mean_recall >= 3.0 * baseline
    print(f"PASS criterion 9: mean Recall@10 {mean_recall:.4f} >= 3x random "
          f"baseline {baseline:.4f} over 3 seeds")


def test_criterion_10_round_trips(tmp_path):
    ds = generate_synthetic(SyntheticSpec(num_instances=200, seed=6))
    p = tmp_path / "a.txt"
    serialize_dataset(ds, p)
    ds2 = parse_dataset(p, vocabulary=ds.vocabulary, mode="apply")
    q = tmp_path / "b.txt"
    serialize_dataset(ds2, q)
    assert p.read_text() == q.read_text()
    assert [(i.label, i.slots) for i in ds.instances] == \
           [(i.label, i.slots) for i in ds2.instances]

    cfg = ModelConfig(embed_dim=8, num_layers=2, num_fields=4, seed=6)
    state = init_model(cfg, ds.vocabulary.num_features)
    ckpt = tmp_path / "m.ckpt"
    save_model(state, ckpt)
    loaded = load_model(ckpt)
    a1, l1 = evaluate_ctr(ds, state, 64)
    a2, l2 = evaluate_ctr(ds, loaded, 64)
    assert a1 == a2 and l1 == l2  # 0 ULP
    print("PASS criterion 10: dataset and checkpoint round-trips are exact; "
          "reloaded metrics identical to 0 ULP")
