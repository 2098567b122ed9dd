"""Command-line entry point.

Commands: synth, train, eval, slice.  Configuration is a flat key=value
text file (# comments allowed); a handful of flags override config keys.
See README.md for the key reference.
"""

import argparse
import sys
import time

import numpy as np

from . import checkpoint as ckpt
from .data import (compute_frequency_buckets, count_frequencies, parse_dataset,
                   serialize_dataset, split_dataset)
from .errors import ConfigError, HyperFormerError
from .evaluate import evaluate_ctr, evaluate_retrieval, score_instances
from .metrics import sliced_eval
from .model import HEAD_KINDS, ModelConfig, init_model
from .synthetic import (RetrievalSpec, SyntheticSpec, USER_FIELDS,
                        generate_retrieval, generate_synthetic)
from .train import OptimizerState, TrainConfig, train_epoch


DEFAULTS = {
    "mode": "ctr",
    "data": "",
    "out": "",
    "log": "",
    "checkpoint": "",
    "seed": "0",
    "train_ratio": "", "val_ratio": "", "test_ratio": "",
    "buckets": "0",
    "overlapping_slices": "false",
    "eval_split": "test",
    # model
    "embed_dim": "16", "layers": "2", "head": "", "scale_scores": "false",
    "use_ffn": "false", "use_hyperformer": "true", "user_fields": str(USER_FIELDS),
    # training
    "batch_size": "64", "epochs": "5", "learning_rate": "0.01",
    "negative_samples": "4", "eval_users": "0",
    # synth (ctr)
    "synth_kind": "", "instances": "2000", "fields": "4", "values_per_field": "50",
    "p_positive": "0.9", "p_negative": "0.1", "power_exponent": "1.5",
    "block_correlation": "0.8",
    # synth (retrieval)
    "users": "500", "items": "300", "groups": "10", "attr_values": "10",
    "interactions_per_user": "10", "affinity": "0.95", "attr_fidelity": "0.9",
}


def parse_config_file(path):
    cfg = dict(DEFAULTS)
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_number}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{line_number}: unknown config key {key!r}")
            cfg[key] = value
    return cfg


def _bool(cfg, key):
    v = cfg[key].lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {cfg[key]!r}")


def _int(cfg, key):
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}") from None


def _float(cfg, key):
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from None


def _mode(cfg):
    mode = cfg["mode"]
    if mode not in ("ctr", "retrieval"):
        raise ConfigError(f"mode: expected ctr or retrieval, got {mode!r}")
    return mode


def _ratios(cfg, mode):
    defaults = (0.8, 0.1, 0.1) if mode == "ctr" else (0.7, 0.1, 0.2)
    out = []
    for key, dflt in zip(("train_ratio", "val_ratio", "test_ratio"), defaults):
        out.append(_float(cfg, key) if cfg[key] else dflt)
    return tuple(out)


def _model_config(cfg, mode, num_fields):
    head = cfg["head"] or ("two_tower" if mode == "retrieval" else "logistic")
    if head not in HEAD_KINDS:
        raise ConfigError(f"head: expected one of {HEAD_KINDS}, got {head!r}")
    return ModelConfig(embed_dim=_int(cfg, "embed_dim"), num_layers=_int(cfg, "layers"),
                       num_fields=num_fields, scale_scores=_bool(cfg, "scale_scores"),
                       use_ffn=_bool(cfg, "use_ffn"), head=head,
                       use_hyperformer=_bool(cfg, "use_hyperformer"),
                       user_fields=_int(cfg, "user_fields"), seed=_int(cfg, "seed"))


def _train_config(cfg):
    return TrainConfig(batch_size=_int(cfg, "batch_size"), epochs=_int(cfg, "epochs"),
                       learning_rate=_float(cfg, "learning_rate"),
                       shuffle_seed=_int(cfg, "seed"),
                       negative_samples=_int(cfg, "negative_samples"))


def _require(cfg, key, what):
    if not cfg[key]:
        raise ConfigError(f"{key}: required for {what}")
    return cfg[key]


def load_splits(cfg, mode):
    """Parse, split, and recount training frequencies into the vocabulary."""
    path = _require(cfg, "data", "this command")
    dataset = parse_dataset(path, mode="build")
    train, val, test = split_dataset(dataset, _ratios(cfg, mode), _int(cfg, "seed"))
    dataset.vocabulary.frequency = count_frequencies(train, dataset.vocabulary.num_features)
    return dataset, train, val, test


def cmd_synth(cfg):
    mode = _mode(cfg)
    kind = cfg["synth_kind"] or mode
    out = _require(cfg, "out", "synth")
    seed = _int(cfg, "seed")
    if kind == "ctr":
        spec = SyntheticSpec(num_fields=_int(cfg, "fields"),
                             values_per_field=_int(cfg, "values_per_field"),
                             num_instances=_int(cfg, "instances"),
                             p_positive=_float(cfg, "p_positive"),
                             p_negative=_float(cfg, "p_negative"),
                             power_exponent=_float(cfg, "power_exponent"),
                             block_correlation=_float(cfg, "block_correlation"),
                             seed=seed)
        dataset = generate_synthetic(spec)
    elif kind == "retrieval":
        spec = RetrievalSpec(num_users=_int(cfg, "users"), num_items=_int(cfg, "items"),
                             num_groups=_int(cfg, "groups"),
                             attr_values=_int(cfg, "attr_values"),
                             interactions_per_user=_int(cfg, "interactions_per_user"),
                             affinity=_float(cfg, "affinity"),
                             attr_fidelity=_float(cfg, "attr_fidelity"), seed=seed)
        dataset = generate_retrieval(spec)
    else:
        raise ConfigError(f"synth_kind: expected ctr or retrieval, got {kind!r}")
    serialize_dataset(dataset, out)
    with open(out + ".meta", "w", encoding="utf-8") as fh:
        fh.write(f"kind={kind}\nseed={seed}\nspec={spec}\n")
    print(f"wrote {len(dataset.instances)} instances to {out}")
    return 0


def cmd_train(cfg):
    mode = _mode(cfg)
    out = _require(cfg, "out", "train")
    _, train, val, _ = load_splits(cfg, mode)
    vocab = train.vocabulary
    mcfg = _model_config(cfg, mode, vocab.num_fields)
    mcfg.validate()
    tcfg = _train_config(cfg)
    tcfg.validate()
    state = init_model(mcfg, vocab.num_features)
    opt = OptimizerState(state)
    log_fh = open(cfg["log"], "w", encoding="utf-8") if cfg["log"] else sys.stdout
    eval_users = _int(cfg, "eval_users") or 50
    try:
        for epoch in range(tcfg.epochs):
            t0 = time.time()
            report = train_epoch(train, state, opt, tcfg, epoch=epoch)
            if mode == "ctr":
                try:
                    v1, v2 = evaluate_ctr(val, state, tcfg.batch_size)
                except HyperFormerError:
                    v1, v2 = float("nan"), float("nan")
            else:
                v1, v2, _ = evaluate_retrieval(val, train, state, max_users=eval_users)
            log_fh.write(f"{epoch}\t{report.mean_loss:.6f}\t{v1:.6f}\t{v2:.6f}"
                         f"\t{time.time() - t0:.3f}\n")
            log_fh.flush()
    finally:
        if log_fh is not sys.stdout:
            log_fh.close()
    ckpt.save_model(state, out)
    print(f"checkpoint written to {out}")
    return 0


def _load_checkpoint_for(cfg, vocab):
    path = _require(cfg, "checkpoint", "eval/slice")
    header = ckpt.read_header(path)
    if header["num_features"] != vocab.num_features or header["num_fields"] != vocab.num_fields:
        raise ConfigError(
            f"checkpoint dimensions (N={header['num_features']}, m={header['num_fields']}) "
            f"do not match dataset (N={vocab.num_features}, m={vocab.num_fields})")
    return ckpt.load_model(path)


def cmd_eval(cfg):
    mode = _mode(cfg)
    _, train, val, test = load_splits(cfg, mode)
    if cfg["eval_split"] not in ("val", "test"):
        raise ConfigError(f"eval_split: expected val or test, got {cfg['eval_split']!r}")
    if cfg["eval_split"] == "val":
        test = val
    state = _load_checkpoint_for(cfg, train.vocabulary)
    if mode == "ctr":
        a, ll = evaluate_ctr(test, state, _int(cfg, "batch_size"))
        print(f"AUC\t{a:.6f}")
        print(f"LogLoss\t{ll:.6f}")
    else:
        max_users = _int(cfg, "eval_users") or None
        ndcg, recall, users = evaluate_retrieval(test, train, state, max_users=max_users)
        print(f"NDCG@10\t{ndcg:.6f}")
        print(f"Recall@10\t{recall:.6f}")
        print(f"users\t{users}")
    if mode == "ctr" and _int(cfg, "buckets"):
        _write_sliced(cfg, train, test, state)
    return 0


def _write_sliced(cfg, train, test, state):
    buckets = compute_frequency_buckets(train, _int(cfg, "buckets"))
    report = sliced_eval(test, buckets,
                         lambda insts: score_instances(insts, state),
                         overlapping=_bool(cfg, "overlapping_slices"))
    text = report.to_text()
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"sliced report written to {cfg['out']}")
    else:
        sys.stdout.write(text)


def cmd_slice(cfg):
    mode = _mode(cfg)
    if mode != "ctr":
        raise ConfigError("mode: slice is only defined for ctr")
    if not _int(cfg, "buckets"):
        raise ConfigError("buckets: required for slice")
    _, train, _, test = load_splits(cfg, mode)
    state = _load_checkpoint_for(cfg, train.vocabulary)
    _write_sliced(cfg, train, test, state)
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "slice": cmd_slice}


def build_parser():
    parser = argparse.ArgumentParser(prog="hyperformer")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--checkpoint")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--no-hyperformer", action="store_true")
    parser.add_argument("--buckets", type=int)
    parser.add_argument("--mode", choices=["ctr", "retrieval"])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config_file(args.config)
        if args.checkpoint is not None:
            cfg["checkpoint"] = args.checkpoint
        if args.seed is not None:
            cfg["seed"] = str(args.seed)
        if args.no_hyperformer:
            cfg["use_hyperformer"] = "false"
        if args.buckets is not None:
            cfg["buckets"] = str(args.buckets)
        if args.mode is not None:
            cfg["mode"] = args.mode
        return COMMANDS[args.command](cfg)
    except (HyperFormerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())
