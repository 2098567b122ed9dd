"""The hypergraph-transformer embedding model and its prediction heads.

Each layer alternates two attention passes over the in-batch hypergraph:
edge-to-node (features into instances) then node-to-edge (instances back
into features).  Node representations start as the concatenation of
per-field slot means of embedding rows; the final edge matrix supplies the
per-feature representations consumed by the heads.

The backward pass is hand-written per operation against the retained
forward trace; `backward_pass` returns a GradientStore with dense entries
for every projection/head matrix and sparse row entries for the embedding
table (only rows of features present in the batch).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError
from .hypergraph import build_batch_hypergraph
from .numerics import GradientStore, relu

HEAD_KINDS = ("logistic", "mlp", "crossnet", "two_tower")


@dataclass
class ModelConfig:
    embed_dim: int = 16
    num_layers: int = 2
    num_fields: int = 4
    scale_scores: bool = False
    use_ffn: bool = False
    head: str = "logistic"
    use_hyperformer: bool = True
    user_fields: int = 2            # two_tower: leading fields form the user side
    mlp_hidden: tuple = (32, 16)
    tower_hidden: int = 32
    tower_out: int = 16
    ffn_hidden: int = 0             # 0 means embed_dim
    seed: int = 0

    def validate(self):
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.num_fields < 1:
            raise ConfigError(f"num_fields must be >= 1, got {self.num_fields}")
        if self.head not in HEAD_KINDS:
            raise ConfigError(f"head must be one of {HEAD_KINDS}, got {self.head!r}")
        if self.head == "two_tower" and not 1 <= self.user_fields < self.num_fields:
            raise ConfigError(f"user_fields must be in [1, num_fields), got {self.user_fields}")

    @property
    def ffn_width(self):
        return self.ffn_hidden if self.ffn_hidden else self.embed_dim

    @property
    def concat_dim(self):
        return self.num_fields * self.embed_dim


def param_layout(config, num_features):
    """Ordered (name, shape, init) parameter map; also the checkpoint order."""
    d = config.embed_dim
    m = config.num_fields
    h = config.ffn_width
    layout = [("embedding", (num_features, d), "glorot")]
    for l in range(config.num_layers):
        in_dim = m * d if l == 0 else d
        for side, q_in in (("edge", in_dim), ("node", d)):
            layout.append((f"layer{l}.{side}.wq", (q_in if side == "edge" else d, d), "glorot"))
            layout.append((f"layer{l}.{side}.wk", (d, d), "glorot"))
            layout.append((f"layer{l}.{side}.wv", (d, d), "glorot"))
            if config.use_ffn:
                layout.append((f"layer{l}.{side}.ffn_w1", (d, h), "glorot"))
                layout.append((f"layer{l}.{side}.ffn_b1", (h,), "zero"))
                layout.append((f"layer{l}.{side}.ffn_w2", (h, d), "glorot"))
                layout.append((f"layer{l}.{side}.ffn_b2", (d,), "zero"))
    D = m * d
    if config.head == "logistic":
        layout += [("head.w", (D,), "glorot"), ("head.b", (1,), "zero")]
    elif config.head == "mlp":
        h1, h2 = config.mlp_hidden
        layout += [("head.w1", (D, h1), "glorot"), ("head.b1", (h1,), "zero"),
                   ("head.w2", (h1, h2), "glorot"), ("head.b2", (h2,), "zero"),
                   ("head.w3", (h2,), "glorot"), ("head.b3", (1,), "zero")]
    elif config.head == "crossnet":
        layout += [("head.cross_w", (D, D), "glorot"), ("head.cross_b", (D,), "zero"),
                   ("head.w", (D,), "glorot"), ("head.b", (1,), "zero")]
    else:  # two_tower
        du = config.user_fields * d
        di = (m - config.user_fields) * d
        th, to = config.tower_hidden, config.tower_out
        for side, width in (("u", du), ("i", di)):
            layout += [(f"head.{side}_w1", (width, th), "glorot"),
                       (f"head.{side}_b1", (th,), "zero"),
                       (f"head.{side}_w2", (th, to), "glorot"),
                       (f"head.{side}_b2", (to,), "zero")]
    return layout


def _glorot(shape, rng):
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_in, fan_out = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelState:
    def __init__(self, config, num_features, params):
        self.config = config
        self.num_features = num_features
        self.params = params

    @property
    def embedding(self):
        return self.params["embedding"]

    def copy(self):
        return ModelState(self.config, self.num_features,
                          {k: v.copy() for k, v in self.params.items()})


def init_model(config, num_features, seed=None):
    """Glorot-uniform init for matrices, zeros for biases; seeded."""
    config.validate()
    if num_features < 1:
        raise ConfigError(f"num_features must be >= 1, got {num_features}")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape, kind in param_layout(config, num_features):
        params[name] = _glorot(shape, rng) if kind == "glorot" else np.zeros(shape)
    return ModelState(config, num_features, params)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

@dataclass
class SideCache:
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    weights: np.ndarray     # flat attention weights over the CSR entries
    agg: np.ndarray         # pre-relu aggregation
    act: np.ndarray
    a1: np.ndarray = None   # FFN hidden activation when use_ffn


@dataclass
class ForwardTrace:
    graph: object
    batch: list
    slot_locals: list            # per instance, per slot, array of local edge indices
    H: list = field(default_factory=list)   # H^0 .. H^L
    F: list = field(default_factory=list)   # F^0 .. F^L
    edge_caches: list = field(default_factory=list)
    node_caches: list = field(default_factory=list)

    @property
    def alphas(self):
        return [c.weights for c in self.edge_caches]

    @property
    def betas(self):
        return [c.weights for c in self.node_caches]


@dataclass
class FullTrace:
    trace: ForwardTrace
    E: np.ndarray                # instance embeddings, n x (m*d)
    head_cache: dict
    logits: np.ndarray


def _slot_locals(batch, graph):
    out = []
    for inst in batch:
        out.append([np.array([graph.local_edge(g) for g in slot], dtype=np.int64)
                    for slot in inst.slots])
    return out


def init_node_representations(slot_locals, F0, num_fields):
    """Concatenate per-field slot means of the edge matrix rows."""
    d = F0.shape[1]
    n = len(slot_locals)
    H0 = np.empty((n, num_fields * d))
    for i, slots in enumerate(slot_locals):
        if len(slots) != num_fields:
            raise DimensionError("init_node_representations", (len(slots),), (num_fields,))
        for s, loc in enumerate(slots):
            H0[i, s * d:(s + 1) * d] = F0[loc].mean(axis=0)
    return H0


def _attention_side(prefix, Qin, KVin, csr, params, config):
    d = config.embed_dim
    Q = Qin @ params[f"{prefix}.wq"]
    K = KVin @ params[f"{prefix}.wk"]
    V = KVin @ params[f"{prefix}.wv"]
    logits = kernels.gather_dot(Q, csr.seg, K, csr.idx)
    if config.scale_scores:
        logits = logits / math.sqrt(d)
    weights = kernels.seg_softmax(logits, csr.ptr)
    agg = kernels.weighted_seg_sum(weights, V, csr.idx, csr.ptr)
    act = relu(agg)
    cache = SideCache(Q=Q, K=K, V=V, weights=weights, agg=agg, act=act)
    if config.use_ffn:
        z1 = act @ params[f"{prefix}.ffn_w1"] + params[f"{prefix}.ffn_b1"]
        cache.a1 = relu(z1)
        out = cache.a1 @ params[f"{prefix}.ffn_w2"] + params[f"{prefix}.ffn_b2"]
    else:
        out = act
    return out, cache


def edge_to_node_attention(layer, Hprev, Fprev, graph, params, config):
    out, cache = _attention_side(f"layer{layer}.edge", Hprev, Fprev,
                                 graph.node_csr, params, config)
    return out, cache.weights, cache


def node_to_edge_attention(layer, Fprev, Hcur, graph, params, config):
    out, cache = _attention_side(f"layer{layer}.node", Fprev, Hcur,
                                 graph.edge_csr, params, config)
    return out, cache.weights, cache


def hyperformer_forward(batch, state):
    """Build the in-batch graph and run all layers, retaining intermediates."""
    config = state.config
    graph = build_batch_hypergraph(batch)
    F0 = state.embedding[graph.edge_ids]
    slot_locals = _slot_locals(batch, graph)
    trace = ForwardTrace(graph=graph, batch=list(batch), slot_locals=slot_locals)
    trace.F.append(F0)
    if not config.use_hyperformer:
        return trace
    H0 = init_node_representations(slot_locals, F0, config.num_fields)
    trace.H.append(H0)
    for l in range(config.num_layers):
        Hl, _, ecache = edge_to_node_attention(l, trace.H[-1], trace.F[-1],
                                               graph, state.params, config)
        Fl, _, ncache = node_to_edge_attention(l, trace.F[-1], Hl,
                                               graph, state.params, config)
        trace.H.append(Hl)
        trace.F.append(Fl)
        trace.edge_caches.append(ecache)
        trace.node_caches.append(ncache)
    return trace


def instance_embeddings(trace, config):
    """Per-instance concat of slot means over the final edge matrix."""
    Ffinal = trace.F[-1]
    d = config.embed_dim
    n = len(trace.slot_locals)
    E = np.empty((n, config.concat_dim))
    for i, slots in enumerate(trace.slot_locals):
        for s, loc in enumerate(slots):
            E[i, s * d:(s + 1) * d] = Ffinal[loc].mean(axis=0)
    return E


def instance_embedding(instance, trace, config):
    """Embedding row of one instance that was part of the traced batch."""
    for i, inst in enumerate(trace.batch):
        if inst is instance or (inst.label == instance.label and inst.slots == instance.slots):
            return instance_embeddings(trace, config)[i]
    raise ValueError("instance_embedding: instance was not part of the traced batch")


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------

def head_forward(E, params, config):
    kind = config.head
    cache = {}
    if kind == "logistic":
        logits = E @ params["head.w"] + params["head.b"][0]
    elif kind == "mlp":
        cache["h1"] = relu(E @ params["head.w1"] + params["head.b1"])
        cache["h2"] = relu(cache["h1"] @ params["head.w2"] + params["head.b2"])
        logits = cache["h2"] @ params["head.w3"] + params["head.b3"][0]
    elif kind == "crossnet":
        cache["u"] = E @ params["head.cross_w"] + params["head.cross_b"]
        cache["c"] = E * cache["u"] + E
        logits = cache["c"] @ params["head.w"] + params["head.b"][0]
    elif kind == "two_tower":
        du = config.user_fields * config.embed_dim
        Eu, Ei = E[:, :du], E[:, du:]
        cache["Eu"], cache["Ei"] = Eu, Ei
        cache["hu"] = relu(Eu @ params["head.u_w1"] + params["head.u_b1"])
        cache["tu"] = cache["hu"] @ params["head.u_w2"] + params["head.u_b2"]
        cache["hi"] = relu(Ei @ params["head.i_w1"] + params["head.i_b1"])
        cache["ti"] = cache["hi"] @ params["head.i_w2"] + params["head.i_b2"]
        logits = np.einsum("nd,nd->n", cache["tu"], cache["ti"])
    else:
        raise ConfigError(f"unknown head {kind!r}")
    return logits, cache


def head_backward(E, cache, params, config, dlogits, grads):
    kind = config.head
    if kind == "logistic":
        grads.add("head.w", E.T @ dlogits)
        grads.add("head.b", np.array([dlogits.sum()]))
        return np.outer(dlogits, params["head.w"])
    if kind == "mlp":
        h1, h2 = cache["h1"], cache["h2"]
        grads.add("head.w3", h2.T @ dlogits)
        grads.add("head.b3", np.array([dlogits.sum()]))
        dh2 = np.outer(dlogits, params["head.w3"]) * (h2 > 0)
        grads.add("head.w2", h1.T @ dh2)
        grads.add("head.b2", dh2.sum(axis=0))
        dh1 = dh2 @ params["head.w2"].T * (h1 > 0)
        grads.add("head.w1", E.T @ dh1)
        grads.add("head.b1", dh1.sum(axis=0))
        return dh1 @ params["head.w1"].T
    if kind == "crossnet":
        u, c = cache["u"], cache["c"]
        grads.add("head.w", c.T @ dlogits)
        grads.add("head.b", np.array([dlogits.sum()]))
        dc = np.outer(dlogits, params["head.w"])
        dE = dc * (u + 1.0)
        du = dc * E
        grads.add("head.cross_w", E.T @ du)
        grads.add("head.cross_b", du.sum(axis=0))
        return dE + du @ params["head.cross_w"].T
    # two_tower
    tu, ti, hu, hi = cache["tu"], cache["ti"], cache["hu"], cache["hi"]
    dtu = dlogits[:, None] * ti
    dti = dlogits[:, None] * tu
    dE = np.empty((E.shape[0], E.shape[1]))
    du = config.user_fields * config.embed_dim
    for side, Ex, hx, dtx, lo, hi_col in (("u", cache["Eu"], hu, dtu, 0, du),
                                          ("i", cache["Ei"], hi, dti, du, E.shape[1])):
        grads.add(f"head.{side}_w2", hx.T @ dtx)
        grads.add(f"head.{side}_b2", dtx.sum(axis=0))
        dhx = dtx @ params[f"head.{side}_w2"].T * (hx > 0)
        grads.add(f"head.{side}_w1", Ex.T @ dhx)
        grads.add(f"head.{side}_b1", dhx.sum(axis=0))
        dE[:, lo:hi_col] = dhx @ params[f"head.{side}_w1"].T
    return dE


def two_tower_score(user_vec, item_vec, params):
    """Score one (user, item) pair of tower inputs; dot of tower outputs."""
    tu = relu(user_vec @ params["head.u_w1"] + params["head.u_b1"]) @ params["head.u_w2"] \
        + params["head.u_b2"]
    ti = relu(item_vec @ params["head.i_w1"] + params["head.i_b1"]) @ params["head.i_w2"] \
        + params["head.i_b2"]
    if tu.shape != ti.shape:
        raise DimensionError("two_tower_score", tu.shape, ti.shape)
    return float(tu @ ti)


# ---------------------------------------------------------------------------
# full model forward / backward
# ---------------------------------------------------------------------------

def forward_pass(batch, state):
    trace = hyperformer_forward(batch, state)
    E = instance_embeddings(trace, state.config)
    logits, head_cache = head_forward(E, state.params, state.config)
    return FullTrace(trace=trace, E=E, head_cache=head_cache, logits=logits)


def _attention_side_backward(prefix, cache, Qin, KVin, csr, params, config, dOut, grads):
    d = config.embed_dim
    if config.use_ffn:
        grads.add(f"{prefix}.ffn_w2", cache.a1.T @ dOut)
        grads.add(f"{prefix}.ffn_b2", dOut.sum(axis=0))
        dz1 = dOut @ params[f"{prefix}.ffn_w2"].T * (cache.a1 > 0)
        grads.add(f"{prefix}.ffn_w1", cache.act.T @ dz1)
        grads.add(f"{prefix}.ffn_b1", dz1.sum(axis=0))
        dAct = dz1 @ params[f"{prefix}.ffn_w1"].T
    else:
        dAct = dOut
    dAgg = dAct * (cache.agg > 0)
    dWeights = kernels.gather_dot(dAgg, csr.seg, cache.V, csr.idx)
    dV = kernels.weighted_scatter_rows(cache.weights, dAgg, csr.seg, csr.idx, KVin.shape[0])
    dLogits = kernels.seg_softmax_grad(cache.weights, dWeights, csr.ptr)
    if config.scale_scores:
        dLogits = dLogits / math.sqrt(d)
    dQ = kernels.weighted_seg_sum(dLogits, cache.K, csr.idx, csr.ptr)
    dK = kernels.weighted_scatter_rows(dLogits, cache.Q, csr.seg, csr.idx, KVin.shape[0])
    grads.add(f"{prefix}.wq", Qin.T @ dQ)
    grads.add(f"{prefix}.wk", KVin.T @ dK)
    grads.add(f"{prefix}.wv", KVin.T @ dV)
    dQin = dQ @ params[f"{prefix}.wq"].T
    dKVin = dK @ params[f"{prefix}.wk"].T + dV @ params[f"{prefix}.wv"].T
    return dQin, dKVin


def _embeddings_backward(trace, config, dE):
    """dE (n x m*d) back to gradient on the final edge matrix rows."""
    d = config.embed_dim
    dF = np.zeros_like(trace.F[-1])
    for i, slots in enumerate(trace.slot_locals):
        for s, loc in enumerate(slots):
            np.add.at(dF, loc, dE[i, s * d:(s + 1) * d] / len(loc))
    return dF


def backward_pass(full, state, dlogits):
    """Adjoint of forward_pass; returns the populated GradientStore."""
    config = state.config
    trace = full.trace
    graph = trace.graph
    if len(dlogits) != len(trace.batch):
        raise DimensionError("backward_pass", (len(dlogits),), (len(trace.batch),))
    grads = GradientStore()
    dE = head_backward(full.E, full.head_cache, state.params, config, dlogits, grads)
    dF = _embeddings_backward(trace, config, dE)

    if config.use_hyperformer:
        dH = np.zeros_like(trace.H[-1])
        for l in range(config.num_layers - 1, -1, -1):
            # node-to-edge at layer l: query F^{l-1}, keys/values H^l
            dFq, dHl = _attention_side_backward(
                f"layer{l}.node", trace.node_caches[l], trace.F[l], trace.H[l + 1],
                graph.edge_csr, state.params, config, dF, grads)
            dH = dH + dHl
            # edge-to-node at layer l: query H^{l-1}, keys/values F^{l-1}
            dHprev, dFkv = _attention_side_backward(
                f"layer{l}.edge", trace.edge_caches[l], trace.H[l], trace.F[l],
                graph.node_csr, state.params, config, dH, grads)
            dF = dFq + dFkv
            dH = dHprev
        # dH is now dH^0: distribute slot means back into F^0 rows
        d = config.embed_dim
        for i, slots in enumerate(trace.slot_locals):
            for s, loc in enumerate(slots):
                np.add.at(dF, loc, dH[i, s * d:(s + 1) * d] / len(loc))

    grads.add_rows("embedding", graph.edge_ids, dF)
    return grads
