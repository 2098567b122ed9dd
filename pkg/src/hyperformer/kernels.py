"""Ragged-segment kernels for attention over incidence lists.

An incidence structure (node -> incident edges, or edge -> incident nodes)
is stored in CSR form: a flat member array `idx` of length nnz and an
offset array `ptr` of length S+1, segment s owning idx[ptr[s]:ptr[s+1]].
`seg` is the precomputed segment id of each flat entry.

Five primitives cover the forward and backward passes of both attention
directions:

    seg_softmax(x, ptr)                      per-segment masked softmax
    seg_softmax_grad(w, dw, ptr)             its adjoint
    gather_dot(A, seg, B, idx)               out[t] = A[seg[t]] . B[idx[t]]
    weighted_seg_sum(w, B, idx, ptr)         out[s] = sum_t w[t] * B[idx[t]]
    weighted_scatter_rows(w, A, seg, idx, n) out[idx[t]] += w[t] * A[seg[t]]

Each exists as a pure-numpy implementation (reduceat / np.add.at) and as a
numba-jitted loop; `hyperformer.backend` picks which set is exported under
the bare names.  All segments must be non-empty (guaranteed by the
hypergraph invariants: every node has >= 1 edge, every edge >= 1 node).
"""

import numpy as np

from .backend import ACTIVE_BACKEND, HAS_NUMBA


def seg_ids(ptr):
    """Segment id of each flat entry, from the offset array."""
    counts = np.diff(ptr)
    return np.repeat(np.arange(len(ptr) - 1, dtype=np.int64), counts)


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def seg_softmax_np(x, ptr):
    seg = seg_ids(ptr)
    mx = np.maximum.reduceat(x, ptr[:-1])
    e = np.exp(x - mx[seg])
    denom = np.add.reduceat(e, ptr[:-1])
    return e / denom[seg]


def seg_softmax_grad_np(w, dw, ptr):
    seg = seg_ids(ptr)
    inner = np.add.reduceat(w * dw, ptr[:-1])
    return w * (dw - inner[seg])


def gather_dot_np(A, seg, B, idx):
    return np.einsum("td,td->t", A[seg], B[idx])


def weighted_seg_sum_np(w, B, idx, ptr):
    return np.add.reduceat(w[:, None] * B[idx], ptr[:-1], axis=0)


def weighted_scatter_rows_np(w, A, seg, idx, n_rows):
    out = np.zeros((n_rows, A.shape[1]))
    np.add.at(out, idx, w[:, None] * A[seg])
    return out


NUMPY_IMPL = {
    "seg_softmax": seg_softmax_np,
    "seg_softmax_grad": seg_softmax_grad_np,
    "gather_dot": gather_dot_np,
    "weighted_seg_sum": weighted_seg_sum_np,
    "weighted_scatter_rows": weighted_scatter_rows_np,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

NUMBA_IMPL = {}

if HAS_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _seg_softmax_nb(x, ptr):
        out = np.empty_like(x)
        for s in range(len(ptr) - 1):
            lo, hi = ptr[s], ptr[s + 1]
            mx = x[lo]
            for t in range(lo + 1, hi):
                if x[t] > mx:
                    mx = x[t]
            denom = 0.0
            for t in range(lo, hi):
                out[t] = np.exp(x[t] - mx)
                denom += out[t]
            for t in range(lo, hi):
                out[t] /= denom
        return out

    @njit(cache=True)
    def _seg_softmax_grad_nb(w, dw, ptr):
        out = np.empty_like(w)
        for s in range(len(ptr) - 1):
            lo, hi = ptr[s], ptr[s + 1]
            inner = 0.0
            for t in range(lo, hi):
                inner += w[t] * dw[t]
            for t in range(lo, hi):
                out[t] = w[t] * (dw[t] - inner)
        return out

    @njit(cache=True)
    def _gather_dot_nb(A, seg, B, idx):
        nnz = len(seg)
        d = A.shape[1]
        out = np.empty(nnz)
        for t in range(nnz):
            a = A[seg[t]]
            b = B[idx[t]]
            acc = 0.0
            for c in range(d):
                acc += a[c] * b[c]
            out[t] = acc
        return out

    @njit(cache=True)
    def _weighted_seg_sum_nb(w, B, idx, ptr):
        d = B.shape[1]
        out = np.zeros((len(ptr) - 1, d))
        for s in range(len(ptr) - 1):
            for t in range(ptr[s], ptr[s + 1]):
                row = B[idx[t]]
                wt = w[t]
                for c in range(d):
                    out[s, c] += wt * row[c]
        return out

    @njit(cache=True)
    def _weighted_scatter_rows_nb(w, A, seg, idx, n_rows):
        d = A.shape[1]
        out = np.zeros((n_rows, d))
        for t in range(len(idx)):
            row = A[seg[t]]
            wt = w[t]
            j = idx[t]
            for c in range(d):
                out[j, c] += wt * row[c]
        return out

    NUMBA_IMPL = {
        "seg_softmax": _seg_softmax_nb,
        "seg_softmax_grad": _seg_softmax_grad_nb,
        "gather_dot": _gather_dot_nb,
        "weighted_seg_sum": _weighted_seg_sum_nb,
        "weighted_scatter_rows": _weighted_scatter_rows_nb,
    }


IMPLEMENTATIONS = {"numpy": NUMPY_IMPL}
if HAS_NUMBA:
    IMPLEMENTATIONS["numba"] = NUMBA_IMPL

_active = IMPLEMENTATIONS[ACTIVE_BACKEND]

seg_softmax = _active["seg_softmax"]
seg_softmax_grad = _active["seg_softmax_grad"]
gather_dot = _active["gather_dot"]
weighted_seg_sum = _active["weighted_seg_sum"]
weighted_scatter_rows = _active["weighted_scatter_rows"]
