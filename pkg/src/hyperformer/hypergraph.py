"""In-batch feature hypergraph: nodes = batch instances, hyperedges =
distinct feature values present in the batch.

Incidence is kept in both directions (node -> local edge indices, edge ->
node indices) plus a flat CSR view consumed by the attention kernels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError
from .kernels import seg_ids


@dataclass
class IncidenceCSR:
    """Flat view of one incidence direction for the segment kernels."""
    ptr: np.ndarray   # int64, len S+1
    idx: np.ndarray   # int64, flat member indices
    seg: np.ndarray   # int64, segment id per flat entry


class FeatureHypergraph:
    def __init__(self, node_count, edge_ids, node_incidence, edge_incidence):
        self.node_count = node_count
        self.edge_ids = np.asarray(edge_ids, dtype=np.int64)   # local edge -> global feature id
        self.node_incidence = node_incidence                   # E_i, local edge indices
        self.edge_incidence = edge_incidence                   # V_j, node indices (ascending)
        self._node_csr = None
        self._edge_csr = None
        self._local_of = {int(g): j for j, g in enumerate(self.edge_ids)}

    @property
    def edge_count(self):
        return len(self.edge_ids)

    def local_edge(self, feature_id):
        return self._local_of[int(feature_id)]

    @staticmethod
    def _to_csr(lists):
        counts = np.array([len(l) for l in lists], dtype=np.int64)
        ptr = np.zeros(len(lists) + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        idx = np.fromiter((v for l in lists for v in l), dtype=np.int64, count=int(ptr[-1]))
        return IncidenceCSR(ptr=ptr, idx=idx, seg=seg_ids(ptr))

    @property
    def node_csr(self):
        if self._node_csr is None:
            self._node_csr = self._to_csr(self.node_incidence)
        return self._node_csr

    @property
    def edge_csr(self):
        if self._edge_csr is None:
            self._edge_csr = self._to_csr(self.edge_incidence)
        return self._edge_csr

    def incidence_pairs(self):
        """All (node, global feature id) membership pairs."""
        return {(i, int(self.edge_ids[j]))
                for i, edges in enumerate(self.node_incidence) for j in edges}


def build_batch_hypergraph(batch):
    """Hyperedges in first-occurrence order; duplicate ids within one
    instance collapse to a single incidence."""
    if not batch:
        raise EmptyInputError("build_batch_hypergraph: empty batch")
    edge_ids = []
    local_of = {}
    node_incidence = []
    edge_incidence = []
    for i, inst in enumerate(batch):
        incident = []
        for gid in inst.all_ids():
            j = local_of.get(gid)
            if j is None:
                j = len(edge_ids)
                local_of[gid] = j
                edge_ids.append(gid)
                edge_incidence.append([])
            if j not in incident:
                incident.append(j)
                edge_incidence[j].append(i)
        node_incidence.append(incident)
    return FeatureHypergraph(node_count=len(batch), edge_ids=edge_ids,
                             node_incidence=node_incidence,
                             edge_incidence=edge_incidence)


def incidence_oracle(batch):
    """Exhaustive double-loop enumeration of (node, feature id) pairs."""
    pairs = set()
    for i, inst in enumerate(batch):
        for slot in inst.slots:
            for gid in slot:
                pairs.add((i, int(gid)))
    return pairs
