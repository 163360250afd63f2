"""Leiden community detection over similarity-graph layers.

The algorithm alternates three phases until quality converges: queue-based
local moving of nodes between communities, greedy refinement inside the
communities found by local moving, and aggregation of refined communities
into the nodes of a coarser graph. Quality is weighted modularity

    Q = (1/2m) * sum_ij [w_ij - resolution * k_i * k_j / (2m)] * [c_i == c_j]

summed over ordered node pairs including i == j, where k is weighted degree
and m total edge weight.

The hot loops live in two interchangeable kernel backends: a compiled
Cython module and a pure-Python twin. Selection happens at import; set
GRAPHDEX_PURE_PYTHON=1 to force the fallback. Both produce bit-identical
results, which the test suite cross-checks.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels_py

logger = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-12

_FORCE_PURE = os.environ.get("GRAPHDEX_PURE_PYTHON", "") not in ("", "0", "false")
if _FORCE_PURE:
    _active = _kernels_py
    KERNEL_BACKEND = "python"
else:
    try:
        from . import _kernels as _active  # type: ignore[attr-defined]

        KERNEL_BACKEND = "compiled"
    except ImportError:
        _active = _kernels_py
        KERNEL_BACKEND = "python"
        logger.info("compiled community kernels unavailable; using pure Python")


def kernel_backend() -> str:
    """Name of the kernel backend selected at import: compiled or python."""
    return KERNEL_BACKEND


def _kernel_module(name: str | None):
    if name is None or name == "auto":
        return _active
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


@dataclass
class Partition:
    """Community assignment for one layer.

    ``assignment[i]`` is the community of node index i. Labels are dense,
    starting at 0, numbered by first occurrence in node order.
    """

    assignment: np.ndarray
    community_count: int

    def members(self) -> list[list[int]]:
        """Node indices per community, ordered by community id."""
        out: list[list[int]] = [[] for _ in range(self.community_count)]
        for node, label in enumerate(self.assignment):
            out[int(label)].append(node)
        return out


def _layer_arrays(layer):
    """Validated CSR form of a layer's undirected weighted graph."""
    n = len(layer.node_ids)
    m = len(layer.edges)
    u0 = np.empty(m, dtype=np.int64)
    v0 = np.empty(m, dtype=np.int64)
    w0 = np.empty(m, dtype=np.float64)
    for i, (u, v, w) in enumerate(layer.edges):
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge ({u}, {v}) references a node outside [0, {n})")
        if u == v:
            raise ValueError(f"self-loop on node {u}")
        if w < 0.0:
            raise ValueError(f"negative edge weight {w} on ({u}, {v})")
        u0[i], v0[i], w0[i] = u, v, w
    src = np.concatenate([u0, v0])
    dst = np.concatenate([v0, u0])
    w = np.concatenate([w0, w0])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    deg = np.bincount(src, weights=w, minlength=n)
    m2 = float(w.sum())
    return indptr, dst, w, deg, m2, src


def _densify(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Relabel to dense ids by first appearance; returns (leaders, dense)."""
    mapping: dict[int, int] = {}
    dense = np.empty(labels.shape[0], dtype=np.int64)
    leaders: list[int] = []
    for i, raw in enumerate(labels):
        raw = int(raw)
        slot = mapping.get(raw)
        if slot is None:
            slot = len(leaders)
            mapping[raw] = slot
            leaders.append(raw)
        dense[i] = slot
    return np.asarray(leaders, dtype=np.int64), dense


def _pair_quality(src, dst, w, deg, m2, assignment, resolution) -> float:
    internal = float(w[assignment[src] == assignment[dst]].sum())
    tot = np.bincount(assignment, weights=deg)
    return internal / m2 - resolution * float(np.sum((tot / m2) ** 2))


def quality(layer, partition: Partition, resolution: float = 1.0) -> float:
    """Weighted modularity of ``partition`` on ``layer``.

    Zero total edge weight yields 0.0 by convention.
    """
    n = len(layer.node_ids)
    assignment = np.asarray(partition.assignment, dtype=np.int64)
    if assignment.shape[0] != n:
        raise ValueError("partition does not cover the layer")
    indptr, dst, w, deg, m2, src = _layer_arrays(layer)
    if m2 == 0.0:
        return 0.0
    return _pair_quality(src, dst, w, deg, m2, assignment, resolution)


def detect_communities(
    layer,
    resolution: float = 1.0,
    seed: int = 0,
    *,
    kernel: str | None = None,
    iteration_hook: Callable[[int, float], None] | None = None,
    max_outer_iterations: int = 256,
) -> Partition:
    """Runs Leiden on one layer and returns a dense-labelled Partition.

    Deterministic for a fixed seed: node visit orders come from a seeded
    generator and every tie-break is by ascending label. ``iteration_hook``
    receives (iteration, quality-so-far) after each local-moving pass.
    """
    n = len(layer.node_ids)
    if n == 0:
        raise ValueError("layer has no nodes")
    kern = _kernel_module(kernel)
    indptr, indices, weights, deg, m2, src = _layer_arrays(layer)
    if m2 == 0.0:
        if iteration_hook is not None:
            iteration_hook(0, 0.0)
        return Partition(np.arange(n, dtype=np.int64), n)
    rng = np.random.default_rng(seed)

    # per-level state; level 0 is the layer itself, singleton partition
    L_indptr, L_indices, L_weights, L_deg = indptr, indices, weights, deg
    L_self = np.zeros(n, dtype=np.float64)
    n_level = n
    node_map = np.arange(n, dtype=np.int64)  # original node -> level node
    comm = np.arange(n, dtype=np.int64)
    tot = L_deg.copy()
    csize = np.ones(n, dtype=np.int64)
    free_labels = np.zeros(n, dtype=np.int64)
    free_top = 0

    iteration = 0
    while True:
        order = rng.permutation(n_level).astype(np.int64)
        comm_w = np.zeros(n_level, dtype=np.float64)
        seen = np.zeros(n_level, dtype=np.uint8)
        touched = np.zeros(n_level, dtype=np.int64)
        queue_buf = np.zeros(n_level, dtype=np.int64)
        in_queue = np.zeros(n_level, dtype=np.uint8)
        moves, gain, free_top = kern.local_move(
            L_indptr, L_indices, L_weights, L_deg, comm, tot, csize, order,
            free_labels, free_top, m2, resolution, comm_w, seen, touched,
            queue_buf, in_queue,
        )
        if iteration_hook is not None:
            iteration_hook(
                iteration,
                _pair_quality(src, indices, weights, deg, m2, comm[node_map], resolution),
            )
        iteration += 1
        if gain < CONVERGENCE_TOL:
            break
        if iteration >= max_outer_iterations:
            logger.warning("community detection hit the iteration cap (%d)", iteration)
            break

        refine_order = rng.permutation(n_level).astype(np.int64)
        refined = np.zeros(n_level, dtype=np.int64)
        rtot = np.zeros(n_level, dtype=np.float64)
        rin = np.zeros(n_level, dtype=np.float64)
        rsize = np.zeros(n_level, dtype=np.int64)
        kern.refine(
            L_indptr, L_indices, L_weights, L_deg, L_self, comm, refine_order,
            m2, resolution, refined, rtot, rin, rsize, comm_w, seen, touched,
        )

        # aggregate refined communities into the next level's nodes
        leaders, ref_dense = _densify(refined)
        n_new = leaders.shape[0]
        row = np.repeat(np.arange(n_level, dtype=np.int64), np.diff(L_indptr))
        ru = ref_dense[row]
        rv = ref_dense[L_indices]
        cross = ru != rv
        cu, cv, cw = ru[cross], rv[cross], L_weights[cross]
        if cu.shape[0]:
            agg_order = np.lexsort((cv, cu))
            cu, cv, cw = cu[agg_order], cv[agg_order], cw[agg_order]
            boundary = np.empty(cu.shape[0], dtype=bool)
            boundary[0] = True
            boundary[1:] = (cu[1:] != cu[:-1]) | (cv[1:] != cv[:-1])
            starts = np.nonzero(boundary)[0]
            agg_u = cu[starts]
            agg_v = cv[starts]
            agg_w = np.add.reduceat(cw, starts)
        else:
            agg_u = np.zeros(0, dtype=np.int64)
            agg_v = np.zeros(0, dtype=np.int64)
            agg_w = np.zeros(0, dtype=np.float64)
        L_indptr = np.zeros(n_new + 1, dtype=np.int64)
        np.cumsum(np.bincount(agg_u, minlength=n_new), out=L_indptr[1:])
        L_indices = agg_v
        L_weights = agg_w
        L_self = rin[leaders]
        L_deg = rtot[leaders]
        node_map = ref_dense[node_map]

        # induced macro partition becomes the next level's starting point
        _, comm = _densify(comm[leaders])
        n_comms = int(comm.max()) + 1 if n_new else 0
        tot = np.bincount(comm, weights=L_deg, minlength=n_new).astype(np.float64)
        csize = np.bincount(comm, minlength=n_new).astype(np.int64)
        free_labels = np.zeros(n_new, dtype=np.int64)
        free_count = n_new - n_comms
        free_labels[:free_count] = np.arange(n_comms, n_new, dtype=np.int64)
        free_top = free_count
        n_level = n_new

    _, assignment = _densify(comm[node_map])
    count = int(assignment.max()) + 1
    return Partition(assignment, count)
