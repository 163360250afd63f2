"""Pure-Python community-detection kernels.

This module and ``_kernels.pyx`` are line-for-line twins. Every
floating-point expression must appear in the same order in both files so the
two backends produce bit-identical results; edit them together.

All arrays are caller-allocated. ``comm_w`` and ``seen`` are scratch and
must arrive zeroed; the kernels restore them to zero before returning.
"""

from __future__ import annotations

import numpy as np


def local_move(
    indptr: np.ndarray,
    indices: np.ndarray,
    weights: np.ndarray,
    deg: np.ndarray,
    comm: np.ndarray,
    tot: np.ndarray,
    csize: np.ndarray,
    order: np.ndarray,
    free_labels: np.ndarray,
    free_top: int,
    m2: float,
    resolution: float,
    comm_w: np.ndarray,
    seen: np.ndarray,
    touched: np.ndarray,
    queue_buf: np.ndarray,
    in_queue: np.ndarray,
):
    """Queue-based local moving; one call runs until the queue drains.

    Nodes are visited in ``order``; a node re-enters the queue when one of
    its neighbours moves to a different community. Mutates ``comm``,
    ``tot``, ``csize`` and the free-label stack in place. Returns
    (moves, quality_gain, new_free_top).
    """
    n = order.shape[0]
    for i in range(n):
        queue_buf[i] = order[i]
        in_queue[order[i]] = 1
    head = 0
    tail = 0
    size = n
    moves = 0
    gain_total = 0.0
    while size > 0:
        u = int(queue_buf[head])
        head = (head + 1) % n
        size -= 1
        in_queue[u] = 0
        ku = float(deg[u])
        c_old = int(comm[u])
        tot[c_old] -= ku
        csize[c_old] -= 1
        nt = 0
        for idx in range(int(indptr[u]), int(indptr[u + 1])):
            c = int(comm[indices[idx]])
            if seen[c] == 0:
                seen[c] = 1
                touched[nt] = c
                nt += 1
                comm_w[c] = float(weights[idx])
            else:
                comm_w[c] += float(weights[idx])
        gain_old = float(comm_w[c_old]) - resolution * float(tot[c_old]) * ku / m2
        best_c = c_old
        best_gain = gain_old
        # ascending label order makes tie-breaking deterministic
        touched[:nt] = np.sort(touched[:nt])
        for t in range(nt):
            c = int(touched[t])
            if c == c_old:
                continue
            g = float(comm_w[c]) - resolution * float(tot[c]) * ku / m2
            if g > best_gain:
                best_gain = g
                best_c = c
        if best_gain < 0.0:
            # a fresh singleton community beats every candidate
            free_top -= 1
            best_c = int(free_labels[free_top])
            best_gain = 0.0
        if best_c != c_old:
            comm[u] = best_c
            tot[best_c] += ku
            csize[best_c] += 1
            if csize[c_old] == 0:
                tot[c_old] = 0.0
                free_labels[free_top] = c_old
                free_top += 1
            moves += 1
            gain_total += 2.0 * (best_gain - gain_old) / m2
            for idx in range(int(indptr[u]), int(indptr[u + 1])):
                v = int(indices[idx])
                if comm[v] != best_c and in_queue[v] == 0:
                    queue_buf[tail] = v
                    tail = (tail + 1) % n
                    size += 1
                    in_queue[v] = 1
        else:
            tot[c_old] += ku
            csize[c_old] += 1
        for t in range(nt):
            seen[touched[t]] = 0
            comm_w[touched[t]] = 0.0
    return moves, gain_total, free_top


def refine(
    indptr: np.ndarray,
    indices: np.ndarray,
    weights: np.ndarray,
    deg: np.ndarray,
    self_w: np.ndarray,
    macro: np.ndarray,
    order: np.ndarray,
    m2: float,
    resolution: float,
    refined: np.ndarray,
    rtot: np.ndarray,
    rin: np.ndarray,
    rsize: np.ndarray,
    comm_w: np.ndarray,
    seen: np.ndarray,
    touched: np.ndarray,
) -> None:
    """Greedy refinement: singletons merge inside their macro community.

    Starts from all-singleton ``refined`` labels (label == node index) and
    only ever merges a still-singleton node into a neighbouring refined
    community with strictly positive modularity gain, never across macro
    communities. Fills ``refined``, ``rtot`` (degree sum), ``rin``
    (internal ordered-pair weight incl. self-loops) and ``rsize``.
    """
    n = order.shape[0]
    for i in range(n):
        refined[i] = i
        rtot[i] = deg[i]
        rin[i] = self_w[i]
        rsize[i] = 1
    for i in range(n):
        u = int(order[i])
        if rsize[refined[u]] != 1:
            continue
        mu = int(macro[u])
        ku = float(deg[u])
        nt = 0
        for idx in range(int(indptr[u]), int(indptr[u + 1])):
            v = int(indices[idx])
            if macro[v] != mu:
                continue
            r = int(refined[v])
            if seen[r] == 0:
                seen[r] = 1
                touched[nt] = r
                nt += 1
                comm_w[r] = float(weights[idx])
            else:
                comm_w[r] += float(weights[idx])
        touched[:nt] = np.sort(touched[:nt])
        best_r = -1
        best_gain = 0.0
        for t in range(nt):
            r = int(touched[t])
            g = float(comm_w[r]) - resolution * float(rtot[r]) * ku / m2
            if g > best_gain:
                best_gain = g
                best_r = r
        if best_r >= 0:
            rsize[refined[u]] = 0
            refined[u] = best_r
            rsize[best_r] += 1
            rin[best_r] += 2.0 * float(comm_w[best_r]) + float(self_w[u])
            rtot[best_r] += ku
        for t in range(nt):
            seen[touched[t]] = 0
            comm_w[touched[t]] = 0.0
