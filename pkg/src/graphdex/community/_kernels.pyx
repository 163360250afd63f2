# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled community-detection kernels.

Line-for-line twin of ``_kernels_py``; every floating-point expression must
stay in the same order in both files so the backends produce bit-identical
results. The build disables FP contraction for the same reason.
"""

import numpy as np

cimport numpy as cnp


cdef inline void _sort_i64(long long[::1] arr, Py_ssize_t nt) noexcept:
    # insertion sort; labels are distinct so ordering is total
    cdef Py_ssize_t i, j
    cdef long long key
    for i in range(1, nt):
        key = arr[i]
        j = i - 1
        while j >= 0 and arr[j] > key:
            arr[j + 1] = arr[j]
            j -= 1
        arr[j + 1] = key


def local_move(
    long long[::1] indptr,
    long long[::1] indices,
    double[::1] weights,
    double[::1] deg,
    long long[::1] comm,
    double[::1] tot,
    long long[::1] csize,
    long long[::1] order,
    long long[::1] free_labels,
    long long free_top,
    double m2,
    double resolution,
    double[::1] comm_w,
    unsigned char[::1] seen,
    long long[::1] touched,
    long long[::1] queue_buf,
    unsigned char[::1] in_queue,
):
    """Queue-based local moving; see the Python twin for the contract."""
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t i, head, tail, size, nt, t
    cdef long long u, v, c, c_old, best_c, idx
    cdef long long moves = 0
    cdef double ku, gain_old, best_gain, g
    cdef double gain_total = 0.0
    for i in range(n):
        queue_buf[i] = order[i]
        in_queue[order[i]] = 1
    head = 0
    tail = 0
    size = n
    while size > 0:
        u = queue_buf[head]
        head = (head + 1) % n
        size -= 1
        in_queue[u] = 0
        ku = deg[u]
        c_old = comm[u]
        tot[c_old] -= ku
        csize[c_old] -= 1
        nt = 0
        for idx in range(indptr[u], indptr[u + 1]):
            c = comm[indices[idx]]
            if seen[c] == 0:
                seen[c] = 1
                touched[nt] = c
                nt += 1
                comm_w[c] = weights[idx]
            else:
                comm_w[c] += weights[idx]
        gain_old = comm_w[c_old] - resolution * tot[c_old] * ku / m2
        best_c = c_old
        best_gain = gain_old
        # ascending label order makes tie-breaking deterministic
        _sort_i64(touched, nt)
        for t in range(nt):
            c = touched[t]
            if c == c_old:
                continue
            g = comm_w[c] - resolution * tot[c] * ku / m2
            if g > best_gain:
                best_gain = g
                best_c = c
        if best_gain < 0.0:
            # a fresh singleton community beats every candidate
            free_top -= 1
            best_c = free_labels[free_top]
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
            for idx in range(indptr[u], indptr[u + 1]):
                v = indices[idx]
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
    long long[::1] indptr,
    long long[::1] indices,
    double[::1] weights,
    double[::1] deg,
    double[::1] self_w,
    long long[::1] macro,
    long long[::1] order,
    double m2,
    double resolution,
    long long[::1] refined,
    double[::1] rtot,
    double[::1] rin,
    long long[::1] rsize,
    double[::1] comm_w,
    unsigned char[::1] seen,
    long long[::1] touched,
):
    """Greedy refinement; see the Python twin for the contract."""
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t i, nt, t
    cdef long long u, v, r, mu, best_r, idx
    cdef double ku, best_gain, g
    for i in range(n):
        refined[i] = i
        rtot[i] = deg[i]
        rin[i] = self_w[i]
        rsize[i] = 1
    for i in range(n):
        u = order[i]
        if rsize[refined[u]] != 1:
            continue
        mu = macro[u]
        ku = deg[u]
        nt = 0
        for idx in range(indptr[u], indptr[u + 1]):
            v = indices[idx]
            if macro[v] != mu:
                continue
            r = refined[v]
            if seen[r] == 0:
                seen[r] = 1
                touched[nt] = r
                nt += 1
                comm_w[r] = weights[idx]
            else:
                comm_w[r] += weights[idx]
        _sort_i64(touched, nt)
        best_r = -1
        best_gain = 0.0
        for t in range(nt):
            r = touched[t]
            g = comm_w[r] - resolution * rtot[r] * ku / m2
            if g > best_gain:
                best_gain = g
                best_r = r
        if best_r >= 0:
            rsize[refined[u]] = 0
            refined[u] = best_r
            rsize[best_r] += 1
            rin[best_r] += 2.0 * comm_w[best_r] + self_w[u]
            rtot[best_r] += ku
        for t in range(nt):
            seen[touched[t]] = 0
            comm_w[touched[t]] = 0.0
