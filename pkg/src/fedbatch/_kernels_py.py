"""Pure-Python/numpy implementations of the hot kernels.

Semantics (iteration order, tie-breaks, floating-point operation order) match
the compiled ``_kernels`` extension exactly, so either backend yields the same
results.
"""
from itertools import combinations

import numpy as np


def minmax_compositions(comm, quantum, B):
    """Min over compositions of B into K parts >= 1 of max_k(comm_k + b_k*quantum_k).

    Compositions are visited in lexicographic order of (b_1, ..., b_K) and the
    first minimiser wins.
    """
    comm = [float(x) for x in comm]
    quantum = [float(x) for x in quantum]
    K = len(comm)
    best = float("inf")
    best_alloc = None
    for cuts in combinations(range(1, B), K - 1):
        prev = 0
        worst = -float("inf")
        alloc = []
        for k, c in enumerate(cuts + (B,)):
            b = c - prev
            prev = c
            lat = comm[k] + b * quantum[k]
            if lat > worst:
                worst = lat
            alloc.append(b)
        if worst < best:
            best = worst
            best_alloc = alloc
    return best, np.array(best_alloc, dtype=np.int64)


def greedy_fill(comm, quantum, counts, extra, cap):
    """Hand out ``extra`` samples one at a time by descending slack.

    Slack of device k is (cap - latency_k) / quantum_k. A device is eligible
    only if one more sample keeps it at or below ``cap``; when nobody is
    eligible the sample goes to the device whose latency after the addition
    is smallest. Ties resolve to the lowest index.
    """
    comm = np.asarray(comm, dtype=float)
    quantum = np.asarray(quantum, dtype=float)
    counts = np.array(counts, dtype=np.int64)
    K = comm.size
    tol = 1e-12 * max(1.0, abs(cap))
    for _ in range(int(extra)):
        pick = -1
        best_slack = -float("inf")
        for k in range(K):
            lat = comm[k] + counts[k] * quantum[k]
            if lat + quantum[k] <= cap + tol:
                slack = (cap - lat) / quantum[k]
                if slack > best_slack:
                    best_slack = slack
                    pick = k
        if pick < 0:
            best_lat = float("inf")
            for k in range(K):
                lat = comm[k] + (counts[k] + 1) * quantum[k]
                if lat < best_lat:
                    best_lat = lat
                    pick = k
        counts[pick] += 1
    return counts


def local_sgd_devices(w, curvature, lr, noise_scale, z):
    """H local steps on every device of the quadratic F* + 0.5*sum(c_i w_i^2).

    ``z`` holds pre-drawn standard normals with shape (K, H, D); device k's
    gradient noise at step t is noise_scale[k] * z[k, t].
    """
    z = np.asarray(z, dtype=float)
    K, H, D = z.shape
    c = np.asarray(curvature, dtype=float)
    s = np.asarray(noise_scale, dtype=float)[:, None]
    out = np.tile(np.asarray(w, dtype=float), (K, 1))
    for t in range(H):
        out = out - lr * (c * out + s * z[:, t, :])
    return out
