"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The numba path is used when available; set ``FPDENSITY_DISABLE_NUMBA=1`` in
the environment to force the numpy fallbacks (see benchmarks/bench_kernels.py
for a comparison of the two paths).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = bool(os.environ.get("FPDENSITY_DISABLE_NUMBA"))

try:
    if _DISABLED:
        raise ImportError("numba disabled by FPDENSITY_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# Longest cyclic match run between two id sequences, over all relative shifts.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _max_run_nb(a, b, exclude_zero_shift):  # pragma: no cover - jit
    n = a.shape[0]
    best = 0
    for delta in range(n):
        if exclude_zero_shift and delta == 0:
            continue
        cur = 0
        local = 0
        for j in range(2 * n):
            if a[j % n] == b[(j + delta) % n]:
                cur += 1
                if cur > local:
                    local = cur
            else:
                cur = 0
        if local > best:
            best = local
    if best > n:
        best = n
    return best


def _max_run_np(a, b, exclude_zero_shift):
    n = a.shape[0]
    if n == 0:
        return 0
    shifts = np.arange(n)
    cols = np.arange(2 * n)
    eq = a[cols % n][None, :] == b[(cols[None, :] + shifts[:, None]) % n]
    if exclude_zero_shift:
        eq[0, :] = False
    cur = np.zeros(n, dtype=np.int64)
    best = np.zeros(n, dtype=np.int64)
    for j in range(2 * n):
        cur = np.where(eq[:, j], cur + 1, 0)
        best = np.maximum(best, cur)
    return int(min(best.max(), n))


def max_cyclic_run(a: np.ndarray, b: np.ndarray,
                   exclude_zero_shift: bool = False) -> int:
    """Longest run of positionwise equalities between the cyclic sequences
    `a` and `b`, maximized over all relative shifts (capped at len(a))."""
    a = np.ascontiguousarray(a, dtype=np.int32)
    b = np.ascontiguousarray(b, dtype=np.int32)
    if a.shape[0] != b.shape[0]:
        raise ValueError("sequences must have equal length")
    if a.shape[0] == 0:
        return 0
    if HAS_NUMBA:
        return int(_max_run_nb(a, b, exclude_zero_shift))
    return _max_run_np(a, b, exclude_zero_shift)


# ---------------------------------------------------------------------------
# BFS distances on a CSR graph.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bfs_nb(indptr, indices, src):  # pragma: no cover - jit
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    dist[src] = 0
    queue[tail] = src
    tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(indptr[v], indptr[v + 1]):
            w = indices[k]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue[tail] = w
                tail += 1
    return dist


def _bfs_np(indptr, indices, src):
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[src] = 0
    frontier = np.array([src], dtype=np.int64)
    d = 0
    while frontier.size:
        d += 1
        starts = indptr[frontier]
        ends = indptr[frontier + 1]
        total = (ends - starts).sum()
        if total == 0:
            break
        nbrs = np.empty(total, dtype=indices.dtype)
        pos = 0
        for v, s, e in zip(frontier, starts, ends):
            nbrs[pos:pos + e - s] = indices[s:e]
            pos += e - s
        nbrs = np.unique(nbrs)
        fresh = nbrs[dist[nbrs] < 0]
        dist[fresh] = d
        frontier = fresh
    return dist


def bfs_distances(indptr: np.ndarray, indices: np.ndarray, src: int
                  ) -> np.ndarray:
    """Unweighted BFS distances from `src`; -1 marks unreachable vertices."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if HAS_NUMBA:
        return _bfs_nb(indptr, indices, src)
    return _bfs_np(indptr, indices, src)


def csr_from_edges(n: int, edges) -> tuple:
    """Build symmetric CSR adjacency from an iterable of (u, v) pairs."""
    us = []
    vs = []
    for (u, v) in edges:
        us.append(u)
        vs.append(v)
        us.append(v)
        vs.append(u)
    if not us:
        return (np.zeros(n + 1, dtype=np.int64),
                np.zeros(0, dtype=np.int64))
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    order = np.argsort(us, kind="stable")
    us = us[order]
    vs = vs[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, us + 1, 1)
    indptr = np.cumsum(indptr)
    return indptr, vs
