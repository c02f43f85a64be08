"""Exact counting and uniform sampling of cyclically reduced words over
factor balls, relator multisets at a given density, and the prefix-collision
machinery that drives the high-density collapse.

Counting uses exact integer transfer matrices: with A[i][j] = b_j off the
diagonal, the number of cyclically reduced factor patterns weighted by ball
sizes is trace(A^ell).  Relator multiset sizes are computed by exact integer
root finding, never floating powers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .factors import (BallTable, EMPTY_WORD, FreeProduct, FreeProductWord,
                      Syllable)

DEFAULT_RELATOR_CAP = 1 << 24


class EmptySupport(ValueError):
    """No cyclically reduced words exist for these parameters."""


class DeadEnd(RuntimeError):
    """The sequential sampler reached an empty final choice set."""


@dataclass
class ModelParams:
    """Parameters of the density model: factors, density d, ball radius m,
    syllable length ell, and RNG seed."""

    fp: FreeProduct
    d: Fraction
    m: int
    ell: int
    seed: int = 0
    relator_cap: int = DEFAULT_RELATOR_CAP

    def __post_init__(self):
        self.d = Fraction(self.d)
        if not (0 < self.d < 1):
            raise ValueError("density must lie in (0, 1)")
        if self.m < 1:
            raise ValueError("ball radius must be >= 1")
        if self.ell < 2:
            raise ValueError("syllable length must be >= 2")
        if self.fp.n == 2:
            g1, g2 = self.fp.factors
            if g1.is_z2() and g2.is_z2():
                raise ValueError(
                    "n = 2 requires at least one factor different from Z/2")

    def key(self) -> tuple:
        return (self.fp.descriptor(), str(self.d), self.m, self.ell,
                self.seed, self.relator_cap)


class TransferCounts:
    """Exact integer transfer counts over factor patterns.

    ``A[i][j] = b_j`` for i != j counts one-syllable extensions; the number
    of cyclically reduced words of syllable length ell is trace(A^ell).
    Conditional completion counts feed the exact uniform sampler.
    """

    def __init__(self, b):
        self.b = list(b)
        self.n = len(self.b)
        self._pow = {}
        self._memo = {}

    def _matmul(self, X, Y):
        n = self.n
        return [[sum(X[i][k] * Y[k][j] for k in range(n)) for j in range(n)]
                for i in range(n)]

    def matrix_power(self, e: int):
        if e in self._pow:
            return self._pow[e]
        n = self.n
        if e == 1:
            M = [[0 if i == j else self.b[j] for j in range(n)]
                 for i in range(n)]
        elif e % 2 == 0:
            H = self.matrix_power(e // 2)
            M = self._matmul(H, H)
        else:
            M = self._matmul(self.matrix_power(e - 1), self.matrix_power(1))
        self._pow[e] = M
        return M

    def total(self, ell: int) -> int:
        M = self.matrix_power(ell)
        return sum(M[i][i] for i in range(self.n))

    def completions(self, first: int, cur: int, r: int) -> int:
        """Weighted count of ways to append r more syllables after a
        current one in factor `cur`, with the final factor != `first`."""
        key = (first, cur, r)
        if key in self._memo:
            return self._memo[key]
        if r == 0:
            out = 1 if cur != first else 0
        else:
            out = sum(self.b[j] * self.completions(first, j, r - 1)
                      for j in range(self.n) if j != cur)
        self._memo[key] = out
        return out


def count_S(params: ModelParams, table: Optional[BallTable] = None) -> int:
    """Exact number of cyclically reduced words of syllable length ell
    over the factor balls."""
    table = table or BallTable(params.fp, params.m)
    return TransferCounts(table.b).total(params.ell)


def ceil_power(S: int, d: Fraction) -> int:
    """Smallest integer k with k >= S**d, by exact integer comparison of
    k**q against S**p for d = p/q."""
    if S <= 0:
        raise ValueError("S must be positive")
    p, q = d.numerator, d.denominator
    Sp = S ** p
    if Sp.bit_length() < 512:
        k = max(1, int(round(Sp ** (1.0 / q))))
    else:
        k = 1 << -(-Sp.bit_length() // q)
    while k > 1 and (k - 1) ** q >= Sp:
        k -= 1
    while k ** q < Sp:
        k += 1
    return k


def _randbelow(rng: np.random.Generator, w: int) -> int:
    """Uniform integer in [0, w) with rejection sampling over raw bytes."""
    if w <= 0:
        raise ValueError("empty range")
    k = w.bit_length()
    nbytes = (k + 7) // 8
    shift = 8 * nbytes - k
    while True:
        r = int.from_bytes(rng.bytes(nbytes), "big") >> shift
        if r < w:
            return r


def _sample_ids_two_factors(table: BallTable, ell: int, size: int,
                            rng: np.random.Generator) -> np.ndarray:
    # n = 2, even ell: both alternating factor patterns carry equal weight
    # (b1*b2)^(ell/2), so a fair coin on the pattern plus uniform elements
    # is exactly uniform on S_ell.
    b1, b2 = table.b
    start = rng.integers(0, 2, size=size)
    cols = np.arange(ell)
    factor = (start[:, None] + cols[None, :]) % 2
    picks = rng.integers(0, np.where(factor == 0, b1, b2))
    offs = np.asarray(table.offsets, dtype=np.int64)
    return (offs[factor] + picks).astype(np.int32)


def _sample_ids_general(table: BallTable, tc: TransferCounts, ell: int,
                        size: int, rng: np.random.Generator) -> np.ndarray:
    n = tc.n
    total = tc.total(ell)
    if total == 0:
        raise EmptySupport("no cyclically reduced words at this length")
    out = np.empty((size, ell), dtype=np.int32)
    offs = table.offsets
    b = table.b
    first_weights = [b[i] * tc.completions(i, i, ell - 1) for i in range(n)]
    for row in range(size):
        r = _randbelow(rng, total)
        f1 = 0
        acc = 0
        for i in range(n):
            acc += first_weights[i]
            if r < acc:
                f1 = i
                break
        factors = [f1]
        cur = f1
        for k in range(1, ell):
            rem = ell - k - 1
            weights = [(j, b[j] * tc.completions(f1, j, rem))
                       for j in range(n) if j != cur]
            w_total = sum(w for _, w in weights)
            r = _randbelow(rng, w_total)
            acc = 0
            for j, w in weights:
                acc += w
                if r < acc:
                    cur = j
                    break
            factors.append(cur)
        for k, i in enumerate(factors):
            out[row, k] = offs[i] + int(rng.integers(0, b[i]))
    return out


def sample_words_uniform(params: ModelParams, rng: np.random.Generator,
                         size: int, table: Optional[BallTable] = None
                         ) -> np.ndarray:
    """Batch of exactly uniform draws from S_ell, as alphabet id rows."""
    table = table or BallTable(params.fp, params.m)
    tc = TransferCounts(table.b)
    if tc.total(params.ell) == 0:
        raise EmptySupport(
            f"S_ell is empty for ell={params.ell} over {params.fp.n} factors")
    if params.fp.n == 2 and params.ell % 2 == 0:
        return _sample_ids_two_factors(table, params.ell, size, rng)
    return _sample_ids_general(table, tc, params.ell, size, rng)


def sample_uniform(params: ModelParams, rng: np.random.Generator,
                   table: Optional[BallTable] = None) -> FreeProductWord:
    """One exactly uniform cyclically reduced word of syllable length ell."""
    table = table or BallTable(params.fp, params.m)
    ids = sample_words_uniform(params, rng, 1, table)
    return table.decode_ids(ids[0])


def sample_process(params: ModelParams, rng: np.random.Generator,
                   table: Optional[BallTable] = None) -> FreeProductWord:
    """One word from the sequential syllable-by-syllable process: first
    syllable uniform over the union of balls, each next syllable uniform
    over the balls of the other factors, and the final syllable uniform
    over balls avoiding both the first and the previous factor.

    Raises :class:`DeadEnd` when the final choice set is empty.  This
    process is exactly uniform only when all ball sizes agree; see
    :func:`process_distribution` for the comparison machinery.
    """
    table = table or BallTable(params.fp, params.m)
    ell = params.ell
    ids = np.empty(ell, dtype=np.int32)
    ids[0] = int(rng.integers(0, table.B))
    i1 = int(table.factor_of[ids[0]])
    prev = i1
    for k in range(1, ell):
        if k < ell - 1:
            banned = {prev}
        else:
            banned = {prev, i1}
        pool = np.flatnonzero(~np.isin(table.factor_of,
                                       np.array(sorted(banned))))
        if pool.size == 0:
            raise DeadEnd("final choice set is empty")
        ids[k] = int(pool[int(rng.integers(0, pool.size))])
        prev = int(table.factor_of[ids[k]])
    return table.decode_ids(ids)


def process_word_probability(params: ModelParams, table: BallTable,
                             w: FreeProductWord) -> Fraction:
    """Exact probability that :func:`sample_process` outputs w."""
    ell = params.ell
    assert len(w) == ell
    factors = [s.factor for s in w]
    b = table.b
    B = table.B
    prob = Fraction(1, B)
    for k in range(1, ell):
        if k < ell - 1:
            banned = {factors[k - 1]}
        else:
            banned = {factors[k - 1], factors[0]}
        pool = B - sum(b[i] for i in banned)
        if pool <= 0:
            return Fraction(0)
        prob *= Fraction(1, pool)
    return prob


def enumerate_S(params: ModelParams, table: Optional[BallTable] = None
                ) -> list:
    """Brute-force enumeration of S_ell (oracle for the transfer counts)."""
    table = table or BallTable(params.fp, params.m)
    n = params.fp.n
    out = []
    for pattern in itertools.product(range(n), repeat=params.ell):
        ok = all(pattern[k] != pattern[k - 1] for k in range(1, params.ell))
        if ok and pattern[0] != pattern[-1]:
            pools = [range(table.b[i]) for i in pattern]
            for picks in itertools.product(*pools):
                out.append(tuple(table.offsets[i] + j
                                 for i, j in zip(pattern, picks)))
    return out


@dataclass
class RelatorSet:
    """A sampled multiset of relators with its provenance."""

    params: ModelParams
    table: BallTable
    ids: np.ndarray  # shape (count, ell), alphabet ids
    sampler: str = "exact-uniform"
    cap_exceeded: bool = False

    def __len__(self):
        return self.ids.shape[0]

    @property
    def words(self) -> list:
        return [self.table.decode_ids(row) for row in self.ids]

    def save(self, path):
        fp = self.params.fp
        lines = ["# fpdensity relator set v1",
                 f"factors = {fp.descriptor()}",
                 f"m = {self.params.m}",
                 f"ell = {self.params.ell}",
                 f"d = {self.params.d}",
                 f"seed = {self.params.seed}",
                 f"relator_cap = {self.params.relator_cap}",
                 f"sampler = {self.sampler}",
                 f"cap_exceeded = {int(self.cap_exceeded)}",
                 f"count = {len(self)}",
                 "----"]
        for row in self.ids:
            lines.append(fp.word_str(self.table.decode_ids(row)))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "RelatorSet":
        with open(path) as fh:
            text = fh.read().splitlines()
        header = {}
        body_at = None
        for k, line in enumerate(text):
            if line.startswith("#"):
                continue
            if line.strip() == "----":
                body_at = k + 1
                break
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
        fp = FreeProduct.from_descriptor(header["factors"])
        params = ModelParams(fp, Fraction(header["d"]), int(header["m"]),
                             int(header["ell"]), int(header["seed"]),
                             int(header["relator_cap"]))
        table = BallTable(fp, params.m)
        rows = [table.encode_word(fp.parse_word(line))
                for line in text[body_at:] if line.strip()]
        ids = (np.vstack(rows) if rows
               else np.zeros((0, params.ell), dtype=np.int32))
        return cls(params, table, ids, header["sampler"],
                   bool(int(header["cap_exceeded"])))


def relator_set_size(params: ModelParams,
                     table: Optional[BallTable] = None) -> tuple:
    """(target size ceil(S^d), capped size, cap_exceeded flag)."""
    S = count_S(params, table)
    if S == 0:
        raise EmptySupport("S_ell is empty; no relators can be drawn")
    target = ceil_power(S, params.d)
    if target > params.relator_cap:
        return target, params.relator_cap, True
    return target, target, False


def rng_for(params: ModelParams, stream: int = 0) -> np.random.Generator:
    """Deterministic per-stream generator derived from the model seed."""
    ss = np.random.SeedSequence(entropy=params.seed, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(ss))


def sample_relator_set(params: ModelParams, sampler: str = "exact-uniform",
                       table: Optional[BallTable] = None,
                       rng: Optional[np.random.Generator] = None
                       ) -> RelatorSet:
    """ceil(|S_ell|^d) draws with replacement, truncated at the cap."""
    table = table or BallTable(params.fp, params.m)
    target, size, capped = relator_set_size(params, table)
    rng = rng or rng_for(params)
    if sampler == "exact-uniform":
        ids = sample_words_uniform(params, rng, size, table)
    elif sampler == "paper-process":
        rows = [table.encode_word(sample_process(params, rng, table))
                for _ in range(size)]
        ids = np.vstack(rows)
    else:
        raise ValueError(f"unknown sampler tag {sampler!r}")
    return RelatorSet(params, table, ids, sampler, capped)


# ---------------------------------------------------------------------------
# Prefix collisions and the dihedral witness.
# ---------------------------------------------------------------------------

def prefix_collisions(rs: RelatorSet) -> list:
    """All unordered pairs {w b, w b'} of relator values sharing their
    length (ell-1) syllable prefix, with distinct final syllables.

    Returns (prefix_row, (gid, gid')) with gid < gid', in deterministic
    order.
    """
    ids = rs.ids
    if ids.shape[0] < 2:
        return []
    prefix = ids[:, :-1]
    order = np.lexsort(prefix.T[::-1])
    sorted_prefix = prefix[order]
    sorted_last = ids[order, -1]
    out = []
    start = 0
    n = ids.shape[0]
    for k in range(1, n + 1):
        if k == n or (sorted_prefix[k] != sorted_prefix[start]).any():
            if k - start >= 2:
                lasts = sorted(set(int(v) for v in sorted_last[start:k]))
                for a, bb in itertools.combinations(lasts, 2):
                    out.append((tuple(int(v) for v in sorted_prefix[start]),
                                (a, bb)))
            start = k
    return out


@dataclass
class WitnessVerdict:
    status: str  # collapsed | partial | none
    fraction: Fraction
    n_collisions: int

    def __str__(self):
        if self.status == "partial":
            return f"partial({self.fraction})"
        return self.status


def dihedral_witness(rs: RelatorSet) -> WitnessVerdict:
    """Union-find over the ball alphabet seeded by prefix collisions.

    Collapsed means every factor ball lies in a single class (and, for
    three or more factors, all classes merge across factors), which pins
    the quotient down to a group of order at most two per the collapse
    mechanism; otherwise the fraction of required identifications is
    reported.
    """
    table = rs.table
    parent = list(range(table.B))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)

    pairs = prefix_collisions(rs)
    for _, (a, b) in pairs:
        union(a, b)

    n = len(table.b)
    achieved = table.B - len({find(x) for x in range(table.B)})
    if n >= 3:
        required = table.B - 1
    else:
        required = table.B - 2
    required = max(required, 1)
    fraction = Fraction(achieved, required)
    if fraction >= 1:
        status = "collapsed"
    elif achieved == 0:
        status = "none"
    else:
        status = "partial"
    return WitnessVerdict(status, fraction, len(pairs))
