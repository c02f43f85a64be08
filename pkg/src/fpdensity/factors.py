"""Factor groups with a decidable word problem, radius balls, and
normal-form arithmetic over their free product.

Three factor kinds are supported: finite groups given by a multiplication
table, free groups, and free abelian groups.  Every element carries a
canonical form so that equality is bit-for-bit comparison, and every
generating set is symmetric (closed under inverses).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, NamedTuple, Optional, Sequence

import numpy as np

Element = Any

FINITE = "finite-by-table"
FREE = "free"
FREE_ABELIAN = "free-abelian"


class BallOverflow(RuntimeError):
    """Ball enumeration hit the configured element cap.

    Signals a resource limit (infinite or very large factor), not a
    mathematical error.
    """


class FactorGroup:
    """A group with identity, multiplication, inverse, and a symmetric
    generating set, in one of the three supported kinds.

    Canonical element forms:

    * finite-by-table: ``int`` index into the multiplication table,
    * free of rank k: tuple of nonzero letters in ``{-k..-1, 1..k}``,
      freely reduced,
    * free abelian of rank k: length-k tuple of exponents.
    """

    def __init__(self, kind: str, *, table=None, names=None, rank=None,
                 generators=None, descriptor: str = ""):
        self.kind = kind
        self.descriptor = descriptor
        if kind == FINITE:
            self.table = [tuple(row) for row in table]
            n = len(self.table)
            self.size: Optional[int] = n
            if names is None:
                names = ["1"] + [f"e{i}" for i in range(1, n)]
            self.names = list(names)
            self._name_to_idx = {s: i for i, s in enumerate(self.names)}
            self._inv = [None] * n
            for x in range(n):
                for y in range(n):
                    if self.table[x][y] == 0:
                        self._inv[x] = y
            if any(v is None for v in self._inv):
                raise ValueError("multiplication table has no inverses")
            gens = list(generators) if generators is not None else [
                i for i in range(1, n)]
        elif kind == FREE:
            self.rank = int(rank)
            self.size = None
            gens = [(+i,) for i in range(1, self.rank + 1)]
            gens += [(-i,) for i in range(1, self.rank + 1)]
            if generators is not None:
                gens = list(generators)
        elif kind == FREE_ABELIAN:
            self.rank = int(rank)
            self.size = None
            gens = []
            for i in range(self.rank):
                e = [0] * self.rank
                e[i] = 1
                gens.append(tuple(e))
                e2 = [0] * self.rank
                e2[i] = -1
                gens.append(tuple(e2))
            if generators is not None:
                gens = list(generators)
        else:
            raise ValueError(f"unsupported factor kind: {kind}")
        self.generators = gens
        for g in self.generators:
            if self.inv(g) not in self.generators:
                raise ValueError("generating set is not symmetric")

    # -- constructors -------------------------------------------------

    @classmethod
    def from_table(cls, table: Sequence[Sequence[int]], *, names=None,
                   generators=None, descriptor: str = "") -> "FactorGroup":
        return cls(FINITE, table=table, names=names, generators=generators,
                   descriptor=descriptor or "table")

    @classmethod
    def cyclic(cls, k: int, gen: str = "a", *, full_ball: bool = False
               ) -> "FactorGroup":
        """Z/k with generator `gen`.  The generating set is {g, g^-1} by
        default, or all nontrivial elements with ``full_ball=True``."""
        table = [[(i + j) % k for j in range(k)] for i in range(k)]
        names = ["1"] + [gen if i == 1 else f"{gen}^{i}" for i in range(1, k)]
        if full_ball:
            gens = list(range(1, k))
        else:
            gens = sorted({1 % k, (k - 1) % k} - {0})
        tag = f"cyclic:{k}:{gen}" + (":full" if full_ball else "")
        return cls(FINITE, table=table, names=names, generators=gens,
                   descriptor=tag)

    @classmethod
    def free(cls, rank: int) -> "FactorGroup":
        return cls(FREE, rank=rank, descriptor=f"free:{rank}")

    @classmethod
    def free_abelian(cls, rank: int) -> "FactorGroup":
        return cls(FREE_ABELIAN, rank=rank, descriptor=f"abelian:{rank}")

    @classmethod
    def from_descriptor(cls, desc: str) -> "FactorGroup":
        parts = desc.split(":")
        if parts[0] == "cyclic":
            return cls.cyclic(int(parts[1]), parts[2] if len(parts) > 2 else "a",
                              full_ball=(len(parts) > 3 and parts[3] == "full"))
        if parts[0] == "free":
            return cls.free(int(parts[1]))
        if parts[0] == "abelian":
            return cls.free_abelian(int(parts[1]))
        raise ValueError(f"cannot rebuild factor from descriptor {desc!r}")

    # -- group operations ---------------------------------------------

    @property
    def identity(self) -> Element:
        if self.kind == FINITE:
            return 0
        if self.kind == FREE:
            return ()
        return tuple([0] * self.rank)

    def mul(self, x: Element, y: Element) -> Element:
        if self.kind == FINITE:
            return self.table[x][y]
        if self.kind == FREE:
            out = list(x)
            for l in y:
                if out and out[-1] == -l:
                    out.pop()
                else:
                    out.append(l)
            return tuple(out)
        return tuple(a + b for a, b in zip(x, y))

    def inv(self, x: Element) -> Element:
        if self.kind == FINITE:
            return self._inv[x]
        if self.kind == FREE:
            return tuple(-l for l in reversed(x))
        return tuple(-a for a in x)

    def is_identity(self, x: Element) -> bool:
        return x == self.identity

    def is_z2(self) -> bool:
        return self.kind == FINITE and self.size == 2

    # -- tokens (serialization) ---------------------------------------

    def token(self, x: Element) -> str:
        if self.kind == FINITE:
            return self.names[x]
        return ".".join(str(v) for v in x) or "0"

    def parse_token(self, tok: str) -> Element:
        if self.kind == FINITE:
            return self._name_to_idx[tok]
        if tok == "0" and self.kind == FREE:
            return ()
        vals = tuple(int(v) for v in tok.split("."))
        return vals

    def __repr__(self):
        return f"FactorGroup({self.descriptor or self.kind})"


def ball(group: FactorGroup, m: int, cap: int = 200_000) -> list:
    """Nontrivial elements at word-metric distance <= m from the identity,
    with respect to the group's symmetric generating set.

    Elements come out in deterministic order (by BFS depth, then token).
    Raises :class:`BallOverflow` when more than `cap` elements appear.
    """
    if m < 1:
        raise ValueError("ball radius must be >= 1")
    seen = {group.identity: ()}
    layer = [group.identity]
    out: list = []
    for _ in range(m):
        nxt = []
        for x in layer:
            for g in group.generators:
                y = group.mul(x, g)
                if y not in seen:
                    seen[y] = seen[x] + (g,)
                    nxt.append(y)
                    if len(seen) > cap:
                        raise BallOverflow(
                            f"ball exceeds cap of {cap} elements")
        nxt.sort(key=group.token)
        out.extend(nxt)
        layer = nxt
    return out


def ball_witness_words(group: FactorGroup, m: int, cap: int = 200_000) -> dict:
    """Map each ball element to a shortest generator word reaching it."""
    if m < 1:
        raise ValueError("ball radius must be >= 1")
    seen = {group.identity: ()}
    layer = [group.identity]
    for _ in range(m):
        nxt = []
        for x in layer:
            for g in group.generators:
                y = group.mul(x, g)
                if y not in seen:
                    seen[y] = seen[x] + (g,)
                    nxt.append(y)
                    if len(seen) > cap:
                        raise BallOverflow(
                            f"ball exceeds cap of {cap} elements")
        nxt.sort(key=group.token)
        layer = nxt
    del seen[group.identity]
    return seen


class Syllable(NamedTuple):
    factor: int
    element: Element


@dataclass(frozen=True)
class FreeProductWord:
    """Normal-form word over a free product: adjacent syllables lie in
    distinct factors and no syllable is an identity."""

    syllables: tuple

    def __len__(self):
        return len(self.syllables)

    def __iter__(self):
        return iter(self.syllables)

    @property
    def syllable_length(self) -> int:
        return len(self.syllables)


EMPTY_WORD = FreeProductWord(())


class FreeProduct:
    """Arithmetic for normal-form words over G_1 * ... * G_n."""

    def __init__(self, factors: Sequence[FactorGroup]):
        self.factors = tuple(factors)
        self.n = len(self.factors)
        if self.n < 2:
            raise ValueError("a free product needs at least two factors")

    def word(self, pairs: Iterable) -> FreeProductWord:
        """Build the normal form of an arbitrary syllable sequence."""
        stack: list = []
        for (i, x) in pairs:
            G = self.factors[i]
            if G.is_identity(x):
                continue
            if stack and stack[-1][0] == i:
                merged = G.mul(stack[-1][1], x)
                stack.pop()
                if not G.is_identity(merged):
                    stack.append((i, merged))
            else:
                stack.append((i, x))
        return FreeProductWord(tuple(Syllable(i, x) for i, x in stack))

    def multiply(self, w1: FreeProductWord, w2: FreeProductWord
                 ) -> FreeProductWord:
        return self.word(list(w1.syllables) + list(w2.syllables))

    def inverse(self, w: FreeProductWord) -> FreeProductWord:
        return FreeProductWord(tuple(
            Syllable(s.factor, self.factors[s.factor].inv(s.element))
            for s in reversed(w.syllables)))

    def is_cyclically_reduced(self, w: FreeProductWord) -> bool:
        if len(w) <= 1:
            return True
        return w.syllables[0].factor != w.syllables[-1].factor

    def cyclic_reduce(self, w: FreeProductWord) -> FreeProductWord:
        """A cyclically reduced conjugate of w; idempotent."""
        syl = list(w.syllables)
        while len(syl) >= 2 and syl[0].factor == syl[-1].factor:
            i = syl[0].factor
            G = self.factors[i]
            merged = G.mul(syl[-1].element, syl[0].element)
            syl = syl[1:-1]
            if not G.is_identity(merged):
                # reinsert at the front; may merge again on later passes
                if syl and syl[0].factor == i:
                    m2 = G.mul(merged, syl[0].element)
                    syl = syl[1:]
                    if not G.is_identity(m2):
                        syl.insert(0, Syllable(i, m2))
                else:
                    syl.insert(0, Syllable(i, merged))
        return FreeProductWord(tuple(syl))

    def cyclic_shifts(self, w: FreeProductWord) -> list:
        L = len(w)
        if L == 0:
            return [w]
        return [FreeProductWord(w.syllables[k:] + w.syllables[:k])
                for k in range(L)]

    def cyclic_variants(self, w: FreeProductWord) -> list:
        """All cyclic shifts of w and of its inverse, deduplicated and in
        deterministic order.  Input must be cyclically reduced."""
        if not self.is_cyclically_reduced(w):
            raise ValueError("cyclic_variants needs a cyclically reduced word")
        seen = {}
        for v in self.cyclic_shifts(w) + self.cyclic_shifts(self.inverse(w)):
            seen.setdefault(self.word_key(v), v)
        return [seen[k] for k in sorted(seen)]

    # -- helpers -------------------------------------------------------

    def word_key(self, w: FreeProductWord) -> tuple:
        return tuple((s.factor, self.factors[s.factor].token(s.element))
                     for s in w)

    def word_str(self, w: FreeProductWord) -> str:
        if len(w) == 0:
            return "<empty>"
        return " ".join(f"{s.factor}:{self.factors[s.factor].token(s.element)}"
                        for s in w)

    def parse_word(self, text: str) -> FreeProductWord:
        if text.strip() in ("", "<empty>"):
            return EMPTY_WORD
        pairs = []
        for tok in text.split():
            f, elem = tok.split(":", 1)
            i = int(f)
            pairs.append((i, self.factors[i].parse_token(elem)))
        return self.word(pairs)

    def descriptor(self) -> str:
        return ",".join(G.descriptor for G in self.factors)

    @classmethod
    def from_descriptor(cls, desc: str) -> "FreeProduct":
        return cls([FactorGroup.from_descriptor(p) for p in desc.split(",")])


class BallTable:
    """Concatenated factor balls B_i(m) with a global alphabet of syllable
    ids, inverse table, and word encoding into numpy id arrays."""

    def __init__(self, fp: FreeProduct, m: int, cap: int = 200_000):
        self.fp = fp
        self.m = m
        self.elements = [ball(G, m, cap) for G in fp.factors]
        self.gen_words = [ball_witness_words(G, m, cap) for G in fp.factors]
        self.b = [len(e) for e in self.elements]
        if any(bi < 1 for bi in self.b):
            raise ValueError("every factor ball must be nonempty")
        self.B = sum(self.b)
        self.offsets = np.cumsum([0] + self.b[:-1]).tolist()
        self._index = {}
        for i, elems in enumerate(self.elements):
            for j, x in enumerate(elems):
                self._index[(i, x)] = self.offsets[i] + j
        self.factor_of = np.concatenate(
            [np.full(bi, i, dtype=np.int32) for i, bi in enumerate(self.b)])
        inv = np.empty(self.B, dtype=np.int32)
        for (i, x), gid in self._index.items():
            inv[gid] = self._index[(i, fp.factors[i].inv(x))]
        self.inverse_ids = inv

    def id_of(self, factor: int, element: Element) -> int:
        return self._index[(factor, element)]

    def syllable_of(self, gid: int) -> Syllable:
        i = int(self.factor_of[gid])
        return Syllable(i, self.elements[i][gid - self.offsets[i]])

    def encode_word(self, w: FreeProductWord) -> np.ndarray:
        return np.array([self.id_of(s.factor, s.element) for s in w],
                        dtype=np.int32)

    def decode_ids(self, ids) -> FreeProductWord:
        return FreeProductWord(tuple(self.syllable_of(int(g)) for g in ids))

    def invert_ids(self, ids: np.ndarray) -> np.ndarray:
        """Alphabet ids of the inverse cyclic word."""
        return self.inverse_ids[ids[::-1]]
