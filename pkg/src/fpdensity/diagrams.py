"""Abstract diagrams of even polygons with bipartite skeleta: cancellation
functionals, connectors, dual-graph encoding and census, decorations and
fulfillability, piece analysis, and the external-edge criterion.

A diagram is a 2-complex whose faces are 2l-gons with alternating
central/factor vertices, plus per-face data: a distinguished factor vertex,
an orientation, and a partition of faces into classes.  Everything is exact
and deterministic; canonical forms make diagram equality decidable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .factors import BallTable, FreeProduct, FreeProductWord
from .kernels import max_cyclic_run

CENTRAL = 0
FACTOR = 1


class SearchBudgetExceeded(RuntimeError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class DiagramFace:
    cycle: tuple          # ((edge_id, +1|-1), ...)
    dist_pos: int = -1    # cycle index whose source vertex is distinguished
    orientation: int = 1


@dataclass(frozen=True)
class Diagram:
    kinds: tuple          # vertex kinds, CENTRAL or FACTOR
    edges: tuple          # (u, v) per edge
    faces: tuple          # DiagramFace
    face_class: tuple = ()

    def __post_init__(self):
        if not self.face_class:
            object.__setattr__(self, "face_class",
                               tuple(range(len(self.faces))))

    # -- basic geometry -------------------------------------------------

    def src(self, e: int, d: int) -> int:
        u, v = self.edges[e]
        return u if d > 0 else v

    def dst(self, e: int, d: int) -> int:
        u, v = self.edges[e]
        return v if d > 0 else u

    def face_vertex(self, f: int, pos: int) -> int:
        e, d = self.faces[f].cycle[pos]
        return self.src(e, d)

    def face_len(self, f: int) -> int:
        return len(self.faces[f].cycle)

    @property
    def area(self) -> int:
        return len(self.faces)

    def edge_degrees(self) -> list:
        deg = [0] * len(self.edges)
        for face in self.faces:
            for e, _ in face.cycle:
                deg[e] += 1
        return deg

    def vertex_degrees(self) -> list:
        deg = [0] * len(self.kinds)
        for (u, v) in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def boundary_length(self) -> int:
        return sum(1 for d in self.edge_degrees() if d <= 1)

    def euler_characteristic(self) -> int:
        return len(self.kinds) - len(self.edges) + len(self.faces)

    def num_classes(self) -> int:
        return len(set(self.face_class))

    def is_connected(self) -> bool:
        if not self.edges:
            return len(self.kinds) <= 1
        adj = [[] for _ in self.kinds]
        for (u, v) in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.kinds)

    def validate(self, require_connected: bool = True) -> "Diagram":
        deg = self.edge_degrees()
        if any(d == 0 for d in deg):
            raise ValueError("edge not attached to any face")
        for f, face in enumerate(self.faces):
            L = len(face.cycle)
            if L % 2 != 0 or L < 2:
                raise ValueError("faces must be even polygons")
            for p, (e, d) in enumerate(face.cycle):
                nxt = face.cycle[(p + 1) % L]
                if self.dst(e, d) != self.src(*nxt):
                    raise ValueError("face cycle is not closed")
                if e == nxt[0]:
                    # a corner using one edge twice is not an edge triple
                    raise ValueError("face corner backtracks")
            kinds = [self.kinds[self.face_vertex(f, p)] for p in range(L)]
            if any(kinds[p] == kinds[(p + 1) % L] for p in range(L)):
                raise ValueError("face boundary must alternate vertex kinds")
            if face.dist_pos >= 0 and \
                    self.kinds[self.face_vertex(f, face.dist_pos)] != FACTOR:
                raise ValueError("distinguished vertex must be factor kind")
        if require_connected and not self.is_connected():
            raise ValueError("diagram must be connected")
        return self

    def with_decorations(self, dist_pos=None, orientations=None,
                         face_class=None) -> "Diagram":
        faces = []
        for f, face in enumerate(self.faces):
            dp = face.dist_pos if dist_pos is None else dist_pos[f]
            orient = face.orientation if orientations is None \
                else orientations[f]
            faces.append(DiagramFace(face.cycle, dp, orient))
        return Diagram(self.kinds, self.edges, tuple(faces),
                       tuple(face_class) if face_class is not None
                       else self.face_class)


def disc(ell: int, start_kind: int = CENTRAL) -> Diagram:
    """A single 2l-gon with all vertices distinct."""
    n = 2 * ell
    kinds = tuple((start_kind + p) % 2 for p in range(n))
    edges = tuple((p, (p + 1) % n) for p in range(n))
    cycle = tuple((p, 1) for p in range(n))
    dist = 0 if kinds[0] == FACTOR else 1
    return Diagram(kinds, edges, (DiagramFace(cycle, dist, 1),), (0,))


# ---------------------------------------------------------------------------
# Quotients: identify directed edges, rebuild the diagram.
# ---------------------------------------------------------------------------

class _UF:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            self.p[max(rx, ry)] = min(rx, ry)


class _SignedUF:
    """Union-find whose elements carry an orientation relative to their
    class root (+1 or -1)."""

    def __init__(self, n):
        self.p = list(range(n))
        self.rel = [1] * n

    def find_signed(self, x):
        if self.p[x] == x:
            return x, 1
        root, sign = self.find_signed(self.p[x])
        self.p[x] = root
        self.rel[x] = self.rel[x] * sign
        return root, self.rel[x]

    def union_directed(self, x, dx, y, dy) -> bool:
        """Declare directed (x, dx) == (y, dy); returns False on a fold."""
        rx, sx = self.find_signed(x)
        ry, sy = self.find_signed(y)
        rel = dx * sx * dy * sy
        if rx == ry:
            return rel == 1
        root, other = (rx, ry) if rx < ry else (ry, rx)
        self.p[other] = root
        self.rel[other] = rel
        return True


def quotient(D: Diagram, identifications,
             require_connected: bool = True, check_kinds: bool = True,
             validate_result: bool = True) -> Diagram:
    """Quotient by identifying directed edges.

    ``identifications`` lists ((e1, d1), (e2, d2)) pairs meaning the
    directed edges are glued head-to-head and tail-to-tail.  Raises
    ValueError for folds, central/factor merges, or broken faces.
    """
    vuf = _UF(len(D.kinds))
    euf = _SignedUF(len(D.edges))
    for (e1, d1), (e2, d2) in identifications:
        if not euf.union_directed(e1, d1, e2, d2):
            raise ValueError("edge folded onto itself")
        vuf.union(D.src(e1, d1), D.src(e2, d2))
        vuf.union(D.dst(e1, d1), D.dst(e2, d2))
    # merge endpoints of every edge with its class root's endpoints
    for e in range(len(D.edges)):
        r, s = euf.find_signed(e)
        if r == e:
            continue
        u, v = D.edges[e]
        ru, rv = D.edges[r]
        if s > 0:
            vuf.union(u, ru)
            vuf.union(v, rv)
        else:
            vuf.union(u, rv)
            vuf.union(v, ru)

    vmap = {}
    kinds = []
    for v in range(len(D.kinds)):
        r = vuf.find(v)
        if r not in vmap:
            vmap[r] = len(kinds)
            kinds.append(D.kinds[r])
        if check_kinds and D.kinds[v] != kinds[vmap[r]]:
            raise ValueError("gluing merges central and factor vertices")
    emap = {}
    edges = []
    for e in range(len(D.edges)):
        r, _ = euf.find_signed(e)
        if r not in emap:
            u, v = D.edges[r]
            emap[r] = len(edges)
            edges.append((vmap[vuf.find(u)], vmap[vuf.find(v)]))
    faces = []
    for face in D.faces:
        cyc = []
        for (e, d) in face.cycle:
            r, s = euf.find_signed(e)
            cyc.append((emap[r], d * s))
        faces.append(DiagramFace(tuple(cyc), face.dist_pos, face.orientation))
    out = Diagram(tuple(kinds), tuple(edges), tuple(faces), D.face_class)
    if validate_result:
        return out.validate(require_connected=require_connected)
    return out


def disjoint_union(*diagrams: Diagram) -> Diagram:
    kinds = []
    edges = []
    faces = []
    classes = []
    for D in diagrams:
        voff = len(kinds)
        eoff = len(edges)
        coff = (max(classes) + 1) if classes else 0
        kinds.extend(D.kinds)
        edges.extend((u + voff, v + voff) for (u, v) in D.edges)
        for face in D.faces:
            cyc = tuple((e + eoff, d) for (e, d) in face.cycle)
            faces.append(DiagramFace(cyc, face.dist_pos, face.orientation))
        classes.extend(c + coff for c in D.face_class)
    return Diagram(tuple(kinds), tuple(edges), tuple(faces), tuple(classes))


def glue_segment(D: Diagram, f1: int, s1: int, f2: int, s2: int, t: int,
                 opposite: bool = True,
                 require_connected: bool = True) -> Diagram:
    """Glue t boundary edges of face f1 starting at position s1 onto t
    boundary edges of face f2.

    With ``opposite=True`` (the planar gluing) f2's segment starting at s2
    is consumed backwards against f1's forward segment; otherwise both run
    forward.
    """
    L1, L2 = D.face_len(f1), D.face_len(f2)
    idents = []
    for k in range(t):
        de1 = D.faces[f1].cycle[(s1 + k) % L1]
        if opposite:
            e2, d2 = D.faces[f2].cycle[(s2 - k) % L2]
            idents.append((de1, (e2, -d2)))
        else:
            idents.append((de1, D.faces[f2].cycle[(s2 + k) % L2]))
    return quotient(D, idents, require_connected=require_connected)


# ---------------------------------------------------------------------------
# Connectors.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Connector:
    edges: tuple       # ordered (edge_id, +1|-1) along the canonical direction
    is_cycle: bool

    def __len__(self):
        return len(self.edges)


def connectors(D: Diagram) -> list:
    """Maximal degree-2 segments and near-cycles partitioning the
    1-skeleton."""
    deg = D.vertex_degrees()
    incid = [[] for _ in D.kinds]
    for e, (u, v) in enumerate(D.edges):
        incid[u].append((e, 1))
        incid[v].append((e, -1))
    seen = [False] * len(D.edges)
    out = []

    def walk(e0, d0):
        path = [(e0, d0)]
        seen[e0] = True
        while True:
            v = D.dst(*path[-1])
            if deg[v] != 2:
                return path
            nxt = [(e, d) for (e, d) in incid[v] if e != path[-1][0]]
            if not nxt or seen[nxt[0][0]]:
                return path
            path.append(nxt[0])
            seen[nxt[0][0]] = True

    for v in range(len(D.kinds)):
        if deg[v] == 2:
            continue
        for (e, d) in incid[v]:
            if not seen[e]:
                path = walk(e, d)
                closes = D.src(*path[0]) == D.dst(*path[-1])
                # anchored near-cycles keep their basepoint at the branch
                # vertex: traversals can only start there
                out.append(_canonical_connector(path, closes,
                                                rotate=False))
    for e in range(len(D.edges)):
        if not seen[e]:
            path = walk(e, 1)
            out.append(_canonical_connector(path, True, rotate=True))
    return out


def _canonical_connector(path, is_cycle, rotate) -> Connector:
    fwd = tuple(path)
    rev = tuple((e, -d) for (e, d) in reversed(path))
    if rotate:
        cands = [tuple(seq[k:] + seq[:k]) for seq in (fwd, rev)
                 for k in range(len(seq))]
    else:
        cands = [fwd, rev]
    return Connector(min(cands), is_cycle)


def is_km_bounded(D: Diagram, K: int, M: int) -> bool:
    return D.area <= K and len(connectors(D)) <= M


# ---------------------------------------------------------------------------
# Cancellation functionals.
# ---------------------------------------------------------------------------

def cancellation(D: Diagram) -> int:
    """Sum over edges of (degree - 1), counting face incidences with
    multiplicity."""
    return sum(d - 1 for d in D.edge_degrees())


def relative_cancellation(D: Diagram) -> int:
    """Sum over unordered edge triples at factor vertices of (deg* - 1),
    skipping triples not fully contained in any face.

    A face containing both edges of a triple contributes the larger of its
    two traversal multiplicities; one extra count is added when some face
    contains exactly one edge of the triple.
    """
    mult = [dict() for _ in D.faces]
    for f, face in enumerate(D.faces):
        for (e, _) in face.cycle:
            mult[f][e] = mult[f].get(e, 0) + 1
    edges_at = [set() for _ in D.kinds]
    for e, (u, v) in enumerate(D.edges):
        edges_at[u].add(e)
        edges_at[v].add(e)
    total = 0
    for v in range(len(D.kinds)):
        if D.kinds[v] != FACTOR:
            continue
        for e1, e2 in itertools.combinations(sorted(edges_at[v]), 2):
            full = 0
            partial = False
            for f in range(len(D.faces)):
                m1 = mult[f].get(e1, 0)
                m2 = mult[f].get(e2, 0)
                if m1 and m2:
                    full += max(m1, m2)
                elif m1 or m2:
                    partial = True
            if full == 0:
                continue
            total += full + (1 if partial else 0) - 1
    return total


def external_edge_count(D: Diagram, f: int) -> int:
    deg = D.edge_degrees()
    return sum(1 for (e, _) in D.faces[f].cycle if deg[e] <= 1)


def is_disc_diagram(D: Diagram) -> bool:
    """Homeomorphic to a disc: connected, Euler characteristic 1, all edge
    degrees <= 2, free boundary forming one simple cycle."""
    deg = D.edge_degrees()
    if any(d > 2 for d in deg):
        return False
    if D.euler_characteristic() != 1 or not D.is_connected():
        return False
    bedges = [e for e, d in enumerate(deg) if d == 1]
    if not bedges:
        return False
    vdeg = {}
    for e in bedges:
        for v in D.edges[e]:
            vdeg[v] = vdeg.get(v, 0) + 1
    if any(c != 2 for c in vdeg.values()):
        return False
    adj = {}
    for e in bedges:
        u, v = D.edges[e]
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    start = next(iter(adj))
    seen = {start}
    stack = [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(vdeg)


def has_spur(D: Diagram) -> bool:
    return any(d == 1 for d in D.vertex_degrees())


# ---------------------------------------------------------------------------
# Reduction pairs.
# ---------------------------------------------------------------------------

def _oriented_distance(D: Diagram, f: int, v: int) -> Optional[int]:
    """Steps from the distinguished vertex of f to the first occurrence of
    v, walking the boundary in the face's orientation."""
    face = D.faces[f]
    L = len(face.cycle)
    for k in range(L):
        pos = (face.dist_pos + face.orientation * k) % L
        if D.face_vertex(f, pos) == v:
            return k
    return None


def reduction_pairs(D: Diagram) -> list:
    """Adjacent same-class faces with opposite orientations whose first
    overlap vertex sits at equal oriented distance from both distinguished
    vertices."""
    out = []
    face_edges = [set(e for (e, _) in face.cycle) for face in D.faces]
    for f, g in itertools.combinations(range(D.area), 2):
        if D.face_class[f] != D.face_class[g]:
            continue
        if D.faces[f].orientation == D.faces[g].orientation:
            continue
        shared = face_edges[f] & face_edges[g]
        if not shared:
            continue
        overlap_vertices = set()
        for e in shared:
            overlap_vertices.update(D.edges[e])
        df = min(_oriented_distance(D, f, v) for v in overlap_vertices)
        dg = min(_oriented_distance(D, g, v) for v in overlap_vertices)
        if df == dg:
            out.append((f, g))
    return out


def is_reduced(D: Diagram) -> bool:
    return not reduction_pairs(D)


# ---------------------------------------------------------------------------
# Canonical forms.
# ---------------------------------------------------------------------------

def _aligned_cycle(face: DiagramFace, rot: int, flip: int) -> list:
    L = len(face.cycle)
    if flip > 0:
        return [face.cycle[(rot + k) % L] for k in range(L)]
    return [(face.cycle[(rot - 1 - k) % L][0],
             -face.cycle[(rot - 1 - k) % L][1]) for k in range(L)]


def _encodings(D: Diagram, f0: int, rot0: int, flip0: int, decorated: bool):
    """All complete encodings grown from one seed alignment (branching over
    the alignment of each face discovered later)."""
    F = len(D.faces)
    face_edge_sets = [set(e for (e, _) in face.cycle) for face in D.faces]

    def rec(order, vmap, emap, enc):
        k = len(enc)
        if k < len(order):
            f, rot, flip = order[k]
            vmap = dict(vmap)
            emap = dict(emap)
            tokens = []
            for (e, d) in _aligned_cycle(D.faces[f], rot, flip):
                v = D.src(e, d)
                if v not in vmap:
                    vmap[v] = len(vmap)
                if e not in emap:
                    emap[e] = (len(emap), d)
                    rel = 1
                else:
                    rel = d * emap[e][1]
                tokens.append((emap[e][0], rel, vmap[v], D.kinds[v]))
            yield from rec(order, vmap, emap, enc + [tuple(tokens)])
            return
        if len(order) == F:
            yield tuple(enc) + _decoration_tokens(D, order, decorated)
            return
        placed = {f for (f, _, _) in order}
        remaining = [g for g in range(F) if g not in placed]
        # discover via the lowest-numbered already-encoded edge that touches
        # an unplaced face; branch over compatible alignments
        target_edge = None
        for e_old, (eid, _) in sorted(emap.items(), key=lambda kv: kv[1][0]):
            if any(e_old in face_edge_sets[g] for g in remaining):
                target_edge = e_old
                break
        if target_edge is None:
            # vertex-only attachment: branch over everything
            for g in remaining:
                for pos in range(D.face_len(g)):
                    for flip in (1, -1):
                        yield from rec(order + [(g, pos, flip)],
                                       vmap, emap, enc)
            return
        for g in remaining:
            if target_edge not in face_edge_sets[g]:
                continue
            for pos, (ee, _) in enumerate(D.faces[g].cycle):
                if ee != target_edge:
                    continue
                yield from rec(order + [(g, pos, 1)], vmap, emap, enc)
                yield from rec(order + [(g, (pos + 1) % D.face_len(g), -1)],
                               vmap, emap, enc)

    yield from rec([(f0, rot0, flip0)], {}, {}, [])


def _decoration_tokens(D: Diagram, order, decorated: bool) -> tuple:
    if not decorated:
        return ()
    class_map = {}
    toks = []
    for (f, rot, flip) in order:
        face = D.faces[f]
        L = len(face.cycle)
        if face.dist_pos < 0:
            dp = -1
        elif flip > 0:
            dp = (face.dist_pos - rot) % L
        else:
            dp = (rot - face.dist_pos) % L
        c = D.face_class[f]
        if c not in class_map:
            class_map[c] = len(class_map)
        toks.append((dp, face.orientation * flip, class_map[c]))
    return (tuple(toks),)


def canonical_key(D: Diagram, decorated: bool = True):
    """Lexicographically minimal encoding over all seed alignments.  Equal
    keys characterize isomorphism of decorated diagrams (or of bare cell
    complexes with ``decorated=False``)."""
    best = None
    for f0 in range(len(D.faces)):
        for rot in range(D.face_len(f0)):
            for flip in (1, -1):
                for enc in _encodings(D, f0, rot, flip, decorated):
                    if best is None or enc < best:
                        best = enc
    return best


def geometric_key(D: Diagram):
    return canonical_key(D, decorated=False)


# ---------------------------------------------------------------------------
# Dual graphs (faces x connectors with cyclic orders, signs, weights).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualGraph:
    n_faces: int
    weights: tuple            # weight per connector
    runs: tuple               # per face: cyclic tuple of (connector, sign)

    def validate(self) -> "DualGraph":
        if not self.runs or not self.weights:
            raise ValueError("dual graph needs faces and connectors")
        if any(w < 1 for w in self.weights):
            raise ValueError("connector weights must be positive")
        totals = {sum(self.weights[c] for (c, _) in fr) for fr in self.runs}
        if len(totals) != 1:
            raise ValueError("faces must have equal boundary length")
        if totals.pop() % 2:
            raise ValueError("face boundary length must be even")
        used = {c for fr in self.runs for (c, _) in fr}
        if used != set(range(len(self.weights))):
            raise ValueError("every connector must be traversed")
        return self

    def undecorated_key(self):
        """Isomorphism-invariant of the underlying bipartite multigraph
        with weights (cyclic orders and signs stripped)."""
        face_keys = sorted(
            tuple(sorted(self.weights[c] for (c, _) in fr))
            for fr in self.runs)
        conn_keys = sorted(
            (self.weights[c],
             tuple(sorted(sum(1 for (cc, _) in fr if cc == c)
                          for fr in self.runs)))
            for c in range(len(self.weights)))
        return (self.n_faces, tuple(face_keys), tuple(conn_keys))

    def decorated_key(self):
        """Canonical form including cyclic orders and signs: minimized over
        face order, run rotations, connector relabelings and connector
        orientation flips."""
        nC = len(self.weights)
        best = None
        for perm in itertools.permutations(range(nC)):
            if [self.weights[p] for p in perm] != \
                    sorted(self.weights[p] for p in perm):
                pass
            for flips in itertools.product((1, -1), repeat=nC):
                relabeled = []
                for fr in self.runs:
                    seq = tuple((perm[c], s * flips[c]) for (c, s) in fr)
                    rots = [seq[k:] + seq[:k] for k in range(len(seq))]
                    relabeled.append(min(rots))
                cand = (tuple(self.weights[perm.index(c)]
                              for c in range(nC)),
                        tuple(sorted(relabeled)))
                if best is None or cand < best:
                    best = cand
        return best


def encode_dual(D: Diagram) -> DualGraph:
    """Weighted decorated dual graph: one vertex per face and connector,
    one edge per boundary traversal of a connector, signed by direction
    agreement, with connector-length weights."""
    conns = connectors(D)
    edge_to_conn = {}
    for ci, c in enumerate(conns):
        for k, (e, d) in enumerate(c.edges):
            edge_to_conn[e] = (ci, k, d)
    runs_per_face = []
    for f, face in enumerate(D.faces):
        L = len(face.cycle)
        cut = []
        for p in range(L):
            e, d = face.cycle[p]
            ci, k, cd = edge_to_conn[e]
            agree = (d == cd)
            first = (k == 0) if agree else (k == len(conns[ci].edges) - 1)
            if first:
                cut.append(p)
        if not cut:
            raise ValueError("face boundary has no connector start")
        runs = []
        for idx, p in enumerate(cut):
            e, d = face.cycle[p]
            ci, k, cd = edge_to_conn[e]
            sign = 1 if d == cd else -1
            q_next = cut[(idx + 1) % len(cut)]
            span = (q_next - p) % L or L
            if span != len(conns[ci].edges):
                raise ValueError("face traversal does not cover connector")
            runs.append((ci, sign))
        runs_per_face.append(tuple(runs))
    return DualGraph(D.area, tuple(len(c.edges) for c in conns),
                     tuple(runs_per_face)).validate()


def decode_dual(g: DualGraph) -> Diagram:
    """Rebuild the geometric class of a diagram from its dual graph;
    raises ValueError when the graph does not assemble validly."""
    g.validate()
    total = sum(g.weights[c] for (c, _) in g.runs[0])
    nv = 0
    edges = []
    kinds_parity = []
    face_cycles = []
    arcs = {}
    for f, runs in enumerate(g.runs):
        base = nv
        L = total
        nv += L
        cyc = []
        pos = 0
        for ri, (c, sign) in enumerate(runs):
            w = g.weights[c]
            arc = []
            for k in range(w):
                u = base + pos + k
                v = base + (pos + k + 1) % L
                e = len(edges)
                edges.append((u, v))
                cyc.append((e, 1))
                arc.append((e, 1))
            if sign < 0:
                arc = [(e, -d) for (e, d) in reversed(arc)]
            arcs[(f, ri)] = arc
            pos += w
        face_cycles.append(tuple(cyc))
        kinds_parity.extend(p % 2 for p in range(L))
    D = Diagram(tuple(kinds_parity), tuple(edges),
                tuple(DiagramFace(c) for c in face_cycles))
    by_conn = {}
    for f, runs in enumerate(g.runs):
        for ri, (c, _) in enumerate(runs):
            by_conn.setdefault(c, []).append((f, ri))
    idents = []
    for c, travs in by_conn.items():
        base_arc = arcs[travs[0]]
        for other in travs[1:]:
            idents.extend(zip(base_arc, arcs[other]))
    if idents:
        D = quotient(D, idents, check_kinds=False, validate_result=False)
    return _recolor_bipartite(D).validate()


def _recolor_bipartite(D: Diagram) -> Diagram:
    color = [-1] * len(D.kinds)
    adj = [[] for _ in D.kinds]
    for (u, v) in D.edges:
        adj[u].append(v)
        adj[v].append(u)
    for start in range(len(D.kinds)):
        if color[start] >= 0:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if color[w] < 0:
                    color[w] = 1 - color[u]
                    stack.append(w)
                elif color[w] == color[u]:
                    raise ValueError("1-skeleton is not bipartite")
    kinds = tuple(color)
    faces = []
    for face in D.faces:
        e0, d0 = face.cycle[0]
        u, v = D.edges[e0]
        start = u if d0 > 0 else v
        dp = 0 if kinds[start] == FACTOR else 1
        faces.append(DiagramFace(face.cycle, dp, face.orientation))
    return Diagram(kinds, D.edges, tuple(faces), D.face_class)


# ---------------------------------------------------------------------------
# Census of (K, M)-bounded diagrams, two independent routes.
# ---------------------------------------------------------------------------

def _compositions(total: int):
    def rec(rem, parts):
        if rem == 0:
            yield tuple(parts)
            return
        for w in range(1, rem + 1):
            yield from rec(rem - w, parts + [w])
    yield from rec(total, [])


class _GluingState:
    """Incremental arc-identification engine with rollback, used to prune
    the dual-graph census.  Cells live on nf pre-quotient 2l-gons."""

    def __init__(self, nf: int, L: int):
        self.nf = nf
        self.L = L
        n = nf * L
        self.vp = list(range(n))       # vertex union-find (no ranks)
        self.ep = list(range(n))       # edge union-find with signs
        self.esign = [1] * n
        self.trail = []

    def vfind(self, x):
        while self.vp[x] != x:
            x = self.vp[x]
        return x

    def efind(self, x):
        sign = 1
        while self.ep[x] != x:
            sign *= self.esign[x]
            x = self.ep[x]
        return x, sign

    def mark(self):
        return len(self.trail)

    def rollback(self, mark):
        while len(self.trail) > mark:
            kind, idx, old_p, old_s = self.trail.pop()
            if kind == 0:
                self.vp[idx] = old_p
            else:
                self.ep[idx] = old_p
                self.esign[idx] = old_s

    def vunion(self, a, b) -> bool:
        ra, rb = self.vfind(a), self.vfind(b)
        if ra == rb:
            return True
        # parity = kind: vertices at even position are one kind
        if (ra % self.L) % 2 != (rb % self.L) % 2:
            return False
        hi, lo = max(ra, rb), min(ra, rb)
        self.trail.append((0, hi, self.vp[hi], 1))
        self.vp[hi] = lo
        return True

    def eunion(self, e1, d1, e2, d2) -> bool:
        r1, s1 = self.efind(e1)
        r2, s2 = self.efind(e2)
        rel = d1 * s1 * d2 * s2
        if r1 == r2:
            return rel == 1
        hi, lo = (r1, r2) if r1 > r2 else (r2, r1)
        self.trail.append((1, hi, self.ep[hi], self.esign[hi]))
        self.ep[hi] = lo
        self.esign[hi] = rel
        # endpoint merges: stored edge k runs from cell k to cell k+1 (mod L
        # within its polygon)
        u1, v1 = self._ends(e1, d1)
        u2, v2 = self._ends(e2, d2)
        return self.vunion(u1, u2) and self.vunion(v1, v2)

    def _ends(self, e, d):
        f, pos = divmod(e, self.L)
        u = f * self.L + pos
        v = f * self.L + (pos + 1) % self.L
        return (u, v) if d > 0 else (v, u)


def _census_dual(K: int, M: int, ell: int):
    """Geometric classes of connected diagrams with <= K faces and <= M
    connectors, enumerated through weighted decorated dual graphs with
    incremental gluing pruning."""
    total = 2 * ell
    comps = list(_compositions(total))
    seen = {}
    for nf in range(1, K + 1):
        for shape in itertools.product(comps, repeat=nf):
            slots = []
            for f, comp in enumerate(shape):
                pos = 0
                for w in comp:
                    slots.append((f, pos, w))
                    pos += w
            state = _GluingState(nf, total)
            _census_dfs(shape, slots, 0, state, [], [], M, total, nf, seen)
    return list(seen.values())


def _arc_edges(state: _GluingState, f: int, start: int, w: int):
    return [(f * state.L + (start + k) % state.L, 1) for k in range(w)]


def _census_dfs(shape, slots, k, state, conn_weights, conn_arcs, M, total,
                nf, seen):
    if k == len(slots):
        runs = []
        idx = 0
        for f, comp in enumerate(shape):
            runs.append(tuple(slots[idx + i][3] for i in range(len(comp))))
            idx += len(comp)
        g = DualGraph(nf, tuple(conn_weights), tuple(runs))
        try:
            D = decode_dual(g)
        except ValueError:
            return
        if D.area != nf or len(connectors(D)) > len(conn_weights) or \
                len(connectors(D)) > M:
            return
        key = geometric_key(D)
        seen.setdefault(key, D)
        return
    f, start, w = slots[k][:3]
    arc = _arc_edges(state, f, start, w)
    # option: a brand-new connector (canonical sign +1)
    if len(conn_weights) < M:
        slots[k] = (f, start, w, (len(conn_weights), 1))
        conn_weights.append(w)
        conn_arcs.append(arc)
        _census_dfs(shape, slots, k + 1, state, conn_weights, conn_arcs, M,
                    total, nf, seen)
        conn_weights.pop()
        conn_arcs.pop()
        slots[k] = (f, start, w)
    # option: an existing connector, either direction
    for c in range(len(conn_weights)):
        if conn_weights[c] != w:
            continue
        base = conn_arcs[c]
        for sign in (1, -1):
            if sign > 0:
                pairs = list(zip(base, arc))
            else:
                pairs = list(zip(base, [(e, -d) for (e, d) in reversed(arc)]))
            mark = state.mark()
            ok = True
            for (e1, d1), (e2, d2) in pairs:
                if not state.eunion(e1, d1, e2, d2):
                    ok = False
                    break
            if ok:
                slots[k] = (f, start, w, (c, sign))
                _census_dfs(shape, slots, k + 1, state, conn_weights,
                            conn_arcs, M, total, nf, seen)
                slots[k] = (f, start, w)
            state.rollback(mark)


def _census_gluing(K: int, M: int, ell: int, budget: int = 500000):
    """Independent oracle: closure of single directed-edge identifications
    starting from disjoint unions of discs."""
    out = {}
    for nf in range(1, K + 1):
        start = disjoint_union(*[disc(ell) for _ in range(nf)])
        seen = {geometric_key(start): start}
        frontier = dict(seen)
        work = 0
        while frontier:
            nxt = {}
            for D in frontier.values():
                ne = len(D.edges)
                for e1 in range(ne):
                    for e2 in range(e1 + 1, ne):
                        for d in (1, -1):
                            work += 1
                            if work > budget:
                                raise BudgetExceeded(
                                    "gluing closure budget hit")
                            try:
                                D2 = quotient(D, [((e1, 1), (e2, d))],
                                              require_connected=False)
                            except ValueError:
                                continue
                            key = geometric_key(D2)
                            if key not in seen:
                                seen[key] = D2
                                nxt[key] = D2
            frontier = nxt
        for key, D in seen.items():
            if not D.is_connected():
                continue
            if len(connectors(D)) <= M:
                out.setdefault(key, D)
    return list(out.values())


def _set_partitions(n: int):
    if n == 0:
        yield []
        return
    for rest in _set_partitions(n - 1):
        for i in range(len(rest)):
            yield rest[:i] + [rest[i] + [n - 1]] + rest[i + 1:]
        yield rest + [[n - 1]]


def decorate_all(D: Diagram, require_reduced: bool = True):
    """All decorated variants (distinguished vertices, orientations, face
    partition), deduplicated by canonical key."""
    F = D.area
    factor_pos = []
    for f in range(F):
        L = D.face_len(f)
        factor_pos.append([p for p in range(L)
                           if D.kinds[D.face_vertex(f, p)] == FACTOR])
    seen = {}
    for partition in _set_partitions(F):
        cls = [0] * F
        for ci, block in enumerate(sorted(partition)):
            for f in block:
                cls[f] = ci
        for dists in itertools.product(*factor_pos):
            for orients in itertools.product((1, -1), repeat=F):
                D2 = D.with_decorations(list(dists), list(orients), cls)
                if require_reduced and not is_reduced(D2):
                    continue
                key = canonical_key(D2, decorated=True)
                if key not in seen:
                    seen[key] = D2
    return list(seen.values())


def enumerate_bounded(K: int, M: int, ell: int, *, oracle: bool = False,
                      budget: int = 500000):
    """Duplicate-free census of (K, M)-bounded reduced decorated diagram
    classes with 2*ell-gon faces.

    The primary route enumerates weighted decorated dual graphs (with
    incremental gluing pruning); ``oracle=True`` switches to an
    independent single-edge gluing closure.
    """
    if oracle:
        geoms = _census_gluing(K, M, ell, budget)
    else:
        geoms = _census_dual(K, M, ell)
    out = []
    for D in geoms:
        out.extend(decorate_all(D, require_reduced=True))
    keyed = sorted((canonical_key(d), i) for i, d in enumerate(out))
    return [out[i] for _, i in keyed]


# ---------------------------------------------------------------------------
# Random diagrams.
# ---------------------------------------------------------------------------

def random_diagram(rng, ell: int, max_faces: int = 3, max_gluings: int = 3,
                   tries: int = 80) -> Diagram:
    """A random small diagram: disjoint discs plus random edge
    identifications, randomly decorated; always valid and connected."""
    for _ in range(tries):
        nf = int(rng.integers(1, max_faces + 1))
        D = disjoint_union(*[disc(ell) for _ in range(nf)])
        ng = int(rng.integers(max(nf - 1, 0), max_gluings + 1))
        ok = True
        for _ in range(ng):
            ne = len(D.edges)
            e1 = int(rng.integers(0, ne))
            e2 = int(rng.integers(0, ne))
            d = 1 if rng.integers(0, 2) else -1
            if e1 == e2:
                ok = False
                break
            try:
                D = quotient(D, [((e1, 1), (e2, d))],
                             require_connected=False)
            except ValueError:
                ok = False
                break
        if not ok or not D.is_connected():
            continue
        try:
            D.validate()
        except ValueError:
            continue
        F = D.area
        dists = []
        orients = []
        for f in range(F):
            pos = [p for p in range(D.face_len(f))
                   if D.kinds[D.face_vertex(f, p)] == FACTOR]
            dists.append(pos[int(rng.integers(0, len(pos)))])
            orients.append(1 if rng.integers(0, 2) else -1)
        blocks = list(_set_partitions(F))
        partition = blocks[int(rng.integers(0, len(blocks)))]
        cls = [0] * F
        for ci, block in enumerate(sorted(partition)):
            for f in block:
                cls[f] = ci
        return D.with_decorations(dists, orients, cls).validate()
    return disc(ell)


# ---------------------------------------------------------------------------
# Decorations and fulfillability.
# ---------------------------------------------------------------------------

@dataclass
class Decoration:
    """Witness: relator index per face class plus induced rotation elements
    at every face corner (stored in each cycle's forward direction)."""
    class_words: tuple
    rho: dict            # (face, position) -> (factor, element)


class Unfulfillable:
    def __bool__(self):
        return False

    def __repr__(self):
        return "Unfulfillable"


UNFULFILLABLE = Unfulfillable()


def _corner_rho(D: Diagram, f: int, word: FreeProductWord, fp: FreeProduct):
    face = D.faces[f]
    L = len(face.cycle)
    ell = L // 2
    if len(word) != ell or face.dist_pos < 0:
        return None
    out = {}
    for k in range(1, ell + 1):
        p = (face.dist_pos + face.orientation * 2 * (k - 1)) % L
        syl = word.syllables[k - 1]
        G = fp.factors[syl.factor]
        if face.orientation > 0:
            out[p] = (syl.factor, G.inv(syl.element))
        else:
            out[p] = (syl.factor, syl.element)
    return out


def _vertex_corners(D: Diagram):
    at = {}
    for f, face in enumerate(D.faces):
        L = len(face.cycle)
        for p in range(L):
            v = D.face_vertex(f, p)
            e_in = face.cycle[(p - 1) % L][0]
            e_out = face.cycle[p][0]
            at.setdefault(v, []).append((f, p, e_in, e_out))
    return at


def _link_is_single_cycle(D: Diagram, v: int, corners) -> bool:
    edges_at = {e for e, (a, b) in enumerate(D.edges) if v in (a, b)}
    node_deg = {e: 0 for e in edges_at}
    for (_, _, ei, eo) in corners:
        if ei == eo:
            return False
        node_deg[ei] += 1
        node_deg[eo] += 1
    if any(d != 2 for d in node_deg.values()):
        return False
    adj = {}
    for (_, _, ei, eo) in corners:
        adj.setdefault(ei, []).append(eo)
        adj.setdefault(eo, []).append(ei)
    start = next(iter(adj))
    seen = {start}
    stack = [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(edges_at)


def _link_cycle_product_ok(D: Diagram, fp: FreeProduct, corners, rho) -> bool:
    factor = rho[(corners[0][0], corners[0][1])][0]
    G = fp.factors[factor]
    f0, p0, a0, b0 = corners[0]
    acc = rho[(f0, p0)][1]
    cur = b0
    unused = set(range(1, len(corners)))
    while unused:
        nxt = None
        for idx in sorted(unused):
            _, _, a, b = corners[idx]
            if cur in (a, b):
                nxt = idx
                break
        if nxt is None:
            return False
        unused.discard(nxt)
        f, p, a, b = corners[nxt]
        val = rho[(f, p)][1]
        if a == cur:
            acc = G.mul(acc, val)
            cur = b
        else:
            acc = G.mul(acc, G.inv(val))
            cur = a
    return cur == a0 and G.is_identity(acc)


def check_decoration(D: Diagram, fp: FreeProduct, rho) -> bool:
    """Same-factor condition at every shared factor vertex plus the cyclic
    product-identity condition at factor vertices whose link is a single
    cycle (degree-2 inverse pairs are the 2-cycle case)."""
    for v, corners in _vertex_corners(D).items():
        if D.kinds[v] != FACTOR:
            continue
        if any(ei == eo for (_, _, ei, eo) in corners):
            return False
        factors = {rho[(f, p)][0] for (f, p, _, _) in corners}
        if len(factors) > 1:
            return False
        if _link_is_single_cycle(D, v, corners):
            if not _link_cycle_product_ok(D, fp, corners, rho):
                return False
    return True


def fulfillability(D: Diagram, relators: Sequence[FreeProductWord],
                   fp: FreeProduct, max_assignments: int = 250_000):
    """Search relator assignments per face class; return a Decoration
    witness or UNFULFILLABLE."""
    C = D.num_classes()
    if len(relators) ** C > max_assignments:
        raise SearchBudgetExceeded(
            f"{len(relators)}^{C} assignments exceed {max_assignments}")
    class_faces = {}
    for f, c in enumerate(D.face_class):
        class_faces.setdefault(c, []).append(f)
    classes = sorted(class_faces)
    for choice in itertools.product(range(len(relators)), repeat=C):
        rho = {}
        ok = True
        for c, ridx in zip(classes, choice):
            for f in class_faces[c]:
                part = _corner_rho(D, f, relators[ridx], fp)
                if part is None:
                    ok = False
                    break
                rho.update(((f, p), val) for p, val in part.items())
            if not ok:
                break
        if ok and check_decoration(D, fp, rho):
            return Decoration(tuple(choice), rho)
    return UNFULFILLABLE


def decoration_reads(D: Diagram, fp: FreeProduct, deco: Decoration,
                     relators: Sequence[FreeProductWord]) -> bool:
    """Soundness: re-reading rotation-element inverses around each face in
    its orientation from its distinguished vertex spells its relator."""
    classes = sorted(set(D.face_class))
    class_word = {c: relators[r] for c, r in zip(classes, deco.class_words)}
    for f, face in enumerate(D.faces):
        L = len(face.cycle)
        ell = L // 2
        word = class_word[D.face_class[f]]
        for k in range(1, ell + 1):
            p = (face.dist_pos + face.orientation * 2 * (k - 1)) % L
            i, x = deco.rho[(f, p)]
            G = fp.factors[i]
            got = G.inv(x) if face.orientation > 0 else x
            syl = word.syllables[k - 1]
            if (i, got) != (syl.factor, syl.element):
                return False
    return True


# ---------------------------------------------------------------------------
# Pieces and the small-cancellation condition.
# ---------------------------------------------------------------------------

def max_piece_ids(table: BallTable, a: np.ndarray, b: np.ndarray,
                  same_instance: bool) -> int:
    """Maximal forced-overlap length in syllables between two relators
    (alphabet-id rows), over all cyclic shifts and both orientations.

    The trivial full overlap of a relator with itself at shift zero is
    excluded; a full-cycle coincidence caps at ell - 1 (the longest proper
    shared path has ell - 1 interior factor vertices).
    """
    ell = int(a.shape[0])
    run = max(max_cyclic_run(a, b, exclude_zero_shift=same_instance),
              max_cyclic_run(a, table.invert_ids(b)))
    return min(run, ell - 1)


def pieces(r1: FreeProductWord, r2: FreeProductWord, table: BallTable,
           same_instance: bool = False) -> int:
    return max_piece_ids(table, table.encode_word(r1),
                         table.encode_word(r2), same_instance)


def lambda_max(ids: np.ndarray, table: BallTable) -> Fraction:
    """Maximal piece fraction over all relator pairs (self-overlaps at
    nonzero shift and inverses included)."""
    R, ell = ids.shape
    best = 0
    for i in range(R):
        for j in range(i, R):
            best = max(best, max_piece_ids(table, ids[i], ids[j],
                                           same_instance=(i == j)))
            if best >= ell - 1:
                return Fraction(best, ell)
    return Fraction(best, ell)


def c_prime_sixth(ids: np.ndarray, table: BallTable) -> bool:
    """Every piece strictly shorter than ell/6 syllables."""
    return lambda_max(ids, table) < Fraction(1, 6)


# ---------------------------------------------------------------------------
# External-edge criterion for 2-complexes of equal-length faces.
# ---------------------------------------------------------------------------

@dataclass
class ExternalEdgeReport:
    conclusion: bool
    witnesses: tuple
    hypothesis_holds: bool
    hypothesis_exhaustive: bool


def _connected_face_subsets(D: Diagram, max_size: int):
    F = D.area
    face_edges = [set(e for (e, _) in face.cycle) for face in D.faces]
    share = [[bool(face_edges[i] & face_edges[j]) for j in range(F)]
             for i in range(F)]
    for size in range(1, min(F, max_size) + 1):
        for comb in itertools.combinations(range(F), size):
            seen = {comb[0]}
            stack = [comb[0]]
            inset = set(comb)
            while stack:
                x = stack.pop()
                for y in inset:
                    if y not in seen and share[x][y]:
                        seen.add(y)
                        stack.append(y)
            if len(seen) == size:
                yield comb


def _sub_cancellation(D: Diagram, faces) -> int:
    deg = {}
    for f in faces:
        for (e, _) in D.faces[f].cycle:
            deg[e] = deg.get(e, 0) + 1
    return sum(d - 1 for d in deg.values())


def greendlinger_check(D: Diagram, d,
                       max_hypothesis_area: int = 6) -> ExternalEdgeReport:
    """True iff at least two faces each expose at least L(1 - 5d/2)
    external (degree <= 1) edges.  Also reports whether every connected
    subcomplex Y' satisfies can(Y') < d L Area(Y'), checked exhaustively
    up to the configured area."""
    if D.area < 2:
        raise ValueError("needs at least two faces")
    lengths = {D.face_len(f) for f in range(D.area)}
    if len(lengths) != 1:
        raise ValueError("all faces must have equal boundary length")
    L = lengths.pop()
    d = Fraction(d)
    threshold = L * (1 - Fraction(5, 2) * d)
    ext = [external_edge_count(D, f) for f in range(D.area)]
    witnesses = tuple(f for f in range(D.area) if ext[f] >= threshold)
    hypothesis = True
    for faces in _connected_face_subsets(D, max_hypothesis_area):
        if _sub_cancellation(D, faces) >= d * L * len(faces):
            hypothesis = False
            break
    return ExternalEdgeReport(len(witnesses) >= 2, witnesses, hypothesis,
                              D.area <= max_hypothesis_area)


# ---------------------------------------------------------------------------
# Two-face overlap diagrams built from matching runs.
# ---------------------------------------------------------------------------

def two_face_overlap(ell: int, q: int, opposite: bool = True) -> Diagram:
    """Two 2*ell-gons glued along a path of 2q edges (q syllables) with
    endpoints at central vertices."""
    if not (1 <= q <= ell - 1):
        raise ValueError("overlap must cover 1..ell-1 syllables")
    D = disjoint_union(disc(ell), disc(ell))
    return glue_segment(D, 0, 0, 1, 2 * q - 1, 2 * q, opposite=opposite)


def overlap_diagrams_from_runs(ids: np.ndarray, table: BallTable,
                               min_q: int = 1):
    """Maximal matching runs between relator pairs as geometric two-face
    overlap diagrams: yields (i, j, q, diagram)."""
    R, ell = ids.shape
    for i in range(R):
        for j in range(i, R):
            q = max_piece_ids(table, ids[i], ids[j], same_instance=(i == j))
            if q >= min_q:
                yield (i, j, q, two_face_overlap(ell, q))


# ---------------------------------------------------------------------------
# Serialization (diagram interchange format).
# ---------------------------------------------------------------------------

def diagram_to_text(D: Diagram) -> str:
    """Canonical text form: equal diagrams serialize identically."""
    D = _relabel_canonical(D)
    lines = ["# fpdensity diagram v1",
             "kinds = " + " ".join("f" if k == FACTOR else "c"
                                   for k in D.kinds)]
    for (u, v) in D.edges:
        lines.append(f"edge {u} {v}")
    for f, face in enumerate(D.faces):
        cyc = " ".join(f"{e}{'+' if d > 0 else '-'}" for (e, d) in face.cycle)
        lines.append(f"face dist={face.dist_pos} or={face.orientation:+d} "
                     f"class={D.face_class[f]} : {cyc}")
    return "\n".join(lines) + "\n"


def diagram_from_text(text: str) -> Diagram:
    kinds = ()
    edges = []
    faces = []
    classes = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("kinds"):
            toks = line.split("=", 1)[1].split()
            kinds = tuple(FACTOR if t == "f" else CENTRAL for t in toks)
        elif line.startswith("edge"):
            _, u, v = line.split()
            edges.append((int(u), int(v)))
        elif line.startswith("face"):
            head, cyc = line.split(":")
            parts = dict(p.split("=") for p in head.split()[1:])
            cycle = tuple((int(tok[:-1]), 1 if tok[-1] == "+" else -1)
                          for tok in cyc.split())
            faces.append(DiagramFace(cycle, int(parts["dist"]),
                                     int(parts["or"])))
            classes.append(int(parts["class"]))
    return Diagram(kinds, tuple(edges), tuple(faces),
                   tuple(classes)).validate()


def _relabel_canonical(D: Diagram) -> Diagram:
    best = None
    for f0 in range(len(D.faces)):
        for rot in range(D.face_len(f0)):
            for flip in (1, -1):
                for enc in _encodings(D, f0, rot, flip, True):
                    if best is None or enc < best:
                        best = enc
    return _apply_encoding(best)


def _apply_encoding(enc) -> Diagram:
    face_tokens = enc[:-1]
    deco = enc[-1]
    nverts = 1 + max(t[2] for face in face_tokens for t in face)
    nedges = 1 + max(t[0] for face in face_tokens for t in face)
    kinds = [0] * nverts
    edges = [None] * nedges
    faces = []
    classes = []
    for fi, toks in enumerate(face_tokens):
        cyc = []
        L = len(toks)
        for p, (e, rel, v, kind) in enumerate(toks):
            kinds[v] = kind
            nxt_v = toks[(p + 1) % L][2]
            if edges[e] is None:
                edges[e] = (v, nxt_v)
                cyc.append((e, 1))
            else:
                cyc.append((e, rel))
        dp, orient, cls = deco[fi]
        faces.append(DiagramFace(tuple(cyc), dp, orient))
        classes.append(cls)
    return Diagram(tuple(kinds), tuple(edges), tuple(faces),
                   tuple(classes)).validate()
