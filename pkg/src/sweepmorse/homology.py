"""Betti numbers over Z/2 by sparse boundary-matrix column reduction."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components


class ComplexTooHighDimensional(ValueError):
    pass


class NotASurface(ValueError):
    pass


class BettiNumbers(NamedTuple):
    b0: int = 0
    b1: int = 0
    b2: int = 0
    b3: int = 0

    @property
    def euler_characteristic(self) -> int:
        return self.b0 - self.b1 + self.b2 - self.b3


class ReducedBetti(NamedTuple):
    """Reduced Betti numbers for indices -1, 0, 1, 2."""

    bm1: int
    b0: int
    b1: int
    b2: int

    def is_zero(self) -> bool:
        return not any(self)


def simplices_of(complex_) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Normalize a complex to vertex-label arrays of shapes (n0,), (n1,2), (n2,3), (n3,4).

    Accepts a :class:`~sweepmorse.mesh.TetMesh`, anything with a
    ``simplices()`` method, or a 4-sequence of simplex lists.
    """
    if hasattr(complex_, "simplices"):
        parts = complex_.simplices()
    elif hasattr(complex_, "tets") and hasattr(complex_, "faces"):
        parts = (np.arange(complex_.n_vertices), complex_.edges, complex_.faces, complex_.tets)
    else:
        parts = tuple(complex_) + ((),) * (4 - len(complex_))
    out = []
    for k, p in enumerate(parts):
        a = np.asarray(p, dtype=np.int64)
        a = np.unique(a.reshape(-1)) if k == 0 else np.unique(np.sort(a.reshape(-1, k + 1), axis=1), axis=0)
        out.append(a)
    return tuple(out)


def _keys(rows: np.ndarray, base: int) -> np.ndarray:
    key = np.zeros(len(rows), dtype=np.int64)
    for c in range(rows.shape[1]):
        key = key * base + rows[:, c]
    return key


def boundary_indices(parts) -> list[np.ndarray]:
    """Row indices of every boundary-matrix column, per dimension 1..3.

    Simplices are relabelled to compact vertex ids and sorted, so the result
    describes the complex in lexicographic simplex order. Entry ``k - 1`` of
    the returned list has shape ``(n_k, k + 1)``.
    """
    verts = parts[0]
    labels = np.unique(verts)
    base = max(len(labels), 1)
    relabelled = [np.arange(len(labels))]
    for k in (1, 2, 3):
        s = parts[k]
        if len(s):
            idx = np.searchsorted(labels, s)
            idx = np.clip(idx, 0, len(labels) - 1)
            if not np.all(labels[idx] == s):
                raise ValueError("complex is not closed under boundary (missing vertex)")
            s = np.sort(idx, axis=1)
            s = s[np.argsort(_keys(s, base), kind="stable")]
        relabelled.append(s.reshape(-1, k + 1))
    cols = []
    for k in (1, 2, 3):
        s = relabelled[k]
        if k == 1:
            cols.append(s.copy())
            continue
        low = relabelled[k - 1]
        low_keys = _keys(low, base)
        c = np.empty(s.shape, dtype=np.int64)
        for drop in range(k + 1):
            face = np.delete(s, drop, axis=1)
            fk = _keys(face, base)
            pos = np.searchsorted(low_keys, fk)
            pos = np.clip(pos, 0, max(len(low_keys) - 1, 0))
            if len(fk) and (len(low_keys) == 0 or not np.all(low_keys[pos] == fk)):
                raise ValueError(f"complex is not closed under boundary (missing {k - 1}-simplex)")
            c[:, drop] = pos
        cols.append(c)
    return cols


def reduce_columns(cols: np.ndarray, skip: set[int] | frozenset = frozenset()) -> dict[int, int]:
    """Column-reduce a Z/2 matrix given as per-column row lists.

    Returns the map pivot row -> column of every nonzero reduced column; its
    size is the rank. Columns in ``skip`` are known to reduce to zero.
    """
    pivots: dict[int, set[int]] = {}
    owner: dict[int, int] = {}
    for j, rows in enumerate(cols.tolist()):
        if j in skip:
            continue
        col = set(rows)
        while col:
            low = max(col)
            other = pivots.get(low)
            if other is None:
                pivots[low] = col
                owner[low] = j
                break
            col ^= other
    return owner


def boundary_ranks(parts) -> tuple[int, int, int]:
    """Ranks of the boundary maps d1, d2, d3.

    Higher dimensions are reduced first so their pivots can clear columns
    one dimension down (a pivot row is a cycle that needs no reduction).
    """
    cols = boundary_indices(parts)
    ranks = [0, 0, 0]
    clear: set[int] = set()
    for k in (3, 2, 1):
        owner = reduce_columns(cols[k - 1], clear)
        ranks[k - 1] = len(owner)
        clear = set(owner)
    return tuple(ranks)


def components(verts: np.ndarray, edges: np.ndarray) -> tuple[int, np.ndarray]:
    """Connected components of the 1-skeleton: (count, label per vertex in ``verts`` order)."""
    labels = np.unique(verts)
    n = len(labels)
    if n == 0:
        return 0, np.zeros(0, dtype=np.int64)
    e = np.searchsorted(labels, edges.reshape(-1, 2))
    g = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    count, lab = connected_components(g, directed=False)
    return count, lab[np.searchsorted(labels, verts)]


def betti(complex_) -> BettiNumbers:
    """Z/2 Betti numbers (b0, b1, b2, b3) of a complex closed under boundary."""
    parts = simplices_of(complex_)
    n = [len(p) for p in parts]
    if n[0] == 0:
        return BettiNumbers()
    r1, r2, r3 = boundary_ranks(parts)
    b = BettiNumbers(n[0] - r1, n[1] - r1 - r2, n[2] - r2 - r3, n[3] - r3)
    b0_fast, _ = components(parts[0], parts[1])
    if b0_fast != b.b0:
        raise RuntimeError(f"rank reduction gave b0={b.b0} but union-find found {b0_fast}")
    return b


def reduced_betti(complex_) -> ReducedBetti:
    """Reduced Betti numbers of an (at most 2-dimensional) complex.

    The empty complex has ``bm1 = 1`` and everything else zero.
    """
    parts = simplices_of(complex_)
    if len(parts[3]):
        raise ComplexTooHighDimensional("reduced_betti expects at most a 2-complex")
    if len(parts[0]) == 0:
        return ReducedBetti(1, 0, 0, 0)
    b = betti(parts)
    return ReducedBetti(0, b.b0 - 1, b.b1, b.b2)


def surface_betti_fast(complex_) -> BettiNumbers:
    """Betti numbers of a triangulated surface from connectivity and Euler characteristic.

    Valid only when every edge lies on at most two triangles. A connected
    component contributes to b2 exactly when it has no boundary edge.
    """
    verts, edges, faces, tets = simplices_of(complex_)
    if len(tets):
        raise NotASurface("complex contains tetrahedra")
    if len(verts) == 0:
        return BettiNumbers()
    fe = np.concatenate([faces[:, [0, 1]], faces[:, [0, 2]], faces[:, [1, 2]]])
    if len(fe):
        uniq, cnt = np.unique(fe, axis=0, return_counts=True)
        if cnt.max() > 2:
            raise NotASurface("an edge has more than two incident triangles")
        border = uniq[cnt == 1]
    else:
        border = np.zeros((0, 2), dtype=np.int64)
    b0, comp = components(verts, edges)
    labels = verts
    has_face = np.zeros(b0, dtype=bool)
    if len(faces):
        has_face[comp[np.searchsorted(labels, faces[:, 0])]] = True
    has_border = np.zeros(b0, dtype=bool)
    if len(border):
        has_border[comp[np.searchsorted(labels, border[:, 0])]] = True
    b2 = int(np.sum(has_face & ~has_border))
    chi = len(labels) - len(edges) + len(faces)
    return BettiNumbers(b0, b0 + b2 - chi, b2, 0)


def euler_characteristic(complex_) -> int:
    v, e, f, t = simplices_of(complex_)
    return len(v) - len(e) + len(f) - len(t)
