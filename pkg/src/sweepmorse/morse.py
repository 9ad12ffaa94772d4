"""PL critical vertices from the reduced homology of lower links."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .homology import ReducedBetti, reduced_betti
from .laplace import ScalarField, as_field
from .mesh import TetMesh, lower_link

KINDS = ("regular", "minimum", "1-saddle", "2-saddle", "maximum", "degenerate")
INDEX_OF = {"minimum": 0, "1-saddle": 1, "2-saddle": 2, "maximum": 3}
_DUAL = {"minimum": "maximum", "maximum": "minimum", "1-saddle": "2-saddle",
         "2-saddle": "1-saddle", "regular": "regular", "degenerate": "degenerate"}


def kind_from_reduced(rb: ReducedBetti) -> str:
    if rb.is_zero():
        return "regular"
    if rb.b0 + rb.b1 > 1:
        return "degenerate"
    if rb.bm1:
        return "minimum"
    if rb.b0:
        return "1-saddle"
    if rb.b1:
        return "2-saddle"
    return "maximum"


def dual_kind(kind: str) -> str:
    """Type of the same vertex under the negated field (interior vertices)."""
    return _DUAL[kind]


@dataclass(frozen=True)
class CriticalEntry:
    vertex: int
    boundary: bool
    reduced: ReducedBetti
    kind: str
    value: float

    @property
    def critical(self) -> bool:
        return self.kind != "regular"

    @property
    def index(self) -> int | None:
        return INDEX_OF.get(self.kind)

    def as_dict(self, mesh: TetMesh | None = None) -> dict:
        d = {"vertex": self.vertex, "location": "boundary" if self.boundary else "interior",
             "value": self.value, "type": self.kind, "reduced_betti": list(self.reduced)}
        if mesh is not None:
            d["position"] = [float(x) for x in mesh.vertices[self.vertex]]
        return d


def classify_vertex(mesh: TetMesh, field_, v: int) -> CriticalEntry:
    """Classify one vertex through the homology engine on its lower link."""
    f = as_field(field_)
    rb = reduced_betti(lower_link(mesh, v, f))
    return CriticalEntry(int(v), bool(mesh.boundary_vertex[v]), rb, kind_from_reduced(rb),
                         float(f.values[v]))


def lower_link_reduced_betti(mesh: TetMesh, field_) -> np.ndarray:
    """Reduced Betti vectors of every lower link at once, shape (n, 4).

    Uses the structure of vertex links (a 2-sphere inside, a disk on the
    boundary): b0 comes from a connectivity pass over all lower links
    simultaneously, b2 is 1 only when an interior lower link is the whole
    link, and b1 follows from the Euler characteristic.
    """
    rank = as_field(field_).rank
    n = mesh.n_vertices
    E, F, T = mesh.edges, mesh.faces, mesh.tets

    # lower-link vertices of v: edge (v, a) with a below v; only the upper
    # endpoint of an edge can see the other one as lower
    e_hi = np.where(rank[E[:, 0]] > rank[E[:, 1]], E[:, 0], E[:, 1])
    n_v = np.bincount(e_hi, minlength=n)
    # lower-link edges: face whose top vertex is v
    fr = rank[F]
    f_top = F[np.arange(len(F)), np.argmax(fr, axis=1)]
    n_e = np.bincount(f_top, minlength=n)
    tr = rank[T]
    t_top = T[np.arange(len(T)), np.argmax(tr, axis=1)]
    n_t = np.bincount(t_top, minlength=n)
    chi = n_v - n_e + n_t

    # components: nodes are edges (one lower-link vertex each, owned by the
    # edge's upper endpoint); a face joins its two edges at its top vertex
    order = np.argsort(fr, axis=1)
    sortedF = np.take_along_axis(F, order, axis=1)  # low, mid, top
    ea = mesh.edge_index(sortedF[:, [0, 2]])
    eb = mesh.edge_index(sortedF[:, [1, 2]])
    g = sparse.coo_matrix((np.ones(len(ea)), (ea, eb)), shape=(len(E), len(E)))
    _, lab = connected_components(g, directed=False)
    pairs = np.unique(np.stack([e_hi, lab], axis=1), axis=0)
    b0 = np.bincount(pairs[:, 0], minlength=n)

    full = (~mesh.boundary_vertex) & (n_t == np.bincount(T.ravel(), minlength=n))
    b2 = full.astype(np.int64)
    b1 = b0 + b2 - chi
    empty = n_v == 0
    out = np.zeros((n, 4), dtype=np.int64)
    out[:, 0] = empty
    out[:, 1] = np.where(empty, 0, b0 - 1)
    out[:, 2] = np.where(empty, 0, b1)
    out[:, 3] = b2
    return out


@dataclass
class CriticalReport:
    entries: list[CriticalEntry]

    def interior_critical(self) -> list[CriticalEntry]:
        """Interior critical vertices, ascending in tie-break order."""
        return [e for e in self.entries if e.critical and not e.boundary]

    def boundary_critical(self) -> list[CriticalEntry]:
        return [e for e in self.entries if e.critical and e.boundary]

    def counts(self, interior_only: bool = True) -> dict[str, int]:
        pool = self.interior_critical() if interior_only else [e for e in self.entries if e.critical]
        c = Counter(e.kind for e in pool)
        return {k: c.get(k, 0) for k in KINDS if k != "regular"}

    def __getitem__(self, v: int) -> CriticalEntry:
        return self._by_vertex[v]

    def __post_init__(self):
        self._by_vertex = {e.vertex: e for e in self.entries}


def classify_all(mesh: TetMesh, field_, *, method: str = "fast") -> CriticalReport:
    """Classify every vertex; entries come back in ascending tie-break order.

    ``method="fast"`` uses the vectorized link-structure computation;
    ``method="homology"`` runs the general reduction engine per vertex.
    """
    f = as_field(field_)
    order = f.order
    if method == "fast":
        rb = lower_link_reduced_betti(mesh, f)
        entries = []
        for v in order.tolist():
            r = ReducedBetti(*(int(x) for x in rb[v]))
            entries.append(CriticalEntry(v, bool(mesh.boundary_vertex[v]), r,
                                         kind_from_reduced(r), float(f.values[v])))
    elif method == "homology":
        entries = [classify_vertex(mesh, f, v) for v in order.tolist()]
    else:
        raise ValueError(f"unknown method {method!r}")
    return CriticalReport(entries)


def critical_values(report: CriticalReport) -> list[tuple[float, int, str]]:
    """(value, vertex, type) of interior critical vertices in tie-break order."""
    return [(e.value, e.vertex, e.kind) for e in report.interior_critical()]


def negated(field_: ScalarField) -> ScalarField:
    return -as_field(field_)
