"""Level sets by marching tetrahedra, sublevel complexes, and Betti transitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .homology import BettiNumbers, betti, surface_betti_fast
from .laplace import as_field
from .mesh import TET_EDGES, SubComplex, TetMesh
from .morse import CriticalReport

# allowed level-set Betti changes (d b0, d b1, d b2) when crossing a saddle
PATTERNS = {
    "1-saddle": {(0, 2, 0): "b1+2", (-1, 0, -1): "b0b2-1"},
    "2-saddle": {(0, -2, 0): "b1-2", (1, 0, 1): "b0b2+1"},
}


class ValueOutOfRange(ValueError):
    pass


class PatternMismatch(RuntimeError):
    pass


class TopologyNotConstant(RuntimeError):
    pass


def _case_table():
    """For each above-mask of a sorted tet: ('tri', edges) or ('quad', cycle) in local edge ids."""
    local = {tuple(e): i for i, e in enumerate(TET_EDGES.tolist())}

    def eid(a, b):
        return local[(min(a, b), max(a, b))]

    table = {}
    for mask in range(16):
        up = [i for i in range(4) if mask >> i & 1]
        dn = [i for i in range(4) if not mask >> i & 1]
        if len(up) in (0, 4):
            continue
        if len(up) == 1 or len(dn) == 1:
            lone, rest = (up[0], dn) if len(up) == 1 else (dn[0], up)
            table[mask] = ("tri", [eid(lone, r) for r in rest])
        else:
            p, q = dn
            r, s = up
            table[mask] = ("quad", [eid(p, r), eid(p, s), eid(q, s), eid(q, r)])
    return table


_CASES = _case_table()


@dataclass
class LevelSetSurface:
    """Welded triangle surface of one level of a PL field.

    Each surface vertex sits on one mesh edge (``source_edges``) and is
    shared by every triangle crossing that edge.
    """

    value: float
    requested: float
    points: np.ndarray
    triangles: np.ndarray
    source_edges: np.ndarray
    triangle_tets: np.ndarray
    edges: np.ndarray = field(init=False)
    boundary_edge: np.ndarray = field(init=False)

    def __post_init__(self):
        t = self.triangles
        all_e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [0, 2]], t[:, [1, 2]]]), axis=1)
        if len(all_e):
            self.edges, cnt = np.unique(all_e, axis=0, return_counts=True)
        else:
            self.edges, cnt = np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
        self.boundary_edge = cnt == 1
        self.edge_valence = cnt

    @property
    def nudged(self) -> bool:
        return self.value != self.requested

    def simplices(self):
        return (np.arange(len(self.points)), self.edges, self.triangles, np.zeros((0, 4), dtype=np.int64))

    def betti(self, fast: bool = True) -> BettiNumbers:
        return surface_betti_fast(self) if fast else betti(self)

    def betti3(self, fast: bool = True) -> tuple[int, int, int]:
        b = self.betti(fast)
        return b.b0, b.b1, b.b2

    @property
    def euler_characteristic(self) -> int:
        return len(self.points) - len(self.edges) + len(self.triangles)


def nudge_level(values: np.ndarray, a: float) -> float:
    """Move ``a`` off every vertex value, upward by the smallest representable
    steps, so vertices at ``a`` fall on the lower side (matching the
    ``(value, index)`` order where they precede anything above ``a``)."""
    hits = values == a
    while np.any(hits):
        a = np.nextafter(a, np.inf)
        hits = values == a
    return float(a)


def extract_level_set(mesh: TetMesh, field_, a: float) -> LevelSetSurface:
    """Marching-tetrahedra surface of ``f == a`` with vertices welded per mesh edge.

    Quads are split along the diagonal that contains the lowest mesh-edge
    index among the quad's four edges.
    """
    f = as_field(field_).values
    if not f.min() < a < f.max():
        raise ValueOutOfRange(f"level {a} is not strictly inside ({f.min()}, {f.max()})")
    value = nudge_level(f, a)
    above = f > value
    mask = (above[mesh.tets] * np.array([1, 2, 4, 8])).sum(axis=1)

    tris_local, tet_ids = [], []
    for m_, (kind, loc) in _CASES.items():
        ts = np.nonzero(mask == m_)[0]
        if not len(ts):
            continue
        ge = mesh.tet_edges[ts][:, loc]
        if kind == "tri":
            tris_local.append(ge)
            tet_ids.append(ts)
        else:
            pr, ps, qs, qr = ge.T
            diag_a = np.minimum(pr, qs) < np.minimum(ps, qr)
            t1 = np.where(diag_a[:, None], np.stack([pr, ps, qs], 1), np.stack([pr, ps, qr], 1))
            t2 = np.where(diag_a[:, None], np.stack([pr, qs, qr], 1), np.stack([ps, qs, qr], 1))
            tris_local += [t1, t2]
            tet_ids += [ts, ts]
    if tris_local:
        tri_edges = np.concatenate(tris_local)
        tri_tets = np.concatenate(tet_ids)
        order = np.lexsort((tri_edges.min(axis=1), tri_tets))
        tri_edges, tri_tets = tri_edges[order], tri_tets[order]
    else:
        tri_edges = np.zeros((0, 3), dtype=np.int64)
        tri_tets = np.zeros(0, dtype=np.int64)

    src, tris = np.unique(tri_edges, return_inverse=True)
    tris = tris.reshape(-1, 3)
    e = mesh.edges[src]
    fa, fb = f[e[:, 0]], f[e[:, 1]]
    t = (value - fa) / (fb - fa)
    P = mesh.vertices
    pts = P[e[:, 0]] + t[:, None] * (P[e[:, 1]] - P[e[:, 0]])
    return LevelSetSurface(value, float(a), pts, tris, src, tri_tets)


def extract_sublevel_complex(mesh: TetMesh, field_, a: float) -> SubComplex:
    """All simplices whose vertices all have value <= ``a``."""
    f = as_field(field_).values
    inside = f <= a
    return SubComplex(mesh,
                      np.nonzero(inside)[0],
                      np.nonzero(inside[mesh.edges].all(axis=1))[0],
                      np.nonzero(inside[mesh.faces].all(axis=1))[0],
                      np.nonzero(inside[mesh.tets].all(axis=1))[0])


def level_betti(mesh: TetMesh, field_, a: float, check: bool = False) -> tuple[int, int, int]:
    surf = extract_level_set(mesh, field_, a)
    b = surf.betti3(fast=True)
    if check:
        slow = surf.betti3(fast=False)
        if slow != b:
            raise RuntimeError(f"surface Betti fast path {b} disagrees with reduction {slow}")
    return b


@dataclass(frozen=True)
class TransitionRecord:
    vertex: int
    kind: str
    value: float
    below_level: float
    above_level: float
    betti_below: tuple[int, int, int]
    betti_above: tuple[int, int, int]
    pattern: str | None

    @property
    def delta(self) -> tuple[int, int, int]:
        return tuple(b - a for a, b in zip(self.betti_below, self.betti_above))

    def as_dict(self) -> dict:
        return {"vertex": self.vertex, "type": self.kind, "value": self.value,
                "below_level": self.below_level, "above_level": self.above_level,
                "betti_below": list(self.betti_below), "betti_above": list(self.betti_above),
                "delta": list(self.delta), "pattern": self.pattern}


@dataclass(frozen=True)
class IntervalSample:
    lower: float
    upper: float
    levels: tuple[float, ...]
    betti: tuple[tuple[int, int, int], ...]

    @property
    def constant(self) -> bool:
        return len(set(self.betti)) == 1

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "levels": list(self.levels),
                "betti": [list(b) for b in self.betti], "constant": self.constant}


def interval_anchors(field_, report: CriticalReport) -> list[float]:
    f = as_field(field_).values
    return [float(f.min())] + [e.value for e in report.interior_critical()] + [float(f.max())]


def sample_intervals(mesh: TetMesh, field_, report: CriticalReport, samples: int = 3,
                     check: bool = False) -> list[IntervalSample]:
    """Level-set Betti numbers at ``samples`` evenly spaced values strictly
    inside each gap between consecutive critical (or extreme) values."""
    anchors = interval_anchors(field_, report)
    out = []
    for lo, hi in zip(anchors[:-1], anchors[1:]):
        if not hi > lo:
            out.append(IntervalSample(lo, hi, (), ()))
            continue
        levels = tuple(lo + (hi - lo) * (i + 1) / (samples + 1) for i in range(samples))
        out.append(IntervalSample(lo, hi, levels,
                                  tuple(level_betti(mesh, field_, a, check) for a in levels)))
    return out


def verify_transitions(mesh: TetMesh, field_, report: CriticalReport, *,
                       samples: int = 3, strict: bool = True) -> list[TransitionRecord]:
    """Level-set Betti change across every interior critical vertex.

    Level sets are taken at the midpoints of the gaps to the neighbouring
    critical values (or to the field's extremes). With ``strict`` a change
    outside the allowed saddle patterns raises :class:`PatternMismatch` and
    a non-constant gap raises :class:`TopologyNotConstant`.
    """
    crit = report.interior_critical()
    if not crit:
        return []
    anchors = interval_anchors(field_, report)
    mids = [0.5 * (lo + hi) for lo, hi in zip(anchors[:-1], anchors[1:])]
    betti_at = [level_betti(mesh, field_, a) for a in mids]
    records = []
    for i, e in enumerate(crit):
        before, after = betti_at[i], betti_at[i + 1]
        delta = tuple(b - a for a, b in zip(before, after))
        pattern = PATTERNS.get(e.kind, {}).get(delta)
        records.append(TransitionRecord(e.vertex, e.kind, e.value, mids[i], mids[i + 1],
                                        before, after, pattern))
    if strict:
        bad = [r for r in records if r.pattern is None]
        if bad:
            r = bad[0]
            raise PatternMismatch(f"vertex {r.vertex} ({r.kind}) changes level-set Betti by "
                                  f"{r.delta}, which matches no allowed pattern")
        if samples:
            for s in sample_intervals(mesh, field_, report, samples):
                if not s.constant:
                    raise TopologyNotConstant(
                        f"level-set Betti numbers vary inside ({s.lower}, {s.upper}): {s.betti}")
    return records


def net_change(records: list[TransitionRecord]) -> tuple[int, int, int]:
    return tuple(int(sum(r.delta[k] for r in records)) for k in range(3))
