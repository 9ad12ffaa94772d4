"""Piecewise-constant gradients and descent traces toward the base surface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .laplace import as_field
from .mesh import DegenerateTet, TetMesh

STATUSES = ("reached-base", "stalled-at-vertex", "stalled-at-saddle", "left-domain")


@dataclass(frozen=True)
class TetGradient:
    """One constant gradient vector per tet, shape (m, 3)."""

    vectors: np.ndarray

    def __len__(self):
        return len(self.vectors)


def compute_gradients(mesh: TetMesh, field_) -> TetGradient:
    """Gradient of the linear interpolant in every tet.

    Solves ``E g = df`` with ``E`` the three edge vectors from the tet's
    first vertex and ``df`` the matching value differences.
    """
    f = as_field(field_).values
    P = mesh.vertices[mesh.tets]
    E = P[:, 1:] - P[:, :1]
    df = f[mesh.tets[:, 1:]] - f[mesh.tets[:, :1]]
    det = np.linalg.det(E)
    scale = np.max(np.linalg.norm(E, axis=2), axis=1) ** 3
    bad = np.abs(det) <= 1e-14 * scale
    if np.any(bad):
        raise DegenerateTet(f"tet {int(np.nonzero(bad)[0][0])} is flat; its gradient is undefined")
    return TetGradient(np.linalg.solve(E, df[:, :, None])[:, :, 0])


@dataclass
class TracePath:
    points: np.ndarray
    tets: np.ndarray
    status: str
    start_value: float
    start: object = None

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


# ---------------------------------------------------------------- geometry
def _bary_frame(X: np.ndarray):
    """For simplex corners ``X`` (k+1, 3): a function mapping a point and a
    direction to barycentric coordinates and their rates."""
    B = (X[1:] - X[0]).T  # 3 x k
    pinv = np.linalg.pinv(B)

    def coords(p, d):
        mu = pinv @ (p - X[0])
        rate = pinv @ d
        return np.concatenate([[1 - mu.sum()], mu]), np.concatenate([[-rate.sum()], rate])

    return coords


def _tangent(X: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Projection of ``g`` onto the affine span of simplex corners ``X``."""
    B = (X[1:] - X[0]).T
    Q, _ = np.linalg.qr(B)
    return Q @ (Q.T @ g)


class _Tracer:
    def __init__(self, mesh: TetMesh, f: np.ndarray, grads: TetGradient, critical, base_tol, eps):
        self.m = mesh
        self.f = f
        self.g = grads.vectors
        self.critical = set(int(v) for v in critical)
        self.base_tol = base_tol
        span = np.ptp(mesh.vertices, axis=0).max()
        self.eps = eps
        self.len_eps = eps * span
        self._frames = {}

    def frame(self, simplex):
        key = tuple(simplex)
        fr = self._frames.get(key)
        if fr is None:
            fr = self._frames[key] = _bary_frame(self.m.vertices[list(key)])
        return fr

    def tets_of(self, carrier):
        ts = self.m.vertex_tets(carrier[0])
        if len(carrier) > 1:
            want = set(carrier)
            ts = ts[[want <= set(t) for t in self.m.tets[ts].tolist()]]
        return ts

    def enters(self, simplex, p, d) -> bool:
        """True if moving from ``p`` along ``d`` goes strictly into ``simplex``:
        every barycentric coordinate that is zero at ``p`` must grow."""
        lam, rate = self.frame(simplex)(p, d / np.linalg.norm(d))
        off = lam <= self.eps
        return bool(np.all(rate[off] > 1e-9))

    def options(self, p, carrier):
        """Admissible moves from ``p``: (slope, simplex, direction, tet) with
        the steepest first. ``simplex`` is the cell we move inside."""
        m = self.m
        tets = self.tets_of(carrier)
        opts = []
        for t in tets.tolist():
            d = -self.g[t]
            if d @ d == 0:
                continue
            if self.enters(m.tets[t], p, d):
                opts.append((float(d @ d), tuple(m.tets[t].tolist()), d, t))
        if opts:
            return sorted(opts, key=lambda o: (-o[0], o[3]))
        if len(carrier) <= 3:
            faces = set()
            for t in tets.tolist():
                for k in range(4):
                    fc = tuple(np.delete(m.tets[t], k).tolist())
                    if set(carrier) <= set(fc):
                        faces.add((fc, t))
            for fc, t in sorted(faces):
                d = _tangent(m.vertices[list(fc)], -self.g[t])
                if d @ d > 1e-30 and self.enters(fc, p, d):
                    opts.append((float(d @ d), fc, d, t))
            if opts:
                return sorted(opts, key=lambda o: (-o[0], o[1]))
        if len(carrier) == 1:
            v = carrier[0]
            nb = m.neighbors(v)
            lower = nb[self.f[nb] < self.f[v]]
            for u in lower.tolist():
                e = m.vertices[u] - m.vertices[v]
                slope = (self.f[v] - self.f[u]) / np.linalg.norm(e)
                opts.append((slope * slope, (v, u), e / np.linalg.norm(e) * slope, int(self.tets_of((v, u))[0])))
            return sorted(opts, key=lambda o: (-o[0], o[1]))
        if len(carrier) == 2:
            a, b = carrier
            lo, hi = (a, b) if self.f[a] < self.f[b] else (b, a)
            if self.f[lo] < self.f[hi]:
                e = m.vertices[lo] - m.vertices[hi]
                return [(1.0, (hi, lo), e, int(tets[0]))]
        return []

    def move(self, p, simplex, d):
        """Travel from ``p`` along ``d`` to the boundary of ``simplex``."""
        lam, rate = self.frame(simplex)(p, d)
        neg = rate < 0
        if not np.any(neg):
            return None, None
        s = np.min(np.where(neg, np.maximum(lam, 0) / np.where(neg, -rate, 1), np.inf))
        q = p + s * d
        lam_q = np.clip(lam + s * rate, 0, None)
        keep = lam_q > self.eps
        carrier = tuple(int(v) for v, k in zip(simplex, keep) if k)
        if not carrier:
            carrier = (int(simplex[int(np.argmax(lam_q))]),)
        if len(carrier) == 1:
            q = self.m.vertices[carrier[0]].copy()
        return q, carrier

    def value(self, p, carrier):
        if len(carrier) == 1:
            return float(self.f[carrier[0]])
        lam, _ = self.frame(carrier)(p, np.zeros(3))
        return float(lam @ self.f[list(carrier)])

    def run(self, p, carrier, max_steps):
        pts, tets = [p.copy()], []
        status = "stalled-at-vertex"
        retries = 0
        for _ in range(max_steps):
            fp = self.value(p, carrier)
            if fp <= self.base_tol:
                status = "reached-base"
                break
            if len(carrier) == 1 and carrier[0] in self.critical:
                status = "stalled-at-saddle"
                break
            opts = self.options(p, carrier)
            moved = False
            for _, simplex, d, t in opts:
                q, new = self.move(p, simplex, d)
                if q is None or np.linalg.norm(q - p) <= self.len_eps and new == carrier:
                    continue
                if self.value(q, new) >= fp and len(new) > 1:
                    continue
                p, carrier = q, new
                pts.append(p.copy())
                tets.append(t)
                moved = True
                break
            if moved:
                retries = 0
                continue
            if len(carrier) == 1 or retries >= 3:
                status = "stalled-at-vertex"
                break
            # numerical dead end on a face or edge: nudge toward a tet centroid
            retries += 1
            t = int(self.tets_of(carrier)[0])
            c = self.m.vertices[self.m.tets[t]].mean(axis=0)
            p = p + (10.0 ** retries) * self.eps * (c - p)
            carrier = tuple(int(v) for v in self.m.tets[t])
        else:
            status = "stalled-at-vertex"
        return TracePath(np.array(pts), np.array(tets, dtype=np.int64), status, float("nan"))


class _Locator:
    """Point location through the tets around the nearest vertices."""

    def __init__(self, mesh: TetMesh):
        self.m = mesh
        self.tree = cKDTree(mesh.vertices)

    def __call__(self, p: np.ndarray, eps: float = 1e-9):
        m = self.m
        _, near = self.tree.query(p, k=min(8, m.n_vertices))
        cand = np.unique(np.concatenate([m.vertex_tets(int(v)) for v in np.atleast_1d(near)]))
        P = m.vertices[m.tets[cand]]
        E = P[:, 1:] - P[:, :1]
        mu = np.linalg.solve(E.transpose(0, 2, 1), (p - P[:, 0])[:, :, None])[:, :, 0]
        lam = np.concatenate([1 - mu.sum(axis=1, keepdims=True), mu], axis=1)
        inside = np.nonzero(np.all(lam >= -eps, axis=1))[0]
        if not len(inside):
            return None
        k = inside[0]
        T = m.tets[cand[k]]
        keep = lam[k] > eps
        return tuple(int(v) for v, q in zip(T, keep) if q) or (int(T[0]),)


def trace_to_base(mesh: TetMesh, field_, gradients: TetGradient, start, *,
                  critical=(), base_tol: float = 1e-9, max_steps: int = 100000,
                  eps: float = 1e-10, _state=None) -> TracePath:
    """Follow ``-grad f`` from ``start`` (a vertex id or a point) down to f = 0.

    The path moves inside one simplex at a time. It crosses into a
    neighbouring tet when the gradient there keeps descending, and slides
    along faces and edges where neighbouring tets push against each other.
    If it gets stuck inside a face or edge, it is nudged toward a tet
    centroid by a growing relative step, up to three times. Termination is
    a status, never an exception.

    Parameters
    ----------
    critical : iterable of int
        Vertices at which to stop with ``stalled-at-saddle``.
    """
    if _state is None:
        f = as_field(field_).values
        _state = (_Tracer(mesh, f, gradients, critical, base_tol, eps), _Locator(mesh))
    tr, locate = _state
    if np.isscalar(start) or np.ndim(start) == 0:
        v = int(start)
        p, carrier = mesh.vertices[v].copy(), (v,)
    else:
        p = np.asarray(start, dtype=float)
        carrier = locate(p)
        if carrier is None:
            return TracePath(p[None, :], np.zeros(0, dtype=np.int64), "left-domain", float("nan"), start)
    path = tr.run(p, carrier, max_steps)
    path.start_value = tr.value(p, carrier)
    path.start = start
    return path


# ------------------------------------------------------------------ census
def _outward_normals(mesh: TetMesh, fids: np.ndarray) -> np.ndarray:
    F = mesh.faces[fids]
    P = mesh.vertices
    n = np.cross(P[F[:, 1]] - P[F[:, 0]], P[F[:, 2]] - P[F[:, 0]])
    T = mesh.tets[mesh.face_tets[fids, 0]]
    opp = T[~(T[:, :, None] == F[:, None, :]).any(axis=2)]
    flip = np.einsum("ij,ij->i", n, P[F[:, 0]] - P[opp]) < 0
    n[flip] *= -1
    return n


def patch_grid_starts(mesh: TetMesh, verts, nx: int, ny: int) -> np.ndarray:
    """Grid starts on a boundary patch, one ``nx`` by ``ny`` grid per chart.

    Patch triangles are grouped into charts by the dominant axis and sign of
    their outward normal. Each chart gets a grid over the bounding box of its
    projection along that axis, and every grid point is lifted onto the
    chart triangles it projects into. A flat axis-aligned patch is a single
    chart, so this is the usual grid there.
    """
    inside = np.zeros(mesh.n_vertices, dtype=bool)
    inside[np.asarray(verts)] = True
    fids = np.nonzero(mesh.boundary_face)[0]
    fids = fids[inside[mesh.faces[fids]].all(axis=1)]
    if not len(fids) or nx < 1 or ny < 1:
        return np.zeros((0, 3))
    normals = _outward_normals(mesh, fids)
    axis = np.argmax(np.abs(normals), axis=1)
    sign = np.sign(normals[np.arange(len(fids)), axis])
    P = mesh.vertices
    out, seen = [], set()
    for ax in range(3):
        for sg in (-1.0, 1.0):
            tri = mesh.faces[fids[(axis == ax) & (sign == sg)]]
            if not len(tri):
                continue
            keep = [k for k in range(3) if k != ax]
            uv = P[:, keep]
            used = np.unique(tri)
            lo, hi = uv[used].min(axis=0), uv[used].max(axis=0)
            gu = lo[0] + (hi[0] - lo[0]) * (np.arange(nx) + 0.5) / nx
            gv = lo[1] + (hi[1] - lo[1]) * (np.arange(ny) + 0.5) / ny
            G = np.stack(np.meshgrid(gu, gv, indexing="ij"), axis=-1).reshape(-1, 2)
            A, B, C = uv[tri[:, 0]], uv[tri[:, 1]], uv[tri[:, 2]]
            Minv = np.linalg.inv(np.stack([B - A, C - A], axis=2))
            for g in G:
                mu = np.einsum("tij,tj->ti", Minv, g - A)
                lam = np.column_stack([1 - mu.sum(axis=1), mu])
                for k in np.nonzero(np.all(lam >= -1e-12, axis=1))[0]:
                    q = lam[k] @ P[tri[k]]
                    key = tuple(np.round(q, 12))
                    if key not in seen:
                        seen.add(key)
                        out.append(q)
    return np.array(out) if out else np.zeros((0, 3))


def patch_lattice_starts(mesh: TetMesh, verts, level: int = 2) -> np.ndarray:
    """Interior points of a barycentric lattice on every patch triangle.

    ``level`` k places the points ``(i, j, l) / (k + 1)`` with positive
    integers summing to ``k + 1`` (the centroid for k = 2).
    """
    inside = np.zeros(mesh.n_vertices, dtype=bool)
    inside[np.asarray(verts)] = True
    bf = mesh.faces[mesh.boundary_face]
    tri = bf[inside[bf].all(axis=1)]
    k = level + 1
    lat = np.array([(i, j, k - i - j) for i in range(1, k) for j in range(1, k - i)], dtype=float) / k
    if not len(tri) or not len(lat):
        return np.zeros((0, 3))
    P = mesh.vertices[tri]  # (t, 3, 3)
    return np.einsum("li,tij->tlj", lat, P).reshape(-1, 3)


@dataclass
class TraceCensus:
    counts: dict
    n_starts: int
    weld_tol: float
    merged_pairs: list
    min_separation: float | None
    paths: list = field(repr=False, default_factory=list)

    @property
    def saddle_stalls(self) -> int:
        return self.counts.get("stalled-at-saddle", 0)

    def as_dict(self) -> dict:
        return {"n_starts": self.n_starts, "counts": dict(self.counts), "weld_tol": self.weld_tol,
                "merged_pairs": [list(p) for p in self.merged_pairs],
                "min_separation": self.min_separation}


def trace_census(mesh: TetMesh, field_, gradients: TetGradient, starts, *,
                 critical=(), weld_tol: float | None = None, **kw) -> TraceCensus:
    """Trace every start and compare where the base points land.

    Two reached-base traces from distinct starts whose end points are closer
    than ``weld_tol`` (default ``1e-9`` of the mesh diameter) count as a
    merged pair.
    """
    if weld_tol is None:
        weld_tol = 1e-9 * float(np.ptp(mesh.vertices, axis=0).max())
    starts = list(starts) if not isinstance(starts, np.ndarray) else list(starts)
    f = as_field(field_).values
    state = (_Tracer(mesh, f, gradients, critical, kw.pop("base_tol", 1e-9), kw.pop("eps", 1e-10)),
             _Locator(mesh))
    paths = [trace_to_base(mesh, f, gradients, s, _state=state, **kw) for s in starts]
    counts = {s: 0 for s in STATUSES}
    for p in paths:
        counts[p.status] += 1
    ends = np.array([p.end for p in paths if p.status == "reached-base"])
    ids = [i for i, p in enumerate(paths) if p.status == "reached-base"]
    merged, sep = [], None
    if len(ends) >= 2:
        tree = cKDTree(ends)
        d, _ = tree.query(ends, k=2)
        sep = float(d[:, 1].min())
        merged = sorted((ids[a], ids[b]) for a, b in tree.query_pairs(weld_tol))
    return TraceCensus(counts, len(paths), weld_tol, merged, sep, paths)
