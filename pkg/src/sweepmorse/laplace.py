"""Edge weights, the sweep Dirichlet problem, and the discrete maximum principle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

from .mesh import TET_EDGES, TetMesh

logger = logging.getLogger(__name__)

SCHEMES = ("uniform", "cotangent", "positive-dual")

# for local edge (i, j) of a sorted tet, the local indices of the opposite edge
_OPPOSITE = {(0, 1): (2, 3), (0, 2): (1, 3), (0, 3): (1, 2),
             (1, 2): (0, 3), (1, 3): (0, 2), (2, 3): (0, 1)}


class DegenerateGeometry(ValueError):
    pass


class SolverDiverged(RuntimeError):
    pass


class SingularSystem(RuntimeError):
    pass


class InvalidBoundary(ValueError):
    pass


@dataclass(frozen=True)
class EdgeWeights:
    """One weight per mesh edge (rows of ``mesh.edges``)."""

    scheme: str
    values: np.ndarray

    @property
    def positive(self) -> bool:
        return bool(np.all(self.values > 0))

    def matrix(self, mesh: TetMesh) -> sparse.csr_matrix:
        """Graph Laplacian L = D - W."""
        n = mesh.n_vertices
        e = mesh.edges
        w = self.values
        W = sparse.coo_matrix((np.concatenate([w, w]),
                               (np.concatenate([e[:, 0], e[:, 1]]),
                                np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n)).tocsr()
        return (sparse.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()


@dataclass(frozen=True)
class ScalarField:
    """Per-vertex values with the (value, index) tie-break order."""

    values: np.ndarray
    rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("field must be one value per vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        v.flags.writeable = False
        order = np.lexsort((np.arange(len(v)), v))
        rank = np.empty(len(v), dtype=np.int64)
        rank[order] = np.arange(len(v))
        rank.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "rank", rank)

    def __len__(self):
        return len(self.values)

    def __neg__(self):
        return ScalarField(-self.values)

    @property
    def order(self) -> np.ndarray:
        """Vertex ids in ascending tie-break order."""
        return np.argsort(self.rank)


def as_field(field_) -> ScalarField:
    return field_ if isinstance(field_, ScalarField) else ScalarField(field_)


@dataclass(frozen=True)
class SweepBoundary:
    gamma0: np.ndarray
    gamma1: np.ndarray

    def __post_init__(self):
        for name in ("gamma0", "gamma1"):
            a = np.unique(np.asarray(getattr(self, name), dtype=np.int64))
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def validate(self, mesh: TetMesh) -> None:
        if not len(self.gamma0) or not len(self.gamma1):
            raise InvalidBoundary("both Dirichlet sets must be nonempty")
        for name in ("gamma0", "gamma1"):
            a = getattr(self, name)
            if a.min() < 0 or a.max() >= mesh.n_vertices:
                raise InvalidBoundary(f"{name} has out-of-range vertex ids")
        if np.intersect1d(self.gamma0, self.gamma1).size:
            raise InvalidBoundary("gamma0 and gamma1 intersect")
        for name in ("gamma0", "gamma1"):
            a = getattr(self, name)
            if not mesh.boundary_vertex[a].all():
                raise InvalidBoundary(f"{name} contains interior vertices")
            if _boundary_components(mesh, a) != 1:
                raise InvalidBoundary(f"{name} is not connected on the boundary surface")


def _boundary_components(mesh: TetMesh, verts: np.ndarray) -> int:
    bf = mesh.faces[mesh.boundary_face]
    be = np.unique(np.concatenate([bf[:, [0, 1]], bf[:, [0, 2]], bf[:, [1, 2]]]), axis=0)
    inside = np.zeros(mesh.n_vertices, dtype=bool)
    inside[verts] = True
    be = be[inside[be].all(axis=1)]
    pos = np.full(mesh.n_vertices, -1)
    pos[verts] = np.arange(len(verts))
    g = sparse.coo_matrix((np.ones(len(be)), (pos[be[:, 0]], pos[be[:, 1]])),
                          shape=(len(verts), len(verts)))
    return connected_components(g, directed=False)[0]


# ------------------------------------------------------------------ weights
def _tet_points(mesh: TetMesh):
    return mesh.vertices[mesh.tets]


def cotangent_terms(mesh: TetMesh) -> np.ndarray:
    """Per tet and local edge (i, j): length times cotangent of the dihedral
    angle at the opposite edge, shape (m, 6)."""
    P = _tet_points(mesh)
    vol = np.abs(mesh.tet_volumes())
    scale = np.max(np.linalg.norm(P - P.mean(axis=1, keepdims=True), axis=2), axis=1)
    if np.any(vol <= 1e-12 * scale**3):
        raise DegenerateGeometry(f"{int(np.sum(vol <= 1e-12 * scale**3))} tet(s) have zero volume")
    out = np.empty((mesh.n_tets, 6))
    for col, (i, j) in enumerate(TET_EDGES.tolist()):
        k, l = _OPPOSITE[(i, j)]
        pk, pl = P[:, k], P[:, l]
        e = pl - pk
        length = np.linalg.norm(e, axis=1)
        d = e / length[:, None]
        u = P[:, i] - pk
        v = P[:, j] - pk
        u = u - np.sum(u * d, axis=1)[:, None] * d
        v = v - np.sum(v * d, axis=1)[:, None] * d
        cot = np.sum(u * v, axis=1) / np.linalg.norm(np.cross(u, v), axis=1)
        out[:, col] = length * cot
    return out


def _barycentric_dual_terms(mesh: TetMesh) -> np.ndarray:
    """Per tet and local edge: area of the barycentric dual patch of the edge
    inside the tet (two triangles through edge midpoint, the two adjacent face
    centroids and the tet centroid) divided by the edge length."""
    P = _tet_points(mesh)
    c = P.mean(axis=1)
    out = np.empty((mesh.n_tets, 6))
    for col, (i, j) in enumerate(TET_EDGES.tolist()):
        k, l = _OPPOSITE[(i, j)]
        m = 0.5 * (P[:, i] + P[:, j])
        fk = (P[:, i] + P[:, j] + P[:, k]) / 3.0
        fl = (P[:, i] + P[:, j] + P[:, l]) / 3.0
        area = 0.5 * (np.linalg.norm(np.cross(fk - m, c - m), axis=1)
                      + np.linalg.norm(np.cross(c - m, fl - m), axis=1))
        out[:, col] = area / np.linalg.norm(P[:, j] - P[:, i], axis=1)
    return out


def compute_weights(mesh: TetMesh, scheme: str = "uniform") -> EdgeWeights:
    """Laplace edge weights under ``scheme``.

    ``uniform`` sets every weight to 1. ``cotangent`` sums
    ``length * cot(dihedral) / 6`` over the opposite edges of all tets
    sharing the edge (the P1 stiffness weights; can be negative).
    ``positive-dual`` uses barycentric dual-face area over edge length,
    which is positive on any non-degenerate mesh.
    """
    if scheme == "uniform":
        return EdgeWeights(scheme, np.ones(len(mesh.edges)))
    if scheme == "cotangent":
        terms = cotangent_terms(mesh) / 6.0
    elif scheme == "positive-dual":
        terms = _barycentric_dual_terms(mesh)
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}; expected one of {SCHEMES}")
    w = np.bincount(mesh.tet_edges.ravel(), weights=terms.ravel(), minlength=len(mesh.edges))
    return EdgeWeights(scheme, w)


# -------------------------------------------------------------------- solve
def solve_sweep(mesh: TetMesh, weights: EdgeWeights, bc: SweepBoundary,
                tol: float = 1e-10) -> ScalarField:
    """Solve L f = 0 off the Dirichlet sets, f = 0 on gamma0, f = 1 on gamma1.

    The reduced system is solved by Jacobi-preconditioned conjugate
    gradients. The relative tolerance handed to CG is tightened so that
    every free vertex ends with ``|(L f)_i| <= tol * sum_j |w_ij|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    bc.validate(mesh)
    n = mesh.n_vertices
    L = weights.matrix(mesh)
    fixed = np.zeros(n, dtype=bool)
    fixed[bc.gamma0] = True
    fixed[bc.gamma1] = True
    free = np.nonzero(~fixed)[0]
    f = np.zeros(n)
    f[bc.gamma1] = 1.0
    if not len(free):
        return ScalarField(f)

    absw = row_weight(mesh, weights)
    if np.any(absw[free] == 0):
        raise SingularSystem(f"vertex {int(free[np.argmin(absw[free])])} has zero total weight")
    A = L[free][:, free].tocsr()
    b = -(L[free] @ f)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SingularSystem("reduced operator has a non-positive diagonal entry")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return ScalarField(f)
    rtol = max(tol * absw[free].min() / bnorm, 1e-16)
    M = sparse.diags(1.0 / diag)
    x, info = cg(A, b, rtol=rtol, atol=0.0, maxiter=50 * n, M=M)
    if info > 0:
        raise SolverDiverged(f"CG stopped after {info} iterations without converging")
    if info < 0:
        raise SingularSystem("CG breakdown")
    f[free] = x
    res = residuals(mesh, weights, f)[free]
    worst = np.max(np.abs(res) / absw[free])
    if worst > tol:
        logger.warning("largest scaled residual %.3g exceeds tol %.3g", worst, tol)
    return ScalarField(f)


def row_weight(mesh: TetMesh, weights: EdgeWeights) -> np.ndarray:
    """Sum of |w_ij| over the edges at each vertex."""
    w = np.abs(weights.values)
    return np.bincount(mesh.edges.ravel(), weights=np.repeat(w, 2), minlength=mesh.n_vertices)


def residuals(mesh: TetMesh, weights: EdgeWeights, values) -> np.ndarray:
    """(L f)_i at every vertex."""
    return weights.matrix(mesh) @ np.asarray(getattr(values, "values", values), dtype=float)


@dataclass
class MaxPrincipleReport:
    violations: list[int]
    kinds: dict[int, str]
    field_min: float
    field_max: float

    @property
    def holds(self) -> bool:
        return not self.violations


def check_max_principle(mesh: TetMesh, field_, bc: SweepBoundary) -> MaxPrincipleReport:
    """List non-Dirichlet vertices that are local or global extrema.

    A vertex is flagged when its value is at least the largest (or at most
    the smallest) neighbour value while not all neighbours are equal to it,
    or when it reaches the Dirichlet range ends.
    """
    f = as_field(field_).values
    fixed = np.zeros(mesh.n_vertices, dtype=bool)
    fixed[bc.gamma0] = True
    fixed[bc.gamma1] = True
    A = mesh.adjacency.tocsr()
    lo_d = min(f[bc.gamma0].min(), f[bc.gamma1].min())
    hi_d = max(f[bc.gamma0].max(), f[bc.gamma1].max())
    kinds: dict[int, str] = {}
    for v in np.nonzero(~fixed)[0]:
        nb = f[A.indices[A.indptr[v]:A.indptr[v + 1]]]
        fv = f[v]
        if fv >= nb.max() and fv > nb.min():
            kinds[int(v)] = "local-max"
        elif fv <= nb.min() and fv < nb.max():
            kinds[int(v)] = "local-min"
        elif fv >= hi_d or fv <= lo_d:
            kinds[int(v)] = "global"
    return MaxPrincipleReport(sorted(kinds), kinds, float(f.min()), float(f.max()))
