"""Homogeneous tetrahedral complexes: incidence tables, stars, links.

Simplices of every dimension are stored as sorted vertex tuples, so a mesh
edge, face or tet is identified by its row in the corresponding table.
Orientation is never tracked; all downstream homology is over Z/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    """Base class for rejected meshes."""


class DuplicateTet(MeshError):
    pass


class DegenerateTet(MeshError):
    pass


class NonManifoldFace(MeshError):
    pass


class BadLink(MeshError):
    pass


# local index pairs/triples of a tet (rows of a sorted 4-tuple)
TET_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
TET_FACES = np.array([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)])  # face i omits vertex i


def _encode(rows: np.ndarray, base: int) -> np.ndarray:
    """Pack sorted integer tuples into single int64 keys."""
    key = np.zeros(len(rows), dtype=np.int64)
    for col in range(rows.shape[1]):
        key = key * base + rows[:, col]
    return key


def _lookup(table_keys: np.ndarray, keys: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(table_keys, keys)
    idx = np.clip(idx, 0, len(table_keys) - 1)
    if len(keys) and not np.all(table_keys[idx] == keys):
        raise KeyError("simplex not present in table")
    return idx


def _csr_incidence(owner: np.ndarray, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-pointer layout mapping each row id to the positions where it occurs."""
    order = np.argsort(owner, kind="stable")
    counts = np.bincount(owner, minlength=n_rows)
    ptr = np.concatenate([[0], np.cumsum(counts)])
    return ptr, order


class TetMesh:
    """Immutable homogeneous simplicial 3-complex.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions.
    tets : array_like, shape (m, 4)
        Vertex indices of each tetrahedron.
    validate : bool
        Run the manifold-link check. Only internal callers that already know
        the combinatorics are valid (warped copies of a validated mesh) skip it.

    Attributes
    ----------
    edges, faces : ndarray
        Sorted vertex tuples, lexicographically ordered.
    tet_edges, tet_faces : ndarray
        Per-tet indices into ``edges`` (6 per tet) and ``faces`` (4 per tet,
        face ``k`` omits local vertex ``k`` of the sorted tet).
    face_tets : ndarray, shape (F, 2)
        Incident tets of every face, ``-1`` padded.
    boundary_face, boundary_vertex : ndarray of bool
    """

    def __init__(self, vertices, tets, *, validate: bool = True):
        V = np.array(vertices, dtype=float)
        T = np.array(tets, dtype=np.int64)
        if V.ndim != 2 or V.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if T.ndim != 2 or T.shape[1] != 4 or len(T) == 0:
            raise MeshError("need at least one tet given as 4 vertex indices")
        if T.min() < 0 or T.max() >= len(V):
            raise MeshError("tet vertex index out of range")
        T = np.sort(T, axis=1)
        if np.any(T[:, 1:] == T[:, :-1]):
            bad = int(np.nonzero(np.any(T[:, 1:] == T[:, :-1], axis=1))[0][0])
            raise DegenerateTet(f"tet {bad} repeats a vertex index")
        nv = len(V)
        tkeys = _encode(T, nv)
        uniq, counts = np.unique(tkeys, return_counts=True)
        if np.any(counts > 1):
            raise DuplicateTet(f"{int(np.sum(counts > 1))} duplicated tet(s)")

        self.vertices = V
        self.tets = T
        self.vertices.flags.writeable = False
        self.tets.flags.writeable = False

        all_edges = T[:, TET_EDGES].reshape(-1, 2)
        ekeys = _encode(all_edges, nv)
        ekeys_u, e_first, e_inv = np.unique(ekeys, return_index=True, return_inverse=True)
        self.edges = all_edges[e_first]
        self.tet_edges = e_inv.reshape(-1, 6)
        self._edge_keys = ekeys_u

        all_faces = T[:, TET_FACES].reshape(-1, 3)
        fkeys = _encode(all_faces, nv)
        fkeys_u, f_first, f_inv = np.unique(fkeys, return_index=True, return_inverse=True)
        self.faces = all_faces[f_first]
        self.tet_faces = f_inv.reshape(-1, 4)
        self._face_keys = fkeys_u

        fcount = np.bincount(f_inv, minlength=len(self.faces))
        if np.any(fcount > 2):
            bad = self.faces[np.argmax(fcount)]
            raise NonManifoldFace(f"face {tuple(int(x) for x in bad)} has {fcount.max()} incident tets")
        face_tets = np.full((len(self.faces), 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(len(T)), 4)
        order = np.argsort(f_inv, kind="stable")
        sorted_f = f_inv[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_f[1:] != sorted_f[:-1]
        face_tets[sorted_f[first], 0] = owner[order][first]
        face_tets[sorted_f[~first], 1] = owner[order][~first]
        self.face_tets = face_tets
        self.boundary_face = fcount == 1

        used = np.zeros(nv, dtype=bool)
        used[T.ravel()] = True
        if not used.all():
            raise MeshError(f"{int((~used).sum())} vertices belong to no tet")
        bv = np.zeros(nv, dtype=bool)
        bv[self.faces[self.boundary_face].ravel()] = True
        self.boundary_vertex = bv

        self._vt_ptr, self._vt_idx = _csr_incidence(T.ravel(), nv)
        self._ve_ptr, self._ve_idx = _csr_incidence(self.edges.ravel(), nv)
        self._vf_ptr, self._vf_idx = _csr_incidence(self.faces.ravel(), nv)
        for arr in (self.edges, self.faces, self.tet_edges, self.tet_faces,
                    self.face_tets, self.boundary_face, self.boundary_vertex):
            arr.flags.writeable = False

        if validate:
            self._validate_links()

    # ------------------------------------------------------------------ sizes
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    def __repr__(self):
        return (f"TetMesh(V={self.n_vertices}, E={len(self.edges)}, "
                f"F={len(self.faces)}, T={self.n_tets})")

    # ------------------------------------------------------------- incidence
    def vertex_tets(self, v: int) -> np.ndarray:
        return np.sort(self._vt_idx[self._vt_ptr[v]:self._vt_ptr[v + 1]] // 4)

    def vertex_edges(self, v: int) -> np.ndarray:
        return np.sort(self._ve_idx[self._ve_ptr[v]:self._ve_ptr[v + 1]] // 2)

    def vertex_faces(self, v: int) -> np.ndarray:
        return np.sort(self._vf_idx[self._vf_ptr[v]:self._vf_ptr[v + 1]] // 3)

    def neighbors(self, v: int) -> np.ndarray:
        e = self.edges[self.vertex_edges(v)]
        return np.sort(np.where(e[:, 0] == v, e[:, 1], e[:, 0]))

    def edge_index(self, pairs) -> np.ndarray:
        pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        return _lookup(self._edge_keys, _encode(pairs, self.n_vertices))

    def face_index(self, triples) -> np.ndarray:
        triples = np.sort(np.asarray(triples, dtype=np.int64).reshape(-1, 3), axis=1)
        return _lookup(self._face_keys, _encode(triples, self.n_vertices))

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        n = self.n_vertices
        e = self.edges
        data = np.ones(2 * len(e))
        return sparse.csr_matrix(
            (data, (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
            shape=(n, n))

    def tet_volumes(self) -> np.ndarray:
        """Signed volumes in the orientation of the stored (sorted) tets."""
        p = self.vertices[self.tets]
        d = p[:, 1:] - p[:, :1]
        return np.linalg.det(d) / 6.0

    def with_positions(self, vertices) -> "TetMesh":
        """Same combinatorics, new positions; link validation is inherited."""
        new = object.__new__(TetMesh)
        new.__dict__.update({k: v for k, v in self.__dict__.items() if k != "adjacency"})
        V = np.array(vertices, dtype=float)
        if V.shape != self.vertices.shape:
            raise MeshError("position array shape does not match the mesh")
        V.flags.writeable = False
        new.vertices = V
        return new

    # ------------------------------------------------------------ validation
    def _validate_links(self):
        """Check every vertex link is a 2-sphere (interior) or a disk (boundary).

        Link vertices of ``v`` are the edges at ``v``, link edges the faces at
        ``v``, link triangles the tets at ``v``; so the Euler characteristic
        and connectivity of all links fall out of global incidence counts.
        """
        nv = self.n_vertices
        n_lv = np.bincount(self.edges.ravel(), minlength=nv)
        n_le = np.bincount(self.faces.ravel(), minlength=nv)
        n_lt = np.bincount(self.tets.ravel(), minlength=nv)
        chi = n_lv - n_le + n_lt

        # half-edge graph: node (v, a) for edge index e and side; linked
        # through every face (v, a, b)
        E = len(self.edges)
        f = self.faces
        fe = np.stack([self.edge_index(f[:, [0, 1]]), self.edge_index(f[:, [0, 2]]),
                       self.edge_index(f[:, [1, 2]])], axis=1)

        def node(e, v):
            # side 0 = edge seen from its smaller endpoint
            return e + E * (self.edges[e, 1] == v)

        src, dst = [], []
        for vloc, (ea, eb) in ((0, (0, 1)), (1, (0, 2)), (2, (1, 2))):
            v = f[:, vloc]
            src.append(node(fe[:, ea], v))
            dst.append(node(fe[:, eb], v))
        src = np.concatenate(src)
        dst = np.concatenate(dst)
        g = sparse.coo_matrix((np.ones(len(src)), (src, dst)), shape=(2 * E, 2 * E))
        _, labels = connected_components(g, directed=False)
        owner = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        pairs = np.unique(np.stack([owner, labels], axis=1), axis=0)
        n_comp = np.bincount(pairs[:, 0], minlength=nv)

        # link edge (a, b) of v is boundary in the link iff face (v, a, b) is a boundary face
        n_lbe = np.bincount(self.faces[self.boundary_face].ravel(), minlength=nv)
        # boundary edges of the mesh at v = boundary vertices of the link
        bf = self.faces[self.boundary_face]
        bfe = np.unique(np.concatenate([self.edge_index(bf[:, [0, 1]]),
                                        self.edge_index(bf[:, [0, 2]]),
                                        self.edge_index(bf[:, [1, 2]])]))
        n_lbv = np.bincount(self.edges[bfe].ravel(), minlength=nv)

        interior = ~self.boundary_vertex
        bad_int = interior & ((chi != 2) | (n_comp != 1))
        # a disk: chi 1, connected, boundary is one cycle (as many edges as vertices)
        bad_bnd = self.boundary_vertex & ((chi != 1) | (n_comp != 1) | (n_lbe != n_lbv))
        bad = np.nonzero(bad_int | bad_bnd)[0]
        if len(bad):
            v = int(bad[0])
            kind = "sphere" if interior[v] else "disk"
            raise BadLink(f"link of vertex {v} is not a {kind} (chi={chi[v]}, "
                          f"components={n_comp[v]}); {len(bad)} bad vertices")
        if np.any(self.boundary_vertex):
            self._check_boundary_loops()

    def _check_boundary_loops(self):
        # a disk link has exactly one boundary loop: the link-boundary graph
        # (boundary faces at v, viewed as edges between their other two
        # vertices) must be a single cycle
        bf = self.faces[self.boundary_face]
        for v in np.nonzero(self.boundary_vertex)[0]:
            rows = bf[np.any(bf == v, axis=1)]
            others = rows[rows != v].reshape(-1, 2)
            deg = np.bincount(others.ravel())
            if np.any(deg[deg > 0] != 2):
                raise BadLink(f"link boundary of vertex {v} is not a simple loop")
            ids, inv = np.unique(others, return_inverse=True)
            inv = inv.reshape(-1, 2)
            g = sparse.coo_matrix((np.ones(len(inv)), (inv[:, 0], inv[:, 1])),
                                  shape=(len(ids), len(ids)))
            if connected_components(g, directed=False)[0] != 1:
                raise BadLink(f"link of vertex {v} has more than one boundary loop")


def build_mesh(positions, tets) -> TetMesh:
    """Build and validate a tetrahedral mesh."""
    return TetMesh(positions, tets)


@dataclass(frozen=True, eq=False)
class SubComplex:
    """A subcomplex of a :class:`TetMesh`, as index sets into its tables.

    ``verts``, ``edges``, ``faces`` and ``tets`` hold row indices into the
    parent mesh's vertex, edge, face and tet tables.
    """

    mesh: TetMesh
    verts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    edges: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    faces: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    tets: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        for name in ("verts", "edges", "faces", "tets"):
            arr = np.unique(np.asarray(getattr(self, name), dtype=np.int64))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return len(self.verts), len(self.edges), len(self.faces), len(self.tets)

    @property
    def euler_characteristic(self) -> int:
        a, b, c, d = self.counts
        return a - b + c - d

    def is_empty(self) -> bool:
        return len(self.verts) == 0

    def dimension(self) -> int:
        for d, n in zip((3, 2, 1, 0), self.counts[::-1]):
            if n:
                return d
        return -1

    def simplices(self):
        """Vertex-tuple arrays for dimensions 0 through 3."""
        m = self.mesh
        return (self.verts, m.edges[self.edges], m.faces[self.faces], m.tets[self.tets])

    def is_closed(self) -> bool:
        m = self.mesh
        vs, es, fs = set(self.verts.tolist()), set(self.edges.tolist()), set(self.faces.tolist())
        if not set(m.edges[self.edges].ravel().tolist()) <= vs:
            return False
        if not set(m.tet_faces[self.tets].ravel().tolist()) <= fs:
            return False
        for cols in ([0, 1], [0, 2], [1, 2]):
            if len(self.faces) and not set(m.edge_index(m.faces[self.faces][:, cols]).tolist()) <= es:
                return False
        return True

    def issubset(self, other: "SubComplex") -> bool:
        return all(np.isin(getattr(self, k), getattr(other, k)).all()
                   for k in ("verts", "edges", "faces", "tets"))

    def boundary_edges(self) -> np.ndarray:
        """Edges of this complex lying on exactly one of its faces."""
        if not len(self.faces):
            return np.zeros(0, dtype=np.int64)
        m = self.mesh
        f = m.faces[self.faces]
        fe = np.concatenate([m.edge_index(f[:, c]) for c in ([0, 1], [0, 2], [1, 2])])
        ids, cnt = np.unique(fe, return_counts=True)
        return ids[cnt == 1]


def closure(mesh: TetMesh, tets=(), faces=(), edges=(), verts=()) -> SubComplex:
    """Smallest subcomplex containing the given simplices."""
    tets = np.asarray(tets, dtype=np.int64).reshape(-1)
    faces = np.concatenate([np.asarray(faces, dtype=np.int64).reshape(-1),
                            mesh.tet_faces[tets].ravel()])
    tri = mesh.faces[faces]
    edges = np.concatenate([np.asarray(edges, dtype=np.int64).reshape(-1)]
                           + [mesh.edge_index(tri[:, c]) for c in ([0, 1], [0, 2], [1, 2])])
    verts = np.concatenate([np.asarray(verts, dtype=np.int64).reshape(-1),
                            mesh.edges[edges].ravel()])
    return SubComplex(mesh, verts, edges, faces, tets)


def full_complex(mesh: TetMesh) -> SubComplex:
    return SubComplex(mesh, np.arange(mesh.n_vertices), np.arange(len(mesh.edges)),
                      np.arange(len(mesh.faces)), np.arange(mesh.n_tets))


def star(mesh: TetMesh, v: int, d: int) -> SubComplex:
    """The d-simplices containing vertex ``v`` (not closed under faces)."""
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range")
    if d == 0:
        return SubComplex(mesh, verts=[v])
    if d == 1:
        return SubComplex(mesh, edges=mesh.vertex_edges(v))
    if d == 2:
        return SubComplex(mesh, faces=mesh.vertex_faces(v))
    if d == 3:
        return SubComplex(mesh, tets=mesh.vertex_tets(v))
    raise ValueError(f"dimension must be 0..3, got {d}")


def _link_parts(mesh: TetMesh, v: int):
    """Link simplices of ``v`` as index arrays (verts, edges, faces)."""
    ts = mesh.vertex_tets(v)
    T = mesh.tets[ts]
    tri = T[T != v].reshape(-1, 3)
    faces = mesh.face_index(tri)
    fs = mesh.faces[mesh.vertex_faces(v)]
    seg = fs[fs != v].reshape(-1, 2)
    edges = mesh.edge_index(seg)
    verts = mesh.neighbors(v)
    return verts, edges, faces


def link(mesh: TetMesh, v: int) -> SubComplex:
    """Simplices of the closed star of ``v`` that do not contain ``v``."""
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range")
    return SubComplex(mesh, *_link_parts(mesh, v))


def lower_link(mesh: TetMesh, v: int, field) -> SubComplex:
    """Part of ``link(v)`` spanned by vertices strictly below ``v``.

    ``field`` is anything with a ``rank`` array (a tie-broken field) or a
    plain array of values; plain arrays are tie-broken by vertex index.
    """
    rank = _rank_of(field)
    verts, edges, faces = _link_parts(mesh, v)
    low = rank < rank[v]
    verts = verts[low[verts]]
    edges = edges[np.all(low[mesh.edges[edges]], axis=1)]
    faces = faces[np.all(low[mesh.faces[faces]], axis=1)]
    return SubComplex(mesh, verts, edges, faces)


def boundary_surface(mesh: TetMesh) -> SubComplex:
    """Boundary faces (one incident tet) with their edges and vertices."""
    return closure(mesh, faces=np.nonzero(mesh.boundary_face)[0])


def _rank_of(field) -> np.ndarray:
    rank = getattr(field, "rank", None)
    if rank is not None:
        return rank
    values = np.asarray(field, dtype=float)
    order = np.lexsort((np.arange(len(values)), values))
    rank = np.empty(len(values), dtype=np.int64)
    rank[order] = np.arange(len(values))
    return rank

