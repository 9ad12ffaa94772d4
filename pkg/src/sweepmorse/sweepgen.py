"""Structured sweep meshes: the Kuhn-subdivided box and its warped variants."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .homology import betti, components, surface_betti_fast
from .laplace import SweepBoundary
from .mesh import SubComplex, TetMesh, boundary_surface, closure


def box_vertex_index(i, j, k, nx: int, ny: int):
    return i + (nx + 1) * (j + (ny + 1) * k)


def box_grid(nx: int, ny: int, nz: int) -> np.ndarray:
    """Unit-box grid points, x fastest, shape ((nx+1)(ny+1)(nz+1), 3)."""
    z, y, x = np.meshgrid(np.linspace(0, 1, nz + 1), np.linspace(0, 1, ny + 1),
                          np.linspace(0, 1, nx + 1), indexing="ij")
    return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


def kuhn_tets(nx: int, ny: int, nz: int) -> np.ndarray:
    """Six tets per cell, each a monotone lattice path from the cell's low
    corner to its high corner; the shared (1,1,1) diagonal keeps neighbouring
    cells conforming."""
    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    tets = []
    for perm in permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] += 1
            path.append(corner.copy())
        tets.append(np.stack([box_vertex_index(I + p[0], J + p[1], K + p[2], nx, ny)
                              for p in path], axis=1))
    return np.stack(tets, axis=1).reshape(-1, 4)


def generate_box(nx: int, ny: int | None = None, nz: int | None = None) -> tuple[TetMesh, SweepBoundary]:
    """Kuhn-subdivided unit box with gamma0 = {z = 0} and gamma1 = {z = 1}."""
    ny = nx if ny is None else ny
    nz = nx if nz is None else nz
    if min(nx, ny, nz) < 1:
        raise ValueError("resolutions must be at least 1")
    P = box_grid(nx, ny, nz)
    mesh = TetMesh(P, kuhn_tets(nx, ny, nz))
    layer = (nx + 1) * (ny + 1)
    bc = SweepBoundary(np.arange(layer), np.arange(nz * layer, (nz + 1) * layer))
    return mesh, bc


class InvertedElement(ValueError):
    pass


class TopologyMismatch(RuntimeError):
    pass


def check_volumes(mesh: TetMesh, reference: TetMesh | None = None) -> None:
    """Raise :class:`InvertedElement` if a tet lost its orientation.

    Orientation is compared against ``reference`` (default: the signs the
    mesh had on the unwarped grid, i.e. all equal to the first tet's).
    """
    vol = mesh.tet_volumes()
    sign = np.sign(reference.tet_volumes()) if reference is not None else np.sign(vol[0])
    bad = np.nonzero(vol * sign <= 0)[0]
    if len(bad):
        raise InvertedElement(f"{len(bad)} tet(s) inverted or flat, first is tet {int(bad[0])}")


# ------------------------------------------------------------- warped boxes
@dataclass(frozen=True)
class WarpModes:
    """Smooth displacement ``d(p) = sum_k a_k * sin(pi * (w_k . p) + phase_k)``.

    ``amps`` has shape (K, 3), ``waves`` (K, 3), ``phases`` (K,).
    """

    amps: np.ndarray
    waves: np.ndarray
    phases: np.ndarray

    def __call__(self, P: np.ndarray) -> np.ndarray:
        arg = np.pi * P @ self.waves.T + self.phases
        return P + np.sin(arg) @ self.amps

    def jacobian(self, P: np.ndarray) -> np.ndarray:
        """Per-point 3x3 Jacobian of the warp."""
        c = np.cos(np.pi * P @ self.waves.T + self.phases)
        J = np.pi * np.einsum("nk,ki,kj->nij", c, self.amps, self.waves)
        return J + np.eye(3)

    @classmethod
    def random(cls, rng: np.random.Generator, amplitude: float, modes: int = 3) -> "WarpModes":
        waves = rng.integers(1, 3, size=(modes, 3)).astype(float)
        amps = rng.uniform(-1, 1, size=(modes, 3))
        # scale so that sum_k |a_k| |w_k| pi stays below `amplitude`
        gain = np.pi * np.sum(np.linalg.norm(amps, axis=1) * np.linalg.norm(waves, axis=1))
        amps *= amplitude / gain
        return cls(amps, waves, rng.uniform(0, 2 * np.pi, size=modes))


def warp_mesh(mesh: TetMesh, warp: WarpModes) -> TetMesh:
    """Apply ``warp`` to the positions; the Jacobian must stay positive at
    every vertex and every tet must keep its orientation."""
    P = np.asarray(mesh.vertices)
    det = np.linalg.det(warp.jacobian(P))
    if np.any(det <= 0):
        raise InvertedElement(f"warp Jacobian is non-positive at {int(np.sum(det <= 0))} grid point(s)")
    out = mesh.with_positions(warp(P))
    check_volumes(out, mesh)
    return out


def generate_warped_box(n: int, rng: np.random.Generator, amplitude: float = 0.5,
                        modes: int = 3) -> tuple[TetMesh, SweepBoundary]:
    """Kuhn box under a random smooth warp.

    ``amplitude`` bounds the operator norm of the displacement gradient, so
    values below 1 keep the warp a diffeomorphism. Zero gives
    :func:`generate_box` back exactly.
    """
    mesh, bc = generate_box(n)
    if amplitude == 0:
        return mesh, bc
    return warp_mesh(mesh, WarpModes.random(rng, amplitude, modes)), bc


# ------------------------------------------------------------ counterexample
@dataclass(frozen=True)
class SweepParams:
    """Parameters of the interlocked-patch counterexample.

    The domain is the cube [-1, 1]^3 on an ``n``-cell Kuhn grid.

    Attributes
    ----------
    n : int
        Cells per axis.
    neck : float
        Half-width of each patch's narrow bridge (model units). The bridge
        keeps at least the centre row of vertices.
    seam : int
        Width in cells of the free lateral band separating the patches.
    bend : float
        Amplitude of the shape-only bend ``z += bend * (x^2 - y^2) / 2``,
        which lifts the ends of gamma0 and lowers those of gamma1.
    """

    n: int = 20
    neck: float = 0.2
    seam: int = 1
    bend: float = 0.3

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.n % 2:
            raise ValueError("n must be even so the cube has a centre row of vertices")
        if self.neck < 0 or self.seam < 1:
            raise ValueError("neck must be >= 0 and seam >= 1")
        if not np.isfinite(self.bend):
            raise ValueError("bend must be finite")

    def as_dict(self) -> dict:
        return {"n": self.n, "neck": self.neck, "seam": self.seam, "bend": self.bend}


DEFAULT_PARAMS = SweepParams()


def counterexample_labels(P: np.ndarray, boundary: np.ndarray, params: SweepParams) -> np.ndarray:
    """0 = free, 1 = gamma0, 2 = gamma1 for cube points ``P``.

    gamma0 covers the x = +-1 faces, a strip ``|y| <= neck`` across the top
    and the bottom except a strip ``|x| <= neck``; gamma1 is the same
    pattern turned a quarter turn about z and flipped top to bottom.
    Points within ``seam`` cells (max-norm) of the other patch are freed.
    """
    from scipy.spatial import cKDTree

    x, y, z = P.T
    eps = 1e-9
    h = 2.0 / params.n
    lab = np.zeros(len(P), dtype=np.int64)
    lab[np.abs(x) > 1 - eps] = 1
    lab[np.abs(y) > 1 - eps] = 2
    top, bot = z > 1 - eps, z < -1 + eps
    lab[top] = np.where(np.abs(y[top]) <= params.neck + eps, 1, 2)
    lab[bot] = np.where(np.abs(x[bot]) <= params.neck + eps, 2, 1)
    lab[~boundary] = 0
    out = lab.copy()
    for a, b in ((1, 2), (2, 1)):
        ia = np.nonzero(lab == a)[0]
        d, _ = cKDTree(P[lab == b]).query(P[ia], p=np.inf)
        out[ia[d <= params.seam * h + eps]] = 0
    return out


def generate_counterexample(params: SweepParams = DEFAULT_PARAMS) -> tuple[TetMesh, SweepBoundary]:
    """A ball with two interlocked Dirichlet patches whose sweep field has
    an interior 1-saddle and 2-saddle.

    Each patch is a band that wraps around the cube and nearly closes on
    itself: gamma0 runs over the top as a narrow bridge, down both x faces
    and across most of the bottom, where its two ends squeeze against
    gamma1's bridge. gamma1 does the same rotated a quarter turn and flipped.
    The configuration is symmetric under x -> -x and y -> -y but not under
    z -> -z.
    """
    n = params.n
    base = box_grid(n, n, n) * 2.0 - 1.0
    mesh = TetMesh(base, kuhn_tets(n, n, n))
    lab = counterexample_labels(base, np.asarray(mesh.boundary_vertex), params)
    bc = SweepBoundary(np.nonzero(lab == 1)[0], np.nonzero(lab == 2)[0])
    if params.bend:
        P = base.copy()
        P[:, 2] += 0.5 * params.bend * (P[:, 0] ** 2 - P[:, 1] ** 2)
        warped = mesh.with_positions(P)
        check_volumes(warped, mesh)
        mesh = warped
    return mesh, bc


# --------------------------------------------------------- topology checks
@dataclass
class SweepTopologyReport:
    mesh_betti: tuple
    gamma_betti: tuple
    gamma_loops: tuple
    lateral_betti: tuple
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {"mesh_betti": list(self.mesh_betti),
                "gamma_betti": [list(b) for b in self.gamma_betti],
                "gamma_boundary_loops": list(self.gamma_loops),
                "lateral_betti": list(self.lateral_betti),
                "ok": self.ok, "failures": list(self.failures)}


def _patch(mesh: TetMesh, inside: np.ndarray) -> SubComplex:
    """Boundary-surface simplices with all vertices flagged in ``inside``."""
    bf = np.nonzero(mesh.boundary_face)[0]
    surf = boundary_surface(mesh)
    faces = bf[inside[mesh.faces[bf]].all(axis=1)]
    edges = surf.edges[inside[mesh.edges[surf.edges]].all(axis=1)]
    verts = surf.verts[inside[surf.verts]]
    return SubComplex(mesh, verts, edges, faces)


def _loops(patch: SubComplex) -> int:
    be = patch.boundary_edges()
    if not len(be):
        return 0
    e = patch.mesh.edges[be]
    return components(np.unique(e), e)[0]


def validate_sweep_topology(mesh: TetMesh, bc: SweepBoundary, *, strict: bool = True) -> SweepTopologyReport:
    """Necessary conditions for the domain to be gamma0 x [0, 1].

    The mesh must be acyclic and connected; gamma0 and gamma1 must be
    disjoint boundary patches made of whole triangles, with equal Betti
    numbers and equal boundary-loop counts; and the rest of the boundary
    (the lateral surface) must look like the patch boundary times an
    interval, i.e. ``k`` annuli for ``k`` boundary loops.
    """
    failures = []
    n = mesh.n_vertices
    bm = tuple(betti(mesh))
    if bm != (1, 0, 0, 0):
        failures.append(f"mesh Betti numbers {bm} are not those of a ball")
    flags = []
    for g in (bc.gamma0, bc.gamma1):
        a = np.zeros(n, dtype=bool)
        a[g] = True
        flags.append(a)
    if np.any(flags[0] & flags[1]):
        failures.append("gamma0 and gamma1 share vertices")
    if not all(mesh.boundary_vertex[g].all() for g in (bc.gamma0, bc.gamma1)):
        failures.append("a Dirichlet set contains interior vertices")

    patches = [_patch(mesh, a) for a in flags]
    for name, a, p in zip(("gamma0", "gamma1"), flags, patches):
        covered = np.unique(mesh.faces[p.faces]) if len(p.faces) else np.zeros(0, dtype=np.int64)
        stray = int(a.sum()) - len(covered)
        if stray:
            failures.append(f"{name} has {stray} vertex(es) on no patch triangle")
    gb = tuple(tuple(surface_betti_fast(p))[:3] for p in patches)
    loops = tuple(_loops(p) for p in patches)
    if gb[0] != gb[1]:
        failures.append(f"gamma0 Betti {gb[0]} differs from gamma1 Betti {gb[1]}")
    if loops[0] != loops[1]:
        failures.append(f"gamma0 has {loops[0]} boundary loop(s) but gamma1 has {loops[1]}")

    bf = np.nonzero(mesh.boundary_face)[0]
    tri = mesh.faces[bf]
    in_patch = flags[0][tri].all(axis=1) | flags[1][tri].all(axis=1)
    lb = tuple(surface_betti_fast(closure(mesh, faces=bf[~in_patch])))[:3]
    if lb != (loops[0], loops[0], 0):
        failures.append(f"lateral surface Betti {lb} do not match {loops[0]} annulus(es)")
    report = SweepTopologyReport(bm, gb, loops, lb, failures)
    if strict and failures:
        raise TopologyMismatch("; ".join(failures))
    return report
