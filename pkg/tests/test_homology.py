import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import closure_of, dense_betti, gf2_rank, seven_vertex_torus

from sweepmorse.homology import (
    ComplexTooHighDimensional,
    NotASurface,
    betti,
    euler_characteristic,
    reduced_betti,
    surface_betti_fast,
)
from sweepmorse.mesh import TetMesh, closure
from sweepmorse.sweepgen import box_grid, kuhn_tets


def parts(tops):
    d = closure_of(tops)
    return [sorted(x[0] for x in d[0])] + [sorted(d[k]) for k in (1, 2, 3)]


def test_gf2_rank_oracle_sanity():
    assert gf2_rank(np.eye(3)) == 3
    assert gf2_rank([[1, 1], [1, 1]]) == 1
    assert gf2_rank([[1, 1, 0], [0, 1, 1], [1, 0, 1]]) == 2  # rank 3 over the reals


@pytest.mark.parametrize("tops, expect", [
    ([(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)], (1, 0, 1, 0)),   # hollow tet
    ([(0, 1, 2, 3)], (1, 0, 0, 0)),
    ([(0, 1), (1, 2), (0, 2)], (1, 1, 0, 0)),
    (seven_vertex_torus(), (1, 2, 1, 0)),
])
def test_betti_known_complexes(tops, expect):
    assert tuple(betti(parts(tops))) == expect
    assert dense_betti(closure_of(tops)) == expect


def test_betti_projective_plane_is_z2():
    # 6-vertex RP^2: over Z/2 it has b1 = b2 = 1
    rp2 = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5), (0, 1, 5), (1, 2, 4), (2, 3, 5),
           (1, 3, 4), (1, 3, 5), (2, 4, 5)]
    assert tuple(betti(parts(rp2))) == dense_betti(closure_of(rp2)) == (1, 1, 1, 0)
    assert tuple(surface_betti_fast(parts(rp2))) == (1, 1, 1, 0)


def test_reduced_betti_examples():
    assert tuple(reduced_betti([[], [], []])) == (1, 0, 0, 0)
    assert tuple(reduced_betti([[7]])) == (0, 0, 0, 0)
    assert tuple(reduced_betti([[1, 2]])) == (0, 1, 0, 0)
    with pytest.raises(ComplexTooHighDimensional):
        reduced_betti(parts([(0, 1, 2, 3)]))


def test_surface_fast_path_examples():
    disk = parts([(0, 1, 2), (0, 2, 3)])
    assert tuple(surface_betti_fast(disk)) == (1, 0, 0, 0)
    sph = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    two = sph + [tuple(x + 10 for x in t) for t in sph]
    assert tuple(surface_betti_fast(parts(two))) == (2, 0, 2, 0)
    assert tuple(surface_betti_fast(parts(seven_vertex_torus()))) == (1, 2, 1, 0)
    with pytest.raises(NotASurface):
        surface_betti_fast(parts([(0, 1, 2), (0, 1, 3), (0, 1, 4)]))


def test_not_closed_complex_rejected():
    with pytest.raises(ValueError):
        betti([[0, 1], [[0, 2]]])


def test_betti_of_mesh_and_euler():
    m = TetMesh(box_grid(2, 2, 2), kuhn_tets(2, 2, 2))
    b = betti(m)
    assert tuple(b) == (1, 0, 0, 0)
    assert b.euler_characteristic == euler_characteristic(m) == 1


def random_subcomplex(rng, mesh, max_simplices=500):
    """Closure of a random selection of tets, faces, edges and vertices."""
    k = [int(rng.integers(0, 1 + min(n, 25))) for n in (mesh.n_tets, len(mesh.faces), len(mesh.edges))]
    sub = closure(mesh, tets=rng.choice(mesh.n_tets, k[0], replace=False),
                  faces=rng.choice(len(mesh.faces), k[1], replace=False),
                  edges=rng.choice(len(mesh.edges), k[2], replace=False),
                  verts=rng.choice(mesh.n_vertices, int(rng.integers(0, 5)), replace=False))
    if sum(sub.counts) > max_simplices:
        return random_subcomplex(rng, mesh, max_simplices)
    return sub


def oracle_betti(sub):
    m = sub.mesh
    dims = [{(int(v),) for v in sub.verts},
            {tuple(e) for e in m.edges[sub.edges].tolist()},
            {tuple(f) for f in m.faces[sub.faces].tolist()},
            {tuple(t) for t in m.tets[sub.tets].tolist()}]
    return dense_betti(dims)


_SMALL = TetMesh(box_grid(3, 2, 2), kuhn_tets(3, 2, 2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sparse_reduction_matches_dense_oracle(seed):
    sub = random_subcomplex(np.random.default_rng(seed), _SMALL)
    assert tuple(betti(sub)) == oracle_betti(sub)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_euler_characteristic_is_alternating_betti_sum(seed):
    sub = random_subcomplex(np.random.default_rng(seed), _SMALL)
    assert betti(sub).euler_characteristic == sub.euler_characteristic
