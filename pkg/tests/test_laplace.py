import numpy as np
import pytest
from conftest import regular_tet
from oracles import fem_stiffness

from sweepmorse.laplace import (
    InvalidBoundary,
    ScalarField,
    SweepBoundary,
    check_max_principle,
    compute_weights,
    residuals,
    row_weight,
    solve_sweep,
)
from sweepmorse.mesh import TetMesh
from sweepmorse.sweepgen import box_grid, generate_box, generate_warped_box, kuhn_tets


def test_uniform_weights_are_one(box4):
    mesh, _ = box4
    w = compute_weights(mesh, "uniform")
    assert np.array_equal(w.values, np.ones(len(mesh.edges)))
    assert w.positive


def test_regular_tet_cotangent_weights_equal_positive():
    m = TetMesh(*regular_tet())
    w = compute_weights(m, "cotangent").values
    assert np.allclose(w, w[0], rtol=1e-12) and w[0] > 0
    # edge length 2*sqrt(2), dihedral arccos(1/3): l * cot / 6
    assert w[0] == pytest.approx(2 * np.sqrt(2) * (1 / np.sqrt(8)) / 6, rel=1e-12)


def test_sliver_has_negative_cotangent_weight():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.5, 0.5, 1e-3]], float)
    m = TetMesh(V, [[0, 1, 2, 3]])
    w = compute_weights(m, "cotangent")
    assert np.any(w.values < 0)
    assert not w.positive
    assert compute_weights(m, "positive-dual").positive


def test_cotangent_matches_fem_stiffness(rng):
    mesh, _ = generate_warped_box(3, rng, amplitude=0.4)
    w = compute_weights(mesh, "cotangent").values
    K = fem_stiffness(mesh.vertices, mesh.tets)
    ref = np.array([-K[(int(a), int(b))] for a, b in mesh.edges])
    assert np.allclose(w, ref, rtol=1e-10, atol=1e-12)


def test_positive_dual_is_positive_on_warped_meshes(rng):
    for _ in range(5):
        mesh, _ = generate_warped_box(4, rng, amplitude=0.6)
        assert compute_weights(mesh, "positive-dual").positive


def test_unknown_scheme():
    mesh, _ = generate_box(1)
    with pytest.raises(ValueError):
        compute_weights(mesh, "mean-value")


def test_cotangent_reproduces_linear_field_on_box():
    mesh, bc = generate_box(5)
    f = solve_sweep(mesh, compute_weights(mesh, "cotangent"), bc)
    assert np.max(np.abs(f.values - mesh.vertices[:, 2])) < 1e-8


def test_uniform_linear_field_is_harmonic_at_interior_kuhn_vertices():
    # interior Kuhn neighbourhoods are symmetric under negation
    mesh, _ = generate_box(4)
    r = residuals(mesh, compute_weights(mesh, "uniform"), mesh.vertices[:, 2])
    assert np.max(np.abs(r[~mesh.boundary_vertex])) < 1e-12


def test_solution_satisfies_residual_tolerance(rng):
    mesh, bc = generate_warped_box(4, rng, amplitude=0.4)
    for scheme in ("uniform", "cotangent", "positive-dual"):
        w = compute_weights(mesh, scheme)
        f = solve_sweep(mesh, w, bc, tol=1e-10)
        free = np.ones(mesh.n_vertices, bool)
        free[bc.gamma0] = free[bc.gamma1] = False
        scaled = np.abs(residuals(mesh, w, f)[free]) / row_weight(mesh, w)[free]
        assert scaled.max() <= 1e-10
        assert np.all(f.values[bc.gamma0] == 0) and np.all(f.values[bc.gamma1] == 1)


def test_adjacent_single_vertex_dirichlet_sets():
    mesh, _ = generate_box(3)
    a, b = (int(x) for x in mesh.edges[0])
    bc = SweepBoundary([a], [b])
    w = compute_weights(mesh, "uniform")
    f = solve_sweep(mesh, w, bc, tol=1e-10)
    free = np.ones(mesh.n_vertices, bool)
    free[[a, b]] = False
    assert np.all(np.abs(residuals(mesh, w, f)[free]) <= 1e-10 * row_weight(mesh, w)[free])
    assert 0 <= f.values.min() and f.values.max() <= 1


@pytest.mark.parametrize("make, msg", [
    (lambda m, bc: SweepBoundary([], bc.gamma1), "nonempty"),
    (lambda m, bc: SweepBoundary(bc.gamma0, np.r_[bc.gamma1, bc.gamma0[:1]]), "intersect"),
    (lambda m, bc: SweepBoundary(np.r_[bc.gamma0, np.nonzero(~m.boundary_vertex)[0][:1]], bc.gamma1), "interior"),
    (lambda m, bc: SweepBoundary([0, m.n_vertices - 1 - 0], [5]), "connected"),
    (lambda m, bc: SweepBoundary([m.n_vertices + 3], bc.gamma1), "range"),
])
def test_invalid_boundaries(box4, make, msg):
    mesh, bc = box4
    with pytest.raises(InvalidBoundary, match=msg):
        solve_sweep(mesh, compute_weights(mesh, "uniform"), make(mesh, bc))


def test_max_principle_reports():
    mesh, bc = generate_box(4)
    z = mesh.vertices[:, 2]
    assert check_max_principle(mesh, z, bc).holds
    spike = z.copy()
    v = int(np.nonzero(~mesh.boundary_vertex)[0][7])
    spike[v] = 0.99
    rep = check_max_principle(mesh, spike, bc)
    assert rep.violations == [v]
    assert rep.kinds[v] == "local-max"


def test_max_principle_holds_for_positive_schemes_on_counterexample(ce_uniform):
    mesh, bc, f, _ = ce_uniform
    assert check_max_principle(mesh, f, bc).holds
    g = solve_sweep(mesh, compute_weights(mesh, "positive-dual"), bc)
    rep = check_max_principle(mesh, g, bc)
    assert rep.holds and rep.field_min == 0.0 and rep.field_max == 1.0


def test_scalar_field_tie_break_and_negation():
    f = ScalarField([0.5, 0.1, 0.5, 0.1])
    assert f.order.tolist() == [1, 3, 0, 2]
    assert (-f).order.tolist() == [0, 2, 1, 3]
    with pytest.raises(ValueError):
        ScalarField([0.0, np.nan])


def test_box_grid_is_x_fastest():
    P = box_grid(2, 1, 1)
    assert P[1].tolist() == [0.5, 0.0, 0.0]
    assert len(kuhn_tets(2, 1, 1)) == 12
