import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepmorse.homology import betti
from sweepmorse.levelset import (
    PATTERNS,
    PatternMismatch,
    TopologyNotConstant,
    ValueOutOfRange,
    extract_level_set,
    extract_sublevel_complex,
    level_betti,
    net_change,
    sample_intervals,
    verify_transitions,
)
from sweepmorse.mesh import TetMesh
from sweepmorse.morse import classify_all
from sweepmorse.sweepgen import box_grid, generate_box, kuhn_tets


def cube(n):
    P = box_grid(n, n, n) * 2 - 1
    return TetMesh(P, kuhn_tets(n, n, n)), P


def test_linear_field_half_level_is_flat_disk():
    mesh, _ = generate_box(4)
    z = mesh.vertices[:, 2]
    s = extract_level_set(mesh, z, 0.5 + 1e-3)
    assert np.allclose(s.points[:, 2], 0.5 + 1e-3)
    assert s.betti3() == (1, 0, 0)
    assert s.betti3(fast=False) == (1, 0, 0)


def test_nudge_moves_level_off_vertex_values():
    mesh, _ = generate_box(4)
    z = mesh.vertices[:, 2]
    s = extract_level_set(mesh, z, 0.5)  # a whole vertex layer sits at 0.5
    assert s.nudged and s.value > 0.5 and s.requested == 0.5
    assert s.betti3() == (1, 0, 0)


def test_out_of_range():
    mesh, _ = generate_box(2)
    with pytest.raises(ValueOutOfRange):
        extract_level_set(mesh, mesh.vertices[:, 2], 1.0)


@pytest.mark.parametrize("field, a, expect", [
    (lambda p: np.linalg.norm(p, axis=1), 0.55, (1, 0, 1)),
    (lambda p: np.hypot(np.hypot(p[:, 0], p[:, 1]) - 0.55, p[:, 2]), 0.27, (1, 2, 1)),
    (lambda p: np.minimum(np.linalg.norm(p - [0.5, 0, 0], axis=1),
                          np.linalg.norm(p + [0.5, 0, 0], axis=1)), 0.3, (2, 0, 2)),
])
def test_level_sets_of_distance_fields(field, a, expect):
    mesh, P = cube(16)
    f = field(P)
    s = extract_level_set(mesh, f, a)
    assert s.betti3() == expect
    assert s.betti3(fast=False) == expect
    assert not s.boundary_edge.any()
    assert s.edge_valence.max() == 2
    # every point lies on its source edge at the requested value (linear interpolation)
    e = mesh.edges[s.source_edges]
    t = (s.value - f[e[:, 0]]) / (f[e[:, 1]] - f[e[:, 0]])
    assert np.all((t >= 0) & (t <= 1))


_SMALL, _SP = cube(4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_fast_surface_betti_matches_reduction(seed, q):
    f = np.random.default_rng(seed).normal(size=_SMALL.n_vertices)
    a = float(np.quantile(f, q))
    s = extract_level_set(_SMALL, f, a)
    assert s.betti3(fast=True) == s.betti3(fast=False)
    # welded: no surface edge on more than two triangles
    assert s.edge_valence.max() <= 2


def test_monkey_saddle_is_rejected():
    mesh, P = cube(4)
    x, y, z = P.T
    f = x ** 3 - 3 * x * y ** 2 + z ** 2
    rep = classify_all(mesh, f)
    crit = rep.interior_critical()
    assert len(crit) == 1 and crit[0].kind == "degenerate" and crit[0].reduced.b0 == 2
    with pytest.raises(PatternMismatch):
        verify_transitions(mesh, f, rep)
    recs = verify_transitions(mesh, f, rep, strict=False)
    assert recs[0].pattern is None


def test_linear_field_has_no_transitions():
    mesh, _ = generate_box(4)
    z = mesh.vertices[:, 2] + 1e-3 * mesh.vertices[:, 0]
    rep = classify_all(mesh, z)
    assert verify_transitions(mesh, z, rep) == []


def test_patterns_table():
    assert set(PATTERNS["1-saddle"]) == {(0, 2, 0), (-1, 0, -1)}
    assert set(PATTERNS["2-saddle"]) == {(0, -2, 0), (1, 0, 1)}


# ------------------------------------------------------- counterexample
def test_counterexample_level_sets(ce_uniform):
    mesh, _, f, rep = ce_uniform
    lo, hi = (e.value for e in rep.interior_critical())
    assert level_betti(mesh, f, 0.5 * (lo + hi), check=True) == (1, 2, 0)
    assert level_betti(mesh, f, 0.01, check=True) == (1, 0, 0)
    assert level_betti(mesh, f, 0.99, check=True) == (1, 0, 0)
    assert level_betti(mesh, f, 0.85) == (1, 0, 0)  # above both saddles on this geometry


def test_counterexample_transitions(ce_uniform):
    mesh, _, f, rep = ce_uniform
    recs = verify_transitions(mesh, f, rep, samples=3)
    assert [r.delta for r in recs] == [(0, 2, 0), (0, -2, 0)]
    assert [r.pattern for r in recs] == ["b1+2", "b1-2"]
    assert net_change(recs) == (0, 0, 0)
    for s in sample_intervals(mesh, f, rep, samples=4):
        assert s.constant and len(s.levels) == 4


def test_counterexample_sublevel_complexes(ce_uniform):
    mesh, _, f, rep = ce_uniform
    lo, hi = (e.value for e in rep.interior_critical())
    v = f.values
    below = v[v < lo].max()
    assert tuple(betti(extract_sublevel_complex(mesh, f, below))) == (1, 0, 0, 0)
    between = v[(v > lo) & (v < hi)].max()
    assert tuple(betti(extract_sublevel_complex(mesh, f, between))) == (1, 1, 0, 0)
    assert tuple(betti(extract_sublevel_complex(mesh, f, hi))) == (1, 0, 0, 0)
    assert tuple(betti(extract_sublevel_complex(mesh, f, 1.0))) == (1, 0, 0, 0)


def test_topology_not_constant_detected(monkeypatch, ce_uniform):
    mesh, _, f, rep = ce_uniform
    import sweepmorse.levelset as ls
    real = ls.level_betti
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        b = real(*a, **k)
        return (b[0] + 1, b[1], b[2]) if calls["n"] == 5 else b

    monkeypatch.setattr(ls, "level_betti", flaky)
    with pytest.raises(TopologyNotConstant):
        ls.verify_transitions(mesh, f, rep, samples=3)
