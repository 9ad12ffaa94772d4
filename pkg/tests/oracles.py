"""Independent reference implementations used only by the tests.

They are deliberately naive (dense matrices, Python loops, itertools) and
share no code with the package beyond plain arrays.
"""

from itertools import combinations

import numpy as np


def gf2_rank(M: np.ndarray) -> int:
    """Rank over Z/2 by dense Gaussian elimination."""
    A = (np.asarray(M, dtype=np.uint8) & 1).copy()
    rows, cols = A.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = np.nonzero(A[r:, c])[0]
        if not len(piv):
            continue
        p = r + piv[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
        hit = np.nonzero(A[:, c])[0]
        hit = hit[hit != r]
        A[hit] ^= A[r]
        r += 1
    return r


def closure_of(top_simplices) -> list[set]:
    """All faces (as sorted tuples) of the given simplices, grouped by dimension."""
    dims = [set(), set(), set(), set()]
    for s in top_simplices:
        s = tuple(sorted(int(x) for x in s))
        for k in range(1, len(s) + 1):
            for c in combinations(s, k):
                dims[k - 1].add(c)
    return dims


def dense_betti(dims) -> tuple[int, int, int, int]:
    """Betti numbers from dense boundary matrices of a closed complex.

    ``dims[k]`` is a collection of k-simplices as vertex tuples.
    """
    simp = [sorted(tuple(sorted(s)) for s in d) for d in dims] + [[]] * (4 - len(dims))
    index = [{s: i for i, s in enumerate(d)} for d in simp]
    n = [len(d) for d in simp]
    ranks = [0, 0, 0, 0, 0]  # ranks[k] = rank of d_k: C_k -> C_{k-1}
    for k in (1, 2, 3):
        if not n[k] or not n[k - 1]:
            continue
        D = np.zeros((n[k - 1], n[k]), dtype=np.uint8)
        for j, s in enumerate(simp[k]):
            for face in combinations(s, k):
                D[index[k - 1][face], j] = 1
        ranks[k] = gf2_rank(D)
    return tuple(n[k] - ranks[k] - ranks[k + 1] for k in range(4))


def brute_link(tets, v):
    """Link of ``v``: faces of tets containing ``v`` with ``v`` removed."""
    out = [set(), set(), set()]
    for t in tets:
        t = [int(x) for x in t]
        if v in t:
            rest = tuple(sorted(x for x in t if x != v))
            for k in (1, 2, 3):
                for c in combinations(rest, k):
                    out[k - 1].add(c)
    return out


def brute_lower_link(tets, v, values):
    """Link simplices whose vertices all precede ``v`` in (value, index) order."""
    key = lambda i: (values[i], i)  # noqa: E731
    return [{s for s in d if all(key(x) < key(v) for x in s)} for d in brute_link(tets, v)]


def brute_reduced_betti(dims) -> tuple[int, int, int, int]:
    if not dims[0]:
        return (1, 0, 0, 0)
    b = dense_betti(dims)
    return (0, b[0] - 1, b[1], b[2])


def brute_kind(tets, v, values, boundary=False) -> str:
    rb = brute_reduced_betti(brute_lower_link(tets, v, values))
    if not any(rb):
        return "regular"
    if rb[1] + rb[2] > 1:
        return "degenerate"
    if rb[0]:
        return "minimum"
    if rb[1]:
        return "1-saddle"
    if rb[2]:
        return "2-saddle"
    return "maximum"


def fem_stiffness(vertices, tets) -> dict:
    """Off-diagonal P1 stiffness entries K_ij = sum over tets of vol * grad phi_i . grad phi_j.

    The Laplace edge weight of the cotangent scheme is ``-K_ij``.
    """
    K = {}
    for t in tets:
        t = [int(x) for x in t]
        P = np.asarray(vertices, dtype=float)[t]
        A = np.column_stack([np.ones(4), P])  # rows: [1, x, y, z]
        C = np.linalg.inv(A)                  # column i: coefficients of phi_i
        G = C[1:, :]                          # gradients, 3 x 4
        vol = abs(np.linalg.det(A)) / 6.0
        for a, b in combinations(range(4), 2):
            key = (min(t[a], t[b]), max(t[a], t[b]))
            K[key] = K.get(key, 0.0) + vol * float(G[:, a] @ G[:, b])
    return K


def brute_star_tets(tets, v):
    return sorted(i for i, t in enumerate(np.asarray(tets).tolist()) if v in t)


def seven_vertex_torus():
    """Minimal (Moebius) triangulation of the torus on 7 vertices."""
    return [tuple(sorted(((i) % 7, (i + 1) % 7, (i + 3) % 7))) for i in range(7)] + \
           [tuple(sorted(((i) % 7, (i + 2) % 7, (i + 3) % 7))) for i in range(7)]
