"""Mesh, field and surface files.

Native mesh text: ``nv nt``, then ``nv`` lines ``x y z``, then ``nt`` lines
of four 0-based vertex ids. Floats are written with ``repr`` so reading a
written file gives back the identical bits.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .mesh import TetMesh

VTK_TETRA = 10


class MeshFormatError(ValueError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


# ------------------------------------------------------------------ native
def write_native_mesh(path, mesh: TetMesh) -> None:
    V, T = mesh.vertices, mesh.tets
    lines = [f"{len(V)} {len(T)}"]
    lines += [" ".join(_fmt(c) for c in row) for row in V.tolist()]
    lines += [" ".join(str(i) for i in row) for row in T.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_native_mesh(path, *, validate: bool = True) -> TetMesh:
    tokens = Path(path).read_text().split()
    try:
        nv, nt = int(tokens[0]), int(tokens[1])
        body = tokens[2:]
        if len(body) != 3 * nv + 4 * nt:
            raise MeshFormatError(f"expected {3 * nv + 4 * nt} numbers after the header, found {len(body)}")
        V = np.array([float(x) for x in body[:3 * nv]]).reshape(nv, 3)
        T = np.array([int(x) for x in body[3 * nv:]], dtype=np.int64).reshape(nt, 4)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"{path}: malformed native mesh ({exc})") from exc
    return TetMesh(V, T, validate=validate)


def write_field(path, values) -> None:
    Path(path).write_text("".join(_fmt(v) + "\n" for v in np.asarray(values, dtype=float)))


def read_field(path, n: int | None = None) -> np.ndarray:
    try:
        vals = np.array([float(x) for x in Path(path).read_text().split()])
    except ValueError as exc:
        raise MeshFormatError(f"{path}: malformed field file ({exc})") from exc
    if n is not None and len(vals) != n:
        raise MeshFormatError(f"{path}: {len(vals)} values for {n} vertices")
    return vals


# --------------------------------------------------------------------- vtk
def write_vtk(path, mesh: TetMesh, point_data: dict | None = None, title: str = "tet mesh") -> None:
    """VTK legacy ASCII unstructured grid of tetrahedra."""
    V, T = mesh.vertices, mesh.tets
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(V)} double"]
    out += [" ".join(_fmt(c) for c in row) for row in V.tolist()]
    out.append(f"CELLS {len(T)} {5 * len(T)}")
    out += ["4 " + " ".join(str(i) for i in row) for row in T.tolist()]
    out.append(f"CELL_TYPES {len(T)}")
    out += [str(VTK_TETRA)] * len(T)
    out += _point_data(len(V), point_data)
    Path(path).write_text("\n".join(out) + "\n")


def _point_data(n: int, point_data: dict | None) -> list[str]:
    if not point_data:
        return []
    out = [f"POINT_DATA {n}"]
    for name, vals in point_data.items():
        vals = np.asarray(vals, dtype=float)
        if len(vals) != n:
            raise ValueError(f"point data {name!r} has {len(vals)} values for {n} points")
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [_fmt(v) for v in vals]
    return out


def read_vtk(path, *, validate: bool = True) -> tuple[TetMesh, dict]:
    """Read a legacy ASCII unstructured grid of tetrahedra with optional
    POINT_DATA scalars. Returns the mesh and a name -> values dict."""
    tok = Path(path).read_text().split()
    up = [t.upper() for t in tok]
    if "ASCII" not in up[:40]:
        raise MeshFormatError(f"{path}: only ASCII legacy VTK is supported")
    if "UNSTRUCTURED_GRID" not in up:
        raise MeshFormatError(f"{path}: not an unstructured grid")

    def section(key):
        try:
            return up.index(key)
        except ValueError:
            raise MeshFormatError(f"{path}: missing {key} section") from None

    try:
        i = section("POINTS")
        nv = int(tok[i + 1])
        V = np.array(tok[i + 3:i + 3 + 3 * nv], dtype=float).reshape(nv, 3)
        i = section("CELLS")
        nc, size = int(tok[i + 1]), int(tok[i + 2])
        raw = np.array(tok[i + 3:i + 3 + size], dtype=np.int64)
        i = section("CELL_TYPES")
        types = np.array(tok[i + 2:i + 2 + nc], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"{path}: malformed VTK ({exc})") from exc
    if np.any(types != VTK_TETRA):
        raise MeshFormatError(f"{path}: only tetrahedral cells (type {VTK_TETRA}) are supported")
    if size != 5 * nc or np.any(raw[::5] != 4):
        raise MeshFormatError(f"{path}: cell list is not all 4-vertex cells")
    T = raw.reshape(nc, 5)[:, 1:]

    data = {}
    if "POINT_DATA" in up:
        j = up.index("POINT_DATA") + 2
        while j < len(tok) and up[j] == "SCALARS":
            name = tok[j + 1]
            k = j + 3 if not tok[j + 3].lstrip("-").isdigit() else j + 4
            if up[k] == "LOOKUP_TABLE":
                k += 2
            data[name] = np.array(tok[k:k + nv], dtype=float)
            j = k + nv
    return TetMesh(V, T, validate=validate), data


def read_mesh(path, *, validate: bool = True) -> tuple[TetMesh, dict]:
    """Read ``.vtk`` or native text, returning (mesh, point data)."""
    path = Path(path)
    if path.suffix.lower() == ".vtk":
        return read_vtk(path, validate=validate)
    return read_native_mesh(path, validate=validate), {}


def write_mesh(path, mesh: TetMesh, point_data: dict | None = None) -> None:
    if Path(path).suffix.lower() == ".vtk":
        write_vtk(path, mesh, point_data)
    else:
        write_native_mesh(path, mesh)


# ----------------------------------------------------------------- surfaces
def write_obj_surface(path, points, triangles) -> None:
    lines = ["v " + " ".join(_fmt(c) for c in p) for p in np.asarray(points).tolist()]
    lines += ["f " + " ".join(str(i + 1) for i in t) for t in np.asarray(triangles).tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def write_vtk_polydata(path, points, triangles, scalars: dict | None = None, title: str = "surface") -> None:
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    F = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA", f"POINTS {len(P)} double"]
    out += [" ".join(_fmt(c) for c in row) for row in P.tolist()]
    out.append(f"POLYGONS {len(F)} {4 * len(F)}")
    out += ["3 " + " ".join(str(i) for i in row) for row in F.tolist()]
    out += _point_data(len(P), scalars)
    Path(path).write_text("\n".join(out) + "\n")


def write_obj_polylines(path, polylines) -> None:
    """Each polyline becomes one ``l`` element over its own vertices."""
    lines, base = [], 1
    for pl in polylines:
        pl = np.asarray(pl, dtype=float).reshape(-1, 3)
        lines += ["v " + " ".join(_fmt(c) for c in p) for p in pl.tolist()]
        if len(pl) >= 2:
            lines.append("l " + " ".join(str(base + i) for i in range(len(pl))))
        base += len(pl)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def json_text(doc) -> str:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=1, separators=(",", ": "), default=_json_default) + "\n"


def dump_json(path, doc) -> None:
    Path(path).write_text(json_text(doc))


def load_json(path):
    return json.loads(Path(path).read_text())
