"""``sweepmorse`` command line.

Exit codes: 0 success, 1 a stage failed or a transition matched no allowed
pattern, 2 usage or input error (bad arguments, unreadable mesh, malformed
config).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .io import (
    MeshFormatError,
    dump_json,
    read_field,
    read_mesh,
    write_field,
    write_mesh,
    write_obj_polylines,
    write_obj_surface,
    write_vtk,
    write_vtk_polydata,
)
from .laplace import SCHEMES, check_max_principle, compute_weights, solve_sweep
from .levelset import PatternMismatch, extract_level_set, net_change, verify_transitions
from .morse import classify_all
from .pipeline import (
    ConfigError,
    StageError,
    boundary_doc,
    generate,
    load_config,
    parse_starts,
    read_boundary,
    run_pipeline,
    trace_starts,
    verify_manifest,
)
from .tracer import compute_gradients, trace_census

INPUT_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError, MeshFormatError)


class CliError(Exception):
    def __init__(self, stage: str, message: str, code: int):
        super().__init__(message)
        self.stage, self.code = stage, code


def _fail_input(exc) -> CliError:
    return CliError("input", f"{type(exc).__name__}: {exc}", 2)


def _load_mesh(path):
    try:
        mesh, pdata = read_mesh(path)
    except INPUT_ERRORS as exc:
        raise _fail_input(exc) from exc
    except ValueError as exc:  # mesh validation errors
        raise CliError("input", f"{type(exc).__name__}: {exc}", 2) from exc
    return mesh, pdata


def _load_field(path, mesh, pdata):
    """A native field file, or the first scalar stored in a ``.vtk`` mesh."""
    try:
        if path is None:
            if not pdata:
                raise MeshFormatError("no --field given and the mesh carries no point data")
            return next(iter(pdata.values()))
        if str(path).endswith(".vtk"):
            _, pd = read_mesh(path, validate=False)
            if not pd:
                raise MeshFormatError(f"{path} has no point data")
            return next(iter(pd.values()))
        return read_field(path, mesh.n_vertices)
    except INPUT_ERRORS as exc:
        raise _fail_input(exc) from exc


def _load_boundary(path):
    try:
        return read_boundary(path)
    except INPUT_ERRORS as exc:
        raise _fail_input(exc) from exc


def _emit(doc, out):
    if out:
        dump_json(out, doc)
    else:
        print(json.dumps(doc, sort_keys=True, indent=1))


# ----------------------------------------------------------- subcommands
def cmd_generate(a):
    params = {k: getattr(a, k) for k in ("n", "nx", "ny", "nz", "neck", "seam", "bend")
              if getattr(a, k) is not None}
    try:
        mesh, bc, used = generate(a.kind, params)
    except (ConfigError, ValueError) as exc:
        raise CliError("generate", str(exc), 2) from exc
    out = Path(a.output)
    write_mesh(out, mesh)
    bpath = Path(a.boundary_out) if a.boundary_out else out.with_suffix(".boundary.json")
    dump_json(bpath, boundary_doc(bc, a.kind, used))
    print(f"wrote {out} ({mesh.n_vertices} vertices, {mesh.n_tets} tets) and {bpath}")
    return 0


def cmd_solve(a):
    mesh, _ = _load_mesh(a.mesh)
    bc = _load_boundary(a.boundary)
    try:
        w = compute_weights(mesh, a.weights)
        f = solve_sweep(mesh, w, bc, tol=a.tol)
    except Exception as exc:  # noqa: BLE001
        raise CliError("solve", f"{type(exc).__name__}: {exc}", 1) from exc
    write_field(a.output, f.values)
    if a.vtk:
        write_vtk(a.vtk, mesh, {"f": f.values})
    mp = check_max_principle(mesh, f, bc)
    note = "" if w.positive else " (scheme not guaranteed positive)"
    print(f"solved {a.weights}: range [{mp.field_min:.6g}, {mp.field_max:.6g}]; "
          f"maximum principle: {'holds' if mp.holds else 'violated'}{note}")
    return 0


def cmd_classify(a):
    mesh, pdata = _load_mesh(a.mesh)
    f = _load_field(a.field, mesh, pdata)
    rep = classify_all(mesh, f, method=a.method)
    crit = rep.interior_critical()
    doc = {"counts": rep.counts(), "interior": [e.as_dict(mesh) for e in crit],
           "boundary_critical": len(rep.boundary_critical())}
    if a.output:
        dump_json(a.output, doc)
    if not crit:
        print("no interior critical points")
    for e in crit:
        print(f"{e.vertex}\t{e.kind}\t{e.value!r}\t" + " ".join(f"{x:.6g}" for x in mesh.vertices[e.vertex]))
    return 0


def _parse_level(s, f, rep):
    if s == "mid-gap":
        cv = [e.value for e in rep.interior_critical()]
        if len(cv) < 2:
            raise CliError("levelset", "mid-gap needs at least two interior critical values", 2)
        return 0.5 * (cv[0] + cv[1])
    try:
        return float(s)
    except ValueError:
        raise CliError("levelset", f"--value {s!r} is not a number or 'mid-gap'", 2) from None


def cmd_levelset(a):
    mesh, pdata = _load_mesh(a.mesh)
    f = _load_field(a.field, mesh, pdata)
    rep = classify_all(mesh, f) if a.value == "mid-gap" else None
    value = _parse_level(a.value, f, rep)
    try:
        surf = extract_level_set(mesh, f, value)
    except ValueError as exc:
        raise CliError("levelset", str(exc), 2) from exc
    b = surf.betti3()
    if a.output:
        if a.output.endswith(".vtk"):
            write_vtk_polydata(a.output, surf.points, surf.triangles)
        else:
            write_obj_surface(a.output, surf.points, surf.triangles)
    print(f"a={value!r}: β=({b[0]},{b[1]},{b[2]})  {len(surf.triangles)} triangles"
          + (f"  (nudged to {surf.value!r})" if surf.nudged else ""))
    return 0


def cmd_transitions(a):
    mesh, pdata = _load_mesh(a.mesh)
    f = _load_field(a.field, mesh, pdata)
    rep = classify_all(mesh, f)
    recs = verify_transitions(mesh, f, rep, samples=0, strict=False)
    doc = {"records": [r.as_dict() for r in recs], "net_change": list(net_change(recs)) if recs else [0, 0, 0]}
    if a.output:
        dump_json(a.output, doc)
    for r in recs:
        print(f"{r.vertex}\t{r.kind}\t{r.value!r}\t{r.betti_below} -> {r.betti_above}\t{r.pattern or 'NONE'}")
    print(f"net change: {tuple(doc['net_change'])}")
    try:
        verify_transitions(mesh, f, rep, samples=a.samples, strict=True)
    except PatternMismatch as exc:
        raise CliError("transitions", str(exc), 1) from exc
    except RuntimeError as exc:
        raise CliError("transitions", str(exc), 1) from exc
    return 0


def cmd_trace(a):
    mesh, pdata = _load_mesh(a.mesh)
    f = _load_field(a.field, mesh, pdata)
    bc = _load_boundary(a.boundary)
    try:
        parse_starts(a.starts)
    except ConfigError as exc:
        raise CliError("trace", str(exc), 2) from exc
    rep = classify_all(mesh, f)
    crit = [e.vertex for e in rep.interior_critical()]
    census = trace_census(mesh, f, compute_gradients(mesh, f), trace_starts(mesh, bc, a.starts),
                          critical=crit)
    doc = census.as_dict()
    doc["starts"] = a.starts
    if a.output:
        write_obj_polylines(a.output, [p.points for p in census.paths])
    if a.report:
        dump_json(a.report, doc)
    print(" ".join(f"{k}={v}" for k, v in census.counts.items())
          + f" merged_pairs={len(census.merged_pairs)}")
    return 0


def cmd_pipeline(a):
    try:
        cfg = load_config(a.config)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise CliError("input", f"{type(exc).__name__}: {exc}", 2) from exc
    except ConfigError as exc:
        raise CliError("config", str(exc), 2) from exc
    if a.no_figures:
        cfg.figures = False
    out = Path(a.output) if a.output else Path(a.config).with_suffix("").with_name(Path(a.config).stem + "_run")
    try:
        res = run_pipeline(cfg, out)
    except ConfigError as exc:
        raise CliError("config", str(exc), 2) from exc
    except StageError as exc:
        raise CliError(exc.stage, str(exc), 2 if exc.stage == "input" else 1) from exc
    print((out / "summary.txt").read_text() if (out / "summary.txt").exists() else "", end="")
    for e in res.report["errors"]:
        print(f"sweepmorse: error [stage={e['stage']}]: {e['message']}", file=sys.stderr)
    print(f"artifacts in {out}")
    return res.exit_code


def cmd_report(a):
    from .report import render_run
    run = Path(a.run_dir)
    if not (run / "report.json").is_file():
        raise CliError("input", f"{run / 'report.json'} does not exist", 2)
    if a.verify:
        bad = verify_manifest(run / "manifest.json")
        for b in bad:
            print(f"manifest: {b}", file=sys.stderr)
        if bad:
            return 1
    render_run(run, figures=not a.no_figures)
    print((run / "summary.txt").read_text(), end="")
    return 0


# ----------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sweepmorse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", help="write a generated mesh and its Dirichlet sets")
    g.add_argument("--kind", choices=("box", "counterexample"), required=True)
    g.add_argument("-n", "--n", type=int, help="cells per axis")
    for k in ("nx", "ny", "nz"):
        g.add_argument(f"--{k}", type=int, help="box cells along one axis")
    g.add_argument("--neck", type=float)
    g.add_argument("--seam", type=int)
    g.add_argument("--bend", type=float)
    g.add_argument("-o", "--output", required=True, help="mesh file (.vtk or native text)")
    g.add_argument("--boundary-out", help="boundary JSON (default: <output>.boundary.json)")
    g.set_defaults(fn=cmd_generate)

    s = sub.add_parser("solve", help="solve the sweep Dirichlet problem")
    s.add_argument("--mesh", required=True)
    s.add_argument("--boundary", required=True)
    s.add_argument("--weights", choices=SCHEMES, default="uniform")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("-o", "--output", required=True, help="field file")
    s.add_argument("--vtk", help="also write the mesh with the field as VTK")
    s.set_defaults(fn=cmd_solve)

    c = sub.add_parser("classify", help="PL critical vertices of a field")
    c.add_argument("--mesh", required=True)
    c.add_argument("--field")
    c.add_argument("--method", choices=("fast", "homology"), default="fast")
    c.add_argument("-o", "--output", help="JSON report")
    c.set_defaults(fn=cmd_classify)

    l_ = sub.add_parser("levelset", help="extract one level set and its Betti numbers")
    l_.add_argument("--mesh", required=True)
    l_.add_argument("--field")
    l_.add_argument("--value", required=True, help="level value or 'mid-gap'")
    l_.add_argument("-o", "--output", help="surface file (.obj or .vtk)")
    l_.set_defaults(fn=cmd_levelset)

    t = sub.add_parser("transitions", help="level-set Betti changes at critical vertices")
    t.add_argument("--mesh", required=True)
    t.add_argument("--field")
    t.add_argument("--samples", type=int, default=3)
    t.add_argument("-o", "--output", help="JSON report")
    t.set_defaults(fn=cmd_transitions)

    r = sub.add_parser("trace", help="descent traces from gamma1 to gamma0")
    r.add_argument("--mesh", required=True)
    r.add_argument("--field")
    r.add_argument("--boundary", required=True)
    r.add_argument("--starts", default="vertices", help="vertices | grid NxM | lattice K")
    r.add_argument("-o", "--output", help="OBJ polylines")
    r.add_argument("--report", help="JSON census")
    r.set_defaults(fn=cmd_trace)

    pp = sub.add_parser("pipeline", help="run all stages from a config file")
    pp.add_argument("config", help="INI config, or a manifest.json to re-run")
    pp.add_argument("-o", "--output", help="run directory")
    pp.add_argument("--no-figures", action="store_true")
    pp.set_defaults(fn=cmd_pipeline)

    rp = sub.add_parser("report", help="render summary and figures of a run directory")
    rp.add_argument("run_dir")
    rp.add_argument("--verify", action="store_true", help="recompute manifest digests first")
    rp.add_argument("--no-figures", action="store_true")
    rp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.fn(a)
    except CliError as exc:
        print(f"sweepmorse: error [stage={exc.stage}]: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
