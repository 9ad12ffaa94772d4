"""Staged runs: config parsing, the structured report and the run manifest.

A run is fully determined by its config and input files. The report is one
JSON document (``report.json``) whose bytes depend only on those, so two
runs of the same config can be compared with ``cmp``.
"""

from __future__ import annotations

import configparser
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .io import (
    MeshFormatError,
    dump_json,
    file_digest,
    load_json,
    read_mesh,
    write_field,
    write_mesh,
    write_obj_polylines,
    write_obj_surface,
    write_vtk,
    write_vtk_polydata,
)
from .laplace import (
    SCHEMES,
    SweepBoundary,
    check_max_principle,
    compute_weights,
    residuals,
    row_weight,
    solve_sweep,
)
from .levelset import (
    PatternMismatch,
    TopologyNotConstant,
    extract_level_set,
    net_change,
    sample_intervals,
    verify_transitions,
)
from .morse import classify_all
from .sweepgen import (
    SweepParams,
    generate_box,
    generate_counterexample,
    validate_sweep_topology,
)
from .tracer import (
    compute_gradients,
    patch_grid_starts,
    patch_lattice_starts,
    trace_census,
)

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "sweepmorse.report/1"
MANIFEST_SCHEMA = "sweepmorse.manifest/1"
BOUNDARY_SCHEMA = "sweepmorse.boundary/1"
STAGES = ("generate", "solve", "classify", "transitions", "levelset", "trace")


class ConfigError(ValueError):
    """Malformed or incomplete run configuration (a usage error)."""


class StageError(RuntimeError):
    """A failure tagged with the stage it happened in."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


# ------------------------------------------------------------------ config
@dataclass
class RunConfig:
    kind: str = "counterexample"          # box | counterexample | file
    params: dict = field(default_factory=dict)
    mesh_path: str | None = None
    boundary_path: str | None = None
    weights: str = "uniform"
    tol: float = 1e-10
    stages: tuple = STAGES
    levels: tuple = ("near-0", "mid-gap", "near-1")
    samples: int = 3
    starts: str = "lattice 2"
    figures: bool = True

    def as_dict(self) -> dict:
        return {"mesh": {"kind": self.kind, "params": dict(self.params), "path": self.mesh_path,
                         "boundary": self.boundary_path},
                "solve": {"weights": self.weights, "tol": self.tol},
                "stages": list(self.stages), "levelset": {"values": list(self.levels)},
                "transitions": {"samples": self.samples}, "trace": {"starts": self.starts},
                "report": {"figures": self.figures}}


def _split(s: str) -> list[str]:
    return [t for t in s.replace(",", " ").split() if t]


def parse_starts(spec: str) -> tuple[str, tuple[int, ...]]:
    """``vertices``, ``grid NxM`` or ``lattice K``."""
    parts = spec.split()
    if parts == ["vertices"]:
        return "vertices", ()
    if len(parts) == 2 and parts[0] == "grid":
        try:
            nx, ny = (int(x) for x in parts[1].lower().split("x"))
        except ValueError:
            raise ConfigError(f"grid starts need NxM, got {parts[1]!r}") from None
        if nx < 1 or ny < 1:
            raise ConfigError("grid dimensions must be positive")
        return "grid", (nx, ny)
    if len(parts) == 2 and parts[0] == "lattice":
        try:
            k = int(parts[1])
        except ValueError:
            raise ConfigError(f"lattice level must be an integer, got {parts[1]!r}") from None
        if k < 2:
            raise ConfigError("lattice level must be at least 2")
        return "lattice", (k,)
    raise ConfigError(f"unknown start specification {spec!r}; use vertices, grid NxM or lattice K")


def _level_token(t: str) -> str | float:
    if t in ("near-0", "near-1", "mid-gap"):
        return t
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"level {t!r} is neither a number nor one of near-0, mid-gap, near-1") from None


def load_config(path) -> RunConfig:
    """Read an INI run config. Relative paths resolve against the config's folder.

    Sections and keys::

        [mesh]       kind = box | counterexample | file
                     n, nx, ny, nz, neck, seam, bend   (generator parameters)
                     path, boundary                    (kind = file)
        [solve]      weights, tol
        [run]        stages = generate solve classify ...
        [levelset]   values = near-0 mid-gap near-1 0.3
        [transitions] samples
        [trace]      starts = vertices | grid NxM | lattice K
        [report]     figures = yes | no
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} does not exist")
    if path.suffix == ".json":
        doc = load_json(path)
        if "config" in doc:  # a manifest
            doc = doc["config"]
        return config_from_dict(doc, path.parent)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    known = {"mesh", "solve", "run", "levelset", "transitions", "trace", "report"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"{path}: unknown section(s) {sorted(extra)}")
    doc = {"mesh": dict(cp["mesh"]) if cp.has_section("mesh") else {}}
    m = doc["mesh"]
    params = {k: m.pop(k) for k in list(m) if k in ("n", "nx", "ny", "nz", "neck", "seam", "bend")}
    doc["mesh"] = {"kind": m.pop("kind", None), "params": params, "path": m.pop("path", None),
                   "boundary": m.pop("boundary", None)}
    if m:
        raise ConfigError(f"{path}: unknown [mesh] key(s) {sorted(m)}")
    g = lambda s, k: cp.get(s, k, fallback=None)  # noqa: E731
    doc["solve"] = {"weights": g("solve", "weights"), "tol": g("solve", "tol")}
    doc["stages"] = _split(g("run", "stages")) if g("run", "stages") else None
    doc["levelset"] = {"values": _split(g("levelset", "values")) if g("levelset", "values") else None}
    doc["transitions"] = {"samples": g("transitions", "samples")}
    doc["trace"] = {"starts": g("trace", "starts")}
    doc["report"] = {"figures": g("report", "figures")}
    return config_from_dict(doc, path.parent)


def config_from_dict(doc: dict, base: Path | None = None) -> RunConfig:
    cfg = RunConfig()
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    mesh = doc.get("mesh") or {}
    cfg.kind = mesh.get("kind") or cfg.kind
    if cfg.kind not in ("box", "counterexample", "file"):
        raise ConfigError(f"mesh kind must be box, counterexample or file, not {cfg.kind!r}")
    params = {}
    for k, v in (mesh.get("params") or {}).items():
        try:
            params[k] = int(v) if k in ("n", "nx", "ny", "nz", "seam") else float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"mesh parameter {k}={v!r} is not a number") from None
    cfg.params = params

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return str(p if p.is_absolute() or base is None else (base / p))

    cfg.mesh_path, cfg.boundary_path = resolve(mesh.get("path")), resolve(mesh.get("boundary"))
    if cfg.kind == "file" and (cfg.mesh_path is None or cfg.boundary_path is None):
        raise ConfigError("mesh kind 'file' needs both path and boundary")
    solve = doc.get("solve") or {}
    cfg.weights = solve.get("weights") or cfg.weights
    if cfg.weights not in SCHEMES:
        raise ConfigError(f"weights must be one of {SCHEMES}, not {cfg.weights!r}")
    if solve.get("tol") is not None:
        try:
            cfg.tol = float(solve["tol"])
        except ValueError:
            raise ConfigError(f"tol {solve['tol']!r} is not a number") from None
        if not cfg.tol > 0:
            raise ConfigError("tol must be positive")
    if doc.get("stages"):
        bad = [s for s in doc["stages"] if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stage(s) {bad}; choose from {STAGES}")
        cfg.stages = tuple(s for s in STAGES if s in doc["stages"])
    lv = (doc.get("levelset") or {}).get("values")
    if lv:
        cfg.levels = tuple(_level_token(str(t)) for t in lv)
    smp = (doc.get("transitions") or {}).get("samples")
    if smp is not None:
        try:
            cfg.samples = int(smp)
        except ValueError:
            raise ConfigError(f"samples {smp!r} is not an integer") from None
    st = (doc.get("trace") or {}).get("starts")
    if st:
        parse_starts(st)
        cfg.starts = st
    fig = (doc.get("report") or {}).get("figures")
    if fig is not None:
        cfg.figures = str(fig).lower() in ("1", "yes", "true", "on")
    return cfg


# ------------------------------------------------------------ mesh sources
def generate(kind: str, params: dict):
    """Build a generated mesh and boundary. Returns (mesh, bc, params used)."""
    if kind == "box":
        n = params.get("n", 8)
        dims = tuple(int(params.get(k, n)) for k in ("nx", "ny", "nz"))
        mesh, bc = generate_box(*dims)
        return mesh, bc, {"nx": dims[0], "ny": dims[1], "nz": dims[2]}
    if kind == "counterexample":
        unknown = set(params) - {"n", "neck", "seam", "bend"}
        if unknown:
            raise ConfigError(f"counterexample does not take {sorted(unknown)}")
        p = SweepParams(**params)
        mesh, bc = generate_counterexample(p)
        return mesh, bc, p.as_dict()
    raise ConfigError(f"cannot generate mesh kind {kind!r}")


def boundary_doc(bc: SweepBoundary, generator: str | None = None, params: dict | None = None) -> dict:
    return {"schema": BOUNDARY_SCHEMA, "generator": generator, "params": params or {},
            "gamma0": bc.gamma0.tolist(), "gamma1": bc.gamma1.tolist()}


def read_boundary(path) -> SweepBoundary:
    try:
        doc = load_json(path)
        return SweepBoundary(np.asarray(doc["gamma0"], dtype=np.int64),
                             np.asarray(doc["gamma1"], dtype=np.int64))
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshFormatError(f"{path}: not a boundary file ({exc})") from exc


# ----------------------------------------------------------------- stages
def level_targets(levels, f: np.ndarray, crit_values: list[float]) -> list[tuple[str, float]]:
    """Resolve symbolic levels. ``mid-gap`` expands to the midpoint of every
    gap between consecutive interior critical values; ``near-0``/``near-1``
    sit 1% of the range inside the extremes."""
    lo, hi = float(f.min()), float(f.max())
    out = []
    for t in levels:
        if t == "near-0":
            out.append(("near-0", lo + 0.01 * (hi - lo)))
        elif t == "near-1":
            out.append(("near-1", hi - 0.01 * (hi - lo)))
        elif t == "mid-gap":
            gaps = list(zip(crit_values[:-1], crit_values[1:]))
            for i, (a, b) in enumerate(gaps):
                out.append(("mid-gap" if len(gaps) == 1 else f"mid-gap-{i + 1}", 0.5 * (a + b)))
        else:
            out.append((repr(float(t)), float(t)))
    return out


def _stage(name):
    def wrap(fn):
        def inner(*a, **k):
            try:
                return fn(*a, **k)
            except (StageError, ConfigError, KeyboardInterrupt):
                raise
            except Exception as exc:  # noqa: BLE001 - re-raised with stage context
                raise StageError(name, exc) from exc
        return inner
    return wrap


@_stage("input")
def _load_input(cfg: RunConfig):
    mesh, pdata = read_mesh(cfg.mesh_path)
    return mesh, read_boundary(cfg.boundary_path)


@_stage("generate")
def _generate(cfg: RunConfig):
    return generate(cfg.kind, cfg.params)


@_stage("solve")
def _solve(mesh, bc, cfg: RunConfig):
    topo = validate_sweep_topology(mesh, bc, strict=False)
    w = compute_weights(mesh, cfg.weights)
    f = solve_sweep(mesh, w, bc, tol=cfg.tol)
    free = np.ones(mesh.n_vertices, dtype=bool)
    free[bc.gamma0] = free[bc.gamma1] = False
    res = residuals(mesh, w, f)[free] / row_weight(mesh, w)[free] if free.any() else np.zeros(0)
    mp = check_max_principle(mesh, f, bc)
    neg = int(np.sum(w.values < 0))
    solve = {"weights": cfg.weights, "tol": cfg.tol, "n_free": int(free.sum()),
             "max_scaled_residual": float(np.max(np.abs(res))) if len(res) else 0.0,
             "field_min": mp.field_min, "field_max": mp.field_max,
             "negative_weights": neg, "zero_weights": int(np.sum(w.values == 0)), "min_weight": float(w.values.min()),
             "max_weight": float(w.values.max())}
    maxp = {"holds": mp.holds, "violations": [{"vertex": v, "kind": mp.kinds[v]} for v in mp.violations],
            "scheme_positive": bool(w.values.min() > 0)}
    return f, topo, solve, maxp


@_stage("classify")
def _classify(mesh, f):
    rep = classify_all(mesh, f)
    crit = rep.interior_critical()
    return rep, {"counts": rep.counts(), "interior": [e.as_dict(mesh) for e in crit],
                 "boundary_critical": len(rep.boundary_critical())}


@_stage("transitions")
def _transitions(mesh, f, rep, samples):
    doc = {"status": "ok", "error": None}
    try:
        recs = verify_transitions(mesh, f, rep, samples=0, strict=True)
    except PatternMismatch as exc:
        recs = verify_transitions(mesh, f, rep, samples=0, strict=False)
        doc.update(status="pattern-mismatch", error=str(exc))
    intervals = sample_intervals(mesh, f, rep, samples) if samples else []
    if doc["status"] == "ok" and any(not s.constant for s in intervals):
        doc.update(status="topology-not-constant",
                   error=str(TopologyNotConstant("level-set Betti numbers vary inside a gap")))
    doc["records"] = [r.as_dict() for r in recs]
    doc["net_change"] = list(net_change(recs)) if recs else [0, 0, 0]
    doc["intervals"] = [s.as_dict() for s in intervals]
    doc["samples"] = samples
    return doc


@_stage("levelset")
def _levelsets(mesh, f, rep, levels, out: Path | None):
    rows = []
    targets = level_targets(levels, f.values, [e.value for e in rep.interior_critical()] if rep else [])
    for label, a in targets:
        surf = extract_level_set(mesh, f, a)
        row = {"label": label, "requested": a, "value": surf.value, "nudged": surf.nudged,
               "betti": list(surf.betti3()), "n_points": len(surf.points),
               "n_triangles": len(surf.triangles), "euler": surf.euler_characteristic,
               "files": []}
        if out is not None:
            stem = f"levelset_{label.replace('.', 'p').replace('-', '_')}"
            write_obj_surface(out / f"{stem}.obj", surf.points, surf.triangles)
            write_vtk_polydata(out / f"{stem}.vtk", surf.points, surf.triangles, title=f"level {label}")
            row["files"] = [f"surfaces/{stem}.obj", f"surfaces/{stem}.vtk"]
        rows.append(row)
    return rows


def trace_starts(mesh, bc: SweepBoundary, spec: str):
    kind, args = parse_starts(spec)
    if kind == "vertices":
        return [int(v) for v in bc.gamma1]
    if kind == "grid":
        return patch_grid_starts(mesh, bc.gamma1, *args)
    return patch_lattice_starts(mesh, bc.gamma1, args[0])


@_stage("trace")
def _trace(mesh, f, bc, rep, spec):
    g = compute_gradients(mesh, f)
    crit = [e.vertex for e in rep.interior_critical()] if rep else []
    starts = trace_starts(mesh, bc, spec)
    census = trace_census(mesh, f, g, starts, critical=crit)
    doc = census.as_dict()
    doc["starts"] = spec
    if crit and census.merged_pairs:
        ends = np.array([census.paths[i].end for pair in census.merged_pairs for i in pair])
        doc["merge_distance_to_critical"] = {
            str(v): float(np.min(np.linalg.norm(ends - mesh.vertices[v], axis=1))) for v in crit}
    return census, doc


# -------------------------------------------------------------------- run
@dataclass
class RunResult:
    report: dict
    manifest: dict
    exit_code: int
    out_dir: Path


def run_pipeline(cfg: RunConfig, out_dir, *, render: bool = True) -> RunResult:
    """Execute the requested stages and write every artifact into ``out_dir``.

    Exit code 0 means every stage succeeded and no transition failed its
    pattern check; 1 otherwise. Input problems raise :class:`StageError`
    with stage ``"input"`` before anything is written.
    """
    out = Path(out_dir)
    if cfg.kind == "file":
        mesh, bc = _load_input(cfg)
        used = {}
        source = {"kind": "file", "path": cfg.mesh_path, "digest": _digest_input(cfg.mesh_path),
                  "boundary": cfg.boundary_path, "boundary_digest": _digest_input(cfg.boundary_path)}
    elif "generate" not in cfg.stages:
        raise ConfigError("a generated mesh needs the generate stage")
    else:
        mesh, bc, used = _generate(cfg)
        source = {"kind": cfg.kind, "params": used}

    out.mkdir(parents=True, exist_ok=True)
    (out / "surfaces").mkdir(exist_ok=True)
    outputs = {}
    report = {"schema": REPORT_SCHEMA, "tool_version": __version__, "config": cfg.as_dict(),
              "mesh": {"source": source, "n_vertices": mesh.n_vertices, "n_tets": mesh.n_tets,
                       "gamma0": len(bc.gamma0), "gamma1": len(bc.gamma1)},
              "stages": {s: "skipped" for s in STAGES}, "errors": []}
    if cfg.kind != "file":
        write_mesh(out / "mesh.txt", mesh)
        dump_json(out / "boundary.json", boundary_doc(bc, cfg.kind, used))
        outputs.update(mesh="mesh.txt", boundary="boundary.json")
        report["mesh"]["digest"] = file_digest(out / "mesh.txt")
        report["stages"]["generate"] = "ok"

    code = 0
    f = rep = None
    timings = {}

    def attempt(name, fn):
        nonlocal code
        t0 = time.perf_counter()
        try:
            val = fn()
            report["stages"][name] = "ok"
            return val
        except StageError as exc:
            report["stages"][name] = "failed"
            report["errors"].append({"stage": exc.stage, "message": str(exc)})
            code = 1
            return None
        finally:
            timings[name] = time.perf_counter() - t0

    if "solve" in cfg.stages:
        res = attempt("solve", lambda: _solve(mesh, bc, cfg))
        if res is not None:
            f, topo, report["solve"], report["max_principle"] = res
            report["boundary_topology"] = topo.as_dict()
            write_field(out / "field.txt", f.values)
            write_vtk(out / "field.vtk", mesh, {"f": f.values})
            outputs.update(field="field.txt", field_vtk="field.vtk")
    if f is None:
        for s in ("classify", "transitions", "levelset", "trace"):
            if s in cfg.stages:
                report["stages"][s] = "failed"
                report["errors"].append({"stage": s, "message": "no field (solve did not run)"})
                code = 1
    else:
        if "classify" in cfg.stages:
            res = attempt("classify", lambda: _classify(mesh, f))
            if res is not None:
                rep, report["classify"] = res
        if "transitions" in cfg.stages:
            if rep is None:
                rep = classify_all(mesh, f)
            doc = attempt("transitions", lambda: _transitions(mesh, f, rep, cfg.samples))
            if doc is not None:
                report["transitions"] = doc
                if doc["status"] != "ok":
                    report["stages"]["transitions"] = doc["status"]
                    report["errors"].append({"stage": "transitions", "message": doc["error"]})
                    code = 1
        if "levelset" in cfg.stages:
            rows = attempt("levelset", lambda: _levelsets(mesh, f, rep, cfg.levels, out / "surfaces"))
            if rows is not None:
                report["levelsets"] = rows
        if "trace" in cfg.stages:
            res = attempt("trace", lambda: _trace(mesh, f, bc, rep, cfg.starts))
            if res is not None:
                census, report["trace"] = res
                write_obj_polylines(out / "surfaces" / "traces.obj", [p.points for p in census.paths])
                outputs["traces"] = "surfaces/traces.obj"

    dump_json(out / "report.json", report)
    outputs["report"] = "report.json"
    if render:
        from .report import render_run
        outputs.update(render_run(out, report, figures=cfg.figures))
    manifest = make_manifest(cfg, report, out, outputs)
    dump_json(out / "manifest.json", manifest)
    logger.info("stage timings: %s", {k: round(v, 2) for k, v in timings.items()})
    return RunResult(report, manifest, code, out)


def _digest_input(p):
    try:
        return file_digest(p)
    except OSError as exc:
        raise StageError("input", exc) from exc


def make_manifest(cfg: RunConfig, report: dict, out: Path, outputs: dict) -> dict:
    src = report["mesh"]["source"]
    if src["kind"] == "file":
        mesh_path, digest = src["path"], src["digest"]
        bsrc = src["boundary"]
    else:
        mesh_path, digest = outputs["mesh"], report["mesh"]["digest"]
        bsrc = f"generated:{src['kind']}"
    return {"schema": MANIFEST_SCHEMA, "tool_version": __version__,
            "input_mesh": {"path": mesh_path, "digest": digest},
            "weights": cfg.weights, "tol": cfg.tol, "boundary_source": bsrc,
            "config": cfg.as_dict(),
            "outputs": {k: {"path": v, "digest": file_digest(out / v)} for k, v in sorted(outputs.items())}}


def verify_manifest(path) -> list[str]:
    """Recompute every digest in a manifest. Returns a list of mismatches."""
    path = Path(path)
    man = load_json(path)
    base = path.parent
    bad = []
    entries = [("input_mesh", man["input_mesh"])] + list(man["outputs"].items())
    for name, ent in entries:
        p = Path(ent["path"])
        p = p if p.is_absolute() else base / p
        if not p.is_file():
            bad.append(f"{name}: {p} is missing")
        elif file_digest(p) != ent["digest"]:
            bad.append(f"{name}: digest mismatch for {p}")
    return bad
