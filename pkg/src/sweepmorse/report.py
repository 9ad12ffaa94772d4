"""Human-readable summary and figures derived from a run's ``report.json``.

Nothing here computes new numbers: every value printed or plotted comes
from the report or from artifacts the run already wrote.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .io import json_text, load_json

STAGE_ORDER = ("generate", "solve", "classify", "transitions", "levelset", "trace")
KIND_ORDER = ("minimum", "1-saddle", "2-saddle", "maximum", "degenerate")
STATUS_ORDER = ("reached-base", "stalled-at-vertex", "stalled-at-saddle", "left-domain")
GAMMA_COLORS = {"gamma0": "tab:blue", "gamma1": "tab:red"}
KIND_STYLE = {"minimum": ("v", "tab:green"), "1-saddle": ("o", "tab:orange"),
              "2-saddle": ("s", "tab:purple"), "maximum": ("^", "tab:brown"),
              "degenerate": ("X", "black")}


def _betti(b) -> str:
    return "(" + ",".join(str(int(x)) for x in b) + ")"


def _num(x) -> str:
    return f"{x:.6g}"


def maxp_line(report: dict) -> str | None:
    mp = report.get("max_principle")
    if mp is None:
        return None
    verdict = "holds" if mp["holds"] else f"violated at {len(mp['violations'])} vertex(es)"
    line = f"maximum principle: {verdict}"
    if not mp["scheme_positive"]:
        s = report.get("solve", {})
        line += (f" (scheme not guaranteed positive: {s.get('negative_weights', 0)} negative, "
                 f"{s.get('zero_weights', 0)} zero weight(s))")
    return line


def render_summary(report: dict) -> str:
    """One-page text summary of a run report."""
    L = []
    m = report["mesh"]
    src = m["source"]
    desc = src["kind"]
    if src.get("params"):
        desc += " " + " ".join(f"{k}={v}" for k, v in sorted(src["params"].items()))
    elif src.get("path"):
        desc += f" {src['path']}"
    L.append(f"sweepmorse {report['tool_version']} run summary")
    L.append(f"mesh: {desc}; {m['n_vertices']} vertices, {m['n_tets']} tets; "
             f"|gamma0|={m['gamma0']}, |gamma1|={m['gamma1']}")
    st = report["stages"]
    L.append("stages: " + ", ".join(f"{k}={st[k]}" for k in STAGE_ORDER if st.get(k, "skipped") != "skipped"))
    if "solve" in report:
        s = report["solve"]
        L.append(f"solve: weights={s['weights']} tol={_num(s['tol'])} "
                 f"max scaled residual={_num(s['max_scaled_residual'])} "
                 f"range=[{_num(s['field_min'])}, {_num(s['field_max'])}]")
    bt = report.get("boundary_topology")
    if bt and not bt["ok"]:
        L.append("boundary topology: " + "; ".join(bt["failures"]))

    mp = maxp_line(report)
    if "classify" in report:
        c = report["classify"]
        crit = c["interior"]
        L.append("")
        L.append("Critical census (interior vertices)")
        if not crit:
            L.append("  no interior critical points" + (f"; {mp}" if mp else ""))
        else:
            L.append("  " + "  ".join(f"{k}: {c['counts'][k]}" for k in KIND_ORDER if c["counts"].get(k)))
            L.append(f"  {'vertex':>8}  {'type':<10} {'value':>12}  position")
            for e in crit:
                pos = ", ".join(f"{x:.4f}" for x in e.get("position", []))
                L.append(f"  {e['vertex']:>8}  {e['type']:<10} {_num(e['value']):>12}  ({pos})")
        L.append(f"  boundary vertices with critical lower links (not counted): {c['boundary_critical']}")

    if "levelsets" in report:
        L.append("")
        L.append("Level sets")
        for r in report["levelsets"]:
            note = f" (nudged to {r['value']!r})" if r["nudged"] else ""
            L.append(f"  a={r['label']}: β={_betti(r['betti'])}  at a={_num(r['requested'])}{note}, "
                     f"{r['n_triangles']} triangles")

    if "transitions" in report:
        t = report["transitions"]
        L.append("")
        L.append(f"Transitions (status: {t['status']})")
        if not t["records"]:
            L.append("  none")
        for r in t["records"]:
            d = ",".join(f"{x:+d}" for x in r["delta"])
            L.append(f"  vertex {r['vertex']} {r['type']} at {_num(r['value'])}: "
                     f"{_betti(r['betti_below'])} -> {_betti(r['betti_above'])}  Δβ=({d})"
                     f"  pattern={r['pattern'] or 'NONE'}")
        L.append("  net Δβ over the range: (" + ",".join(f"{x:+d}" for x in t["net_change"]) + ")")
        for s in t["intervals"]:
            if s["levels"]:
                L.append(f"  gap ({_num(s['lower'])}, {_num(s['upper'])}): "
                         + " ".join(_betti(b) for b in s["betti"])
                         + ("" if s["constant"] else "  NOT CONSTANT"))

    if mp:
        L.append("")
        L.append(mp.capitalize())
        for v in report["max_principle"]["violations"][:10]:
            L.append(f"  vertex {v['vertex']}: {v['kind']}")

    if "trace" in report:
        t = report["trace"]
        L.append("")
        L.append(f"Trace census ({t['starts']}, {t['n_starts']} starts)")
        L.append("  " + "  ".join(f"{k}: {t['counts'].get(k, 0)}" for k in STATUS_ORDER))
        sep = t["min_separation"]
        L.append(f"  merged pairs: {len(t['merged_pairs'])} (weld tol {_num(t['weld_tol'])}); "
                 f"closest base points: {'n/a' if sep is None else _num(sep)}")

    if report["errors"]:
        L.append("")
        L.append("Errors")
        for e in report["errors"]:
            L.append(f"  [{e['stage']}] {e['message']}")
    return "\n".join(L) + "\n"


# ------------------------------------------------------------------ figures
def _read_obj(path):
    V, F, Ls = [], [], []
    for line in Path(path).read_text().splitlines():
        p = line.split()
        if not p:
            continue
        if p[0] == "v":
            V.append([float(x) for x in p[1:4]])
        elif p[0] == "f":
            F.append([int(x) - 1 for x in p[1:4]])
        elif p[0] == "l":
            Ls.append([int(x) - 1 for x in p[1:]])
    return np.array(V).reshape(-1, 3), np.array(F, dtype=np.int64).reshape(-1, 3), Ls


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata={"Software": None})


def plot_level_betti(report: dict, ax):
    """Betti numbers of sampled level sets against the level value."""
    pts = []
    for s in report.get("transitions", {}).get("intervals", []):
        pts += list(zip(s["levels"], s["betti"]))
    for r in report.get("levelsets", []):
        pts.append((r["value"], r["betti"]))
    pts.sort(key=lambda p: p[0])
    if pts:
        a = np.array([p[0] for p in pts])
        B = np.array([p[1] for p in pts])
        for k, mk in zip(range(3), "os^"):
            ax.plot(a, B[:, k] + 0.04 * (k - 1), mk, label=f"β{k}")
    for e in report.get("classify", {}).get("interior", []):
        ax.axvline(e["value"], color=KIND_STYLE.get(e["type"], ("", "gray"))[1], ls="--", lw=1)
    ax.set_xlabel("level a")
    ax.set_ylabel("Betti number of f = a")
    ax.set_title("level-set topology (dashed: interior critical values)")
    ax.legend(loc="upper right")


def render_figures(run_dir, report: dict) -> dict:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    figdir = run_dir / "figures"
    figdir.mkdir(exist_ok=True)
    out = {}

    if "transitions" in report or "levelsets" in report:
        fig, ax = plt.subplots(figsize=(6.5, 4))
        plot_level_betti(report, ax)
        fig.tight_layout()
        _save(fig, figdir / "level_betti.png")
        plt.close(fig)
        out["fig_level_betti"] = "figures/level_betti.png"

    mesh_txt, bnd = run_dir / "mesh.txt", run_dir / "boundary.json"
    src = report["mesh"]["source"]
    if src["kind"] == "file":
        mesh_txt, bnd = Path(src["path"]), Path(src["boundary"])
    if "classify" in report and mesh_txt.is_file() and bnd.is_file():
        from .io import read_mesh
        mesh, _ = read_mesh(mesh_txt, validate=False)
        b = load_json(bnd)
        fig = plt.figure(figsize=(6, 5.5))
        ax = fig.add_subplot(projection="3d")
        for name in ("gamma0", "gamma1"):
            P = mesh.vertices[np.asarray(b[name], dtype=np.int64)]
            ax.scatter(*P.T, s=2, alpha=0.25, color=GAMMA_COLORS[name], label=name)
        for e in report["classify"]["interior"]:
            mk, col = KIND_STYLE.get(e["type"], ("o", "gray"))
            ax.scatter(*np.array(e["position"])[:, None], s=90, marker=mk, color=col,
                       edgecolor="k", label=f"{e['type']} ({_num(e['value'])})", depthshade=False)
        ax.set_title("Dirichlet patches and interior critical vertices")
        ax.legend(loc="upper left", fontsize=7, markerscale=1)
        _save(fig, figdir / "critical_points.png")
        plt.close(fig)
        out["fig_critical_points"] = "figures/critical_points.png"

    for r in report.get("levelsets", []):
        objs = [f for f in r["files"] if f.endswith(".obj")]
        if not objs or not r["n_triangles"]:
            continue
        V, F, _ = _read_obj(run_dir / objs[0])
        fig = plt.figure(figsize=(5.5, 5))
        ax = fig.add_subplot(projection="3d")
        ax.plot_trisurf(V[:, 0], V[:, 1], V[:, 2], triangles=F, color="tab:cyan",
                        edgecolor="none", alpha=0.9, shade=True)
        ax.set_title(f"level set a={r['label']}: β={_betti(r['betti'])}")
        stem = Path(objs[0]).stem
        _save(fig, figdir / f"{stem}.png")
        plt.close(fig)
        out[f"fig_{stem}"] = f"figures/{stem}.png"

    tr = run_dir / "surfaces" / "traces.obj"
    if "trace" in report and tr.is_file():
        V, _, Ls = _read_obj(tr)
        merged = {i for p in report["trace"]["merged_pairs"] for i in p}
        fig = plt.figure(figsize=(5.5, 5))
        ax = fig.add_subplot(projection="3d")
        for i, ln in enumerate(Ls):
            P = V[ln]
            hit = i in merged
            ax.plot(*P.T, lw=1.2 if hit else 0.3, color="tab:red" if hit else "0.5",
                    alpha=1.0 if hit else 0.35)
        ax.set_title(f"descent traces ({len(merged)} in merged pairs, red)")
        _save(fig, figdir / "traces.png")
        plt.close(fig)
        out["fig_traces"] = "figures/traces.png"
    return out


def render_run(run_dir, report: dict | None = None, figures: bool = True) -> dict:
    """Write ``summary.txt`` and figures for a run. Returns output paths."""
    run_dir = Path(run_dir)
    if report is None:
        report = load_json(run_dir / "report.json")
    else:
        report = json.loads(json_text(report))  # same key order as the file
    (run_dir / "summary.txt").write_text(render_summary(report))
    out = {"summary": "summary.txt"}
    if figures:
        out.update(render_figures(run_dir, report))
    return out
