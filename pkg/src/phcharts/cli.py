"""
Command-line orchestration: scenario -> stage outputs -> manifest -> report.

Every stage writes its outputs under the run directory; JSON files carry the
scenario hash as a top-level ``scenario_hash`` key and CSV files as a first
comment line.  Stage JSON files also carry a ``cache_key`` that ignores the
QNI settings, stage list and seed; later stages read earlier outputs from these
caches only and accept them when the key matches, so a stage run on its own
fails with a dependency error naming a missing or foreign cache.  Wall-clock timings go to ``timings.json``, the only output that is
not reproducible byte for byte.
"""
import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ContractError, DomainError, NumericalError, PhchartsError, ValidationError
from .jets import Jet
from .models import ALL_STAGES, Scenario, load_scenario, scenario_from_dict

__all__ = ["DependencyError", "RunManifest", "run_pipeline", "report", "main"]

STAGE_DEPS = {"splitting": [], "nform": [], "charts": [], "templates": ["charts"],
              "approx": ["templates"], "qni": ["charts"], "compat": ["charts"]}
CACHE_FILE = {s: f"{s}.json" for s in ALL_STAGES}
CLI_STAGE = {"splitting": "splitting", "nform": "nform", "chart": "charts",
             "template": "templates", "approx": "approx", "qni": "qni", "compat": "compat"}
INTEGRABLE, NON_INTEGRABLE = "integrable branch", "non-integrable branch"


class DependencyError(ValidationError):
    """A stage needs a cache that is missing or belongs to another scenario."""


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _write_json(path, h, payload, key=None):
    with open(path, "w") as fh:
        head = {"scenario_hash": h} if key is None else {"scenario_hash": h, "cache_key": key}
        json.dump(_clean({**head, **payload}), fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path, h, header, rows):
    with open(path, "w") as fh:
        fh.write(f"# scenario_hash={h}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _read_cache(out, stage, key):
    path = os.path.join(out, CACHE_FILE[stage])
    if not os.path.exists(path):
        raise DependencyError(f"missing cache '{CACHE_FILE[stage]}' in {out}: "
                              f"run stage '{stage}' first")
    with open(path) as fh:
        d = json.load(fh)
    if d.get("cache_key") != key:
        raise DependencyError(f"cache '{CACHE_FILE[stage]}' belongs to another scenario "
                              f"(key {d.get('cache_key')}, expected {key})")
    return d


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _chart_from_dict(d, model):
    from .charts import Chart
    return Chart([Jet.from_dict(c) for c in d["iota"]], model, d["level"], d["radius"],
                 history=list(d.get("history", [])))


# -- stages -------------------------------------------------------------------

def _stage_splitting(sc, model, out, h, ctx):
    from .splitting import compute_frame, lyapunov_exponents, orbit_segment, save_segment
    # orbits of interior points leave the box; the segment sits next to the fixed point
    x0 = np.array([1e-6, 0.0, 0.0])
    seg = orbit_segment(model, x0, 10)
    chi, band = lyapunov_exponents(seg)
    fr = compute_frame(model, np.zeros(3))
    save_segment(seg, os.path.join(out, "orbit.jsonl"), key=h)
    payload = {"anchor": [0.0, 0.0, 0.0], "segment_start": x0, "segment_steps": seg.n_steps,
               "chi": chi, "band": band, "log_multipliers": np.log(model.multipliers),
               "frame": fr.to_dict()}
    _write_json(os.path.join(out, "splitting.json"), h, payload, ctx["key"])
    return ["splitting.json", "orbit.jsonl"], "dominated splitting"


def _stage_nform(sc, model, out, h, ctx):
    from .nform import conjugacy_residual, hopf_brush, stable_leaf, unstable_leaf
    x = np.zeros(3)
    K = sc.order
    U = unstable_leaf(model, x, K, sc.depth)
    S = stable_leaf(model, x, K, sc.depth)
    ru = conjugacy_residual(model, U, U, rho=sc.radius)
    rs = conjugacy_residual(model, S, S, rho=sc.radius)
    _, meta = hopf_brush(model, K)
    tol = sc.tolerances["conjugacy"]
    payload = {"order": K, "unstable": U.to_dict(), "stable": S.to_dict(),
               "conjugacy_residual": {"unstable": ru, "stable": rs, "tol": tol},
               "brush_resonances": meta["resonances"]}
    _write_json(os.path.join(out, "nform.json"), h, payload, ctx["key"])
    if max(ru, rs) > tol:
        raise NumericalError(f"normal-form conjugacy residual {max(ru, rs):.3g} exceeds {tol:g}")
    return ["nform.json"], "conjugacy ok"


def _stage_charts(sc, model, out, h, ctx):
    from .charts import build_unstable_chart
    from .compat import raise_level
    grid = _tgrid(sc)
    ch = build_unstable_chart(model, sc.order, sc.radius, grid, sc.tolerances["poly_tail"])
    tower = [ch]
    note = ""
    while ch.level < sc.ell + 1:
        try:
            ch = raise_level(ch, ch.level + 1, grid, sc.tolerances["eps_dev"],
                             sc.tolerances["template"])
        except NumericalError as e:
            note = str(e)
            break
        tower.append(ch)
    payload = {"level": ch.level, "order": ch.order, "radius": ch.radius,
               "tower": [{"level": c.level, "radius": c.radius, "history": c.history,
                          "iota": [j.to_dict() for j in c.iota]} for c in tower],
               "stopped": note}
    _write_json(os.path.join(out, "charts.json"), h, payload, ctx["key"])
    return ["charts.json"], f"level {ch.level}"


def _tgrid(sc):
    return np.linspace(-sc.grids["t_max"], sc.grids["t_max"], sc.grids["t_points"])


def _tower_chart(cache, model, level):
    for c in cache["tower"]:
        if c["level"] == level:
            return _chart_from_dict(c, model)
    raise DependencyError(f"charts cache has no level-{level} chart "
                          f"(levels {[c['level'] for c in cache['tower']]})")


def _stage_templates(sc, model, out, h, ctx):
    from .templates import (classify_template, degree_bound, extract_template,
                            series_template, template_law_residual)
    cache = _read_cache(out, "charts", ctx["key"])
    ell = sc.ell
    chart = _tower_chart(cache, model, ell)
    t = _tgrid(sc)
    s = np.linspace(-0.1, 0.1, sc.grids["s_points"])
    T = extract_template(chart, ell, t, s, tol=sc.tolerances["template"], depth=sc.depth)
    law = template_law_residual(T, chart, ell)
    d, x = degree_bound(math.log(model.l1), math.log(model.l2), math.log(model.l3), ell,
                        sc.tolerances["eps_dev"])
    v = classify_template(T, d)
    oracle = series_template(model, t) if ell == 0 and chart.level == 0 else None
    fit = np.abs(np.polynomial.polynomial.polyval(t, v.coeffs) - T.values)
    rows = [[float(t[i]), float(T.values[i]), float(T.a[i]), float(T.b[i]), float(fit[i])]
            + ([float(oracle[i])] if oracle is not None else []) for i in range(t.size)]
    _write_csv(os.path.join(out, "template_curve.csv"), h,
               ["t", "T", "a", "b", "fit_residual"] + (["series"] if oracle is not None else []),
               rows)
    payload = {"ell": ell, "t": t, "values": T.values, "degree_bound": d, "degree_bound_x": x,
               "verdict": v.to_dict(), "law_residual": law,
               "series_error": None if oracle is None
               else float(np.max(np.abs(oracle - T.values))),
               "poly_coeffs": v.coeffs if v.polynomial else None}
    _write_json(os.path.join(out, "templates.json"), h, payload, ctx["key"])
    return ["templates.json", "template_curve.csv"], INTEGRABLE if v.polynomial else NON_INTEGRABLE


def _stage_approx(sc, model, out, h, ctx):
    from .approx import poly_distance, rational_distance
    cache = _read_cache(out, "templates", ctx["key"])
    t = np.asarray(cache["t"], dtype=float)
    v = np.asarray(cache["values"], dtype=float)
    d = int(cache["degree_bound"])
    n = sc.grids["approx_points"]
    if n < t.size:
        idx = np.unique(np.linspace(0, t.size - 1, n).round().astype(int))
        t, v = t[idx], v[idx]
    pd, pc = poly_distance(t, v, d)
    rd, R = rational_distance(t, v, d)
    tol = sc.tolerances["template"] * (1 + float(np.max(np.abs(v))))
    payload = {"degree": d, "points": int(t.size), "poly_distance": pd, "poly_coeffs": pc,
               "rational_distance": rd, "rational": R.to_dict(), "tol": tol}
    _write_json(os.path.join(out, "approx.json"), h, payload, ctx["key"])
    return ["approx.json"], INTEGRABLE if pd <= tol else NON_INTEGRABLE


def _stage_qni(sc, model, out, h, ctx):
    from .qni import estimate_holonomy_holder, qni_scan, qni_symmetry_check
    cache = _read_cache(out, "charts", ctx["key"])
    chart = _tower_chart(cache, model, 0)
    q = sc.qni
    kw = dict(V=q["V"], kmin=q["kmin"], kmax=q["kmax"], nu=q["nu"],
              samples=q["samples_per_scale"], workers=ctx.get("workers"))
    fwd = qni_scan(model, **kw)
    inv = qni_scan(model, inverse=True, **kw)
    sym, sym_info = qni_symmetry_check(fwd, inv)
    hold = estimate_holonomy_holder(model, chart)
    rows = [[r["k1"], r["k2"], r["s"], r["t"], r["distance"], r["branch"]] for r in fwd.samples]
    _write_csv(os.path.join(out, "qni_samples.csv"), h,
               ["k1", "k2", "s", "t", "distance", "branch"], rows)
    payload = {"forward": fwd.to_dict(), "inverse": inv.to_dict(), "symmetry": sym,
               "symmetry_counts": sym_info, "holder": hold,
               "flags": {"fallbacks": int(sum(r["fallback"] for r in fwd.samples))}}
    _write_json(os.path.join(out, "qni.json"), h, payload, ctx["key"])
    return ["qni.json", "qni_samples.csv"], \
        INTEGRABLE if fwd.verdict == "QNI-negative" else NON_INTEGRABLE


def _stage_compat(sc, model, out, h, ctx):
    from .compat import (build_joint_surface, build_stable_chart, compat_jets, tangency_order,
                         whitney_cross_extend)
    from .nform import brush_leaf, stable_leaf
    cache = _read_cache(out, "charts", ctx["key"])
    U = _tower_chart(cache, model, cache["level"])
    S = build_stable_chart(model, U.level, sc.order, sc.radius, _tgrid(sc))
    order = min(8, sc.order)
    cj = compat_jets(S, U, order)
    payload = {"levels": [S.level, U.level], "jets": cj.to_dict(),
               "minimal_index": cj.minimal_index(sc.qni["V"])}
    files = ["compat.json"]
    if cj.empty:
        ell = order // 2
        ext = whitney_cross_extend(cj, ell, sc.radius)
        surf = build_joint_surface(S, U, ext, sc.radius)
        tan = []
        for p in (0.1, 0.2):
            lf = stable_leaf(model, np.array([p, 0.0, 0.0]), sc.order, sc.depth, check=False)
            lu = brush_leaf(model, p, sc.order)
            for kind, leaf in (("stable", lf), ("unstable", lu)):
                r = tangency_order(surf, leaf, r_max=min(0.3, sc.radius))
                tan.append({"family": kind, "base": p, "label": r.label(order),
                            **r.to_dict()})
        g = np.linspace(-surf.rho, surf.rho, 5)
        pts = surf(g[:, None], g[None, :])
        payload.update({"whitney": ext.to_dict(), "surface": {
            "containment": surf.containment,
            "samples": [[float(a), float(b), *map(float, pts[i, j])]
                        for i, a in enumerate(g) for j, b in enumerate(g)]},
            "tangency": tan})
        verdict = INTEGRABLE
    else:
        try:
            whitney_cross_extend(cj, cj.compat_order)
            payload["whitney"] = "accepted"
        except ValidationError as e:
            payload["whitney"] = f"refused: {e}"
        verdict = NON_INTEGRABLE
    _write_json(os.path.join(out, "compat.json"), h, payload, ctx["key"])
    return files, verdict


STAGES = {"splitting": _stage_splitting, "nform": _stage_nform, "charts": _stage_charts,
          "templates": _stage_templates, "approx": _stage_approx, "qni": _stage_qni,
          "compat": _stage_compat}


# -- pipeline -------------------------------------------------------------------

@dataclass
class RunManifest:
    """Record of a pipeline run; written last as ``manifest.json``."""
    scenario_hash: str
    scenario: dict
    version: str
    stages: list
    outputs: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    status: str = "ok"
    error: dict = None
    out_dir: str = ""

    def to_dict(self):
        return {"scenario_hash": self.scenario_hash, "scenario": self.scenario,
                "version": self.version, "stages": self.stages, "outputs": self.outputs,
                "verdicts": self.verdicts, "status": self.status, "error": self.error,
                "tolerances": self.scenario.get("tolerances"),
                "seed": self.scenario.get("seed"), "timings_file": "timings.json"}


def run_pipeline(scenario, stages=None, out_dir=None, workers=None):
    """
    Run ``stages`` (default: the scenario's stage list) in dependency order.

    Returns
    -------
    RunManifest
        Also written to ``<out>/manifest.json``.  On failure the manifest is
        written with ``status`` "failed" and an error record, then the error
        is re-raised.
    """
    sc = scenario if isinstance(scenario, Scenario) else scenario_from_dict(scenario)
    stages = list(sc.stages if stages is None else stages)
    bad = [s for s in stages if s not in STAGES]
    if bad:
        raise ValidationError(f"unknown stage(s): {bad}")
    stages = [s for s in ALL_STAGES if s in stages]
    out = out_dir or sc.out_dir
    os.makedirs(out, exist_ok=True)
    h = sc.hash()
    model = sc.build_model()
    man = RunManifest(h, sc.to_dict(), __version__, stages, out_dir=out)
    ctx = {"workers": workers, "key": sc.cache_key()}
    try:
        for st in stages:
            t0 = time.perf_counter()
            files, verdict = STAGES[st](sc, model, out, h, ctx)
            man.timings[st] = time.perf_counter() - t0
            man.verdicts[st] = verdict
            for f in files:
                man.outputs.append({"file": f, "stage": st,
                                    "sha256": _sha(os.path.join(out, f))})
    except PhchartsError as e:
        man.status = "failed"
        man.error = {"stage": st, "type": type(e).__name__, "message": str(e),
                     "info": getattr(e, "info", {})}
        raise
    finally:
        _write_json(os.path.join(out, "timings.json"), h, {"seconds": man.timings})
        _write_json(os.path.join(out, "manifest.json"), h, man.to_dict())
    return man


def _load_manifest(path):
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path) as fh:
        d = json.load(fh)
    return d, os.path.dirname(os.path.abspath(path))


def report(manifest, out_dir=None):
    """
    Human-readable summary and plot-data CSVs for a completed run.

    ``manifest`` is a RunManifest, a manifest path or a run directory.
    Writes ``summary.txt`` plus, when the stages ran, ``qni_scatter.csv``
    (distance against k1 with the fitted line) and ``dd_growth.csv``
    (divided-difference growth of the template).  Returns the summary text.
    """
    if isinstance(manifest, RunManifest):
        d, out = manifest.to_dict(), manifest.out_dir
    else:
        d, out = _load_manifest(manifest)
    out = out_dir or out
    h = d["scenario_hash"]
    sc = d["scenario"]
    key = scenario_from_dict(sc).cache_key()
    p = sc["params"]
    lines = [f"scenario {h}: MODEL-{sc['model']} l1={p['l1']} l2={p['l2']} l3={p['l3']} "
             f"eps={p['eps']} order={sc['order']} ell={sc['ell']}",
             f"status: {d['status']}"]
    if d.get("error"):
        lines.append(f"error in stage {d['error']['stage']}: {d['error']['message']}")
    for st in d["stages"]:
        if st not in d["verdicts"]:
            continue
        lines.append(f"[{st}] {d['verdicts'][st]}")
        c = _read_cache(out, st, key) if st in CACHE_FILE and \
            os.path.exists(os.path.join(out, CACHE_FILE[st])) else None
        if c is None:
            continue
        if st == "splitting":
            lines.append("  exponents " + ", ".join(f"{v:.6f}" for v in c["chi"]))
        elif st == "nform":
            r = c["conjugacy_residual"]
            lines.append(f"  conjugacy residual unstable {r['unstable']:.3g}, "
                         f"stable {r['stable']:.3g}")
        elif st == "charts":
            lines.append(f"  chart level {c['level']}" + (f" ({c['stopped']})" if c["stopped"] else ""))
        elif st == "templates":
            v = c["verdict"]
            if c["poly_coeffs"] is not None:
                co = np.asarray(c["poly_coeffs"], dtype=float)
                nz = np.nonzero(np.abs(co) > 1e-12)[0]
                deg = int(nz[-1]) if nz.size else 0
                bound = max(v["residual"], 1e-6)
                lines.append(f"  template degree {deg}, coefficient {co[deg]:.5f} "
                             f"± {bound:.0e}".replace("e-06", "e-6"))
            else:
                lines.append(f"  template non-polynomial at degree {v['degree']} "
                             f"(residual {v['residual']:.3g})")
                pr = v.get("probe") or {}
                if pr:
                    lines.append(f"  divided-difference growth: {pr.get('growth')}")
                    _dd_csv(out, h, pr)
            lines.append(f"  law residual {c['law_residual']:.3g}")
        elif st == "approx":
            lines.append(f"  polynomial distance {c['poly_distance']:.4g}, "
                         f"rational upper bound {c['rational_distance']:.4g} (degree {c['degree']})")
        elif st == "qni":
            f = c["forward"]
            a = f["alpha"]
            lines.append(f"  forward {f['verdict']}, inverse {c['inverse']['verdict']}, "
                         f"alpha {a if isinstance(a, str) else format(a, '.4f')}, "
                         f"symmetry {'ok' if c['symmetry'] else 'violated'}")
            _scatter_csv(out, h, f)
        elif st == "compat":
            j = c["jets"]
            lines.append(f"  I_x = {j['index_set'] or 'empty'}; compatibility order "
                         f"{j['compat_order']}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    return text


def _scatter_csv(out, h, f):
    path = os.path.join(out, "qni_samples.csv")
    rows = []
    a, C = f["alpha"], f["C"]
    with open(path) as fh:
        next(fh), next(fh)
        for line in fh:
            k1, k2, s, t, dist, br = line.strip().split(",")
            fit = C * math.exp(-a * int(k1)) if not isinstance(a, str) else 0.0
            rows.append([int(k1), float(dist), fit])
    _write_csv(os.path.join(out, "qni_scatter.csv"), h, ["k1", "distance", "fit"], rows)


def _dd_csv(out, h, probe):
    rows = []
    for pr in (probe, probe.get("second_order")):
        if pr:
            rows += [[pr["order"], r["j"], r["D"]] for r in pr["table"]]
    _write_csv(os.path.join(out, "dd_growth.csv"), h, ["order", "j", "D"], rows)


# -- command line ------------------------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", metavar="PATH", default=argparse.SUPPRESS,
                        help="TOML scenario file")
    common.add_argument("--model", choices=["A", "B", "C"], default=argparse.SUPPRESS,
                        help="built-in model when no scenario file is given")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="run directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="phcharts", parents=[common],
                                description="Charts, templates and QNI diagnostics for "
                                            "partially hyperbolic model maps.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in CLI_STAGE:
        sp = sub.add_parser(name, parents=[common], help=f"run the {CLI_STAGE[name]} stage")
        if name == "qni":
            sp.add_argument("--V", type=float)
            sp.add_argument("--nu", type=float)
            sp.add_argument("--kmin", type=int)
            sp.add_argument("--kmax", type=int)
            sp.add_argument("--samples-per-scale", type=int, dest="samples_per_scale")
    rp = sub.add_parser("run", parents=[common], help="run the scenario's stages")
    rp.add_argument("--stages", default=None,
                    help="comma-separated stage subset (empty string for none)")
    pp = sub.add_parser("report", parents=[common], help="summarise a finished run")
    pp.add_argument("manifest", nargs="?", default=None, help="manifest file or run directory")
    return p


def _scenario(args):
    if getattr(args, "scenario", None):
        sc = load_scenario(args.scenario)
    else:
        sc = scenario_from_dict({"model": getattr(args, "model", "A")})
    if getattr(args, "model", None) and getattr(args, "scenario", None):
        sc.model = args.model
    if getattr(args, "seed", None) is not None:
        sc.seed = args.seed
    q = {k: getattr(args, k, None) for k in ("V", "nu", "kmin", "kmax", "samples_per_scale")}
    changed = {k: v for k, v in q.items() if v is not None}
    if changed:
        d = sc.to_dict()
        d["qni"] = {**d["qni"], **changed}
        sc = scenario_from_dict(d)
    return sc


def main(argv=None):
    """Entry point; returns the process exit code."""
    args = _parser().parse_args(argv)
    try:
        if args.command == "report":
            target = args.manifest or getattr(args, "out", None) or "out"
            sys.stdout.write(report(target))
            return 0
        sc = _scenario(args)
        out = getattr(args, "out", None) or sc.out_dir
        if args.command == "run":
            stages = None if args.stages is None else \
                [s.strip() for s in args.stages.split(",") if s.strip()]
        else:
            stages = [CLI_STAGE[args.command]]
        man = run_pipeline(sc, stages, out, getattr(args, "workers", None))
        for st in man.stages:
            print(f"{st}: {man.verdicts[st]}")
        print(f"manifest: {os.path.join(out, 'manifest.json')}")
        return 0
    except (ValidationError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, DomainError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
