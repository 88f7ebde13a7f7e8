"""Experiment driver.

    python -m frenet_sdg solve   --config FILE [--deterministic] [--out DIR]
    python -m frenet_sdg project --config FILE [--deterministic] [--out DIR]
    python -m frenet_sdg dofs    --config FILE [--out DIR]
    python -m frenet_sdg plot    --csv FILE --out FILE.svg

Exit codes: 0 success, 1 configuration error, 2 runtime error.  Grid points
run in ``FRENET_SDG_WORKERS`` worker processes (default 1).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .assembly import QuadratureConfig, SchemeParams, assemble, build_global_space
from .mesh import build_mesh, classify, sdg_formula_count
from .problems import problem_from_config
from .solve_post import DiscreteSolution, convergence_rates, error_norms, project, solve

log = logging.getLogger("frenet_sdg")

WORKERS_ENV = "FRENET_SDG_WORKERS"
MODES = ("solve", "project", "dofs")

RESULT_COLUMNS = ["run_id", "scheme", "m", "epsilon", "sigma0", "alpha", "beta_minus", "beta_plus", "N", "h",
                  "dofs", "err_l2", "err_h1", "err_energy", "rate_l2", "rate_h1", "solve_seconds", "error"]
DOF_COLUMNS = ["N", "m", "T_i", "E_i", "dof_dg", "dof_sdg", "dof_cg", "ratio_dg_sdg", "ratio_cg_sdg", "source",
               "error"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    name: str
    mode: str
    problem: str
    problem_params: dict
    m: list
    N: list
    beta: list
    edge_set: list = field(default_factory=lambda: ["sdg"])
    epsilon: list = field(default_factory=lambda: [-1])
    sigma0: object = "large"
    alpha: object = "auto"
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    solver: str = "direct"
    out: str | None = None
    deterministic: bool = False
    plot: bool = True
    dof_table: list | None = None  # rows (N, T_i, E_i) taken instead of a geometric count
    source: str = ""


def _as_list(v, key):
    if isinstance(v, list):
        return v
    if isinstance(v, (int, float)):
        return [v]
    raise ConfigError(f"{key}: expected a number or a list")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:  # message carries line and column
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, source=str(path))


def config_from_dict(raw: dict, source: str = "<dict>") -> RunConfig:
    known = {"run", "problem", "discretization", "scheme", "quadrature", "solver", "dofs"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{source}: unknown section(s) {sorted(extra)}")
    run = raw.get("run", {})
    prob = dict(raw.get("problem", {}))
    disc = raw.get("discretization", {})
    sch = raw.get("scheme", {})
    quad = raw.get("quadrature", {})
    dofs = raw.get("dofs", {})

    mode = run.get("mode", "solve")
    if mode not in MODES:
        raise ConfigError(f"run.mode must be one of {MODES}")
    pname = prob.pop("name", "radial")
    m = [int(v) for v in _as_list(disc.get("m", 1), "discretization.m")]
    if any(v < 1 for v in m):
        raise ConfigError("discretization.m must be >= 1")
    N = [int(v) for v in _as_list(disc.get("N", []), "discretization.N")]
    table = dofs.get("table")
    if table is not None:
        if not all(isinstance(r, list) and len(r) == 3 for r in table):
            raise ConfigError("dofs.table rows must be [N, T_i, E_i]")
        N = [int(r[0]) for r in table]
    if not N:
        raise ConfigError("discretization.N must be a non-empty list")
    if any(b <= a for a, b in zip(N, N[1:])):
        raise ConfigError("discretization.N must be strictly increasing")
    if any(v < 2 for v in N):
        raise ConfigError("discretization.N entries must be >= 2")
    beta = disc.get("beta", [[1.0, 10.0]])
    if beta and not isinstance(beta[0], list):
        beta = [beta]
    beta = [tuple(float(x) for x in b) for b in beta]
    if any(len(b) != 2 or min(b) <= 0 for b in beta):
        raise ConfigError("discretization.beta entries must be positive pairs")
    edge_set = disc.get("edge_set", "sdg")
    edge_set = [edge_set] if isinstance(edge_set, str) else list(edge_set)
    if not edge_set or any(e not in ("sdg", "dg") for e in edge_set):
        raise ConfigError("discretization.edge_set must be 'sdg', 'dg' or a list of them")
    eps = [int(v) for v in _as_list(sch.get("epsilon", -1), "scheme.epsilon")]
    if not eps or any(v not in (-1, 0, 1) for v in eps):
        raise ConfigError("scheme.epsilon must be -1, 0, 1 or a list of them")
    sigma0 = sch.get("sigma0", "large")
    if isinstance(sigma0, str) and sigma0 not in ("large", "reduced"):
        raise ConfigError("scheme.sigma0 must be 'large', 'reduced' or a positive number")
    if not isinstance(sigma0, str) and not float(sigma0) > 0:
        raise ConfigError("scheme.sigma0 must be positive")
    alpha = sch.get("alpha", "auto")
    if isinstance(alpha, str) and alpha != "auto":
        raise ConfigError("scheme.alpha must be 'auto' or a number >= 1")
    if not isinstance(alpha, str) and float(alpha) < 1:
        raise ConfigError("scheme.alpha must be >= 1")
    q = QuadratureConfig(quad.get("q_volume"), quad.get("q_edge"), quad.get("q_interface"))
    return RunConfig(
        name=run.get("name", Path(source).stem), mode=mode, problem=pname, problem_params=prob,
        m=m, N=N, beta=beta, edge_set=edge_set, epsilon=eps, sigma0=sigma0, alpha=alpha, quad=q,
        solver=raw.get("solver", {}).get("method", "direct"), out=run.get("out"),
        deterministic=bool(run.get("deterministic", False)), plot=bool(run.get("plot", True)),
        dof_table=[tuple(int(x) for x in r) for r in table] if table is not None else None, source=source)


# ------------------------------------------------------------------ runs


def _scheme_label(edge_set, eps):
    kind = {-1: "S", 1: "N", 0: "I"}[eps]
    return f"{kind}-{edge_set.upper()}"


def _run_point(cfg: RunConfig, m: int, edge_set: str, eps: int, beta, N: int) -> dict:
    """One grid point; never raises, failures land in the ``error`` column."""
    scheme = SchemeParams.from_rules(m, beta, eps, cfg.sigma0, cfg.alpha, edge_set)
    label = _scheme_label(edge_set, eps) if cfg.mode == "solve" else "projection"
    row = dict(run_id=f"{cfg.name}:{cfg.problem}:{label}:m{m}:b{beta[1] / beta[0]:g}:N{N}",
               scheme=label, m=m, epsilon=eps, sigma0=scheme.sigma0, alpha=scheme.alpha,
               beta_minus=beta[0], beta_plus=beta[1], N=N, h="", dofs="", err_l2="", err_h1="",
               err_energy="", rate_l2="", rate_h1="", solve_seconds="", error="")
    try:
        problem = problem_from_config(cfg.problem, beta, **cfg.problem_params)
        mesh = build_mesh(problem.domain, N, m)
        row["h"] = mesh.h
        cl = classify(mesh, problem.curve)
        space = build_global_space(cl, m, edge_set, beta, cfg.quad)
        row["dofs"] = space.dof_count
        t0 = time.perf_counter()
        if cfg.mode == "solve":
            system = assemble(space, problem, scheme, deterministic=cfg.deterministic)
            sol = DiscreteSolution(space, solve(system, method=cfg.solver), scheme)
        else:
            sol = project(problem, space)
        seconds = time.perf_counter() - t0
        rep = error_norms(problem, sol, scheme)
        row.update(err_l2=rep.l2, err_h1=rep.semi_h1, err_energy=rep.energy)
        row["solve_seconds"] = "" if cfg.deterministic else f"{seconds:.3f}"
    except Exception as exc:  # recorded per grid point
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        log.warning("grid point %s failed: %s", row["run_id"], row["error"])
    return row


def _dof_point(cfg: RunConfig, m: int, N: int, counts=None) -> dict:
    row = dict(N=N, m=m, T_i="", E_i="", dof_dg=(m + 1) ** 2 * N * N, dof_sdg="", dof_cg=(m * N + 1) ** 2,
               ratio_dg_sdg="", ratio_cg_sdg="", source="", error="")
    try:
        if counts is not None:
            T, E = counts
            sdg = sdg_formula_count(N, m, T, E)
            row["source"] = "table"
        else:
            from .mesh import dof_counts

            beta = cfg.beta[0]
            problem = problem_from_config(cfg.problem, beta, **cfg.problem_params)
            cl = classify(build_mesh(problem.domain, N, m), problem.curve)
            T, E = len(cl.interface_elements), len(cl.interface_edges)
            sdg = dof_counts(cl, m, "SDG")
            row["source"] = "geometry"
        row.update(T_i=T, E_i=E, dof_sdg=sdg, ratio_dg_sdg=f"{row['dof_dg'] / sdg:.4f}",
                   ratio_cg_sdg=f"{row['dof_cg'] / sdg:.4f}")
    except Exception as exc:
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10e}"
    return v


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, jobs):
    n = _workers()
    if n == 1 or len(jobs) == 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as ex:
        futs = [ex.submit(fn, *j) for j in jobs]
        return [f.result() for f in futs]  # config order


def _add_rates(rows):
    """Stepwise rates within each (m, beta) series, plus a summary per series."""
    summary = []
    series = {}
    for r in rows:
        series.setdefault((r["scheme"], r["m"], r["beta_minus"], r["beta_plus"]), []).append(r)
    for (_, m, bm, bp), rs in series.items():
        ok = [r for r in rs if r["error"] == "" and r["err_l2"] != ""]
        for a, b in zip(ok, ok[1:]):
            for key, col in (("err_l2", "rate_l2"), ("err_h1", "rate_h1")):
                if a[key] > 0 and b[key] > 0:
                    b[col] = math.log(a[key] / b[key]) / math.log(a["h"] / b["h"])
        entry = dict(m=m, beta_minus=bm, beta_plus=bp, levels=len(ok), slope_l2="", slope_h1="",
                     slope_energy="", scheme=rs[0]["scheme"])
        if len(ok) >= 2:
            for key, col in (("err_l2", "slope_l2"), ("err_h1", "slope_h1"), ("err_energy", "slope_energy")):
                try:
                    entry[col] = convergence_rates([(r["h"], r[key]) for r in ok])[1]
                except (ValueError, TypeError):
                    pass
        summary.append(entry)
    return summary


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def run(cfg: RunConfig, out_dir=None) -> dict:
    """Execute every grid point and write the artifacts; returns paths and rows."""
    out = Path(out_dir or cfg.out or Path("results") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "dofs":
        jobs = []
        for m in cfg.m:
            if cfg.dof_table is not None:
                jobs += [(cfg, m, N, (T, E)) for N, T, E in cfg.dof_table]
            else:
                jobs += [(cfg, m, N, None) for N in cfg.N]
        rows = _map(_dof_point, jobs)
        path = out / "dofs.csv"
        _write_csv(path, DOF_COLUMNS, rows)
        return {"csv": path, "rows": rows, "failed": sum(r["error"] != "" for r in rows)}

    if cfg.mode == "project":
        grid = [(cfg.edge_set[0], cfg.epsilon[0])]
    else:
        grid = [(es, e) for es in cfg.edge_set for e in cfg.epsilon]
    jobs = [(cfg, m, es, e, b, N) for m in cfg.m for es, e in grid for b in cfg.beta for N in cfg.N]
    rows = _map(_run_point, jobs)
    summary = _add_rates(rows)
    path = out / "results.csv"
    _write_csv(path, RESULT_COLUMNS, rows)
    rates = out / "rates.csv"
    _write_csv(rates, ["scheme", "m", "beta_minus", "beta_plus", "levels", "slope_l2", "slope_h1",
                       "slope_energy"], summary)
    res = {"csv": path, "rates": rates, "rows": rows, "summary": summary,
           "failed": sum(r["error"] != "" for r in rows)}
    if cfg.plot:
        svg = plot_results(path, out / "loglog.svg")
        res["svg"] = svg
    return res


# ------------------------------------------------------------------- SVG


def emit_svg(series, ref_slopes=(), width: int = 640, height: int = 480, title: str = "") -> str:
    """Log-log plot as SVG text.  ``series`` is a list of ``(label, [(x, y), ...])``.

    Every label gets the least-squares slope appended; ``ref_slopes`` adds
    dashed guide lines anchored at the first point of the first series.
    Output depends only on the input.
    """
    pts_all = [p for _, pts in series for p in pts]
    if not pts_all:
        raise ValueError("nothing to plot")
    arr = np.asarray(pts_all, float)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("log-log plot needs positive finite data")
    lx, ly = np.log10(arr[:, 0]), np.log10(arr[:, 1])
    x0, x1 = math.floor(lx.min()), math.ceil(lx.max())
    y0, y1 = math.floor(ly.min()), math.ceil(ly.max())
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)
    ml, mr, mt, mb = 70, 190, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def X(v):
        return ml + (math.log10(v) - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + (y1 - math.log10(v)) / (y1 - y0) * ph

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{ml + pw / 2:.2f}" y="{mt - 14}" text-anchor="middle" font-size="13">{title}</text>')
    for k in range(x0, x1 + 1):
        px = ml + (k - x0) / (x1 - x0) * pw
        out.append(f'<line x1="{px:.2f}" y1="{mt}" x2="{px:.2f}" y2="{mt + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{px:.2f}" y="{mt + ph + 16}" text-anchor="middle">1e{k}</text>')
    for k in range(y0, y1 + 1):
        py = mt + (y1 - k) / (y1 - y0) * ph
        out.append(f'<line x1="{ml}" y1="{py:.2f}" x2="{ml + pw}" y2="{py:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{ml - 6}" y="{py + 4:.2f}" text-anchor="end">1e{k}</text>')
    out.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">h</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.2f})">error</text>')

    legend_y = mt + 8
    for i, (label, pts) in enumerate(series):
        color = palette[i % len(palette)]
        pts = sorted(pts)
        if len(pts) >= 2:
            slope = float(np.polyfit(np.log([p[0] for p in pts]), np.log([p[1] for p in pts]), 1)[0])
            label = f"{label} ({slope:.2f})"
            path = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in pts:
            out.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="{color}"/>')
        ly_ = legend_y + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly_}" x2="{ml + pw + 30}" y2="{ly_}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly_ + 4}">{label}</text>')

    if ref_slopes:
        first = sorted(series[0][1])
        hx, hy = first[0] if first else pts_all[0]
        lxa, lxb = math.log10(first[0][0]), math.log10(first[-1][0]) if first else (x0, x1)
        if lxb <= lxa:
            lxa, lxb = x0, x1
        for j, s in enumerate(ref_slopes):
            # guide through the finest point, shifted down by a factor 2
            la = math.log10(hy / 2) + s * (lxa - math.log10(hx))
            lb = la + s * (lxb - lxa)
            ta, tb = 0.0, 1.0
            if lb != la:
                lo, hi = sorted(((y0 - la) / (lb - la), (y1 - la) / (lb - la)))
                ta, tb = max(ta, lo), min(tb, hi)
            if tb <= ta:
                continue
            xa_, xb_ = lxa + ta * (lxb - lxa), lxa + tb * (lxb - lxa)
            ya_, yb_ = la + ta * (lb - la), la + tb * (lb - la)
            out.append(f'<line x1="{X(10 ** xa_):.2f}" y1="{Y(10 ** ya_):.2f}" x2="{X(10 ** xb_):.2f}" '
                       f'y2="{Y(10 ** yb_):.2f}" stroke="black" stroke-dasharray="5,4"/>')
            ly_ = legend_y + 16 * (len(series) + j)
            out.append(f'<line x1="{ml + pw + 10}" y1="{ly_}" x2="{ml + pw + 30}" y2="{ly_}" stroke="black" '
                       f'stroke-dasharray="5,4"/>')
            out.append(f'<text x="{ml + pw + 34}" y="{ly_ + 4}">h^{s:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_results(csv_path, svg_path) -> Path:
    """Render a results.csv as log-log L2 and H1 error series."""
    with open(csv_path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if not r.get("error") and r.get("err_l2")]
    if not rows:
        raise ValueError(f"{csv_path}: no successful rows to plot")
    series = []
    keys = []
    for r in rows:
        k = (r["scheme"], r["m"], r["beta_minus"], r["beta_plus"])
        if k not in keys:
            keys.append(k)
    for k in keys:
        sel = [r for r in rows if (r["scheme"], r["m"], r["beta_minus"], r["beta_plus"]) == k]
        tag = f"{k[0]} m={k[1]} b=({float(k[2]):g},{float(k[3]):g})"
        for col, nm in (("err_l2", "L2"), ("err_h1", "H1")):
            series.append((f"{tag} {nm}", [(float(r["h"]), float(r[col])) for r in sel if float(r[col]) > 0]))
    ms = sorted({int(k[1]) for k in keys})
    refs = (ms[0], ms[0] + 1) if len(ms) == 1 else ()
    Path(svg_path).write_text(emit_svg(series, refs, title=Path(csv_path).parent.name))
    return Path(svg_path)


# -------------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(prog="frenet_sdg", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in MODES:
        sp_ = sub.add_parser(name, help=f"run the {name} study of a config file")
        sp_.add_argument("--config", required=True)
        sp_.add_argument("--out", default=None)
        sp_.add_argument("--deterministic", action="store_true")
        sp_.add_argument("--no-plot", action="store_true")
    pl = sub.add_parser("plot", help="log-log SVG from a results.csv")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.command == "plot":
        try:
            plot_results(args.csv, args.out)
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    cfg.mode = args.command
    cfg.deterministic = cfg.deterministic or args.deterministic
    if args.no_plot:
        cfg.plot = False
    try:
        res = run(cfg, args.out)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    n = len(res["rows"])
    print(f"wrote {res['csv']} ({n - res['failed']}/{n} grid points ok)")
    for s in res.get("summary", []):
        print(f"  {s['scheme']} m={s['m']} beta=({s['beta_minus']:g},{s['beta_plus']:g}): "
              f"slope L2 {_num(s['slope_l2'])}, H1 {_num(s['slope_h1'])}")
    return 2 if res["failed"] == n else 0


def _num(v):
    return f"{v:.2f}" if isinstance(v, float) else "n/a"


if __name__ == "__main__":
    raise SystemExit(main())
