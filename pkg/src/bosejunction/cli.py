"""Command line entry point.

    bosejunction <subcommand> --config run.json [--out DIR] [--format csv|json]
                 [--seed N] [--threads N]

Exit status: 0 success, 2 condition (B) failed, 3 configuration error,
4 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import graphs, oracle, transport
from .config import ConfigError, RunConfig, build_profile, build_test_vector, load_config
from .model import ContinuumRd
from .ness import ConditionFailure, NessEvaluator, ness_covariance
from .spectral import GridTooCoarse, density_continuum_rd, reservoir_density, support_top, uniform_grid

__all__ = ["main", "run_subcommand"]

EXIT_OK, EXIT_B, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4
SUBCOMMANDS = ("density", "eta", "check", "currents", "epr", "evolve", "graph-check")


def fmt(x) -> str:
    """Twelve significant digits; complex numbers are not emitted directly."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12g}"
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return fmt(x)
        return float(f"{x:.12g}")
    if isinstance(x, complex):
        return [_jsonable(x.real), _jsonable(x.imag)]
    return x


class _Writer:
    def __init__(self, out: Path, fmt_: str, cfg: RunConfig):
        self.out = out
        self.format = fmt_
        self.cfg = cfg
        out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header: list[str], rows) -> Path:
        """Write a table as CSV, or collect it into the JSON report."""
        path = self.out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) for v in r])
        return path

    def report(self, name: str, body: dict) -> Path:
        body = {"config_hash": self.cfg.config_hash, **body}
        if self.format == "json":
            path = self.out / f"{name}.json"
            path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
            return path
        path = self.out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["key", "value"])
            for k, v in _flatten(body):
                w.writerow([k, fmt(v)])
        return path


def _flatten(d, prefix=""):
    if isinstance(d, dict):
        for k in sorted(d):
            yield from _flatten(d[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(d, (list, tuple)):
        for i, v in enumerate(d):
            yield from _flatten(v, f"{prefix}[{i}]")
    elif isinstance(d, complex):
        yield f"{prefix}.re", d.real
        yield f"{prefix}.im", d.imag
    elif d is None:
        yield prefix, ""
    else:
        yield prefix, d


def _evaluator(cfg: RunConfig, require_b: bool) -> NessEvaluator:
    return NessEvaluator.build(
        cfg.model, cfg.spectral_options, cfg.numerics.thresholds.condition_b, require_b=require_b
    )


# --------------------------------------------------------------------------
# subcommands


def _cmd_density(cfg: RunConfig, w: _Writer) -> int:
    opts = cfg.spectral_options
    entries = []
    for k, res in enumerate(cfg.model.reservoirs):
        if isinstance(res.kind, ContinuumRd):
            grid = uniform_grid(support_top(res), cfg.numerics.continuum_grid_points)
            rho = density_continuum_rd(res.kind.d, res.form_factor, grid)
            tol = 1e-6
        else:
            grid = uniform_grid(support_top(res), opts.grid_points)
            rho = reservoir_density(res, grid, opts)
            tol = 1e-2
        w.table(f"density_{k + 1}", ["nu", "rho"], zip(rho.grid, rho.values))
        entries.append(
            {
                "reservoir": k + 1,
                "method": rho.method,
                "total_mass": rho.total_mass,
                "norm_sq": rho.norm_sq,
                "mass_error": rho.mass_error,
                "mass_tolerance": tol,
                "mass_ok": bool(rho.norm_sq is None or rho.mass_error <= tol),
                "support": list(rho.support),
            }
        )
    w.report("density_report", {"densities": entries, "conditions": _evaluator(cfg, False).verdict_summary()})
    return EXIT_OK


def _cmd_eta(cfg: RunConfig, w: _Writer) -> int:
    ev = _evaluator(cfg, require_b=False)
    eb = ev.eta
    w.table("eta", ["x", "re", "im"], ((x, e.real, e.imag) for x, e in zip(eb.grid, eb.eta_plus)))
    w.report(
        "eta_report",
        {"eta_zero": eb.eta_zero, "min_abs": eb.min_abs, "argmin": eb.argmin, "conditions": ev.verdict_summary()},
    )
    return EXIT_B if not ev.verdicts["B"].ok else EXIT_OK


def _cmd_check(cfg: RunConfig, w: _Writer) -> int:
    ev = _evaluator(cfg, require_b=False)
    w.report("check", {"conditions": ev.verdict_summary(), "eta_zero": ev.eta.eta_zero})
    if not ev.verdicts["B"].ok:
        return EXIT_B
    if not all(v.ok for v in ev.verdicts["A"]):
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_transport(cfg: RunConfig, w: _Writer, name: str) -> int:
    ev = _evaluator(cfg, require_b=True)
    rep = transport.transport_report(ev, cfg.numerics.thresholds.open_channel)
    rows = [(r["l"], r["J"], r["E"], r["Jos"], r["J_err"], r["E_err"]) for r in rep.rows()]
    w.table(name, ["l", "J", "E", "Jos", "J_err", "E_err"], rows)
    n = ev.n_reservoirs
    body = {
        "Ep": rep.Ep,
        "Ep_err": rep.Ep_err,
        "sum_J": math.fsum(rep.J),
        "sum_E": math.fsum(rep.E),
        "sum_Jos": math.fsum(rep.Jos),
        "currents": [dict(r) for r in rep.rows()],
        "open_channels": {
            "threshold": rep.open_threshold,
            "measure": [[rep.open_channels[k, l] for l in range(n)] for k in range(n)],
        },
        "positivity": rep.positivity,
        "eta_zero": ev.eta.eta_zero,
        "conditions": rep.condition_verdicts,
    }
    w.report(f"{name}_report", body)
    return EXIT_OK


def _cmd_evolve(cfg: RunConfig, w: _Writer) -> int:
    if cfg.evolve is None:
        raise ConfigError(["evolve: section required for the evolve subcommand"])
    ev = _evaluator(cfg, require_b=False)
    om = cfg.model.system.omega
    f = build_test_vector(cfg.evolve.test_vector)
    probes = {k: tuple(None if p is None else build_profile(p) for p in v) for k, v in cfg.evolve.probes.items()}
    t = np.linspace(0.0, cfg.evolve.t_max, cfg.evolve.samples)
    tm = oracle.build_truncation(ev, cfg.numerics.modes_per_reservoir)
    mat = oracle.evolve_matrix(tm, f, t, probes)
    cov, _ = oracle.quench_covariance(tm, ev, f, t, mat)
    status, code = "ok", EXIT_OK
    an = None
    if ev.lam == 0:
        status = "degenerate"
    elif not ev.verdicts["B"].ok:
        status, code = "condition (B) failed", EXIT_B
    else:
        an = oracle.evolve_analytic(ev, f, t, probes)
    header = ["t", "re_c", "im_c", "abs_c", "covariance"]
    if an is not None:
        header += ["re_c_analytic", "im_c_analytic", "abs_diff"]
    rows = []
    for i, ti in enumerate(t):
        c = mat.c_of_t[i]
        row = [ti, c.real, c.imag, abs(c), cov[i]]
        if an is not None:
            ca = an.c_of_t[i]
            row += [ca.real, ca.imag, abs(ca - c)]
        rows.append(row)
    w.table("evolve", header, rows)
    body = {
        "analytic_status": status,
        "modes_per_reservoir": cfg.numerics.modes_per_reservoir,
        "recurrence_time": tm.recurrence_time(),
        "norm_drift": mat.norm_drift,
        "omega": om,
        "conditions": ev.verdict_summary(),
    }
    if an is not None:
        body["max_abs_diff"] = float(np.max(np.abs(an.c_of_t - mat.c_of_t)))
        body["ness_covariance"] = ness_covariance(ev, f)
        for name in probes:
            body.setdefault("probe_max_abs_diff", {})[name] = float(np.max(np.abs(an.overlaps[name] - mat.overlaps[name])))
    w.report("evolve_report", body)
    return code


def _graph_patch(g, base: Path):
    if g.kind == "zd":
        if g.d is None:
            raise ConfigError(["graph.d: required for zd patches"])
        return graphs.zd_patch(g.d, g.radius, g.boundary_margin)
    if g.kind == "comb":
        if g.d is None:
            raise ConfigError(["graph.d: required for comb patches"])
        return graphs.comb_patch(g.d, g.base_radius, g.tooth_length, g.boundary_margin)
    if g.path is None:
        raise ConfigError(["graph.path: required for edge lists"])
    p = Path(g.path)
    text = (p if p.is_absolute() else base / p).read_text(encoding="utf-8")
    try:
        return graphs.patch_from_edge_list(text, 0)
    except ValueError as e:
        raise ConfigError([f"graph.path: {e}"]) from None


def _cmd_graph_check(cfg: RunConfig, w: _Writer) -> int:
    g = cfg.graph
    if g is None:
        raise ConfigError(["graph: section required for the graph-check subcommand"])
    patch = _graph_patch(g, cfg.base_dir)
    if g.phi is not None:
        phi = graphs.AdaptedFunction.from_callable(patch, lambda lab: g.phi.get(_label_key(lab), math.nan))
        if np.any(np.isnan(phi.phi)):
            raise ConfigError(["graph.phi: a value is required for every vertex"])
    elif patch.coords is not None:
        phi = graphs.coordinate_sum(patch)
    else:
        phi = None
    body = {"kind": g.kind, "n_vertices": patch.n_vertices, "conditions": _evaluator(cfg, False).verdict_summary()}
    if phi is not None:
        av = graphs.check_adapted(patch, phi)
        body["adapted"] = {
            "ok": av.ok,
            "cond_i": av.cond_i,
            "cond_ii": av.cond_ii,
            "cond_iii": av.cond_iii,
            "lipschitz_c": av.lipschitz_c,
            "violations": [[c, _label_key(x), _label_key(y), v] for c, x, y, v in av.violations],
        }
    if g.orientation is not None:
        pairs = {(a, b) for a, b in g.orientation}
        D = graphs.orientation_from_pairs(patch, lambda u, v: (_label_key(u), _label_key(v)) in pairs)
    elif phi is not None:
        D = graphs.orientation_from_function(patch, phi)
    else:
        D = None
    if D is not None:
        adm = graphs.check_admissible(patch, D, max_len=g.max_walk, seed=cfg.numerics.seed or 0)
        body["admissible"] = {
            "ok": adm.ok,
            "univoque": adm.univoque,
            "uniform": adm.uniform,
            "closed_walk_witness": None if adm.closed_walk_witness is None else [
                _label_key(adm.closed_walk_witness[0]), adm.closed_walk_witness[1], adm.closed_walk_witness[2]
            ],
            "uniform_violations": [[_label_key(x), _label_key(y)] for x, y in adm.uniform_violations],
        }
    if g.kind in ("zd", "comb"):
        v = graphs.pf_weight(patch)
        vv = v.on(patch)
        resid = patch.adjacency @ vv - v.spr * vv
        inner = patch.interior
        body["pf_weight"] = {
            "variant": v.variant,
            "spectral_radius": v.spr,
            "max_relation_residual": float(np.max(np.abs(resid[inner]))),
            "positive": bool(np.all(vv > 0)),
        }
    w.report("graph_check", body)
    return EXIT_OK


def _label_key(lab) -> str:
    if isinstance(lab, tuple):
        return ",".join(str(int(c)) for c in lab)
    return str(lab)


def run_subcommand(name: str, cfg: RunConfig, out: Path | None = None, fmt_: str | None = None) -> int:
    """Run one subcommand and write its artifacts; returns the exit status."""
    out = Path(out) if out is not None else Path(cfg.outputs.dir)
    w = _Writer(out, fmt_ or cfg.outputs.format, cfg)
    if name == "density":
        return _cmd_density(cfg, w)
    if name == "eta":
        return _cmd_eta(cfg, w)
    if name == "check":
        return _cmd_check(cfg, w)
    if name in ("currents", "epr"):
        return _cmd_transport(cfg, w, name)
    if name == "evolve":
        return _cmd_evolve(cfg, w)
    if name == "graph-check":
        return _cmd_graph_check(cfg, w)
    raise ConfigError([f"<command>: unknown subcommand {name!r}"])


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bosejunction", description=__doc__.split("\n\n")[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        for line in e.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=args.threads):
            code = run_subcommand(args.subcommand, cfg, args.out, args.format)
    except ConfigError as e:
        for line in e.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except ConditionFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_B if e.verdict.condition == "B" else EXIT_NUMERIC
    except (GridTooCoarse, FloatingPointError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


if __name__ == "__main__":
    sys.exit(main())
