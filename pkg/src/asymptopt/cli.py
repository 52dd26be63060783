"""Command-line interface: asymptopt <command> --problem P --config C --out DIR.

Exit codes: 0 ok, 2 verdict failure, 3 precondition violated, 4 input error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import asymptotic as asy
from .geometry import grid_points
from .pareto import (NoFarSamplesError, PreconditionError, SimplexGrid, discretize, pareto_mask, psi_values,
                     scalarization_inclusion, scalarize, sharp_minima_certificate, solve_scalar,
                     solve_weak_front_report, weak_mask)
from .problems import ProblemError, ProblemSpec, RunConfig, parse_problem
from .stability import build_sweep, quasiconvex_stability_run, stability_run

OK, VERDICT_FAIL, PRECONDITION, INPUT_ERROR = 0, 2, 3, 4
COMMANDS = ("check-existence", "asym", "solve", "psi", "sharp", "stability", "all")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_cloud(path: Path, pts: np.ndarray, n: int) -> None:
    write_csv(path, [f"x{j + 1}" for j in range(n)], pts.reshape(-1, n))


class Context:
    """A parsed problem plus config, with lazily shared grid data."""

    def __init__(self, spec: ProblemSpec, cfg: RunConfig, out: Path):
        self.spec, self.cfg, self.out = spec, cfg, out
        self.f = spec.objective()
        self.X = spec.feasible()
        self.g = cfg.grid_for(spec)
        self._data = None
        self._condition = None

    @property
    def data(self):
        if self._data is None:
            self._data = discretize(self.f, self.X, self.g, grid_points(self.X, self.g))
        return self._data

    @property
    def condition(self):
        if self._condition is None:
            self._condition = asy.check_condition(self.X, self.f, "plain", cfg=self.cfg.asym)
        return self._condition

    def plot(self, fn_name: str, *args, **kw):
        if not self.cfg.plots:
            return
        from . import plots
        getattr(plots, fn_name)(*args, **kw)


def cmd_check_existence(ctx: Context) -> int:
    cond = ctx.condition
    cond_q = asy.check_condition(ctx.X, ctx.f, "q", cfg=ctx.cfg.asym)
    try:
        eps = asy.epsilon_threshold(ctx.X, ctx.f, "plain", ctx.cfg.asym).to_json()
    except asy.NoThresholdError as exc:
        eps = {"epsilon": None, "note": str(exc)}
    write_json(ctx.out / "existence.json", {"problem": ctx.spec.name, "condition": cond.to_json(),
                                             "condition_q": cond_q.to_json(), "epsilon_estimate": eps})
    print(f"check-existence {ctx.spec.name}: condition {'holds' if cond.holds else 'fails'}"
          + ("" if cond.holds else f" (d={cond.direction.tolist()}, i={cond.index}, margin={cond.margin:.3g})"))
    return OK if cond.holds else VERDICT_FAIL


def _asym_directions(ctx: Context) -> np.ndarray:
    n = ctx.spec.n
    cand = list(asy.condition_directions(ctx.X, ctx.cfg.asym))
    for j in range(n):
        for s in (1.0, -1.0):
            cand.append(s * np.eye(n)[j])
    out = []
    for d in cand:
        if not any(np.allclose(d, q, atol=1e-9) for q in out):
            out.append(np.asarray(d, dtype=float) + 0.0)
    return np.array(out)


def cmd_asym(ctx: Context) -> int:
    cfg = ctx.cfg.asym
    probes = asy.probe_points(ctx.spec.n, cfg)
    rows = []
    for d in _asym_directions(ctx):
        ds = ";".join(_fmt(v) for v in d)
        for i, e in enumerate(ctx.f.components, start=1):
            entries = [("plain", asy.asym_value(e, d, cfg)), ("q", asy.q_asym_value(e, d, cfg, probes=probes))]
            for lev in ctx.cfg.lambda_levels:
                try:
                    entries.append((f"lambda={lev!r}", asy.lambda_asym_value(e, lev, d, cfg, probes=probes)))
                except asy.AsymError:
                    entries.append((f"lambda={lev!r}", float("nan")))
            for variant, v in entries:
                margin = v - cfg.zero_tol if not math.isnan(v) else float("nan")
                rows.append((ds, f"f{i}", variant, v, margin))
    write_csv(ctx.out / "asym.csv", ["direction", "f_i", "variant", "value", "margin"], rows)
    print(f"asym {ctx.spec.name}: {len(rows)} rows")
    return OK


def cmd_solve(ctx: Context) -> int:
    data, n = ctx.data, ctx.spec.n
    fr = solve_weak_front_report(ctx.f, ctx.X, ctx.g, data)
    strong = pareto_mask(data)
    write_cloud(ctx.out / "sol_w.csv", fr.cloud.points, n)
    write_cloud(ctx.out / "sol.csv", data.points[strong], n)
    rows = []
    for lam in SimplexGrid(ctx.f.m, ctx.cfg.simplex_r).points:
        s = solve_scalar(scalarize(ctx.f, lam), ctx.X, ctx.g, data)
        rows.append((";".join(_fmt(v) for v in lam), len(s.cloud), s.value, int(s.escape)))
    write_csv(ctx.out / "scalarizations.csv", ["lambda", "points", "value", "escape"], rows)
    inc = scalarization_inclusion(ctx.f, ctx.X, ctx.g, ctx.cfg.simplex_r, data)
    weak = weak_mask(data)
    write_json(ctx.out / "solve.json", {"problem": ctx.spec.name, "grid_points": data.n_points,
                                         "weak_front": fr.flags(), "front_size": int(strong.sum()),
                                         "front_within_weak": bool(not np.any(strong & ~weak)),
                                         "scalarization_inclusion": inc.to_json()})
    ctx.plot("plot_fronts", ctx.out / "fronts.png", fr.cloud.points, data.points[strong], data.points,
             title=ctx.spec.name)
    print(f"solve {ctx.spec.name}: weak front {len(fr.cloud)} points"
          + (" (empty: escape)" if fr.empty else "") + f", inclusion violations "
          f"{len(inc.weak_violations) + len(inc.pareto_violations)}")
    return OK if inc.ok else VERDICT_FAIL


def cmd_psi(ctx: Context) -> int:
    data = ctx.data
    psi = psi_values(data.F, data.F)
    weak = weak_mask(data)
    zero = psi <= data.tau
    rows = [tuple(p) + (v, int(w)) for p, v, w in zip(data.points, psi, weak)]
    write_csv(ctx.out / "psi.csv", [f"x{j + 1}" for j in range(ctx.spec.n)] + ["psi", "weak_pareto"], rows)
    bad = np.flatnonzero(zero != weak)
    write_json(ctx.out / "psi.json", {"problem": ctx.spec.name, "points": data.n_points,
                                       "disagreements": int(bad.size), "tau_psi": data.tau,
                                       "examples": data.points[bad[:10]]})
    ctx.plot("plot_psi", ctx.out / "psi.png", data.points, psi, title=f"{ctx.spec.name}: psi")
    print(f"psi {ctx.spec.name}: {bad.size} disagreements over {data.n_points} points")
    return OK if not bad.size else VERDICT_FAIL


def cmd_sharp(ctx: Context) -> int:
    try:
        certs = sharp_minima_certificate(ctx.f, ctx.X, ctx.g, ctx.cfg.R_list, ctx.condition, ctx.data)
    except (PreconditionError, NoFarSamplesError) as exc:
        write_json(ctx.out / "sharp.json", {"problem": ctx.spec.name, "precondition": str(exc), "valid": False})
        print(f"sharp {ctx.spec.name}: precondition failed: {exc}")
        return PRECONDITION
    valid = any(c.valid for c in certs)
    write_json(ctx.out / "sharp.json", {"problem": ctx.spec.name, "valid": valid,
                                         "certificates": [c.to_json() for c in certs]})
    print(f"sharp {ctx.spec.name}: " + ", ".join(f"R={c.R:g} c_hat={c.c_hat:.4g}" for c in certs))
    return OK if valid else VERDICT_FAIL


def cmd_stability(ctx: Context) -> int:
    spec, cfg = ctx.spec, ctx.cfg
    sweep = build_sweep(ctx.X, ctx.f.m, cfg.radii, cfg.directions)
    if spec.alpha is not None:
        rep = quasiconvex_stability_run(ctx.f, ctx.X, spec.alpha, ctx.g, sweep, cfg.asym, seed=cfg.seed)
    else:
        rep = stability_run(ctx.f, ctx.X, ctx.g, sweep, cfg.asym, closed_form=spec.closed_form)
    body = rep.to_json()
    if rep.closed_form is not None:
        body["closed_form_ok"] = all(c["ok"] for c in rep.closed_form)
    write_json(ctx.out / "stability.json", {"problem": spec.name, **body})
    cdir = ctx.out / "stability"
    cdir.mkdir(exist_ok=True)
    write_cloud(cdir / "u000_zero.csv", rep.W0.points, spec.n)
    for k, e in enumerate(rep.entries, start=1):
        write_cloud(cdir / f"u{k:03d}_r{e.radius:g}_d{e.index}.csv", e.cloud.points, spec.n)
    labels = [f"r={e.radius:g} #{e.index}" for e in rep.entries]
    ctx.plot("plot_sweep", ctx.out / "stability.png", [e.cloud.points for e in rep.entries], labels,
             rep.W0.points, title=f"{spec.name}: perturbed weak Pareto sets")
    status = ", ".join(f"{k} {v.status}" for k, v in rep.verdicts.items())
    print(f"stability {spec.name}: {status}")
    if rep.failed:
        return VERDICT_FAIL
    if rep.precondition_warnings:
        return PRECONDITION
    return OK


HANDLERS = {"check-existence": cmd_check_existence, "asym": cmd_asym, "solve": cmd_solve, "psi": cmd_psi,
            "sharp": cmd_sharp, "stability": cmd_stability}
CHAIN = ("check-existence", "solve", "psi", "sharp", "stability")


def run(command: str, spec: ProblemSpec, cfg: RunConfig, out) -> int:
    if command not in COMMANDS:
        raise ProblemError(f"unknown command {command!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(spec, cfg, out)
    if command != "all":
        return HANDLERS[command](ctx)
    codes = {name: HANDLERS[name](ctx) for name in CHAIN}
    write_json(out / "summary.json", {"problem": spec.name, "exit_codes": codes})
    return max(codes.values())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asymptopt", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--problem", required=True, help="problem JSON file or bundled id")
    p.add_argument("--config", help="run configuration JSON file")
    p.add_argument("--out", default="asymptopt-out", help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = parse_problem(args.problem)
        raw = {}
        if args.config:
            try:
                raw = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ProblemError(f"cannot read config: {exc}") from exc
        cfg = RunConfig.from_dict(raw)
        if args.no_plots:
            cfg.plots = False
        return run(args.command, spec, cfg, args.out)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
