"""Linear perturbation sweeps of the weak Pareto set and empirical verdicts
for closedness and semicontinuity of the solution map at u = 0.

All verdicts are empirical: finitely many perturbations, grid resolution.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .asymptotic import AsymConfig, NoThresholdError, check_condition, check_intersection_condition_q, \
    direction_matrices, epsilon_threshold
from .expr import AFFINE, CONVEX, CONVEX_QUADRATIC, PerturbationMatrix, VectorObjective, classify, \
    robust_quasiconvex_sample_check
from .geometry import GridSpec, PointCloud, PolyUnion, dists_to_cloud, grid_points, hausdorff, \
    hausdorff_excess
from .pareto import FrontResult, discretize, solve_weak_front_report

DEFAULT_RADII = (0.4, 0.2, 0.1, 0.05, 0.025)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("ASYMPTOPT_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items) -> list:
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ClosedFormInterval:
    problem: str
    lower: Callable[[np.ndarray], float]
    upper: Callable[[np.ndarray], float]

    def interval(self, u) -> tuple[float, float]:
        U = np.asarray(u.rows if isinstance(u, PerturbationMatrix) else u, dtype=float)
        if U[0, 0] >= 1:
            raise ValueError("closed form needs u_1 < 1")
        return self.lower(U), self.upper(U)

    def sample(self, u, h: float) -> np.ndarray:
        lo, hi = self.interval(u)
        if hi < lo:
            return np.zeros((0, 1))
        k = int(math.floor((hi - lo) / h + 1e-9))
        pts = lo + h * np.arange(k + 1)
        if hi - pts[-1] > 1e-12:
            pts = np.append(pts, hi)
        return pts.reshape(-1, 1)


CLOSED_FORMS = {
    # interval stated for the perturbed problem (x - u1 x, x^2 - u2 x) on [-1, inf)
    "example-4.2": ClosedFormInterval("example-4.2", lambda U: -1.0,
                                      lambda U: U[1, 0] / (2.0 * (1.0 - U[0, 0]))),
}


@dataclass
class PerturbationSweep:
    radii: tuple[float, ...]
    directions_per_radius: int
    perturbations: list  # (radius, direction index, PerturbationMatrix), sorted by radius desc then index

    def __post_init__(self):
        r = list(self.radii)
        if not r or any(x <= 0 for x in r) or any(a <= b for a, b in zip(r, r[1:])):
            raise ValueError("radii must be positive and strictly decreasing")


def build_sweep(X: PolyUnion, m: int, radii=DEFAULT_RADII, directions_per_radius: int = 8) -> PerturbationSweep:
    """Deterministic sweep: per radius, the first K unit direction matrices
    (sign patterns times X^inf / axis vectors) scaled to the radius."""
    mats = direction_matrices(X, m)[:directions_per_radius]
    perts = []
    for r in radii:
        for j, D in enumerate(mats):
            perts.append((float(r), j, PerturbationMatrix(r * D + 0.0)))
    return PerturbationSweep(tuple(float(r) for r in radii), directions_per_radius, perts)


@dataclass
class SweepEntry:
    radius: float
    index: int
    u: PerturbationMatrix
    front: FrontResult

    @property
    def cloud(self) -> PointCloud:
        return self.front.cloud

    def to_json(self) -> dict:
        return {"radius": self.radius, "index": self.index, "u": self.u.tolist(), **self.front.flags()}


def sol_w_perturbed(f: VectorObjective, X: PolyUnion, u, g: GridSpec, grid: PointCloud | None = None) -> FrontResult:
    """Weak Pareto set of x -> f(x) - <u, x> on the grid, with emptiness flags."""
    fu = f.perturbed(u)
    return solve_weak_front_report(fu, X, g, discretize(fu, X, g, grid))


def run_sweep(f: VectorObjective, X: PolyUnion, g: GridSpec, sweep: PerturbationSweep,
              grid: PointCloud | None = None) -> list[SweepEntry]:
    grid = grid if grid is not None else grid_points(X, g)
    fronts = ordered_map(lambda p: sol_w_perturbed(f, X, p[2], g, grid), sweep.perturbations)
    return [SweepEntry(r, j, U, fr) for (r, j, U), fr in zip(sweep.perturbations, fronts)]


# -- verdicts -----------------------------------------------------------------

@dataclass
class Verdict:
    name: str
    status: str  # "pass", "fail", "vacuous pass", "not applicable"
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "vacuous pass")

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "empirical": True,
                "witness": self.witness, "details": self.details}


def _tiers(results: list[SweepEntry]) -> list[tuple[float, list[SweepEntry]]]:
    radii = sorted({e.radius for e in results}, reverse=True)
    return [(r, [e for e in results if e.radius == r]) for r in radii]


def _union(entries: list[SweepEntry], dim: int) -> np.ndarray:
    parts = [e.cloud.points for e in entries if not e.cloud.empty]
    return np.vstack(parts) if parts else np.zeros((0, dim))


def emptiness_events(results: list[SweepEntry]) -> list[dict]:
    return [{"radius": e.radius, "index": e.index, "u": e.u.tolist()} for e in results if e.front.empty]


def closedness_verdict(results: list[SweepEntry], W0: PointCloud, h: float) -> Verdict:
    """Persistent cluster points of the smallest radius tiers must lie near Sol^w(0)."""
    tol = 2 * h
    tiers = _tiers(results)
    dim = W0.dim
    if not tiers:
        raise ValueError("empty sweep")
    chosen = tiers[-math.ceil(len(tiers) / 2):]
    details = {"tiers_used": [r for r, _ in chosen], "cluster_tol": tol, "match_tol": tol,
               "emptiness_events": len(emptiness_events(results))}
    if all(e.cloud.empty for _, es in chosen for e in es):
        return Verdict("closedness", "vacuous pass", None, details)
    unions = [_union(es, dim) for _, es in chosen]
    cand = unions[-1]
    for U in unions[:-1]:
        if not cand.shape[0]:
            break
        cand = cand[dists_to_cloud(cand, U) <= tol]
    details["candidates"] = int(cand.shape[0])
    if not cand.shape[0]:
        return Verdict("closedness", "pass", None, details)
    d0 = dists_to_cloud(cand, W0)
    if np.all(d0 <= tol):
        return Verdict("closedness", "pass", None, details)
    k = int(np.argmax(d0))
    x = cand[k]
    trace = [{"radius": e.radius, "index": e.index} for _, es in chosen for e in es
             if not e.cloud.empty and dists_to_cloud(x[None], e.cloud)[0] <= tol]
    return Verdict("closedness", "fail", {"point": x.tolist(), "distance": float(d0[k]), "trace": trace}, details)


def usc_verdict(results: list[SweepEntry], W0: PointCloud, eps_list) -> Verdict:
    """For each eps, the largest swept radius r* with excess(Sol^w(u), Sol^w(0)) <= eps
    for all |u| <= r*; pass iff r* > 0 for every eps."""
    if W0.empty:
        raise ValueError("Sol^w(0) is empty")
    tiers = _tiers(results)[::-1]
    rstar = {}
    witness = None
    for eps in eps_list:
        best = 0.0
        for r, es in tiers:
            bad = None
            for e in es:
                ex = hausdorff_excess(e.cloud, W0)
                if ex > eps:
                    d = dists_to_cloud(e.cloud.points, W0)
                    bad = {"eps": eps, "radius": r, "index": e.index, "u": e.u.tolist(),
                           "point": e.cloud.points[int(np.argmax(d))].tolist(), "excess": ex}
                    break
            if bad is not None:
                if best == 0.0 and witness is None:
                    witness = bad
                break
            best = r
        rstar[repr(float(eps))] = best
    events = emptiness_events(results)
    details = {"r_star": rstar, "emptiness_events": len(events)}
    if all(v > 0 for v in rstar.values()):
        return Verdict("usc", "pass", None, details)
    return Verdict("usc", "fail", witness, details)


def lsc_verdict(results: list[SweepEntry], W0: PointCloud, h: float) -> Verdict:
    """Every point of Sol^w(0) within 5h of Sol^w(u) for all u in the smallest tier."""
    if W0.empty:
        raise ValueError("Sol^w(0) is empty")
    tol = 5 * h
    r, es = _tiers(results)[-1]
    details = {"radius": r, "tol": tol}
    for e in es:
        if e.cloud.empty:
            return Verdict("lsc", "fail", {"reason": "empty Sol^w(u)", "radius": r, "index": e.index,
                                           "u": e.u.tolist()}, details)
        d = dists_to_cloud(W0.points, e.cloud)
        if np.any(d > tol):
            k = int(np.argmax(d))
            return Verdict("lsc", "fail", {"point": W0.points[k].tolist(), "distance": float(d[k]),
                                           "radius": r, "index": e.index, "u": e.u.tolist()}, details)
    return Verdict("lsc", "pass", None, details)


def is_bounded_front(f: VectorObjective, X: PolyUnion, g: GridSpec) -> tuple[bool, dict]:
    """Boundary avoidance of Sol^w(0); a touching front is re-solved on a box twice as large."""
    fr = solve_weak_front_report(f, X, g)
    info = {"touches_boundary": fr.touches_boundary, "grown": False}
    if fr.cloud.empty:
        return False, {**info, "empty": True}
    if not fr.touches_boundary:
        return True, info
    g2 = GridSpec(g.box.scaled(2.0), 2 * g.h)
    fr2 = solve_weak_front_report(f, X, g2)
    info.update(grown=True, touches_after_growth=fr2.touches_boundary)
    return (not fr2.touches_boundary and not fr2.cloud.empty), info


def boundedness_equivalence_check(f: VectorObjective, X: PolyUnion, g: GridSpec, lsc: Verdict | None = None,
                                  cfg: AsymConfig | None = None) -> Verdict:
    """Compare boundedness of Sol^w(0) with the coercivity condition (convex data)."""
    kinds = [classify(c) for c in f.components]
    if any(k not in (AFFINE, CONVEX_QUADRATIC, CONVEX) for k in kinds) or not X.is_convex_polyhedron:
        return Verdict("boundedness_equivalence", "not applicable",
                       details={"reason": "needs convex objectives and a single convex polyhedron",
                                "classes": kinds})
    bounded, info = is_bounded_front(f, X, g)
    cond = check_condition(X, f, "plain", cfg=cfg)
    details = {"bounded": bounded, "condition_holds": cond.holds, "agree": bounded == cond.holds,
               "lsc_hypothesis": None if lsc is None else lsc.status, **info}
    return Verdict("boundedness_equivalence", "pass" if bounded == cond.holds else "fail",
                   None if bounded == cond.holds else {"bounded": bounded, "condition": cond.to_json()}, details)


def closed_form_conformance(results: list[SweepEntry], form: ClosedFormInterval, h: float) -> list[dict]:
    """Hausdorff distance between each computed cloud and the stated interval."""
    out = []
    for e in results:
        ref = form.sample(e.u, h)
        d = hausdorff(e.cloud, ref) if len(ref) and not e.cloud.empty else (0.0 if e.cloud.empty == (len(ref) == 0) else math.inf)
        lo, hi = form.interval(e.u)
        out.append({"radius": e.radius, "index": e.index, "u": e.u.tolist(), "interval": [lo, hi],
                    "hausdorff": d, "ok": d <= 2 * h})
    return out


# -- full runs ----------------------------------------------------------------

@dataclass
class StabilityReport:
    entries: list[SweepEntry]
    W0: PointCloud
    verdicts: dict
    epsilon_estimate: dict | None
    precondition_warnings: list = field(default_factory=list)
    closed_form: list | None = None
    extra: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(v.status == "fail" for v in self.verdicts.values())

    def to_json(self) -> dict:
        return {
            "perturbations": [e.to_json() for e in self.entries],
            "sol_w_0_size": len(self.W0),
            "verdicts": {k: v.to_json() for k, v in self.verdicts.items()},
            "emptiness_events": emptiness_events(self.entries),
            "epsilon_estimate": self.epsilon_estimate,
            "precondition_warnings": self.precondition_warnings,
            "closed_form": self.closed_form,
            **self.extra,
        }


def _epsilon(X, f, variant, cfg):
    try:
        return epsilon_threshold(X, f, variant, cfg).to_json()
    except NoThresholdError as exc:
        return {"epsilon": None, "note": str(exc)}


def stability_run(f: VectorObjective, X: PolyUnion, g: GridSpec, sweep: PerturbationSweep | None = None,
                  cfg: AsymConfig | None = None, closed_form: str | None = None, variant: str = "plain",
                  eps_factors=(5, 10)) -> StabilityReport:
    cfg = cfg or AsymConfig()
    sweep = sweep or build_sweep(X, f.m)
    grid = grid_points(X, g)
    W0 = solve_weak_front_report(f, X, g, discretize(f, X, g, grid)).cloud
    entries = run_sweep(f, X, g, sweep, grid)
    verdicts = {"closedness": closedness_verdict(entries, W0, g.h)}
    if W0.empty:
        na = Verdict("usc", "not applicable", details={"reason": "Sol^w(0) is empty"})
        verdicts["usc"] = na
        verdicts["lsc"] = Verdict("lsc", "not applicable", details={"reason": "Sol^w(0) is empty"})
    else:
        verdicts["usc"] = usc_verdict(entries, W0, [k * g.h for k in eps_factors])
        verdicts["lsc"] = lsc_verdict(entries, W0, g.h)
    if variant == "plain":
        verdicts["boundedness_equivalence"] = boundedness_equivalence_check(f, X, g, verdicts["lsc"], cfg)
    cf = None
    if closed_form is not None:
        cf = closed_form_conformance(entries, CLOSED_FORMS[closed_form], g.h)
    return StabilityReport(entries, W0, verdicts, _epsilon(X, f, variant, cfg), closed_form=cf)


def quasiconvex_stability_run(f: VectorObjective, X: PolyUnion, alpha: float, g: GridSpec,
                              sweep: PerturbationSweep | None = None, cfg: AsymConfig | None = None,
                              seed: int = 0) -> StabilityReport:
    """Sweep gated by the q-condition; preconditions are reported, not enforced."""
    cfg = cfg or AsymConfig()
    warns = []
    if not X.is_convex_polyhedron:
        warns.append("feasible set is not a single convex polyhedron")
    qc = robust_quasiconvex_sample_check(f, alpha, g.box, seed=seed)
    if not qc.passed:
        w = qc.witness
        warns.append({"robust_quasiconvexity": "fail", "component": qc.index + 1 if qc.index is not None else None,
                      "u": None if qc.u is None else np.asarray(qc.u).tolist(),
                      "witness": None if w is None else {"x": np.asarray(w.x).tolist(), "y": np.asarray(w.y).tolist(),
                                                         "lam": float(w.lam), "margin": float(w.margin)}})
    for w in warns:
        warnings.warn(f"quasiconvex stability precondition: {w}", stacklevel=2)
    cond = check_condition(X, f, "q", cfg=cfg)
    rep = stability_run(f, X, g, sweep, cfg, variant="q")
    rep.precondition_warnings = warns
    rep.extra["condition_q"] = cond.to_json()
    if rep.verdicts["lsc"].status == "pass":
        rep.extra["intersection_condition_q"] = check_intersection_condition_q(X, f, cfg).to_json()
    return rep
