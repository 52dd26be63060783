"""Grid solvers for scalarized problems, weak Pareto / Pareto sets, the
achievement function psi and the weak-sharp-minima certificate."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .expr import Expr, Scale, Sum, VectorObjective
from .geometry import (TAU_SET, GridSpec, PointCloud, PolyUnion, asymptotic_cone, dists_to_cloud, grid_points,
                       on_box_boundary, sphere_sample)

_CHUNK = 256


class PreconditionError(ValueError):
    pass


class NoFarSamplesError(ValueError):
    pass


def dominance_tol(F: np.ndarray) -> float:
    """Float slack for strict comparisons, scaled by the largest objective value."""
    finite = F[np.isfinite(F)]
    scale = float(np.max(np.abs(finite))) if finite.size else 1.0
    return 1e-9 * max(1.0, scale)


def value_tol(v: np.ndarray) -> float:
    finite = v[np.isfinite(v)]
    scale = float(np.max(np.abs(finite))) if finite.size else 1.0
    return 1e-11 * max(1.0, scale)


@dataclass(frozen=True)
class SimplexGrid:
    """All weights with coordinates in {0, 1/r, ..., 1}, summing to one."""

    m: int
    r: int

    def __post_init__(self):
        if self.m < 1 or self.r < 1:
            raise ValueError("simplex grid needs m >= 1 and r >= 1")

    @property
    def points(self) -> np.ndarray:
        out = []
        for c in itertools.product(range(self.r, -1, -1), repeat=self.m - 1):
            if sum(c) <= self.r:
                out.append(list(c) + [self.r - sum(c)])
        return np.array(out, dtype=float) / self.r

    @property
    def interior(self) -> np.ndarray:
        return np.all(self.points > 0, axis=1)


def _check_weights(lam, m: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape[0] != m or np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-12:
        raise ValueError("weights must lie in the unit simplex")
    return np.clip(lam, 0.0, None)


def scalarize(f: VectorObjective, lam) -> Expr:
    """sum_i lam_i f_i (zero weights dropped)."""
    lam = _check_weights(lam, f.m)
    terms = []
    for w, c in zip(lam, f.components):
        if w == 0:
            continue
        terms.append(c if w == 1.0 else Scale(float(w), c))
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


# -- discretization -----------------------------------------------------------

@dataclass
class GridData:
    """Feasible grid points and objective values, shared by the solvers."""

    X: PolyUnion
    grid: GridSpec
    points: np.ndarray
    F: np.ndarray
    tau: float

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def discretize(f: VectorObjective, X: PolyUnion, g: GridSpec, cloud: PointCloud | None = None) -> GridData:
    if f.dim != X.dim:
        raise ValueError(f"objective dimension {f.dim} != feasible set dimension {X.dim}")
    cloud = cloud if cloud is not None else grid_points(X, g)
    F = f.values(cloud.points)
    return GridData(X, g, cloud.points, F, dominance_tol(F))


def _weak_dominated(Fq: np.ndarray, F: np.ndarray, tau: float) -> np.ndarray:
    """True where some row of F is better than Fq by more than tau in every objective."""
    if F.shape[1] == 1:
        return np.min(F[:, 0]) < Fq[:, 0] - tau
    if F.shape[1] == 2:
        # sort by f_1; the candidates better in f_1 form a prefix, keep its running min of f_2
        order = np.argsort(F[:, 0], kind="stable")
        a, pm = F[order, 0], np.minimum.accumulate(F[order, 1])
        cnt = np.searchsorted(a, Fq[:, 0] - tau, side="left")
        best = np.where(cnt > 0, pm[np.maximum(cnt - 1, 0)], np.inf)
        return best < Fq[:, 1] - tau
    return _weak_dominated_brute(Fq, F, tau)


def _weak_dominated_brute(Fq: np.ndarray, F: np.ndarray, tau: float) -> np.ndarray:
    out = np.zeros(Fq.shape[0], dtype=bool)
    for s in range(0, Fq.shape[0], _CHUNK):
        q = Fq[s:s + _CHUNK]
        better = np.all(F[None, :, :] < q[:, None, :] - tau, axis=2)
        out[s:s + _CHUNK] = np.any(better, axis=1)
    return out


def _dominated(Fq: np.ndarray, F: np.ndarray, tau: float) -> np.ndarray:
    """True where some row of F is <= Fq everywhere and better by more than tau somewhere."""
    out = np.zeros(Fq.shape[0], dtype=bool)
    for s in range(0, Fq.shape[0], _CHUNK):
        q = Fq[s:s + _CHUNK]
        le = np.all(F[None, :, :] <= q[:, None, :], axis=2)
        lt = np.any(F[None, :, :] < q[:, None, :] - tau, axis=2)
        out[s:s + _CHUNK] = np.any(le & lt, axis=1)
    return out


def psi_values(Fq: np.ndarray, F: np.ndarray) -> np.ndarray:
    """psi = max over grid y of min_i (f_i(x) - f_i(y)), for each row of Fq."""
    out = np.empty(Fq.shape[0])
    for s in range(0, Fq.shape[0], _CHUNK):
        q = Fq[s:s + _CHUNK]
        diff = q[:, None, :] - F[None, :, :]
        with np.errstate(invalid="ignore"):
            out[s:s + _CHUNK] = np.max(np.min(diff, axis=2), axis=1)
    return out


def weak_mask(data: GridData) -> np.ndarray:
    return ~_weak_dominated(data.F, data.F, data.tau)


def pareto_mask(data: GridData) -> np.ndarray:
    return ~_dominated(data.F, data.F, data.tau)


def _member_prep(x, f, X, g, data):
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if not X.contains(x, TAU_SET)[0]:
        raise PreconditionError("point is not feasible")
    data = data if data is not None else discretize(f, X, g)
    fx = f.values(x)
    tau = max(data.tau, dominance_tol(fx))
    return fx, data, tau


def weak_pareto_member(x, f: VectorObjective, X: PolyUnion, g: GridSpec, data: GridData | None = None) -> bool:
    fx, data, tau = _member_prep(x, f, X, g, data)
    return not bool(_weak_dominated(fx, data.F, tau)[0])


def pareto_member(x, f: VectorObjective, X: PolyUnion, g: GridSpec, data: GridData | None = None) -> bool:
    fx, data, tau = _member_prep(x, f, X, g, data)
    return not bool(_dominated(fx, data.F, tau)[0])


# -- scalar problems ----------------------------------------------------------

@dataclass
class ScalarSolution:
    cloud: PointCloud
    indices: np.ndarray
    value: float
    escape: bool


def _escape_dirs(X: PolyUnion, count: int = 32) -> np.ndarray:
    return sphere_sample(asymptotic_cone(X), count)


def solve_scalar(phi: Expr, X: PolyUnion, g: GridSpec, data: GridData | None = None,
                 label: str = "scalar_argmin") -> ScalarSolution:
    """All grid points within a float tolerance of the grid minimum of phi.

    ``escape`` is set when a minimizer lies on the truncation boundary and phi
    still decreases along a sampled direction of X^inf from there.
    """
    pts = data.points if data is not None else grid_points(X, g).points
    if not pts.shape[0]:
        raise ValueError("empty grid")
    v = phi.eval_many(pts)
    vmin = float(np.min(v))
    tol = value_tol(v)
    idx = np.flatnonzero(v <= vmin + tol)
    arg = pts[idx]
    escape = False
    edge = arg[on_box_boundary(arg, g.box, g.h)]
    if edge.shape[0]:
        dirs = _escape_dirs(X)
        for s in (g.h, 10 * g.h, 100 * g.h):
            if escape or not len(dirs):
                break
            for d in dirs:
                y = edge + s * d
                ok = X.contains(y)
                if np.any(ok & (phi.eval_many(y) < phi.eval_many(edge) - tol)):
                    escape = True
                    break
    return ScalarSolution(PointCloud(arg, kind=label, grid=g), idx, vmin, escape)


# -- fronts -------------------------------------------------------------------

@dataclass
class FrontResult:
    """Weak Pareto cloud with emptiness / boundedness diagnostics.

    ``cloud`` is empty when the grid front is judged an artifact of truncation
    (every point on the box boundary and every vertex scalarization escaping);
    ``raw`` always holds the grid front.
    """

    cloud: PointCloud
    raw: PointCloud
    empty: bool
    escape: bool
    touches_boundary: bool
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def flags(self) -> dict:
        return {"empty": self.empty, "escape": self.escape, "touches_boundary": self.touches_boundary,
                "size": len(self.cloud)}


def vertex_escapes(f: VectorObjective, X: PolyUnion, g: GridSpec, data: GridData) -> list[bool]:
    out = []
    for i in range(f.m):
        lam = np.zeros(f.m)
        lam[i] = 1.0
        out.append(solve_scalar(scalarize(f, lam), X, g, data).escape)
    return out


def solve_weak_front_report(f: VectorObjective, X: PolyUnion, g: GridSpec,
                            data: GridData | None = None) -> FrontResult:
    data = data if data is not None else discretize(f, X, g)
    mask = weak_mask(data)
    idx = np.flatnonzero(mask)
    raw = PointCloud(data.points[idx], kind="weak_pareto", grid=g)
    edge = on_box_boundary(raw.points, g.box, g.h)
    touches = bool(np.any(edge))
    esc = vertex_escapes(f, X, g, data)
    empty = bool(len(raw) and np.all(edge) and all(esc))
    cloud = PointCloud(np.zeros((0, X.dim)), kind="weak_pareto", grid=g) if empty else raw
    return FrontResult(cloud, raw, empty, any(esc), touches, idx)


def solve_weak_front(f: VectorObjective, X: PolyUnion, g: GridSpec, data: GridData | None = None) -> PointCloud:
    return solve_weak_front_report(f, X, g, data).cloud


def solve_front(f: VectorObjective, X: PolyUnion, g: GridSpec, data: GridData | None = None) -> PointCloud:
    data = data if data is not None else discretize(f, X, g)
    strong = pareto_mask(data)
    weak = weak_mask(data)
    if np.any(strong & ~weak):
        raise AssertionError("Pareto point outside the weak Pareto set")
    return PointCloud(data.points[strong], kind="pareto", grid=g)


# -- psi ----------------------------------------------------------------------

def achievement_psi(x, f: VectorObjective, X: PolyUnion, g: GridSpec, data: GridData | None = None) -> float:
    data = data if data is not None else discretize(f, X, g)
    fx = f.values(np.asarray(x, dtype=float).reshape(1, -1))
    return float(psi_values(fx, data.F)[0])


@dataclass
class PsiReport:
    points: int
    disagreements: list
    tau: float
    min_psi: float

    @property
    def ok(self) -> bool:
        return not self.disagreements

    def to_json(self) -> dict:
        return {"points": self.points, "disagreements": len(self.disagreements),
                "examples": [[float(v) for v in p] for p in self.disagreements[:10]],
                "tau_psi": self.tau, "min_psi": self.min_psi}


def verify_psi_characterization(f: VectorObjective, X: PolyUnion, g: GridSpec,
                                data: GridData | None = None) -> PsiReport:
    """Compare {psi <= tau} with the weak Pareto membership test over the grid."""
    data = data if data is not None else discretize(f, X, g)
    psi = psi_values(data.F, data.F)
    weak = weak_mask(data)
    zero = psi <= data.tau
    bad = np.flatnonzero(zero != weak)
    return PsiReport(data.n_points, [data.points[k] for k in bad], data.tau, float(np.min(psi)))


# -- weak sharp minima --------------------------------------------------------

@dataclass
class SharpCertificate:
    R: float
    c_hat: float
    worst_ratio_point: np.ndarray
    samples: int
    c1_hat: float
    image_gap_slack: float
    norm_gap_slack: float

    @property
    def valid(self) -> bool:
        return self.c_hat > 0

    def to_json(self) -> dict:
        return {"R": self.R, "c_hat": self.c_hat, "samples": self.samples, "valid": self.valid,
                "worst_ratio_point": [float(v) for v in self.worst_ratio_point],
                "inequalities": {"c1_hat": self.c1_hat, "linear_growth_holds": self.c1_hat > 0,
                                 "image_gap_slack": self.image_gap_slack, "norm_gap_slack": self.norm_gap_slack},
                "note": "sampled lower estimate over far grid points"}


def sharp_minima_certificate(f: VectorObjective, X: PolyUnion, g: GridSpec, R_list=(3.0,), condition=None,
                             data: GridData | None = None) -> list[SharpCertificate]:
    """Per R: c_hat = min over grid x with |x| > R of
    dist(f(x), f(W)) / dist(x, W), W the weak Pareto cloud, together with the
    sampled slacks of psi >= c1 |x|, psi <= dist(f(x), f(W)) and
    |x| >= dist(x, W) / 2."""
    if condition is not None and not condition.holds:
        raise PreconditionError("the coercivity condition fails; no sharp-minima certificate")
    data = data if data is not None else discretize(f, X, g)
    idx = np.flatnonzero(weak_mask(data))
    if not idx.size:
        raise PreconditionError("weak Pareto cloud is empty")
    W, FW = data.points[idx], data.F[idx]
    norms = np.linalg.norm(data.points, axis=1)
    out = []
    for R in R_list:
        far = np.flatnonzero(norms > R)
        if not far.size:
            raise NoFarSamplesError(f"no far samples: every grid point lies inside the ball of radius {R}")
        P, FP = data.points[far], data.F[far]
        dx = dists_to_cloud(P, W)
        df = dists_to_cloud(FP, FW)
        psi = psi_values(FP, data.F)
        pos = dx > 0
        ratio = np.where(pos, df / np.where(pos, dx, 1.0), np.inf)
        k = int(np.argmin(ratio))
        c_hat = float(ratio[k]) if np.isfinite(ratio[k]) else float("inf")
        c1 = float(np.min(psi / norms[far]))
        out.append(SharpCertificate(float(R), c_hat, P[k], int(far.size), c1,
                                    float(np.min(df - psi)), float(np.min(norms[far] - 0.5 * dx))))
    return out


# -- scalarization inclusion --------------------------------------------------

@dataclass
class InclusionReport:
    weights: int
    escaped: int
    weak_violations: list
    pareto_violations: list

    @property
    def ok(self) -> bool:
        return not self.weak_violations and not self.pareto_violations

    def to_json(self) -> dict:
        return {"weights": self.weights, "escaped": self.escaped,
                "weak_violations": len(self.weak_violations), "pareto_violations": len(self.pareto_violations)}


def scalarization_inclusion(f: VectorObjective, X: PolyUnion, g: GridSpec, r: int = 20,
                            data: GridData | None = None) -> InclusionReport:
    """Every non-escaped S(lam) point must be weakly Pareto, and Pareto when lam is interior."""
    data = data if data is not None else discretize(f, X, g)
    weak, strong = weak_mask(data), pareto_mask(data)
    S = SimplexGrid(f.m, r)
    escaped = 0
    wv, pv = [], []
    for lam, interior in zip(S.points, S.interior):
        sol = solve_scalar(scalarize(f, lam), X, g, data)
        if sol.escape:
            escaped += 1
            continue
        for k in sol.indices:
            if not weak[k]:
                wv.append((lam.tolist(), data.points[k].tolist()))
            if interior and not strong[k]:
                pv.append((lam.tolist(), data.points[k].tolist()))
    return InclusionReport(len(S.points), escaped, wv, pv)
