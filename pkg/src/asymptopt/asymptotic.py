"""Asymptotic functions (plain, q and lambda variants), the cones K and K_q,
and sampled checks of the coercivity conditions."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .expr import AFFINE, CONVEX_QUADRATIC, Expr, PerturbationMatrix, VectorObjective, classify, \
    perturb, quadratic_form
from .geometry import Box, ConeRep, GridSpec, PolyUnion, asymptotic_cone, grid_points, lattice, sphere_sample

INF = float("inf")


class AsymError(ValueError):
    pass


class NoThresholdError(AsymError):
    pass


@dataclass(frozen=True)
class AsymConfig:
    t_max: float = 1e6
    t_points: int = 60
    dir_jitter: int = 8
    jitter_radius: float = 1e-3
    probe_radius: float = 100.0
    probe_box: float = 10.0
    probe_cap: int = 4096
    zero_tol: float = 1e-6
    inf_threshold: float = 1e9
    directions: int = 256
    q_t_min: float = 1e-20
    q_t_points: int = 53
    seed: int = 0

    def __post_init__(self):
        if not self.t_max > 1:
            raise AsymError("t_max must exceed 1")
        if not self.zero_tol > 0:
            raise AsymError("zero_tol must be positive")
        if not self.inf_threshold > 10 * self.t_max:
            raise AsymError("inf_threshold must be much larger than t_max")

    @property
    def t_grid(self) -> np.ndarray:
        return np.logspace(0.0, np.log10(self.t_max), self.t_points)

    @property
    def q_t_grid(self) -> np.ndarray:
        return np.logspace(np.log10(self.q_t_min), np.log10(self.t_max), self.q_t_points)

    @classmethod
    def from_dict(cls, d: dict | None) -> "AsymConfig":
        d = dict(d or {})
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise AsymError(f"unknown asym config keys: {sorted(unknown)}")
        return cls(**known)


def _unit(d) -> tuple[np.ndarray, float]:
    d = np.asarray(d, dtype=float).reshape(-1)
    nd = float(np.linalg.norm(d))
    if nd == 0 or not np.isfinite(nd):
        raise AsymError("direction must be nonzero")
    return d, nd


def _convex_fast(e: Expr, d: np.ndarray):
    """phi^inf(d) for affine / convex quadratic e, or None if no fast path."""
    if classify(e) not in (AFFINE, CONVEX_QUADRATIC):
        return None
    Q, c, _ = quadratic_form(e)
    Qd = Q @ d
    if np.linalg.norm(Qd) > 1e-12 * (1.0 + np.abs(Q).max()) * np.linalg.norm(d):
        return INF
    return float(c @ d)


def _jitters(n: int, cfg: AsymConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    delta = rng.standard_normal((cfg.dir_jitter, n))
    delta /= np.linalg.norm(delta, axis=1, keepdims=True)
    return np.vstack([np.zeros((1, n)), delta])


def _tail_limit(t: np.ndarray, r: np.ndarray, M: float) -> float:
    """Limit estimate of r(t) as t grows, from the tail half of the grid."""
    tail = r[len(r) // 2:]
    tt = t[len(t) // 2:]
    if np.any(np.isposinf(tail)):
        # leaving the domain at arbitrarily large t: only +inf if it persists
        if np.isposinf(tail[-1]):
            return INF
        tail, tt = tail[np.isfinite(tail)], tt[np.isfinite(tail)]
    if np.any(np.isneginf(tail)):
        return -INF
    if tail.size < 4:
        return float(np.min(tail)) if tail.size else INF
    if np.max(np.abs(tail)) > M:
        return INF if tail[-1] > 0 else -INF
    seg = tail[-12:]
    diffs = np.diff(seg)
    mono = np.all(diffs >= 0) or np.all(diffs <= 0)
    if mono and seg[-1] != 0 and seg[0] != 0 and np.sign(seg[-1]) == np.sign(seg[0]):
        slope = (np.log(abs(seg[-1])) - np.log(abs(seg[0]))) / (np.log(tt[-1]) - np.log(tt[-len(seg)]))
        if slope >= 0.1 and abs(seg[-1]) > abs(seg[0]):
            return INF if seg[-1] > 0 else -INF
    d1, d2 = tail[-2] - tail[-3], tail[-1] - tail[-2]
    d0 = tail[-3] - tail[-4]
    if d1 != 0 and d0 != 0 and d2 * d1 > 0 and d1 * d0 > 0:
        q1, q2 = d2 / d1, d1 / d0
        if 0 < q1 < 1 and abs(q1 - q2) <= 0.1 * q2:
            # geometric-rate convergence: Aitken extrapolation of the limit
            return float(tail[-1] - d2 * d2 / (d2 - d1))
    return float(np.min(tail))


def asym_value(e: Expr, d, cfg: AsymConfig | None = None, numeric: bool = False) -> float:
    """phi^inf(d): analytic for affine/convex quadratic, numeric liminf otherwise."""
    cfg = cfg or AsymConfig()
    d, nd = _unit(d)
    if d.shape[0] != e.dim:
        raise AsymError(f"direction has dimension {d.shape[0]}, expected {e.dim}")
    if not numeric:
        v = _convex_fast(e, d)
        if v is not None:
            return v
    t = cfg.t_grid
    J = _jitters(e.dim, cfg)
    scale = cfg.jitter_radius * nd / np.sqrt(t)
    best = INF
    for delta in J:
        dk = d[None, :] + scale[:, None] * delta[None, :]
        r = e.eval_many(t[:, None] * dk) / t
        best = min(best, _tail_limit(t, r, cfg.inf_threshold))
    return best


def convex_sup_value(e: Expr, d, x0, cfg: AsymConfig | None = None) -> float:
    """sup over t of (phi(x0 + td) - phi(x0))/t, the convex-case formula for
    phi^inf(d) evaluated from the base point x0 (values above M become +inf)."""
    cfg = cfg or AsymConfig()
    d, _ = _unit(d)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    base = float(e.eval_many(x0[None, :])[0])
    if not np.isfinite(base):
        raise AsymError("base point outside the domain")
    t = cfg.t_grid
    r = (e.eval_many(x0[None, :] + t[:, None] * d[None, :]) - base) / t
    # the quotient is nondecreasing in t for convex phi, so its limit is the sup
    return _tail_limit(t, r, cfg.inf_threshold)


def _sphere_dirs(n: int, count: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    base = [s * np.eye(n)[j] for j in range(n) for s in (1.0, -1.0)]
    pts = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    g = _normal.ppf(np.clip(pts, 1e-9, 1 - 1e-9))
    g = g[np.linalg.norm(g, axis=1) > 1e-9]
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    out = np.vstack([np.array(base), g])[:max(count, 2 * n)]
    return out + 0.0


def probe_points(n: int, cfg: AsymConfig, X: PolyUnion | None = None) -> np.ndarray:
    """Base points for the q and lambda variants.

    A lattice of [-probe_box, probe_box]^n whose step is 1/k (so rational
    constraint data is hit exactly), intersected with X when given, and kept
    inside the ball of radius probe_radius. Always contains the origin when
    the origin is feasible.
    """
    per_axis = cfg.probe_cap ** (1.0 / n)
    k = max(1, int(np.floor((per_axis - 1) / (2 * cfg.probe_box))))
    h = 1.0 / k
    box = Box(-cfg.probe_box * np.ones(n), cfg.probe_box * np.ones(n))
    if X is None:
        pts = lattice(box, h)
    else:
        pts = grid_points(X, GridSpec(box, h)).points
    return pts[np.linalg.norm(pts, axis=1) <= cfg.probe_radius]


def _quotient_sup(e: Expr, probes: np.ndarray, d: np.ndarray, t: np.ndarray, base: np.ndarray,
                  M: float) -> float:
    """sup over probes, t of (e(x + t d) - base(x)) / t with rounding guards.

    Quotients whose numerator is below 1e-6 (relative) carry rounding noise
    of order eps / t, so they only count when they blow past M (a genuine
    infinite slope such as sqrt|x| at 0, seen with a 1e-12 guard). The finite
    value comes from the well-conditioned quotients.
    """
    best = best_loose = -INF
    any_valid = any_loose = False
    for chunk in np.array_split(np.arange(probes.shape[0]), max(1, probes.shape[0] // 512)):
        P = probes[chunk]
        pts = P[:, None, :] + t[None, :, None] * d[None, None, :]
        vals = e.eval_many(pts.reshape(-1, e.dim)).reshape(len(chunk), len(t))
        num = vals - base[chunk][:, None]
        if np.any(np.isposinf(num)):
            return INF
        scale = (1.0 + np.abs(base[chunk]))[:, None]
        loose = np.abs(num) >= 1e-12 * scale
        if not np.any(loose):
            continue
        any_loose = True
        best_loose = max(best_loose, float(np.max(np.where(loose, num / t[None, :], -INF))))
        if best_loose > M:
            return INF
        guard = np.abs(num) >= 1e-6 * scale
        if not np.any(guard):
            continue
        any_valid = True
        q = np.where(guard, num / t[None, :], -INF)
        best = max(best, float(np.max(q)))
        # a sup reached at the largest t may still be growing without bound
        row = int(np.argmax(q[:, -1]))
        ok = guard[row]
        if q[row, -1] >= best and ok[-1] and ok.sum() >= 8 and _tail_limit(t[ok], q[row, ok], M) == INF:
            return INF
        if best > M:
            return INF
    if any_valid:
        return best
    # nearly constant along d: fall back to the loose quotients, else 0
    return best_loose if any_loose else 0.0


def q_asym_value(e: Expr, d, cfg: AsymConfig | None = None, restrict_to: PolyUnion | None = None,
                 probes: np.ndarray | None = None, numeric: bool = False) -> float:
    """phi_q^inf(d) = sup_x sup_t (phi(x+td) - phi(x))/t over probe points.

    A lower estimate of the true sup (finitely many base points). Convex
    expressions use the closed form, since phi_q^inf = phi^inf there.
    With ``restrict_to`` the indicator of X is added: +inf off X^inf.
    """
    cfg = cfg or AsymConfig()
    d, _ = _unit(d)
    if restrict_to is not None:
        if not asymptotic_cone(restrict_to).contains(d):
            return INF
    if not numeric:
        v = _convex_fast(e, d)
        if v is not None:
            return v
    if probes is None:
        probes = probe_points(e.dim, cfg, restrict_to)
    base = e.eval_many(probes)
    keep = np.isfinite(base)
    probes, base = probes[keep], base[keep]
    if not probes.shape[0]:
        raise AsymError("no probe point lies in the domain")
    return _quotient_sup(e, probes, d, cfg.q_t_grid, base, cfg.inf_threshold)


def lambda_asym_value(e: Expr, level: float, d, cfg: AsymConfig | None = None,
                      probes: np.ndarray | None = None) -> float:
    """f_lambda^inf(d) = sup over the level set lev(e, level) and t of (e(x+td) - level)/t."""
    cfg = cfg or AsymConfig()
    d, _ = _unit(d)
    if probes is None:
        probes = probe_points(e.dim, cfg)
    vals = e.eval_many(probes)
    inside = vals <= level + cfg.zero_tol
    if not np.any(inside):
        raise AsymError("level set not sampled")
    # points within zero_tol above the level are compared against their own value
    base = np.maximum(vals[inside], level)
    return _quotient_sup(e, probes[inside], d, cfg.q_t_grid, base, cfg.inf_threshold)


@dataclass(frozen=True, eq=False)
class KCone:
    """{d : value(d) <= zero_tol} for a chosen asymptotic variant."""

    base: Expr
    variant: str = "plain"
    level: float | None = None
    X: PolyUnion | None = None
    config: AsymConfig = field(default_factory=AsymConfig)

    def __post_init__(self):
        if self.variant not in ("plain", "q", "q_restricted", "lambda"):
            raise AsymError(f"unknown variant {self.variant!r}")
        if self.variant == "lambda" and self.level is None:
            raise AsymError("lambda variant needs a level")
        if self.variant == "q_restricted" and self.X is None:
            raise AsymError("restricted variant needs X")

    def value(self, d) -> float:
        d, nd = _unit(d)
        u = d / nd
        if self.variant == "plain":
            return asym_value(self.base, u, self.config)
        if self.variant == "q":
            return q_asym_value(self.base, u, self.config)
        if self.variant == "q_restricted":
            return q_asym_value(self.base, u, self.config, restrict_to=self.X)
        return lambda_asym_value(self.base, self.level, u, self.config)

    def membership(self, d) -> tuple[bool, float]:
        v = self.value(d)
        return bool(v <= self.config.zero_tol), v

    def as_cone_rep(self) -> ConeRep:
        n = self.base.dim
        return ConeRep.predicate(n, lambda d: self.membership(d)[0],
                                 lambda count: [v for v in _sphere_dirs(n, count) if self.membership(v)[0]])


def k_cone(e: Expr, variant: str = "plain", cfg: AsymConfig | None = None, level=None, X=None) -> KCone:
    return KCone(e, variant, level, X, cfg or AsymConfig())


def in_k_cone(k: KCone, d) -> tuple[bool, float]:
    return k.membership(d)


# -- conditions ---------------------------------------------------------------

@dataclass
class ConditionVerdict:
    holds: bool
    variant: str
    direction: np.ndarray | None = None
    index: int | None = None  # 1-based objective index of the witness
    margin: float | None = None
    directions_checked: int = 0
    sampled: bool = True
    intersection: bool = False

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "variant": self.variant,
            "kind": "intersection" if self.intersection else "union",
            "verdict": "sampled verdict",
            "directions_checked": self.directions_checked,
            "witness": None if self.holds else {
                "direction": [float(v) for v in self.direction],
                "index": self.index,
                "margin": _json_float(self.margin),
            },
        }


def _json_float(v):
    if v is None:
        return None
    if np.isposinf(v):
        return "inf"
    if np.isneginf(v):
        return "-inf"
    return float(v)


def value_fn(variant: str, cfg: AsymConfig, X: PolyUnion | None = None):
    if variant == "plain":
        return lambda e, d: asym_value(e, d, cfg)
    if variant == "q":
        cache = {}

        def q(e, d):
            if id(e) not in cache:
                cache[id(e)] = probe_points(e.dim, cfg, X)
            return q_asym_value(e, d, cfg, probes=cache[id(e)])
        return q
    raise AsymError(f"unknown condition variant {variant!r}")


def condition_directions(X: PolyUnion, cfg: AsymConfig) -> np.ndarray:
    return sphere_sample(asymptotic_cone(X), cfg.directions)


def value_table(X: PolyUnion, f: VectorObjective, variant: str = "plain", cfg: AsymConfig | None = None,
                dirs: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Directions of X^inf and the (n_dirs, m) table of asymptotic values."""
    cfg = cfg or AsymConfig()
    if dirs is None:
        dirs = condition_directions(X, cfg)
    val = value_fn(variant, cfg, X)
    V = np.array([[val(e, d) for e in f.components] for d in dirs]).reshape(len(dirs), f.m)
    return dirs, V


def check_condition(X: PolyUnion, f: VectorObjective, variant: str = "plain", u=None,
                    cfg: AsymConfig | None = None, use_identity: bool = True) -> ConditionVerdict:
    """Sampled check of X^inf ∩ (union of K(f_i)) = {0}.

    The first sampled direction (in sampling order, then objective order) with
    value <= zero_tol is returned as the witness. With ``u`` the objectives are
    perturbed, by default through (f_i - <u_i,.>)^inf = f_i^inf - <u_i,.>.
    """
    cfg = cfg or AsymConfig()
    dirs = condition_directions(X, cfg)
    if not len(dirs):
        return ConditionVerdict(True, variant, directions_checked=0)
    U = None if u is None else (u if isinstance(u, PerturbationMatrix) else PerturbationMatrix(u)).rows
    if U is not None and not use_identity:
        f = f.perturbed(U)
        U = None
    _, V = value_table(X, f, variant, cfg, dirs)
    if U is not None:
        V = V - dirs @ U.T
    return _first_violation(dirs, V, variant, cfg.zero_tol, intersection=False)


def _first_violation(dirs, V, variant, tol, intersection):
    bad = V <= tol
    rows = np.all(bad, axis=1) if intersection else np.any(bad, axis=1)
    if not np.any(rows):
        return ConditionVerdict(True, variant, directions_checked=len(dirs), intersection=intersection)
    k = int(np.argmax(rows))
    i = int(np.argmax(bad[k]))
    margin = float(np.max(V[k])) if intersection else float(V[k, i])
    return ConditionVerdict(False, variant, dirs[k], i + 1, margin, len(dirs), intersection=intersection)


def check_intersection_condition_q(X: PolyUnion, f: VectorObjective, cfg: AsymConfig | None = None) -> ConditionVerdict:
    """Sampled check of X^inf ∩ (intersection of K_q(f_i)) = {0}."""
    cfg = cfg or AsymConfig()
    dirs = condition_directions(X, cfg)
    if not len(dirs):
        return ConditionVerdict(True, "q", directions_checked=0, intersection=True)
    _, V = value_table(X, f, "q", cfg, dirs)
    return _first_violation(dirs, V, "q", cfg.zero_tol, intersection=True)


def _deviation(a: float, b: float) -> float:
    if np.isinf(a) or np.isinf(b):
        return 0.0 if a == b else INF
    return abs(a - b)


def verify_perturbation_identity(e: Expr, u_i, sample_dirs, cfg: AsymConfig | None = None,
                                 variant: str = "plain") -> float:
    """Worst |value(e - <u,.>)(d) - (value(e)(d) - <u,d>)| over the directions."""
    cfg = cfg or AsymConfig()
    u_i = np.asarray(u_i, dtype=float).reshape(-1)
    pe = perturb(e, u_i)
    val = value_fn(variant, cfg)
    worst = 0.0
    for d in np.atleast_2d(np.asarray(sample_dirs, dtype=float)):
        lhs = val(pe, d)
        rhs = val(e, d) - float(u_i @ d)
        worst = max(worst, _deviation(lhs, rhs))
    return worst


# -- perturbation families ----------------------------------------------------

def sign_patterns(m: int) -> list[tuple[int, ...]]:
    """Nonzero sign patterns: all +, all -, single +/- e_i, then the rest."""
    out = [(1,) * m, (-1,) * m]
    for i in range(m):
        for s in (1, -1):
            p = tuple(s if j == i else 0 for j in range(m))
            if p not in out:
                out.append(p)
    for p in itertools.product((-1, 0, 1), repeat=m):
        if any(p) and p not in out:
            out.append(p)
    return out


def base_vectors(X: PolyUnion) -> np.ndarray:
    """X^inf spanning directions followed by coordinate axes, unique up to sign."""
    n = X.dim
    cand = list(asymptotic_cone(X).generators) + list(np.eye(n))
    out: list[np.ndarray] = []
    for v in cand:
        if not any(np.allclose(v, w, atol=1e-9) or np.allclose(v, -w, atol=1e-9) for w in out):
            out.append(np.asarray(v, dtype=float))
    return np.array(out)


def direction_matrices(X: PolyUnion, m: int) -> list[np.ndarray]:
    """Unit-norm (max-of-rows) perturbation matrices: row i = s_i * v."""
    V = base_vectors(X)
    mats = []
    for p in sign_patterns(m):
        for v in V:
            mats.append(np.array([s * v for s in p], dtype=float) + 0.0)
    return mats


@dataclass
class ThresholdEstimate:
    epsilon: float
    capped: bool
    tested: int
    note: str = "sampled lower estimate"

    def to_json(self) -> dict:
        return {"epsilon": self.epsilon, "capped": self.capped, "tested": self.tested, "note": self.note}


def epsilon_threshold(X: PolyUnion, f: VectorObjective, variant: str = "plain", cfg: AsymConfig | None = None,
                      r_max: float = 2.0, iterations: int = 30) -> ThresholdEstimate:
    """Largest r (by bisection) such that the condition holds for every test
    perturbation of norm r. Test set: every row equal to +/- r times an X^inf
    direction (all rows aligned), plus the mixed-sign direction matrices."""
    cfg = cfg or AsymConfig()
    dirs, V = value_table(X, f, variant, cfg)
    if not len(dirs):
        return ThresholdEstimate(r_max, True, 0, "X is bounded: condition holds for every u")
    if np.any(V <= cfg.zero_tol):
        raise NoThresholdError("no threshold: the condition fails at u = 0")
    mats = []
    for v in dirs:
        for s in (1.0, -1.0):
            mats.append(np.tile(s * v, (f.m, 1)))
    mats.extend(direction_matrices(X, f.m))

    def holds(r: float) -> bool:
        for U in mats:
            if np.any(V - r * (dirs @ U.T) <= cfg.zero_tol):
                return False
        return True

    if holds(r_max):
        return ThresholdEstimate(r_max, True, len(mats))
    lo, hi = 0.0, r_max
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return ThresholdEstimate(lo, False, len(mats))
