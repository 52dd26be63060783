"""Scalar objective expressions over R^n with values in R U {+inf}.

Expressions are small immutable trees. Every node evaluates on a batch of
points (shape ``(N, n)``) and returns a float array; ``+inf`` marks points
outside the domain. ``-inf`` can never be produced, so every expression is
proper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

AFFINE = "affine"
CONVEX_QUADRATIC = "convex-quadratic"
CONVEX = "convex"
GENERAL = "general"

_PSD_TOL = 1e-12


class ExprError(ValueError):
    """Malformed expression or bad input to an expression operation."""


class DimensionError(ExprError):
    pass


class ImproperExpressionError(ExprError):
    """The expression could take the value -inf."""


def _vec(v, name="vector") -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        raise ExprError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(a)):
        raise ExprError(f"{name} must be finite")
    a = a.copy()
    a.flags.writeable = False
    return a


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim < 2
    pts = pts.reshape(1, -1) if single else pts
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DimensionError(f"point dimension {pts.shape[-1]} != expression dimension {dim}")
    return pts, single


class Expr:
    """Base class for expression nodes."""

    dim: int

    def _eval(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_many(self, pts) -> np.ndarray:
        """Evaluate on an ``(N, n)`` array of points."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionError(f"expected points of shape (N, {self.dim}), got {pts.shape}")
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.asarray(self._eval(pts), dtype=float)
        # overflow of opposite-signed terms is the only way to get nan
        vals = np.where(np.isnan(vals), np.inf, vals)
        return vals

    def __call__(self, x):
        return evaluate(self, x)

    def may_be_infinite(self) -> bool:
        return any(c.may_be_infinite() for c in self.children())

    def children(self) -> tuple["Expr", ...]:
        return ()

    def to_json(self) -> dict:
        raise NotImplementedError

    def __add__(self, other: "Expr") -> "Expr":
        return Sum((self, other))

    def __rmul__(self, k: float) -> "Expr":
        return Scale(float(k), self)


@dataclass(frozen=True, eq=False)
class Const(Expr):
    dim: int
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ExprError("constants must be finite")

    def _eval(self, pts):
        return np.full(pts.shape[0], float(self.value))

    def to_json(self):
        return {"op": "const", "value": self.value}


@dataclass(frozen=True, eq=False)
class Coord(Expr):
    dim: int
    index: int

    def __post_init__(self):
        if not 0 <= self.index < self.dim:
            raise DimensionError(f"coordinate index {self.index} out of range for n={self.dim}")

    def _eval(self, pts):
        return pts[:, self.index].copy()

    def to_json(self):
        return {"op": "coord", "index": self.index}


@dataclass(frozen=True, eq=False)
class Affine(Expr):
    a: np.ndarray
    b: float = 0.0
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "a"))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", self.a.shape[0])

    def _eval(self, pts):
        return pts @ self.a + self.b

    def to_json(self):
        return {"op": "affine", "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Quadratic(Expr):
    """0.5 <x, Qx> + <c, x> + b."""

    Q: np.ndarray
    c: np.ndarray
    b: float = 0.0
    dim: int = field(init=False)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        c = _vec(self.c, "c")
        if Q.shape != (c.shape[0], c.shape[0]):
            raise DimensionError(f"Q has shape {Q.shape} but c has length {c.shape[0]}")
        if not np.all(np.isfinite(Q)):
            raise ExprError("Q must be finite")
        Q = 0.5 * (Q + Q.T)
        Q.flags.writeable = False
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "dim", c.shape[0])

    def _eval(self, pts):
        return 0.5 * np.einsum("ij,jk,ik->i", pts, self.Q, pts) + pts @ self.c + self.b

    def to_json(self):
        return {"op": "quad", "Q": self.Q.tolist(), "c": self.c.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class AbsPower(Expr):
    """|arg|^p for a positive rational p."""

    arg: Expr
    p: Fraction
    dim: int = field(init=False)

    def __post_init__(self):
        p = self.p if isinstance(self.p, Fraction) else _parse_p(self.p)
        if p <= 0:
            raise ExprError("power exponent must be positive")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "dim", self.arg.dim)

    def children(self):
        return (self.arg,)

    def _eval(self, pts):
        return np.power(np.abs(self.arg._eval(pts)), float(self.p))

    def to_json(self):
        p = self.p
        return {"op": "pow", "arg": self.arg.to_json(),
                "p": int(p) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"}


@dataclass(frozen=True, eq=False)
class Abs(Expr):
    arg: Expr
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.arg.dim)

    def children(self):
        return (self.arg,)

    def _eval(self, pts):
        return np.abs(self.arg._eval(pts))

    def to_json(self):
        return {"op": "abs", "arg": self.arg.to_json()}


def _common_dim(args: Sequence[Expr]) -> int:
    if not args:
        raise ExprError("expression list must be nonempty")
    dims = {a.dim for a in args}
    if len(dims) != 1:
        raise DimensionError(f"mixed dimensions {sorted(dims)}")
    return dims.pop()


@dataclass(frozen=True, eq=False)
class Sum(Expr):
    terms: tuple[Expr, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "dim", _common_dim(self.terms))

    def children(self):
        return self.terms

    def _eval(self, pts):
        out = self.terms[0]._eval(pts)
        for t in self.terms[1:]:
            out = out + t._eval(pts)
        return out

    def to_json(self):
        return {"op": "sum", "terms": [t.to_json() for t in self.terms]}


@dataclass(frozen=True, eq=False)
class Scale(Expr):
    k: float
    arg: Expr
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "k", float(self.k))
        if not math.isfinite(self.k):
            raise ExprError("scale factor must be finite")
        if self.k <= 0 and self.arg.may_be_infinite():
            raise ImproperExpressionError(
                "non-positive multiple of a function taking +inf is not proper")
        object.__setattr__(self, "dim", self.arg.dim)

    def children(self):
        return (self.arg,)

    def _eval(self, pts):
        return self.k * self.arg._eval(pts)

    def to_json(self):
        return {"op": "scale", "k": self.k, "arg": self.arg.to_json()}


@dataclass(frozen=True, eq=False)
class Min(Expr):
    args: tuple[Expr, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "dim", _common_dim(self.args))

    def children(self):
        return self.args

    def may_be_infinite(self):
        return all(a.may_be_infinite() for a in self.args)

    def _eval(self, pts):
        return np.min(np.stack([a._eval(pts) for a in self.args]), axis=0)

    def to_json(self):
        return {"op": "min", "args": [a.to_json() for a in self.args]}


@dataclass(frozen=True, eq=False)
class Max(Expr):
    args: tuple[Expr, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        object.__setattr__(self, "dim", _common_dim(self.args))

    def children(self):
        return self.args

    def _eval(self, pts):
        return np.max(np.stack([a._eval(pts) for a in self.args]), axis=0)

    def to_json(self):
        return {"op": "max", "args": [a.to_json() for a in self.args]}


@dataclass(frozen=True, eq=False)
class Indicator(Expr):
    """0 on {Ax <= b, Ex = d}, +inf elsewhere (tolerance 1e-9)."""

    A: np.ndarray
    b: np.ndarray
    E: np.ndarray | None = None
    d: np.ndarray | None = None
    dim: int = field(init=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionError("indicator: A and b disagree")
        n = A.shape[1]
        E = np.zeros((0, n)) if self.E is None else np.atleast_2d(np.asarray(self.E, dtype=float))
        d = np.zeros(0) if self.d is None else np.asarray(self.d, dtype=float).reshape(-1)
        if E.size and (E.shape[1] != n or E.shape[0] != d.shape[0]):
            raise DimensionError("indicator: E and d disagree")
        E = E.reshape(-1, n)
        for name, arr in (("A", A), ("b", b), ("E", E), ("d", d)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "dim", n)

    def may_be_infinite(self):
        return True

    def _eval(self, pts):
        ok = np.all(pts @ self.A.T <= self.b + 1e-9, axis=1)
        if self.E.shape[0]:
            ok &= np.all(np.abs(pts @ self.E.T - self.d) <= 1e-9, axis=1)
        return np.where(ok, 0.0, np.inf)

    def to_json(self):
        out = {"op": "indicator", "A": self.A.tolist(), "b": self.b.tolist()}
        if self.E.shape[0]:
            out["E"] = self.E.tolist()
            out["d"] = self.d.tolist()
        return out


@dataclass(frozen=True, eq=False)
class Perturbed(Expr):
    """arg(x) - <u, x>."""

    arg: Expr
    u: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        u = _vec(self.u, "u")
        if u.shape[0] != self.arg.dim:
            raise DimensionError(f"perturbation has length {u.shape[0]}, expected {self.arg.dim}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "dim", self.arg.dim)

    def children(self):
        return (self.arg,)

    def _eval(self, pts):
        return self.arg._eval(pts) - pts @ self.u

    def to_json(self):
        return {"op": "perturb", "arg": self.arg.to_json(), "u": self.u.tolist()}


# -- construction helpers ---------------------------------------------------

def const(value: float, dim: int) -> Const:
    return Const(dim, float(value))


def coord(index: int, dim: int) -> Coord:
    return Coord(dim, index)


def affine(a, b: float = 0.0) -> Affine:
    return Affine(a, b)


def quad(Q, c=None, b: float = 0.0) -> Quadratic:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if c is None:
        c = np.zeros(Q.shape[0])
    return Quadratic(Q, c, b)


def abs_pow(arg: Expr, p) -> AbsPower:
    return AbsPower(arg, _parse_p(p))


def sqrt_abs(dim: int = 1, index: int = 0) -> AbsPower:
    return AbsPower(Coord(dim, index), Fraction(1, 2))


# -- operations ---------------------------------------------------------------

def evaluate(e: Expr, x) -> float | np.ndarray:
    """Evaluate ``e`` at one point (returns float) or a batch (returns array)."""
    pts, single = _as_points(x, e.dim)
    vals = e.eval_many(pts)
    return float(vals[0]) if single else vals


def dot(u, x) -> float:
    """Inner product used for perturbation bookkeeping."""
    return float(np.asarray(x, dtype=float) @ np.asarray(u, dtype=float))


def perturb(e: Expr, u) -> Expr:
    """Return the expression x -> e(x) - <u, x>."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != e.dim:
        raise DimensionError(f"perturbation has length {u.shape[0]}, expected {e.dim}")
    return Perturbed(e, u)


def quadratic_form(e: Expr) -> tuple[np.ndarray, np.ndarray, float] | None:
    """Collapse ``e`` to (Q, c, b) with e(x) = 0.5 x'Qx + c'x + b, if possible."""
    n = e.dim
    if isinstance(e, Const):
        return np.zeros((n, n)), np.zeros(n), e.value
    if isinstance(e, Coord):
        c = np.zeros(n)
        c[e.index] = 1.0
        return np.zeros((n, n)), c, 0.0
    if isinstance(e, Affine):
        return np.zeros((n, n)), e.a.copy(), e.b
    if isinstance(e, Quadratic):
        return e.Q.copy(), e.c.copy(), e.b
    if isinstance(e, Scale):
        inner = quadratic_form(e.arg)
        if inner is None:
            return None
        Q, c, b = inner
        return e.k * Q, e.k * c, e.k * b
    if isinstance(e, Sum):
        Q, c, b = np.zeros((n, n)), np.zeros(n), 0.0
        for t in e.terms:
            part = quadratic_form(t)
            if part is None:
                return None
            Q, c, b = Q + part[0], c + part[1], b + part[2]
        return Q, c, b
    if isinstance(e, Perturbed):
        inner = quadratic_form(e.arg)
        if inner is None:
            return None
        Q, c, b = inner
        return Q, c - e.u, b
    return None


def _is_psd(Q: np.ndarray) -> bool:
    if not Q.size:
        return True
    w = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    return bool(w.min() >= -_PSD_TOL * max(1.0, np.abs(w).max()))


def _is_convex(e: Expr) -> bool:
    qf = quadratic_form(e)
    if qf is not None:
        return _is_psd(qf[0])
    if isinstance(e, Indicator):
        return True
    if isinstance(e, (Sum, Max)):
        return all(_is_convex(c) for c in e.children())
    if isinstance(e, Min):
        return len(e.args) == 1 and _is_convex(e.args[0])
    if isinstance(e, Scale):
        return e.k >= 0 and _is_convex(e.arg)
    if isinstance(e, Perturbed):
        return _is_convex(e.arg)
    if isinstance(e, Abs):
        return quadratic_form(e.arg) is not None and not np.any(quadratic_form(e.arg)[0])
    if isinstance(e, AbsPower):
        inner = quadratic_form(e.arg)
        return e.p >= 1 and inner is not None and not np.any(inner[0])
    return False


def classify(e: Expr) -> str:
    """Conservative structural class: affine, convex-quadratic, convex or general."""
    qf = quadratic_form(e)
    if qf is not None:
        Q = qf[0]
        if not np.any(Q):
            return AFFINE
        return CONVEX_QUADRATIC if _is_psd(Q) else GENERAL
    return CONVEX if _is_convex(e) else GENERAL


# -- vector objectives and perturbations ---------------------------------------

@dataclass(frozen=True)
class VectorObjective:
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ExprError("a vector objective needs at least one component")
        _common_dim(comps)
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def __getitem__(self, i: int) -> Expr:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def values(self, pts) -> np.ndarray:
        """Objective values, shape ``(N, m)``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.column_stack([c.eval_many(pts) for c in self.components])

    def perturbed(self, u: "PerturbationMatrix | np.ndarray | None") -> "VectorObjective":
        if u is None:
            return self
        rows = u.rows if isinstance(u, PerturbationMatrix) else np.asarray(u, dtype=float).reshape(self.m, self.dim)
        return VectorObjective(tuple(perturb(c, r) for c, r in zip(self.components, rows)))


@dataclass(frozen=True)
class PerturbationMatrix:
    """Rows u_1..u_m; the norm is the max of the rows' Euclidean norms."""

    rows: np.ndarray

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.rows, dtype=float)).copy()
        r.flags.writeable = False
        object.__setattr__(self, "rows", r)

    @classmethod
    def zeros(cls, m: int, n: int) -> "PerturbationMatrix":
        return cls(np.zeros((m, n)))

    @property
    def norm(self) -> float:
        return float(np.max(np.linalg.norm(self.rows, axis=1)))

    def tolist(self):
        return self.rows.tolist()


# -- sampled quasiconvexity checks ---------------------------------------------

@dataclass(frozen=True)
class QuasiconvexWitness:
    x: np.ndarray
    y: np.ndarray
    lam: float
    margin: float


@dataclass(frozen=True)
class QCVerdict:
    passed: bool
    witness: QuasiconvexWitness | None = None
    u: np.ndarray | None = None
    index: int | None = None
    samples: int = 0


def _box_arrays(region, dim: int) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(region, "lo"):
        lo, hi = region.lo, region.hi
    else:
        bounds = np.asarray(region, dtype=float).reshape(-1, 2)
        lo, hi = bounds[:, 0], bounds[:, 1]
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    if np.any(hi < lo):
        raise ExprError("empty region")
    return lo, hi


def quasiconvex_sample_check(e: Expr, region, samples: int = 10_000, seed: int = 0) -> QCVerdict:
    """Search for (x, y, lam) with e(lam x + (1-lam) y) > max(e(x), e(y)).

    ``region`` is a Box or an ``(n, 2)`` array of bounds. A pass only means no
    counterexample was drawn.
    """
    if samples < 1:
        raise ExprError("samples must be >= 1")
    lo, hi = _box_arrays(region, e.dim)
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=(samples, e.dim))
    y = rng.uniform(lo, hi, size=(samples, e.dim))
    lam = rng.uniform(0.0, 1.0, size=samples)
    z = lam[:, None] * x + (1.0 - lam[:, None]) * y
    fx, fy, fz = e.eval_many(x), e.eval_many(y), e.eval_many(z)
    top = np.maximum(fx, fy)
    finite = np.isfinite(top)
    with np.errstate(invalid="ignore"):
        margin = np.where(finite, fz - top, -np.inf)
    tol = 1e-9 * (1.0 + np.abs(np.where(finite, top, 0.0)))
    bad = margin > tol
    if not np.any(bad):
        return QCVerdict(True, samples=samples)
    k = int(np.argmax(np.where(bad, margin, -np.inf)))
    return QCVerdict(False, QuasiconvexWitness(x[k], y[k], float(lam[k]), float(margin[k])), samples=samples)


def robust_quasiconvex_sample_check(f: VectorObjective, alpha: float, region, u_samples: int = 32,
                                    triple_samples: int = 10_000, seed: int = 0) -> QCVerdict:
    """Sampled check that x -> f_i(x) + <u_i, x> stays quasiconvex for ||u|| < alpha.

    alpha = 0 tests only u = 0.
    """
    if alpha < 0:
        raise ExprError("alpha must be nonnegative")
    m, n = f.m, f.dim
    rng = np.random.default_rng(seed)
    draws = [np.zeros((m, n))]
    if alpha > 0:
        for _ in range(u_samples):
            dirs = rng.normal(size=(m, n))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            radii = alpha * rng.uniform(0.0, 1.0, size=(m, 1))
            draws.append(dirs * radii)
    total = 0
    for j, u in enumerate(draws):
        for i, comp in enumerate(f):
            v = quasiconvex_sample_check(perturb(comp, -u[i]), region, triple_samples, seed + 7919 * j + i)
            total += v.samples
            if not v.passed:
                return QCVerdict(False, v.witness, u=u, index=i, samples=total)
    return QCVerdict(True, samples=total)


# -- JSON grammar ---------------------------------------------------------------

def _parse_p(p) -> Fraction:
    if isinstance(p, str):
        return Fraction(p)
    if isinstance(p, float):
        return Fraction(p).limit_denominator(10**6)
    return Fraction(p)


def from_json(obj: dict, dim: int) -> Expr:
    """Build an expression from its JSON form (``{"op": ...}`` objects)."""
    if not isinstance(obj, dict) or "op" not in obj:
        raise ExprError("expression must be an object with an 'op' field")
    op = obj["op"]
    try:
        if op == "const":
            return Const(dim, float(obj["value"]))
        if op == "coord":
            return Coord(dim, int(obj["index"]))
        if op == "affine":
            e = Affine(obj["a"], obj.get("b", 0.0))
        elif op == "quad":
            Q = np.atleast_2d(np.asarray(obj["Q"], dtype=float))
            e = Quadratic(Q, obj.get("c", np.zeros(Q.shape[0])), obj.get("b", 0.0))
        elif op == "pow":
            e = AbsPower(from_json(obj["arg"], dim), _parse_p(obj["p"]))
        elif op == "abs":
            e = Abs(from_json(obj["arg"], dim))
        elif op == "sum":
            e = Sum(tuple(from_json(t, dim) for t in obj["terms"]))
        elif op == "scale":
            e = Scale(float(obj["k"]), from_json(obj["arg"], dim))
        elif op == "min":
            e = Min(tuple(from_json(t, dim) for t in obj["args"]))
        elif op == "max":
            e = Max(tuple(from_json(t, dim) for t in obj["args"]))
        elif op == "indicator":
            e = Indicator(obj["A"], obj["b"], obj.get("E"), obj.get("d"))
        elif op == "perturb":
            e = Perturbed(from_json(obj["arg"], dim), obj["u"])
        else:
            raise ExprError(f"unknown op {op!r}")
    except KeyError as exc:
        raise ExprError(f"op {op!r} is missing field {exc}") from None
    if e.dim != dim:
        raise DimensionError(f"op {op!r} has dimension {e.dim}, problem dimension is {dim}")
    return e
