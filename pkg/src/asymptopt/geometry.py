"""Feasible sets as finite unions of convex polyhedra, their asymptotic cones,
lattice sampling and point-cloud distances."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import null_space, orth
from scipy.optimize import linprog
from scipy.spatial import cKDTree
from scipy.stats import qmc

TAU_SET = 1e-9
_FEAS_TOL = 1e-12
_CONE_TOL = 1e-9
_MAX_LATTICE = 6_000_000


class GeometryError(ValueError):
    pass


class EmptySetError(GeometryError):
    pass


class TruncationError(GeometryError):
    """The truncation box contains no lattice point of the feasible set."""


def _matrix(M, n: int) -> np.ndarray:
    if M is None:
        return np.zeros((0, n))
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, n))
    M = np.atleast_2d(M)
    if M.shape[1] != n:
        raise GeometryError(f"constraint matrix has {M.shape[1]} columns, expected {n}")
    return M


def _rhs(v, k: int) -> np.ndarray:
    v = np.zeros(0) if v is None else np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != k:
        raise GeometryError(f"right-hand side has length {v.shape[0]}, expected {k}")
    return v


def _normalize_rows(M: np.ndarray, r: np.ndarray, equality: bool):
    norms = np.linalg.norm(M, axis=1)
    zero = norms < 1e-14
    if np.any(zero):
        bad = (np.abs(r[zero]) > 1e-12) if equality else (r[zero] < -1e-12)
        if np.any(bad):
            raise EmptySetError("trivially infeasible constraint row")
        M, r, norms = M[~zero], r[~zero], norms[~zero]
    return M / norms[:, None], r / norms


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise GeometryError("box bounds must satisfy lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_bounds(cls, bounds) -> "Box":
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        return cls(b[:, 0], b[:, 1])

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def bounds(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.lo, self.hi)]

    def scaled(self, factor: float) -> "Box":
        mid = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo) * factor
        return Box(mid - half, mid + half)


@dataclass(frozen=True)
class GridSpec:
    box: Box
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise GeometryError("grid step must be positive")

    @property
    def dim(self) -> int:
        return self.box.dim


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """{x : Ax <= b, Ex = d}, rows stored with unit norm."""

    A: np.ndarray
    b: np.ndarray
    E: np.ndarray | None = None
    d: np.ndarray | None = None
    dim: int | None = None

    def __post_init__(self):
        n = self.dim
        if n is None:
            for M in (self.A, self.E):
                if M is not None and np.asarray(M).size:
                    n = np.atleast_2d(np.asarray(M)).shape[1]
                    break
        if n is None:
            raise GeometryError("cannot infer the dimension of an unconstrained polyhedron")
        A = _matrix(self.A, n)
        b = _rhs(self.b, A.shape[0])
        E = _matrix(self.E, n)
        d = _rhs(self.d, E.shape[0])
        A, b = _normalize_rows(A, b, equality=False)
        E, d = _normalize_rows(E, d, equality=True)
        for name, arr in (("A", A), ("b", b), ("E", E), ("d", d)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "dim", int(n))

    @classmethod
    def whole_space(cls, n: int) -> "Polyhedron":
        return cls(np.zeros((0, n)), np.zeros(0), dim=n)

    @classmethod
    def from_json(cls, obj: dict, n: int) -> "Polyhedron":
        return cls(obj.get("A"), obj.get("b"), obj.get("E"), obj.get("d"), dim=n)

    def to_json(self) -> dict:
        out = {"A": self.A.tolist(), "b": self.b.tolist()}
        if self.E.shape[0]:
            out["E"] = self.E.tolist()
            out["d"] = self.d.tolist()
        return out

    def is_empty(self) -> bool:
        if not self.A.shape[0] and not self.E.shape[0]:
            return False
        res = linprog(np.zeros(self.dim),
                      A_ub=self.A if self.A.shape[0] else None, b_ub=self.b if self.A.shape[0] else None,
                      A_eq=self.E if self.E.shape[0] else None, b_eq=self.d if self.E.shape[0] else None,
                      bounds=[(None, None)] * self.dim, method="highs")
        return res.status == 2

    def violation(self, pts) -> np.ndarray:
        """Largest constraint violation per point (0 inside)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = np.zeros(pts.shape[0])
        if self.A.shape[0]:
            v = np.maximum(v, np.max(pts @ self.A.T - self.b, axis=1))
        if self.E.shape[0]:
            v = np.maximum(v, np.max(np.abs(pts @ self.E.T - self.d), axis=1))
        return v

    def contains(self, pts, tol: float = TAU_SET) -> np.ndarray:
        return self.violation(pts) <= tol

    def project(self, pts) -> np.ndarray:
        """Euclidean projection of each row of ``pts`` onto the polyhedron.

        Exact active-set enumeration: the projection solves the equality
        constrained least-squares problem of its own active set, so the nearest
        feasible candidate over all active sets of size <= n is the answer.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = pts.copy()
        todo = ~(self.violation(pts) <= _FEAS_TOL)
        if not np.any(todo):
            return out
        X = pts[todo]
        best = np.full(X.shape[0], np.inf)
        best_y = X.copy()
        k = self.A.shape[0]
        max_size = min(k, self.dim)
        for size in range(0, max_size + 1):
            for S in itertools.combinations(range(k), size):
                M = np.vstack([self.A[list(S)], self.E])
                r = np.concatenate([self.b[list(S)], self.d])
                if not M.shape[0]:
                    continue
                G = np.linalg.pinv(M @ M.T)
                Y = X - ((X @ M.T - r) @ G) @ M
                ok = np.all(np.abs(Y @ M.T - r) <= 1e-9, axis=1)
                if k:
                    ok &= np.all(Y @ self.A.T - self.b <= _FEAS_TOL, axis=1)
                dist = np.linalg.norm(Y - X, axis=1)
                better = ok & (dist < best)
                best[better] = dist[better]
                best_y[better] = Y[better]
        if np.any(~np.isfinite(best)):
            raise EmptySetError("projection failed: polyhedron appears empty")
        out[todo] = best_y
        return out

    def distance(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.linalg.norm(self.project(pts) - pts, axis=1)


@dataclass(frozen=True)
class PolyUnion:
    """Finite union of nonempty convex polyhedra."""

    pieces: tuple[Polyhedron, ...]

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise EmptySetError("a feasible set needs at least one piece")
        dims = {p.dim for p in pieces}
        if len(dims) != 1:
            raise GeometryError(f"pieces have mixed dimensions {sorted(dims)}")
        kept = tuple(p for p in pieces if not p.is_empty())
        if not kept:
            raise EmptySetError("every piece of the feasible set is empty")
        object.__setattr__(self, "pieces", kept)

    @classmethod
    def single(cls, P: Polyhedron) -> "PolyUnion":
        return cls((P,))

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    @property
    def is_convex_polyhedron(self) -> bool:
        return len(self.pieces) == 1

    def contains(self, pts, tol: float = TAU_SET) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ok = np.zeros(pts.shape[0], dtype=bool)
        for p in self.pieces:
            ok |= p.contains(pts, tol)
        return ok

    def distance(self, pts) -> np.ndarray:
        return np.min(np.stack([p.distance(pts) for p in self.pieces]), axis=0)

    def to_json(self) -> list[dict]:
        return [p.to_json() for p in self.pieces]


# -- cones --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConeRep:
    """A cone, either polyhedral ({d : Ad <= 0, Ed = 0} with generators) or
    given by a membership predicate and a direction sampler."""

    kind: str
    dim: int
    generators: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    lineality: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    A: np.ndarray | None = None
    E: np.ndarray | None = None
    membership: Callable[[np.ndarray], bool] | None = None
    sampler: Callable[[int], list] | None = None

    @classmethod
    def predicate(cls, dim: int, membership, sampler) -> "ConeRep":
        return cls("predicate", dim, membership=membership, sampler=sampler)

    @property
    def is_trivial(self) -> bool:
        if self.kind != "polyhedral":
            return False
        return self.generators.shape[0] == 0 and self.lineality.shape[0] == 0

    def contains(self, d, tol: float = _CONE_TOL) -> bool:
        d = np.asarray(d, dtype=float).reshape(-1)
        nd = np.linalg.norm(d)
        if nd == 0:
            return True
        if self.kind == "predicate":
            return bool(self.membership(d))
        u = d / nd
        if self.A.shape[0] and np.any(self.A @ u > tol):
            return False
        if self.E.shape[0] and np.any(np.abs(self.E @ u) > tol):
            return False
        return True

    def spanning_directions(self) -> np.ndarray:
        """Generators followed by +/- lineality basis vectors, unit length."""
        parts = [self.generators]
        for v in self.lineality:
            parts.append(np.vstack([v, -v]))
        out = np.vstack([p.reshape(-1, self.dim) for p in parts]) if parts else np.zeros((0, self.dim))
        return out


def _polyhedral_cone(A: np.ndarray, E: np.ndarray, n: int) -> ConeRep:
    M = np.vstack([A, E])
    L = null_space(M) if M.shape[0] else np.eye(n)
    NE = null_space(E) if E.shape[0] else np.eye(n)
    P = NE - L @ (L.T @ NE) if L.shape[1] else NE
    W = orth(P, rcond=1e-10) if P.size else np.zeros((n, 0))
    k = W.shape[1]
    rays = []
    if k:
        AW = A @ W
        if k == 1:
            candidates = [np.array([1.0]), np.array([-1.0])]
        else:
            candidates = []
            for S in itertools.combinations(range(AW.shape[0]), k - 1):
                sub = AW[list(S)]
                if np.linalg.matrix_rank(sub, tol=1e-10) != k - 1:
                    continue
                z = null_space(sub, rcond=1e-10)[:, 0]
                candidates.extend([z, -z])
        for z in candidates:
            if AW.shape[0] == 0 or np.all(AW @ z <= 1e-9 * np.linalg.norm(z)):
                r = W @ z
                r = r / np.linalg.norm(r)
                if not any(np.allclose(r, q, atol=1e-9) for q in rays):
                    rays.append(r)
    gens = np.array(rays).reshape(-1, n)
    # lexicographic order keeps the output independent of subset enumeration
    if gens.shape[0] > 1:
        gens = gens[np.lexsort(gens.T[::-1])[::-1]]
    return ConeRep("polyhedral", n, generators=gens, lineality=L.T.reshape(-1, n).copy(), A=A, E=E)


def recession_cone(P: Polyhedron) -> ConeRep:
    """{d : Ad <= 0, Ed = 0}; for a nonempty polyhedron this is its asymptotic cone."""
    if P.is_empty():
        raise EmptySetError("recession cone of an empty polyhedron")
    return _polyhedral_cone(P.A, P.E, P.dim)


@dataclass(frozen=True)
class UnionCone:
    """Union of polyhedral cones, kept piecewise (it need not be convex)."""

    pieces: tuple[ConeRep, ...]

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    @property
    def is_trivial(self) -> bool:
        return all(p.is_trivial for p in self.pieces)

    @property
    def generators(self) -> np.ndarray:
        gens = [p.spanning_directions() for p in self.pieces]
        out: list[np.ndarray] = []
        for g in np.vstack(gens) if gens else np.zeros((0, self.dim)):
            if not any(np.allclose(g, q, atol=1e-9) for q in out):
                out.append(g)
        return np.array(out).reshape(-1, self.dim)

    def contains(self, d, tol: float = _CONE_TOL) -> bool:
        return any(p.contains(d, tol) for p in self.pieces)


def asymptotic_cone(X: PolyUnion) -> UnionCone:
    """Asymptotic cone of a finite union = union of the pieces' recession cones."""
    return UnionCone(tuple(recession_cone(P) for P in X.pieces))


def _halton_weights(k: int, count: int) -> np.ndarray:
    if k == 1:
        return np.ones((count, 1))
    pts = qmc.Halton(d=k, scramble=False).random(count + 1)[1:]
    w = -np.log1p(-np.clip(pts, 0.0, 1.0 - 1e-12))
    return w


def sphere_sample(C: ConeRep | UnionCone, count: int) -> np.ndarray:
    """Deterministic unit directions of a cone.

    Always starts with the cone's spanning directions (generators, then the
    +/- lineality basis), then normalized pairwise sums, then low-discrepancy
    convex combinations, until ``count`` directions exist. Returns an empty
    array for the zero cone.
    """
    if count < 1:
        raise GeometryError("count must be >= 1")
    if isinstance(C, UnionCone):
        parts = [sphere_sample(p, count) for p in C.pieces]
        out: list[np.ndarray] = []
        for d in np.vstack(parts) if parts else np.zeros((0, C.dim)):
            if not any(np.allclose(d, q, atol=1e-9) for q in out):
                out.append(d)
        return np.array(out).reshape(-1, C.dim)
    if C.kind == "predicate":
        return np.asarray(C.sampler(count), dtype=float).reshape(-1, C.dim)
    gens = C.spanning_directions()
    if gens.shape[0] == 0:
        return np.zeros((0, C.dim))
    out = []

    def add(v):
        nv = np.linalg.norm(v)
        if nv < 1e-9:
            return
        v = v / nv
        if not any(np.allclose(v, q, atol=1e-9) for q in out):
            out.append(v)

    for g in gens:
        add(g)
    for i, j in itertools.combinations(range(gens.shape[0]), 2):
        if len(out) >= count:
            break
        add(gens[i] + gens[j])
    if len(out) < count and gens.shape[0] > 1:
        weights = _halton_weights(gens.shape[0], 4 * count)
        for w in weights:
            if len(out) >= count:
                break
            add(w @ gens)
    return np.array(out) + 0.0


# -- point clouds and lattices ------------------------------------------------

@dataclass
class PointCloud:
    """Finite approximation of a subset of R^n."""

    points: np.ndarray
    kind: str = "custom"
    grid: GridSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            n = self.grid.dim if self.grid is not None else (pts.shape[1] if pts.ndim == 2 else 0)
            pts = np.zeros((0, n))
        self.points = np.atleast_2d(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def empty(self) -> bool:
        return len(self) == 0

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j + 1}" for j in range(self.dim)])
            for p in self.points:
                w.writerow([repr(float(v)) for v in p])


def lattice(box: Box, h: float) -> np.ndarray:
    """Multiples of h inside the box (lattice anchored at the origin)."""
    inv = 1.0 / h
    exact = abs(inv - round(inv)) < 1e-9 and round(inv) > 0
    axes = []
    for lo, hi in zip(box.lo, box.hi):
        k = np.arange(int(np.ceil(lo / h - 1e-9)), int(np.floor(hi / h + 1e-9)) + 1)
        axes.append(k / round(inv) if exact else k * h)
    total = int(np.prod([len(a) for a in axes]))
    if total > _MAX_LATTICE:
        raise GeometryError(f"lattice has {total} points; refine the box or enlarge h")
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


def sort_points(pts: np.ndarray) -> np.ndarray:
    if pts.shape[0] < 2:
        return pts
    return pts[np.lexsort(pts.T[::-1])]


def dedupe(pts: np.ndarray, radius: float) -> np.ndarray:
    """Greedy removal of points closer than ``radius`` to an earlier point."""
    pts = sort_points(np.asarray(pts, dtype=float))
    if pts.shape[0] < 2:
        return pts
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    if not len(pairs):
        return pts
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    keep = np.ones(pts.shape[0], dtype=bool)
    for i, j in pairs:
        if keep[i]:
            keep[j] = False
    return pts[keep]


def grid_points(X: PolyUnion, g: GridSpec, tol: float = TAU_SET) -> PointCloud:
    """Lattice points within ``tol`` of some piece, snapped onto that piece."""
    if g.dim != X.dim:
        raise GeometryError(f"grid dimension {g.dim} != set dimension {X.dim}")
    L = lattice(g.box, g.h)
    snapped = []
    for P in X.pieces:
        near = L[P.violation(L) <= tol]
        if not near.shape[0]:
            continue
        Y = P.project(near)
        close = np.linalg.norm(Y - near, axis=1) <= tol
        snapped.append(Y[close])
    pts = np.vstack(snapped) if snapped else np.zeros((0, X.dim))
    if not pts.shape[0]:
        raise TruncationError("truncation misses X: no lattice point of the box lies in X")
    pts = dedupe(pts, g.h / 10)
    return PointCloud(pts, kind="grid", grid=g)


def on_box_boundary(pts, box: Box, h: float) -> np.ndarray:
    """Points within h/2 of a face of the truncation box."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if not pts.size:
        return np.zeros(pts.shape[0], dtype=bool)
    return np.any((pts <= box.lo + 0.5 * h) | (pts >= box.hi - 0.5 * h), axis=1)


def _cloud_points(S) -> np.ndarray:
    return S.points if isinstance(S, PointCloud) else np.atleast_2d(np.asarray(S, dtype=float))


def dist_point_to_cloud(x, S) -> float:
    pts = _cloud_points(S)
    if pts.size == 0:
        return float("inf")
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(np.min(np.linalg.norm(pts - x, axis=1)))


def dists_to_cloud(X, S) -> np.ndarray:
    """Distance from every row of X to the cloud S (+inf if S is empty)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pts = _cloud_points(S)
    if pts.size == 0:
        return np.full(X.shape[0], np.inf)
    if not X.size:
        return np.zeros(0)
    d, _ = cKDTree(pts).query(X)
    return np.asarray(d, dtype=float)


def hausdorff_excess(S1, S2) -> float:
    """sup over s in S1 of dist(s, S2); 0 when S1 is empty."""
    p1 = _cloud_points(S1)
    if p1.size == 0:
        return 0.0
    return float(np.max(dists_to_cloud(p1, S2)))


def hausdorff(S1, S2) -> float:
    return max(hausdorff_excess(S1, S2), hausdorff_excess(S2, S1))
