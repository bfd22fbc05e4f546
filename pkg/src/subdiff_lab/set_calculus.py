"""Exact arithmetic and metrics on small compact convex bodies.

Bodies come in four flavors -- single points, 1-D intervals, V-polytopes
(finite point lists) and zonotopes (center plus generators).  They are the
containers we use for subdifferential sets, so the operations that matter
are support functions, point-to-set distance, the one-sided deviation
D(A, B) = sup_{a in A} dist(a, B), and the Hausdorff distance.

All bodies are immutable after construction and every operation is pure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConvexBody",
    "Direction",
    "DimensionMismatch",
    "UnsupportedVariantPair",
    "support",
    "dist_point_to_body",
    "deviation",
    "hausdorff",
    "hausdorff_support",
    "minkowski_sum",
    "convex_hull",
    "body_vertices",
]

# Zonotopes with more generators than this fall back to direction sampling
# for deviation/Hausdorff and are labeled approximate.
ZONOTOPE_ENUM_CAP = 20

_ZERO_TOL = 1e-14


class DimensionMismatch(ValueError):
    pass


class UnsupportedVariantPair(ValueError):
    pass


@dataclass(frozen=True)
class Direction:
    """A unit probe direction for support-function evaluation."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        n = np.linalg.norm(u)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"direction must be unit norm, got {n}")
        object.__setattr__(self, "u", u)

    @property
    def dim(self) -> int:
        return self.u.size


@dataclass(frozen=True)
class ConvexBody:
    """A compact convex subset of R^d.

    kind is one of "point", "interval", "vpolytope", "zonotope".  Degenerate
    input (zero-norm generators, duplicate polytope points) is normalized
    away on construction.
    """

    kind: str
    point_: np.ndarray | None = None
    lo: float | None = None
    hi: float | None = None
    points: np.ndarray | None = None       # (n, d)
    center: np.ndarray | None = None
    generators: np.ndarray | None = None   # (k, d)
    approximate: bool = field(default=False, compare=False)

    # -- constructors -----------------------------------------------------

    @staticmethod
    def point(v) -> "ConvexBody":
        v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
        return ConvexBody(kind="point", point_=v)

    @staticmethod
    def interval(lo: float, hi: float) -> "ConvexBody":
        lo, hi = float(lo), float(hi)
        if lo > hi:
            raise ValueError(f"interval needs lo <= hi, got [{lo}, {hi}]")
        return ConvexBody(kind="interval", lo=lo, hi=hi)

    @staticmethod
    def vpolytope(points) -> "ConvexBody":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            raise ValueError("vpolytope needs at least one point")
        pts = np.unique(pts, axis=0)
        if pts.shape[0] == 1:
            return ConvexBody.point(pts[0])
        return ConvexBody(kind="vpolytope", points=pts)

    @staticmethod
    def zonotope(center, generators) -> "ConvexBody":
        c = np.atleast_1d(np.asarray(center, dtype=float)).ravel()
        G = np.asarray(generators, dtype=float)
        if G.size == 0:
            return ConvexBody.point(c)
        G = np.atleast_2d(G)
        if G.shape[1] != c.size:
            raise DimensionMismatch(
                f"generators have dim {G.shape[1]}, center has dim {c.size}")
        keep = np.linalg.norm(G, axis=1) > _ZERO_TOL
        G = G[keep]
        if G.shape[0] == 0:
            return ConvexBody.point(c)
        return ConvexBody(kind="zonotope", center=c, generators=G)

    # -- basic queries ----------------------------------------------------

    @property
    def dim(self) -> int:
        if self.kind == "point":
            return self.point_.size
        if self.kind == "interval":
            return 1
        if self.kind == "vpolytope":
            return self.points.shape[1]
        return self.center.size

    def __post_init__(self):
        if self.kind == "point":
            object.__setattr__(self, "point_", np.asarray(self.point_, dtype=float))
        if self.dim < 1:
            raise ValueError("bodies live in R^d with d >= 1")


def _check_same_dim(a, b):
    da = a.dim if hasattr(a, "dim") else np.asarray(a).size
    db = b.dim if hasattr(b, "dim") else np.asarray(b).size
    if da != db:
        raise DimensionMismatch(f"dimension mismatch: {da} vs {db}")


def body_vertices(body: ConvexBody) -> np.ndarray:
    """Candidate extreme points, one per row.

    For zonotopes this enumerates all 2^k sign patterns (raises beyond the
    generator cap); for V-polytopes it returns the stored point list.  The
    returned set always contains every extreme point of the body.
    """
    if body.kind == "point":
        return body.point_[None, :]
    if body.kind == "interval":
        return np.array([[body.lo], [body.hi]])
    if body.kind == "vpolytope":
        return body.points
    k = body.generators.shape[0]
    if k > ZONOTOPE_ENUM_CAP:
        raise ValueError(f"zonotope with {k} generators exceeds the "
                         f"enumeration cap of {ZONOTOPE_ENUM_CAP}")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=k)))
    return body.center[None, :] + signs @ body.generators


# -- support function -----------------------------------------------------

def support(body: ConvexBody, u) -> float:
    """Support value sup_{a in body} <a, u>.  Exact for every variant."""
    if isinstance(u, Direction):
        u = u.u
    u = np.asarray(u, dtype=float).ravel()
    _check_same_dim(body, u)
    if body.kind == "point":
        return float(body.point_ @ u)
    if body.kind == "interval":
        return float(max(body.lo * u[0], body.hi * u[0]))
    if body.kind == "vpolytope":
        return float(np.max(body.points @ u))
    return float(body.center @ u + np.sum(np.abs(body.generators @ u)))


# -- point-to-body distance -----------------------------------------------

def _min_norm_point(P: np.ndarray, tol: float = 1e-12, max_iter: int = 1000):
    """Wolfe's algorithm: the minimum-norm point of conv(rows of P)."""
    n = P.shape[0]
    norms2 = np.einsum("ij,ij->i", P, P)
    i0 = int(np.argmin(norms2))
    idx = [i0]
    lam = np.array([1.0])
    x = P[i0].copy()
    scale = max(1.0, float(np.max(norms2)))
    for _ in range(max_iter):
        ip = P @ x
        j = int(np.argmin(ip))
        if x @ x - ip[j] <= tol * scale:
            break
        if j in idx:
            break
        idx.append(j)
        lam = np.append(lam, 0.0)
        # minor cycle: pull x toward the affine min-norm point of the corral
        for _ in range(max_iter):
            S = P[idx]
            m = len(idx)
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = S @ S.T
            A[m, :m] = 1.0
            A[:m, m] = 1.0
            rhs = np.zeros(m + 1)
            rhs[m] = 1.0
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            alpha = sol[:m]
            if np.all(alpha >= -1e-12):
                lam = np.clip(alpha, 0.0, None)
                lam /= lam.sum()
                break
            neg = alpha < lam
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(alpha < 0, lam / (lam - alpha), np.inf)
            theta = float(np.min(ratios[neg])) if np.any(neg) else 0.0
            lam = (1.0 - theta) * lam + theta * alpha
            lam[lam < 1e-13] = 0.0
            keep = lam > 0.0
            if not np.any(keep):
                keep[int(np.argmax(alpha))] = True
                lam[keep] = 1.0
            idx = [i for i, k in zip(idx, keep) if k]
            lam = lam[keep]
            lam /= lam.sum()
        x = lam @ P[idx]
    return x


def dist_point_to_body(y, body: ConvexBody) -> float:
    """Euclidean distance from y to the body (certified to ~1e-9)."""
    y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
    _check_same_dim(body, y)
    if body.kind == "point":
        return float(np.linalg.norm(y - body.point_))
    if body.kind == "interval":
        z = min(max(y[0], body.lo), body.hi)
        return float(abs(y[0] - z))
    if body.kind == "vpolytope":
        x = _min_norm_point(body.points - y[None, :])
        return float(np.linalg.norm(x))
    # zonotope: box-constrained least squares on the generator coefficients
    from scipy.optimize import lsq_linear

    G = body.generators
    res = lsq_linear(G.T, y - body.center, bounds=(-1.0, 1.0),
                     method="bvls", tol=1e-14)
    return float(np.linalg.norm(y - body.center - G.T @ res.x))


# -- deviation and Hausdorff ----------------------------------------------

def _fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic quasi-uniform directions on S^2."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5.0 ** 0.5) * i
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=1)


def _sample_directions(d: int, seed: int = 0) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = np.linspace(0.0, 2.0 * np.pi, 10_000, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if d == 3:
        return _fibonacci_sphere(10_000)
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((1000, d))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _deviation_sampled(A: ConvexBody, B: ConvexBody, seed: int = 0) -> float:
    """Direction-sampling lower bound on D(A, B) for oversize zonotopes."""
    best = 0.0
    for u in _sample_directions(A.dim, seed):
        v = _support_argmax(A, u)
        best = max(best, dist_point_to_body(v, B))
    return best


def _support_argmax(body: ConvexBody, u: np.ndarray) -> np.ndarray:
    if body.kind == "point":
        return body.point_
    if body.kind == "interval":
        return np.array([body.hi if u[0] >= 0 else body.lo])
    if body.kind == "vpolytope":
        return body.points[int(np.argmax(body.points @ u))]
    return body.center + np.sign(body.generators @ u) @ body.generators


def deviation(A: ConvexBody, B: ConvexBody) -> float:
    """One-sided deviation D(A, B) = sup_{a in A} dist(a, B).

    Exact via extreme-point enumeration whenever A is enumerable; a
    direction-sampled lower bound (body flagged approximate) otherwise.
    """
    _check_same_dim(A, B)
    if A.kind == "zonotope" and A.generators.shape[0] > ZONOTOPE_ENUM_CAP:
        return _deviation_sampled(A, B)
    verts = body_vertices(A)
    return max(dist_point_to_body(v, B) for v in verts)


def hausdorff(A: ConvexBody, B: ConvexBody) -> float:
    """Hausdorff distance max{D(A, B), D(B, A)}."""
    return max(deviation(A, B), deviation(B, A))


def _refine_direction_2d(A, B, ang0, width):
    from scipy.optimize import minimize_scalar

    def f(t):
        u = np.array([np.cos(t), np.sin(t)])
        return -abs(support(A, u) - support(B, u))

    res = minimize_scalar(f, bounds=(ang0 - width, ang0 + width),
                          method="bounded",
                          options={"xatol": 1e-13})
    return -res.fun


def _refine_direction_3d(A, B, u0):
    from scipy.optimize import minimize

    th0 = np.arccos(np.clip(u0[2], -1.0, 1.0))
    ph0 = np.arctan2(u0[1], u0[0])

    def f(p):
        th, ph = p
        u = np.array([np.sin(th) * np.cos(ph),
                      np.sin(th) * np.sin(ph),
                      np.cos(th)])
        return -abs(support(A, u) - support(B, u))

    res = minimize(f, np.array([th0, ph0]), method="Nelder-Mead",
                   options={"xatol": 1e-13, "fatol": 1e-14, "maxiter": 400})
    return -res.fun


def hausdorff_support(A: ConvexBody, B: ConvexBody, seed: int = 0) -> float:
    """Hausdorff distance via the support-function route.

    For convex compact bodies H(A, B) = sup_u |h_A(u) - h_B(u)| over unit
    directions.  Deterministic grids in d <= 3 with local refinement of the
    best candidates; seeded sampling plus ascent beyond.
    """
    _check_same_dim(A, B)
    dirs = _sample_directions(A.dim, seed)
    gaps = np.array([abs(support(A, u) - support(B, u)) for u in dirs])
    if A.dim == 1:
        return float(gaps.max())
    order = np.argsort(gaps)[::-1][:5]
    best = float(gaps.max())
    if A.dim == 2:
        step = 2.0 * np.pi / len(dirs)
        for i in order:
            ang = np.arctan2(dirs[i, 1], dirs[i, 0])
            best = max(best, _refine_direction_2d(A, B, ang, 2.0 * step))
    elif A.dim == 3:
        for i in order:
            best = max(best, _refine_direction_3d(A, B, dirs[i]))
    else:
        # projected gradient ascent on the sphere from the best candidates
        for i in order:
            u = dirs[i].copy()
            for _ in range(50):
                va = _support_argmax(A, u)
                vb = _support_argmax(B, u)
                s = np.sign(support(A, u) - support(B, u)) or 1.0
                g = s * (va - vb)
                g -= (g @ u) * u
                if np.linalg.norm(g) < 1e-14:
                    break
                u = u + 0.1 * g / max(np.linalg.norm(g), 1e-14)
                u /= np.linalg.norm(u)
            best = max(best, abs(support(A, u) - support(B, u)))
    return best


# -- Minkowski sum and hulls ----------------------------------------------

def _translate(body: ConvexBody, v: np.ndarray) -> ConvexBody:
    if body.kind == "point":
        return ConvexBody.point(body.point_ + v)
    if body.kind == "interval":
        return ConvexBody.interval(body.lo + v[0], body.hi + v[0])
    if body.kind == "vpolytope":
        return ConvexBody.vpolytope(body.points + v[None, :])
    return ConvexBody.zonotope(body.center + v, body.generators)


def _as_zonotope(body: ConvexBody) -> ConvexBody | None:
    if body.kind == "zonotope":
        return body
    if body.kind == "point":
        return ConvexBody(kind="zonotope", center=body.point_,
                          generators=np.zeros((0, body.point_.size)))
    if body.kind == "interval":
        c = 0.5 * (body.lo + body.hi)
        g = 0.5 * (body.hi - body.lo)
        return ConvexBody.zonotope([c], [[g]])
    return None


def _as_vpolytope(body: ConvexBody) -> ConvexBody | None:
    if body.kind == "vpolytope":
        return body
    if body.kind == "point":
        return ConvexBody(kind="vpolytope", points=body.point_[None, :])
    if body.kind == "interval":
        return ConvexBody.vpolytope([[body.lo], [body.hi]])
    return None


def minkowski_sum(A: ConvexBody, B: ConvexBody) -> ConvexBody:
    """Exact Minkowski sum for representable variant pairs."""
    _check_same_dim(A, B)
    if A.kind == "point":
        return _translate(B, A.point_)
    if B.kind == "point":
        return _translate(A, B.point_)
    if A.kind == "interval" and B.kind == "interval":
        return ConvexBody.interval(A.lo + B.lo, A.hi + B.hi)
    if "zonotope" in (A.kind, B.kind):
        za, zb = _as_zonotope(A), _as_zonotope(B)
        if za is not None and zb is not None:
            return ConvexBody.zonotope(
                za.center + zb.center,
                np.vstack([za.generators, zb.generators]))
    if "vpolytope" in (A.kind, B.kind):
        pa, pb = _as_vpolytope(A), _as_vpolytope(B)
        if pa is not None and pb is not None:
            sums = (pa.points[:, None, :] + pb.points[None, :, :])
            return convex_hull(sums.reshape(-1, A.dim))
    raise UnsupportedVariantPair(f"cannot sum {A.kind} and {B.kind}")


def _hull_2d(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in ccw order."""
    pts = np.unique(pts, axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-15:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-15:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def convex_hull(points) -> ConvexBody:
    """Convex hull of a finite point list, pruned to vertices in d <= 3."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("convex_hull needs at least one point")
    d = pts.shape[1]
    pts = np.unique(pts, axis=0)
    if pts.shape[0] == 1:
        return ConvexBody.point(pts[0])
    if d == 1:
        return ConvexBody.interval(float(pts.min()), float(pts.max()))
    if d == 2:
        return ConvexBody.vpolytope(_hull_2d(pts))
    if d == 3:
        try:
            from scipy.spatial import ConvexHull as _Qhull

            hull = _Qhull(pts)
            return ConvexBody.vpolytope(pts[hull.vertices])
        except Exception:
            pass  # degenerate input: keep every point
    return ConvexBody.vpolytope(pts)
