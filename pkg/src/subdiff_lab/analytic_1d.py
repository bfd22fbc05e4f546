"""Exact piecewise-linear convex functions on the line.

These are the analytic test families: their subdifferentials are staircase
set-valued maps that we can write down exactly, which makes the pointwise
sup metric (d1) and the graphical metric (d2) finitely computable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .set_calculus import ConvexBody

__all__ = [
    "PiecewiseLinearConvexFn",
    "SubdiffGraph",
    "pwl_abs",
    "pwl_sum",
    "pwl_scale",
    "random_pwl_convex",
    "exact_subdiff",
    "d1_metric",
    "d2_graph_metric",
    "selection_sup_diff",
    "right_derivative_selection",
]


@dataclass(frozen=True)
class PiecewiseLinearConvexFn:
    """Convex piecewise-linear f with breakpoints x_1 < ... < x_K and
    nondecreasing slopes s_0 <= ... <= s_K (slope s_i on the i-th piece)."""

    breakpoints: np.ndarray
    slopes: np.ndarray
    value_at_0: float = 0.0

    def __post_init__(self):
        bp = np.atleast_1d(np.asarray(self.breakpoints, dtype=float))
        sl = np.atleast_1d(np.asarray(self.slopes, dtype=float))
        if sl.size != bp.size + 1:
            raise ValueError("need one more slope than breakpoints")
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(sl) < -1e-12):
            raise ValueError("slopes must be nondecreasing (convexity)")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)

    def value(self, x: float) -> float:
        """Evaluate f by integrating the slope profile from 0 to x."""
        bp, sl = self.breakpoints, self.slopes
        lo, hi, sign = (0.0, x, 1.0) if x >= 0 else (x, 0.0, -1.0)
        v = 0.0
        cuts = np.concatenate([[lo], bp[(bp > lo) & (bp < hi)], [hi]])
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a + b)
            i = int(np.searchsorted(bp, mid, side="right"))
            v += sl[i] * (b - a)
        return self.value_at_0 + sign * v

    def piece_index(self, x: float) -> int:
        """Index of the piece whose interior (or right-closed start) holds x."""
        return int(np.searchsorted(self.breakpoints, x, side="right"))


def pwl_abs(shift: float = 0.0, scale: float = 1.0) -> PiecewiseLinearConvexFn:
    """scale * |x - shift|."""
    return PiecewiseLinearConvexFn(
        breakpoints=[shift], slopes=[-scale, scale],
        value_at_0=scale * abs(shift))


def pwl_scale(f: PiecewiseLinearConvexFn, alpha: float) -> PiecewiseLinearConvexFn:
    if not alpha > 0:
        raise ValueError("scale must be positive")
    return PiecewiseLinearConvexFn(f.breakpoints, alpha * f.slopes,
                                   alpha * f.value_at_0)


def pwl_sum(f: PiecewiseLinearConvexFn,
            g: PiecewiseLinearConvexFn) -> PiecewiseLinearConvexFn:
    """Pointwise sum, with merged breakpoints."""
    bp = np.unique(np.concatenate([f.breakpoints, g.breakpoints]))
    mids = np.concatenate([[bp[0] - 1.0], 0.5 * (bp[:-1] + bp[1:]), [bp[-1] + 1.0]])
    slopes = [f.slopes[f.piece_index(m)] + g.slopes[g.piece_index(m)]
              for m in mids]
    return PiecewiseLinearConvexFn(bp, slopes, f.value_at_0 + g.value_at_0)


def random_pwl_convex(rng: np.random.Generator, n_kinks: int = 3,
                      span: float = 1.0) -> PiecewiseLinearConvexFn:
    """A random convex piecewise-linear function with kinks in (-span, span)."""
    k = int(rng.integers(1, n_kinks + 1))
    bp = np.sort(rng.uniform(-span, span, size=k))
    # strictly increasing slopes => genuine kinks at every breakpoint
    jumps = rng.uniform(0.1, 1.5, size=k)
    s0 = rng.uniform(-2.0, 0.5)
    slopes = s0 + np.concatenate([[0.0], np.cumsum(jumps)])
    return PiecewiseLinearConvexFn(bp, slopes, float(rng.uniform(-1, 1)))


# -- exact subdifferential ------------------------------------------------

def exact_subdiff(f: PiecewiseLinearConvexFn, x: float) -> ConvexBody:
    """[s_{i-1}, s_i] at breakpoint x_i, the singleton {s_i} inside pieces."""
    bp, sl = f.breakpoints, f.slopes
    hit = np.flatnonzero(np.abs(bp - x) == 0.0)
    if hit.size:
        i = int(hit[0])
        return ConvexBody.interval(sl[i], sl[i + 1])
    i = f.piece_index(x)
    return ConvexBody.interval(sl[i], sl[i])


def _interval_hausdorff(A: ConvexBody, B: ConvexBody) -> float:
    return max(abs(A.lo - B.lo), abs(A.hi - B.hi))


def _candidate_points(f1, f2, window):
    a, b = window
    bps = np.unique(np.concatenate([f1.breakpoints, f2.breakpoints]))
    bps = bps[(bps > a) & (bps < b)]
    knots = np.concatenate([[a], bps, [b]])
    mids = 0.5 * (knots[:-1] + knots[1:])
    return bps, mids


def d1_metric(f1: PiecewiseLinearConvexFn, f2: PiecewiseLinearConvexFn,
              window: tuple[float, float]) -> float:
    """sup over the open window of the pointwise Hausdorff distance.

    Between breakpoints both subdifferentials are constant singletons, so
    the supremum is attained on breakpoints plus one interior probe per
    piece; the computation is exact.
    """
    a, b = window
    if not a < b:
        raise ValueError("window must satisfy a < b")
    bps, mids = _candidate_points(f1, f2, window)
    best = 0.0
    for x in np.concatenate([bps, mids]):
        best = max(best, _interval_hausdorff(exact_subdiff(f1, x),
                                             exact_subdiff(f2, x)))
    return best


# -- graphical metric -----------------------------------------------------

@dataclass(frozen=True)
class SubdiffGraph:
    """The staircase gph = {(x, y): y in subdiff f(x)} over a window,
    stored as a list of 2-D segments (each row pair: start, end)."""

    segments: tuple[np.ndarray, ...]


def build_subdiff_graph(f: PiecewiseLinearConvexFn,
                        window: tuple[float, float]) -> SubdiffGraph:
    a, b = window
    bp, sl = f.breakpoints, f.slopes
    inner = bp[(bp > a) & (bp < b)]
    knots = np.concatenate([[a], inner, [b]])
    segs = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        i = f.piece_index(0.5 * (lo + hi))
        segs.append(np.array([[lo, sl[i]], [hi, sl[i]]]))
    for x in inner:
        i = int(np.searchsorted(bp, x, side="left"))
        segs.append(np.array([[x, sl[i]], [x, sl[i + 1]]]))
    return SubdiffGraph(tuple(segs))


def _point_segment_dist(p: np.ndarray, seg: np.ndarray) -> float:
    v = seg[1] - seg[0]
    w = p - seg[0]
    denom = float(v @ v)
    t = 0.0 if denom == 0.0 else float(np.clip((w @ v) / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - seg[0] - t * v))


def _dist_to_graph(p: np.ndarray, segs) -> float:
    return min(_point_segment_dist(p, s) for s in segs)


def _dists_to_segments(P: np.ndarray, S0: np.ndarray, V: np.ndarray,
                       den: np.ndarray) -> np.ndarray:
    """Distances from each point in P (n, 2) to the nearest of k segments."""
    W = P[:, None, :] - S0[None, :, :]
    t = np.einsum("pkd,kd->pk", W, V) / np.where(den > 0.0, den, 1.0)
    np.clip(t, 0.0, 1.0, out=t)
    D = W - t[:, :, None] * V[None, :, :]
    return np.sqrt(np.einsum("pkd,pkd->pk", D, D)).min(axis=1)


def _deviation_graphs(segsA, segsB) -> float:
    """sup over points of A of the distance to B, per segment of A.

    Candidates: segment endpoints, projections of B's endpoints onto the
    segment, a uniform grid, and local grid refinement around the best
    bracket.  Every candidate is an exact distance at a feasible point,
    so the result never overestimates the true deviation.
    """
    S0 = np.array([s[0] for s in segsB])
    V = np.array([s[1] - s[0] for s in segsB])
    den = np.einsum("kd,kd->k", V, V)
    endpoints = np.concatenate([S0, S0 + V])
    best = 0.0
    for seg in segsA:
        v = seg[1] - seg[0]
        denom = float(v @ v)
        ts = np.linspace(0.0, 1.0, 65)
        if denom > 0:
            proj = np.clip((endpoints - seg[0]) @ v / denom, 0.0, 1.0)
            ts = np.unique(np.concatenate([ts, proj]))
        vals = _dists_to_segments(seg[0] + ts[:, None] * v, S0, V, den)
        best = max(best, float(vals.max()))
        if denom > 0:
            lo, hi = 0.0, 1.0
            for _ in range(8):
                j = int(np.argmax(vals))
                lo = ts[max(j - 1, 0)]
                hi = ts[min(j + 1, len(ts) - 1)]
                if hi <= lo:
                    break
                ts = np.linspace(lo, hi, 17)
                vals = _dists_to_segments(seg[0] + ts[:, None] * v,
                                          S0, V, den)
                best = max(best, float(vals.max()))
    return best


def d2_graph_metric(f1: PiecewiseLinearConvexFn, f2: PiecewiseLinearConvexFn,
                    window: tuple[float, float]) -> float:
    """Hausdorff distance in R^2 between the two subdifferential staircases
    truncated to the window."""
    a, b = window
    if not a < b:
        raise ValueError("window must satisfy a < b")
    g1 = build_subdiff_graph(f1, window).segments
    g2 = build_subdiff_graph(f2, window).segments
    return max(_deviation_graphs(g1, g2), _deviation_graphs(g2, g1))


# -- selections -----------------------------------------------------------

def right_derivative_selection(f: PiecewiseLinearConvexFn) -> Callable[[float], float]:
    """The canonical selection g(x) = f'_+(x) (slope of the piece to the
    right, so s_i on [x_i, x_{i+1}))."""
    return lambda x: float(f.slopes[f.piece_index(x)])


def selection_sup_diff(f1: PiecewiseLinearConvexFn,
                       f2: PiecewiseLinearConvexFn,
                       window: tuple[float, float] | None = None,
                       rule: str | tuple[Callable, Callable] = "right",
                       points: Sequence[float] | None = None) -> float:
    """sup |g1(x) - g2(x)| for a pair of subgradient selections.

    rule "right" uses the right-derivative selection for both functions;
    otherwise pass a pair of callables.  With `points` given, the sup runs
    over that explicit set instead of the window (used to probe closed
    sets, where the selection bound can fail).
    """
    if rule == "right":
        g1, g2 = right_derivative_selection(f1), right_derivative_selection(f2)
    else:
        g1, g2 = rule
    if points is not None:
        xs = np.asarray(list(points), dtype=float)
    else:
        if window is None:
            raise ValueError("need a window or an explicit point set")
        bps, mids = _candidate_points(f1, f2, window)
        xs = np.concatenate([bps, mids])
    return max(abs(float(g1(x)) - float(g2(x))) for x in xs)
