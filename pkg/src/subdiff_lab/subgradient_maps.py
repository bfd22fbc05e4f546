"""Selected subgradients of empirical composite objectives, the zonotope
form of the empirical subdifferential, and gap measurements against a
population oracle.

For an objective f_S(x) = (1/m) sum_i h(c(x; xi_i)) the canonical
selection is

    G_S(x) = (1/m) sum_i g(c(x; xi_i)) grad c(x; xi_i),

with g the right-continuous subgradient of h.  The full set-valued
subdifferential averages the intervals dh(c_i) grad c_i, which is exactly
a zonotope: samples sitting on a kink of h contribute a generator, all
others only shift the center.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .composite_models import CompositeModel, Dataset, DistributionSpec, \
    batch_measurements, c_grad, c_grads, c_values, c_values_batch, draw_dataset, \
    weighted_grad_sum, weighted_grad_sum_batch
from .scalar_loss import ScalarConvexLoss
from .set_calculus import ConvexBody, dist_point_to_body, hausdorff

__all__ = [
    "EmpiricalObjective",
    "PopulationOracle",
    "MegaSampleOracle",
    "DatasetOracle",
    "ClosedFormOracle",
    "GapRecord",
    "selection_values",
    "subdiff_bounds",
    "G_S",
    "G_S_batch",
    "empirical_subdiff",
    "pointwise_gap",
    "sup_gap_over_ball",
    "sup_gap_over_ball_multi",
    "write_gap_records",
]


def selection_values(loss: ScalarConvexLoss, z: np.ndarray) -> np.ndarray:
    """Vectorized canonical subgradient g(z) of the loss."""
    z = np.asarray(z, dtype=float)
    g = np.broadcast_to(np.asarray(loss.smooth_deriv(z), dtype=float),
                        z.shape).copy()
    for k in loss.kinks:
        g += k.jump * (z >= k.location)
    return g


def subdiff_bounds(loss: ScalarConvexLoss, z: np.ndarray,
                   kink_tol: float = 0.0):
    """Vectorized subdifferential endpoints [h'_-(z), h'_+(z)].

    kink_tol > 0 treats any z within that distance of a kink as sitting on
    it, widening the interval accordingly (used for relaxed stationarity
    tests where exact kink hits have measure zero).
    """
    z = np.asarray(z, dtype=float)
    g = np.broadcast_to(np.asarray(loss.smooth_deriv(z), dtype=float),
                        z.shape).copy()
    lo, hi = g.copy(), g
    for k in loss.kinks:
        lo = lo + k.jump * (z > k.location + kink_tol)
        hi = hi + k.jump * (z >= k.location - kink_tol)
    return lo, hi


@dataclass(frozen=True)
class EmpiricalObjective:
    """f_S(x) = mean_i h(c(x; xi_i)) over a fixed dataset."""

    model: CompositeModel
    loss: ScalarConvexLoss
    data: Dataset

    def __post_init__(self):
        if self.data.model != self.model:
            raise ValueError("dataset was drawn for a different model")

    def value(self, x) -> float:
        z = c_values(self.model, x, self.data)
        vals = np.array([float(self.loss.smooth_value(zi)) for zi in z]) \
            if not _vectorizable(self.loss) else \
            np.asarray(self.loss.smooth_value(z), dtype=float)
        vals = np.broadcast_to(vals, z.shape).copy()
        for k in self.loss.kinks:
            vals += k.jump * np.maximum(z - k.location, 0.0)
        return float(vals.mean())


def _vectorizable(loss: ScalarConvexLoss) -> bool:
    try:
        out = loss.smooth_value(np.array([0.0, 1.0]))
        return np.asarray(out).shape in ((), (2,))
    except Exception:
        return False


def G_S(obj: EmpiricalObjective, x) -> np.ndarray:
    """The canonical selected subgradient of f_S at x."""
    z = c_values(obj.model, x, obj.data)
    sel = selection_values(obj.loss, z)
    return weighted_grad_sum(obj.model, x, obj.data, sel)


def G_S_batch(obj: EmpiricalObjective, X) -> np.ndarray:
    """G_S at a batch of parameters: X is (dim, B), result is (dim, B)."""
    pre = batch_measurements(obj.model, X, obj.data)
    z = c_values_batch(obj.model, X, obj.data, pre=pre)
    sel = selection_values(obj.loss, z)
    return weighted_grad_sum_batch(obj.model, X, obj.data, sel, pre=pre)


def empirical_subdiff(obj: EmpiricalObjective, x,
                      kink_tol: float = 1e-12) -> ConvexBody:
    """The subdifferential of f_S at x as a zonotope.

    Center: average of interval midpoints times gradients.  One generator
    per sample whose inner value sits on a kink of h (within kink_tol);
    off-kink samples contribute only to the center.
    """
    m = len(obj.data)
    z = c_values(obj.model, x, obj.data)
    lo, hi = subdiff_bounds(obj.loss, z, kink_tol=kink_tol)
    mid = 0.5 * (lo + hi)
    halfwidth = 0.5 * (hi - lo)
    center = weighted_grad_sum(obj.model, x, obj.data, mid)
    active = np.flatnonzero(halfwidth > 0.0)
    if active.size == 0:
        return ConvexBody.point(center)
    gens = np.array([(halfwidth[i] / m) * c_grad(obj.model, x, obj.data[i])
                     for i in active])
    return ConvexBody.zonotope(center, gens)


# -- population oracles ---------------------------------------------------

class PopulationOracle:
    """Estimator of the population selection G(x) with an error bound."""

    def G(self, x) -> np.ndarray:
        raise NotImplementedError

    def G_batch(self, X) -> np.ndarray:
        """Columnwise G over a (dim, B) batch; override for speed."""
        X = np.asarray(X, dtype=float)
        return np.stack([self.G(X[:, j]) for j in range(X.shape[1])], axis=1)

    def error_bound(self, x) -> float:
        raise NotImplementedError


class DatasetOracle(PopulationOracle):
    """Treats a fixed dataset as the population (error bound 0).  Mostly a
    test fixture: with the objective's own data both gaps vanish."""

    def __init__(self, model: CompositeModel, loss: ScalarConvexLoss,
                 data: Dataset):
        self.obj = EmpiricalObjective(model, loss, data)

    def G(self, x) -> np.ndarray:
        return G_S(self.obj, x)

    def G_batch(self, X) -> np.ndarray:
        # chunk columns so the (m, B) temporaries stay within ~128 MB
        X = np.asarray(X, dtype=float)
        m = len(self.obj.data)
        chunk = max(1, int(16_000_000 // max(m, 1)))
        if X.shape[1] <= chunk:
            return G_S_batch(self.obj, X)
        parts = [G_S_batch(self.obj, X[:, j:j + chunk])
                 for j in range(0, X.shape[1], chunk)]
        return np.hstack(parts)

    def error_bound(self, x) -> float:
        return 0.0


class MegaSampleOracle(DatasetOracle):
    """Monte Carlo surrogate for the population selection: G_S over an
    independent mega sample, with a 3x CLT standard-error bound."""

    def __init__(self, model: CompositeModel, loss: ScalarConvexLoss,
                 dist: DistributionSpec, xbar, m_pop: int, seed: int):
        if m_pop < 1:
            raise ValueError("m_pop must be >= 1")
        data = draw_dataset(model, dist, xbar, m_pop, seed)
        super().__init__(model, loss, data)
        self.m_pop = m_pop
        self.seed = seed

    def error_bound(self, x) -> float:
        data = self.obj.data
        z = c_values(self.obj.model, x, data)
        grads = c_grads(self.obj.model, x, data)
        sel = selection_values(self.obj.loss, z)
        summands = sel[:, None] * grads
        se = summands.std(axis=0, ddof=1) / np.sqrt(len(data))
        return 3.0 * float(np.linalg.norm(se))


class ClosedFormOracle(PopulationOracle):
    """Exact population selection where a closed form is known."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], tag: str = ""):
        self.fn = fn
        self.tag = tag

    def G(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def G_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.stack([self.G(X[:, j]) for j in range(X.shape[1])], axis=1)

    def error_bound(self, x) -> float:
        return 0.0


# -- gap measurements -----------------------------------------------------

@dataclass
class GapRecord:
    x: np.ndarray
    gap_selection: float
    gap_hausdorff: float
    oracle_err: float
    hausdorff_flag: str = "singleton-approx"

    def __post_init__(self):
        for v in (self.gap_selection, self.gap_hausdorff, self.oracle_err):
            if not (np.isfinite(v) and v >= 0.0):
                raise ValueError("gap record entries must be finite and >= 0")


def pointwise_gap(obj: EmpiricalObjective, oracle: PopulationOracle,
                  x, kink_tol: float = 1e-12) -> GapRecord:
    """Selection gap ||G_S(x) - G(x)|| and the Hausdorff gap between the
    empirical subdifferential and the oracle's (singleton) approximation."""
    x = np.asarray(x, dtype=float).ravel()
    gx = oracle.G(x)
    gap_sel = float(np.linalg.norm(G_S(obj, x) - gx))
    emp = empirical_subdiff(obj, x, kink_tol=kink_tol)
    gap_h = hausdorff(emp, ConvexBody.point(gx))
    flag = "exact" if isinstance(oracle, ClosedFormOracle) else "singleton-approx"
    return GapRecord(x=x, gap_selection=gap_sel, gap_hausdorff=gap_h,
                     oracle_err=oracle.error_bound(x), hausdorff_flag=flag)


def _gap_at(obj, oracle, x) -> float:
    return float(np.linalg.norm(G_S(obj, x) - oracle.G(x)))


def _gaps_at(obj, oracle, X) -> np.ndarray:
    """Selection gaps for a (B, dim) stack of probes in one batched pass."""
    Xt = np.ascontiguousarray(np.asarray(X, dtype=float).T)
    diff = G_S_batch(obj, Xt) - oracle.G_batch(Xt)
    return np.linalg.norm(diff, axis=0)


def _ball_probes(x0: np.ndarray, r: float, n: int,
                 seed: int) -> np.ndarray:
    """Uniform draws in B(x0, r); probe i depends only on (seed, i), so a
    larger budget extends the sequence instead of reshuffling it."""
    d = x0.size
    out = np.empty((n, d))
    for i in range(n):
        rng = np.random.default_rng((seed, i))
        z = rng.standard_normal(d)
        z /= np.linalg.norm(z)
        out[i] = x0 + (r * rng.uniform() ** (1.0 / d)) * z
    return out


class _ClimbState:
    """Per-start state for the coordinate-perturbation hill-climb."""

    def __init__(self, x, gap, r, rng):
        self.x = x.copy()
        self.best = gap
        self.step = 0.25 * r
        self.rng = rng
        self.j = 0
        self.improved = False
        self.used = 0

    def propose(self):
        delta = self.step * (1.0 if self.rng.uniform() < 0.5 else -1.0)
        cand = self.x.copy()
        cand[self.j] += delta
        return cand

    def advance(self, d):
        self.j += 1
        if self.j == d:
            self.j = 0
            if not self.improved:
                self.step *= 0.5
            self.improved = False


def _hill_climb_batch(obj, oracle, x0_center, r, starts, gaps, steps, seed,
                      indices):
    """Coordinate-perturbation ascent on the selection gap from several
    starts at once, confined to the ball.

    All climbers advance in lockstep so each round's gap evaluations form
    one batch; every climber's proposal sequence depends only on its own
    RNG, so the result matches a one-start-at-a-time climb.
    """
    d = x0_center.size
    states = [_ClimbState(x, g, r, np.random.default_rng((seed, 7919, i)))
              for x, g, i in zip(starts, gaps, indices)]
    while True:
        live = [s for s in states
                if s.used < steps and s.step > 1e-12 * r]
        if not live:
            break
        cands, evals = [], []
        for s in live:
            cand = s.propose()
            s.used += 1
            if np.linalg.norm(cand - x0_center) <= r:
                cands.append(cand)
                evals.append(s)
        if cands:
            gs = _gaps_at(obj, oracle, np.array(cands))
            for s, cand, g in zip(evals, cands, gs):
                if g > s.best:
                    s.best, s.x = float(g), cand
                    s.improved = True
        for s in live:
            s.advance(d)
    k = int(np.argmax([s.best for s in states]))
    return states[k].best, states[k].x


def sup_gap_over_ball(obj: EmpiricalObjective, oracle: PopulationOracle,
                      x0, r: float, budget: int, seed: int = 0,
                      top_k: int = 10, refine_steps: int = 100):
    """Certified lower bound on sup_{x in B(x0, r)} ||G_S(x) - G(x)||.

    Probes are a seeded sequence with probe i a function of (seed, i) only,
    so a larger budget extends the set.  Hill-climb refinement starts from
    the top_k probes of every halved prefix (budget, ceil(budget/2), ...);
    doubling the budget keeps all previous prefixes, so the reported value
    never decreases under budget doubling at a fixed seed.
    Returns (value, argmax).
    """
    if not (r > 0 and budget >= 1):
        raise ValueError("need r > 0 and budget >= 1")
    x0 = np.asarray(x0, dtype=float).ravel()
    probes = np.vstack([x0[None, :], _ball_probes(x0, r, budget, seed)])
    gaps = _gaps_at(obj, oracle, probes)
    best_i = int(np.argmax(gaps))
    best_val, best_x = float(gaps[best_i]), probes[best_i].copy()

    starts: set[int] = {0}
    n = budget
    while n >= 1:
        # prefix of the raw probe sequence (offset 1 for the prepended x0)
        order = np.argsort(gaps[1:n + 1])[::-1][:top_k]
        starts.update(int(i) + 1 for i in order)
        if n == 1:
            break
        n = -(-n // 2)
    idx = sorted(starts)
    val, x = _hill_climb_batch(obj, oracle, x0, r,
                               [probes[i] for i in idx],
                               [float(gaps[i]) for i in idx],
                               refine_steps, seed, idx)
    if val > best_val:
        best_val, best_x = val, x
    return best_val, best_x


def sup_gap_over_ball_multi(objs, oracle: PopulationOracle, x0, r: float,
                            budget: int, seeds, top_k: int = 10,
                            refine_steps: int = 100):
    """sup_gap_over_ball for many objectives sharing one oracle.

    Probe and hill-climb evaluations from all trials are merged into large
    batches, so the expensive oracle pass is amortized.  Each trial keeps
    its own seeded probe and climb streams, so the returned values are
    identical to calling sup_gap_over_ball once per (objective, seed).
    Returns a list of (value, argmax) pairs.
    """
    if not (r > 0 and budget >= 1):
        raise ValueError("need r > 0 and budget >= 1")
    objs = list(objs)
    seeds = list(seeds)
    if len(objs) != len(seeds):
        raise ValueError("need one seed per objective")
    x0 = np.asarray(x0, dtype=float).ravel()
    d = x0.size

    probe_sets = [np.vstack([x0[None, :], _ball_probes(x0, r, budget, s)])
                  for s in seeds]
    GO = oracle.G_batch(np.vstack(probe_sets).T)
    gap_sets = []
    off = 0
    for obj, probes in zip(objs, probe_sets):
        B = len(probes)
        GS = G_S_batch(obj, np.ascontiguousarray(probes.T))
        gap_sets.append(np.linalg.norm(GS - GO[:, off:off + B], axis=0))
        off += B

    trials = []
    for obj, probes, gaps, seed in zip(objs, probe_sets, gap_sets, seeds):
        best_i = int(np.argmax(gaps))
        starts: set[int] = {0}
        n = budget
        while n >= 1:
            order = np.argsort(gaps[1:n + 1])[::-1][:top_k]
            starts.update(int(i) + 1 for i in order)
            if n == 1:
                break
            n = -(-n // 2)
        states = [_ClimbState(probes[i], float(gaps[i]), r,
                              np.random.default_rng((seed, 7919, i)))
                  for i in sorted(starts)]
        trials.append({"obj": obj, "states": states,
                       "best_val": float(gaps[best_i]),
                       "best_x": probes[best_i].copy()})

    while True:
        live_any = False
        batches = []       # (trial, [(state, cand), ...])
        for tr in trials:
            live = [s for s in tr["states"]
                    if s.used < refine_steps and s.step > 1e-12 * r]
            if not live:
                continue
            live_any = True
            pairs = []
            for s in live:
                cand = s.propose()
                s.used += 1
                if np.linalg.norm(cand - x0) <= r:
                    pairs.append((s, cand))
            batches.append((tr, live, pairs))
        if not live_any:
            break
        flat = [(tr, s, cand) for tr, _, pairs in batches
                for s, cand in pairs]
        if flat:
            X = np.array([cand for _, _, cand in flat])
            GO = oracle.G_batch(np.ascontiguousarray(X.T))
            off = 0
            for tr, _, pairs in batches:
                if not pairs:
                    continue
                B = len(pairs)
                Xt = np.array([cand for _, cand in pairs]).T
                GS = G_S_batch(tr["obj"], np.ascontiguousarray(Xt))
                gs = np.linalg.norm(GS - GO[:, off:off + B], axis=0)
                off += B
                for (s, cand), g in zip(pairs, gs):
                    if g > s.best:
                        s.best, s.x = float(g), cand
                        s.improved = True
        for _, live, _ in batches:
            for s in live:
                s.advance(d)

    out = []
    for tr in trials:
        best_val, best_x = tr["best_val"], tr["best_x"]
        for s in tr["states"]:
            if s.best > best_val:
                best_val, best_x = s.best, s.x
        out.append((best_val, best_x))
    return out


def write_gap_records(records, path, seed=None, m=None, d=None) -> None:
    """Serialize gap records to CSV with x coordinates spread over columns."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    dim = records[0].x.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(dim)]
                   + ["gap_selection", "gap_hausdorff", "oracle_err",
                      "seed", "m", "d"])
        for r in records:
            w.writerow([f"{v:.17g}" for v in r.x]
                       + [f"{r.gap_selection:.17g}", f"{r.gap_hausdorff:.17g}",
                          f"{r.oracle_err:.17g}", seed, m, d])
