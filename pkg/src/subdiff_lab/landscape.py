"""Stationary-point landscape of noiseless robust phase retrieval.

The population objective Phi(x) = E|<a,x>^2 - <a,xbar>^2| (Gaussian a) has
stationary set

    Z = {0} ∪ {±xbar} ∪ {x ⊥ xbar : ||x|| = c ||xbar||},

where c is the unique root of  pi/4 = c/(1+c^2) + arctan(c).  This module
solves for c, measures distances to Z in closed form, hunts empirical
stationary points (0 in the subdifferential zonotope), and aggregates the
one-sided deviation D(Z_S, Z).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .composite_models import c_grads, c_values
from .set_calculus import ConvexBody, dist_point_to_body
from .subgradient_maps import EmpiricalObjective, G_S

__all__ = [
    "LandscapeConfig",
    "StationaryPointReport",
    "solve_c_constant",
    "c_equation",
    "dist_to_population_Z",
    "stationarity_residual",
    "find_stationary_points",
    "default_starts",
    "deviation_ZS_to_Z",
    "write_reports_csv",
]


def c_equation(c: float) -> float:
    """The strictly increasing map whose value pi/4 pins the ring radius."""
    return c / (1.0 + c * c) + np.arctan(c)


def solve_c_constant() -> float:
    """Unique positive root of pi/4 = c/(1+c^2) + arctan(c)."""
    target = np.pi / 4.0
    c = brentq(lambda t: c_equation(t) - target, 1e-8, 2.0, xtol=1e-15)
    return float(c)


def dist_to_population_Z(x, xbar, c: float | None = None) -> float:
    """Distance from x to Z = {0} ∪ {±xbar} ∪ ring, in closed form.

    The ring term decomposes x into its component along xbar (alpha) and
    the orthogonal remainder; nearest ring point sits at radius
    rho = c*||xbar|| along the orthogonal direction.
    """
    x = np.asarray(x, dtype=float).ravel()
    xbar = np.asarray(xbar, dtype=float).ravel()
    nb = np.linalg.norm(xbar)
    if nb == 0.0:
        raise ValueError("xbar must be nonzero")
    if c is None:
        c = solve_c_constant()
    rho = c * nb
    alpha = float(x @ xbar) / nb
    xperp = x - alpha * xbar / nb
    ring = np.hypot(alpha, np.linalg.norm(xperp) - rho)
    return float(min(np.linalg.norm(x),
                     np.linalg.norm(x - xbar),
                     np.linalg.norm(x + xbar),
                     ring))


# -- empirical stationarity ----------------------------------------------

@dataclass(frozen=True)
class LandscapeConfig:
    """Solver knobs; tolerances default to scale-aware values at run time."""

    tol: float | None = None        # accept when dist(0, dPhi_S(x)) <= tol
    max_iter: int = 10_000
    gamma0: float | None = None     # initial step, default 0.1*||xbar||
    kink_radius: float = 1e-4       # x-space radius for relaxed kink activity
    polish_iters: int = 400
    cluster_radius: float = 1e-2    # in units of ||xbar||


def stationarity_residual(obj: EmpiricalObjective, x,
                          kink_radius: float) -> float:
    """dist(0, dPhi_S(x)) with relaxed kink activity.

    Sample i is treated as kink-active when |c_i(x) - t_j| is within
    kink_radius * ||grad c_i(x)||: an x-perturbation of that size could put
    it exactly on the kink.  Active samples widen the zonotope; the
    residual is the point-to-zonotope distance from the origin.
    """
    x = np.asarray(x, dtype=float).ravel()
    z = c_values(obj.model, x, obj.data)
    grads = c_grads(obj.model, x, obj.data)
    tol_i = kink_radius * np.linalg.norm(grads, axis=1)
    g = np.broadcast_to(np.asarray(obj.loss.smooth_deriv(z), dtype=float),
                        z.shape).copy()
    lo, hi = g.copy(), g
    for k in obj.loss.kinks:
        lo = lo + k.jump * (z > k.location + tol_i)
        hi = hi + k.jump * (z >= k.location - tol_i)
    m = len(obj.data)
    mid = 0.5 * (lo + hi)
    halfwidth = 0.5 * (hi - lo)
    center = (mid @ grads) / m
    active = halfwidth > 0.0
    if not np.any(active):
        return float(np.linalg.norm(center))
    gens = (halfwidth[active][:, None] * grads[active]) / m
    body = ConvexBody.zonotope(center, gens)
    return dist_point_to_body(np.zeros(x.size), body)


@dataclass
class StationaryPointReport:
    point: np.ndarray
    residual: float
    iterations: int
    start_index: int
    dist_to_Z: float
    accepted: bool


def _subgradient_phase(obj, x0, gamma0, n_iter):
    """Subgradient descent on Phi_S with a Polyak step (the noiseless
    minimum value is 0) capped by a diminishing gamma0/sqrt(k) schedule;
    returns the final iterate and the best-value iterate.  On sharp
    objectives the Polyak step converges linearly once near a minimizer."""
    x = np.asarray(x0, dtype=float).copy()
    best_x, best_v = x.copy(), obj.value(x)
    for k in range(1, n_iter + 1):
        g = G_S(obj, x)
        ng = np.linalg.norm(g)
        if ng == 0.0:
            return x, x, k
        v = obj.value(x)
        step = min(v / ng, gamma0 / np.sqrt(k))
        x = x - step * (g / ng)
        if v < best_v:
            best_v, best_x = v, x.copy()
    return x, best_x, n_iter


def find_stationary_points(obj: EmpiricalObjective, xbar, starts,
                           cfg: LandscapeConfig = LandscapeConfig()):
    """Hunt empirical stationary points from each start.

    Starts that are already near-stationary (residual within 5x the
    acceptance tolerance) are polished in place by Nelder-Mead on the
    residual, so starts planted near saddle components settle onto the
    nearby stationary point instead of sliding to a global minimizer.
    All other starts run a Polyak-capped subgradient descent first, then
    the more stationary of the final/best iterates is polished.  Failures
    are reported, never raised.
    """
    xbar = np.asarray(xbar, dtype=float).ravel()
    nb = np.linalg.norm(xbar)
    gamma0 = cfg.gamma0 if cfg.gamma0 is not None else 0.1 * nb
    if cfg.tol is not None:
        tol = cfg.tol
    else:
        grad_scale = float(np.mean(np.sum(obj.data.features ** 2, axis=-1)
                                   .reshape(len(obj.data), -1).sum(axis=1)))
        tol = 1e-3 * nb * grad_scale
    c = solve_c_constant()

    def polish(x, res):
        if res == 0.0 or cfg.polish_iters <= 0:
            return x, res
        out = minimize(
            lambda y: stationarity_residual(obj, y, cfg.kink_radius),
            x, method="Nelder-Mead",
            options={"maxiter": cfg.polish_iters,
                     "xatol": 1e-12, "fatol": 1e-14})
        if out.fun < res:
            return np.asarray(out.x, dtype=float), float(out.fun)
        return x, res

    reports = []
    for idx, x0 in enumerate(starts):
        x0 = np.asarray(x0, dtype=float).ravel()
        res0 = stationarity_residual(obj, x0, cfg.kink_radius)
        iters = 0
        x_cur, res_cur = x0, res0
        if res0 <= 5.0 * tol:
            x_cur, res_cur = polish(x0, res0)
        if res_cur > tol:
            x_end, x_best, iters = _subgradient_phase(obj, x0, gamma0,
                                                      cfg.max_iter)
            cands = [x_end, x_best]
            resids = [stationarity_residual(obj, xc, cfg.kink_radius)
                      for xc in cands]
            j = int(np.argmin(resids))
            x_d, res_d = polish(cands[j], resids[j])
            if res_d < res_cur:
                x_cur, res_cur = x_d, res_d
        reports.append(StationaryPointReport(
            point=x_cur, residual=res_cur, iterations=iters,
            start_index=idx,
            dist_to_Z=dist_to_population_Z(x_cur, xbar, c=c),
            accepted=bool(res_cur <= tol)))
    return reports


def default_starts(xbar, n: int, seed: int) -> list[np.ndarray]:
    """A start portfolio covering every component of Z: the origin, the
    ground truth and its negation (perturbed), planted ring points, and
    random points in a ball; per-start RNG derived from (seed, index)."""
    xbar = np.asarray(xbar, dtype=float).ravel()
    d = xbar.size
    nb = np.linalg.norm(xbar)
    rho = solve_c_constant() * nb
    starts = []
    for i in range(n):
        rng = np.random.default_rng((seed, i))
        kind = i % 4
        if kind == 0 and i == 0:
            starts.append(np.zeros(d))
        elif kind == 0:
            starts.append(0.05 * nb * rng.standard_normal(d))
        elif kind == 1:
            sign = 1.0 if (i // 4) % 2 == 0 else -1.0
            starts.append(sign * xbar + 0.05 * nb * rng.standard_normal(d))
        elif kind == 2 and d >= 2:
            v = rng.standard_normal(d)
            v -= (v @ xbar) / (nb * nb) * xbar
            v /= np.linalg.norm(v)
            starts.append(rho * v)
        else:
            starts.append(1.5 * nb * rng.standard_normal(d) / np.sqrt(d))
    return starts


def expand_within_tolerance(obj: EmpiricalObjective, report, xbar,
                            tol: float, kink_radius: float, seed: int,
                            steps: int = 200):
    """Push an accepted terminal away from Z while keeping it stationary.

    D(Z_S, Z) is a supremum over the (tolerance-relaxed) stationary set;
    terminals produced by residual minimization sit well inside that set
    and underestimate it.  This greedy walk proposes random moves, keeps
    only those whose verified residual stays within tol, and maximizes the
    closed-form distance to Z.  The result is still a certified member of
    the relaxed stationary set, so the deviation estimate remains a lower
    bound on the true one-sided deviation.
    """
    xbar = np.asarray(xbar, dtype=float).ravel()
    c = solve_c_constant()
    rng = np.random.default_rng((seed, report.start_index))
    x = report.point.copy()
    res = report.residual
    dbest = dist_to_population_Z(x, xbar, c=c)
    step = 0.04 * np.linalg.norm(xbar)
    fails = 0
    for _ in range(steps):
        cand = x + step * rng.standard_normal(x.size)
        r = stationarity_residual(obj, cand, kink_radius)
        if r <= tol:
            dc = dist_to_population_Z(cand, xbar, c=c)
            if dc > dbest:
                x, res, dbest = cand, r, dc
                fails = 0
                continue
        fails += 1
        if fails >= 10:
            step *= 0.7
            fails = 0
    return StationaryPointReport(point=x, residual=res,
                                 iterations=report.iterations,
                                 start_index=report.start_index,
                                 dist_to_Z=dbest, accepted=True)


def _cluster(points: list[np.ndarray], radius: float) -> list[np.ndarray]:
    reps: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > radius for q in reps):
            reps.append(p)
    return reps


def deviation_ZS_to_Z(reports, xbar, c: float | None = None,
                      cluster_radius: float = 1e-2) -> float:
    """max over accepted (clustered) terminals of the distance to Z."""
    xbar = np.asarray(xbar, dtype=float).ravel()
    ok = [r for r in reports if r.accepted]
    if not ok:
        raise ValueError("no accepted stationary points")
    ok.sort(key=lambda r: r.residual)
    reps = _cluster([r.point for r in ok],
                    cluster_radius * np.linalg.norm(xbar))
    if c is None:
        c = solve_c_constant()
    return max(dist_to_population_Z(p, xbar, c=c) for p in reps)


def write_reports_csv(reports, path, seed=None) -> None:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    d = reports[0].point.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(d)]
                   + ["residual", "iterations", "start_index", "dist_to_Z",
                      "accepted", "seed"])
        for r in reports:
            w.writerow([f"{v:.17g}" for v in r.point]
                       + [f"{r.residual:.17g}", r.iterations, r.start_index,
                          f"{r.dist_to_Z:.17g}", int(r.accepted), seed])
