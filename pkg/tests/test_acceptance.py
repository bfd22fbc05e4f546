"""Acceptance suite: one test (and one printed PASS/FAIL line) per criterion.

Criteria 1-5 and 10 are analytic or oracle-based and run in seconds.
Criteria 6-9 drive the CLI runners at full experiment scale and dominate
the wall-clock; their runtime caps are part of the criteria.
"""

import itertools
import json
import time

import numpy as np
import pytest

from subdiff_lab import analytic_1d as a1
from subdiff_lab import set_calculus as sc
from subdiff_lab import vc_toolkit as vc
from subdiff_lab.composite_models import (DistributionSpec, blind_deconv,
                                          c_grad, c_value, draw_dataset,
                                          matrix_sensing, phase_retrieval)
from subdiff_lab.experiment_cli import main as cli_main
from subdiff_lab.landscape import c_equation, solve_c_constant
from subdiff_lab.scalar_loss import abs_loss
from subdiff_lab.subgradient_maps import (EmpiricalObjective, G_S,
                                          empirical_subdiff)

DIST = DistributionSpec("gaussian", 1.0)
MASTER_SEED = 20260823


def _report(capsys, num, name, ok, detail=""):
    with capsys.disabled():
        tag = "PASS" if ok else "FAIL"
        suffix = f"  [{detail}]" if detail else ""
        print(f"\nacceptance {num:2d} {tag}: {name}{suffix}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def _run_cli(tmp, kind, **cfg):
    cfg.setdefault("experiment", kind.replace("-", "_"))
    cfg.setdefault("seed", MASTER_SEED)
    path = tmp / f"{kind}-{abs(hash(tuple(sorted(cfg.items(), key=repr))))}.json"
    path.write_text(json.dumps(cfg))
    out = tmp / f"out-{path.stem}"
    t0 = time.perf_counter()
    rc = cli_main([kind, "--config", str(path), "--out", str(out)])
    wall = time.perf_counter() - t0
    assert rc == 0, f"CLI {kind} exited {rc}"
    return json.loads((out / "fit.json").read_text()), out, wall


@pytest.fixture(scope="module")
def tmp(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# -- 1: pointwise metric vs selections at the origin ----------------------

def test_criterion_01_origin_gap(capsys):
    t0 = time.perf_counter()
    f1 = a1.pwl_abs()
    f2 = a1.pwl_scale(f1, 2.0)
    h0 = sc.hausdorff(a1.exact_subdiff(f1, 0.0), a1.exact_subdiff(f2, 0.0))
    zero_sel = (lambda x: 0.0, lambda x: 0.0)
    s0 = a1.selection_sup_diff(f1, f2, rule=zero_sel, points=[0.0])
    ok_open = True
    for w in [(-1.0, 1.0), (-0.1, 0.1), (-3.0, 0.5)]:
        d1 = a1.d1_metric(f1, f2, w)
        if d1 > a1.selection_sup_diff(f1, f2, w) + 1e-12:
            ok_open = False
    wall = time.perf_counter() - t0
    ok = abs(h0 - 1.0) <= 1e-12 and s0 == 0.0 and ok_open and wall < 1.0
    _report(capsys, 1, "origin Hausdorff gap 1, closed-set selection gap 0",
            ok, f"H={h0:.3g} sel={s0:.3g} wall={wall:.2f}s")


# -- 2: staircase approximation distances ---------------------------------

def test_criterion_02_staircase_metrics(capsys):
    t0 = time.perf_counter()
    ok = True
    for n in range(1, 101):
        f1 = a1.pwl_abs()
        f2 = a1.pwl_sum(a1.pwl_abs(1.0 / n, 0.5), a1.pwl_abs(-1.0 / n, 0.5))
        w = (-2.0, 2.0)
        if abs(a1.d1_metric(f1, f2, w) - 1.0) > 1e-12:
            ok = False
        if abs(a1.d2_graph_metric(f1, f2, w) - 1.0 / n) > 1e-12:
            ok = False
    rng = np.random.default_rng(MASTER_SEED)
    for _ in range(1000):
        g1 = a1.random_pwl_convex(rng)
        g2 = a1.random_pwl_convex(rng)
        w = (-1.0, 1.0)
        if a1.d2_graph_metric(g1, g2, w) > a1.d1_metric(g1, g2, w) + 1e-12:
            ok = False
    wall = time.perf_counter() - t0
    ok = ok and wall < 10.0
    _report(capsys, 2, "d1=1 and d2=1/n staircase sweep, d2<=d1 on pairs",
            ok, f"wall={wall:.1f}s")


# -- 3: selection bound on open windows -----------------------------------

def _random_selection(f, rng):
    """A valid selection: forced slope off kinks, random mix at kinks."""
    mix = rng.uniform(size=f.breakpoints.size)

    def g(x):
        idx = np.searchsorted(f.breakpoints, x)
        if idx < f.breakpoints.size and f.breakpoints[idx] == x:
            lo, hi = f.slopes[idx], f.slopes[idx + 1]
            return float(lo + mix[idx] * (hi - lo))
        return float(f.slopes[f.piece_index(x)])

    return g


def test_criterion_03_selection_bound_suite(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED + 1)
    ok = True
    for _ in range(1000):
        f1 = a1.random_pwl_convex(rng)
        f2 = a1.random_pwl_convex(rng)
        w = (-1.0, 1.0)
        d1 = a1.d1_metric(f1, f2, w)
        if d1 > a1.selection_sup_diff(f1, f2, w) + 1e-12:
            ok = False
        for _ in range(10):
            g1 = _random_selection(f1, rng)
            g2 = _random_selection(f2, rng)
            if d1 > a1.selection_sup_diff(f1, f2, w, rule=(g1, g2)) + 1e-12:
                ok = False
                break
    wall = time.perf_counter() - t0
    ok = ok and wall < 30.0
    _report(capsys, 3, "metric bounded by selection sup on open windows",
            ok, f"wall={wall:.1f}s")


# -- 4: set-calculus oracle equivalence -----------------------------------

def test_criterion_04_set_calculus_oracles(capsys):
    from scipy.optimize import minimize
    from scipy.spatial import ConvexHull, QhullError

    def hull_dist(p, V):
        # min ||V^T lam - p|| over the simplex (a convex QP); solved by
        # SLSQP from the uniform weight vector and the nearest vertex.
        V = np.atleast_2d(V)
        if V.shape[0] == 1:
            return float(np.linalg.norm(p - V[0]))
        k = V.shape[0]
        cons = [{"type": "eq", "fun": lambda lam: np.sum(lam) - 1.0,
                 "jac": lambda lam: np.ones(k)}]
        nearest = np.zeros(k)
        nearest[int(np.argmin(np.sum((V - p) ** 2, axis=1)))] = 1.0
        best = np.inf
        for lam0 in (np.full(k, 1.0 / k), nearest):
            r = minimize(lambda lam: float(np.sum((V.T @ lam - p) ** 2)),
                         lam0, method="SLSQP", constraints=cons,
                         bounds=[(0.0, 1.0)] * k,
                         options={"maxiter": 200, "ftol": 1e-14})
            best = min(best, r.fun)
        return float(np.sqrt(max(best, 0.0)))

    def enum(body):
        if body.kind == "zonotope":
            P = np.array([body.center + s @ body.generators
                          for s in itertools.product([-1.0, 1.0],
                                                     repeat=body.generators.shape[0])])
        else:
            P = sc.body_vertices(body)
        P = np.unique(P, axis=0)
        if P.shape[0] > P.shape[1] + 1:
            try:
                P = P[ConvexHull(P).vertices]
            except QhullError:
                pass  # flat body; keep the full point set
        return P

    t0 = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED + 2)
    ok = True
    for _ in range(200):
        d = int(rng.integers(2, 4))
        if rng.random() < 0.5:
            A = sc.ConvexBody.vpolytope(rng.normal(size=(int(rng.integers(2, 6)), d)))
        else:
            A = sc.ConvexBody.zonotope(rng.normal(size=d),
                                       rng.normal(size=(int(rng.integers(1, 9)), d)))
        B = sc.ConvexBody.zonotope(rng.normal(size=d),
                                   rng.normal(size=(int(rng.integers(1, 5)), d)))
        VA, VB = enum(A), enum(B)
        dev_o = max(hull_dist(p, VB) for p in VA)
        if abs(sc.deviation(A, B) - dev_o) > 1e-6:
            ok = False
        h_o = max(dev_o, max(hull_dist(p, VA) for p in VB))
        if abs(sc.hausdorff(A, B) - h_o) > 1e-6:
            ok = False
    for _ in range(1000):
        PA, PB = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        X = rng.normal(size=(3, 2))
        if sc.hausdorff(sc.convex_hull(np.vstack([PA, X])),
                        sc.convex_hull(np.vstack([PB, X]))) \
                > sc.hausdorff(sc.convex_hull(PA), sc.convex_hull(PB)) + 1e-9:
            ok = False
        A = sc.ConvexBody.zonotope(rng.normal(size=2), rng.normal(size=(2, 2)))
        B = sc.ConvexBody.zonotope(rng.normal(size=2), rng.normal(size=(2, 2)))
        C = sc.ConvexBody.zonotope(rng.normal(size=2), rng.normal(size=(2, 2)))
        if sc.hausdorff(sc.minkowski_sum(A, C), sc.minkowski_sum(B, C)) \
                > sc.hausdorff(A, B) + 1e-9:
            ok = False
    wall = time.perf_counter() - t0
    ok = ok and wall < 60.0
    _report(capsys, 4, "deviation/Hausdorff match brute-force enumeration",
            ok, f"wall={wall:.1f}s")


# -- 5: subgradient correctness -------------------------------------------

def test_criterion_05_subgradient_correctness(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED + 3)
    models = [phase_retrieval(5), blind_deconv(3, 3), matrix_sensing(3, 1)]
    ok = True
    for model in models:
        xbar = rng.standard_normal(model.dim)
        xbar /= np.linalg.norm(xbar)
        data = draw_dataset(model, DIST, xbar, 40, seed=int(rng.integers(1 << 30)))
        obj = EmpiricalObjective(model, abs_loss(), data)
        for _ in range(334):
            x = rng.standard_normal(model.dim)
            body = empirical_subdiff(obj, x)
            if sc.dist_point_to_body(G_S(obj, x), body) >= 1e-10:
                ok = False
                break
        for i in range(3):
            x = rng.standard_normal(model.dim)
            g = c_grad(model, x, data[i])
            eps = 1e-6
            for j in range(model.dim):
                e = np.zeros(model.dim)
                e[j] = eps
                fd = (c_value(model, x + e, data[i])
                      - c_value(model, x - e, data[i])) / (2 * eps)
                if abs(g[j] - fd) > 1e-6:
                    ok = False
    wall = time.perf_counter() - t0
    ok = ok and wall < 30.0
    _report(capsys, 5, "G_S in empirical zonotope; gradients match FD",
            ok, f"wall={wall:.1f}s")


# -- 6: rate in sample size -----------------------------------------------

def test_criterion_06_rate_in_m(capsys, tmp):
    details, ok, wall_total = [], True, 0.0
    for name, extra in [("pr", {"model": "pr", "d": 10}),
                        ("bd", {"model": "bd", "d1": 5, "d2": 5}),
                        ("ms", {"model": "ms", "D": 4, "r0": 2})]:
        fit, _, wall = _run_cli(tmp, "rate-m", **extra)
        wall_total += wall
        slope, r2 = fit["slope"], fit["r2"]
        details.append(f"{name}: slope={slope:.3f} r2={r2:.3f}")
        if not -0.65 <= slope <= -0.35:
            ok = False
        if name == "pr" and r2 < 0.9:
            ok = False
    ok = ok and wall_total < 1200.0
    _report(capsys, 6, "sup-gap decays ~ m^(-1/2) for all three models",
            ok, "; ".join(details) + f"; wall={wall_total:.0f}s")


# -- 7: rate in dimension -------------------------------------------------

def test_criterion_07_rate_in_d(capsys, tmp):
    fit, _, wall = _run_cli(tmp, "rate-d")
    slope = fit["slope"]
    ok = 0.3 <= slope <= 0.8 and fit["medians_monotone"] and wall < 600.0
    _report(capsys, 7, "sup-gap grows with dimension, medians monotone",
            ok, f"slope={slope:.3f} monotone={fit['medians_monotone']} "
                f"wall={wall:.0f}s")


# -- 8: peeling proportionality -------------------------------------------

def test_criterion_08_peeling(capsys, tmp):
    fit, _, wall = _run_cli(tmp, "peeling")
    slope = fit["slope"]
    ok = 0.7 <= slope <= 1.3 and fit["gap_at_zero"] == 0.0 and wall < 300.0
    _report(capsys, 8, "pointwise gap proportional to ||x||, zero at 0",
            ok, f"slope={slope:.3f} gap0={fit['gap_at_zero']:.3g} "
                f"wall={wall:.0f}s")


# -- 9: landscape ---------------------------------------------------------

def test_criterion_09_landscape(capsys, tmp):
    c = solve_c_constant()
    ok = 0.4 < c < 0.5 and abs(c_equation(c) - np.pi / 4.0) < 1e-12
    fit, out, wall = _run_cli(tmp, "landscape")
    rho = fit["spearman_m_vs_median_deviation"]
    worst = 0.0
    header, *rows = (out / "records.csv").read_text().strip().splitlines()
    col = header.split(",").index("worst_dist_to_Z")
    for row in rows:
        worst = max(worst, float(row.split(",")[col]))
    ok = ok and worst <= 0.2 and rho <= -0.8 and wall < 1200.0
    _report(capsys, 9, "ring constant exact; terminals near Z; deviation "
                       "decays in m",
            ok, f"c={c:.6f} worst={worst:.3f} spearman={rho:.2f} "
                f"wall={wall:.0f}s")


# -- 10: VC toolkit -------------------------------------------------------

def test_criterion_10_vc_toolkit(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED + 4)
    ok = True
    # sign-pattern caps (the counter asserts the cap internally)
    normals = rng.standard_normal((4, 3))
    vc.count_sign_patterns([lambda x, w=w: float(w @ x) for w in normals],
                           dim=3, degree=1, budget=2000, seed=5)
    families = [vc.ThresholdFamily(phase_retrieval(1)),
                vc.ThresholdFamily(phase_retrieval(2)),
                vc.ThresholdFamily(blind_deconv(2, 2)),
                vc.ThresholdFamily(matrix_sensing(2, 1))]
    details = []
    for fam in families:
        lo = vc.vc_lower_bound(fam, N_max=8, budget=300, seed=6)
        hi = vc.vc_upper_bound_poly(fam.d, fam.degree)
        details.append(f"{fam.model.kind}:{lo}<={hi}")
        if not 1 <= lo <= hi:
            ok = False
        # re-run the shatter check on the seeded configurations the lower
        # bound scanned; a certified set of this size is known to exist
        n = min(lo, 2)
        cert, pts = None, None
        for c in range(5):
            pts = vc.random_points(fam.model, n,
                                   np.random.default_rng((6, n, c)))
            cert = vc.check_shatter(fam, pts, budget=300, seed=6 + 31 * c)
            if cert.shattered:
                break
        if not cert.shattered:
            ok = False
        for lab, wit in cert.witnesses.items():
            if wit is None:
                ok = False
                continue
            x, t = wit
            got = tuple(int(fam.c(np.asarray(x), p) >= t) for p in pts)
            if got != tuple(int(ch) for ch in lab):
                ok = False
    wall = time.perf_counter() - t0
    ok = ok and wall < 300.0
    _report(capsys, 10, "sign-pattern caps, certificates re-verify, bounds "
                        "ordered", ok,
            " ".join(details) + f" wall={wall:.0f}s")


# -- 11: determinism ------------------------------------------------------

def test_criterion_11_determinism(capsys, tmp):
    specs = [("rate-m", {"d": 4, "m_grid": [32, 64, 128, 256], "trials": 3,
                         "m_pop": 4000, "probe_budget": 6,
                         "refine_steps": 4}),
             ("peeling", {"d": 3, "m": 128, "trials": 3, "m_pop": 2000}),
             ("landscape", {"d": 3, "m_grid": [64, 128, 256], "trials": 2,
                            "n_starts": 5, "max_iter": 300,
                            "expand_steps": 10})]
    ok = True
    for kind, extra in specs:
        cfg = dict(extra, experiment=kind.replace("-", "_"),
                   seed=MASTER_SEED + 5)
        path = tmp / f"det-{kind}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for threads in ("1", "8"):
            out = tmp / f"det-{kind}-t{threads}"
            rc = cli_main([kind, "--config", str(path), "--out", str(out),
                           "--threads", threads])
            assert rc == 0
            outs.append((out / "records.csv").read_bytes())
        if outs[0] != outs[1]:
            ok = False
    _report(capsys, 11, "records.csv byte-identical at 1 and 8 threads", ok)
