"""Config-driven Monte Carlo experiment runner.

Experiments: decay of the uniform subgradient gap in the sample size
(rate-m), growth in the dimension (rate-d), proportionality of the
pointwise gap to ||x|| (peeling), stationary-set deviation sweeps
(landscape), and an analytic verification suite (verify).

Everything is seeded: each (cell, trial) pair gets a derived seed, rows
are sorted before writing, and outputs are byte-identical regardless of
the thread count.  Outputs per run: records.csv, fit.json,
config.echo.json.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import analytic_1d as a1
from . import landscape as ls
from . import set_calculus as sc
from . import vc_toolkit as vc
from .composite_models import (DistributionSpec, blind_deconv, draw_dataset,
                               generic_linear, matrix_sensing,
                               phase_retrieval)
from .scalar_loss import abs_loss, hinge_loss, pinball_loss
from .subgradient_maps import (EmpiricalObjective, MegaSampleOracle,
                               pointwise_gap, sup_gap_over_ball,
                               sup_gap_over_ball_multi)

__all__ = ["main", "load_config", "fit_loglog", "RateFit"]


class ConfigError(Exception):
    pass


_COMMON_KEYS = {"experiment", "seed", "model", "loss", "m_pop", "trials"}
_ALLOWED_KEYS = {
    "rate_m": _COMMON_KEYS | {"d", "d1", "d2", "D", "r0", "m_grid", "radius",
                              "probe_budget", "refine_top_k", "refine_steps"},
    "rate_d": _COMMON_KEYS | {"m", "d_grid", "radius", "probe_budget",
                              "refine_top_k", "refine_steps"},
    "peeling": _COMMON_KEYS | {"d", "m", "norm_grid"},
    "landscape": _COMMON_KEYS | {"d", "m_grid", "n_starts", "max_iter",
                                 "kink_radius", "tol", "tol_scale",
                                 "polish_iters", "expand_steps"},
    "verify": {"experiment", "seed", "n_pairs"},
}

_DEFAULTS = {
    "rate_m": {"model": "pr", "loss": "abs", "d": 10, "d1": 5, "d2": 5,
               "D": 4, "r0": 2, "m_grid": [2 ** k for k in range(7, 14)],
               "trials": 50, "radius": 1.0, "probe_budget": 10,
               "refine_top_k": 2, "refine_steps": 8, "m_pop": 10 ** 6},
    "rate_d": {"model": "pr", "loss": "abs", "m": 2 ** 12,
               "d_grid": [2, 4, 8, 16, 32], "trials": 50, "radius": 1.0,
               "probe_budget": 10, "refine_top_k": 2, "refine_steps": 8,
               "m_pop": 10 ** 6},
    "peeling": {"model": "pr", "loss": "abs", "d": 5, "m": 2 ** 12,
                "norm_grid": [2.0 ** (-k) for k in range(4, -1, -1)],
                "trials": 20, "m_pop": 10 ** 6},
    "landscape": {"model": "pr", "loss": "abs", "d": 5,
                  "m_grid": [2 ** k for k in range(8, 14)], "trials": 5,
                  "n_starts": 50, "max_iter": 2000, "kink_radius": 1e-3,
                  "tol": None, "tol_scale": 0.5, "polish_iters": 400,
                  "expand_steps": 200, "m_pop": 0},
    "verify": {"n_pairs": 200},
}


def load_config(path, seed_override=None) -> dict:
    """Read and validate a JSON config; unknown keys are errors."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    kind = raw.get("experiment")
    if kind not in _ALLOWED_KEYS:
        raise ConfigError(f"unknown or missing experiment kind: {kind!r}")
    unknown = set(raw) - _ALLOWED_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(_DEFAULTS[kind])
    cfg.update(raw)
    cfg["experiment"] = kind
    if seed_override is not None:
        cfg["seed"] = seed_override
    if "seed" not in cfg:
        raise ConfigError("a master seed is required")
    if kind != "verify":
        grid = cfg.get("m_grid") or cfg.get("d_grid") or cfg.get("norm_grid")
        if not grid:
            raise ConfigError("grid must be nonempty")
        if cfg["trials"] < 1:
            raise ConfigError("trials must be >= 1")
    return cfg


def _model_from_cfg(cfg, d=None):
    name = cfg["model"]
    if name == "pr":
        return phase_retrieval(d if d is not None else cfg["d"])
    if name == "bd":
        return blind_deconv(cfg["d1"], cfg["d2"])
    if name == "ms":
        return matrix_sensing(cfg["D"], cfg["r0"])
    if name == "generic":
        return generic_linear(d if d is not None else cfg["d"])
    raise ConfigError(f"unknown model {name!r}")


def _loss_from_cfg(cfg):
    name = cfg["loss"]
    if name == "abs":
        return abs_loss()
    if name == "hinge":
        return hinge_loss()
    if name.startswith("pinball:"):
        return pinball_loss(float(name.split(":", 1)[1]))
    raise ConfigError(f"unknown loss {name!r}")


def _derived_seed(master: int, *parts: int) -> int:
    return int(np.random.SeedSequence((master,) + parts).generate_state(1)[0])


def _unit_vector(dim: int, seed) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


# -- fitting --------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    cells: dict        # grid value -> {median, q25, q75, n}

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r2": self.r2,
                "cells": {str(k): v for k, v in sorted(self.cells.items())}}


def fit_loglog(values_by_cell: dict) -> RateFit:
    """OLS of log(median value) on log(grid value); needs >= 4 cells."""
    if len(values_by_cell) < 4:
        raise ValueError("need at least 4 grid cells to fit")
    cells, xs, ys = {}, [], []
    for key in sorted(values_by_cell):
        vals = np.asarray(values_by_cell[key], dtype=float)
        med = float(np.median(vals))
        if not med > 0:
            raise ValueError(f"nonpositive median at cell {key}")
        cells[key] = {"median": med,
                      "q25": float(np.quantile(vals, 0.25)),
                      "q75": float(np.quantile(vals, 0.75)),
                      "n": int(vals.size)}
        xs.append(np.log(float(key)))
        ys.append(np.log(med))
    xs, ys = np.array(xs), np.array(ys)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(slope), float(intercept), float(r2), cells)


# -- experiment drivers ---------------------------------------------------

def _run_cells(task, jobs, threads):
    """Run task over (cell_index, cell, trial) jobs; order-independent."""
    if threads <= 1:
        return [task(*j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda j: task(*j), jobs))


def _write_records(path, header, rows):
    rows = sorted(rows)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                f"{v:.17g}" if isinstance(v, float) else str(v)
                for v in row) + "\n")


def run_rate_m(cfg, out_dir, threads):
    master = cfg["seed"]
    model = _model_from_cfg(cfg)
    loss = _loss_from_cfg(cfg)
    dist = DistributionSpec("gaussian", 1.0)
    xbar = _unit_vector(model.dim, (master, 0xBA))
    oracle = MegaSampleOracle(model, loss, dist, xbar, cfg["m_pop"],
                              _derived_seed(master, 0xFACE))
    x0 = np.zeros(model.dim)

    rows = []
    for ci, m in enumerate(sorted(cfg["m_grid"])):
        objs, seeds = [], []
        for t in range(cfg["trials"]):
            ts = _derived_seed(master, ci, t)
            data = draw_dataset(model, dist, xbar, m, ts)
            objs.append(EmpiricalObjective(model, loss, data))
            seeds.append(ts)
        # batching all trials of a cell keeps the mega-sample oracle's
        # memory passes to a minimum; results match the per-trial path
        results = sup_gap_over_ball_multi(objs, oracle, x0, cfg["radius"],
                                          cfg["probe_budget"], seeds=seeds,
                                          top_k=cfg["refine_top_k"],
                                          refine_steps=cfg["refine_steps"])
        for t, (val, _) in enumerate(results):
            rows.append((m, t, master, seeds[t], model.dim, cfg["model"],
                         cfg["loss"], val))
    _write_records(out_dir / "records.csv",
                   ["m", "trial", "master_seed", "trial_seed", "d",
                    "model", "loss", "sup_gap"], rows)
    by_cell = {}
    for row in rows:
        by_cell.setdefault(row[0], []).append(row[-1])
    fit = fit_loglog(by_cell)
    return fit.to_json()


def run_rate_d(cfg, out_dir, threads):
    master = cfg["seed"]
    loss = _loss_from_cfg(cfg)
    dist = DistributionSpec("gaussian", 1.0)
    rows = []
    for ci, d in enumerate(sorted(cfg["d_grid"])):
        model = _model_from_cfg(cfg, d=d)
        xbar = _unit_vector(d, (master, 0xBA, d))
        oracle = MegaSampleOracle(model, loss, dist, xbar, cfg["m_pop"],
                                  _derived_seed(master, 0xFACE, d))
        x0 = np.zeros(d)

        objs, seeds = [], []
        for t in range(cfg["trials"]):
            ts = _derived_seed(master, ci, t)
            data = draw_dataset(model, dist, xbar, cfg["m"], ts)
            objs.append(EmpiricalObjective(model, loss, data))
            seeds.append(ts)
        results = sup_gap_over_ball_multi(objs, oracle, x0, cfg["radius"],
                                          cfg["probe_budget"], seeds=seeds,
                                          top_k=cfg["refine_top_k"],
                                          refine_steps=cfg["refine_steps"])
        for t, (val, _) in enumerate(results):
            rows.append((d, t, master, seeds[t], cfg["m"], cfg["model"],
                         cfg["loss"], val))
    _write_records(out_dir / "records.csv",
                   ["d", "trial", "master_seed", "trial_seed", "m",
                    "model", "loss", "sup_gap"], rows)
    by_cell = {}
    for row in rows:
        by_cell.setdefault(row[0], []).append(row[-1])
    fit = fit_loglog(by_cell)
    out = fit.to_json()
    meds = [out["cells"][str(d)]["median"] for d in sorted(cfg["d_grid"])]
    out["medians_monotone"] = bool(np.all(np.diff(meds) >= 0))
    return out


def run_peeling(cfg, out_dir, threads):
    master = cfg["seed"]
    model = _model_from_cfg(cfg)
    loss = _loss_from_cfg(cfg)
    dist = DistributionSpec("gaussian", 1.0)
    xbar = _unit_vector(model.dim, (master, 0xBA))
    oracle = MegaSampleOracle(model, loss, dist, xbar, cfg["m_pop"],
                              _derived_seed(master, 0xFACE))

    def task(ci, norm, t):
        ts = _derived_seed(master, ci, t)
        data = draw_dataset(model, dist, xbar, cfg["m"], ts)
        obj = EmpiricalObjective(model, loss, data)
        x = norm * _unit_vector(model.dim, (ts, 17))
        rec = pointwise_gap(obj, oracle, x)
        return (norm, t, master, ts, cfg["m"], model.dim, cfg["model"],
                cfg["loss"], rec.gap_selection)

    rows = []
    for ci, norm in enumerate(sorted(cfg["norm_grid"])):
        jobs = [(ci, float(norm), t) for t in range(cfg["trials"])]
        rows.extend(_run_cells(task, jobs, threads))
    _write_records(out_dir / "records.csv",
                   ["norm_x", "trial", "master_seed", "trial_seed", "m", "d",
                    "model", "loss", "gap_selection"], rows)
    by_cell = {}
    for row in rows:
        by_cell.setdefault(row[0], []).append(row[-1])
    fit = fit_loglog(by_cell)
    out = fit.to_json()
    # the gap vanishes identically at the origin (all gradients are zero)
    data0 = draw_dataset(model, dist, xbar, cfg["m"],
                         _derived_seed(master, 0, 0))
    obj0 = EmpiricalObjective(model, loss, data0)
    out["gap_at_zero"] = pointwise_gap(obj0, oracle,
                                       np.zeros(model.dim)).gap_selection
    return out


def run_landscape(cfg, out_dir, threads):
    master = cfg["seed"]
    model = _model_from_cfg(cfg)
    loss = _loss_from_cfg(cfg)
    dist = DistributionSpec("gaussian", 1.0)
    xbar = _unit_vector(model.dim, (master, 0xBA))

    def task(ci, m, t):
        ts = _derived_seed(master, ci, t)
        data = draw_dataset(model, dist, xbar, m, ts)
        obj = EmpiricalObjective(model, loss, data)
        # statistically scaled tolerance: residuals below the sampling
        # noise floor sqrt(d/m) are indistinguishable from stationarity
        tol = cfg["tol"] if cfg["tol"] is not None else \
            cfg["tol_scale"] * np.sqrt(model.dim / m)
        lcfg = ls.LandscapeConfig(tol=tol, max_iter=cfg["max_iter"],
                                  kink_radius=cfg["kink_radius"],
                                  polish_iters=cfg["polish_iters"])
        starts = ls.default_starts(xbar, cfg["n_starts"], ts)
        reports = ls.find_stationary_points(obj, xbar, starts, lcfg)
        # expand one representative per terminal cluster: duplicates of
        # the same stationary point would just repeat the same walk
        accepted = sorted((r for r in reports if r.accepted),
                          key=lambda r: r.residual)
        seen: list[np.ndarray] = []
        expanded = []
        for r in accepted:
            if any(np.linalg.norm(r.point - p) <= 1e-2 for p in seen):
                continue
            seen.append(r.point)
            expanded.append(ls.expand_within_tolerance(
                obj, r, xbar, tol, cfg["kink_radius"], ts,
                steps=cfg["expand_steps"]))
        dev = ls.deviation_ZS_to_Z(reports + expanded, xbar)
        n_acc = sum(r.accepted for r in reports)
        # terminal quality is judged on the descent terminals themselves;
        # the expansion walk intentionally drifts within the tolerance set
        # and only informs the deviation estimate
        worst = max(r.dist_to_Z for r in reports if r.accepted)
        return (m, t, master, ts, model.dim, n_acc, worst, dev)

    rows = []
    for ci, m in enumerate(sorted(cfg["m_grid"])):
        jobs = [(ci, m, t) for t in range(cfg["trials"])]
        rows.extend(_run_cells(task, jobs, threads))
    _write_records(out_dir / "records.csv",
                   ["m", "trial", "master_seed", "trial_seed", "d",
                    "n_accepted", "worst_dist_to_Z", "deviation"], rows)
    by_cell = {}
    for row in rows:
        by_cell.setdefault(row[0], []).append(row[-1])
    ms = sorted(by_cell)
    medians = [float(np.median(by_cell[m])) for m in ms]
    rho = spearmanr(ms, medians).statistic if len(ms) >= 3 else float("nan")
    out = {"c_constant": ls.solve_c_constant(),
           "cells": {str(m): {"median_deviation": med}
                     for m, med in zip(ms, medians)},
           "spearman_m_vs_median_deviation": float(rho)}
    try:
        out.update({k: v for k, v in fit_loglog(by_cell).to_json().items()
                    if k in ("slope", "intercept", "r2")})
    except ValueError:
        pass
    return out


# -- verification suite ---------------------------------------------------

def _verify_checks(seed, n_pairs):
    checks = []

    def add(name, ok, detail=""):
        checks.append({"name": name, "ok": bool(ok), "detail": detail})

    f_abs = a1.pwl_abs()
    f_2abs = a1.pwl_scale(f_abs, 2.0)
    h0 = sc.hausdorff(a1.exact_subdiff(f_abs, 0.0),
                      a1.exact_subdiff(f_2abs, 0.0))
    add("pointwise-H-at-origin-equals-1", abs(h0 - 1.0) <= 1e-12, f"H={h0}")
    zero_sel = (lambda x: 0.0, lambda x: 0.0)
    s0 = a1.selection_sup_diff(f_abs, f_2abs, rule=zero_sel, points=[0.0])
    add("closed-set-zero-selection-gap-0", s0 == 0.0, f"sup={s0}")
    d1 = a1.d1_metric(f_abs, f_2abs, (-1.0, 1.0))
    sr = a1.selection_sup_diff(f_abs, f_2abs, (-1.0, 1.0))
    add("open-interval-selection-bound", d1 <= sr + 1e-12,
        f"d1={d1} sel={sr}")

    ok_b = True
    for n in range(1, 101):
        f1 = a1.pwl_abs()
        f2 = a1.pwl_sum(a1.pwl_abs(1.0 / n, 0.5), a1.pwl_abs(-1.0 / n, 0.5))
        w = (-2.0, 2.0)
        if abs(a1.d1_metric(f1, f2, w) - 1.0) > 1e-12:
            ok_b = False
        if abs(a1.d2_graph_metric(f1, f2, w) - 1.0 / n) > 1e-12:
            ok_b = False
    add("two-metric-staircase-sweep", ok_b)

    rng = np.random.default_rng(seed)
    ok_t1, ok_d2 = True, True
    for _ in range(n_pairs):
        f1 = a1.random_pwl_convex(rng)
        f2 = a1.random_pwl_convex(rng)
        w = (-1.0, 1.0)
        if a1.d1_metric(f1, f2, w) > a1.selection_sup_diff(f1, f2, w) + 1e-12:
            ok_t1 = False
        if a1.d2_graph_metric(f1, f2, w) > a1.d1_metric(f1, f2, w) + 1e-12:
            ok_d2 = False
    add("selection-bound-random-pairs", ok_t1)
    add("graph-metric-dominated", ok_d2)

    ok_sym = True
    for _ in range(50):
        A = sc.ConvexBody.vpolytope(rng.standard_normal((4, 2)))
        B = sc.ConvexBody.zonotope(rng.standard_normal(2),
                                   0.5 * rng.standard_normal((3, 2)))
        h1, h2 = sc.hausdorff(A, B), sc.hausdorff(B, A)
        if abs(h1 - h2) > 1e-9:
            ok_sym = False
    add("metric-symmetry", ok_sym)

    lo = vc.vc_lower_bound(vc.ThresholdFamily(phase_retrieval(1)), 4, 2000,
                           seed=seed)
    hi = vc.vc_upper_bound_poly(1, 2)
    add("vc-bounds-ordered", lo <= hi, f"lower={lo} upper={hi}")
    return checks


def run_verify(cfg, out_dir, threads):
    checks = _verify_checks(cfg["seed"], cfg["n_pairs"])
    rows = [(i, c["name"], int(c["ok"]), c["detail"])
            for i, c in enumerate(checks)]
    _write_records(out_dir / "records.csv",
                   ["index", "check", "ok", "detail"], rows)
    passed = all(c["ok"] for c in checks)
    return {"passed": passed,
            "n_checks": len(checks),
            "n_failed": sum(not c["ok"] for c in checks),
            "checks": checks}


_RUNNERS = {"rate_m": run_rate_m, "rate_d": run_rate_d,
            "peeling": run_peeling, "landscape": run_landscape,
            "verify": run_verify}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="subdiff-lab",
        description="Seeded subgradient-gap and landscape experiments.")
    p.add_argument("experiment",
                   choices=["rate-m", "rate-d", "peeling", "landscape",
                            "verify"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    args = p.parse_args(argv)

    kind = args.experiment.replace("-", "_")
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        if cfg["experiment"] != kind:
            raise ConfigError(
                f"config is for {cfg['experiment']!r}, not {kind!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.echo.json", "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    fit = _RUNNERS[kind](cfg, out_dir, max(args.threads, 1))
    with open(out_dir / "fit.json", "w") as fh:
        json.dump(fit, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if kind == "verify" and not fit["passed"]:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
