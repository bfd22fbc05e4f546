"""VC-dimension machinery for polynomial threshold families.

The set class of interest is F = {{xi : c(x, xi) >= t} : x, t}, with
c(., xi) polynomial of degree K in x.  We provide: a sign-pattern counter
(lower bound by search, upper bound by the (50KN/d)^d theorem), a
brute-force shattering checker with exactly re-verified witness
certificates, and the rate quantity

    Delta = sqrt((d + vc * log m + log(1/delta)) / m).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .composite_models import CompositeModel, Dataset, SampleXi, c_value

__all__ = [
    "ThresholdFamily",
    "ShatterCertificate",
    "sign_pattern_bound",
    "count_sign_patterns",
    "check_shatter",
    "vc_lower_bound",
    "vc_upper_bound_poly",
    "delta_rate",
    "random_points",
]


@dataclass(frozen=True)
class ThresholdFamily:
    """Indicator class {xi : c(x, xi) >= t} over parameters (x, t)."""

    model: CompositeModel

    @property
    def d(self) -> int:
        return self.model.dim

    @property
    def degree(self) -> int:
        return self.model.degree

    def c(self, x, xi: SampleXi) -> float:
        return c_value(self.model, x, xi)


def sign_pattern_bound(N: int, d: int, K: int) -> float:
    """The (50*K*N/d)^d cap on the number of sign patterns of N degree-K
    polynomials in d variables."""
    if min(N, d, K) < 1:
        raise ValueError("need N, d, K >= 1")
    return (50.0 * K * N / d) ** d


def _multi_scale_candidates(dim: int, budget: int, rng: np.random.Generator):
    """Seeded search points: small integer lattice plus Gaussian draws at
    several scales (sign patterns can switch far from the origin)."""
    pts = [np.zeros(dim)]
    for v in (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0):
        pts.append(np.full(dim, v))
    for e in range(min(dim, 8)):
        for v in (-1.0, 1.0):
            p = np.zeros(dim)
            p[e] = v
            pts.append(p)
    base = np.vstack(pts)
    if budget <= len(base):
        return base[:budget]
    n_rand = budget - len(base)
    scales = np.array([1e-2, 1e-1, 1.0, 1e1, 1e2])
    s = scales[rng.integers(0, scales.size, size=n_rand)]
    rand = s[:, None] * rng.standard_normal((n_rand, dim))
    return np.vstack([base, rand])


def count_sign_patterns(polys, dim: int, degree: int, budget: int,
                        seed: int = 0) -> int:
    """Distinct sign vectors in {-1, 0, +1}^N realized by a seeded search.

    A lower bound on the true count; always at most the theorem's
    (50*K*N/d)^d cap, which is asserted.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    polys = list(polys)
    rng = np.random.default_rng(seed)
    seen = set()
    for x in _multi_scale_candidates(dim, budget, rng):
        seen.add(tuple(int(np.sign(p(x))) for p in polys))
    bound = sign_pattern_bound(len(polys), dim, degree)
    assert len(seen) <= bound, "sign-pattern cap violated (degree misdeclared?)"
    return len(seen)


# -- shattering -----------------------------------------------------------

@dataclass
class ShatterCertificate:
    """Witnesses (x, t) for each of the 2^N labelings, or None where the
    search failed.  Every stored witness re-verifies exactly."""

    points: list
    witnesses: dict          # labeling tuple -> (x array, t) or None
    budget: int
    seed: int

    @property
    def shattered(self) -> bool:
        return all(w is not None for w in self.witnesses.values())

    @property
    def n_found(self) -> int:
        return sum(w is not None for w in self.witnesses.values())

    def to_json(self) -> str:
        payload = {
            "n_points": len(self.points),
            "budget": self.budget,
            "seed": self.seed,
            "shattered": self.shattered,
            "labelings": [
                {"labels": list(lab),
                 "witness": None if w is None else
                 {"x": list(map(float, w[0])), "t": float(w[1])}}
                for lab, w in sorted(self.witnesses.items())
            ],
        }
        return json.dumps(payload, indent=2)

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def _verify_witness(family, points, labels, x, t) -> bool:
    got = tuple(int(family.c(x, xi) >= t) for xi in points)
    return got == tuple(labels)


def _labelings_at(values: np.ndarray):
    """All labelings {i : v_i >= t} realizable by varying t at fixed x,
    with a witnessing threshold each (midpoints between sorted values)."""
    order = np.argsort(values)[::-1]
    v = values[order]
    cuts = [v[0] + 1.0]
    for a, b in zip(v[:-1], v[1:]):
        if a > b:
            cuts.append(0.5 * (a + b))
    cuts.append(v[-1] - 1.0)
    out = []
    for t in cuts:
        lab = tuple(int(vi >= t) for vi in values)
        out.append((lab, float(t)))
    return out


def check_shatter(family: ThresholdFamily, points, budget: int,
                  seed: int = 0) -> ShatterCertificate:
    """Search for witnesses of all 2^N labelings of the points.

    For each sampled parameter x the sorted values c(x, xi_i) realize every
    labeling the threshold can produce at that x, so a single x-scan covers
    N+1 labelings at a time.  Missing labelings get a margin-maximization
    refinement.  Non-shattering is evidence at this budget, not a proof.
    """
    points = list(points)
    N = len(points)
    if N > 16:
        raise ValueError("shatter check limited to N <= 16")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    witnesses = {}
    for bits in range(2 ** N):
        lab = tuple((bits >> i) & 1 for i in range(N))
        witnesses[lab] = None

    xs = _multi_scale_candidates(family.d, budget, rng)
    vals = np.array([[family.c(x, xi) for xi in points] for x in xs])
    for x, v in zip(xs, vals):
        for lab, t in _labelings_at(v):
            if witnesses.get(lab) is None:
                if _verify_witness(family, points, lab, x, t):
                    witnesses[lab] = (np.array(x, dtype=float), t)

    # refinement: maximize the labeling margin over (x, t) for the holdouts
    missing = [lab for lab, w in witnesses.items() if w is None]
    for lab in missing:
        sign = np.array([1.0 if b else -1.0 for b in lab])

        def neg_margin(z, sign=sign):
            x, t = z[:-1], z[-1]
            v = np.array([family.c(x, xi) for xi in points])
            return -float(np.min(sign * (v - t)))

        margins = np.min(sign[None, :] * (vals - np.median(vals, axis=1,
                                                           keepdims=True)),
                         axis=1)
        for i in np.argsort(margins)[::-1][:3]:
            z0 = np.concatenate([xs[i], [float(np.median(vals[i]))]])
            res = minimize(neg_margin, z0, method="Nelder-Mead",
                           options={"maxiter": 400, "xatol": 1e-10,
                                    "fatol": 1e-12})
            if -res.fun > 0:
                x, t = res.x[:-1], float(res.x[-1])
                if _verify_witness(family, points, lab, x, t):
                    witnesses[lab] = (np.array(x, dtype=float), t)
                    break
    return ShatterCertificate(points=points, witnesses=witnesses,
                              budget=budget, seed=seed)


def random_points(model: CompositeModel, N: int,
                  rng: np.random.Generator) -> list:
    """N generic samples (standard normal features and responses)."""
    if model.kind == "ms":
        F = rng.standard_normal((N, model.D, model.D))
    else:
        F = rng.standard_normal((N, model.dim))
    data = Dataset(model=model, features=F, b=rng.standard_normal(N))
    return [data[i] for i in range(N)]


def vc_lower_bound(family: ThresholdFamily, N_max: int, budget: int,
                   seed: int = 0, n_configs: int = 5) -> int:
    """Largest N <= N_max with some seeded point set certified shattered."""
    if N_max > 16:
        raise ValueError("N_max limited to 16")
    best = 0
    for N in range(1, N_max + 1):
        found = False
        for c in range(n_configs):
            rng = np.random.default_rng((seed, N, c))
            pts = random_points(family.model, N, rng)
            cert = check_shatter(family, pts, budget, seed=seed + 31 * c)
            if cert.shattered:
                found = True
                break
        if found:
            best = N
        else:
            break
    return best


def vc_upper_bound_poly(d: int, K: int) -> int:
    """Smallest N with (50*K*N/(d+1))^{d+1} < 2^N, by integer scan.

    The class has parameter dimension d+1 (the threshold t joins x); the
    scan replaces the statement's unexhibited universal constant with the
    proof's explicit inequality.
    """
    if min(d, K) < 1:
        raise ValueError("need d, K >= 1")
    N = 1
    while (d + 1) * math.log(50.0 * K * N / (d + 1)) >= N * math.log(2.0):
        N += 1
    return N


def delta_rate(d: int, vc: float, m: int, delta: float) -> float:
    """Delta = sqrt((d + vc*log(m) + log(1/delta)) / m)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if d < 0 or vc < 0:
        raise ValueError("d and vc must be nonnegative")
    return math.sqrt((d + vc * math.log(m) + math.log(1.0 / delta)) / m)
