"""Smooth inner maps c(x; xi) for the composite losses h(c(x; xi)).

Built-in families: phase retrieval, matrix sensing, blind deconvolution,
and a generic linear model.  Matrix/block parameters are flattened
column-major into a single ambient vector so that one vector calculus
serves every family.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "CompositeModel",
    "DistributionSpec",
    "SampleXi",
    "Dataset",
    "phase_retrieval",
    "matrix_sensing",
    "blind_deconv",
    "generic_linear",
    "c_value",
    "c_grad",
    "c_values",
    "c_grads",
    "batch_measurements",
    "c_values_batch",
    "weighted_grad_sum",
    "weighted_grad_sum_batch",
    "draw_dataset",
    "save_dataset_csv",
    "load_dataset_csv",
]


@dataclass(frozen=True)
class CompositeModel:
    """A model family: variant tag, shape parameters, polynomial degree of
    x -> c(x; xi)."""

    kind: str                       # "pr" | "ms" | "bd" | "generic"
    d: int = 0                      # pr / generic ambient dimension
    D: int = 0                      # ms: measurement matrices are D x D
    r0: int = 0                     # ms: factor X is D x r0
    d1: int = 0                     # bd block sizes
    d2: int = 0

    @property
    def dim(self) -> int:
        if self.kind in ("pr", "generic"):
            return self.d
        if self.kind == "ms":
            return self.D * self.r0
        return self.d1 + self.d2

    @property
    def degree(self) -> int:
        return 1 if self.kind == "generic" else 2

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("model dimension must be >= 1")


def phase_retrieval(d: int) -> CompositeModel:
    """c(x; (a, b)) = <a, x>^2 - b."""
    return CompositeModel(kind="pr", d=d)


def matrix_sensing(D: int, r0: int) -> CompositeModel:
    """c(X; (A, b)) = <A, X X^T> - b, X of size D x r0 flattened."""
    if not 1 <= r0 <= D:
        raise ValueError("need 1 <= r0 <= D")
    return CompositeModel(kind="ms", D=D, r0=r0)


def blind_deconv(d1: int, d2: int) -> CompositeModel:
    """c((y, w); (u, v, b)) = b - <u, y><v, w>."""
    return CompositeModel(kind="bd", d1=d1, d2=d2)


def generic_linear(d: int) -> CompositeModel:
    """c(x; (phi, b)) = <phi, x> - b."""
    return CompositeModel(kind="generic", d=d)


@dataclass(frozen=True)
class SampleXi:
    """A single data point; which fields are set depends on the variant."""

    kind: str
    b: float
    a: np.ndarray | None = None
    A: np.ndarray | None = None
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    phi: np.ndarray | None = None


@dataclass(frozen=True)
class Dataset:
    """An i.i.d. sample stored columnwise for vectorized evaluation."""

    model: CompositeModel
    features: np.ndarray      # pr/generic: (m, d); ms: (m, D, D); bd: (m, d1+d2)
    b: np.ndarray             # (m,)
    seed: int | None = None

    def __len__(self) -> int:
        return self.b.size

    def __getitem__(self, i: int) -> SampleXi:
        k = self.model.kind
        if k == "pr":
            return SampleXi(kind=k, a=self.features[i], b=float(self.b[i]))
        if k == "ms":
            return SampleXi(kind=k, A=self.features[i], b=float(self.b[i]))
        if k == "bd":
            d1 = self.model.d1
            return SampleXi(kind=k, u=self.features[i, :d1],
                            v=self.features[i, d1:], b=float(self.b[i]))
        return SampleXi(kind=k, phi=self.features[i], b=float(self.b[i]))


# -- pointwise formulas ---------------------------------------------------

def _ms_unflatten(model: CompositeModel, x: np.ndarray) -> np.ndarray:
    return np.reshape(x, (model.D, model.r0), order="F")


def c_value(model: CompositeModel, x, xi: SampleXi) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.dim:
        raise ValueError(f"x has dim {x.size}, model expects {model.dim}")
    if model.kind == "pr":
        return float((xi.a @ x) ** 2 - xi.b)
    if model.kind == "ms":
        X = _ms_unflatten(model, x)
        return float(np.sum(xi.A * (X @ X.T)) - xi.b)
    if model.kind == "bd":
        y, w = x[:model.d1], x[model.d1:]
        return float(xi.b - (xi.u @ y) * (xi.v @ w))
    return float(xi.phi @ x - xi.b)


def c_grad(model: CompositeModel, x, xi: SampleXi) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.dim:
        raise ValueError(f"x has dim {x.size}, model expects {model.dim}")
    if model.kind == "pr":
        return 2.0 * (xi.a @ x) * xi.a
    if model.kind == "ms":
        X = _ms_unflatten(model, x)
        return np.ravel((xi.A + xi.A.T) @ X, order="F")
    if model.kind == "bd":
        y, w = x[:model.d1], x[model.d1:]
        return np.concatenate([-(xi.v @ w) * xi.u, -(xi.u @ y) * xi.v])
    return xi.phi.copy()


# -- vectorized evaluation over a dataset ---------------------------------

def c_values(model: CompositeModel, x, data: Dataset) -> np.ndarray:
    """c(x; xi_i) for every sample, shape (m,)."""
    x = np.asarray(x, dtype=float).ravel()
    F = data.features
    if model.kind == "pr":
        return (F @ x) ** 2 - data.b
    if model.kind == "ms":
        X = _ms_unflatten(model, x)
        M = X @ X.T
        return np.einsum("mij,ij->m", F, M) - data.b
    if model.kind == "bd":
        d1 = model.d1
        y, w = x[:d1], x[d1:]
        return data.b - (F[:, :d1] @ y) * (F[:, d1:] @ w)
    return F @ x - data.b


def c_grads(model: CompositeModel, x, data: Dataset) -> np.ndarray:
    """Gradients of c(.; xi_i) at x, stacked rowwise with shape (m, dim)."""
    x = np.asarray(x, dtype=float).ravel()
    F = data.features
    if model.kind == "pr":
        return 2.0 * (F @ x)[:, None] * F
    if model.kind == "ms":
        X = _ms_unflatten(model, x)
        sym = F + np.transpose(F, (0, 2, 1))
        G = np.einsum("mij,jk->mik", sym, X)
        # per-sample column-major flatten of the D x r0 gradient
        return G.transpose(0, 2, 1).reshape(len(data), model.D * model.r0)
    if model.kind == "bd":
        d1 = model.d1
        y, w = x[:d1], x[d1:]
        uy = F[:, :d1] @ y
        vw = F[:, d1:] @ w
        return np.hstack([-vw[:, None] * F[:, :d1], -uy[:, None] * F[:, d1:]])
    return F.copy()


def batch_measurements(model: CompositeModel, X, data: Dataset) -> dict:
    """Model-specific intermediates shared by the value and gradient
    batches, so callers needing both pay for the feature gemms once."""
    X = np.asarray(X, dtype=float)
    F = data.features
    if model.kind == "ms":
        B = X.shape[1]
        M = np.empty((model.D * model.D, B))
        for j in range(B):
            Xj = _ms_unflatten(model, X[:, j])
            M[:, j] = (Xj @ Xj.T).ravel()
        return {"M": M}
    if model.kind == "bd":
        d1 = model.d1
        return {"UY": F[:, :d1] @ X[:d1], "VW": F[:, d1:] @ X[d1:]}
    return {"T": F @ X}


def c_values_batch(model: CompositeModel, X, data: Dataset,
                   pre: dict | None = None) -> np.ndarray:
    """c values for a batch of parameter vectors: X is (dim, B), the result
    is (m, B).  One BLAS pass over the features serves the whole batch."""
    X = np.asarray(X, dtype=float)
    F = data.features
    if pre is None:
        pre = batch_measurements(model, X, data)
    if model.kind == "pr":
        T = pre["T"]
        return T * T - data.b[:, None]
    if model.kind == "ms":
        return F.reshape(len(data), -1) @ pre["M"] - data.b[:, None]
    if model.kind == "bd":
        return data.b[:, None] - pre["UY"] * pre["VW"]
    return pre["T"] - data.b[:, None]


def weighted_grad_sum_batch(model: CompositeModel, X, data: Dataset,
                            W: np.ndarray,
                            pre: dict | None = None) -> np.ndarray:
    """Batched weighted gradient averages: column j of the (dim, B) result
    is (1/m) sum_i W[i, j] * grad c(X[:, j]; xi_i)."""
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    F = data.features
    m = len(data)
    if pre is None and model.kind in ("pr", "bd"):
        pre = batch_measurements(model, X, data)
    if model.kind == "pr":
        return (2.0 / m) * (F.T @ (W * pre["T"]))
    if model.kind == "ms":
        B = X.shape[1]
        Fm = F.reshape(m, -1)
        S = (Fm.T @ W)
        out = np.empty((model.dim, B))
        for j in range(B):
            Sj = S[:, j].reshape(model.D, model.D)
            Xj = _ms_unflatten(model, X[:, j])
            out[:, j] = np.ravel((Sj + Sj.T) @ Xj, order="F")
        return out / m
    if model.kind == "bd":
        d1 = model.d1
        gy = -(F[:, :d1].T @ (W * pre["VW"]))
        gw = -(F[:, d1:].T @ (W * pre["UY"]))
        return np.vstack([gy, gw]) / m
    return (F.T @ W) / m


def weighted_grad_sum(model: CompositeModel, x, data: Dataset,
                      weights: np.ndarray) -> np.ndarray:
    """(1/m) sum_i w_i * grad c(x; xi_i) without materializing the (m, dim)
    gradient stack; the workhorse behind large-sample subgradient averages."""
    x = np.asarray(x, dtype=float).ravel()
    w = np.asarray(weights, dtype=float)
    F = data.features
    m = len(data)
    if model.kind == "pr":
        t = F @ x
        return (2.0 / m) * (F.T @ (w * t))
    if model.kind == "ms":
        X = _ms_unflatten(model, x)
        S = np.einsum("m,mij->ij", w, F)
        return np.ravel((S + S.T) @ X, order="F") / m
    if model.kind == "bd":
        d1 = model.d1
        y, wv = x[:d1], x[d1:]
        uy = F[:, :d1] @ y
        vw = F[:, d1:] @ wv
        gy = -(F[:, :d1].T @ (w * vw))
        gw = -(F[:, d1:].T @ (w * uy))
        return np.concatenate([gy, gw]) / m
    return (F.T @ w) / m


# -- sampling -------------------------------------------------------------

@dataclass(frozen=True)
class DistributionSpec:
    """Measurement distribution with a subgaussian scale parameter.

    "gaussian" draws i.i.d. N(0, sigma^2) coordinates; "rademacher" draws
    coordinates uniform on {-sigma/4, +sigma/4}.  Responses default to the
    noiseless ground truth (c(xbar; xi) = 0); pass b_noise to corrupt them.
    """

    kind: str = "gaussian"          # "gaussian" | "rademacher"
    sigma: float = 1.0
    b_noise: Callable[[np.random.Generator, int], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "rademacher"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def draw_features(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return self.sigma * rng.standard_normal(shape)
        return (self.sigma / 4.0) * rng.choice([-1.0, 1.0], size=shape)


def draw_dataset(model: CompositeModel, dist: DistributionSpec, xbar,
                 m: int, seed: int) -> Dataset:
    """Draw m i.i.d. samples; deterministic given the seed.

    Responses are exact at the ground truth: c(xbar; xi_i) = 0 for every i
    (before any optional b_noise corruption).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    xbar = np.asarray(xbar, dtype=float).ravel()
    if xbar.size != model.dim:
        raise ValueError(f"xbar has dim {xbar.size}, model expects {model.dim}")
    rng = np.random.default_rng(seed)
    if model.kind == "ms":
        F = dist.draw_features(rng, (m, model.D, model.D))
    else:
        F = dist.draw_features(rng, (m, model.dim))
    zero_b = Dataset(model=model, features=F, b=np.zeros(m))
    b = c_values(model, xbar, zero_b)
    if model.kind == "bd":
        b = -b  # c = b - <u,y><v,w>: solve c(xbar)=0 for b
    if dist.b_noise is not None:
        b = b + np.asarray(dist.b_noise(rng, m), dtype=float)
    return Dataset(model=model, features=F, b=b, seed=seed)


# -- CSV round trip -------------------------------------------------------

def save_dataset_csv(data: Dataset, path) -> None:
    """Header (variant, shape, m, seed), then one row of xi components per
    sample at 17 significant digits (bit-exact for float64)."""
    model = data.model
    m = len(data)
    if model.kind == "ms":
        shape = f"{model.D},{model.r0}"
    elif model.kind == "bd":
        shape = f"{model.d1},{model.d2}"
    else:
        shape = f"{model.d}"
    with open(path, "w") as fh:
        fh.write(f"variant={model.kind};shape={shape};m={m};seed={data.seed}\n")
        flat = data.features.reshape(m, -1)
        for i in range(m):
            row = np.concatenate([flat[i], [data.b[i]]])
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_dataset_csv(path) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip()
        meta = dict(kv.split("=") for kv in header.split(";"))
        kind = meta["variant"]
        shape = [int(s) for s in meta["shape"].split(",")]
        m = int(meta["m"])
        seed = None if meta["seed"] == "None" else int(meta["seed"])
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.shape[0] != m:
        raise ValueError(f"expected {m} rows, found {rows.shape[0]}")
    if kind == "ms":
        model = matrix_sensing(*shape)
        F = rows[:, :-1].reshape(m, model.D, model.D)
    elif kind == "bd":
        model = blind_deconv(*shape)
        F = rows[:, :-1]
    elif kind == "pr":
        model = phase_retrieval(shape[0])
        F = rows[:, :-1]
    else:
        model = generic_linear(shape[0])
        F = rows[:, :-1]
    return Dataset(model=model, features=F, b=rows[:, -1], seed=seed)
