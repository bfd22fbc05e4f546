"""One-dimensional closed convex losses with an explicit kink decomposition.

A loss is stored as a smooth part (value and derivative callables) plus a
finite list of kinks (t_j, a_j), where a_j > 0 is the jump of the one-sided
derivatives at t_j.  The full loss is

    h(z) = h_sm(z) + sum_j a_j * max(z - t_j, 0),

its subdifferential at z is the interval [h'_-(z), h'_+(z)], and the
canonical single-valued selection takes the right derivative at kinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .set_calculus import ConvexBody

__all__ = [
    "KinkSpec",
    "ScalarConvexLoss",
    "DecomposeReport",
    "abs_loss",
    "hinge_loss",
    "pinball_loss",
    "square_loss",
]


@dataclass(frozen=True)
class KinkSpec:
    """A nondifferentiable point: location and (positive) derivative jump."""

    location: float
    jump: float

    def __post_init__(self):
        if not self.jump > 0:
            raise ValueError(f"kink jump must be positive, got {self.jump}")


@dataclass(frozen=True)
class ScalarConvexLoss:
    """A convex loss h: R -> R given by smooth part plus kinks.

    smooth_value / smooth_deriv evaluate h_sm and its derivative; the
    derivative must be continuous and nondecreasing for h to be convex.
    """

    kinks: tuple[KinkSpec, ...]
    smooth_value: Callable[[float], float]
    smooth_deriv: Callable[[float], float]
    name: str = "loss"
    lipschitz: bool = True

    def __post_init__(self):
        kinks = tuple(sorted(self.kinks, key=lambda k: k.location))
        locs = [k.location for k in kinks]
        if any(b - a <= 0 for a, b in zip(locs, locs[1:])):
            raise ValueError("kink locations must be strictly increasing")
        object.__setattr__(self, "kinks", kinks)

    def scaled(self, alpha: float) -> "ScalarConvexLoss":
        """The loss alpha * h for alpha > 0."""
        if not alpha > 0:
            raise ValueError("scaling factor must be positive")
        sv, sd = self.smooth_value, self.smooth_deriv
        return ScalarConvexLoss(
            kinks=tuple(KinkSpec(k.location, alpha * k.jump) for k in self.kinks),
            smooth_value=lambda z: alpha * sv(z),
            smooth_deriv=lambda z: alpha * sd(z),
            name=f"{alpha}*{self.name}",
            lipschitz=self.lipschitz,
        )


def loss_eval(h: ScalarConvexLoss, z: float) -> float:
    """h(z) = h_sm(z) + sum_j a_j (z - t_j)_+."""
    v = float(h.smooth_value(z))
    for k in h.kinks:
        v += k.jump * max(z - k.location, 0.0)
    return v


def subdiff_interval(h: ScalarConvexLoss, z: float) -> ConvexBody:
    """The interval [h'_-(z), h'_+(z)]; a singleton off kinks."""
    g = float(h.smooth_deriv(z))
    lo = g + sum(k.jump for k in h.kinks if k.location < z)
    hi = g + sum(k.jump for k in h.kinks if k.location <= z)
    return ConvexBody.interval(lo, hi)


def selection_g(h: ScalarConvexLoss, z: float) -> float:
    """Canonical subgradient: right-continuous, so h'_+(t_j) at kinks."""
    g = float(h.smooth_deriv(z))
    for k in h.kinks:
        if z >= k.location:
            g += k.jump
    return g


def zeta(h: ScalarConvexLoss) -> float:
    """Rate amplification constant 1 + sum of kink jumps (>= 1)."""
    return 1.0 + sum(k.jump for k in h.kinks)


@dataclass
class DecomposeReport:
    max_residual: float
    max_smooth_deriv_gap: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def decompose_check(h: ScalarConvexLoss, grid: Sequence[float],
                    reference: Callable[[float], float] | None = None,
                    tol: float = 1e-6) -> DecomposeReport:
    """Audit the smooth/nonsmooth split on a grid.

    Checks (a) the reconstructed h matches `reference` pointwise when one is
    supplied, and (b) the smooth derivative is continuous across every kink
    (left/right numerical limits within tol).
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    report = DecomposeReport(0.0, 0.0)
    if reference is not None:
        for z in grid:
            r = abs(loss_eval(h, z) - float(reference(z)))
            if r > report.max_residual:
                report.max_residual = r
            if r > tol:
                report.violations.append(("residual", float(z), r))
    eps = 1e-7
    for k in h.kinks:
        gap = abs(float(h.smooth_deriv(k.location - eps))
                  - float(h.smooth_deriv(k.location + eps)))
        report.max_smooth_deriv_gap = max(report.max_smooth_deriv_gap, gap)
        if gap > tol:
            report.violations.append(("smooth_deriv_jump", k.location, gap))
    return report


# -- built-in losses ------------------------------------------------------

def abs_loss() -> ScalarConvexLoss:
    """h(z) = |z|, split as h_sm(z) = -z plus a jump of 2 at the origin."""
    return ScalarConvexLoss(
        kinks=(KinkSpec(0.0, 2.0),),
        smooth_value=lambda z: -z,
        smooth_deriv=lambda z: -1.0,
        name="abs",
    )


def hinge_loss() -> ScalarConvexLoss:
    """h(z) = max(z, 0)."""
    return ScalarConvexLoss(
        kinks=(KinkSpec(0.0, 1.0),),
        smooth_value=lambda z: 0.0,
        smooth_deriv=lambda z: 0.0,
        name="hinge",
    )


def pinball_loss(alpha: float) -> ScalarConvexLoss:
    """Quantile loss: alpha*z for z >= 0, (alpha-1)*z for z < 0."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("pinball level must be in (0, 1)")
    return ScalarConvexLoss(
        kinks=(KinkSpec(0.0, 1.0),),
        smooth_value=lambda z: (alpha - 1.0) * z,
        smooth_deriv=lambda z: alpha - 1.0,
        name=f"pinball({alpha})",
    )


def square_loss() -> ScalarConvexLoss:
    """h(z) = z^2.  Smooth, but not globally Lipschitz: excluded from the
    rate experiments that assume bounded subgradients."""
    return ScalarConvexLoss(
        kinks=(),
        smooth_value=lambda z: z * z,
        smooth_deriv=lambda z: 2.0 * z,
        name="square",
        lipschitz=False,
    )
