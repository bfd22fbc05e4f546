"""Set-valued subdifferential calculus, empirical subgradient gaps, and
landscape experiments for convex-composite objectives."""

from . import (analytic_1d, composite_models, experiment_cli, landscape,
               scalar_loss, set_calculus, subgradient_maps, vc_toolkit)
from .set_calculus import ConvexBody, deviation, hausdorff, minkowski_sum
from .scalar_loss import (KinkSpec, ScalarConvexLoss, abs_loss, hinge_loss,
                          pinball_loss, square_loss)
from .composite_models import (CompositeModel, Dataset, DistributionSpec,
                               blind_deconv, draw_dataset, generic_linear,
                               matrix_sensing, phase_retrieval)
from .subgradient_maps import (EmpiricalObjective, G_S, MegaSampleOracle,
                               empirical_subdiff, pointwise_gap,
                               sup_gap_over_ball)

__version__ = "0.1.0"
