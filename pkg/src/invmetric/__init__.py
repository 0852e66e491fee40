"""Group-invariant Riemannian metrics on circle domains in the plane."""

__version__ = "0.1.0"

from .automorphism import Composite, Inversion, Moebius, Rotation, compose, conjugate, disc_sequence
from .bergman import AnnulusSeries, DiscClosed, NumericBasis, Transported, bergman_metric_field, bergman_model
from .blend import build_pipeline, inheritance_report
from .domain import Annulus, Disc, DiscMinusDiscs, GridSpec, MoebiusImage, four_holed_disc
from .geometry import (boundary_rigidity_check, christoffel, common_fixed_point, distance, gauss_curvature,
                       general_position_fix_check, geodesic, metric_ball)
from .group import circle_group, finite_group, haar_nodes, trivial_group
from .metric import MetricField, average, euclidean, invariance_residual, poincare
