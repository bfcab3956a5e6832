"""Contracting and expanding curvature flows of convex axisymmetric hypersurfaces in S^{n+1}."""

from .curvfun import (
    CurvatureVector,
    Inverse,
    MeanNormalized,
    QuotientQ,
    SigmaK,
    evaluate,
    parse_spec,
)
from .dual import polar_dual
from .errors import (
    ConvexityError,
    DomainError,
    HemisphereError,
    IntegratorError,
    NumericError,
    ParityError,
    SphereFlowError,
)
from .flow import FlowSpec, dual_run, run, spherical_theta
from .hypersurface import AxiGrid, GraphFunction, perturbed_sphere, shape_operator, sphere

__version__ = "0.1.0"
