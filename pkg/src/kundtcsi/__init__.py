"""Kundt CSI spacetimes: curvature, Killing vectors and closed-form families."""

__version__ = "0.1.0"

from .exprcore import (  # noqa: E402
    DomainError,
    ExprError,
    ExprSyntaxError,
    differentiate,
    evaluate,
    parse_expr,
    to_string,
)
from .geometry import (  # noqa: E402
    Coframe,
    Domain,
    GeometryError,
    KundtMetric,
    Point,
    UReparam,
    VShift,
    SpatialTransform,
    apply_transform,
    build_coframe,
    coframe_for,
    frame_derivative,
    transform_point,
)
from .curvature import (  # noqa: E402
    compare_riemann,
    connection_table,
    csi0_check,
    kundt_vector_check,
    riemann_components,
    riemann_oracle,
)
from .killing import (  # noqa: E402
    KillingCandidate,
    build_components,
    causality,
    ccnv_residuals,
    killing_residuals,
    lie_derivative_oracle,
)
from .families import (  # noqa: E402
    CASE_LABELS,
    FamilyError,
    FamilySpec,
    classify,
    default_family,
    random_family,
)

__all__ = [name for name in dir() if not name.startswith("_")]
