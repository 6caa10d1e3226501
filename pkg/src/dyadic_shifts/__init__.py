"""Dyadic Haar shifts, A_p / A_inf weights, sparse stopping families and testing constants on finite dyadic grids."""

from .grid import ConfigurationError, Cube, Grid, GridError, build_grid
from .weights import (
    GridFunction,
    Weight,
    ainfty,
    ap_characteristic,
    ap_two_weight,
    conjugate,
    dual_weight,
    lebesgue,
    lp_norm,
    weighted_maximal,
)
from .shifts import (
    HaarShift,
    PositiveShiftSpec,
    ShiftComponent,
    ShiftTerm,
    adjoint_apply,
    apply,
    build_positive_shift,
    martingale_transform,
    maximal_truncation,
    operator_l2_norm,
    random_shift,
    shift_from_json,
    shift_to_json,
    truncated_apply,
)
from .lerner import (
    SparseFamily,
    domination_constant,
    median,
    oscillation,
    rearrangement_value,
    sparse_decomposition,
)
from .testing import (
    PrincipalForest,
    build_principal_forest,
    carleson_ratio,
    shift_testing_constant,
    testing_proposition_ratio,
)

__version__ = "0.1.0"
