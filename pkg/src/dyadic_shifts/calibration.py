"""Frozen empirical constants and the sweeps that produce them.

Each threshold is ``MARGIN`` times the largest value seen at the
calibration depth, rounded up to two decimals.  The sweeps are kept here so
the verification suite re-runs exactly what was calibrated.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import Grid
from .harness import (
    ShiftSource,
    WeightSpec,
    build_shifts,
    generate_weight,
    random_function,
)
from .lerner import sparse_decomposition
from .shifts import PositiveShiftSpec, build_positive_shift, operator_l2_norm
from .testing import build_principal_forest, carleson_ratio, max_testing_proposition_ratio, scale_layers
from .weights import ainfty, dual_weight

MARGIN = 1.25
CALIBRATION_DEPTH = 8

# max testing-proposition ratio at L=8 was 1.1310 (nested S^(1), power(-0.9))
TESTING_RATIO_THRESHOLD = 1.42
# max Carleson ratio at L=8 was 1.0774
CARLESON_THRESHOLD = 1.35

POWER_ALPHAS = (-0.9, -0.5, 0.0, 0.5, 0.9)
STEP_VALUES = ((2, 2, 1, 1), (1, 100), (1, 1, 1, 50, 1, 1, 1, 1))
# alpha = -1 + 10^-s drives [w]_{A_2} from ~2 to ~5000 at L=12
SWEEP_EXPONENTS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)


def threshold_from(observed: float, margin: float = MARGIN) -> float:
    return math.ceil(margin * observed * 100 - 1e-9) / 100


def testing_weights() -> list[WeightSpec]:
    return [WeightSpec("power", alpha=a) for a in POWER_ALPHAS] + [
        WeightSpec("step", values=tuple(float(x) for x in v)) for v in STEP_VALUES
    ]


def sweep_weights() -> list[WeightSpec]:
    return [WeightSpec("power", alpha=-1 + 10**-s) for s in SWEEP_EXPONENTS]


def testing_shift_sources(kappa: int) -> list[ShiftSource]:
    return [
        ShiftSource("nested", offsets=(kappa,), family={"source": "nested"}),
        ShiftSource("lerner", offsets=(kappa,),
                    family={"source": "lerner", "seed": 3, "kind": "martingale"}),
        ShiftSource("random", kind="random", complexity=(kappa, kappa), seed=5),
    ]


def testing_sweep(L: int, p: float = 2.0):
    """``(kappa, shift id, weight label, max ratio, cube)`` over the testing sweep."""
    grid = Grid(1, L)
    out = []
    for kappa in (1, 2):
        for src in testing_shift_sources(kappa):
            for built in build_shifts(src, grid):
                for spec in testing_weights():
                    w = generate_weight(spec, grid)
                    sigma = dual_weight(w, p)
                    r, Q = max_testing_proposition_ratio(built.shift, w, sigma, p)
                    out.append((kappa, built.id, spec.label(), r, Q))
    return out


def forest_sweep(L: int, p: float = 2.0, weights=None):
    """Yield ``(weight label, kappa, forest, w, sigma, carleson ratio)``."""
    grid = Grid(1, L)
    weights = testing_weights() + sweep_weights() if weights is None else weights
    for spec in weights:
        w = generate_weight(spec, grid)
        sigma = dual_weight(w, p)
        sa = ainfty(sigma)
        for kappa in (1, 2):
            for lam, K in enumerate(scale_layers(grid.cubes(), kappa)):
                for forest in build_principal_forest(K, w, sigma, p, lam):
                    yield spec.label(), kappa, forest, w, sigma, carleson_ratio(forest, sigma, sigma_ainfty=sa)


def calibrate_testing_threshold(L: int = CALIBRATION_DEPTH) -> float:
    return threshold_from(max(r for *_, r, _ in testing_sweep(L)))


def calibrate_carleson_threshold(L: int = CALIBRATION_DEPTH) -> float:
    return threshold_from(max(c for *_, c in forest_sweep(L)))


def positive_shift_constant(L: int = 10, count: int = 20, offsets=range(1, 6), seed: int = 0) -> float:
    """Smallest ``i / ||S^(i)||_2`` over Lerner families of random inputs (d=1)."""
    grid = Grid(1, L)
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(count):
        fam = sparse_decomposition(random_function(grid, rng))
        for i in offsets:
            S = build_positive_shift(grid, PositiveShiftSpec.from_family(fam, i).eligible())
            norm = operator_l2_norm(S)
            if norm > 0:
                best = min(best, i / norm)
    return best
