"""Grid functions, weights and the Muckenhoupt-type characteristics."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .grid import ConfigurationError, Cube, Grid, first_max

MIN_WEIGHT = 1e-12


class GridFunction:
    """Piecewise-constant function on the finest cells of ``grid``.

    ``values`` are cell averages in Morton order.
    """

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float).reshape(-1)
        if values.size != grid.n_cells:
            raise ConfigurationError(
                f"expected {grid.n_cells} cell values, got {values.size}"
            )
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def __repr__(self):
        return f"{type(self).__name__}({self.grid}, {self.values!r})"

    def integral(self, Q: Cube | None = None) -> float:
        Q = self.grid.root if Q is None else Q
        lo, hi = self.grid.cell_range(Q)
        return float(self.values[lo:hi].sum() * self.grid.cell_volume)

    def average(self, Q: Cube) -> float:
        return self.integral(Q) / Q.volume(self.grid.d)

    def restrict(self, Q: Cube) -> GridFunction:
        """``f * 1_Q``."""
        lo, hi = self.grid.cell_range(Q)
        out = np.zeros(self.grid.n_cells)
        out[lo:hi] = self.values[lo:hi]
        return GridFunction(self.grid, out)

    def with_values(self, values) -> GridFunction:
        return GridFunction(self.grid, values)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            _same_grid(self, other)
            return GridFunction(self.grid, self.values * other.values)
        return GridFunction(self.grid, self.values * other)

    __rmul__ = __mul__

    def __abs__(self):
        return GridFunction(self.grid, np.abs(self.values))


class Weight(GridFunction):
    """Strictly positive grid function with cached cube measures."""

    def __init__(self, grid: Grid, values):
        super().__init__(grid, values)
        if not np.all(np.isfinite(self.values)) or np.any(self.values < MIN_WEIGHT):
            raise ConfigurationError(f"weight values must be finite and >= {MIN_WEIGHT}")

    @cached_property
    def cube_sums(self) -> list[np.ndarray]:
        """``w(Q)`` for every cube, one Morton-ordered array per level."""
        cv = self.grid.cell_volume
        return [s * cv for s in self.grid.level_sums(self.values)]

    @cached_property
    def cube_averages(self) -> list[np.ndarray]:
        return [s / self.grid.volume(k) for k, s in enumerate(self.cube_sums)]

    def measure(self, Q: Cube) -> float:
        return float(self.cube_sums[Q.level][self.grid.code(Q)])


def _same_grid(a: GridFunction, b: GridFunction) -> None:
    if a.grid != b.grid:
        raise ConfigurationError("grid mismatch")


def lebesgue(grid: Grid) -> Weight:
    return Weight(grid, np.ones(grid.n_cells))


def measure(u: Weight, Q: Cube) -> float:
    return u.measure(Q)


def conjugate(p: float) -> float:
    if not 1 < p < np.inf:
        raise ConfigurationError(f"exponent must lie in (1, inf), got {p}")
    return p / (p - 1)


def dual_weight(w: Weight, p: float) -> Weight:
    """``w^(1-p')``, the dual weight."""
    pp = conjugate(p)
    return Weight(w.grid, w.values ** (1 - pp))


def _restricted_levels(grid: Grid, restrict: Cube | None):
    """Per-level slices of Morton codes covering cubes inside ``restrict``."""
    if restrict is None:
        return [(k, slice(0, grid.n_at(k))) for k in range(grid.L + 1)]
    grid.check(restrict)
    c = grid.code(restrict)
    out = []
    for k in range(restrict.level, grid.L + 1):
        n = 2 ** (grid.d * (k - restrict.level))
        out.append((k, slice(c * n, (c + 1) * n)))
    return out


def weighted_maximal(f: GridFunction, mu: Weight | None = None, restrict: Cube | None = None) -> GridFunction:
    """Dyadic maximal function of ``|f|`` with respect to ``mu``.

    At each cell this is the largest ``mu``-average of ``|f|`` over dyadic
    cubes containing the cell.  With ``restrict`` the function is cut to the
    cube and only subcubes of it compete; cells outside get 0.
    ``mu=None`` is Lebesgue measure.
    """
    grid = f.grid
    if mu is None:
        dens = np.abs(f.values)
        mu_sums = [np.full(grid.n_at(k), grid.volume(k)) for k in range(grid.L + 1)]
    else:
        _same_grid(f, mu)
        dens = np.abs(f.values) * mu.values
        mu_sums = mu.cube_sums
    if restrict is not None:
        lo, hi = grid.cell_range(restrict)
        masked = np.zeros_like(dens)
        masked[lo:hi] = dens[lo:hi]
        dens = masked
    f_sums = [s * grid.cell_volume for s in grid.level_sums(dens)]
    out = np.zeros(grid.n_cells)
    for k, sl in _restricted_levels(grid, restrict):
        avg = np.zeros(grid.n_at(k))
        avg[sl] = f_sums[k][sl] / mu_sums[k][sl]
        np.maximum(out, grid.expand(avg, k), out=out)
    return GridFunction(grid, out)


def ap_two_weight(w: Weight, sigma: Weight, p: float) -> tuple[float, Cube]:
    """``[w, sigma]_{A_p}`` and the first cube attaining the supremum."""
    _same_grid(w, sigma)
    conjugate(p)
    per_level = [
        wa * sa ** (p - 1) for wa, sa in zip(w.cube_averages, sigma.cube_averages)
    ]
    return first_max(w.grid, per_level)


def ap_characteristic(w: Weight, p: float) -> tuple[float, Cube]:
    return ap_two_weight(w, dual_weight(w, p), p)


def local_ap_ratio(w: Weight, sigma: Weight, p: float) -> list[np.ndarray]:
    """Per cube ``(w(Q)/|Q|)^(1/p) (sigma(Q)/|Q|)^(1/p')``."""
    pp = conjugate(p)
    return [
        wa ** (1 / p) * sa ** (1 / pp)
        for wa, sa in zip(w.cube_averages, sigma.cube_averages)
    ]


def ainfty_local(w: Weight) -> list[np.ndarray]:
    """``A_inf(w, Q) = (1/w(Q)) * int_Q M(w 1_Q)`` for every cube.

    ``M`` is the dyadic maximal operator restricted to subcubes of ``Q``.
    A running maximum from the leaves up gives all cubes in ``O(n L)``.
    """
    grid = w.grid
    avgs = w.cube_averages
    running = np.array(avgs[grid.L], dtype=float)
    out = [None] * (grid.L + 1)
    for k in range(grid.L, -1, -1):
        if k < grid.L:
            np.maximum(running, grid.expand(avgs[k], k), out=running)
        integrals = grid.blocks(running, k).sum(axis=1) * grid.cell_volume
        out[k] = integrals / w.cube_sums[k]
    return out


def ainfty(w: Weight, restrict: Cube | None = None) -> float:
    """Fujii-Wilson characteristic ``[w]_{A_inf}`` (dyadic maximal operator)."""
    local = ainfty_local(w)
    return float(max(local[k][sl].max() for k, sl in _restricted_levels(w.grid, restrict)))


def ainfty_with_cube(w: Weight) -> tuple[float, Cube]:
    return first_max(w.grid, ainfty_local(w))


def lp_norm(f: GridFunction, w: Weight | None, p: float) -> float:
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    dens = np.abs(f.values) ** p
    if w is not None:
        _same_grid(f, w)
        dens = dens * w.values
    return float((dens.sum() * f.grid.cell_volume) ** (1 / p))
