"""Medians, rearrangements, local oscillations and sparse stopping families.

All cell measures are equal, so every measure comparison reduces to exact
integer cell counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ConfigurationError, Cube, Grid
from .weights import GridFunction


def _allowed(lam: float, n: int) -> int:
    """Cells allowed above the threshold at percentile ``lam`` of ``n`` cells."""
    return int(math.floor(lam * n + 1e-9))


def _cells(f: GridFunction, Q: Cube) -> np.ndarray:
    lo, hi = f.grid.cell_range(Q)
    return f.values[lo:hi]


def median(f: GridFunction, Q: Cube) -> float:
    """Lower median of ``f`` on ``Q``: the smallest admissible value."""
    v = np.sort(_cells(f, Q))
    return float(v[(v.size + 1) // 2 - 1])


def rearrangement_value(phi: GridFunction, Q: Cube, t: float) -> float:
    """``(phi 1_Q)^*(t) = inf{s >= 0 : |{x in Q : |phi| > s}| <= t}``."""
    if t <= 0:
        raise ConfigurationError("rearrangement needs t > 0")
    v = np.sort(np.abs(_cells(phi, Q)))[::-1]
    m = int(math.floor(t / phi.grid.cell_volume + 1e-9))
    return float(v[m]) if m < v.size else 0.0


def _oscillation_sorted(rows: np.ndarray, lam: float) -> np.ndarray:
    # rows sorted ascending; the optimum keeps n - m consecutive values
    n = rows.shape[1]
    keep = n - _allowed(lam, n)
    return (rows[:, keep - 1:] - rows[:, : n - keep + 1]).min(axis=1) / 2


def oscillation(f: GridFunction, Q: Cube, lam: float) -> float:
    """``omega_lam(f; Q) = inf_c ((f - c) 1_Q)^*(lam |Q|)``.

    With ``m`` cells allowed to exceed the level, the best constant is the
    midpoint of the tightest run of ``n - m`` consecutive sorted values.
    """
    if not 0 < lam < 1:
        raise ConfigurationError("lambda must lie in (0, 1)")
    v = np.sort(_cells(f, Q))[None, :]
    return float(_oscillation_sorted(v, lam)[0])


def oscillation_levels(f: GridFunction, lam: float, sorted_blocks=None) -> list[np.ndarray]:
    """``omega_lam(f; Q)`` for every cube, one array per level."""
    if not 0 < lam < 1:
        raise ConfigurationError("lambda must lie in (0, 1)")
    grid = f.grid
    if sorted_blocks is None:
        sorted_blocks = _sorted_blocks(f)
    return [_oscillation_sorted(sorted_blocks[k], lam) for k in range(grid.L + 1)]


def _sorted_blocks(f: GridFunction) -> list[np.ndarray]:
    return [np.sort(f.grid.blocks(f.values, k), axis=1) for k in range(f.grid.L + 1)]


def local_sharp_maximal(f: GridFunction, Q0: Cube, lam: float, osc=None) -> GridFunction:
    """``M#_{lam;Q0} f``: largest ``omega_lam`` over cubes ``x in Q' <= Q0``."""
    grid = f.grid
    grid.check(Q0)
    if osc is None:
        osc = oscillation_levels(f, lam)
    out = np.zeros(grid.n_cells)
    c = grid.code(Q0)
    for k in range(Q0.level, grid.L + 1):
        n = 2 ** (grid.d * (k - Q0.level))
        vals = np.zeros(grid.n_at(k))
        vals[c * n:(c + 1) * n] = osc[k][c * n:(c + 1) * n]
        np.maximum(out, grid.expand(vals, k), out=out)
    return GridFunction(grid, out)


@dataclass(frozen=True)
class SparseFamily:
    """Generations ``Q^k_j`` of nested stopping cubes below ``root``."""

    root: Cube
    generations: tuple[tuple[Cube, ...], ...]

    @property
    def cubes(self) -> list[Cube]:
        return [Q for g in self.generations for Q in g]

    def __len__(self):
        return sum(len(g) for g in self.generations)

    def to_json(self) -> dict:
        return {
            "root": self.root.to_json(),
            "generations": [[Q.to_json() for Q in g] for g in self.generations],
        }


def stopping_lambda(d: int) -> float:
    return 2.0 ** (-d - 2)


class _LevelStats:
    """Per-cube medians and exceptional-set thresholds for one function."""

    def __init__(self, f: GridFunction, lam: float):
        grid = f.grid
        self.blocks = _sorted_blocks(f)
        self.median = []
        self.threshold = []
        for k in range(grid.L + 1):
            rows = self.blocks[k]
            n = rows.shape[1]
            med = rows[:, (n + 1) // 2 - 1]
            dev = np.sort(np.abs(grid.blocks(f.values, k) - med[:, None]), axis=1)[:, ::-1]
            m = _allowed(lam, n)
            thr = dev[:, m] if m < n else np.zeros(rows.shape[0])
            self.median.append(med)
            self.threshold.append(thr)


def _stopping_children(f: GridFunction, P: Cube, stats: _LevelStats) -> list[Cube]:
    """Maximal ``Q' < P`` where the exceptional set of ``P`` has density > 1/2.

    The exceptional set is ``{|f - m_f(P)| > ((f - m_f(P)) 1_P)^*(lam |P|)}``,
    so it has at most ``lam |P|`` measure.
    """
    grid = f.grid
    if P.level >= grid.L:
        return []
    code = grid.code(P)
    lo, hi = grid.cell_range(P)
    dev = np.abs(f.values[lo:hi] - stats.median[P.level][code])
    exc = (dev > stats.threshold[P.level][code]).astype(np.int64)
    if not exc.any():
        return []
    found = []
    covered = np.zeros(1, dtype=bool)
    for k in range(P.level + 1, grid.L + 1):
        covered = np.repeat(covered, grid.branching)
        nsub = 2 ** (grid.d * (k - P.level))
        size = exc.size // nsub
        counts = exc.reshape(nsub, size).sum(axis=1)
        hit = (2 * counts > size) & ~covered
        for j in np.flatnonzero(hit):
            found.append(grid.cube(k, code * nsub + j))
        covered |= hit
    return sorted(found)


def sparse_decomposition(f: GridFunction, Q0: Cube | None = None, lam: float | None = None) -> SparseFamily:
    """Stopping family ``{Q^k_j}`` below ``Q0`` (which is not a member).

    Generation ``k + 1`` consists of the stopping children of the
    generation-``k`` cubes.  The exceptional sets have measure at most
    ``lam |P|`` with ``lam = 2^(-d-2)``, hence each cube meets the next
    generation in at most ``2 lam |P| <= |P| / 4``.
    """
    grid = f.grid
    Q0 = grid.root if Q0 is None else Q0
    grid.check(Q0)
    lam = stopping_lambda(grid.d) if lam is None else lam
    stats = _LevelStats(f, lam)
    gens = []
    current = [Q0]
    while current:
        nxt = []
        for P in current:
            nxt.extend(_stopping_children(f, P, stats))
        if nxt:
            gens.append(tuple(sorted(nxt)))
        current = nxt
    return SparseFamily(Q0, tuple(gens))


def check_sparse(grid: Grid, fam: SparseFamily) -> list[str]:
    """Violations of the sparse-family invariants, by integer cell counting."""
    problems = []
    masks = []
    for k, gen in enumerate(fam.generations):
        mask = np.zeros(grid.n_cells, dtype=bool)
        for Q in gen:
            if not fam.root.contains(Q) or Q == fam.root:
                problems.append(f"{Q} is not a proper subcube of the root")
            lo, hi = grid.cell_range(Q)
            if mask[lo:hi].any():
                problems.append(f"generation {k}: {Q} overlaps another cube")
            mask[lo:hi] = True
        masks.append(mask)
    for k in range(len(masks) - 1):
        if np.any(masks[k + 1] & ~masks[k]):
            problems.append(f"Omega_{k + 1} is not inside Omega_{k}")
        for Q in fam.generations[k]:
            lo, hi = grid.cell_range(Q)
            if 2 * int(masks[k + 1][lo:hi].sum()) > hi - lo:
                problems.append(f"{Q} meets generation {k + 1} in more than half")
    return problems


def domination_sides(f: GridFunction, Q0: Cube | None = None, fam: SparseFamily | None = None):
    """Left and right sides of the pointwise oscillation bound on ``Q0``.

    Left: ``|f - m_f(Q0)|``.  Right: ``M#_{1/4;Q0} f`` plus
    ``omega_{2^(-d-2)}(f; parent(Q))`` summed over family cubes ``Q``
    containing the cell.  Both are returned on the cells of ``Q0``.
    """
    grid = f.grid
    Q0 = grid.root if Q0 is None else Q0
    if fam is None:
        fam = sparse_decomposition(f, Q0)
    blocks = _sorted_blocks(f)
    sharp = local_sharp_maximal(f, Q0, 0.25, oscillation_levels(f, 0.25, blocks)).values
    osc = oscillation_levels(f, stopping_lambda(grid.d), blocks)
    rhs = sharp.copy()
    for Q in fam.cubes:
        par = Q.parent()
        lo, hi = grid.cell_range(Q)
        rhs[lo:hi] += osc[par.level][grid.code(par)]
    lo, hi = grid.cell_range(Q0)
    lhs = np.abs(f.values[lo:hi] - median(f, Q0))
    return lhs, rhs[lo:hi]


def domination_constant(f: GridFunction, Q0: Cube | None = None, fam: SparseFamily | None = None) -> float:
    """Smallest ``C`` with ``|f - m_f(Q0)| <= C * (right side)`` on ``Q0``.

    ``0`` when the left side vanishes, ``inf`` if the right side vanishes
    somewhere the left side does not.
    """
    lhs, rhs = domination_sides(f, Q0, fam)
    active = lhs > 0
    if not active.any():
        return 0.0
    if np.any(rhs[active] <= 0):
        return math.inf
    return float(np.max(lhs[active] / rhs[active]))
