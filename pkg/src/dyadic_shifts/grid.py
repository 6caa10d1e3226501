"""Finite dyadic grid on the unit cube ``[0, 1)^d``.

Cells at the finest level are stored in Morton (Z-order) order, so every
dyadic cube owns a contiguous block of cells.  Per-level quantities are then
plain reshapes of the cell array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

MAX_DEPTH = {1: 14, 2: 7}


class ConfigurationError(ValueError):
    """Raised for invalid grid, weight or experiment parameters."""


class GridError(ValueError):
    """Raised for invalid tree navigation (beyond root, below leaves)."""


@dataclass(frozen=True, order=True)
class Cube:
    """Dyadic cube ``2^-level * ([0,1)^d + index)``.

    Ordering is level-major then lexicographic index, which is the canonical
    order used for tie-breaking everywhere in the package.
    """

    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    def volume(self, d: int | None = None) -> float:
        d = len(self.index) if d is None else d
        return 2.0 ** (-d * self.level)

    def contains(self, other: Cube) -> bool:
        """True if ``other`` is a subset of this cube (non-strict)."""
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def parent(self) -> Cube:
        if self.level == 0:
            raise GridError("ancestor beyond root")
        return Cube(self.level - 1, tuple(i >> 1 for i in self.index))

    def to_json(self) -> dict:
        return {"level": self.level, "index": list(self.index)}

    @classmethod
    def from_json(cls, obj) -> Cube:
        if isinstance(obj, str):
            return cls.parse(obj)
        return cls(int(obj["level"]), tuple(obj["index"]))

    @classmethod
    def parse(cls, text: str) -> Cube:
        """Parse ``"level:i"`` or ``"level:i,j"``."""
        try:
            level, idx = text.split(":")
            return cls(int(level), tuple(int(t) for t in idx.split(",")))
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse cube {text!r}") from exc

    def __str__(self) -> str:
        return f"{self.level}:{','.join(map(str, self.index))}"


def _interleave(index: tuple[int, ...], level: int) -> int:
    if len(index) == 1:
        return index[0]
    a, b = index
    code = 0
    for bit in range(level):
        code |= ((a >> bit) & 1) << (2 * bit + 1)
        code |= ((b >> bit) & 1) << (2 * bit)
    return code


def _deinterleave(code: int, level: int, d: int) -> tuple[int, ...]:
    if d == 1:
        return (code,)
    a = b = 0
    for bit in range(level):
        a |= ((code >> (2 * bit + 1)) & 1) << bit
        b |= ((code >> (2 * bit)) & 1) << bit
    return (a, b)


@dataclass(frozen=True)
class Grid:
    """Dyadic tree of depth ``L`` rooted at ``[0,1)^d``."""

    d: int
    L: int

    def __post_init__(self):
        if self.d not in MAX_DEPTH:
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.d}")
        if not 1 <= self.L <= MAX_DEPTH[self.d]:
            raise ConfigurationError(
                f"depth must be in [1, {MAX_DEPTH[self.d]}] for d={self.d}, got {self.L}"
            )

    @property
    def n_cells(self) -> int:
        return 2 ** (self.d * self.L)

    @property
    def n_cubes(self) -> int:
        return sum(2 ** (self.d * k) for k in range(self.L + 1))

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.d * self.L)

    @property
    def root(self) -> Cube:
        return Cube(0, (0,) * self.d)

    @property
    def branching(self) -> int:
        return 2 ** self.d

    def n_at(self, level: int) -> int:
        """Number of cubes at ``level``."""
        return 2 ** (self.d * level)

    def cells_per_cube(self, level: int) -> int:
        return 2 ** (self.d * (self.L - level))

    def volume(self, level: int) -> float:
        return 2.0 ** (-self.d * level)

    # -- identities -------------------------------------------------------

    def check(self, Q: Cube) -> None:
        if len(Q.index) != self.d or not 0 <= Q.level <= self.L:
            raise GridError(f"cube {Q} does not belong to {self}")
        if any(not 0 <= i < 2**Q.level for i in Q.index):
            raise GridError(f"cube {Q} does not belong to {self}")

    def code(self, Q: Cube) -> int:
        """Morton position of ``Q`` among the cubes of its level."""
        return _interleave(Q.index, Q.level)

    def cube(self, level: int, code: int) -> Cube:
        return Cube(level, _deinterleave(int(code), level, self.d))

    def cell_range(self, Q: Cube) -> tuple[int, int]:
        """Half-open range of finest-level cells inside ``Q``."""
        n = self.cells_per_cube(Q.level)
        start = self.code(Q) * n
        return start, start + n

    @cached_property
    def _lex_codes(self) -> list[np.ndarray]:
        # per level: Morton codes listed in lexicographic index order
        out = []
        for k in range(self.L + 1):
            if self.d == 1:
                out.append(np.arange(2**k))
            else:
                side = 2**k
                out.append(
                    np.array([_interleave((a, b), k) for a in range(side) for b in range(side)])
                )
        return out

    def lex_order(self, level: int) -> np.ndarray:
        return self._lex_codes[level]

    # -- navigation -------------------------------------------------------

    def ancestor(self, Q: Cube, i: int) -> Cube:
        self.check(Q)
        if i < 0:
            raise GridError("ancestor order must be non-negative")
        if i > Q.level:
            raise GridError("ancestor beyond root")
        return Cube(Q.level - i, tuple(j >> i for j in Q.index))

    def children(self, Q: Cube) -> list[Cube]:
        self.check(Q)
        if Q.level >= self.L:
            raise GridError(f"cube {Q} is at the finest level and has no children")
        if self.d == 1:
            (a,) = Q.index
            return [Cube(Q.level + 1, (2 * a,)), Cube(Q.level + 1, (2 * a + 1,))]
        a, b = Q.index
        return [
            Cube(Q.level + 1, (2 * a + da, 2 * b + db)) for da in (0, 1) for db in (0, 1)
        ]

    def cubes_at(self, level: int) -> Iterator[Cube]:
        for code in self.lex_order(level):
            yield self.cube(level, code)

    def cubes(self, within: Cube | None = None) -> Iterator[Cube]:
        """All cubes (optionally inside ``within``) in canonical order."""
        if within is None:
            for k in range(self.L + 1):
                yield from self.cubes_at(k)
            return
        self.check(within)
        for k in range(within.level, self.L + 1):
            shift = k - within.level
            lo = [i << shift for i in within.index]
            side = 2**shift
            if self.d == 1:
                for a in range(side):
                    yield Cube(k, (lo[0] + a,))
            else:
                for a in range(side):
                    for b in range(side):
                        yield Cube(k, (lo[0] + a, lo[1] + b))

    def cell_centers(self) -> np.ndarray:
        """Coordinates of cell centres, shape ``(n_cells, d)``, Morton order."""
        h = 2.0**-self.L
        idx = np.array([_deinterleave(c, self.L, self.d) for c in range(self.n_cells)])
        return (idx + 0.5) * h

    # -- per-level array helpers -----------------------------------------

    def level_sums(self, values: np.ndarray) -> list[np.ndarray]:
        """Sums of cell values over every cube, one array per level.

        Pairwise aggregation from the leaves, no prefix-sum cancellation.
        """
        sums = [None] * (self.L + 1)
        cur = np.asarray(values, dtype=float)
        sums[self.L] = cur
        for k in range(self.L - 1, -1, -1):
            cur = cur.reshape(-1, self.branching).sum(axis=1)
            sums[k] = cur
        return sums

    def expand(self, level_values: np.ndarray, level: int) -> np.ndarray:
        """Broadcast one value per cube of ``level`` to the cells."""
        return np.repeat(level_values, self.cells_per_cube(level))

    def blocks(self, values: np.ndarray, level: int) -> np.ndarray:
        """View cell values as ``(cubes at level, cells per cube)``."""
        return np.asarray(values).reshape(self.n_at(level), self.cells_per_cube(level))

    def from_array(self, arr) -> np.ndarray:
        """Convert a natural-order array (``(2^L,)`` or ``(2^L, 2^L)``) to Morton order."""
        arr = np.asarray(arr, dtype=float)
        if self.d == 1:
            return arr.reshape(-1).copy()
        side = 2**self.L
        if arr.shape != (side, side):
            raise ConfigurationError(f"expected shape {(side, side)}, got {arr.shape}")
        idx = np.array([_deinterleave(c, self.L, 2) for c in range(self.n_cells)])
        return arr[idx[:, 0], idx[:, 1]].copy()

    def to_array(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.d == 1:
            return values.copy()
        side = 2**self.L
        idx = np.array([_deinterleave(c, self.L, 2) for c in range(self.n_cells)])
        out = np.empty((side, side))
        out[idx[:, 0], idx[:, 1]] = values
        return out


def build_grid(d: int, L: int) -> Grid:
    return Grid(d, L)


def first_max(grid: Grid, per_level: list[np.ndarray], levels=None, rtol: float = 1e-12):
    """Maximum over per-level cube arrays and the first cube attaining it.

    Values within ``rtol`` of the maximum count as ties; ties resolve to the
    canonical (level-major, lexicographic) order.
    """
    levels = range(len(per_level)) if levels is None else levels
    best = -np.inf
    for k in levels:
        if per_level[k].size:
            best = max(best, float(np.max(per_level[k])))
    cut = best - rtol * abs(best)
    for k in levels:
        arr = per_level[k]
        hits = np.flatnonzero(arr >= cut)
        if hits.size:
            if grid.d == 1:
                code = int(hits.min())
            else:
                order = grid.lex_order(k)
                rank = np.empty_like(order)
                rank[order] = np.arange(order.size)
                code = int(hits[np.argmin(rank[hits])])
            return best, grid.cube(k, code)
    raise ValueError("empty search")
