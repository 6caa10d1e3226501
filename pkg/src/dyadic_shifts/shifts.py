"""Generalized Haar shift operators on a finite dyadic grid."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .grid import ConfigurationError, Cube, Grid, GridError
from .weights import GridFunction

# c in the normalisation c/i of the positive shifts S^(i): the smallest
# i / ||S^(i)||_2 over 20 Lerner families at d=1, L=10 (0.8514), rounded down.
# Recomputed by calibration.positive_shift_constant.
POSITIVE_SHIFT_CONSTANT = 0.85


@dataclass(frozen=True)
class ShiftTerm:
    """One summand ``<f, h> k / |Q|`` of a shift component.

    ``h`` lives on ``r`` and ``k`` on ``q``.  A profile of length ``2^d``
    gives the values on the children (canonical order); a profile of length
    1 is constant on the whole cube, which is how leaf cubes are handled.
    """

    q: Cube
    r: Cube
    h: tuple[float, ...]
    k: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(float(x) for x in self.h))
        object.__setattr__(self, "k", tuple(float(x) for x in self.k))


@dataclass(frozen=True)
class ShiftComponent:
    cube: Cube
    terms: tuple[ShiftTerm, ...]


def _profile_entries(grid: Grid, cube: Cube, coefs: tuple[float, ...]):
    if len(coefs) == 1:
        return [(cube.level, grid.code(cube), coefs[0])]
    if len(coefs) != grid.branching:
        raise ConfigurationError(
            f"profile on {cube} must have 1 or {grid.branching} coefficients"
        )
    if cube.level >= grid.L:
        raise ConfigurationError(f"child-constant profile on leaf cube {cube}")
    base = grid.code(cube) * grid.branching
    return [(cube.level + 1, base + j, c) for j, c in enumerate(coefs)]


class _Compiled:
    """Vectorised evaluation of ``f -> sum_t factor_t <f, a_t> b_t``.

    ``a`` and ``b`` are step profiles given as (level, code, coef) entries.
    """

    def __init__(self, grid, n_terms, a_entries, b_entries, factor, comp_level):
        self.grid = grid
        self.n_terms = n_terms
        self.factor = np.asarray(factor, dtype=float)
        self.comp_level = np.asarray(comp_level, dtype=int)
        self.a = self._group(a_entries)
        self.b_all = self._group(b_entries)
        self.b_by_comp = {}
        for c in np.unique(self.comp_level) if n_terms else []:
            keep = [e for e in b_entries if self.comp_level[e[3]] == c]
            self.b_by_comp[int(c)] = self._group(keep)

    @staticmethod
    def _group(entries):
        grouped = {}
        for level, code, coef, tid in entries:
            grouped.setdefault(level, ([], [], []))
            g = grouped[level]
            g[0].append(code)
            g[1].append(coef)
            g[2].append(tid)
        return {
            lvl: (np.array(c, dtype=np.int64), np.array(v, dtype=float), np.array(t, dtype=np.int64))
            for lvl, (c, v, t) in sorted(grouped.items())
        }

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        grid = self.grid
        sums = grid.level_sums(values)
        s = np.zeros(self.n_terms)
        for lvl, (codes, coefs, tids) in self.a.items():
            s += np.bincount(
                tids, weights=coefs * sums[lvl][codes] * grid.cell_volume, minlength=self.n_terms
            )
        return s * self.factor

    def synthesize(self, s: np.ndarray, groups) -> np.ndarray:
        grid = self.grid
        carry = np.zeros(1)
        for lvl in range(grid.L + 1):
            if lvl:
                carry = np.repeat(carry, grid.branching)
            if lvl in groups:
                codes, coefs, tids = groups[lvl]
                carry = carry + np.bincount(codes, weights=coefs * s[tids], minlength=grid.n_at(lvl))
        return carry

    def apply(self, values: np.ndarray) -> np.ndarray:
        if not self.n_terms:
            return np.zeros(self.grid.n_cells)
        return self.synthesize(self.coefficients(values), self.b_all)

    def per_level(self, values: np.ndarray) -> dict[int, np.ndarray]:
        """Output split by component level."""
        if not self.n_terms:
            return {}
        s = self.coefficients(values)
        return {c: self.synthesize(s, g) for c, g in self.b_by_comp.items()}


@dataclass(frozen=True, eq=False)
class HaarShift:
    """Finite generalized Haar shift of complexity type ``(m, n)``.

    ``scale`` multiplies the whole operator; construction never rescales
    silently, see :meth:`normalized`.
    """

    grid: Grid
    complexity: tuple[int, int]
    components: Mapping[Cube, ShiftComponent]
    positive: bool = False
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.complexity
        if m < 0 or n < 0:
            raise ConfigurationError("complexity entries must be non-negative")
        for Q, comp in self.components.items():
            self.grid.check(Q)
            if comp.cube != Q:
                raise ConfigurationError(f"component keyed by {Q} belongs to {comp.cube}")
            for t in comp.terms:
                self.grid.check(t.q)
                self.grid.check(t.r)
                if t.q.level != Q.level + m or not Q.contains(t.q):
                    raise ConfigurationError(f"Q' = {t.q} is not a depth-{m} subcube of {Q}")
                if t.r.level != Q.level + n or not Q.contains(t.r):
                    raise ConfigurationError(f"R' = {t.r} is not a depth-{n} subcube of {Q}")
                if max(map(abs, t.h + t.k)) > 1 + 1e-12:
                    raise ConfigurationError("Haar profiles must be bounded by 1")
                if self.positive and min(t.h + t.k) < 0:
                    raise ConfigurationError("positive shift with a negative coefficient")
        if self.positive and self.scale < 0:
            raise ConfigurationError("positive shift with negative scale")

    @property
    def kappa(self) -> int:
        m, n = self.complexity
        return max(m, n, 1)

    @property
    def n_terms(self) -> int:
        return sum(len(c.terms) for c in self.components.values())

    def _ordered_terms(self):
        for Q in sorted(self.components):
            for t in self.components[Q].terms:
                yield Q, t

    def _compile(self, adjoint: bool) -> _Compiled:
        a_entries, b_entries, factor, comp_level = [], [], [], []
        for tid, (Q, t) in enumerate(self._ordered_terms()):
            src, dst = ((t.q, t.k), (t.r, t.h)) if adjoint else ((t.r, t.h), (t.q, t.k))
            a_entries += [e + (tid,) for e in _profile_entries(self.grid, *src)]
            b_entries += [e + (tid,) for e in _profile_entries(self.grid, *dst)]
            factor.append(self.scale / Q.volume(self.grid.d))
            comp_level.append(Q.level)
        return _Compiled(self.grid, len(factor), a_entries, b_entries, factor, comp_level)

    @cached_property
    def _forward(self) -> _Compiled:
        return self._compile(adjoint=False)

    @cached_property
    def _backward(self) -> _Compiled:
        return self._compile(adjoint=True)

    def normalized(self, factor: float) -> HaarShift:
        """Copy with ``scale`` multiplied by ``factor``."""
        return HaarShift(
            self.grid, self.complexity, self.components, self.positive,
            self.scale * factor, dict(self.meta),
        )

    def restrict(self, cubes: Iterable[Cube]) -> HaarShift:
        """Keep only the components at ``cubes``."""
        keep = {Q: self.components[Q] for Q in cubes if Q in self.components}
        return HaarShift(self.grid, self.complexity, keep, self.positive, self.scale, dict(self.meta))

    def component_levels(self) -> list[int]:
        return sorted({Q.level for Q in self.components})


def _values(S: HaarShift, f) -> np.ndarray:
    if isinstance(f, GridFunction):
        if f.grid != S.grid:
            raise ConfigurationError("grid mismatch")
        return f.values
    vals = np.asarray(f, dtype=float)
    if vals.shape != (S.grid.n_cells,):
        raise ConfigurationError("grid mismatch")
    return vals


def apply(S: HaarShift, f: GridFunction) -> GridFunction:
    return GridFunction(S.grid, S._forward.apply(_values(S, f)))


def adjoint_apply(S: HaarShift, g: GridFunction) -> GridFunction:
    return GridFunction(S.grid, S._backward.apply(_values(S, g)))


def _window_levels(grid: Grid, eps: float, ups: float) -> list[int]:
    return [k for k in range(grid.L + 1) if eps <= 2.0**-k <= ups]


def truncated_apply(S: HaarShift, f: GridFunction, eps: float, ups: float) -> GridFunction:
    """Sum of the components whose side length lies in ``[eps, ups]``."""
    if eps > ups:
        raise ConfigurationError("truncation window needs eps <= ups")
    parts = S._forward.per_level(_values(S, f))
    out = np.zeros(S.grid.n_cells)
    for k in _window_levels(S.grid, eps, ups):
        if k in parts:
            out += parts[k]
    return GridFunction(S.grid, out)


def maximal_truncation(S: HaarShift, f: GridFunction) -> GridFunction:
    """Pointwise maximum of ``|truncated_apply|`` over all scale windows.

    Windows are ``[2^-hi, 2^-lo]`` for ``0 <= lo <= hi <= L``; on a finite
    grid the supremum over truncations is attained among them.
    """
    grid = S.grid
    parts = S._forward.per_level(_values(S, f))
    best = np.zeros(grid.n_cells)
    levels = sorted(parts)
    for a, lo in enumerate(levels):
        running = np.zeros(grid.n_cells)
        for hi in levels[a:]:
            running = running + parts[hi]
            np.maximum(best, np.abs(running), out=best)
    return GridFunction(grid, best)


def operator_l2_norm(S: HaarShift, rtol: float = 1e-8, max_iter: int = 20000, seed: int = 0) -> float:
    """Unweighted ``L^2`` operator norm by power iteration on ``S* S``."""
    if not S.n_terms or S.scale == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(S.grid.n_cells)
    x /= np.linalg.norm(x)
    prev = 0.0
    est = 0.0
    for _ in range(max_iter):
        y = S._backward.apply(S._forward.apply(x))
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            # x fell into the kernel; restart from a fresh vector
            x = rng.standard_normal(S.grid.n_cells)
            x /= np.linalg.norm(x)
            continue
        est = np.sqrt(lam)
        x = y / lam
        if abs(est - prev) <= rtol * est:
            break
        prev = est
    return float(est)


def normalize_unit(S: HaarShift) -> HaarShift:
    """Scale down to ``||S||_2 <= 1`` if needed; records the measured norm."""
    norm = operator_l2_norm(S)
    out = S.normalized(1.0 / norm) if norm > 1 else S.normalized(1.0)
    out.meta["raw_l2_norm"] = norm
    return out


# -- positive shifts S^(i) -------------------------------------------------


@dataclass(frozen=True)
class PositiveShiftSpec:
    """Sparse collection and ancestor offset defining ``S^(i)``."""

    family: tuple[Cube, ...]
    offset: int
    generations: tuple[tuple[Cube, ...], ...] | None = None

    @classmethod
    def from_family(cls, family, offset: int) -> PositiveShiftSpec:
        gens = getattr(family, "generations", None)
        if gens is not None:
            cubes = tuple(Q for g in gens for Q in g)
            return cls(cubes, offset, tuple(tuple(g) for g in gens))
        return cls(tuple(family), offset)

    def eligible(self) -> PositiveShiftSpec:
        """Drop cubes whose ``offset``-th ancestor lies beyond the root."""
        keep = tuple(Q for Q in self.family if Q.level >= self.offset)
        gens = None
        if self.generations is not None:
            gens = tuple(tuple(Q for Q in g if Q.level >= self.offset) for g in self.generations)
        return PositiveShiftSpec(keep, self.offset, gens)


def _check_disjoint(cubes) -> bool:
    seen = sorted(cubes)
    for a, Q in enumerate(seen):
        for R in seen[a + 1:]:
            if Q.contains(R) or R.contains(Q):
                return False
    return True


def build_positive_shift(grid: Grid, spec: PositiveShiftSpec) -> HaarShift:
    """``S^(i) f = sum_{Q' in family} 1_{Q'} * avg_{Q'^(i)} f``.

    Stored unnormalised; ``meta["suggested_scale"]`` carries ``c / i``.
    The averaging side is recorded as an ``n = 0`` constant profile on the
    ancestor, so the complexity type is ``(i, 0)`` and ``kappa = i``.
    """
    i = spec.offset
    if i < 1:
        raise ConfigurationError("offset i must be >= 1")
    for Q in spec.family:
        grid.check(Q)
        if Q.level < i:
            raise GridError(f"ancestor beyond root: {Q} has no ancestor of order {i}")
    if spec.generations is not None:
        for g in spec.generations:
            if not _check_disjoint(g):
                raise ConfigurationError("cubes within a generation must be disjoint")
    terms: dict[Cube, list[ShiftTerm]] = {}
    for Qp in sorted(set(spec.family)):
        anc = grid.ancestor(Qp, i)
        terms.setdefault(anc, []).append(ShiftTerm(q=Qp, r=anc, h=(1.0,), k=(1.0,)))
    comps = {Q: ShiftComponent(Q, tuple(ts)) for Q, ts in terms.items()}
    meta = {"offset": i, "suggested_scale": POSITIVE_SHIFT_CONSTANT / i}
    return HaarShift(grid, (i, 0), comps, positive=True, meta=meta)


def martingale_transform(grid: Grid, signs=None) -> HaarShift:
    """``sum_Q eps_Q <f, h_Q> h_Q / |Q|`` with the standard d=1 Haar functions."""
    if grid.d != 1:
        raise ConfigurationError("martingale_transform is defined for d=1")
    comps = {}
    for Q in grid.cubes():
        if Q.level >= grid.L:
            continue
        eps = 1.0 if signs is None else float(signs(Q))
        comps[Q] = ShiftComponent(Q, (ShiftTerm(Q, Q, (1.0, -1.0), (eps, -eps)),))
    return HaarShift(grid, (0, 0), comps)


def random_shift(grid: Grid, m: int, n: int, rng, terms_per_cube: int = 2,
                 cancellative: bool = True, positive: bool = False) -> HaarShift:
    """Random shift of type ``(m, n)``, not normalised.

    Components sit at every cube deep enough to host child-constant profiles
    ``m`` and ``n`` levels down.
    """
    b = grid.branching
    comps = {}
    for Q in grid.cubes():
        if Q.level + max(m, n) >= grid.L:
            continue
        qs = list(_descendants(grid, Q, m))
        rs = list(_descendants(grid, Q, n))
        terms = []
        for _ in range(terms_per_cube):
            qp = qs[rng.integers(len(qs))]
            rp = rs[rng.integers(len(rs))]
            if positive:
                h = rng.uniform(0, 1, b)
                k = rng.uniform(0, 1, b)
            else:
                h = rng.uniform(-1, 1, b)
                k = rng.uniform(-1, 1, b)
                if cancellative:
                    h = h - h.mean()
                    h = h / max(1.0, np.abs(h).max())
            terms.append(ShiftTerm(qp, rp, tuple(h), tuple(k)))
        comps[Q] = ShiftComponent(Q, tuple(terms))
    return HaarShift(grid, (m, n), comps, positive=positive)


def _descendants(grid: Grid, Q: Cube, depth: int):
    for R in grid.cubes(within=Q):
        if R.level == Q.level + depth:
            yield R
        elif R.level > Q.level + depth:
            return


# -- JSON wire format ------------------------------------------------------


def shift_to_json(S: HaarShift) -> dict:
    return {
        "grid": {"d": S.grid.d, "L": S.grid.L},
        "complexity": list(S.complexity),
        "positive": S.positive,
        "scale": S.scale,
        "components": [
            {
                "cube": Q.to_json(),
                "terms": [
                    {"q": t.q.to_json(), "r": t.r.to_json(), "h": list(t.h), "k": list(t.k)}
                    for t in S.components[Q].terms
                ],
            }
            for Q in sorted(S.components)
        ],
    }


def shift_from_json(doc, grid: Grid | None = None) -> HaarShift:
    """Build a shift from the JSON document (dict, JSON text or file path).

    Besides the explicit component form, ``{"sparse_family": [...],
    "offset": i}`` builds ``S^(i)`` and ``{"kind": "martingale"}`` the
    martingale transform.
    """
    if isinstance(doc, str):
        doc = json.loads(doc) if doc.lstrip().startswith("{") else json.loads(open(doc).read())
    if "grid" in doc:
        grid = Grid(int(doc["grid"]["d"]), int(doc["grid"]["L"]))
    if grid is None:
        raise ConfigurationError("shift document needs a grid")
    if "sparse_family" in doc:
        fam = [Cube.from_json(c) for c in doc["sparse_family"]]
        S = build_positive_shift(grid, PositiveShiftSpec(tuple(fam), int(doc["offset"])))
    elif doc.get("kind") == "martingale":
        S = martingale_transform(grid)
    else:
        comps = {}
        for entry in doc.get("components", []):
            Q = Cube.from_json(entry["cube"])
            terms = tuple(
                ShiftTerm(Cube.from_json(t["q"]), Cube.from_json(t["r"]), t["h"], t["k"])
                for t in entry["terms"]
            )
            comps[Q] = ShiftComponent(Q, terms)
        S = HaarShift(grid, tuple(doc.get("complexity", (0, 0))), comps,
                      bool(doc.get("positive", False)))
    return S.normalized(float(doc.get("scale", 1.0)))
