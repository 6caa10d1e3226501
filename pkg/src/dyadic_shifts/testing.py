"""Two-weight testing constants, principal cubes and distributional decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ConfigurationError, Cube
from .shifts import HaarShift, adjoint_apply, apply
from .weights import (
    GridFunction,
    Weight,
    ainfty,
    ap_two_weight,
    conjugate,
    local_ap_ratio,
    lp_norm,
    weighted_maximal,
)


def _indicator_times(u: GridFunction, Q: Cube) -> GridFunction:
    return u.restrict(Q)


def testing_ratio(S: HaarShift, w: Weight, sigma: Weight, p: float, Q: Cube, direction: str = "forward") -> float:
    """Testing quotient at a single cube."""
    if direction == "forward":
        out = apply(S, _indicator_times(sigma, Q)).restrict(Q)
        return lp_norm(out, w, p) / sigma.measure(Q) ** (1 / p)
    if direction == "adjoint":
        pp = conjugate(p)
        out = adjoint_apply(S, _indicator_times(w, Q)).restrict(Q)
        return lp_norm(out, sigma, pp) / w.measure(Q) ** (1 / pp)
    raise ConfigurationError(f"direction must be forward or adjoint, got {direction!r}")


def shift_testing_constant(S: HaarShift, w: Weight, sigma: Weight, p: float,
                           direction: str = "forward") -> tuple[float, Cube]:
    """Supremum of the testing quotient over all cubes, with the first maximiser.

    ``forward``:  ``||1_Q S(1_Q sigma)||_{L^p(w)} / sigma(Q)^(1/p)``;
    ``adjoint``:  ``||1_Q S*(1_Q w)||_{L^p'(sigma)} / w(Q)^(1/p')``.
    """
    conjugate(p)
    best, arg = -1.0, None
    for Q in S.grid.cubes():
        r = testing_ratio(S, w, sigma, p, Q, direction)
        if r > best * (1 + 1e-12) or arg is None:
            best, arg = r, Q
    return best, arg


def maximal_norm_estimate(w: Weight, sigma: Weight, p: float, probes) -> float:
    """Lower estimate of the norm of ``f -> M(f sigma)``, ``L^p(sigma) -> L^p(w)``."""
    probes = list(probes)
    if not probes:
        raise ConfigurationError("maximal_norm_estimate needs at least one probe")
    best = 0.0
    for f in probes:
        den = lp_norm(f, sigma, p)
        if den == 0:
            raise ConfigurationError("probe functions must be nonzero")
        best = max(best, lp_norm(weighted_maximal(f * sigma), w, p) / den)
    return best


def scale_layers(cubes, kappa: int) -> list[list[Cube]]:
    """Split cubes by ``log2 side(Q) mod (kappa + 1)``."""
    if kappa < 1:
        raise ConfigurationError("kappa must be >= 1")
    out = [[] for _ in range(kappa + 1)]
    for Q in cubes:
        out[(-Q.level) % (kappa + 1)].append(Q)
    return out


@dataclass
class PrincipalForest:
    """Principal cubes of one frozen-ratio layer ``K^a``."""

    a: int
    lam: int
    members: list[Cube]
    principals: list[Cube]
    generation: dict[Cube, int] = field(default_factory=dict)
    pi: dict[Cube, Cube] = field(default_factory=dict)

    def _outer(self, P: Cube) -> Cube:
        R = P
        while R.level > 0:
            R = R.parent()
            if R in self.generation:
                return R
        raise ValueError(f"{P} has no enclosing principal cube")

    def parent_principal(self, P: Cube) -> Cube | None:
        return self._outer(P) if self.generation[P] > 0 else None

    def members_of(self, P: Cube) -> list[Cube]:
        """``K^a(P) = {Q in K^a : Pi(Q) = P}``."""
        return [Q for Q in self.members if self.pi[Q] == P]


def layer_index(ratio: float) -> int:
    """``floor(log2 ratio)`` computed exactly from the binary exponent."""
    _, e = math.frexp(ratio)
    return e - 1


def build_principal_forest(cubes, w: Weight, sigma: Weight, p: float, lam: int = 0) -> list[PrincipalForest]:
    """Group ``cubes`` into layers ``2^a <= ratio < 2^(a+1)`` and build principal cubes.

    Layers with negative ``a`` are merged into one layer labelled
    ``floor(log2(min ratio))``.  Within a layer, a cube becomes principal
    when its ``sigma`` density exceeds twice that of its nearest principal
    ancestor (or when no principal ancestor exists).
    """
    cubes = sorted(set(cubes))
    if not cubes:
        raise ConfigurationError("principal forest needs a nonempty collection")
    grid = w.grid
    ratios = local_ap_ratio(w, sigma, p)
    dens = sigma.cube_averages
    r = {Q: float(ratios[Q.level][grid.code(Q)]) for Q in cubes}
    a_min = layer_index(min(r.values()))
    layers: dict[int, list[Cube]] = {}
    for Q in cubes:
        a = layer_index(r[Q])
        layers.setdefault(a if a >= 0 else a_min, []).append(Q)
    forests = []
    for a in sorted(layers):
        members = layers[a]
        gen: dict[Cube, int] = {}
        pi: dict[Cube, Cube] = {}
        for Q in members:  # canonical order is top-down
            R, anc = Q, None
            while R.level > 0 and anc is None:
                R = R.parent()
                if R in gen:
                    anc = R
            if anc is None:
                gen[Q] = 0
                pi[Q] = Q
            elif dens[Q.level][grid.code(Q)] > 2 * dens[anc.level][grid.code(anc)]:
                gen[Q] = gen[anc] + 1
                pi[Q] = Q
            else:
                pi[Q] = anc
        principals = [Q for Q in members if Q in gen]
        forests.append(PrincipalForest(a, lam, members, principals, gen, pi))
    return forests


def check_forest(forest: PrincipalForest, w: Weight, sigma: Weight, p: float) -> list[str]:
    """Violations of the forest invariants (exact comparisons)."""
    grid = w.grid
    dens = sigma.cube_averages
    problems = []
    sup = max(float(r.max()) for r in local_ap_ratio(w, sigma, p))
    if forest.members and 2.0**forest.a > sup:
        problems.append(f"layer a={forest.a} exceeds [w,sigma]_Ap^(1/p) = {sup}")
    for Q in forest.members:
        P = forest.pi[Q]
        if P not in forest.generation or not P.contains(Q):
            problems.append(f"Pi({Q}) = {P} is not an enclosing principal cube")
    for P in forest.principals:
        outer = forest.parent_principal(P)
        if outer is None:
            continue
        if not dens[P.level][grid.code(P)] > 2 * dens[outer.level][grid.code(outer)]:
            problems.append(f"principal {P} does not double the density of {outer}")
    return problems


def carleson_ratio(forest: PrincipalForest, sigma: Weight, Q0: Cube | None = None,
                   sigma_ainfty: float | None = None) -> float:
    """``sum_P sigma(P) / ([sigma]_{A_inf} sigma(Q0))``."""
    Q0 = sigma.grid.root if Q0 is None else Q0
    if not forest.principals:
        return 0.0
    if any(not Q0.contains(P) for P in forest.principals):
        raise ConfigurationError("principal cubes must lie in Q0")
    aw = ainfty(sigma) if sigma_ainfty is None else sigma_ainfty
    total = sum(sigma.measure(P) for P in forest.principals)
    return total / (aw * sigma.measure(Q0))


@dataclass
class DecayProfile:
    thresholds: list[float]
    measures: list[float]
    total: float
    rate: float | None

    @property
    def nonempty(self) -> int:
        return sum(m > 0 for m in self.measures)


def fit_rate(thresholds, measures) -> float | None:
    """Least-squares decay rate of ``log(measure)`` against ``t``."""
    pts = [(t, math.log(m)) for t, m in zip(thresholds, measures) if m > 0]
    if len(pts) < 2:
        return None
    t, y = np.array(pts).T
    slope = np.polyfit(t, y, 1)[0]
    return float(-slope)


def decay_profile(S: HaarShift, sigma: Weight, w: Weight, P: Cube, thresholds) -> DecayProfile:
    """``w({x in P : |S sigma| > t sigma(P)/|P|})`` for each ``t``."""
    thresholds = [float(t) for t in thresholds]
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ConfigurationError("thresholds must be increasing")
    grid = sigma.grid
    lo, hi = grid.cell_range(P)
    vals = np.abs(apply(S, sigma).values[lo:hi])
    level = sigma.measure(P) / P.volume(grid.d)
    wv = w.values[lo:hi] * grid.cell_volume
    measures = [float(wv[vals > t * level].sum()) for t in thresholds]
    return DecayProfile(thresholds, measures, w.measure(P), fit_rate(thresholds, measures))


def testing_proposition_ratio(S: HaarShift, w: Weight, sigma: Weight, p: float, Q: Cube,
                              ap: float | None = None, sigma_ainfty: float | None = None) -> float:
    """``||1_Q S(1_Q sigma)||_{L^p(w)} / ((1+kappa) ([w,sigma]_{A_p} [sigma]_{A_inf} sigma(Q))^(1/p))``."""
    ap = ap_two_weight(w, sigma, p)[0] if ap is None else ap
    sa = ainfty(sigma) if sigma_ainfty is None else sigma_ainfty
    num = lp_norm(apply(S, sigma.restrict(Q)).restrict(Q), w, p)
    return num / ((1 + S.kappa) * (ap * sa * sigma.measure(Q)) ** (1 / p))


def max_testing_proposition_ratio(S: HaarShift, w: Weight, sigma: Weight, p: float) -> tuple[float, Cube]:
    ap = ap_two_weight(w, sigma, p)[0]
    sa = ainfty(sigma)
    best, arg = -1.0, None
    for Q in S.grid.cubes():
        r = testing_proposition_ratio(S, w, sigma, p, Q, ap, sa)
        if r > best * (1 + 1e-12) or arg is None:
            best, arg = r, Q
    return best, arg


def nondegenerate_lhs(S: HaarShift, w: Weight, sigma: Weight, p: float, Q0: Cube | None = None) -> float:
    """``(int_{Q0} M_w(1_{Q0} S(1_{Q0} sigma))^p w)^(1/p)``, the quantity behind N_p."""
    Q0 = w.grid.root if Q0 is None else Q0
    inner = apply(S, sigma.restrict(Q0)).restrict(Q0)
    return lp_norm(weighted_maximal(inner, w, restrict=Q0), w, p)


def adjoint_testing_lhs(S: HaarShift, w: Weight, sigma: Weight, p: float, Q: Cube, g: GridFunction) -> float:
    """``||1_Q S*(1_Q g w)||_{L^p'(sigma)}``, the quantity behind T_p."""
    pp = conjugate(p)
    return lp_norm(adjoint_apply(S, (g * w).restrict(Q)).restrict(Q), sigma, pp)


@dataclass
class LayerSummary:
    lam: int
    a: int
    principals: list[Cube]
    carleson: float
    forest: PrincipalForest


def layer_analysis(S: HaarShift, w: Weight, sigma: Weight, p: float, Q0: Cube | None = None,
                   thresholds=tuple(range(1, 9))):
    """Forests for every scale class and layer, plus decay profiles per principal cube.

    Returns ``(layers, decays)`` where ``decays`` is a list of
    ``(lam, a, P, DecayProfile)`` for principal cubes whose restricted
    shift is nonzero.
    """
    grid = w.grid
    Q0 = grid.root if Q0 is None else Q0
    sa = ainfty(sigma)
    layers, decays = [], []
    for lam, K in enumerate(scale_layers(grid.cubes(within=Q0), S.kappa)):
        if not K:
            continue
        for forest in build_principal_forest(K, w, sigma, p, lam):
            layers.append(LayerSummary(lam, forest.a, forest.principals,
                                       carleson_ratio(forest, sigma, Q0, sa), forest))
            groups: dict[Cube, list[Cube]] = {}
            for Q in forest.members:
                groups.setdefault(forest.pi[Q], []).append(Q)
            for P in forest.principals:
                part = S.restrict(groups.get(P, []))
                if part.n_terms:
                    decays.append((lam, forest.a, P, decay_profile(part, sigma, w, P, thresholds)))
    return layers, decays


def worst_decay(decays, thresholds=tuple(range(1, 9))) -> DecayProfile:
    """Pointwise-in-``t`` maximum of ``measure / w(P)`` over all profiles."""
    thresholds = [float(t) for t in thresholds]
    worst = [0.0] * len(thresholds)
    for *_, prof in decays:
        for j, m in enumerate(prof.measures):
            worst[j] = max(worst[j], m / prof.total)
    return DecayProfile(thresholds, worst, 1.0, fit_rate(thresholds, worst))
