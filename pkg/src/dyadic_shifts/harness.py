"""Weight and function generators, experiment sweeps and record emission."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .grid import ConfigurationError, Cube, Grid
from .lerner import SparseFamily, domination_constant, sparse_decomposition
from .shifts import (
    HaarShift,
    PositiveShiftSpec,
    adjoint_apply,
    apply,
    build_positive_shift,
    martingale_transform,
    maximal_truncation,
    normalize_unit,
    random_shift,
    shift_from_json,
)
from .testing import layer_analysis, shift_testing_constant, worst_decay
from .weights import (
    GridFunction,
    Weight,
    ainfty,
    ap_two_weight,
    conjugate,
    dual_weight,
    lebesgue,
    lp_norm,
)

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "weight_id", "p", "shift_id", "i", "ap", "ainfty_w", "ainfty_sigma",
    "Sp", "SpStar", "R", "rho", "domC", "decay_c",
)


# -- generators ------------------------------------------------------------


@dataclass(frozen=True)
class WeightSpec:
    """``power`` (``alpha``), ``step`` (``values``) or ``random`` (``seed``, ``roughness``)."""

    kind: str
    alpha: float = 0.0
    values: tuple[float, ...] = ()
    seed: int = 0
    roughness: float = 1.0

    @classmethod
    def from_json(cls, obj) -> WeightSpec:
        if isinstance(obj, str):
            return cls.parse(obj)
        kind = obj.get("kind")
        if kind == "power":
            return cls("power", alpha=float(obj["alpha"]))
        if kind == "step":
            return cls("step", values=tuple(float(v) for v in obj["values"]))
        if kind in ("random", "randomized"):
            return cls("random", seed=int(obj.get("seed", 0)),
                       roughness=float(obj.get("roughness", 1.0)))
        if kind == "lebesgue":
            return cls("power", alpha=0.0)
        raise ConfigurationError(f"unknown weight kind {kind!r}")

    @classmethod
    def parse(cls, text: str) -> WeightSpec:
        """Compact form: ``power:0.5``, ``step:2,2,1,1``, ``random:7:1.5`` or JSON."""
        text = text.strip()
        if text.startswith("{"):
            return cls.from_json(json.loads(text))
        kind, _, rest = text.partition(":")
        try:
            if kind == "power":
                return cls("power", alpha=float(rest))
            if kind == "step":
                return cls("step", values=tuple(float(v) for v in rest.split(",")))
            if kind in ("random", "randomized"):
                parts = rest.split(":") if rest else []
                seed = int(parts[0]) if parts else 0
                rough = float(parts[1]) if len(parts) > 1 else 1.0
                return cls("random", seed=seed, roughness=rough)
            if kind == "lebesgue":
                return cls("power", alpha=0.0)
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse weight spec {text!r}") from exc
        raise ConfigurationError(f"unknown weight kind in {text!r}")

    def label(self) -> str:
        if self.kind == "power":
            return f"power({self.alpha:g})"
        if self.kind == "step":
            return "step(" + ",".join(f"{v:g}" for v in self.values) + ")"
        return f"random({self.seed},{self.roughness:g})"


def power_cell_averages(grid: Grid, alpha: float) -> np.ndarray:
    """Exact cell averages of ``x_1^alpha``."""
    if alpha <= -1:
        raise ConfigurationError("power weight x^alpha needs alpha > -1 (integrability)")
    n = 2**grid.L
    a = np.arange(n) / n
    b = np.arange(1, n + 1) / n
    if alpha == 0:
        avg = np.ones(n)
    else:
        avg = (b ** (alpha + 1) - a ** (alpha + 1)) / ((alpha + 1) * (b - a))
    if grid.d == 1:
        return avg
    return grid.from_array(np.repeat(avg[:, None], n, axis=1))


def generate_weight(spec: WeightSpec, grid: Grid) -> Weight:
    if spec.kind == "power":
        return Weight(grid, power_cell_averages(grid, spec.alpha))
    if spec.kind == "step":
        vals = np.asarray(spec.values, dtype=float)
        # a coarse step pattern is repeated down to the finest cells
        for k in range(grid.L + 1):
            if vals.size == grid.n_at(k):
                return Weight(grid, grid.expand(vals, k))
        raise ConfigurationError(
            f"step weight needs 2^(d k) values for some k <= L, got {vals.size}"
        )
    if spec.kind == "random":
        rng = np.random.default_rng(spec.seed)
        logw = np.zeros(grid.n_cells)
        for k in range(grid.L + 1):
            logw += grid.expand(rng.uniform(-1, 1, grid.n_at(k)), k)
        logw *= spec.roughness / math.sqrt(grid.L + 1)
        return Weight(grid, np.exp(logw))
    raise ConfigurationError(f"unknown weight kind {spec.kind!r}")


def random_function(grid: Grid, rng, kind: str = "mixed") -> GridFunction:
    """Random test input: ``gaussian``, ``sign``, ``martingale`` or ``mixed``."""
    if kind == "mixed":
        kind = ("gaussian", "sign", "martingale")[int(rng.integers(3))]
    if kind == "gaussian":
        vals = rng.standard_normal(grid.n_cells)
    elif kind == "sign":
        vals = rng.choice([-1.0, 1.0], grid.n_cells)
    elif kind == "martingale":
        vals = np.zeros(grid.n_cells)
        for k in range(grid.L + 1):
            vals += grid.expand(rng.standard_normal(grid.n_at(k)), k)
    else:
        raise ConfigurationError(f"unknown function kind {kind!r}")
    return GridFunction(grid, vals)


def nested_family(grid: Grid, corner: tuple[int, ...] | None = None) -> SparseFamily:
    """Cubes ``[0, 2^-k)^d`` (or shrinking at another corner), ``k = 1..L``."""
    corner = (0,) * grid.d if corner is None else tuple(corner)
    gens = []
    for k in range(1, grid.L + 1):
        idx = tuple(c * (2**k - 1) for c in corner)
        gens.append((Cube(k, idx),))
    return SparseFamily(grid.root, tuple(gens))


# -- norm estimation ---------------------------------------------------------


def probe_functions(grid: Grid, count: int, seed: int) -> list[GridFunction]:
    """Nonnegative probes: constants, corner indicators, random cubes, Haar packets, noise."""
    rng = np.random.default_rng(seed)
    probes = [GridFunction(grid, np.ones(grid.n_cells))]
    for k in range(1, grid.L + 1):
        v = np.zeros(grid.n_cells)
        lo, hi = grid.cell_range(Cube(k, (0,) * grid.d))
        v[lo:hi] = 1
        probes.append(GridFunction(grid, v))
    for _ in range(count):
        k = int(rng.integers(0, grid.L + 1))
        code = int(rng.integers(grid.n_at(k)))
        lo, hi = grid.cell_range(grid.cube(k, code))
        choice = rng.integers(3)
        v = np.zeros(grid.n_cells)
        if choice == 0:
            v[lo:hi] = 1
        elif choice == 1:
            half = lo + (hi - lo) // 2
            v[lo:half] = 1
            v[half:hi] = rng.uniform(0, 1)
        else:
            v = rng.exponential(size=grid.n_cells)
        probes.append(GridFunction(grid, v))
    return probes


def power_maximizer(S: HaarShift, w: Weight, sigma: Weight, p: float, iters: int = 100,
                    start: GridFunction | None = None) -> GridFunction:
    """Nonlinear power iteration for ``max ||S(f sigma)||_{L^p(w)} / ||f||_{L^p(sigma)}``.

    Each step maps ``f`` to ``|S*(w |S(f sigma)|^(p-1))|^(p'-1)``; for
    positive shifts this is monotone and converges to a maximiser.
    """
    pp = conjugate(p)
    grid = S.grid
    f = np.ones(grid.n_cells) if start is None else np.abs(start.values)
    for _ in range(iters):
        u = apply(S, GridFunction(grid, f * sigma.values)).values
        g = np.abs(u) ** (p - 1)
        v = np.abs(adjoint_apply(S, GridFunction(grid, g * w.values)).values)
        if not v.any():
            break
        f = v ** (pp - 1)
        f /= lp_norm(GridFunction(grid, f), sigma, p)
    return GridFunction(grid, f)


def two_weight_ratio(S: HaarShift, f: GridFunction, w: Weight, sigma: Weight, p: float,
                     maximal: bool = True) -> float:
    fs = f * sigma
    out = maximal_truncation(S, fs) if maximal else apply(S, fs)
    return lp_norm(out, w, p) / lp_norm(f, sigma, p)


def norm_estimate(S: HaarShift, w: Weight, sigma: Weight, p: float, probes, iters: int = 100,
                  maximal: bool = True) -> tuple[float, GridFunction]:
    """Largest probe ratio, including the power-iteration maximiser."""
    if not S.n_terms:
        return 0.0, probes[0]
    cands = list(probes) + [power_maximizer(S, w, sigma, p, iters)]
    best, arg = -1.0, None
    for f in cands:
        if not np.any(f.values):
            continue
        r = two_weight_ratio(S, f, w, sigma, p, maximal)
        if r > best:
            best, arg = r, f
    return best, arg


def unweighted_norm_estimate(S: HaarShift, p: float, probes, iters: int = 100) -> float:
    one = lebesgue(S.grid)
    return norm_estimate(S, one, one, p, probes, iters, maximal=False)[0]


# -- configuration -----------------------------------------------------------


@dataclass
class WeightPair:
    id: str
    w: WeightSpec
    sigma: WeightSpec | None = None  # None: single-weight mode, sigma = w^(1-p')


@dataclass
class ShiftSource:
    """How to build the shifts of one sweep entry.

    ``kind``: ``positive`` (S^(i) over ``offsets``), ``random``, ``martingale``
    or ``json``.  Families for ``positive``: ``nested``, ``lerner`` (from a
    random input or the log of the weight) or ``explicit``.
    """

    id: str
    kind: str = "positive"
    offsets: tuple[int, ...] = (1,)
    family: dict = field(default_factory=lambda: {"source": "nested"})
    complexity: tuple[int, int] = (1, 1)
    seed: int = 0
    shift: dict | None = None


@dataclass
class ExperimentConfig:
    d: int
    L: int
    p: tuple[float, ...]
    weights: list[WeightPair]
    shifts: list[ShiftSource]
    probe_count: int = 8
    probe_seed: int = 0
    power_iterations: int = 100
    experiments: tuple[str, ...] = ("main",)
    testing: bool = True
    decay: bool = True
    output: str | None = None

    @property
    def grid(self) -> Grid:
        return Grid(self.d, self.L)

    @classmethod
    def from_json(cls, doc) -> ExperimentConfig:
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        try:
            grid = doc["grid"]
            weights = []
            for j, wdoc in enumerate(doc.get("weights", [{"kind": "lebesgue"}])):
                if "w" in wdoc:
                    w = WeightSpec.from_json(wdoc["w"])
                    s = WeightSpec.from_json(wdoc["sigma"]) if "sigma" in wdoc else None
                else:
                    w, s = WeightSpec.from_json(wdoc), None
                weights.append(WeightPair(str(wdoc.get("id", w.label())), w, s))
            shifts = []
            for j, sdoc in enumerate(doc.get("shifts", [])):
                offs = sdoc.get("i", sdoc.get("offsets", 1))
                offs = tuple(offs) if isinstance(offs, list) else (int(offs),)
                shifts.append(ShiftSource(
                    id=str(sdoc.get("id", f"shift{j}")),
                    kind=sdoc.get("kind", "positive"),
                    offsets=tuple(int(i) for i in offs),
                    family=sdoc.get("family", {"source": "nested"}),
                    complexity=tuple(sdoc.get("complexity", (1, 1))),
                    seed=int(sdoc.get("seed", 0)),
                    shift=sdoc.get("shift"),
                ))
            probes = doc.get("probes", {})
            p = doc.get("p", [2.0])
            cfg = cls(
                d=int(grid["d"]), L=int(grid["L"]),
                p=tuple(float(x) for x in (p if isinstance(p, list) else [p])),
                weights=weights, shifts=shifts,
                probe_count=int(probes.get("count", 8)),
                probe_seed=int(probes.get("seed", 0)),
                power_iterations=int(probes.get("power_iterations", 100)),
                experiments=tuple(doc.get("experiments", ["main"])),
                testing=bool(doc.get("testing", True)),
                decay=bool(doc.get("decay", True)),
                output=doc.get("output"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid experiment config: {exc}") from exc
        cfg.grid  # validates d, L
        for p in cfg.p:
            conjugate(p)
        if not cfg.shifts:
            raise ConfigurationError("experiment config lists no shifts")
        return cfg


@dataclass
class BuiltShift:
    id: str
    i: int | None
    shift: HaarShift
    domC: float | None = None


def _family(grid: Grid, fam: dict, w: Weight | None, seed: int):
    """Sparse family plus the domination constant of its generating input."""
    source = fam.get("source", "nested")
    if source == "nested":
        return nested_family(grid, fam.get("corner")), None
    if source == "explicit":
        cubes = [Cube.from_json(c) for c in fam["cubes"]]
        return SparseFamily(grid.root, (tuple(cubes),)), None
    if source == "lerner":
        inp = fam.get("input", "random")
        if inp == "weight-log":
            if w is None:
                raise ConfigurationError("lerner family from weight-log needs a weight")
            f = GridFunction(grid, np.log(w.values))
        else:
            rng = np.random.default_rng(fam.get("seed", seed))
            f = random_function(grid, rng, fam.get("kind", "mixed"))
        spf = sparse_decomposition(f)
        return spf, domination_constant(f, fam=spf)
    raise ConfigurationError(f"unknown family source {source!r}")


def build_shifts(src: ShiftSource, grid: Grid, w: Weight | None = None) -> list[BuiltShift]:
    if src.kind == "positive":
        fam, domc = _family(grid, src.family, w, src.seed)
        out = []
        for i in src.offsets:
            spec = PositiveShiftSpec.from_family(fam, i).eligible()
            out.append(BuiltShift(src.id, i, build_positive_shift(grid, spec), domc))
        return out
    if src.kind == "random":
        m, n = src.complexity
        S = normalize_unit(random_shift(grid, m, n, np.random.default_rng(src.seed)))
        return [BuiltShift(src.id, None, S)]
    if src.kind == "martingale":
        return [BuiltShift(src.id, None, martingale_transform(grid))]
    if src.kind == "json":
        return [BuiltShift(src.id, None, shift_from_json(src.shift, grid))]
    raise ConfigurationError(f"unknown shift kind {src.kind!r}")


# -- records -----------------------------------------------------------------


@dataclass
class ResultRecord:
    weight_id: str
    p: float
    shift_id: str
    i: int | None
    ap: float | None = None
    ainfty_w: float | None = None
    ainfty_sigma: float | None = None
    Sp: float | None = None
    SpStar: float | None = None
    R: float | None = None
    rho: float | None = None
    domC: float | None = None
    decay_c: float | None = None

    def measured(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k in CSV_COLUMNS[4:]}


def weights_for(pair: WeightPair, grid: Grid, p: float) -> tuple[Weight, Weight]:
    w = generate_weight(pair.w, grid)
    sigma = dual_weight(w, p) if pair.sigma is None else generate_weight(pair.sigma, grid)
    return w, sigma


def main_bound(ap: float, aw: float, asig: float, p: float) -> float:
    """``[w,sigma]^(1/p) ([w]_Ainf^(1/p') + [sigma]_Ainf^(1/p))``."""
    pp = conjugate(p)
    return ap ** (1 / p) * (aw ** (1 / pp) + asig ** (1 / p))


def evaluate(built: BuiltShift, pair: WeightPair, w: Weight, sigma: Weight, p: float,
             cfg: ExperimentConfig, probes) -> ResultRecord:
    S = built.shift
    ap = ap_two_weight(w, sigma, p)[0]
    aw, asig = ainfty(w), ainfty(sigma)
    rec = ResultRecord(pair.id, p, built.id, built.i, ap, aw, asig, domC=built.domC)
    norm, _ = norm_estimate(S, w, sigma, p, probes, cfg.power_iterations, maximal=True)
    rec.R = norm / main_bound(ap, aw, asig, p)
    rec.rho = unweighted_norm_estimate(S, p, probes, cfg.power_iterations)
    if cfg.testing:
        rec.Sp = shift_testing_constant(S, w, sigma, p, "forward")[0]
        rec.SpStar = shift_testing_constant(S, w, sigma, p, "adjoint")[0]
    if cfg.decay and S.n_terms:
        _, decays = layer_analysis(S, w, sigma, p)
        if decays:
            rec.decay_c = worst_decay(decays).rate
    return rec


def run_main_inequality(cfg: ExperimentConfig) -> list[ResultRecord]:
    """Main-inequality ratio ``R`` for every (weight, p, shift) in config order."""
    grid = cfg.grid
    probes = probe_functions(grid, cfg.probe_count, cfg.probe_seed)
    records = []
    for pair in cfg.weights:
        for p in cfg.p:
            w, sigma = weights_for(pair, grid, p)
            for src in cfg.shifts:
                for built in build_shifts(src, grid, w):
                    records.append(evaluate(built, pair, w, sigma, p, cfg, probes))
                    log.info("main %s p=%g %s i=%s R=%.4g", pair.id, p, built.id, built.i,
                             records[-1].R)
    return records


def run_prop4(cfg: ExperimentConfig) -> list[ResultRecord]:
    """Unweighted ``L^p`` norm estimates ``rho(i)`` of the positive shifts."""
    grid = cfg.grid
    probes = probe_functions(grid, cfg.probe_count, cfg.probe_seed)
    records = []
    for p in cfg.p:
        for src in cfg.shifts:
            for built in build_shifts(src, grid):
                rho = unweighted_norm_estimate(built.shift, p, probes, cfg.power_iterations)
                records.append(ResultRecord("lebesgue", p, built.id, built.i, ap=1.0,
                                            ainfty_w=1.0, ainfty_sigma=1.0, rho=rho,
                                            domC=built.domC))
    return records


def growth_fit(offsets, rhos) -> tuple[float, float]:
    """Least-squares slope of ``rho`` vs ``i`` and of ``log rho`` vs ``log i``."""
    i = np.asarray(offsets, dtype=float)
    r = np.asarray(rhos, dtype=float)
    slope = float(np.polyfit(i, r, 1)[0])
    exponent = float(np.polyfit(np.log(i), np.log(r), 1)[0])
    return slope, exponent


def run_config(cfg: ExperimentConfig) -> list[ResultRecord]:
    records = []
    for exp in cfg.experiments:
        if exp == "main":
            records += run_main_inequality(cfg)
        elif exp == "prop4":
            records += run_prop4(cfg)
        else:
            raise ConfigurationError(f"unknown experiment {exp!r}")
    return records


def uniform_boundedness(records, threshold: float = 10.0, factor: float = 2.0):
    """``max R <= factor * min R`` among records with ``ap >= threshold``.

    Returns ``(ok, max R, min R, count)``; vacuous with fewer than 2 points.
    """
    rs = [r.R for r in records if r.ap is not None and r.ap >= threshold and r.R is not None]
    if len(rs) < 2:
        return True, max(rs, default=0.0), min(rs, default=0.0), len(rs)
    return max(rs) <= factor * min(rs), max(rs), min(rs), len(rs)


# -- emission ----------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def records_to_json(records) -> str:
    return json.dumps([{c: getattr(r, c) for c in CSV_COLUMNS} for r in records], indent=2) + "\n"


def records_from_csv(text: str) -> list[ResultRecord]:
    types = {f.name: f for f in fields(ResultRecord)}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        vals = {}
        for c in CSV_COLUMNS:
            raw = row[c]
            if c in ("weight_id", "shift_id"):
                vals[c] = raw
            elif raw == "":
                vals[c] = None
            elif c == "i":
                vals[c] = int(raw)
            else:
                vals[c] = float(raw)
        out.append(ResultRecord(**{k: vals[k] for k in types}))
    return out


def records_from_json(text: str) -> list[ResultRecord]:
    return [ResultRecord(**row) for row in json.loads(text)]


def emit(records, fmt: str, path) -> Path:
    """Write records as ``csv`` or ``json``; output is deterministic."""
    records = list(records)
    if not records:
        raise ConfigurationError("no records to emit")
    path = Path(path)
    text = records_to_csv(records) if fmt == "csv" else records_to_json(records) if fmt == "json" else None
    if text is None:
        raise ConfigurationError(f"unknown format {fmt!r}")
    path.write_text(text)
    return path
