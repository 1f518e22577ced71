"""Experiment runner: accuracy, penalty and probe overhead over
(algorithm, location, seed) cells, plus init/iteration sweeps,
convergence curves and the refinement ablation.

Every run is independent and seeded, so results do not depend on worker
count or execution order. Rows and aggregates are always emitted in
sorted order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .align import (
    AlignmentTrace,
    MapOracle,
    RboConfig,
    nominal_refinement_size,
    penalty_curve,
    penalty_db,
    replay_budget,
    run_rbo,
    write_trace_jsonl,
)
from .baselines import RompConfig, exhaustive_sweep, random_probing, romp_align
from .domain import FormatSpec, PowerMap, load_dataset, true_optimum
from .synth import CampaignRanges, generate_campaign

REPORT_VERSION = "beamopt-report v1"
ALGORITHMS = ("rbo", "random", "romp", "exhaustive")
AVERAGING_NOTE = "accuracy_pct is the mean over seeds of the per-seed fraction of locations matched exactly"


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthSource:
    n_locations: int = 43
    seed: int = 7
    ranges: CampaignRanges = CampaignRanges()


@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm and its configuration.

    ``rbo`` reads ``rbo``; ``romp`` reads ``romp``; ``random`` uses
    ``budget`` and the refinement fields of ``rbo``. Seeds are filled in
    per run.
    """

    kind: str
    rbo: RboConfig = RboConfig()
    romp: RompConfig = RompConfig()
    budget: int = 80
    label: str | None = None

    def __post_init__(self):
        if self.kind not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.kind!r}; expected one of {', '.join(ALGORITHMS)}")

    @property
    def name(self) -> str:
        return self.label or self.kind

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "name": self.name}
        if self.kind == "rbo":
            d["config"] = _rbo_dict(self.rbo)
        elif self.kind == "romp":
            d["config"] = asdict(self.romp)
        elif self.kind == "random":
            d["config"] = {"budget": self.budget, "refine_enabled": self.rbo.refine_enabled}
        return d


def _rbo_dict(cfg: RboConfig) -> dict:
    d = asdict(cfg)
    d.pop("seed")
    return d


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: str | Path | SynthSource
    algorithms: tuple[AlgorithmSpec, ...]
    seeds: tuple[int, ...] = tuple(range(10))
    budget_grid: tuple[int, ...] | None = None
    init_iter_grid: tuple[tuple[int, int], ...] | None = None
    format_spec: FormatSpec | None = None
    locations: tuple[str, ...] | None = None
    workers: int = 1
    keep_traces: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.budget_grid is not None:
            object.__setattr__(self, "budget_grid", tuple(sorted({int(b) for b in self.budget_grid})))
        if self.init_iter_grid is not None:
            object.__setattr__(self, "init_iter_grid", tuple((int(a), int(b)) for a, b in self.init_iter_grid))
        if self.locations is not None:
            object.__setattr__(self, "locations", tuple(self.locations))
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError(f"algorithm names must be unique, got {names}")


def load_maps(spec: ExperimentSpec) -> list[PowerMap]:
    """Maps named by the spec's dataset source, in location order."""
    if isinstance(spec.dataset, SynthSource):
        s = spec.dataset
        maps = generate_campaign(s.n_locations, ranges=s.ranges, seed=s.seed)
    else:
        maps = load_dataset(spec.dataset, spec.format_spec)
    if spec.locations is not None:
        by_id = {m.location_id: m for m in maps}
        missing = [loc for loc in spec.locations if loc not in by_id]
        if missing:
            raise KeyError(f"unknown location(s): {', '.join(missing)}")
        maps = [by_id[loc] for loc in spec.locations]
    if not maps:
        raise ValueError("dataset has no locations")
    return sorted(maps, key=lambda m: m.location_id)


def _source_meta(src) -> dict:
    if isinstance(src, SynthSource):
        return {"kind": "synthetic", "n_locations": src.n_locations, "seed": src.seed, "ranges": asdict(src.ranges)}
    return {"kind": "path", "path": str(src)}


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------


def run_algorithm(alg: AlgorithmSpec, pmap: PowerMap, seed: int) -> AlignmentTrace:
    oracle = MapOracle(pmap)
    if alg.kind == "rbo":
        return run_rbo(oracle, replace(alg.rbo, seed=seed))
    if alg.kind == "random":
        r = alg.rbo
        return random_probing(oracle, alg.budget, r.refine_enabled, seed, r.refine_tx_deg, r.refine_rx_deg)
    if alg.kind == "romp":
        return romp_align(oracle, replace(alg.romp, seed=seed))
    return exhaustive_sweep(oracle)


@dataclass(frozen=True)
class RunRow:
    algorithm: str
    location: str
    seed: int
    exact_match: bool = False
    penalty_db: float = math.nan
    probes_used: int = 0
    selected_tx: int = -1
    selected_rx: int = -1
    stopped_early: bool = False
    flags: str = ""
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    @property
    def key(self) -> tuple:
        return (self.algorithm, self.location, self.seed)


ROW_COLUMNS = tuple(RunRow.__dataclass_fields__)


def score(alg_name: str, pmap: PowerMap, seed: int, trace: AlignmentTrace) -> RunRow:
    opt, _ = true_optimum(pmap)
    return RunRow(
        alg_name,
        pmap.location_id,
        seed,
        trace.selected == opt,
        penalty_db(trace, pmap),
        trace.probes_used,
        trace.selected[0],
        trace.selected[1],
        trace.stopped_early,
        ";".join(trace.flags),
    )


def _run_cell(task) -> tuple[RunRow, AlignmentTrace | None]:
    alg, pmap, seed = task
    try:
        trace = run_algorithm(alg, pmap, seed)
    except Exception as exc:  # one bad run must not sink the experiment
        return RunRow(alg.name, pmap.location_id, seed, error=f"{type(exc).__name__}: {exc}"), None
    return score(alg.name, pmap, seed, trace), trace


def _map_tasks(fn, tasks: Sequence, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _std(x) -> float:
    return float(np.std(x)) if len(x) else math.nan


def aggregate(rows: Iterable[RunRow], grid_size: int) -> dict[str, dict]:
    """Per-algorithm aggregates from rows alone. Failed rows are counted
    but excluded from every statistic."""
    by_alg: dict[str, list[RunRow]] = {}
    for r in rows:
        by_alg.setdefault(r.algorithm, []).append(r)
    out = {}
    for name in sorted(by_alg):
        alg_rows = by_alg[name]
        ok = [r for r in alg_rows if not r.failed]
        per_seed: dict[int, list[bool]] = {}
        for r in ok:
            per_seed.setdefault(r.seed, []).append(r.exact_match)
        seed_acc = [100.0 * sum(v) / len(v) for _, v in sorted(per_seed.items())]
        pen = [r.penalty_db for r in ok]
        probes = [r.probes_used for r in ok]
        mean_probes = float(np.mean(probes)) if ok else math.nan
        out[name] = {
            "n_rows": len(alg_rows),
            "n_failed": len(alg_rows) - len(ok),
            "accuracy_pct": float(np.mean(seed_acc)) if ok else math.nan,
            "accuracy_std_pct": _std(seed_acc),
            "mean_penalty_db": float(np.mean(pen)) if ok else math.nan,
            "std_penalty_db": _std(pen),
            "mean_probes": mean_probes,
            "std_probes": _std(probes),
            "overhead_reduction_pct": 100.0 * (1.0 - mean_probes / grid_size) if ok else math.nan,
        }
    return out


@dataclass
class MetricsReport:
    rows: list[RunRow]
    aggregates: dict[str, dict]
    metadata: dict = field(default_factory=dict)
    traces: dict[tuple, AlignmentTrace] = field(default_factory=dict, repr=False)

    def failed(self) -> list[RunRow]:
        return [r for r in self.rows if r.failed]

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "metadata": self.metadata,
            "aggregates": self.aggregates,
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        rows = [RunRow(**{k: (math.nan if v is None and k == "penalty_db" else v) for k, v in r.items()}) for r in d["rows"]]
        return cls(rows, d["aggregates"], d.get("metadata", {}))


def _jsonable(x):
    """NaN is not valid JSON; emit null instead."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def csv_text(columns: Sequence[str], records: Iterable[Sequence]) -> str:
    """CSV with the versioned comment line first."""
    buf = io.StringIO()
    buf.write(f"#{REPORT_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_fmt(v) for v in rec])
    return buf.getvalue()


def read_csv(path: str | Path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 10))
    return v


def rows_csv(report: MetricsReport) -> str:
    return csv_text(ROW_COLUMNS, ([getattr(r, c) for c in ROW_COLUMNS] for r in report.rows))


AGG_COLUMNS = (
    "n_rows",
    "n_failed",
    "accuracy_pct",
    "accuracy_std_pct",
    "mean_penalty_db",
    "std_penalty_db",
    "mean_probes",
    "std_probes",
    "overhead_reduction_pct",
)


def aggregates_csv(report: MetricsReport) -> str:
    return csv_text(("algorithm", *AGG_COLUMNS), ([a, *(v[c] for c in AGG_COLUMNS)] for a, v in report.aggregates.items()))


def trace_filename(key: tuple) -> str:
    alg, loc, seed = key
    return f"{alg}__{loc}__seed{seed}.jsonl"


def write_report(report: MetricsReport, out_dir: str | Path, fmt: str = "json") -> list[Path]:
    """``report.json`` always; ``rows.csv``/``aggregates.csv`` with
    ``fmt='csv'``; one ``traces/*.jsonl`` per kept trace."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json"]
    written[0].write_text(report.to_json())
    if fmt == "csv":
        (out / "rows.csv").write_text(rows_csv(report))
        (out / "aggregates.csv").write_text(aggregates_csv(report))
        written += [out / "rows.csv", out / "aggregates.csv"]
    if report.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for key in sorted(report.traces):
            p = tdir / trace_filename(key)
            write_trace_jsonl(report.traces[key], p, location=key[1], seed=key[2])
            written.append(p)
    return written


def _metadata(spec: ExperimentSpec, maps: Sequence[PowerMap], **extra) -> dict:
    return {
        "dataset": _source_meta(spec.dataset),
        "locations": [m.location_id for m in maps],
        "grid_size": maps[0].grid.size,
        "seeds": list(spec.seeds),
        "seeds_per_location": len(spec.seeds),
        "algorithms": [a.to_dict() for a in spec.algorithms],
        "averaging": AVERAGING_NOTE,
        **extra,
    }


def run_experiment(spec: ExperimentSpec, maps: Sequence[PowerMap] | None = None) -> MetricsReport:
    """Run every (algorithm, location, seed) cell.

    Dataset problems propagate as the loader's errors. A run that raises
    is kept as a row with ``error`` set and left out of aggregates.
    """
    maps = list(maps) if maps is not None else load_maps(spec)
    tasks = [(a, m, s) for a in spec.algorithms for m in maps for s in spec.seeds]
    results = _map_tasks(_run_cell, tasks, spec.workers)
    results.sort(key=lambda rt: rt[0].key)
    rows = [r for r, _ in results]
    traces = {r.key: t for r, t in results if t is not None} if spec.keep_traces else {}
    return MetricsReport(rows, aggregate(rows, maps[0].grid.size), _metadata(spec, maps), traces)


# ---------------------------------------------------------------------------
# (n_init, T) sweep
# ---------------------------------------------------------------------------


def _rbo_config(spec: ExperimentSpec) -> RboConfig:
    for a in spec.algorithms:
        if a.kind == "rbo":
            return a.rbo
    return RboConfig()


def _sweep_task(task):
    """All T values for one (n_init, location, seed), replayed from the
    longest run."""
    cfg, pmap, seed, t_values = task
    cfg = replace(cfg, seed=seed, t_iters=max(t_values))
    out = {}
    try:
        long = run_rbo(MapOracle(pmap), cfg)
        for t in t_values:
            c = replace(cfg, t_iters=t)
            tr = long if t == cfg.t_iters else (
                replay_budget(long, t, MapOracle(pmap), c) if not long.flags else run_rbo(MapOracle(pmap), c)
            )
            out[t] = score("rbo", pmap, seed, tr)
    except Exception as exc:
        for t in t_values:
            out.setdefault(t, RunRow("rbo", pmap.location_id, seed, error=f"{type(exc).__name__}: {exc}"))
    return cfg.n_init, pmap.location_id, seed, out


@dataclass
class HeatmapResult:
    cells: list[dict]  # n_init, t_iters, accuracy_pct, mean_penalty_db, mean_probes, n_failed
    best: tuple[int, int]
    metadata: dict = field(default_factory=dict)

    def accuracy(self, n_init: int, t_iters: int) -> float:
        for c in self.cells:
            if (c["n_init"], c["t_iters"]) == (n_init, t_iters):
                return c["accuracy_pct"]
        raise KeyError((n_init, t_iters))

    def to_csv(self) -> str:
        cols = ("n_init", "t_iters", "accuracy_pct", "mean_penalty_db", "mean_probes", "n_failed", "is_best")
        return csv_text(cols, ([*(c[k] for k in cols[:-1]), (c["n_init"], c["t_iters"]) == self.best] for c in self.cells))


def sweep_init_iters(spec: ExperimentSpec, maps: Sequence[PowerMap] | None = None) -> HeatmapResult:
    """R-BO accuracy for every ``(n_init, T)`` in ``spec.init_iter_grid``.

    The best cell has the highest accuracy; ties go to the fewest mean
    probes, then to the smallest ``(n_init, T)``.
    """
    if not spec.init_iter_grid:
        raise ValueError("init_iter_grid is required for a sweep")
    maps = list(maps) if maps is not None else load_maps(spec)
    base = _rbo_config(spec)
    by_init: dict[int, list[int]] = {}
    for n_init, t in spec.init_iter_grid:
        if n_init < 1 or t < 0 or n_init > maps[0].grid.size:
            raise ValueError(f"invalid sweep cell ({n_init}, {t})")
        by_init.setdefault(n_init, []).append(t)
    tasks = [
        (replace(base, n_init=n), m, s, tuple(sorted(set(ts)))) for n, ts in sorted(by_init.items()) for m in maps for s in spec.seeds
    ]
    rows: dict[tuple[int, int], list[RunRow]] = {}
    for n_init, _, _, out in _map_tasks(_sweep_task, tasks, spec.workers):
        for t, row in out.items():
            rows.setdefault((n_init, t), []).append(row)
    cells = []
    for key in sorted(set(spec.init_iter_grid)):
        agg = aggregate(sorted(rows[key], key=lambda r: r.key), maps[0].grid.size)["rbo"]
        cells.append(
            {
                "n_init": key[0],
                "t_iters": key[1],
                "accuracy_pct": agg["accuracy_pct"],
                "mean_penalty_db": agg["mean_penalty_db"],
                "mean_probes": agg["mean_probes"],
                "n_failed": agg["n_failed"],
            }
        )
    valid = [c for c in cells if not math.isnan(c["accuracy_pct"])] or cells
    best = min(valid, key=lambda c: (-c["accuracy_pct"], c["mean_probes"], c["n_init"], c["t_iters"]))
    meta = _metadata(spec, maps, rbo_config=_rbo_dict(base))
    return HeatmapResult(cells, (best["n_init"], best["t_iters"]), meta)


# ---------------------------------------------------------------------------
# convergence curves and the refinement ablation
# ---------------------------------------------------------------------------


@dataclass
class CurveSet:
    """Mean penalty per (series, budget) with spread and run counts."""

    points: list[dict]  # series, budget, mean_penalty_db, std_penalty_db, mean_probes, n_runs
    metadata: dict = field(default_factory=dict)

    def series(self, name: str) -> dict[int, float]:
        return {p["budget"]: p["mean_penalty_db"] for p in self.points if p["series"] == name}

    def names(self) -> list[str]:
        return sorted({p["series"] for p in self.points})

    def to_csv(self) -> str:
        cols = ("series", "budget", "mean_penalty_db", "std_penalty_db", "mean_probes", "n_runs")
        return csv_text(cols, ([p[c] for c in cols] for p in self.points))


def _curve_points(name: str, per_budget: dict[int, list[tuple[float, int]]]) -> list[dict]:
    pts = []
    for b in sorted(per_budget):
        vals = per_budget[b]
        pen = [v[0] for v in vals]
        pts.append(
            {
                "series": name,
                "budget": b,
                "mean_penalty_db": float(np.mean(pen)) if pen else math.nan,
                "std_penalty_db": _std(pen),
                "mean_probes": float(np.mean([v[1] for v in vals])) if vals else math.nan,
                "n_runs": len(vals),
            }
        )
    return pts


def rbo_iters_for_budget(cfg: RboConfig, grid_size: int, budget: int, refine_enabled: bool, refine_size: int) -> int:
    """BO iterations that make ``n_init + T (+ refinement)`` fill ``budget``."""
    tail = refine_size if refine_enabled else 0
    return max(0, min(budget, grid_size) - cfg.n_init - tail)


def _prefix_task(task):
    alg, pmap, seed, budgets = task
    top = max(budgets)
    if alg.kind == "rbo":
        size = nominal_refinement_size(pmap.grid, alg.rbo.refine_tx_deg, alg.rbo.refine_rx_deg)
        t = rbo_iters_for_budget(alg.rbo, pmap.grid.size, top, alg.rbo.refine_enabled, size)
        alg = replace(alg, rbo=replace(alg.rbo, t_iters=t))
    elif alg.kind == "random":
        alg = replace(alg, budget=top)
    elif alg.kind == "romp":
        alg = replace(alg, romp=replace(alg.romp, budget=max(top, alg.romp.sparsity_k)))
    try:
        tr = run_algorithm(alg, pmap, seed)
    except Exception as exc:
        return alg.name, None, f"{type(exc).__name__}: {exc}"
    curve = penalty_curve(tr, pmap)
    return alg.name, {b: (float(curve[min(b, len(curve)) - 1]), min(b, len(curve))) for b in budgets}, ""


def convergence_curves(spec: ExperimentSpec, maps: Sequence[PowerMap] | None = None) -> CurveSet:
    """Best-so-far penalty after ``n`` probes for every ``n`` in
    ``spec.budget_grid``.

    Each (algorithm, location, seed) is one run sized to the largest
    budget, refinement probes last, so every run's curve is
    nonincreasing.
    """
    if not spec.budget_grid:
        raise ValueError("budget_grid is required for convergence curves")
    if min(spec.budget_grid) < 1:
        raise ValueError("budgets must be >= 1")
    maps = list(maps) if maps is not None else load_maps(spec)
    tasks = [(a, m, s, spec.budget_grid) for a in spec.algorithms for m in maps for s in spec.seeds]
    per: dict[str, dict[int, list]] = {a.name: {b: [] for b in spec.budget_grid} for a in spec.algorithms}
    failures = 0
    for name, vals, err in _map_tasks(_prefix_task, tasks, spec.workers):
        if err:
            failures += 1
            continue
        for b, v in vals.items():
            per[name][b].append(v)
    points = [p for a in spec.algorithms for p in _curve_points(a.name, per[a.name])]
    points.sort(key=lambda p: (p["series"], p["budget"]))
    return CurveSet(points, _metadata(spec, maps, budgets=list(spec.budget_grid), failed_runs=failures))


def _ablation_task(task):
    cfg, pmap, seed, budgets = task
    grid = pmap.grid
    size = nominal_refinement_size(grid, cfg.refine_tx_deg, cfg.refine_rx_deg)
    long_t = max(rbo_iters_for_budget(cfg, grid.size, b, False, size) for b in budgets)
    base = replace(cfg, seed=seed, t_iters=long_t, refine_enabled=False)
    out: dict[str, dict[int, tuple[float, int]]] = {"with_refinement": {}, "without_refinement": {}}
    try:
        long = run_rbo(MapOracle(pmap), base)
        for b in budgets:
            for refine, name in ((True, "with_refinement"), (False, "without_refinement")):
                t = rbo_iters_for_budget(cfg, grid.size, b, refine, size)
                c = replace(base, t_iters=t, refine_enabled=refine)
                tr = replay_budget(long, t, MapOracle(pmap), c) if not long.flags else run_rbo(MapOracle(pmap), c)
                out[name][b] = (penalty_db(tr, pmap), tr.probes_used)
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return out, ""


def refinement_ablation(spec: ExperimentSpec, maps: Sequence[PowerMap] | None = None) -> CurveSet:
    """R-BO penalty with and without the final rescan at matched budgets.

    At budget ``b`` the refined arm runs ``b - n_init - |hood|`` BO
    iterations and then rescans; the plain arm spends all ``b - n_init``
    on BO. Both arms of a (location, seed) replay one long run.
    """
    if not spec.budget_grid:
        raise ValueError("budget_grid is required for the ablation")
    maps = list(maps) if maps is not None else load_maps(spec)
    cfg = _rbo_config(spec)
    tasks = [(cfg, m, s, spec.budget_grid) for m in maps for s in spec.seeds]
    per: dict[str, dict[int, list]] = {n: {b: [] for b in spec.budget_grid} for n in ("with_refinement", "without_refinement")}
    failures = 0
    for out, err in _map_tasks(_ablation_task, tasks, spec.workers):
        if err:
            failures += 1
            continue
        for name, vals in out.items():
            for b, v in vals.items():
                per[name][b].append(v)
    points = [p for name in sorted(per) for p in _curve_points(name, per[name])]
    meta = _metadata(spec, maps, budgets=list(spec.budget_grid), failed_runs=failures, rbo_config=_rbo_dict(cfg))
    return CurveSet(points, meta)
