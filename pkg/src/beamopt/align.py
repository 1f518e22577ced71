"""Refined Bayesian Optimization (R-BO) for beam alignment.

Random initial probes, a GP/EI loop with online hyperparameter refits,
then a single rescan of a fixed neighborhood around the posterior-mean
argmax. The answer is always the best *measured* beam pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Protocol, Sequence

import numpy as np

from .acquisition import AcquisitionParams, expected_improvement
from .domain import BeamGrid, BeamPair, PowerMap, ProbePhase, ProbeRecord, true_optimum, wrap_deg
from .gp import GpFitError, GpHyperparams, featurize_grid, fit, optimize_hyperparams, predict


class ProbeOracle(Protocol):
    """Anything that returns received power for a beam pair."""

    @property
    def grid(self) -> BeamGrid: ...

    @property
    def probe_count(self) -> int: ...

    def probe(self, pair: BeamPair) -> float: ...


class MapOracle:
    """Probe oracle backed by a fixed :class:`PowerMap`."""

    def __init__(self, pmap: PowerMap):
        self.map = pmap
        self._count = 0

    @property
    def grid(self) -> BeamGrid:
        return self.map.grid

    @property
    def probe_count(self) -> int:
        return self._count

    def probe(self, pair: BeamPair) -> float:
        value = self.map[pair]
        self._count += 1
        return value


@dataclass(frozen=True)
class RboConfig:
    n_init: int = 15
    t_iters: int = 50
    acquisition: AcquisitionParams = AcquisitionParams()
    refine_tx_deg: float = 10.0
    refine_rx_deg: float = 10.0
    refine_enabled: bool = True
    seed: int = 0
    hyperopt_restarts: int = 3
    refit_every: int = 1
    initial_hyper: GpHyperparams = GpHyperparams()
    noisy_ei: bool = True

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.t_iters < 0:
            raise ValueError("t_iters must be >= 0")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        if self.hyperopt_restarts < 0:
            raise ValueError("hyperopt_restarts must be >= 0")
        if self.refine_tx_deg < 0 or self.refine_rx_deg < 0:
            raise ValueError("refinement radii must be >= 0")


@dataclass(frozen=True)
class AlignmentTrace:
    """Ordered probe log plus the final selection.

    ``mean_argmax[k]`` is the GP posterior-mean argmax after
    ``n_init + k`` probes (R-BO only); it lets shorter budgets be
    replayed from one long run.
    """

    records: tuple[ProbeRecord, ...]
    selected: BeamPair
    selected_power_db: float
    stopped_early: bool = False
    algorithm: str = "rbo"
    flags: tuple[str, ...] = ()
    mean_argmax: tuple[BeamPair, ...] = ()

    @property
    def probes_used(self) -> int:
        return len(self.records)

    def powers(self) -> np.ndarray:
        return np.array([r.power_db for r in self.records])

    def best_so_far(self) -> np.ndarray:
        """Best measured power after each probe."""
        return np.maximum.accumulate(self.powers())

    def count(self, phase: ProbePhase) -> int:
        return sum(r.phase is phase for r in self.records)


def _seed_seq(seed: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & (2**64 - 1), stream])


def best_measured(records: Sequence[ProbeRecord]) -> tuple[BeamPair, float]:
    """Highest measured power; ties go to the lexicographically smallest pair."""
    if not records:
        raise ValueError("no probes recorded")
    top = max(r.power_db for r in records)
    pair = min(r.pair for r in records if r.power_db == top)
    return BeamPair(*pair), top


def make_trace(records, algorithm, stopped_early=False, flags=(), mean_argmax=()) -> AlignmentTrace:
    pair, power = best_measured(records)
    return AlignmentTrace(tuple(records), pair, power, stopped_early, algorithm, tuple(flags), tuple(mean_argmax))


def sample_init(grid: BeamGrid, n: int, seed: int) -> list[BeamPair]:
    """``n`` distinct cells, uniformly without replacement."""
    if not 1 <= n <= grid.size:
        raise ValueError(f"cannot draw {n} distinct cells from a grid of {grid.size}")
    rng = np.random.default_rng(_seed_seq(seed, 0))
    return [grid.unflat(int(k)) for k in rng.choice(grid.size, size=n, replace=False)]


def refinement_neighborhood(grid: BeamGrid, center: BeamPair, tx_deg: float, rx_deg: float) -> list[BeamPair]:
    """Cells within +-tx_deg / +-rx_deg of ``center``, center included.

    Non-wrapping axes are clamped at the sector edge; wrapping axes
    continue across the seam. Ordered by TX then by signed RX offset.
    """
    grid.check(center)
    tol = 1e-9
    tx0, rx0 = grid.tx_angles_deg[center[0]], grid.rx_angles_deg[center[1]]

    def offsets(angles, a0, radius, wraps):
        out = []
        for k, a in enumerate(angles):
            d = wrap_deg(a - a0) if wraps else a - a0
            if abs(d) <= radius + tol:
                out.append((d, k))
        return [k for _, k in sorted(out)]

    txs = offsets(grid.tx_angles_deg, tx0, tx_deg, grid.tx_wraps)
    rxs = offsets(grid.rx_angles_deg, rx0, rx_deg, grid.rx_wraps)
    return [BeamPair(i, j) for i in txs for j in rxs]


def nominal_refinement_size(grid: BeamGrid, tx_deg: float, rx_deg: float) -> int:
    """Neighborhood size at an interior center (the largest possible)."""
    return max(
        len(refinement_neighborhood(grid, BeamPair(i, j), tx_deg, rx_deg))
        for i in range(grid.n_tx)
        for j in (0, grid.n_rx // 2)
    )


def probe_into(oracle: ProbeOracle, pairs: Iterable[BeamPair], phase: ProbePhase, records: list) -> None:
    for p in pairs:
        records.append(ProbeRecord(len(records) + 1, BeamPair(*p), float(oracle.probe(p)), phase))


def _mean_argmax(grid: BeamGrid, mu: np.ndarray) -> BeamPair:
    return grid.unflat(int(np.argmax(mu)))


def run_rbo(oracle: ProbeOracle, cfg: RboConfig = RboConfig()) -> AlignmentTrace:
    grid = oracle.grid
    feats = featurize_grid(grid)
    records: list[ProbeRecord] = []
    probed = np.zeros(grid.size, dtype=bool)
    flags: list[str] = []
    mean_hist: list[BeamPair] = []
    stopped_early = False

    init = sample_init(grid, min(cfg.n_init, grid.size), cfg.seed)
    probe_into(oracle, init, ProbePhase.INIT, records)
    X_idx = [grid.flat(p) for p in init]
    y = [r.power_db for r in records]
    probed[X_idx] = True

    hyper_rng = np.random.default_rng(_seed_seq(cfg.seed, 1))
    h = cfg.initial_hyper
    model = None
    try:
        h = optimize_hyperparams(feats[X_idx], y, h, cfg.hyperopt_restarts, hyper_rng)
        model = fit(feats[X_idx], y, h)
    except GpFitError:
        flags.append("gp_fit_failed")

    t = 0
    while model is not None and t < cfg.t_iters:
        mu, sd = predict(model, feats, standardized=True, include_noise=cfg.noisy_ei)
        mean_hist.append(_mean_argmax(grid, mu))
        cand = np.flatnonzero(~probed)
        if cand.size == 0:
            break
        f_best = (max(y) - model.y_mean) / model.y_scale
        ei = expected_improvement(mu[cand], sd[cand], f_best, cfg.acquisition.xi)
        k = int(np.argmax(ei))  # candidates ascend, so first max is lexicographic
        if ei[k] < cfg.acquisition.ei_stop_threshold:
            stopped_early = True
            break
        nxt = int(cand[k])
        t += 1
        probe_into(oracle, [grid.unflat(nxt)], ProbePhase.BO, records)
        probed[nxt] = True
        X_idx.append(nxt)
        y.append(records[-1].power_db)
        try:
            if t % cfg.refit_every == 0:
                h = optimize_hyperparams(feats[X_idx], y, h, cfg.hyperopt_restarts, hyper_rng)
            model = fit(feats[X_idx], y, h)
        except GpFitError:
            flags.append("gp_fit_failed")
            model = None
    else:
        if model is not None:
            mean_hist.append(_mean_argmax(grid, predict(model, feats, standardized=True)[0]))

    if model is None and t < cfg.t_iters:
        # surrogate unusable: spend the rest of the BO budget at random
        flags.append("random_fallback")
        rng = np.random.default_rng(_seed_seq(cfg.seed, 2))
        rest = np.flatnonzero(~probed)
        take = rng.permutation(rest)[: cfg.t_iters - t]
        probe_into(oracle, [grid.unflat(int(k)) for k in take], ProbePhase.BO, records)
        probed[take] = True

    if cfg.refine_enabled:
        center = mean_hist[-1] if (mean_hist and "gp_fit_failed" not in flags) else best_measured(records)[0]
        hood = refinement_neighborhood(grid, center, cfg.refine_tx_deg, cfg.refine_rx_deg)
        probe_into(oracle, hood, ProbePhase.REFINE, records)

    return make_trace(records, "rbo", stopped_early, flags, mean_hist)


def replay_budget(trace: AlignmentTrace, t_iters: int, oracle: ProbeOracle, cfg: RboConfig) -> AlignmentTrace:
    """The trace ``run_rbo`` would return with ``t_iters`` BO iterations,
    rebuilt from a longer run on the same oracle and seed.

    A run's first ``n_init + t`` probes and its posterior after them do
    not depend on the iteration budget, so only the refinement is redone.
    """
    if trace.flags:
        raise ValueError("cannot replay a run that fell back from the GP")
    base = [r for r in trace.records if r.phase is not ProbePhase.REFINE]
    n_bo_long = sum(r.phase is ProbePhase.BO for r in base)
    if t_iters > n_bo_long and not trace.stopped_early and len(base) < oracle.grid.size:
        raise ValueError(f"source run has only {n_bo_long} BO iterations, need {t_iters}")
    n_bo = min(t_iters, n_bo_long)
    records = list(base[: cfg.n_init + n_bo])
    stopped = trace.stopped_early and n_bo_long < t_iters
    mean_hist = trace.mean_argmax[: n_bo + 1]
    if cfg.refine_enabled:
        center = mean_hist[n_bo] if len(mean_hist) > n_bo else best_measured(records)[0]
        hood = refinement_neighborhood(oracle.grid, center, cfg.refine_tx_deg, cfg.refine_rx_deg)
        probe_into(oracle, hood, ProbePhase.REFINE, records)
    return make_trace(records, trace.algorithm, stopped, (), mean_hist)


def penalty_db(trace: AlignmentTrace, truth: PowerMap) -> float:
    """Power gap between the exhaustive optimum and the selected pair."""
    _, best = true_optimum(truth)
    return float(best - truth[trace.selected])


def penalty_curve(trace: AlignmentTrace, truth: PowerMap) -> np.ndarray:
    """Penalty of the best-so-far measured pair after each probe."""
    _, best = true_optimum(truth)
    return best - trace.best_so_far()


# ---------------------------------------------------------------------------
# JSON-lines trace export
# ---------------------------------------------------------------------------


def trace_lines(trace: AlignmentTrace, **meta) -> list[str]:
    lines = [
        json.dumps(
            {
                "type": "probe",
                "step": r.step,
                "tx_index": r.pair[0],
                "rx_index": r.pair[1],
                "power_db": r.power_db,
                "phase": r.phase.value,
            }
        )
        for r in trace.records
    ]
    summary = {
        "type": "summary",
        "algorithm": trace.algorithm,
        "selected": list(trace.selected),
        "selected_power_db": trace.selected_power_db,
        "stopped_early": trace.stopped_early,
        "probes_used": trace.probes_used,
        "flags": list(trace.flags),
        **meta,
    }
    lines.append(json.dumps(summary, sort_keys=True))
    return lines


def write_trace_jsonl(trace: AlignmentTrace, dest: str | Path | IO[str], **meta) -> None:
    text = "\n".join(trace_lines(trace, **meta)) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)


def read_trace_jsonl(src: str | Path) -> tuple[AlignmentTrace, dict]:
    records, summary = [], None
    for line in Path(src).read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        if d["type"] == "probe":
            records.append(
                ProbeRecord(d["step"], BeamPair(d["tx_index"], d["rx_index"]), d["power_db"], ProbePhase(d["phase"]))
            )
        elif d["type"] == "summary":
            summary = d
    if summary is None:
        raise ValueError(f"{src}: no summary record")
    trace = AlignmentTrace(
        tuple(records),
        BeamPair(*summary["selected"]),
        summary["selected_power_db"],
        summary["stopped_early"],
        summary["algorithm"],
        tuple(summary["flags"]),
    )
    return trace, summary
