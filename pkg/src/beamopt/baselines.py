"""Reference beam-alignment strategies under the same probe accounting.

* exhaustive sweep over every cell,
* uniform random probing,
* Regularized Orthogonal Matching Pursuit (ROMP) recovery of the linear
  power map in a 2-D DFT dictionary from random point samples.

Random and ROMP reserve the nominal refinement size out of their budget
and finish with the same one-shot neighborhood rescan R-BO uses.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .align import (
    AlignmentTrace,
    ProbeOracle,
    _seed_seq,
    best_measured,
    make_trace,
    nominal_refinement_size,
    probe_into,
    refinement_neighborhood,
)
from .domain import BeamGrid, ProbePhase


def exhaustive_sweep(oracle: ProbeOracle) -> AlignmentTrace:
    records: list = []
    probe_into(oracle, oracle.grid.pairs(), ProbePhase.INIT, records)
    return make_trace(records, "exhaustive")


def _refine(oracle, records, center, tx_deg, rx_deg):
    probe_into(oracle, refinement_neighborhood(oracle.grid, center, tx_deg, rx_deg), ProbePhase.REFINE, records)


def _sample_budget(grid: BeamGrid, budget: int, refine: bool, tx_deg: float, rx_deg: float) -> int:
    budget = min(int(budget), grid.size)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if refine:
        budget -= nominal_refinement_size(grid, tx_deg, rx_deg)
    return max(budget, 1)


def random_probing(
    oracle: ProbeOracle,
    budget: int,
    refine_enabled: bool = True,
    seed: int = 0,
    refine_tx_deg: float = 10.0,
    refine_rx_deg: float = 10.0,
) -> AlignmentTrace:
    grid = oracle.grid
    n = _sample_budget(grid, budget, refine_enabled, refine_tx_deg, refine_rx_deg)
    rng = np.random.default_rng(_seed_seq(seed, 10))
    cells = rng.choice(grid.size, size=n, replace=False)
    records: list = []
    probe_into(oracle, [grid.unflat(int(k)) for k in cells], ProbePhase.INIT, records)
    if refine_enabled:
        _refine(oracle, records, best_measured(records)[0], refine_tx_deg, refine_rx_deg)
    return make_trace(records, "random")


# ---------------------------------------------------------------------------
# ROMP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RompResult:
    coef: np.ndarray
    support: tuple[int, ...]
    iterations: int
    used_pinv: bool = False


def _comparable_subset(u: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Max-energy run of ``idx`` (sorted by decreasing |u|) whose magnitudes
    are all within a factor 2 of each other."""
    mags = np.abs(u[idx])
    energy = mags**2
    best, best_e = (0, 1), -1.0
    lo = 0
    for hi in range(len(idx)):
        # window [lo, hi]: mags descend, so the pair constraint is mags[lo] <= 2 mags[hi]
        while mags[lo] > 2.0 * mags[hi]:
            lo += 1
        e = energy[lo : hi + 1].sum()
        if e > best_e:
            best, best_e = (lo, hi + 1), e
    return idx[best[0] : best[1]]


def romp(A: np.ndarray, y: np.ndarray, k: int, tol: float = 1e-6, max_iter: int | None = None) -> RompResult:
    """Regularized OMP for ``y ~ A x`` with ``x`` k-sparse.

    Columns of ``A`` should be unit norm. Iterates until the support holds
    ``2k`` atoms or the residual norm drops below ``tol`` (relative to
    ``|y|``).
    """
    A = np.asarray(A)
    y = np.asarray(y)
    m, n = A.shape
    coef = np.zeros(n, dtype=np.result_type(A, y, float))
    y_norm = np.linalg.norm(y)
    if y_norm == 0:
        return RompResult(coef, (), 0)
    support: list[int] = []
    r = y.copy()
    used_pinv = False
    it = 0
    max_iter = max_iter or 2 * k
    while len(support) < 2 * k and np.linalg.norm(r) > tol * y_norm and it < max_iter:
        it += 1
        u = A.conj().T @ r
        u[support] = 0
        nz = np.flatnonzero(np.abs(u) > 1e-12 * y_norm)
        if nz.size == 0:
            break
        J = nz[np.argsort(-np.abs(u[nz]), kind="stable")][:k]
        J0 = _comparable_subset(u, J)
        support.extend(int(j) for j in J0)
        As = A[:, support]
        sol, _, rank, _ = np.linalg.lstsq(As, y, rcond=None)
        if rank < len(support):
            used_pinv = True
            sol = np.linalg.pinv(As) @ y
        r = y - As @ sol
    coef[:] = 0
    if support:
        coef[support] = sol
    return RompResult(coef, tuple(sorted(support)), it, used_pinv)


def dft2d_dictionary(grid: BeamGrid) -> np.ndarray:
    """Unitary 2-D inverse-DFT basis; column ``c`` is a separable complex
    exponential over the row-major vectorized grid."""

    def idft(n):
        k = np.arange(n)
        return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)

    return np.kron(idft(grid.n_tx), idft(grid.n_rx))


def romp_recover(samples, dictionary: np.ndarray, k: int, tol: float = 1e-6) -> RompResult:
    """Recover sparse coefficients from ``(row_index, value)`` samples of
    ``dictionary @ coef``. Sampled rows are column-normalized before ROMP;
    the returned coefficients are in the original dictionary scale."""
    samples = list(samples)
    if len(samples) < k:
        raise ValueError(f"need at least k={k} samples, got {len(samples)}")
    rows = np.array([s[0] for s in samples], dtype=int)
    vals = np.array([s[1] for s in samples])
    A = dictionary[rows]
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    res = romp(A / norms, vals, k, tol)
    return RompResult(res.coef / norms, res.support, res.iterations, res.used_pinv)


@dataclass(frozen=True)
class RompConfig:
    budget: int = 80
    sparsity_k: int = 8
    dictionary: str = "dft2d"  # or "identity"
    refine_enabled: bool = True
    seed: int = 0
    refine_tx_deg: float = 10.0
    refine_rx_deg: float = 10.0

    def __post_init__(self):
        if self.sparsity_k < 1:
            raise ValueError("sparsity_k must be >= 1")
        if self.budget < self.sparsity_k:
            raise ValueError("budget must be >= sparsity_k")
        if self.dictionary not in ("dft2d", "identity"):
            raise ValueError(f"unknown dictionary {self.dictionary!r}")


_DICT_CACHE: dict = {}


def _dictionary(grid: BeamGrid, kind: str) -> np.ndarray:
    key = (grid, kind)
    if key not in _DICT_CACHE:
        _DICT_CACHE[key] = dft2d_dictionary(grid) if kind == "dft2d" else np.eye(grid.size)
    return _DICT_CACHE[key]


def romp_align(oracle: ProbeOracle, cfg: RompConfig = RompConfig()) -> AlignmentTrace:
    grid = oracle.grid
    n = max(_sample_budget(grid, cfg.budget, cfg.refine_enabled, cfg.refine_tx_deg, cfg.refine_rx_deg), cfg.sparsity_k)
    n = min(n, grid.size)
    if not cfg.refine_enabled and n < grid.size:
        n = max(n - 1, 1)  # keep one probe for the reconstruction argmax
    rng = np.random.default_rng(_seed_seq(cfg.seed, 20))
    cells = rng.choice(grid.size, size=n, replace=False)
    records: list = []
    probe_into(oracle, [grid.unflat(int(k)) for k in cells], ProbePhase.INIT, records)
    flags = []
    linear = 10.0 ** (np.array([r.power_db for r in records]) / 10.0)
    Psi = _dictionary(grid, cfg.dictionary)
    center = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = romp_recover(zip(cells, linear), Psi, cfg.sparsity_k)
        if res.used_pinv:
            flags.append("romp_pinv")
        recon = np.real(Psi @ res.coef)
        if np.all(np.isfinite(recon)) and res.support:
            center = grid.unflat(int(np.argmax(recon)))
    except (np.linalg.LinAlgError, ValueError):
        pass
    if center is None:
        flags.append("romp_failed")
        center = best_measured(records)[0]
    if cfg.refine_enabled:
        _refine(oracle, records, center, cfg.refine_tx_deg, cfg.refine_rx_deg)
    elif len(records) < min(cfg.budget, grid.size):
        probe_into(oracle, [center], ProbePhase.REFINE, records)
    return make_trace(records, "romp", flags=flags)
