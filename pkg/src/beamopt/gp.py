"""Gaussian-process surrogate over beam-pair angle features.

Beam pairs are embedded as ``(sin tx, cos tx, sin rx, cos rx)`` so that the
RX seam at +-180 deg is continuous. The kernel is an isotropic Matern 5/2
plus a white-noise term, fit to standardized dB targets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf, dpotrs
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .domain import BeamGrid, BeamPair, angle_of

MATERN_NU = 2.5
HYPER_BOUNDS = (1e-3, 1e3)
_SQRT5 = math.sqrt(5.0)
_LOG_2PI = math.log(2.0 * math.pi)


class GpFitError(RuntimeError):
    """Kernel matrix could not be factorized even after jitter escalation."""


class HyperoptWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GpHyperparams:
    signal_variance: float = 1.0
    length_scale: float = 0.5
    noise_variance: float = 1e-2

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def matern_nu(self) -> float:
        return MATERN_NU

    def as_log(self) -> np.ndarray:
        return np.log([self.signal_variance, self.length_scale, self.noise_variance])

    @classmethod
    def from_log(cls, v) -> "GpHyperparams":
        lo, hi = np.log(HYPER_BOUNDS)
        s, l, n = np.exp(np.clip(np.asarray(v, dtype=float), lo, hi))
        return cls(float(s), float(l), float(n))


def featurize(grid: BeamGrid, pair: BeamPair) -> np.ndarray:
    tx, rx = np.radians(angle_of(grid, pair))
    return np.array([math.sin(tx), math.cos(tx), math.sin(rx), math.cos(rx)])


def featurize_angles(tx_deg, rx_deg) -> np.ndarray:
    tx = np.radians(np.asarray(tx_deg, dtype=float))
    rx = np.radians(np.asarray(rx_deg, dtype=float))
    return np.stack([np.sin(tx), np.cos(tx), np.sin(rx), np.cos(rx)], axis=-1)


def featurize_grid(grid: BeamGrid) -> np.ndarray:
    """Features of every cell, row-major, shape ``(grid.size, 4)``."""
    tx, rx = np.meshgrid(grid.tx_angles_deg, grid.rx_angles_deg, indexing="ij")
    return featurize_angles(tx.ravel(), rx.ravel())


def matern52(r, length_scale: float, signal_variance: float):
    s = _SQRT5 * np.asarray(r, dtype=float) / length_scale
    return signal_variance * (1.0 + s + s * s / 3.0) * np.exp(-s)


def matern_kernel(a, b, h: GpHyperparams) -> float:
    r = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    return float(matern52(r, h.length_scale, h.signal_variance))


def kernel_matrix(A, B, h: GpHyperparams) -> np.ndarray:
    return matern52(cdist(np.atleast_2d(A), np.atleast_2d(B)), h.length_scale, h.signal_variance)


def standardize(y_db) -> tuple[np.ndarray, float, float]:
    y = np.asarray(y_db, dtype=float)
    mean = float(y.mean())
    scale = float(y.std())
    if not scale > 1e-12:
        scale = 1.0
    return (y - mean) / scale, mean, scale


def _factor(A: np.ndarray, signal_variance: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A``, escalating diagonal jitter from 1e-10
    by decades up to 1e-6 * signal_variance."""
    L, info = dpotrf(A, lower=1, clean=1)
    if info == 0:
        return L, 0.0
    cap = 1e-6 * signal_variance
    jitter = 1e-10
    eye = np.eye(A.shape[0])
    while jitter <= cap * (1 + 1e-12):
        L, info = dpotrf(A + jitter * eye, lower=1, clean=1)
        if info == 0:
            return L, jitter
        jitter *= 10.0
    raise GpFitError(f"kernel matrix not positive definite (jitter up to {cap:g})")


@dataclass(frozen=True, eq=False)
class GpModel:
    hyper: GpHyperparams
    X: np.ndarray
    y_std: np.ndarray
    y_mean: float
    y_scale: float
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return len(self.y_std)

    def to_dict(self, pairs=None) -> dict:
        """Debug dump: hyperparameters and training data."""
        d = {
            "hyper": asdict(self.hyper),
            "matern_nu": MATERN_NU,
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "y_db": (self.y_mean + self.y_scale * self.y_std).tolist(),
        }
        if pairs is not None:
            d["pairs"] = [list(map(int, p)) for p in pairs]
        return d


def _fit_standardized(X, y_std, mean, scale, h: GpHyperparams, D=None) -> GpModel:
    if D is None:
        D = cdist(X, X)
    A = matern52(D, h.length_scale, h.signal_variance)
    A[np.diag_indices_from(A)] += h.noise_variance
    L, jitter = _factor(A, h.signal_variance)
    alpha, _ = dpotrs(L, y_std, lower=1)
    return GpModel(h, X, y_std, mean, scale, L, alpha, jitter)


def fit(X, y_db, h: GpHyperparams) -> GpModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y_db, dtype=float).ravel()
    if len(X) != len(y) or len(y) == 0:
        raise ValueError(f"need matching non-empty X and y, got {len(X)} and {len(y)}")
    y_std, mean, scale = standardize(y)
    return _fit_standardized(X, y_std, mean, scale, h)


def predict(
    m: GpModel, Xq, standardized: bool = False, include_noise: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation of the latent field.

    Returned in dB unless ``standardized`` is set, in which case the values
    are in the model's internal zero-mean/unit-variance target units. With
    ``include_noise`` the white-noise variance is added to the variance,
    giving the predictive spread of a new measurement.
    """
    Kq = kernel_matrix(Xq, m.X, m.hyper)
    mu = Kq @ m.alpha
    v = solve_triangular(m.chol, Kq.T, lower=True, check_finite=False)
    var = m.hyper.signal_variance - np.einsum("ij,ij->j", v, v)
    if include_noise:
        var = var + m.hyper.noise_variance
    sigma = np.sqrt(np.maximum(var, 0.0))
    if standardized:
        return mu, sigma
    return m.y_mean + m.y_scale * mu, m.y_scale * sigma


def log_marginal_likelihood(m: GpModel) -> float:
    return -float(0.5 * m.y_std @ m.alpha + np.log(np.diag(m.chol)).sum() + 0.5 * m.n * _LOG_2PI)


def optimize_hyperparams(
    X,
    y_db,
    h0: GpHyperparams,
    restarts: int = 3,
    rng: np.random.Generator | int | None = None,
    max_evals: int = 100,
) -> GpHyperparams:
    """Maximize the log marginal likelihood over log-hyperparameters.

    The signal variance is profiled out in closed form, so Nelder-Mead
    searches only (log length scale, log noise-to-signal ratio). It is
    started from ``h0`` and from ``restarts`` points drawn log-uniformly
    within :data:`HYPER_BOUNDS`. The result never has lower likelihood
    than ``h0``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y_db, dtype=float).ravel()
    if len(y) < 2:
        return h0
    rng = np.random.default_rng(rng)
    y_std, _, _ = standardize(y)
    D = cdist(X, X)
    S0 = _SQRT5 * D
    n = len(y)
    diag = np.diag_indices(n)
    lo, hi = HYPER_BOUNDS
    const = 0.5 * n * _LOG_2PI

    def full(sf2, ell, sn2):
        A = matern52(D, ell, sf2)
        A[diag] += sn2
        try:
            L, _ = _factor(A, sf2)
        except GpFitError:
            return np.inf
        alpha, _ = dpotrs(L, y_std, lower=1)
        return 0.5 * y_std @ alpha + np.log(np.diag(L)).sum() + const

    def profile(theta):
        """Best signal variance for (length scale, noise ratio) and the
        resulting negative LML."""
        ell, ratio = math.exp(theta[0]), math.exp(theta[1])
        s = S0 * (1.0 / ell)
        R = np.exp(-s)
        R *= 1.0 + s * (1.0 + s / 3.0)
        R[diag] += ratio
        L, info = dpotrf(R, lower=1, clean=0, overwrite_a=1)
        if info != 0:
            return None, np.inf
        a, _ = dpotrs(L, y_std, lower=1)
        q = float(y_std @ a)
        sf2 = min(max(q / n, lo), hi)
        sn2 = ratio * sf2
        if not lo <= sn2 <= hi:
            sn2 = min(max(sn2, lo), hi)
            return (sf2, ell, sn2), full(sf2, ell, sn2)
        return (sf2, ell, sn2), 0.5 * q / sf2 + 0.5 * n * math.log(sf2) + np.log(L.diagonal()).sum() + const

    def objective(theta):
        val = profile(theta)[1]
        return val if np.isfinite(val) else 1e25

    log_lo, log_hi = math.log(lo), math.log(hi)
    bounds = [(log_lo, log_hi), (log_lo - log_hi, log_hi - log_lo)]
    x0 = np.clip([math.log(h0.length_scale), math.log(h0.noise_variance / h0.signal_variance)], *zip(*bounds))
    starts = [x0]
    for _ in range(restarts):
        sf2, ell, sn2 = np.exp(rng.uniform(log_lo, log_hi, size=3))
        starts.append(np.clip([math.log(ell), math.log(sn2 / sf2)], *zip(*bounds)))

    f0 = full(h0.signal_variance, h0.length_scale, h0.noise_variance)
    best, best_f = None, f0
    for s in starts:
        res = minimize(
            objective,
            s,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxfev": max_evals, "xatol": 1e-2, "fatol": 1e-3},
        )
        params, val = profile(res.x)
        if params is not None and np.isfinite(val) and val < best_f:
            best, best_f = params, val
    if best is None:
        if not np.isfinite(f0):
            warnings.warn("hyperparameter optimization failed on every start", HyperoptWarning)
        return h0
    h = GpHyperparams(*map(float, best))
    if not full(h.signal_variance, h.length_scale, h.noise_variance) <= f0:
        return h0
    return h
