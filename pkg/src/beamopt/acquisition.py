"""Expected Improvement over the discrete set of unprobed beam pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .domain import BeamPair
from .gp import GpModel, predict


@dataclass(frozen=True)
class AcquisitionParams:
    xi: float = 0.05
    ei_stop_threshold: float = 1e-8

    def __post_init__(self):
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        if not self.ei_stop_threshold > 0:
            raise ValueError("ei_stop_threshold must be > 0")


def expected_improvement(mu, sigma, f_best, xi=0.05):
    """EI for maximization; zero wherever ``sigma == 0``.

    Accepts scalars or arrays (broadcast). Inputs must share units; within
    the optimizer they are the GP's standardized target units.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    gap = mu - f_best - xi
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    with np.errstate(over="ignore"):  # tiny sigma sends z to +-inf, which is fine
        z = gap / safe
        ei = np.where(pos, gap * norm.cdf(z) + safe * norm.pdf(z), 0.0)
    # cancellation for very negative z can leave tiny negatives
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def select_next(
    model: GpModel,
    candidates: Sequence[BeamPair],
    features: np.ndarray,
    f_best: float,
    params: AcquisitionParams = AcquisitionParams(),
) -> tuple[BeamPair, float]:
    """EI argmax over ``candidates`` (rows of ``features`` align with them).

    ``f_best`` is in standardized units. Ties go to the lexicographically
    smallest pair.
    """
    if len(candidates) == 0:
        raise ValueError("no candidates left to probe")
    mu, sigma = predict(model, features, standardized=True)
    ei = expected_improvement(mu, sigma, f_best, params.xi)
    return argmax_lex(candidates, ei)


def argmax_lex(candidates: Sequence[BeamPair], scores: np.ndarray) -> tuple[BeamPair, float]:
    scores = np.asarray(scores)
    top = scores.max()
    best = min(c for c, s in zip(candidates, scores) if s == top)
    return BeamPair(*best), float(top)
