"""Shared strategies and independent oracles for the test suite."""

from __future__ import annotations

import math

import numpy as np
from hypothesis import strategies as st

from beamopt.domain import BeamGrid, PowerMap


def small_grid(n_tx: int, n_rx: int) -> BeamGrid:
    """TX sector in 5-degree steps centered on 0; RX covering the full circle."""
    return BeamGrid.from_ranges(-5.0 * (n_tx // 2), 5.0, n_tx, -180.0, 360.0 / n_rx, n_rx)


@st.composite
def grids(draw, max_tx=6, max_rx=8):
    return small_grid(draw(st.integers(1, max_tx)), draw(st.integers(1, max_rx)))


@st.composite
def power_maps(draw, max_tx=6, max_rx=8, min_cells=1):
    """Random maps; integer-valued half the time so exact ties are common."""
    g = draw(grids(max_tx, max_rx).filter(lambda g: g.size >= min_cells))
    if draw(st.booleans()):
        vals = draw(st.lists(st.integers(-5, 5), min_size=g.size, max_size=g.size))
    else:
        vals = draw(
            st.lists(st.floats(-80, 30, allow_nan=False, allow_infinity=False), min_size=g.size, max_size=g.size)
        )
    loc = draw(st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,7}", fullmatch=True))
    return PowerMap(loc, g, np.array(vals, dtype=float).reshape(g.shape))


def random_map(rng: np.random.Generator, grid: BeamGrid, loc="R") -> PowerMap:
    return PowerMap(loc, grid, rng.normal(0.0, 5.0, grid.shape))


# ---------------------------------------------------------------------------
# dense GP oracle: explicit inverse and determinant, no Cholesky
# ---------------------------------------------------------------------------


def oracle_matern(a, b, sf2, ell):
    r = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    s = math.sqrt(5.0) * r / ell
    return sf2 * (1.0 + s + s * s / 3.0) * math.exp(-s)


def oracle_gram(A, B, sf2, ell):
    return np.array([[oracle_matern(a, b, sf2, ell) for b in B] for a in A])


def oracle_standardize(y):
    y = np.asarray(y, dtype=float)
    m = sum(y) / len(y)
    v = sum((t - m) ** 2 for t in y) / len(y)
    s = math.sqrt(v) if v > 1e-24 else 1.0
    return (y - m) / s, m, s


def dense_posterior(X, y, sf2, ell, sn2, Xq):
    """Posterior mean and std in dB via an explicit matrix inverse."""
    ys, m, s = oracle_standardize(y)
    K = oracle_gram(X, X, sf2, ell) + sn2 * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    Kq = oracle_gram(Xq, X, sf2, ell)
    mu = Kq @ Kinv @ ys
    var = sf2 - np.einsum("ij,jk,ik->i", Kq, Kinv, Kq)
    return m + s * mu, s * np.sqrt(np.maximum(var, 0.0))


def dense_lml(X, y, sf2, ell, sn2):
    ys, _, _ = oracle_standardize(y)
    K = oracle_gram(X, X, sf2, ell) + sn2 * np.eye(len(X))
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * ys @ np.linalg.inv(K) @ ys - 0.5 * logdet - 0.5 * len(X) * math.log(2 * math.pi))


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def random_features(rng, n):
    """Sine-cosine features of random angle pairs."""
    tx = rng.uniform(-math.pi / 4, math.pi / 4, n)
    rx = rng.uniform(-math.pi, math.pi, n)
    return np.stack([np.sin(tx), np.cos(tx), np.sin(rx), np.cos(rx)], axis=1)
