"""Synthetic AoD-AoA power maps from a geometric multipath channel.

The TX is a half-wavelength ULA steered electronically to each grid
angle. The RX array is rotated mechanically to each grid angle with its
beam at broadside, so a path at AoA ``theta`` is seen at ``theta - psi``.
Both arrays carry a 3GPP-style directional element pattern, which
removes the front/back ambiguity a bare ULA has over 360 degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import BeamGrid, PowerMap, wrap_deg

ELEMENT_BEAMWIDTH_DEG = 65.0
ELEMENT_MAX_ATTEN_DB = 30.0


@dataclass(frozen=True)
class PathSpec:
    gain_db: float
    aod_deg: float
    aoa_deg: float
    phase_rad: float = 0.0
    aod_spread_deg: float = 0.0
    aoa_spread_deg: float = 0.0

    def __post_init__(self):
        vals = (self.gain_db, self.aod_deg, self.aoa_deg, self.phase_rad, self.aod_spread_deg, self.aoa_spread_deg)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("path parameters must be finite")
        if not -90.0 <= self.aod_deg <= 90.0:
            raise ValueError(f"aod_deg {self.aod_deg} outside [-90, 90]")


@dataclass(frozen=True)
class SynthSpec:
    paths: tuple[PathSpec, ...]
    tx_antennas: int = 16
    rx_antennas: int = 16
    noise_floor_db: float = -40.0
    dither_db: float = 0.5
    seed: int = 0
    rays_per_path: int = 20
    phase_error_deg: float = 0.0
    gain_error_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if self.rays_per_path < 1:
            raise ValueError("rays_per_path must be >= 1")
        if self.tx_antennas < 1 or self.rx_antennas < 1:
            raise ValueError("antenna counts must be >= 1")
        if not self.paths:
            raise ValueError("at least one path is required")
        if self.dither_db < 0:
            raise ValueError("dither_db must be >= 0")


def steering_vector(n_antennas: int, angle_deg: float) -> np.ndarray:
    """Unit-norm half-wavelength ULA response ``exp(j pi m sin theta) / sqrt(n)``."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    m = np.arange(n_antennas)
    return np.exp(1j * np.pi * m * math.sin(math.radians(angle_deg))) / math.sqrt(n_antennas)


def element_gain_db(angle_deg):
    """Power pattern of one element relative to boresight."""
    a = np.asarray(angle_deg, dtype=float)
    return -np.minimum(12.0 * (a / ELEMENT_BEAMWIDTH_DEG) ** 2, ELEMENT_MAX_ATTEN_DB)


def _amp(angle_deg):
    return 10.0 ** (element_gain_db(angle_deg) / 20.0)


def _element_errors(n: int, spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.phase_error_deg == 0 and spec.gain_error_db == 0:
        return np.ones(n)
    phase = np.radians(spec.phase_error_deg) * rng.standard_normal(n)
    gain = 10.0 ** (spec.gain_error_db * rng.standard_normal(n) / 20.0)
    return gain * np.exp(1j * phase)


def _rays(p: PathSpec, n_rays: int, rng: np.random.Generator):
    """Sub-rays of one cluster: the path itself if it has no spread,
    otherwise ``n_rays`` Gaussian-offset rays with random phases and equal
    total power."""
    if p.aod_spread_deg == 0 and p.aoa_spread_deg == 0:
        return [(p.aod_deg, p.aoa_deg, p.phase_rad, 1.0)]
    aod = np.clip(p.aod_deg + p.aod_spread_deg * rng.standard_normal(n_rays), -90.0, 90.0)
    aoa = p.aoa_deg + p.aoa_spread_deg * rng.standard_normal(n_rays)
    phase = rng.uniform(0.0, 2.0 * np.pi, n_rays)
    return [(float(a), float(b), float(c), 1.0 / math.sqrt(n_rays)) for a, b, c in zip(aod, aoa, phase)]


def generate_map(grid: BeamGrid, spec: SynthSpec, location_id: str = "SYN") -> PowerMap:
    """Received power ``|w_j^H H f_i|^2`` in dB for every grid cell.

    The channel carries the ``sqrt(t r)`` array gain, so an aligned 0 dB
    path reads ``10 log10(t r)`` dB before dither.
    """
    t, r = spec.tx_antennas, spec.rx_antennas
    tx = np.asarray(grid.tx_angles_deg)
    rx = np.asarray(grid.rx_angles_deg)
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & (2**64 - 1), 30]))
    tx_err = _element_errors(t, spec, rng)
    rx_err = _element_errors(r, spec, rng)
    # static element errors distort the codebook beams, not the channel
    F = np.stack([steering_vector(t, a) * tx_err for a in tx], axis=1)  # t x n_tx
    w0 = steering_vector(r, 0.0) * rx_err
    field_ = np.zeros((len(tx), len(rx)), dtype=complex)
    for p in spec.paths:
        for aod, aoa, phase, amp in _rays(p, spec.rays_per_path, rng):
            alpha = amp * 10.0 ** (p.gain_db / 20.0) * np.exp(1j * phase)
            tx_resp = _amp(aod) * (steering_vector(t, aod).conj() @ F)  # n_tx
            rel = np.array([wrap_deg(aoa - psi) for psi in rx])
            rx_resp = _amp(rel) * np.array([w0.conj() @ steering_vector(r, a) for a in rel])  # n_rx
            field_ += alpha * np.outer(tx_resp, rx_resp)
    power = (t * r) * np.abs(field_) ** 2
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power)
    db = np.maximum(db, spec.noise_floor_db)
    if spec.dither_db > 0:
        db = db + rng.uniform(-spec.dither_db, spec.dither_db, size=db.shape)
    return PowerMap(location_id, grid, db)


@dataclass(frozen=True)
class CampaignRanges:
    """Randomization ranges for :func:`generate_campaign`."""

    los_aod_deg: tuple[float, float] = (-40.0, 40.0)
    los_gain_db: tuple[float, float] = (-2.0, 2.0)
    reflection_aod_deg: tuple[float, float] = (-60.0, 60.0)
    reflection_rel_gain_db: tuple[float, float] = (-12.0, -3.0)
    n_paths: tuple[int, int] = (1, 4)
    aod_spread_deg: tuple[float, float] = (1.0, 4.0)
    aoa_spread_deg: tuple[float, float] = (4.0, 12.0)
    noise_floor_db: tuple[float, float] = (-25.0, -15.0)
    phase_error_deg: float = 25.0
    gain_error_db: float = 1.0
    dither_db: float = 0.5
    tx_antennas: int = 16
    rx_antennas: int = 16


def campaign_specs(n_locations: int, ranges: CampaignRanges = CampaignRanges(), seed: int = 0) -> list[SynthSpec]:
    if n_locations < 1:
        raise ValueError("n_locations must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 31]))
    specs = []
    for _ in range(n_locations):
        los_gain = rng.uniform(*ranges.los_gain_db)
        paths = [
            PathSpec(
                los_gain,
                rng.uniform(*ranges.los_aod_deg),
                rng.uniform(-180.0, 180.0),
                rng.uniform(0, 2 * np.pi),
                rng.uniform(*ranges.aod_spread_deg),
                rng.uniform(*ranges.aoa_spread_deg),
            )
        ]
        for _ in range(int(rng.integers(ranges.n_paths[0], ranges.n_paths[1] + 1)) - 1):
            paths.append(
                PathSpec(
                    los_gain + rng.uniform(*ranges.reflection_rel_gain_db),
                    rng.uniform(*ranges.reflection_aod_deg),
                    rng.uniform(-180.0, 180.0),
                    rng.uniform(0, 2 * np.pi),
                    rng.uniform(*ranges.aod_spread_deg),
                    rng.uniform(*ranges.aoa_spread_deg),
                )
            )
        specs.append(
            SynthSpec(
                tuple(paths),
                ranges.tx_antennas,
                ranges.rx_antennas,
                noise_floor_db=rng.uniform(*ranges.noise_floor_db),
                dither_db=ranges.dither_db,
                seed=int(rng.integers(0, 2**63 - 1)),
                phase_error_deg=ranges.phase_error_deg,
                gain_error_db=ranges.gain_error_db,
            )
        )
    return specs


def generate_campaign(
    n_locations: int, grid: BeamGrid | None = None, ranges: CampaignRanges = CampaignRanges(), seed: int = 0
) -> list[PowerMap]:
    """``n_locations`` maps named ``SYN01``, ``SYN02``, ... with one dominant
    LoS-like path and up to three weaker reflections each."""
    grid = grid or BeamGrid.default()
    width = max(2, len(str(n_locations)))
    return [
        generate_map(grid, spec, f"SYN{k + 1:0{width}d}")
        for k, spec in enumerate(campaign_specs(n_locations, ranges, seed))
    ]
