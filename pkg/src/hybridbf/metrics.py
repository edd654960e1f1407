"""
Achievable rates, the sampled SINR proxy and array beam patterns.

Received signals use the conjugate-transpose convention ``h_k^H F s`` and
every stream carries power P/K.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .amm import sample_angle_range
from .array_channel import SystemConfig, channel_matrix, steering_matrix
from .beamformers import AnalogBeamformer, DigitalBeamformer, FullyDigitalBeamformer
from .exceptions import ParameterError

__all__ = [
    "RateReport",
    "BeamPattern",
    "per_user_rates",
    "sum_rate",
    "approx_sinr",
    "beam_pattern",
    "nulling_depth",
]

log = logging.getLogger(__name__)

POWER_WARN_TOL = 1e-6


@dataclass(frozen=True)
class RateReport:
    per_user_rates: np.ndarray
    sum_rate: float


@dataclass(frozen=True)
class BeamPattern:
    angles: np.ndarray
    gains_db: np.ndarray
    user_index: int = 0


def per_user_rates(gains: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """
    Rates in bit/s/Hz from the gain matrix ``gains[k, i] = h_k^H F_:i``.
    """
    g2 = np.abs(np.asarray(gains)) ** 2
    ps = cfg.total_power / g2.shape[1]
    signal = np.diag(g2)
    interference = g2.sum(axis=1) - signal
    return np.log2(1 + ps * signal / (ps * interference + cfg.noise_var))


def _as_matrix(x, default_size):
    if x is None:
        return np.eye(default_size)
    if isinstance(x, (AnalogBeamformer, DigitalBeamformer, FullyDigitalBeamformer)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def sum_rate(channels, f_rf, f_bb, cfg: SystemConfig) -> RateReport:
    """
    Per-user and sum rate of the precoder ``F_RF F_BB``.

    `f_rf` may be ``None`` (fully digital precoder passed as `f_bb`) and
    `f_bb` may be ``None`` (identity digital stage). A total power differing
    from K by more than 1e-6 is logged, not rejected.
    """
    h = channel_matrix(channels)
    k = h.shape[1]
    precoder = _as_matrix(f_rf, h.shape[0]) @ _as_matrix(f_bb, k)
    power = np.linalg.norm(precoder) ** 2
    if abs(power - k) > POWER_WARN_TOL:
        log.warning("precoder power %.9g differs from K=%d", power, k)
    rates = per_user_rates(h.conj().T @ precoder, cfg)
    return RateReport(per_user_rates=rates, sum_rate=float(np.sum(rates)))


def approx_sinr(q: int, f_rf, ranges, cfg: SystemConfig, amm_cfg) -> float:
    """
    SINR of user `q` estimated from samples of the angle ranges only.

    The desired power is the mean of ``|a(phi_{q,m})_{S_q}^H f_q|^2`` and the
    interference the sum over k != q of the means of
    ``|a(phi_{q,m})_{S_k}^H f_k|^2``, both scaled by the per-stream power.
    """
    analog = f_rf if isinstance(f_rf, AnalogBeamformer) else None
    if analog is None:
        raise ParameterError("approx_sinr needs an AnalogBeamformer")
    if len(ranges) != cfg.k_users:
        raise ParameterError("need one angle range per user")
    m = amm_cfg.samples_per_range
    phis = sample_angle_range(ranges[q], m)
    ps = cfg.total_power / cfg.k_users
    powers = []
    for k in range(cfg.k_users):
        a = steering_matrix(phis, cfg.n_s, offset=cfg.subarray(k).start, norm=cfg.n_bs)
        powers.append(np.mean(np.abs(a.conj().T @ analog.subarray_vectors[k]) ** 2))
    interference = sum(p for k, p in enumerate(powers) if k != q)
    return float(ps * powers[q] / (ps * interference + cfg.noise_var))


def beam_pattern(f_q, grid_size: int, cfg: SystemConfig | None = None,
                 user_index: int = 0) -> BeamPattern:
    """
    Peak-normalised pattern ``|a~(phi)^H f_q|^2`` in dB over `grid_size`
    sines evenly spaced on (-1, 1], where ``a~`` is the unit-norm steering
    vector of the subarray itself.
    """
    if int(grid_size) != grid_size or grid_size < 2:
        raise ParameterError("grid_size must be an integer >= 2")
    f = np.asarray(f_q, dtype=complex)
    if cfg is not None and f.size != cfg.n_s:
        raise ParameterError(f"beamformer length {f.size} != n_s={cfg.n_s}")
    angles = -1.0 + 2.0 * np.arange(1, grid_size + 1) / grid_size
    gain = np.abs(steering_matrix(angles, f.size).conj().T @ f) ** 2
    peak = gain.max()
    if peak <= 0:
        raise ParameterError("beamformer radiates no power")
    gains_db = 10 * np.log10(np.maximum(gain / peak, 1e-300))
    return BeamPattern(angles=angles, gains_db=gains_db, user_index=user_index)


def nulling_depth(pattern: BeamPattern, angle_range) -> float:
    """Largest pattern gain (dB) on grid points inside `angle_range`."""
    inside = angle_range.contains(pattern.angles)
    if not np.any(inside):
        raise ParameterError("no pattern grid point falls inside the range; refine the grid")
    return float(pattern.gains_db[inside].max())
