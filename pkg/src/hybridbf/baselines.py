"""
Reference schemes: fully digital WMMSE and two-stage sweep + zero-forcing (TSH).
"""

from __future__ import annotations

import logging

import numpy as np

from .amm import Codebook, beam_sweep
from .array_channel import SystemConfig, channel_matrix
from .beamformers import AnalogBeamformer, DigitalBeamformer, FullyDigitalBeamformer
from .exceptions import ParameterError
from .pwmmse import DERIVED_OPTIMAL, effective_channels, solve_wmmse

__all__ = ["run_fully_digital", "run_tsh", "zero_forcing"]

log = logging.getLogger(__name__)

_COND_LIMIT = 1e12
_LOADING = 1e-8


def run_fully_digital(channels, cfg: SystemConfig, max_iters: int = 20,
                      rel_tol: float = 1e-4, variant: str = DERIVED_OPTIMAL):
    """
    WMMSE precoding with no analog stage.

    Every WMMSE iterate lies in the span of the user channels, so the
    problem is solved exactly in K dimensions: with ``H = Q R`` the
    coordinates ``R[:, k] = Q^H h_k`` act as effective channels and the
    precoder is ``Q F_K``. Returns ``(FullyDigitalBeamformer, WmmseState)``.
    """
    h = channel_matrix(channels)
    if h.shape != (cfg.n_bs, cfg.k_users):
        raise ParameterError(f"expected {cfg.k_users} channels of length {cfg.n_bs}")
    q, r = np.linalg.qr(h)
    f_k, state = solve_wmmse(r, cfg, max_iters, rel_tol, variant)
    return FullyDigitalBeamformer(q @ f_k), state


def zero_forcing(eff: np.ndarray) -> np.ndarray:
    """
    Column-normalised zero-forcing precoder for effective channels in the
    columns of `eff`. Ill-conditioned channels get diagonal loading of
    ``1e-8 * trace / K``.
    """
    k = eff.shape[1]
    h_mat = eff.conj().T
    if np.linalg.cond(h_mat) < _COND_LIMIT:
        f = np.linalg.inv(h_mat)
    else:
        gram = h_mat @ h_mat.conj().T
        load = _LOADING * np.real(np.trace(gram)) / k
        log.warning("zero-forcing: ill-conditioned effective channel, loading %.3g", load)
        f = h_mat.conj().T @ np.linalg.inv(gram + load * np.eye(k))
    return f / np.linalg.norm(f, axis=0)


def run_tsh(channels, codebook: Codebook, cfg: SystemConfig, sweep_snr: float = np.inf,
            eff_csi_snr: float = np.inf, rng_seed=None):
    """
    Two-stage hybrid beamforming.

    The analog stage is the swept codeword of each user (same measurement
    model and random stream as :func:`hybridbf.amm.beam_sweep`). The
    effective channels are then observed with additive CN noise of variance
    ``mean |h~|^2 / eff_csi_snr`` and inverted by zero-forcing. Returns
    ``(AnalogBeamformer, DigitalBeamformer)``.
    """
    if not eff_csi_snr > 0:
        raise ParameterError("eff_csi_snr must be positive")
    rng = np.random.default_rng(rng_seed)
    sweep = beam_sweep(channels, codebook, cfg, sweep_snr, rng)
    analog = AnalogBeamformer(sweep.codewords)
    eff = effective_channels(analog, channels)
    if np.isfinite(eff_csi_snr):
        var = np.mean(np.abs(eff) ** 2) / eff_csi_snr
        eff = eff + np.sqrt(var / 2) * (rng.standard_normal(eff.shape)
                                        + 1j * rng.standard_normal(eff.shape))
    return analog, DigitalBeamformer(zero_forcing(eff))
