"""
Phase-aligned WMMSE (P-WMMSE) hybrid beamforming under perfect CSI.

The analog stage aligns every phase shifter of subarray k with the phase of
the matching entry of h_k. The digital stage then maximises the sum-rate of
the K x K effective channel ``h~_k = F_RF^H h_k`` by weighted-MMSE
alternating optimisation over receivers u_k, weights w_k and precoder
columns of F_BB.

Two update variants are provided.

``"derived-optimal"`` (default)
    The exact block minimisers of ``sum_k w_k e_k - log2 w_k``. Setting
    d e_k / d u_k^* = 0 gives::

        u_k = (P/K) a_k^* / ((P/K) sum_i |h~_k^H F_:i|^2 + sigma^2),
        a_k = h~_k^H F_:k

    and stationarity of the Lagrangian in F_:k gives::

        F_:k = w_k u_k^* (sum_i w_i |u_i|^2 h~_i h~_i^H + mu I)^-1 h~_k

    where mu absorbs the common P/K factor. Every block step is a
    minimisation over a fixed feasible set, so the objective never increases.

``"literal"``
    The receiver and precoder updates typed without the desired-signal term,
    the P/K scaling and the conjugate on u_k::

        u_k = a_k / (sum_{i != k} |h~_k^H F_:i|^2 + sigma^2)
        F_:k = w_k u_k (sum_i w_i |u_i|^2 h~_i h~_i^H + mu I)^-1 h~_k

    Kept for comparison; it carries no descent guarantee.

In both variants mu >= 0 is found by bisection on the decreasing map
``mu -> ||F_BB(mu)||_F^2`` so that the power is K (mu = 0 if the
unconstrained solution already uses at most K), and the output is rescaled
to exactly ``||F_RF F_BB||_F^2 = K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array_channel import SystemConfig, channel_matrix
from .beamformers import AnalogBeamformer, DigitalBeamformer
from .exceptions import NumericalError, ParameterError
from .metrics import per_user_rates

__all__ = [
    "DERIVED_OPTIMAL",
    "LITERAL",
    "VARIANTS",
    "WmmseState",
    "phase_align_analog",
    "effective_channels",
    "wmmse_update_receiver",
    "wmmse_mse",
    "wmmse_errors",
    "wmmse_update_weights",
    "wmmse_update_precoder",
    "wmmse_objective",
    "solve_wmmse",
    "run_pwmmse",
]

DERIVED_OPTIMAL = "derived-optimal"
LITERAL = "literal"
VARIANTS = (DERIVED_OPTIMAL, LITERAL)

_BISECT_MAX = 200
_EIG_FLOOR = 1e-12


@dataclass
class WmmseState:
    receivers: np.ndarray
    weights: np.ndarray
    errors: np.ndarray
    initial_objective: float = float("nan")
    multiplier: float = 0.0
    objective_trace: list = field(default_factory=list)
    rate_trace: list = field(default_factory=list)
    iterations: int = 0


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ParameterError(f"unknown update variant {variant!r}; expected one of {VARIANTS}")


def phase_align_analog(channels, cfg: SystemConfig) -> AnalogBeamformer:
    """Set ``[f_k]_n = e^{j angle([h_k]_t)} / sqrt(n_s)`` over subarray k.

    A zero channel entry is given phase 0 (``np.angle(0) == 0``).
    """
    h = channel_matrix(channels)
    if h.shape != (cfg.n_bs, cfg.k_users):
        raise ParameterError(f"expected {cfg.k_users} channels of length {cfg.n_bs}, "
                             f"got array of shape {h.shape}")
    vectors = np.empty((cfg.k_users, cfg.n_s), dtype=complex)
    for k in range(cfg.k_users):
        vectors[k] = np.exp(1j * np.angle(h[cfg.subarray(k), k])) / np.sqrt(cfg.n_s)
    return AnalogBeamformer(vectors)


def effective_channels(analog: AnalogBeamformer, channels) -> np.ndarray:
    """Return the K x K array whose column k is ``h~_k = F_RF^H h_k``."""
    h = channel_matrix(channels)
    k, n_s = analog.subarray_vectors.shape
    if h.shape[0] != k * n_s:
        raise ParameterError("channel length does not match the analog beamformer")
    # block-diagonal product without forming F_RF: row q is f_q^H h_{S_q}
    blocks = h.reshape(k, n_s, h.shape[1])
    return np.einsum("qn,qnk->qk", analog.subarray_vectors.conj(), blocks)


def _gains(eff: np.ndarray, f_bb: np.ndarray) -> np.ndarray:
    # [k, i] = h~_k^H F_:i
    return eff.conj().T @ f_bb


def wmmse_update_receiver(eff: np.ndarray, f_bb: np.ndarray, cfg: SystemConfig,
                          variant: str = DERIVED_OPTIMAL) -> np.ndarray:
    """Receiver coefficients u_k for the current precoder."""
    _check_variant(variant)
    g = _gains(eff, f_bb)
    a = np.diag(g)
    total = np.sum(np.abs(g) ** 2, axis=1)
    if variant == DERIVED_OPTIMAL:
        ps = cfg.total_power / eff.shape[1]
        return ps * a.conj() / (ps * total + cfg.noise_var)
    interference = total - np.abs(a) ** 2
    return a / (interference + cfg.noise_var)


def wmmse_errors(receivers: np.ndarray, eff: np.ndarray, f_bb: np.ndarray,
                 cfg: SystemConfig) -> np.ndarray:
    """MSE e_k of every user for the given receivers and precoder."""
    ps = cfg.total_power / eff.shape[1]
    g = receivers[:, None] * _gains(eff, f_bb)
    desired = np.diag(g)
    leak = np.sum(np.abs(g) ** 2, axis=1) - np.abs(desired) ** 2
    return (ps * np.abs(1 - desired) ** 2 + ps * leak
            + cfg.noise_var * np.abs(receivers) ** 2)


def wmmse_mse(u_k: complex, eff_k: np.ndarray, f_bb: np.ndarray, cfg: SystemConfig,
              k: int) -> float:
    """MSE of user `k` with receiver `u_k` and effective channel `eff_k`."""
    ps = cfg.total_power / f_bb.shape[1]
    g = u_k * (np.conj(eff_k) @ f_bb)
    others = np.delete(g, k)
    return float(ps * abs(1 - g[k]) ** 2 + ps * np.sum(np.abs(others) ** 2)
                 + cfg.noise_var * abs(u_k) ** 2)


def wmmse_update_weights(errors: np.ndarray) -> np.ndarray:
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise NumericalError("MSE must be positive to form a weight")
    return 1.0 / errors


def wmmse_objective(weights: np.ndarray, errors: np.ndarray) -> float:
    """``sum_k w_k e_k - log2 w_k``."""
    return float(np.sum(weights * errors - np.log2(weights)))


def _power_profile(a_mat: np.ndarray, rhs: np.ndarray):
    lam, vecs = np.linalg.eigh(a_mat)
    lam = np.clip(lam, 0.0, None)
    proj = vecs.conj().T @ rhs
    return lam, vecs, proj, np.sum(np.abs(proj) ** 2, axis=1)


def wmmse_update_precoder(eff: np.ndarray, receivers: np.ndarray, weights: np.ndarray,
                          cfg: SystemConfig, variant: str = DERIVED_OPTIMAL,
                          target_power: float | None = None):
    """
    Precoder update for fixed receivers and weights.

    Returns ``(F_BB, mu)``. The power of F_BB equals `target_power`
    (default K) whenever ``mu > 0``; with ``mu == 0`` it is at most that.
    """
    _check_variant(variant)
    k = eff.shape[1]
    target = float(k if target_power is None else target_power)
    coeff = receivers.conj() if variant == DERIVED_OPTIMAL else receivers
    a_mat = (eff * (weights * np.abs(receivers) ** 2)) @ eff.conj().T
    a_mat = 0.5 * (a_mat + a_mat.conj().T)
    rhs = eff * (weights * coeff)
    lam, vecs, proj, row_power = _power_profile(a_mat, rhs)
    if not np.all(np.isfinite(lam)):
        raise NumericalError("non-finite eigenvalues in precoder update")
    if not np.any(row_power > 0):
        return np.zeros_like(rhs), 0.0

    def power(mu):
        with np.errstate(divide="ignore"):
            return float(np.sum(row_power / (lam + mu) ** 2))

    scale = max(float(lam.max()), 1e-300)
    if lam.min() > _EIG_FLOOR * scale and power(0.0) <= target:
        mu = 0.0
    else:
        lo, hi = 0.0, scale
        while power(hi) > target:
            lo, hi = hi, 2 * hi
        for _ in range(_BISECT_MAX):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if power(mid) > target:
                lo = mid
            else:
                hi = mid
        mu = hi
    f_bb = vecs @ (proj / (lam + mu)[:, None])
    if not np.all(np.isfinite(f_bb)):
        raise NumericalError("singular regularised matrix in precoder update")
    if mu > 0:
        f_bb *= np.sqrt(target / (np.linalg.norm(f_bb) ** 2))
    return f_bb, float(mu)


def _refresh(eff, f_bb, cfg, variant):
    u = wmmse_update_receiver(eff, f_bb, cfg, variant)
    e = wmmse_errors(u, eff, f_bb, cfg)
    w = wmmse_update_weights(e)
    return u, e, w


def solve_wmmse(eff: np.ndarray, cfg: SystemConfig, max_iters: int = 20,
                rel_tol: float = 1e-4, variant: str = DERIVED_OPTIMAL,
                init: np.ndarray | None = None):
    """
    WMMSE alternating optimisation of the digital precoder for the effective
    channels in the columns of `eff`.

    The precoder starts at the column-normalised effective channels unless
    `init` is given. Each iteration updates F_BB, then u, e and w, and
    records the objective; the loop stops after `max_iters` iterations or
    once the relative objective change drops below `rel_tol`.

    Returns ``(F_BB, WmmseState)`` with ``||F_BB||_F^2 = K``.
    """
    _check_variant(variant)
    if max_iters < 1 or not rel_tol > 0:
        raise ParameterError("max_iters must be >= 1 and rel_tol > 0")
    k = eff.shape[1]
    f_bb = eff.copy() if init is None else np.array(init, dtype=complex)
    norms = np.linalg.norm(f_bb, axis=0)
    if np.any(norms == 0):
        raise NumericalError("zero column in the initial precoder")
    f_bb = f_bb / norms
    u, e, w = _refresh(eff, f_bb, cfg, variant)
    prev = wmmse_objective(w, e)
    state = WmmseState(receivers=u, weights=w, errors=e, initial_objective=prev)
    for it in range(max_iters):
        f_bb, mu = wmmse_update_precoder(eff, u, w, cfg, variant)
        u, e, w = _refresh(eff, f_bb, cfg, variant)
        obj = wmmse_objective(w, e)
        state.multiplier = mu
        state.objective_trace.append(obj)
        state.rate_trace.append(float(np.sum(per_user_rates(_gains(eff, f_bb), cfg))))
        state.iterations = it + 1
        if abs(obj - prev) < rel_tol * max(abs(prev), np.finfo(float).tiny):
            break
        prev = obj
    power = np.linalg.norm(f_bb) ** 2
    if power == 0:
        raise NumericalError("precoder collapsed to zero")
    f_bb = f_bb * np.sqrt(k / power)
    state.receivers, state.errors, state.weights = _refresh(eff, f_bb, cfg, variant)
    return f_bb, state


def run_pwmmse(channels, cfg: SystemConfig, max_iters: int = 20, rel_tol: float = 1e-4,
               variant: str = DERIVED_OPTIMAL):
    """
    Full P-WMMSE scheme: phase-aligned F_RF followed by WMMSE on the
    effective channels.

    Returns ``(AnalogBeamformer, DigitalBeamformer, WmmseState)``.
    """
    analog = phase_align_analog(channels, cfg)
    eff = effective_channels(analog, channels)
    f_bb, state = solve_wmmse(eff, cfg, max_iters, rel_tol, variant)
    return analog, DigitalBeamformer(f_bb), state
