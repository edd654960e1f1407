"""
Analog-only MM (A-MM) beamforming from beam-sweeping results.

After sweeping, user k is only known to lie in the angular interval Omega_k
covered by its best codeword. Each subarray q then solves its own
beam-nulling problem over the constant-modulus set::

    min_f  -sum_m |a(phi_{q,m})_{S_q}^H f|^2
           + lam * sum_{k != q} sum_m |a(phi_{k,m})_{S_q}^H f|^2

where phi_{k,m} are M samples of Omega_k. Majorization-minimization
replaces the concave first term by its tangent plane and the second by the
bound ``f^H B f <= f^H f + 2 Re{f^H (B - I) f_i} + const`` (valid because
every rank-one ``B = a a^H`` here has ``||a||^2 <= 1``). The surrogate is
linear in f on the constant-modulus set and is minimised by taking the
phases of ``Sigma_1 - lam * Sigma_2`` entrywise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .array_channel import SystemConfig, channel_matrix, steering_matrix
from .beamformers import AnalogBeamformer
from .exceptions import ParameterError

__all__ = [
    "AngleRange",
    "AmmConfig",
    "Codebook",
    "SweepResult",
    "build_codebook",
    "beam_sweep",
    "sample_angle_range",
    "slnr_objective",
    "mm_surrogate_coeffs",
    "mm_surrogate_value",
    "mm_closed_form_update",
    "solve_beam_nulling",
    "run_amm",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AngleRange:
    """Closed interval ``[lo, hi]`` of AoD sines."""

    lo: float
    hi: float

    def __post_init__(self):
        if not -1.0 <= self.lo < self.hi <= 1.0:
            raise ParameterError(f"invalid angle range [{self.lo}, {self.hi}]")

    @classmethod
    def from_degrees(cls, lo_deg: float, hi_deg: float) -> "AngleRange":
        return cls(float(np.sin(np.radians(lo_deg))), float(np.sin(np.radians(hi_deg))))

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, sines) -> np.ndarray:
        s = np.asarray(sines)
        return (s >= self.lo) & (s <= self.hi)


@dataclass(frozen=True)
class AmmConfig:
    lam: float = 1000.0
    samples_per_range: int = 10
    max_iters: int = 50
    rel_tol: float = 1e-6

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError("lam must be non-negative")
        if int(self.samples_per_range) != self.samples_per_range or self.samples_per_range < 1:
            raise ParameterError("samples_per_range must be a positive integer")
        if self.max_iters < 1 or not self.rel_tol > 0:
            raise ParameterError("max_iters must be >= 1 and rel_tol > 0")


@dataclass(frozen=True)
class Codebook:
    """
    Sweeping codebook for one subarray.

    ``codewords[i]`` is a length-``n_s`` constant-modulus beam steered at
    ``centers[i]``; the beam is credited with the sine interval of width
    ``2 / n_cb`` around its center.
    """

    codewords: np.ndarray
    centers: np.ndarray

    @property
    def size(self) -> int:
        return self.centers.size

    def range_of(self, index: int) -> AngleRange:
        half = 1.0 / self.size
        c = float(self.centers[index])
        return AngleRange(max(c - half, -1.0), min(c + half, 1.0))


class SweepResult(NamedTuple):
    indices: np.ndarray
    codewords: np.ndarray
    ranges: list


def build_codebook(cfg: SystemConfig, n_cb: int | None = None) -> Codebook:
    """
    Uniform codebook of `n_cb` beams (default ``n_bs``).

    Centers are the midpoints ``-1 + (2i + 1) / n_cb`` of a uniform partition
    of the sine axis, so the credited intervals tile [-1, 1] exactly. The
    codewords are ``e^{j pi n c} / sqrt(n_s)``, which differ from the
    matching slice of the full-array steering vector only by a per-subarray
    unit-modulus factor.
    """
    n_cb = cfg.n_bs if n_cb is None else n_cb
    if int(n_cb) != n_cb or n_cb < 1:
        raise ParameterError(f"codebook size must be a positive integer, got {n_cb!r}")
    centers = -1.0 + (2 * np.arange(n_cb) + 1) / n_cb
    codewords = steering_matrix(centers, cfg.n_s).T
    return Codebook(codewords=codewords, centers=centers)


def beam_sweep(channels, codebook: Codebook, cfg: SystemConfig, sweep_snr: float = np.inf,
               rng_seed=None) -> SweepResult:
    """
    Pick the strongest codeword for every user.

    User k measures ``y = sqrt(sweep_snr) * h_{k,S_k}^H w_i + n`` with
    ``n ~ CN(0, 1)`` for every codeword ``w_i`` placed on subarray k, and
    reports ``argmax_i |y|^2``. ``sweep_snr = inf`` gives noiseless
    measurements and draws no random numbers.
    """
    if codebook.size < 1:
        raise ParameterError("empty codebook")
    if not sweep_snr > 0:
        raise ParameterError("sweep_snr must be positive")
    h = channel_matrix(channels)
    k = cfg.k_users
    blocks = h.reshape(k, cfg.n_s, h.shape[1])
    # [k, i] = h_{k,S_k}^H w_i
    y = np.einsum("kn,in->ki", np.stack([blocks[q, :, q] for q in range(k)]).conj(),
                  codebook.codewords)
    if np.isfinite(sweep_snr):
        rng = np.random.default_rng(rng_seed)
        noise = np.sqrt(0.5) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
        y = np.sqrt(sweep_snr) * y + noise
    indices = np.argmax(np.abs(y) ** 2, axis=1)
    if np.unique(indices).size < k:
        log.warning("beam sweep: users share a codeword (indices %s)", indices.tolist())
    return SweepResult(indices=indices, codewords=codebook.codewords[indices].copy(),
                       ranges=[codebook.range_of(int(i)) for i in indices])


def sample_angle_range(angle_range: AngleRange, m_samples: int) -> np.ndarray:
    """`m_samples` evenly spaced sines over the closed range; one sample is the midpoint."""
    if int(m_samples) != m_samples or m_samples < 1:
        raise ParameterError("m_samples must be a positive integer")
    if m_samples == 1:
        return np.array([angle_range.center])
    return np.linspace(angle_range.lo, angle_range.hi, int(m_samples))


def _sampled_steering(q: int, ranges: Sequence[AngleRange], cfg: SystemConfig, m: int):
    """Subarray-q slices of the steering vectors at the samples of every range.

    Returns ``(desired, leakage)`` with shapes ``n_s x M`` and
    ``n_s x (K-1)M``.
    """
    if len(ranges) != cfg.k_users:
        raise ParameterError(f"need {cfg.k_users} angle ranges, got {len(ranges)}")
    start = cfg.subarray(q).start
    cols = [steering_matrix(sample_angle_range(r, m), cfg.n_s, offset=start, norm=cfg.n_bs)
            for r in ranges]
    others = [c for k, c in enumerate(cols) if k != q]
    leak = np.hstack(others) if others else np.zeros((cfg.n_s, 0), dtype=complex)
    return cols[q], leak


def _objective(f, desired, leak, lam):
    return float(-np.sum(np.abs(desired.conj().T @ f) ** 2)
                 + lam * np.sum(np.abs(leak.conj().T @ f) ** 2))


def slnr_objective(f_q, q: int, ranges, cfg: SystemConfig, amm_cfg: AmmConfig) -> float:
    """Weighted signal-minus-leakage objective of subarray `q` (to be minimised)."""
    desired, leak = _sampled_steering(q, ranges, cfg, amm_cfg.samples_per_range)
    return _objective(np.asarray(f_q, dtype=complex), desired, leak, amm_cfg.lam)


def _coeffs(f, desired, leak):
    s1 = desired @ (desired.conj().T @ f)
    s2 = leak @ (leak.conj().T @ f) - leak.shape[1] * f
    return s1, s2


def mm_surrogate_coeffs(f_iter, q: int, ranges, cfg: SystemConfig, amm_cfg: AmmConfig):
    """
    Linear coefficients of the MM surrogate at `f_iter`::

        Sigma_1 = sum_m a a^H f_iter                  (samples of Omega_q)
        Sigma_2 = sum_{k != q} sum_m (a a^H - I) f_iter
    """
    desired, leak = _sampled_steering(q, ranges, cfg, amm_cfg.samples_per_range)
    return _coeffs(np.asarray(f_iter, dtype=complex), desired, leak)


def mm_surrogate_value(f, f_iter, q: int, ranges, cfg: SystemConfig,
                       amm_cfg: AmmConfig) -> float:
    """Value at `f` of the majorizer built at `f_iter`, constants included."""
    f = np.asarray(f, dtype=complex)
    fi = np.asarray(f_iter, dtype=complex)
    desired, leak = _sampled_steering(q, ranges, cfg, amm_cfg.samples_per_range)
    pd = desired.conj().T @ fi
    pl = leak.conj().T @ fi
    s1, s2 = _coeffs(fi, desired, leak)
    # tangent plane of -|a^H f|^2
    first = -np.sum(np.abs(pd) ** 2) - 2 * np.real(np.vdot(s1, f - fi))
    # f^H f + fi^H (I - B) fi + 2 Re{f^H (B - I) fi}, summed over leakage samples
    n_leak = leak.shape[1]
    second = (n_leak * np.real(np.vdot(f, f)) + n_leak * np.real(np.vdot(fi, fi))
              - np.sum(np.abs(pl) ** 2) + 2 * np.real(np.vdot(f, s2)))
    return float(first + amm_cfg.lam * second)


def mm_closed_form_update(sigma1, sigma2, lam: float, n_s: int, f_prev=None) -> np.ndarray:
    """
    Minimiser of ``Re{f^H (-Sigma_1 + lam Sigma_2)}`` with ``|f_n| = 1/sqrt(n_s)``.

    Entries where ``Sigma_1 - lam Sigma_2`` vanishes get phase 0. If the whole
    vector vanishes every feasible point is optimal and `f_prev` (when given)
    is returned unchanged.
    """
    v = np.asarray(sigma1, dtype=complex) - lam * np.asarray(sigma2, dtype=complex)
    if f_prev is not None and not np.any(v):
        return np.array(f_prev, dtype=complex)
    return np.exp(1j * np.angle(v)) / np.sqrt(n_s)


def solve_beam_nulling(f0, q: int, ranges, cfg: SystemConfig, amm_cfg: AmmConfig):
    """
    MM iterations for subarray `q` starting from `f0`.

    Returns ``(f, trace)`` where ``trace[i]`` is the objective after update
    ``i + 1``. Stops after ``amm_cfg.max_iters`` updates or when the relative
    objective change falls below ``amm_cfg.rel_tol``.
    """
    desired, leak = _sampled_steering(q, ranges, cfg, amm_cfg.samples_per_range)
    f = np.asarray(f0, dtype=complex).copy()
    if f.shape != (cfg.n_s,):
        raise ParameterError(f"initial vector must have length {cfg.n_s}")
    prev = _objective(f, desired, leak, amm_cfg.lam)
    trace = []
    for _ in range(amm_cfg.max_iters):
        s1, s2 = _coeffs(f, desired, leak)
        f = mm_closed_form_update(s1, s2, amm_cfg.lam, cfg.n_s, f_prev=f)
        obj = _objective(f, desired, leak, amm_cfg.lam)
        trace.append(obj)
        if abs(obj - prev) < amm_cfg.rel_tol * max(abs(prev), np.finfo(float).tiny):
            break
        prev = obj
    return f, trace


def run_amm(selected_codewords, ranges, cfg: SystemConfig, amm_cfg: AmmConfig | None = None):
    """
    A-MM analog beamformer.

    Every subarray q starts from its user's swept codeword and runs
    :func:`solve_beam_nulling` independently. Returns
    ``(AnalogBeamformer, traces)`` with one objective trace per user; the
    digital stage is the identity.
    """
    amm_cfg = AmmConfig() if amm_cfg is None else amm_cfg
    codewords = np.asarray(selected_codewords, dtype=complex)
    if codewords.shape != (cfg.k_users, cfg.n_s) or len(ranges) != cfg.k_users:
        raise ParameterError("need one codeword of length n_s and one range per user")
    vectors, traces = [], []
    for q in range(cfg.k_users):
        f, trace = solve_beam_nulling(codewords[q], q, ranges, cfg, amm_cfg)
        vectors.append(f)
        traces.append(trace)
    return AnalogBeamformer.from_vectors(vectors), traces
