"""
Array geometry and Saleh-Valenzuela channel generation.

The base station uses a half-wavelength ULA of ``n_bs`` antennas split into
``n_rf`` disjoint subarrays of ``n_s = n_bs / n_rf`` antennas each. Subarray
``q`` (0-based) owns antennas ``q * n_s ... (q + 1) * n_s - 1``.

Angles of departure are carried by their sine, ``theta = sin(vartheta)``,
which lives in ``(-1, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .exceptions import ParameterError

__all__ = [
    "SystemConfig",
    "PathComponent",
    "ChannelRealization",
    "steering_vector",
    "steering_matrix",
    "subarray_steering",
    "generate_channel",
    "generate_channels",
    "channel_matrix",
]

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, Sequence[int]]


@dataclass(frozen=True)
class SystemConfig:
    """
    Dimensions and power levels of the downlink.

    Parameters
    ----------
    n_bs : int
        Number of BS antennas.
    n_rf : int
        Number of RF chains (one subarray each).
    total_power : float
        Total transmit power P (linear).
    noise_var : float
        Receiver noise power sigma^2 (linear).
    k_users : int, optional
        Number of single-antenna users. Must equal ``n_rf``; defaults to it.
    """

    n_bs: int
    n_rf: int
    total_power: float = 1.0
    noise_var: float = 1.0
    k_users: int | None = None

    def __post_init__(self):
        if self.k_users is None:
            object.__setattr__(self, "k_users", self.n_rf)
        for name in ("n_bs", "n_rf", "k_users"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if self.n_bs % self.n_rf:
            raise ParameterError(
                f"n_bs={self.n_bs} is not divisible by n_rf={self.n_rf}")
        if self.k_users != self.n_rf:
            raise ParameterError("only k_users == n_rf is supported")
        if not self.total_power > 0 or not self.noise_var > 0:
            raise ParameterError("total_power and noise_var must be positive")

    @property
    def n_s(self) -> int:
        """Antennas per subarray."""
        return self.n_bs // self.n_rf

    @property
    def snr(self) -> float:
        """Linear SNR, P / sigma^2."""
        return self.total_power / self.noise_var

    def subarray(self, q: int) -> slice:
        """Antenna index slice of subarray ``q`` (0-based)."""
        if not 0 <= q < self.n_rf:
            raise ParameterError(f"subarray index {q} outside [0, {self.n_rf})")
        return slice(q * self.n_s, (q + 1) * self.n_s)

    @classmethod
    def from_snr_db(cls, n_bs: int, n_rf: int, snr_db: float) -> "SystemConfig":
        """Build a config with P = K (unit per-stream power) and sigma^2 = P / SNR."""
        power = float(n_rf)
        return cls(n_bs=n_bs, n_rf=n_rf, total_power=power,
                   noise_var=power / 10 ** (snr_db / 10))


def _check_sine(aod_sine):
    s = np.asarray(aod_sine, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s <= -1) or np.any(s > 1):
        raise ParameterError(f"AoD sine must lie in (-1, 1], got {aod_sine!r}")
    return s


def steering_vector(aod_sine: float, n: int) -> np.ndarray:
    """
    Unit-norm ULA response ``[1, e^{j pi s}, ..., e^{j (n-1) pi s}] / sqrt(n)``.
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"antenna count must be a positive integer, got {n!r}")
    s = float(_check_sine(aod_sine))
    return steering_matrix(s, n)[:, 0]


def steering_matrix(aod_sines, n: int, offset: int = 0, norm: int | None = None) -> np.ndarray:
    """
    Columns are steering vectors for each sine in `aod_sines`.

    Rows correspond to antennas ``offset ... offset + n - 1`` of an array
    normalised by ``1 / sqrt(norm)`` (``norm`` defaults to ``n``), so that
    ``steering_matrix(s, n_s, q * n_s, n_bs)`` stacks the subarray slices
    ``a(s)_{S_q}`` of full-array steering vectors.
    """
    sines = np.atleast_1d(np.asarray(aod_sines, dtype=float))
    norm = n if norm is None else norm
    m = np.arange(offset, offset + n)
    return np.exp(1j * np.pi * np.outer(m, sines)) / np.sqrt(norm)


def subarray_steering(aod_sine: float, subarray_index: int, cfg: SystemConfig) -> np.ndarray:
    """Entries of ``steering_vector(aod_sine, n_bs)`` that belong to one subarray."""
    sl = cfg.subarray(subarray_index)
    _check_sine(aod_sine)
    return steering_matrix(aod_sine, cfg.n_s, offset=sl.start, norm=cfg.n_bs)[:, 0]


@dataclass(frozen=True)
class PathComponent:
    gain: complex
    aod_sine: float

    def __post_init__(self):
        _check_sine(self.aod_sine)


@dataclass(frozen=True)
class ChannelRealization:
    """One user's multipath parameters and the resulting channel vector."""

    paths: tuple[PathComponent, ...]
    vector: np.ndarray = field(repr=False)

    @classmethod
    def from_paths(cls, paths: Sequence[PathComponent], n_bs: int) -> "ChannelRealization":
        paths = tuple(paths)
        if not paths:
            raise ParameterError("a channel needs at least one path")
        gains = np.array([p.gain for p in paths], dtype=complex)
        sines = np.array([p.aod_sine for p in paths], dtype=float)
        h = np.sqrt(n_bs / len(paths)) * (steering_matrix(sines, n_bs) @ gains)
        return cls(paths=paths, vector=h)

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def recompute(self) -> np.ndarray:
        return ChannelRealization.from_paths(self.paths, self.vector.size).vector


def _complex_normal(rng: np.random.Generator, var, size=None):
    scale = np.sqrt(np.asarray(var, dtype=float) / 2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def generate_channel(rng_seed: SeedLike, cfg: SystemConfig, los_var: float = 1.0,
                     nlos_var: float = 0.01, n_paths: int = 3) -> ChannelRealization:
    """
    Draw one user's channel.

    Path 0 is the LoS path with gain ~ CN(0, los_var); the remaining paths
    have gain ~ CN(0, nlos_var). AoD sines are uniform on (-1, 1]. Gains and
    angles are drawn before the antenna count is used, so the same seed gives
    the same propagation paths for every ``n_bs``.

    `rng_seed` may be an integer seed or an existing ``numpy`` Generator (in
    which case it is advanced).
    """
    if int(n_paths) != n_paths or n_paths < 1:
        raise ParameterError(f"n_paths must be >= 1, got {n_paths!r}")
    if not los_var > 0 or not nlos_var > 0:
        raise ParameterError("path gain variances must be positive")
    rng = np.random.default_rng(rng_seed)
    var = np.full(n_paths, float(nlos_var))
    var[0] = los_var
    gains = _complex_normal(rng, var, n_paths)
    # uniform on [-1, 1) mirrored onto (-1, 1]
    sines = -rng.uniform(-1.0, 1.0, n_paths)
    paths = [PathComponent(complex(g), float(s)) for g, s in zip(gains, sines)]
    return ChannelRealization.from_paths(paths, cfg.n_bs)


def generate_channels(rng_seed: SeedLike, cfg: SystemConfig, los_var: float = 1.0,
                      nlos_var: float = 0.01, n_paths: int = 3) -> list[ChannelRealization]:
    """Draw channels for all ``cfg.k_users`` users from one random stream."""
    rng = np.random.default_rng(rng_seed)
    return [generate_channel(rng, cfg, los_var, nlos_var, n_paths)
            for _ in range(cfg.k_users)]


def channel_matrix(channels) -> np.ndarray:
    """Stack channels as the columns of an ``n_bs x K`` array.

    Accepts a sequence of :class:`ChannelRealization` or a ready-made array.
    """
    if isinstance(channels, np.ndarray):
        if channels.ndim != 2:
            raise ParameterError("channel array must be 2-D (n_bs x K)")
        return channels.astype(complex, copy=False)
    return np.column_stack([c.vector if isinstance(c, ChannelRealization) else np.asarray(c)
                            for c in channels]).astype(complex, copy=False)
