"""Beamformer containers shared by the hybrid, analog-only and digital schemes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError

__all__ = [
    "AnalogBeamformer",
    "DigitalBeamformer",
    "FullyDigitalBeamformer",
    "StructureViolation",
    "check_hybrid",
    "check_power",
]

MODULUS_TOL = 1e-10
POWER_TOL = 1e-8


class StructureViolation(AssertionError):
    """A beamformer output breaks a hardware or power constraint."""


@dataclass(frozen=True)
class AnalogBeamformer:
    """
    Partially-connected analog beamformer.

    ``subarray_vectors[k]`` is the length-``n_s`` phase-shifter vector f_k of
    subarray ``k``; :attr:`matrix` assembles the ``n_bs x K`` block-diagonal
    F_RF.
    """

    subarray_vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.subarray_vectors, dtype=complex)
        if v.ndim != 2:
            raise ParameterError("subarray_vectors must be a K x n_s array")
        object.__setattr__(self, "subarray_vectors", v)

    @classmethod
    def from_vectors(cls, vectors) -> "AnalogBeamformer":
        return cls(np.vstack([np.asarray(f, dtype=complex) for f in vectors]))

    @property
    def k(self) -> int:
        return self.subarray_vectors.shape[0]

    @property
    def n_s(self) -> int:
        return self.subarray_vectors.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        k, n_s = self.subarray_vectors.shape
        out = np.zeros((k * n_s, k), dtype=complex)
        for q in range(k):
            out[q * n_s:(q + 1) * n_s, q] = self.subarray_vectors[q]
        return out

    def max_modulus_error(self) -> float:
        return float(np.max(np.abs(np.abs(self.subarray_vectors) - 1 / np.sqrt(self.n_s))))


@dataclass(frozen=True)
class DigitalBeamformer:
    """Baseband precoder F_BB (K x K); column k carries stream k."""

    matrix: np.ndarray

    @property
    def power(self) -> float:
        return float(np.linalg.norm(self.matrix) ** 2)


@dataclass(frozen=True)
class FullyDigitalBeamformer:
    """Unconstrained ``n_bs x K`` precoder."""

    matrix: np.ndarray

    @property
    def power(self) -> float:
        return float(np.linalg.norm(self.matrix) ** 2)


def check_power(precoder: np.ndarray, k: int, tol: float = POWER_TOL) -> None:
    power = np.linalg.norm(precoder) ** 2
    if abs(power - k) > tol:
        raise StructureViolation(f"precoder power {power!r} != {k} (tol {tol})")


def check_hybrid(analog: AnalogBeamformer, digital: DigitalBeamformer | None = None,
                 modulus_tol: float = MODULUS_TOL, power_tol: float = POWER_TOL) -> None:
    """Raise :class:`StructureViolation` if constant modulus, block support or
    total power is broken. ``digital=None`` means F_BB = I."""
    err = analog.max_modulus_error()
    if not err <= modulus_tol:
        raise StructureViolation(f"constant-modulus error {err:.3e}")
    f_rf = analog.matrix
    mask = np.zeros(f_rf.shape, dtype=bool)
    for q in range(analog.k):
        mask[q * analog.n_s:(q + 1) * analog.n_s, q] = True
    if np.any(f_rf[~mask] != 0) or np.count_nonzero(f_rf) != f_rf.shape[0]:
        raise StructureViolation("analog beamformer is not block diagonal")
    f_bb = np.eye(analog.k) if digital is None else digital.matrix
    check_power(f_rf @ f_bb, analog.k, power_tol)
