"""Atomic memory qubit: heralded preparation, storage dephasing, read-out.

Memory basis is (|L_a>, |R_a>).  Read-out maps |L_a> -> |H>_i and
|R_a> -> e^{i eta_i}|V>_i.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .optics import AnalyzerSetting
from .qstate import DensityMatrix, StateVector


class DecayShape(str, enum.Enum):
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class DecoherenceModel:
    """1/e decay time ``tau`` (ns) of the |a>-|b> coherence."""

    tau: float
    shape: DecayShape = DecayShape.GAUSSIAN

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "shape", DecayShape(self.shape))

    def factor(self, elapsed):
        """Coherence multiplier after ``elapsed`` ns; works on scalars and arrays."""
        x = np.asarray(elapsed, dtype=float) / self.tau
        if np.any(x < 0):
            raise ValueError("elapsed time must be non-negative")
        if self.shape is DecayShape.EXPONENTIAL:
            d = np.exp(-x)
        else:
            d = np.exp(-(x**2))
        return float(d) if d.ndim == 0 else d

    @classmethod
    def none(cls) -> "DecoherenceModel":
        return cls(np.inf, DecayShape.EXPONENTIAL)


@dataclass(frozen=True)
class ReadoutParams:
    xi: float = 1.0
    eta_i: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.xi <= 1.0):
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")


@dataclass(frozen=True)
class MemoryQubit:
    """Memory state at time ``t``.

    ``prepared`` is kept so that dephasing is always evaluated once from
    ``prepared_at``; that is what makes the gaussian law consistent under
    repeated calls.
    """

    prepared: DensityMatrix
    prepared_at: float
    rho: DensityMatrix
    t: float

    @classmethod
    def fresh(cls, rho: DensityMatrix, t: float) -> "MemoryQubit":
        return cls(rho, t, rho, t)


def prepare_from_signal(signal_setting: AnalyzerSetting, eta_s: float, t: float) -> MemoryQubit:
    """Memory state heralded by a D1 click behind ``signal_setting``."""
    th, ph = signal_setting.theta, signal_setting.phi
    psi = StateVector(np.array([np.cos(th) * np.exp(-1j * ph), np.sin(th) * np.exp(1j * eta_s)]))
    return MemoryQubit.fresh(psi.projector(), t)


def _scale_coherence(rho: DensityMatrix, d: float) -> DensityMatrix:
    m = np.array(rho.entries)
    m[0, 1] *= d
    m[1, 0] *= d
    return DensityMatrix(m)


def decohere(qubit: MemoryQubit, model: DecoherenceModel, t_now: float) -> MemoryQubit:
    if t_now < qubit.prepared_at:
        raise ValueError(f"t_now={t_now} precedes preparation at {qubit.prepared_at}")
    if t_now < qubit.t:
        raise ValueError(f"t_now={t_now} precedes the qubit's current time {qubit.t}")
    d = model.factor(t_now - qubit.prepared_at)
    return MemoryQubit(qubit.prepared, qubit.prepared_at, _scale_coherence(qubit.prepared, d), t_now)


def readout_map(rho: DensityMatrix, eta_i: float) -> DensityMatrix:
    u = np.diag([1.0, np.exp(1j * eta_i)])
    return DensityMatrix(u @ rho.entries @ u.conj().T)


def read_out(qubit: MemoryQubit, params: ReadoutParams, u: float) -> Optional[DensityMatrix]:
    """Idler polarization state, or ``None`` when the excitation is not retrieved (u >= xi)."""
    if u >= params.xi:
        return None
    return readout_map(qubit.rho, params.eta_i)
