"""Polarization analyzer (transformer + PBS) and threshold detector model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qstate import DensityMatrix, DimensionError, StateVector, as_density

H = StateVector(np.array([1.0, 0.0]))
V = StateVector(np.array([0.0, 1.0]))


@dataclass(frozen=True)
class AnalyzerSetting:
    """Net polarization transform R(theta, phi) followed by a PBS.

    Angles are canonicalized to theta in [0, pi) and phi in [0, 2 pi).
    Shifting theta by pi only flips the global sign of the analyzer ket.
    """

    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.phi)):
            raise ValueError("analyzer angles must be finite")
        object.__setattr__(self, "theta", float(np.mod(self.theta, np.pi)))
        object.__setattr__(self, "phi", float(np.mod(self.phi, 2 * np.pi)))

    @classmethod
    def degrees(cls, theta: float, phi: float = 0.0) -> "AnalyzerSetting":
        return cls(np.deg2rad(theta), np.deg2rad(phi))


def analyzer_ket(setting: AnalyzerSetting) -> StateVector:
    """cos(theta) e^{i phi}|H> + sin(theta)|V>: the state transmitted by the PBS."""
    t, p = setting.theta, setting.phi
    return StateVector(np.array([np.cos(t) * np.exp(1j * p), np.sin(t)]))


def analyzer_unitary(setting: AnalyzerSetting) -> np.ndarray:
    # columns: transmitted ket, then -sin(theta) e^{i phi}|H> + cos(theta)|V>
    t, p = setting.theta, setting.phi
    e = np.exp(1j * p)
    return np.array([[np.cos(t) * e, -np.sin(t) * e], [np.sin(t), np.cos(t)]])


def analyzer_perp(setting: AnalyzerSetting) -> StateVector:
    return StateVector(analyzer_unitary(setting)[:, 1])


@dataclass(frozen=True)
class Measurement:
    p_pass: float
    post_pass: StateVector
    post_fail: StateVector

    @property
    def p_fail(self) -> float:
        return 1.0 - self.p_pass


def measure_polarization(state, setting: AnalyzerSetting) -> Measurement:
    """Born-rule projection of a single-photon polarization state at the analyzer."""
    rho = as_density(state)
    if rho.dim != 2:
        raise DimensionError("measure_polarization expects a single-qubit state")
    ket = analyzer_ket(setting)
    a = ket.amplitudes
    p = float(np.vdot(a, rho.entries @ a).real)
    return Measurement(min(max(p, 0.0), 1.0), ket, analyzer_perp(setting))


def pass_probabilities(rhos: np.ndarray, setting: AnalyzerSetting) -> np.ndarray:
    """Vectorized p_pass for a stack of 2x2 density matrices, shape (..., 2, 2)."""
    a = analyzer_ket(setting).amplitudes
    p = np.einsum("i,...ij,j->...", a.conj(), rhos, a).real
    return np.clip(p, 0.0, 1.0)


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 1.0
    dark_click_prob_per_gate: float = 0.0

    def __post_init__(self):
        for name in ("efficiency", "dark_click_prob_per_gate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def detector_click(p_photon: float, params: DetectorParams, u: tuple[float, float]) -> bool:
    """Threshold detector over one gate.

    ``u[0]`` decides whether the photon (present with ``p_photon``) is
    registered; ``u[1]`` decides whether a dark count fires.  Either one
    produces a click.
    """
    if not (0.0 <= p_photon <= 1.0):
        raise ValueError(f"p_photon must lie in [0, 1], got {p_photon}")
    u_photon, u_dark = u
    return bool(u_photon < p_photon * params.efficiency or u_dark < params.dark_click_prob_per_gate)
