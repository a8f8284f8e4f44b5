"""Finite-dimensional state algebra for the signal/idler/memory qubits.

All two-photon objects use the ordered product basis ``(HH, HV, VH, VV)``
with the signal photon in the first slot.  Single-qubit objects use
``(H, V)`` for photons and ``(L_a, R_a)`` for the collective memory modes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

ALGEBRA_TOL = 1e-12
PSD_TOL = 1e-10
ALLOWED_DIMS = (2, 3, 4)

BASIS_LABELS = ("HH", "HV", "VH", "VV")


class DimensionError(ValueError):
    """Operands have incompatible Hilbert-space dimensions."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state.  Construction fails if the norm is off by more than 1e-12."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes).ravel()
        if amps.size not in ALLOWED_DIMS:
            raise DimensionError(f"unsupported dimension {amps.size}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ALGEBRA_TOL:
            raise ValueError(f"state not normalized (norm^2 = {norm!r})")
        amps = _frozen(amps)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).ravel()
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm)

    @classmethod
    def basis(cls, dim: int, index: int) -> "StateVector":
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        _check_dims(self.dim, other.dim)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix (checked on construction)."""

    entries: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.entries)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionError(f"density matrix must be square, got {rho.shape}")
        if rho.shape[0] not in ALLOWED_DIMS:
            raise DimensionError(f"unsupported dimension {rho.shape[0]}")
        if not np.all(np.isfinite(rho)):
            raise ValueError("density matrix entries must be finite")
        if np.max(np.abs(rho - rho.conj().T)) > ALGEBRA_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(rho)
        if abs(tr - 1.0) > ALGEBRA_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        min_eig = float(np.linalg.eigvalsh(rho).min())
        if min_eig < -PSD_TOL:
            raise ValueError(f"density matrix not positive semidefinite (min eigenvalue {min_eig:.3e})")
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_state(cls, psi: StateVector) -> "DensityMatrix":
        return psi.projector()

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries).min())

    def __getitem__(self, idx):
        return self.entries[idx]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise DimensionError(f"dimension mismatch: {a} vs {b}")


def as_density(state) -> DensityMatrix:
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, StateVector):
        return state.projector()
    raise TypeError(f"expected StateVector or DensityMatrix, got {type(state).__name__}")


# --- standard helpers -------------------------------------------------------

def tensor(a, b):
    """Kronecker product, signal (``a``) slot first.

    Two kets give a ket; if either argument is a density matrix the result is one.
    """
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes))
    return DensityMatrix(np.kron(as_density(a).entries, as_density(b).entries))


def check_unitary(u: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionError(f"unitary must be square, got {u.shape}")
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > tol:
        raise ValueError("matrix is not unitary")
    return u


def apply_unitary(u, state):
    u = check_unitary(u)
    if isinstance(state, StateVector):
        _check_dims(u.shape[0], state.dim)
        return StateVector.normalized(u @ state.amplitudes)
    rho = as_density(state)
    _check_dims(u.shape[0], rho.dim)
    out = u @ rho.entries @ u.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T))


def partial_trace(state, keep: str = "signal") -> DensityMatrix:
    """Reduce a two-qubit state to one slot.  ``keep`` is ``"signal"`` or ``"idler"``."""
    rho = as_density(state)
    if rho.dim != 4:
        raise DimensionError("partial_trace expects a two-qubit (dim 4) state")
    r = rho.entries.reshape(2, 2, 2, 2)
    if keep == "signal":
        red = np.einsum("ijkj->ik", r)
    elif keep == "idler":
        red = np.einsum("jijk->ik", r)
    else:
        raise ValueError(f"keep must be 'signal' or 'idler', not {keep!r}")
    return DensityMatrix(red)


# --- physics ----------------------------------------------------------------

def bell_state(eta: float) -> StateVector:
    """(|HH> + e^{i eta}|VV>)/sqrt(2)."""
    if not np.isfinite(eta):
        raise ValueError("eta must be finite")
    s = 1 / np.sqrt(2)
    return StateVector(np.array([s, 0, 0, s * np.exp(1j * eta)]))


@dataclass(frozen=True)
class WriteProcessParams:
    """Perturbative coupling and path phases of the write step.

    ``chi`` is limited to 0.5; a warning is issued above 0.1 because the
    single-excitation truncation stops being a good description there.
    """

    chi: float
    eta_s: float = 0.0
    eta_i: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.chi <= 0.5):
            raise ValueError(f"chi must lie in [0, 0.5], got {self.chi}")
        if self.chi > 0.1:
            warnings.warn(f"chi={self.chi} is outside the perturbative regime (> 0.1)", stacklevel=3)


# logical basis of the truncated write-emission state
VACUUM, LEFT_EXCITATION, RIGHT_EXCITATION = 0, 1, 2


def write_emission_state(params: WriteProcessParams) -> StateVector:
    """Vacuum plus the O(chi) branch with one excitation in L or R, post-normalized.

    Basis: (vacuum, |L_a>|1_p>_L, |R_a>|1_p>_R).
    """
    chi = params.chi
    return StateVector.normalized([1.0, chi, chi])


def excitation_conditional_state(psi: StateVector) -> StateVector:
    """Project a write-emission state onto the one-excitation sector, as a (L, R) qubit."""
    if psi.dim != 3:
        raise DimensionError("expected a 3-level write-emission state")
    branch = psi.amplitudes[1:]
    if np.linalg.norm(branch) == 0:
        raise ValueError("state has no single-excitation component")
    return StateVector.normalized(branch)


def fidelity(rho: DensityMatrix, psi: StateVector) -> float:
    """<psi|rho|psi>; snapped into [0, 1] only when within 1e-10 of an edge."""
    rho = as_density(rho)
    _check_dims(rho.dim, psi.dim)
    f = complex(np.vdot(psi.amplitudes, rho.entries @ psi.amplitudes))
    value = f.real
    if -PSD_TOL <= value < 0.0:
        value = 0.0
    elif 1.0 < value <= 1.0 + PSD_TOL:
        value = 1.0
    return value


@dataclass(frozen=True)
class EnsembleMode:
    """Write-field weights over the atoms of the left and right samples."""

    weights_left: np.ndarray
    weights_right: np.ndarray

    def __post_init__(self):
        for name in ("weights_left", "weights_right"):
            w = _frozen(np.ravel(getattr(self, name)))
            if w.size == 0:
                raise ValueError(f"{name} is empty")
            norm = float(np.vdot(w, w).real)
            if norm == 0.0:
                raise ValueError(f"{name} has zero norm")
            if abs(norm - 1.0) > ALGEBRA_TOL:
                raise ValueError(f"{name} not normalized (sum |g|^2 = {norm!r})")
            object.__setattr__(self, name, w)

    @classmethod
    def from_weights(cls, left, right) -> "EnsembleMode":
        """Renormalize arbitrary (nonzero) weight lists."""
        out = []
        for w in (left, right):
            w = np.asarray(w, dtype=complex).ravel()
            n = np.linalg.norm(w)
            if n == 0:
                raise ValueError("zero-norm weight list")
            out.append(w / n)
        return cls(*out)

    @classmethod
    def uniform(cls, n_left: int, n_right: int) -> "EnsembleMode":
        return cls(np.full(n_left, 1 / np.sqrt(n_left)), np.full(n_right, 1 / np.sqrt(n_right)))

    @property
    def n_left(self) -> int:
        return self.weights_left.size

    @property
    def n_right(self) -> int:
        return self.weights_right.size


@dataclass(frozen=True)
class EffectiveStates:
    """|L_a> and |R_a> written out in the single-spin-flip basis of all N_L + N_R atoms."""

    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)

    def inner(self, a: str, b: str) -> complex:
        vecs = {"L": self.left, "R": self.right}
        return complex(np.vdot(vecs[a], vecs[b]))

    def gram(self) -> np.ndarray:
        basis = np.stack([self.left, self.right])
        return basis.conj() @ basis.T


def effective_states(mode: EnsembleMode) -> EffectiveStates:
    # basis vector k means "atom k flipped to |b>, all others in |a>"
    n = mode.n_left + mode.n_right
    left = np.zeros(n, dtype=complex)
    right = np.zeros(n, dtype=complex)
    left[: mode.n_left] = mode.weights_left
    right[mode.n_left:] = mode.weights_right
    return EffectiveStates(_frozen(left), _frozen(right))
