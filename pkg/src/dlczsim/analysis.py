"""Estimators: correlation tables, fringe fits, two-basis reconstruction, rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import PhysicsError
from .optics import AnalyzerSetting
from .qstate import PSD_TOL, DensityMatrix, as_density
from .simkernel import Channel, ImperfectionModel, PulseSchedule, born_conditional
from .tia import CoincidenceList, CoincidenceWindow, split_into_quarters

log = logging.getLogger(__name__)

STATE_TRANSFER_LIMIT = 2 / 3
ENTANGLEMENT_LIMIT = 1 / 2

BASIS_LABELS = {"0": ("H", "V"), "45": ("+", "-")}


def max_correlation_settings(basis: str, eta: float = 0.0) -> dict[str, tuple[AnalyzerSetting, AnalyzerSetting]]:
    """Signal/idler analyzer pairs for the two signal outcomes of a basis.

    Basis "0" measures both photons in H/V.  Basis "45" sets the idler to
    theta_i = pi/4, phi_i = 0 and the signal to theta_s = pi/4 (or 3 pi/4)
    with phi_s = -eta so the path phase is compensated.
    """
    if basis == "0":
        idler = AnalyzerSetting(0.0, 0.0)
        return {"H": (AnalyzerSetting(0.0, 0.0), idler), "V": (AnalyzerSetting(np.pi / 2, 0.0), idler)}
    if basis == "45":
        idler = AnalyzerSetting(np.pi / 4, 0.0)
        return {
            "+": (AnalyzerSetting(np.pi / 4, -eta), idler),
            "-": (AnalyzerSetting(3 * np.pi / 4, -eta), idler),
        }
    raise ValueError(f"unknown basis {basis!r}; expected '0' or '45'")


# --- correlation tables ------------------------------------------------------

@dataclass(frozen=True)
class CorrelationTable:
    """Conditional probabilities P(idler | signal); rows are signal outcomes.

    ``counts`` is ``None`` for tables built from exact probabilities.  A row
    with no counts is flagged in ``empty_rows`` and carries NaN.
    """

    basis_label: str
    probs: np.ndarray
    errors: np.ndarray
    counts: Optional[np.ndarray] = None
    empty_rows: tuple[int, ...] = ()

    @classmethod
    def from_counts(cls, counts, basis_label: str = "0") -> "CorrelationTable":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (2, 2) or np.any(counts < 0):
            raise ValueError("counts must be a 2x2 array of non-negative integers")
        probs = np.full((2, 2), np.nan)
        errors = np.full((2, 2), np.nan)
        empty = []
        for s in range(2):
            n = int(counts[s].sum())
            if n == 0:
                empty.append(s)
                continue
            row = [Fraction(int(c), n) for c in counts[s]]
            assert sum(row) == 1
            probs[s] = [float(p) for p in row]
            errors[s] = np.sqrt(probs[s] * (1 - probs[s]) / n)
        if empty:
            log.warning("correlation table %s: signal row(s) %s have no counts", basis_label, empty)
        return cls(basis_label, _ro(probs), _ro(errors), _ro(counts), tuple(empty))

    @classmethod
    def from_probabilities(cls, probs, basis_label: str = "0") -> "CorrelationTable":
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (2, 2) or np.any(np.abs(probs.sum(axis=1) - 1) > 1e-12):
            raise ValueError("probability rows must sum to 1")
        return cls(basis_label, _ro(probs), _ro(np.zeros((2, 2))))

    @property
    def labels(self) -> tuple[str, str]:
        return BASIS_LABELS.get(self.basis_label, ("0", "1"))

    @property
    def row_totals(self) -> Optional[np.ndarray]:
        return None if self.counts is None else self.counts.sum(axis=1)

    def p_same(self) -> tuple[float, float]:
        """(P(first|first), P(second|second)), e.g. (P(H|H), P(V|V))."""
        return float(self.probs[0, 0]), float(self.probs[1, 1])

    def as_dict(self) -> dict:
        a, b = self.labels
        out = {
            "basis": self.basis_label,
            "probabilities": {
                f"P({a}|{a})": _num(self.probs[0, 0]),
                f"P({b}|{a})": _num(self.probs[0, 1]),
                f"P({b}|{b})": _num(self.probs[1, 1]),
                f"P({a}|{b})": _num(self.probs[1, 0]),
            },
            "errors": {
                f"P({a}|{a})": _num(self.errors[0, 0]),
                f"P({b}|{a})": _num(self.errors[0, 1]),
                f"P({b}|{b})": _num(self.errors[1, 1]),
                f"P({a}|{b})": _num(self.errors[1, 0]),
            },
            "counts": None if self.counts is None else self.counts.tolist(),
            "empty_rows": list(self.empty_rows),
        }
        return out


def _ro(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


def _num(x) -> Optional[float]:
    x = float(x)
    return None if np.isnan(x) else x


def conditional_probabilities(
    runs: Sequence[CoincidenceList], basis_label: str = "0", window: Optional[CoincidenceWindow] = None
) -> CorrelationTable:
    """Table from two coincidence lists, one per signal outcome.

    ``runs[0]`` was taken with the signal analyzer on the first outcome of
    the basis (H or +), ``runs[1]`` on the second.  D2 is the idler's first
    outcome and D3 the second.
    """
    if len(runs) != 2:
        raise ValueError("need exactly two runs (one per signal outcome)")
    counts = np.zeros((2, 2), dtype=np.int64)
    for s, run in enumerate(runs):
        if window is not None:
            run = run.in_window(window)
        counts[s] = [run.count(Channel.D2), run.count(Channel.D3)]
    return CorrelationTable.from_counts(counts, basis_label)


def state_fidelity_from_table(table: CorrelationTable) -> float:
    """Lower of the two same-outcome conditionals."""
    return float(min(table.p_same()))


# --- fringe fit ---------------------------------------------------------------

@dataclass(frozen=True)
class FringeFit:
    visibility: float
    residual: float
    stderr: float
    raw_visibility: float


def fringe_model(theta, visibility: float, offset: float = 0.0):
    return (1 + visibility * np.cos(2 * (np.asarray(theta) - offset))) / 2


def fringe_fit(theta_values, p_values, weights=None, *, offset: float = 0.0, n_heralds=None) -> FringeFit:
    """Least squares for p(theta) = (1 + V cos 2(theta - offset)) / 2 with V the only parameter.

    With ``n_heralds`` (per point) the standard error is the binomial one
    evaluated on the fitted curve; otherwise it comes from the residuals.
    ``residual`` is the weighted RMS deviation.
    """
    theta = np.asarray(theta_values, dtype=float)
    p = np.asarray(p_values, dtype=float)
    if theta.shape != p.shape or theta.size < 3:
        raise ValueError("need at least 3 (theta, p) points")
    if np.ptp(theta) < np.pi / 2 - 1e-9:
        raise ValueError("angles must span at least half a fringe period (pi/2)")
    w = np.ones_like(p) if weights is None else np.asarray(weights, dtype=float)
    x = np.cos(2 * (theta - offset))
    y = p - 0.5
    sxx = float(np.sum(w * x * x))
    if sxx <= 1e-12:
        raise ValueError("degenerate fringe data")
    v_raw = 2 * float(np.sum(w * x * y)) / sxx
    v = float(np.clip(v_raw, 0.0, 1.0))
    resid = p - fringe_model(theta, v, offset)
    rms = float(np.sqrt(np.sum(w * resid**2) / np.sum(w)))
    if n_heralds is not None:
        n = np.broadcast_to(np.asarray(n_heralds, dtype=float), p.shape)
        p_fit = fringe_model(theta, v, offset)
        var_p = p_fit * (1 - p_fit) / n
        stderr = 2 * float(np.sqrt(np.sum((w * x) ** 2 * var_p))) / sxx
    else:
        dof = max(p.size - 1, 1)
        s2 = float(np.sum(w * (p - fringe_model(theta, v_raw, offset)) ** 2)) / dof
        stderr = 2 * float(np.sqrt(s2 * np.sum((w * x) ** 2))) / sxx
    return FringeFit(v, rms, stderr, v_raw)


# --- reconstruction ----------------------------------------------------------

@dataclass(frozen=True)
class Reconstruction:
    rho: DensityMatrix
    fringe: float
    c14: float
    c23: float
    repaired: bool
    signal_imbalance: float


def _project_psd(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real


def _imbalance(table: CorrelationTable) -> float:
    tot = table.row_totals
    if tot is None or tot.sum() == 0:
        return 0.0
    return float(abs(tot[0] - tot[1]) / tot.sum())


def reconstruct(table_0: CorrelationTable, table_45: CorrelationTable, *, optimistic: bool = False) -> Reconstruction:
    """Two-basis linear inversion with real HH-VV and HV-VH coherences.

    Populations are the basis-0 joint frequencies (signal outcomes taken as
    equiprobable).  The 45-degree fringe amplitude C = c14 + c23 is split
    conservatively: c23 takes as much as sqrt(rho22 rho33) allows and the
    rest goes to c14.  ``optimistic`` puts all of C on c14.  A non-PSD
    result is repaired by eigenvalue clipping plus trace renormalization.
    """
    for t in (table_0, table_45):
        if t.empty_rows or np.any(np.isnan(t.probs)):
            raise ValueError(f"table {t.basis_label} has empty rows; cannot reconstruct")
    p = table_0.probs
    diag = np.array([p[0, 0], p[0, 1], p[1, 0], p[1, 1]]) / 2
    pp, mm = table_45.p_same()
    c = (pp + mm) / 2 - 0.5
    b14 = float(np.sqrt(diag[0] * diag[3]))
    b23 = float(np.sqrt(diag[1] * diag[2]))
    if abs(c) > b14 + b23 + 1e-12:
        raise PhysicsError(f"inconsistent tables: fringe amplitude {c:.4f} exceeds the bound {b14 + b23:.4f}")
    if optimistic:
        c23 = 0.0
    else:
        c23 = float(np.clip(c, -b23, b23))
    c14 = c - c23
    m = np.diag(diag).astype(complex)
    m[0, 3] = m[3, 0] = c14
    m[1, 2] = m[2, 1] = c23
    repaired = False
    if np.linalg.eigvalsh(m).min() < -PSD_TOL:
        log.warning("reconstructed matrix not PSD (min eigenvalue %.3g); projecting", np.linalg.eigvalsh(m).min())
        m = _project_psd(m)
        repaired = True
    imbalance = max(_imbalance(table_0), _imbalance(table_45))
    return Reconstruction(DensityMatrix(m), float(c), float(c14), float(c23), repaired, imbalance)


def reconstruct_density(table_0: CorrelationTable, table_45: CorrelationTable, *, optimistic: bool = False) -> DensityMatrix:
    return reconstruct(table_0, table_45, optimistic=optimistic).rho


def entanglement_fidelity_bound(rho) -> float:
    """max over eta of <Psi_M(eta)|rho|Psi_M(eta)> = (rho11 + rho44)/2 + |rho14|."""
    r = as_density(rho).entries
    if r.shape != (4, 4):
        raise ValueError("expected a two-photon (4x4) state")
    return float((r[0, 0].real + r[3, 3].real) / 2 + abs(r[0, 3]))


@dataclass(frozen=True)
class BoundVerdict:
    exceeds: bool
    margin: float
    limit: float


def classical_bound_check(f: float, kind: str) -> BoundVerdict:
    """Compare a fidelity with 2/3 (``state_transfer``) or 1/2 (``entanglement``)."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {f}")
    limits = {"state_transfer": STATE_TRANSFER_LIMIT, "entanglement": ENTANGLEMENT_LIMIT}
    if kind not in limits:
        raise ValueError(f"kind must be one of {sorted(limits)}")
    limit = limits[kind]
    return BoundVerdict(f > limit, max(f - limit, 0.0), limit)


# --- rates -----------------------------------------------------------------------

@dataclass(frozen=True)
class RateReport:
    r_s: float
    r_si: float
    zeta: float
    n_s_inferred: float
    r_2: float

    def as_dict(self) -> dict:
        return {"r_s": self.r_s, "r_si": self.r_si, "zeta": self.zeta, "n_s_inferred": self.n_s_inferred, "r_2": self.r_2}


def infer_n_s(r_s: float, alpha: float, rep_rate: float) -> float:
    return r_s / (alpha * rep_rate)


def rates(m: ImperfectionModel, sched: PulseSchedule) -> RateReport:
    """Heralding, coincidence and two-node rates of the node."""
    r_s = m.alpha * m.n_s * sched.rep_rate
    zeta = m.beta * m.xi
    r_si = zeta * r_s
    r_2 = (m.beta * m.xi * m.alpha * m.n_s) ** 2 * sched.rep_rate
    n_s = infer_n_s(r_s, m.alpha, sched.rep_rate) if m.alpha > 0 else 0.0
    return RateReport(r_s, r_si, zeta, n_s, r_2)


# --- exact tables from the model ---------------------------------------------------

def model_tables(m: ImperfectionModel, delays=0.0, weights=None) -> tuple[CorrelationTable, CorrelationTable]:
    """Born-rule tables at the maximum-correlation settings.

    ``delays``/``weights`` describe the storage-time distribution of the
    accepted pairs; probabilities are averaged over it.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    w = np.ones_like(delays) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    out = []
    for basis in ("0", "45"):
        rows = []
        for settings in max_correlation_settings(basis, m.eta).values():
            p = float(np.sum(w * born_conditional(m, settings, delays)))
            rows.append([p, 1 - p])
        out.append(CorrelationTable.from_probabilities(rows, basis))
    return out[0], out[1]


def model_fidelity(m: ImperfectionModel, delay_ns: float, *, optimistic: bool = False) -> float:
    """F_si that the two-basis pipeline reports for pairs stored ``delay_ns``."""
    t0, t45 = model_tables(m, delay_ns)
    return entanglement_fidelity_bound(reconstruct_density(t0, t45, optimistic=optimistic))


# --- time-binned fidelity -------------------------------------------------------

@dataclass(frozen=True)
class BasisRuns:
    """Coincidences from the four maximum-correlation runs."""

    h: CoincidenceList
    v: CoincidenceList
    plus: CoincidenceList
    minus: CoincidenceList

    def tables(self, window: Optional[CoincidenceWindow] = None) -> tuple[CorrelationTable, CorrelationTable]:
        return (
            conditional_probabilities([self.h, self.v], "0", window),
            conditional_probabilities([self.plus, self.minus], "45", window),
        )


@dataclass(frozen=True)
class FidelityBin:
    window: CoincidenceWindow
    f_si: Optional[float]
    error: Optional[float]
    n_pairs: int
    empty: bool = False
    below_threshold: bool = False
    mean_delay: Optional[float] = None


def _fidelity_from_probs(q, optimistic: bool) -> float:
    """F_si as a function of (P(H|H), P(V|V), P(+|+), P(-|-))."""
    q = np.clip(q, 0.0, 1.0)
    t0 = CorrelationTable.from_probabilities([[q[0], 1 - q[0]], [1 - q[1], q[1]]], "0")
    t45 = CorrelationTable.from_probabilities([[q[2], 1 - q[2]], [1 - q[3], q[3]]], "45")
    r = reconstruct(t0, t45, optimistic=optimistic)
    return entanglement_fidelity_bound(r.rho)


def _partial(q: np.ndarray, k: int, optimistic: bool, h: float = 1e-6) -> float:
    # central difference, one-sided next to the physical boundary
    dq = np.zeros(4)
    dq[k] = h
    f0 = _fidelity_from_probs(q, optimistic)
    try:
        return (_fidelity_from_probs(q + dq, optimistic) - _fidelity_from_probs(q - dq, optimistic)) / (2 * h)
    except PhysicsError:
        pass
    for sign in (-1.0, 1.0):
        try:
            return sign * (_fidelity_from_probs(q + sign * dq, optimistic) - f0) / h
        except PhysicsError:
            continue
    return 0.0


def fidelity_with_error(
    table_0: CorrelationTable,
    table_45: CorrelationTable,
    *,
    optimistic: bool = False,
    method: str = "linear",
    n_boot: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """F_si and its one-sigma error from the binomial count errors."""
    q = np.array([*table_0.p_same(), *table_45.p_same()])
    n = np.concatenate([table_0.row_totals, table_45.row_totals]).astype(float)
    f = _fidelity_from_probs(q, optimistic)
    if method == "linear":
        var = 0.0
        for k in range(4):
            if q[k] in (0.0, 1.0):
                continue
            var += _partial(q, k, optimistic) ** 2 * q[k] * (1 - q[k]) / n[k]
        return f, float(np.sqrt(var))
    if method == "bootstrap":
        rng = np.random.default_rng(seed)
        samples = rng.binomial(n.astype(np.int64), q, size=(n_boot, 4)) / n
        fs = []
        for s in samples:
            try:
                fs.append(_fidelity_from_probs(s, optimistic))
            except PhysicsError:
                continue
        return f, float(np.std(fs, ddof=1))
    raise ValueError(f"unknown error method {method!r}")


def time_binned_fidelity(
    runs: BasisRuns,
    window: CoincidenceWindow,
    tables_builder: Optional[Callable[[CoincidenceWindow], tuple[CorrelationTable, CorrelationTable]]] = None,
    *,
    optimistic: bool = False,
    method: str = "linear",
    seed: int = 0,
) -> list[FidelityBin]:
    """F_si in each quarter of ``window``."""
    build = tables_builder or runs.tables
    out = []
    for q in split_into_quarters(window):
        t0, t45 = build(q)
        n_pairs = int(t0.counts.sum() + t45.counts.sum())
        delays = np.concatenate([r.in_window(q).delay for r in (runs.h, runs.v, runs.plus, runs.minus)])
        mean_delay = float(delays.mean()) if delays.size else None
        if t0.empty_rows or t45.empty_rows:
            out.append(FidelityBin(q, None, None, n_pairs, empty=True, mean_delay=mean_delay))
            continue
        try:
            f, err = fidelity_with_error(t0, t45, optimistic=optimistic, method=method, seed=seed)
        except PhysicsError as exc:
            log.warning("quarter %s: %s", q, exc)
            out.append(FidelityBin(q, None, None, n_pairs, empty=True, mean_delay=mean_delay))
            continue
        out.append(FidelityBin(q, f, err, n_pairs, below_threshold=f - err <= ENTANGLEMENT_LIMIT, mean_delay=mean_delay))
    return out
