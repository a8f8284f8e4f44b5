"""Monte Carlo trial engine and the analytic joint-state model it samples from.

Trial-local time
----------------
Every trial has its own clock.  ``t = 0`` is the opening of the signal gate;
the write pulse is centered in that gate and the read pulse starts
``delta_t`` ns after the write pulse starts.  The idler gate is centered on
the read pulse.  All click times are multiples of 2 ns.

Random numbers
--------------
Trial ``i`` of an experiment gets ``seed_i``, the ``i``-th output of a
SplitMix64 stream seeded with the master seed.  Inside a trial, draw ``k``
is the ``k``-th output of SplitMix64 seeded with ``seed_i``, mapped to
``[0, 1)`` with 53 bits.  Because every draw is a pure function of
``(master_seed, i, k)``, trials can be generated in any order or in
parallel and still yield identical streams.

Each trial consumes exactly ``N_DRAWS`` uniforms, in this order:

====  ===================================================================
 k    use
====  ===================================================================
 0    collective excitation created (``< n_s``)
 1    signal passes its analyzer (``< p_pass`` of the signal marginal)
 2    D1 registers the transmitted signal photon (``< 2 alpha``)
 3    D1 dark count in its gate
 4    excitation retrieved into the idler mode (``< xi``)
 5    idler survives transmission and detection (``< beta``)
 6    idler passes its analyzer, i.e. goes to D2 rather than D3
 7    D2 dark count
 8    D3 dark count
 9    signal photon arrival time within the signal gate
10    idler photon arrival time within the idler gate
11    D1 dark-count time
12    D2 dark-count time
13    D3 dark-count time
====  ===================================================================

``alpha`` is the D1 click probability per forward-scattered photon for an
unpolarized signal, so it already contains the analyzer's average pass
fraction of 1/2 (this is what makes ``R_s = alpha n_s R``).  A photon that
passes the analyzer is therefore registered with probability ``2 alpha``,
which requires ``alpha <= 1/2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import PhysicsError
from .memory import DecoherenceModel, ReadoutParams, decohere, prepare_from_signal, read_out
from .optics import AnalyzerSetting, analyzer_ket, analyzer_perp, measure_polarization
from .qstate import DensityMatrix

N_DRAWS = 14
TIME_RESOLUTION_NS = 2

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class Channel(enum.IntEnum):
    D1 = 1
    D2 = 2
    D3 = 3


# --- model ------------------------------------------------------------------

@dataclass(frozen=True)
class ImperfectionModel:
    """Visibilities, efficiencies and memory decay of one node.

    ``eta`` is the static interferometric phase eta_s + eta_i and
    ``dark_prob`` the dark-count probability per detector per gate.
    """

    v_pop: float = 1.0
    v_coh: float = 1.0
    background: float = 0.0
    alpha: float = 0.05
    beta: float = 0.04
    xi: float = 0.03
    n_s: float = 1.4e-2
    decoherence: DecoherenceModel = field(default_factory=DecoherenceModel.none)
    eta: float = 0.0
    dark_prob: float = 0.0

    def __post_init__(self):
        for name in ("v_pop", "v_coh", "background", "alpha", "beta", "xi", "n_s", "dark_prob"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise PhysicsError(f"{name}={v} lies outside [0, 1]")
        if not np.isfinite(self.eta):
            raise PhysicsError("eta must be finite")

    def replace(self, **changes) -> "ImperfectionModel":
        return replace(self, **changes)

    @classmethod
    def noiseless(cls, **changes) -> "ImperfectionModel":
        base = cls(v_pop=1.0, v_coh=1.0, background=0.0, alpha=0.5, beta=1.0, xi=1.0, n_s=1.0)
        return replace(base, **changes)


@dataclass(frozen=True)
class PulseSchedule:
    rep_rate: float = 4.7e5
    write_len: float = 140.0
    read_len: float = 115.0
    delta_t: float = 100.0
    signal_gate: float = 250.0
    idler_gate: float = 140.0

    def __post_init__(self):
        for name in ("rep_rate", "write_len", "read_len", "delta_t", "signal_gate", "idler_gate"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")

    def replace(self, **changes) -> "PulseSchedule":
        return replace(self, **changes)

    @property
    def write_start(self) -> float:
        return (self.signal_gate - self.write_len) / 2

    @property
    def read_start(self) -> float:
        return self.write_start + self.delta_t

    @property
    def signal_window(self) -> tuple[float, float]:
        return (0.0, self.signal_gate)

    @property
    def idler_window(self) -> tuple[float, float]:
        center = self.read_start + self.read_len / 2
        return (center - self.idler_gate / 2, center + self.idler_gate / 2)

    def gate_for(self, channel: Channel) -> tuple[float, float]:
        return self.signal_window if Channel(channel) is Channel.D1 else self.idler_window


def time_slots(window: tuple[float, float]) -> np.ndarray:
    """All 2 ns grid times inside the half-open window."""
    k0 = int(np.ceil(window[0] / TIME_RESOLUTION_NS))
    k1 = int(np.ceil(window[1] / TIME_RESOLUTION_NS))
    return TIME_RESOLUTION_NS * np.arange(k0, k1, dtype=np.int64)


def _draw_time(u: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    k0 = int(np.ceil(window[0] / TIME_RESOLUTION_NS))
    n = int(np.ceil(window[1] / TIME_RESOLUTION_NS)) - k0
    if n <= 0:
        raise ValueError(f"window {window} holds no 2 ns slot")
    return TIME_RESOLUTION_NS * (k0 + np.minimum((u * n).astype(np.int64), n - 1))


# --- events -----------------------------------------------------------------

@dataclass(frozen=True)
class ClickRecord:
    trial_index: int
    channel: Channel
    time_ns: int


class EventStream(Sequence[ClickRecord]):
    """Array-backed, trial-ordered sequence of ``ClickRecord``."""

    __slots__ = ("trial", "channel", "time")

    def __init__(self, trial=(), channel=(), time=(), *, presorted: bool = False):
        trial = np.array(trial, dtype=np.int64).ravel()
        channel = np.array(channel, dtype=np.uint8).ravel()
        time = np.array(time, dtype=np.int64).ravel()
        if not (trial.size == channel.size == time.size):
            raise ValueError("trial, channel and time arrays differ in length")
        if not presorted and trial.size:
            order = np.lexsort((time, channel, trial))
            trial, channel, time = trial[order], channel[order], time[order]
        for a in (trial, channel, time):
            a.setflags(write=False)
        self.trial, self.channel, self.time = trial, channel, time

    @classmethod
    def from_records(cls, records) -> "EventStream":
        records = list(records)
        return cls([r.trial_index for r in records], [int(r.channel) for r in records], [r.time_ns for r in records])

    @classmethod
    def concatenate(cls, streams) -> "EventStream":
        streams = list(streams)
        if not streams:
            return cls()
        return cls(
            np.concatenate([s.trial for s in streams]),
            np.concatenate([s.channel for s in streams]),
            np.concatenate([s.time for s in streams]),
        )

    def __len__(self) -> int:
        return self.trial.size

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return EventStream(self.trial[idx], self.channel[idx], self.time[idx], presorted=True)
        return ClickRecord(int(self.trial[idx]), Channel(int(self.channel[idx])), int(self.time[idx]))

    def __iter__(self) -> Iterator[ClickRecord]:
        for t, c, tm in zip(self.trial.tolist(), self.channel.tolist(), self.time.tolist()):
            yield ClickRecord(t, Channel(c), tm)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            np.array_equal(self.trial, other.trial)
            and np.array_equal(self.channel, other.channel)
            and np.array_equal(self.time, other.time)
        )

    def __repr__(self) -> str:
        return f"EventStream({len(self)} clicks)"

    def select(self, mask: np.ndarray) -> "EventStream":
        return EventStream(self.trial[mask], self.channel[mask], self.time[mask], presorted=True)

    def counts(self) -> dict[Channel, int]:
        return {ch: int(np.count_nonzero(self.channel == ch)) for ch in Channel}


# --- analytic joint state -----------------------------------------------------

def _joint_entries(m: ImperfectionModel, eta: float, delays) -> np.ndarray:
    """Stack of 4x4 matrices, one per delay (ns)."""
    d = np.atleast_1d(m.decoherence.factor(np.asarray(delays, dtype=float)))
    vp, b = m.v_pop, m.background
    rho = np.zeros(d.shape + (4, 4), dtype=complex)
    rho[..., 0, 0] = rho[..., 3, 3] = (1 + vp) / 4
    rho[..., 1, 1] = rho[..., 2, 2] = (1 - vp) / 4
    coh = d * m.v_coh * (1 + vp) / 4
    rho[..., 0, 3] = coh * np.exp(-1j * eta)
    rho[..., 3, 0] = coh * np.exp(1j * eta)
    return (1 - b) * rho + b * np.eye(4) / 4


def noisy_joint_state(m: ImperfectionModel, eta: float | None = None, delay_ns: float = 0.0) -> DensityMatrix:
    """Signal-idler state after ``delay_ns`` of storage.

    (1 - b) rho_core + b I/4, where rho_core has populations (1 +- V_p)/4 and
    the single HH-VV coherence d(delay) V_c (1 + V_p)/4, phased so that the
    noiseless limit is the Bell state (|HH> + e^{i eta}|VV>)/sqrt(2).
    """
    if delay_ns < 0:
        raise ValueError("delay must be non-negative")
    eta = m.eta if eta is None else eta
    rho = _joint_entries(m, eta, [delay_ns])[0]
    try:
        return DensityMatrix(rho)
    except ValueError as exc:
        raise PhysicsError(str(exc)) from exc


def _signal_projection(rho: np.ndarray, ket: np.ndarray) -> np.ndarray:
    """Unnormalized idler state <ket|_s rho |ket>_s for a stack of joint states."""
    r = rho.reshape(rho.shape[:-2] + (2, 2, 2, 2))
    return np.einsum("j,...jikl,k->...il", ket.conj(), r, ket)


def idler_conditionals(m: ImperfectionModel, signal: AnalyzerSetting, delays, eta: float | None = None):
    """Signal pass probability and normalized idler states after a pass / a fail.

    Returns ``(p_signal_pass, sigma_pass, sigma_fail)`` with the two state
    stacks indexed like ``delays``.
    """
    eta = m.eta if eta is None else eta
    rho = _joint_entries(m, eta, delays)
    a = analyzer_ket(signal).amplitudes
    b = analyzer_perp(signal).amplitudes
    sp = _signal_projection(rho, a)
    sf = _signal_projection(rho, b)
    p = np.trace(sp, axis1=-2, axis2=-1).real
    sigma_pass = sp / p[..., None, None]
    sigma_fail = sf / (1 - p)[..., None, None]
    return float(p[0]), sigma_pass, sigma_fail


def born_conditional(m: ImperfectionModel, settings, delay_ns=0.0, eta: float | None = None):
    """P(idler passes its analyzer | signal passed its analyzer) from the joint state."""
    signal, idler = settings
    _, sp, _ = idler_conditionals(m, signal, np.atleast_1d(delay_ns), eta)
    a = analyzer_ket(idler).amplitudes
    p = np.einsum("i,...ij,j->...", a.conj(), sp, a).real
    return float(p[0]) if np.ndim(delay_ns) == 0 else p


def memory_path_conditional(m: ImperfectionModel, settings, delay_ns: float, eta_s: float = 0.0) -> float:
    """Same conditional probability computed through the atomic memory.

    Prepare the memory from the heralding signal, dephase it for
    ``delay_ns``, read it out, then apply the idler-side imperfection channel
    that corresponds to (V_p, V_c, b): populations mix with weights
    (1 +- V_p)/2, the coherence is scaled by V_c (1 + V_p)/2, and a fraction
    b is replaced by white noise.  The remaining phase eta - eta_s is
    assigned to the read-out (eta_i).
    """
    signal, idler = settings
    q = prepare_from_signal(signal, eta_s, 0.0)
    q = decohere(q, m.decoherence, delay_ns)
    sigma = read_out(q, ReadoutParams(xi=1.0, eta_i=m.eta - eta_s), 0.0)
    s = np.array(sigma.entries)
    vp, vc, b = m.v_pop, m.v_coh, m.background
    noisy = np.empty_like(s)
    noisy[0, 0] = (1 + vp) / 2 * s[0, 0] + (1 - vp) / 2 * s[1, 1]
    noisy[1, 1] = (1 - vp) / 2 * s[0, 0] + (1 + vp) / 2 * s[1, 1]
    noisy[0, 1] = vc * (1 + vp) / 2 * s[0, 1]
    noisy[1, 0] = vc * (1 + vp) / 2 * s[1, 0]
    noisy = (1 - b) * noisy + b * np.eye(2) / 2
    return measure_polarization(DensityMatrix(noisy), idler).p_pass


# --- random streams -----------------------------------------------------------

def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _stream(seed: np.ndarray, n: int) -> np.ndarray:
    """First ``n`` SplitMix64 outputs for every seed, shape (len(seed), n)."""
    with np.errstate(over="ignore"):
        k = np.arange(1, n + 1, dtype=np.uint64)
        return _mix64(seed[:, None] + k[None, :] * _GAMMA)


def split_seed(master_seed: int, indices) -> np.ndarray:
    """Per-trial seeds: the ``i``-th SplitMix64 output of the master stream."""
    master = np.uint64(int(master_seed) & _MASK64)
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(master + (idx + np.uint64(1)) * _GAMMA)


def uniforms(seeds, n: int = N_DRAWS) -> np.ndarray:
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    return (_stream(seeds, n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


# --- trials -----------------------------------------------------------------

def _check_simulable(m: ImperfectionModel) -> None:
    if m.alpha > 0.5:
        raise PhysicsError(
            f"alpha={m.alpha} exceeds 1/2; alpha includes the analyzer pass fraction of an unpolarized signal"
        )


def _simulate(m, sched, settings, trial_index: np.ndarray, seeds: np.ndarray) -> EventStream:
    _check_simulable(m)
    signal, idler = settings
    u = uniforms(seeds)

    sig_win, idl_win = sched.signal_window, sched.idler_window
    t_sig = _draw_time(u[:, 9], sig_win)
    t_idl = _draw_time(u[:, 10], idl_win)
    # an idler can only carry memory dephased for a non-negative time
    storage = np.maximum(t_idl - t_sig, 0)

    uniq, inv = np.unique(storage, return_inverse=True)
    p_s, sig_pass_states, sig_fail_states = idler_conditionals(m, signal, uniq)
    a = analyzer_ket(idler).amplitudes
    p_after_pass = np.einsum("i,...ij,j->...", a.conj(), sig_pass_states, a).real[inv]
    p_after_fail = np.einsum("i,...ij,j->...", a.conj(), sig_fail_states, a).real[inv]

    excited = u[:, 0] < m.n_s
    sig_pass = u[:, 1] < p_s
    d1_real = excited & sig_pass & (u[:, 2] < 2 * m.alpha)
    d1_dark = u[:, 3] < m.dark_prob
    arrives = excited & (u[:, 4] < m.xi) & (u[:, 5] < m.beta)
    p_idler = np.where(sig_pass, p_after_pass, p_after_fail)
    idler_pass = u[:, 6] < p_idler
    d2_real = arrives & idler_pass
    d3_real = arrives & ~idler_pass
    d2_dark = u[:, 7] < m.dark_prob
    d3_dark = u[:, 8] < m.dark_prob

    trials, chans, times = [], [], []
    for real, dark, t_real, u_dark, win, ch in (
        (d1_real, d1_dark, t_sig, u[:, 11], sig_win, Channel.D1),
        (d2_real, d2_dark, t_idl, u[:, 12], idl_win, Channel.D2),
        (d3_real, d3_dark, t_idl, u[:, 13], idl_win, Channel.D3),
    ):
        click = real | dark
        # one click per detector per gate; a registered photon sets the time
        t = np.where(real, t_real, _draw_time(u_dark, win))
        trials.append(trial_index[click])
        chans.append(np.full(int(click.sum()), int(ch), dtype=np.uint8))
        times.append(t[click])
    return EventStream(np.concatenate(trials), np.concatenate(chans), np.concatenate(times))


def run_trial(m: ImperfectionModel, sched: PulseSchedule, settings, seed: int, trial_index: int = 0) -> list[ClickRecord]:
    seeds = np.array([int(seed) & _MASK64], dtype=np.uint64)
    return list(_simulate(m, sched, settings, np.array([trial_index], dtype=np.int64), seeds))


def run_experiment(
    m: ImperfectionModel,
    sched: PulseSchedule,
    settings,
    n_trials: int,
    master_seed: int,
    *,
    first_trial: int = 0,
    chunk: int = 1 << 18,
) -> EventStream:
    """Concatenated ``run_trial`` output for trials ``first_trial .. first_trial + n_trials - 1``."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    parts = []
    for start in range(first_trial, first_trial + n_trials, chunk):
        stop = min(start + chunk, first_trial + n_trials)
        idx = np.arange(start, stop, dtype=np.int64)
        parts.append(_simulate(m, sched, settings, idx, split_seed(master_seed, idx)))
    return EventStream.concatenate(parts)
