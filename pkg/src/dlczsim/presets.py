"""Published operating point of the node and models fitted to its correlation data.

The fitted models are frozen below; ``calibrate_reference`` and
``fit_coherence_visibility`` regenerate them (the test suite checks that
they agree).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .analysis import model_fidelity, model_tables
from .memory import DecayShape, DecoherenceModel
from .simkernel import ImperfectionModel, PulseSchedule, time_slots
from .tia import CoincidenceWindow, reference_window

# efficiencies and rates of the experiment
ALPHA = 0.05
BETA = 0.04
XI = 0.03
N_S = 1.4e-2
REP_RATE = 4.7e5

# conditional probabilities at maximum correlation, delta_t = 100 ns
REFERENCE_COUNTS = {"0": [[92, 8], [12, 88]], "45": [[75, 25], [19, 81]]}
REFERENCE_ERRORS = {"0": [[0.02, 0.02], [0.03, 0.03]], "45": [[0.02, 0.02], [0.02, 0.02]]}

# reported fidelities (value, one-sigma) per delta_t
REPORTED = {
    100: {"F_0": (0.88, 0.03), "F_45": (0.75, 0.02), "F_si": (0.67, 0.02)},
    200: {"F_0": (0.79, 0.04), "F_45": (0.74, 0.04), "F_si": (0.63, 0.03)},
}

OPERATIONAL_TIME_NS = 150.0

# symmetric fit targets: basis-0 population visibility and 45-degree conditional
FIT_TARGETS = {100: {"v_pop": 0.80, "p45": 0.78}, 200: {"v_pop": 0.58, "p45": 0.74}}

# output of calibrate_reference() / fit_coherence_visibility(), frozen
DEFAULT_TAU_NS = 140.83906014
V_COH = {100: 0.69090317, 200: 0.99317384}


def window_delay_distribution(sched: PulseSchedule, window: CoincidenceWindow) -> tuple[np.ndarray, np.ndarray]:
    """Exact storage-time distribution of pairs accepted by ``window``.

    Signal and idler times are independent and uniform over the 2 ns slots
    of their gates, so the delay law is the discrete convolution of the two.
    """
    ts = time_slots(sched.signal_window)
    ti = time_slots(sched.idler_window)
    delays = (ti[None, :] - ts[:, None]).ravel()
    keep = window.contains(delays)
    values, counts = np.unique(delays[keep], return_counts=True)
    return values.astype(float), counts / counts.sum()


def window_tables(m: ImperfectionModel, sched: PulseSchedule, window: CoincidenceWindow):
    d, w = window_delay_distribution(sched, window)
    return model_tables(m, d, w)


def _p45(m, sched, window) -> float:
    _, t45 = window_tables(m, sched, window)
    return float(np.mean(t45.p_same()))


def fit_coherence_visibility(m: ImperfectionModel, sched: PulseSchedule, window: CoincidenceWindow, p45: float) -> float:
    """V_c that makes the window-averaged 45-degree conditional equal ``p45``."""
    lo, hi = _p45(m.replace(v_coh=0.0), sched, window), _p45(m.replace(v_coh=1.0), sched, window)
    if not lo <= p45 <= hi:
        raise ValueError(f"target {p45} unreachable with V_c in [0, 1] (range {lo:.4f}..{hi:.4f})")
    # p45 is affine in V_c
    return (p45 - lo) / (hi - lo)


def calibrate_reference(
    v_pop: float = FIT_TARGETS[100]["v_pop"],
    p45: float = FIT_TARGETS[100]["p45"],
    *,
    at_ns: float = OPERATIONAL_TIME_NS,
    target_f: float = 0.5,
    shape: DecayShape = DecayShape.GAUSSIAN,
) -> tuple[float, float]:
    """Jointly fix (tau, V_c) for the delta_t = 100 ns data.

    V_c reproduces the 45-degree conditional over the (0, 80) ns window,
    and tau puts the reported F_si of a pair stored ``at_ns`` at
    ``target_f``.
    """
    sched = PulseSchedule(delta_t=100.0)
    window = reference_window(100)

    def model_for(tau):
        base = ImperfectionModel.noiseless(v_pop=v_pop, decoherence=DecoherenceModel(tau, shape))
        return base.replace(v_coh=fit_coherence_visibility(base, sched, window, p45))

    def gap(tau):
        return model_fidelity(model_for(tau), at_ns) - target_f

    tau = brentq(gap, 100.0, 1000.0, xtol=1e-10)
    return tau, model_for(tau).v_coh


@dataclass(frozen=True)
class Efficiencies:
    alpha: float
    beta: float
    xi: float
    n_s: float


MEASURED_EFFICIENCIES = Efficiencies(ALPHA, BETA, XI, N_S)
# every excitation heralded and retrieved; conditionals are unaffected
UNIT_EFFICIENCIES = Efficiencies(0.5, 1.0, 1.0, 1.0)


def default_decoherence() -> DecoherenceModel:
    return DecoherenceModel(DEFAULT_TAU_NS, DecayShape.GAUSSIAN)


def fitted_model(delta_t: float = 100, efficiencies: Efficiencies = MEASURED_EFFICIENCIES, **changes) -> ImperfectionModel:
    """Model whose window-averaged conditionals match the data at ``delta_t``."""
    key = int(round(delta_t))
    if key not in FIT_TARGETS:
        raise ValueError(f"no fitted model for delta_t={delta_t} ns (have {sorted(FIT_TARGETS)})")
    m = ImperfectionModel(
        v_pop=FIT_TARGETS[key]["v_pop"],
        v_coh=V_COH[key],
        background=0.0,
        alpha=efficiencies.alpha,
        beta=efficiencies.beta,
        xi=efficiencies.xi,
        n_s=efficiencies.n_s,
        decoherence=default_decoherence(),
    )
    return m.replace(**changes)


def reference_schedule(delta_t: float = 100) -> PulseSchedule:
    return PulseSchedule(rep_rate=REP_RATE, delta_t=float(delta_t))
