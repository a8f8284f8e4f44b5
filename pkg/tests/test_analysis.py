import logging
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dlczsim.analysis import (
    ENTANGLEMENT_LIMIT,
    BasisRuns,
    CorrelationTable,
    classical_bound_check,
    conditional_probabilities,
    entanglement_fidelity_bound,
    fidelity_with_error,
    fringe_fit,
    fringe_model,
    infer_n_s,
    max_correlation_settings,
    model_fidelity,
    model_tables,
    rates,
    reconstruct,
    reconstruct_density,
    state_fidelity_from_table,
    time_binned_fidelity,
)
from dlczsim.errors import PhysicsError
from dlczsim.memory import DecoherenceModel
from dlczsim.presets import REFERENCE_COUNTS, window_tables
from dlczsim.qstate import DensityMatrix, bell_state
from dlczsim.simkernel import Channel, ImperfectionModel, PulseSchedule, noisy_joint_state, run_experiment
from dlczsim.tia import CoincidenceList, CoincidenceWindow, gate, match_coincidences, reference_window

from helpers import random_density

T0 = CorrelationTable.from_counts(REFERENCE_COUNTS["0"], "0")
T45 = CorrelationTable.from_counts(REFERENCE_COUNTS["45"], "45")
counts = st.integers(0, 10**6)


def pairs(n2, n3):
    n = n2 + n3
    ch = [int(Channel.D2)] * n2 + [int(Channel.D3)] * n3
    return CoincidenceList(np.arange(n), np.zeros(n), ch, np.full(n, 10))


# --- tables -------------------------------------------------------------------

def test_conditional_probabilities_examples():
    t = conditional_probabilities([pairs(92, 8), pairs(12, 88)], "0")
    np.testing.assert_array_equal(t.probs, [[0.92, 0.08], [0.12, 0.88]])
    t = conditional_probabilities([pairs(50, 50), pairs(50, 50)])
    np.testing.assert_array_equal(t.probs, np.full((2, 2), 0.5))
    t = conditional_probabilities([pairs(1000, 0), pairs(0, 1000)])
    np.testing.assert_array_equal(t.probs, np.eye(2))
    np.testing.assert_array_equal(t.errors, np.zeros((2, 2)))


def test_binomial_errors():
    t = CorrelationTable.from_counts([[92, 8], [12, 88]])
    assert t.errors[0, 0] == pytest.approx(np.sqrt(0.92 * 0.08 / 100))


def test_empty_row_flagged(caplog):
    with caplog.at_level(logging.WARNING):
        t = conditional_probabilities([pairs(3, 1), pairs(0, 0)], "45")
    assert t.empty_rows == (1,)
    assert np.all(np.isnan(t.probs[1]))
    assert "no counts" in caplog.text
    assert t.as_dict()["probabilities"]["P(-|-)"] is None
    with pytest.raises(ValueError):
        reconstruct(T0, t)


def test_window_applied():
    c = CoincidenceList([0, 1], [0, 0], [2, 3], [10, 90])
    t = conditional_probabilities([c, c], "0", CoincidenceWindow(0, 80))
    np.testing.assert_array_equal(t.counts, [[1, 0], [1, 0]])


@given(counts, counts, counts, counts)
def test_rows_sum_to_one(a, b, c, d):
    m = [[a, b], [c, d]]
    t = CorrelationTable.from_counts(m)
    for s in range(2):
        n = m[s][0] + m[s][1]
        if n == 0:
            assert s in t.empty_rows
            continue
        assert Fraction(m[s][0], n) + Fraction(m[s][1], n) == 1
        assert abs(t.probs[s].sum() - 1) <= 1e-12


def test_table_validation():
    with pytest.raises(ValueError):
        CorrelationTable.from_counts([[1, -1], [0, 1]])
    with pytest.raises(ValueError):
        CorrelationTable.from_probabilities([[0.5, 0.6], [0.5, 0.5]])


def test_state_fidelity_from_table():
    assert state_fidelity_from_table(T0) == 0.88
    assert state_fidelity_from_table(T45) == 0.75
    assert state_fidelity_from_table(CorrelationTable.from_counts([[5, 0], [0, 7]])) == 1.0


def test_max_correlation_settings():
    s = max_correlation_settings("45", eta=0.3)
    assert s["+"][0].theta == pytest.approx(np.pi / 4)
    assert s["+"][0].phi == pytest.approx(2 * np.pi - 0.3)
    with pytest.raises(ValueError):
        max_correlation_settings("90")


# --- fringe fit ---------------------------------------------------------------

def test_fringe_fit_examples():
    theta = np.arange(12) * np.pi / 12
    assert fringe_fit(theta, fringe_model(theta, 0.84)).visibility == pytest.approx(0.84, abs=1e-9)
    assert fringe_fit(theta, np.full(12, 0.5)).visibility == 0.0
    assert fringe_fit(theta, np.cos(theta) ** 2).visibility == pytest.approx(1.0, abs=1e-12)
    off = fringe_fit(theta, fringe_model(theta, 0.5, np.pi / 4), offset=np.pi / 4)
    assert off.visibility == pytest.approx(0.5, abs=1e-12)


def test_fringe_fit_errors():
    with pytest.raises(ValueError):
        fringe_fit([0, 0.1], [1, 1])
    with pytest.raises(ValueError):
        fringe_fit([0, 0.1, 0.2, 0.3], [1, 1, 1, 1])


@given(st.floats(0, 1), st.floats(0, np.pi), st.integers(3, 30))
def test_fringe_fit_exact_on_noiseless_data(v, offset, n):
    theta = np.linspace(0, np.pi, n, endpoint=False)
    fit = fringe_fit(theta, fringe_model(theta, v, offset), offset=offset)
    assert abs(fit.visibility - v) < 1e-9
    assert fit.residual < 1e-9


def test_fringe_fit_recovers_planted_visibility_mc():
    rng = np.random.default_rng(77)
    theta = np.arange(12) * np.pi / 12
    n = 10_000
    for v in (0.3, 0.9):
        p = rng.binomial(n, fringe_model(theta, v)) / n
        fit = fringe_fit(theta, p, n_heralds=n)
        assert abs(fit.visibility - v) < 3 * fit.stderr


# --- reconstruction -----------------------------------------------------------

def test_reconstruct_reference_tables():
    r = reconstruct(T0, T45)
    np.testing.assert_allclose(np.diag(r.rho.entries).real, [0.46, 0.04, 0.06, 0.44], atol=1e-15)
    assert r.fringe == pytest.approx(0.28, abs=1e-12)
    assert r.c23 == pytest.approx(np.sqrt(0.04 * 0.06), abs=1e-15)
    assert r.c14 >= 0.231
    assert entanglement_fidelity_bound(r.rho) == pytest.approx(0.45 + 0.28 - np.sqrt(0.0024), abs=1e-12)
    assert entanglement_fidelity_bound(r.rho) == pytest.approx(0.681, abs=5e-4)
    assert not r.repaired


def test_reconstruct_ideal_and_mixed():
    ideal0 = CorrelationTable.from_probabilities(np.eye(2), "0")
    ideal45 = CorrelationTable.from_probabilities(np.eye(2), "45")
    np.testing.assert_allclose(reconstruct_density(ideal0, ideal45).entries, bell_state(0).projector().entries,
                               atol=1e-12)
    half0 = CorrelationTable.from_probabilities(np.full((2, 2), 0.5), "0")
    half45 = CorrelationTable.from_probabilities(np.full((2, 2), 0.5), "45")
    np.testing.assert_allclose(reconstruct_density(half0, half45).entries, np.eye(4) / 4, atol=1e-15)


def test_reconstruct_inconsistent_tables():
    t0 = CorrelationTable.from_probabilities([[0.9, 0.1], [0.9, 0.1]], "0")
    t45 = CorrelationTable.from_probabilities(np.eye(2), "45")
    # C = 0.5 against sqrt(rho11 rho44) + sqrt(rho22 rho33) = 0.3
    with pytest.raises(PhysicsError):
        reconstruct(t0, t45)


def test_optimistic_split_repairs_and_reports(caplog):
    t0 = CorrelationTable.from_probabilities([[0.6, 0.4], [0.4, 0.6]], "0")
    t45 = CorrelationTable.from_probabilities([[0.95, 0.05], [0.05, 0.95]], "45")
    with caplog.at_level(logging.WARNING):
        r = reconstruct(t0, t45, optimistic=True)
    assert r.repaired and r.c23 == 0
    assert "not PSD" in caplog.text
    assert r.rho.min_eigenvalue() >= -1e-10
    assert abs(np.trace(r.rho.entries) - 1) < 1e-12


@given(st.floats(0, 1), st.floats(0, 1))
def test_reconstruction_left_inverse(vp, vc):
    m = ImperfectionModel(v_pop=vp, v_coh=vc, background=0.0)
    t0, t45 = model_tables(m)
    rho_true = noisy_joint_state(m, eta=0.0).entries
    rho = reconstruct_density(t0, t45, optimistic=True).entries
    assert abs(2 * (rho[0, 0] + rho[3, 3]).real - 1 - vp) < 1e-12
    np.testing.assert_allclose(rho, rho_true, atol=1e-12)
    # the conservative split still recovers the populations exactly
    rho_c = reconstruct_density(t0, t45).entries
    assert abs(2 * (rho_c[0, 0] + rho_c[3, 3]).real - 1 - vp) < 1e-12


def test_entanglement_bound_examples():
    for eta in (0.0, 1.0, -2.5):
        assert entanglement_fidelity_bound(bell_state(eta).projector()) == pytest.approx(1.0, abs=1e-12)
    assert entanglement_fidelity_bound(DensityMatrix.maximally_mixed(4)) == 0.25
    with pytest.raises(ValueError):
        entanglement_fidelity_bound(DensityMatrix.maximally_mixed(2))


@given(st.integers(0, 2**32 - 1))
def test_entanglement_bound_at_most_one(seed):
    rho = random_density(np.random.default_rng(seed))
    assert entanglement_fidelity_bound(DensityMatrix(rho)) <= 1 + 1e-12


def _random_product(rng):
    a = random_density(rng, 2, rank=int(rng.integers(1, 3)))
    b = random_density(rng, 2, rank=int(rng.integers(1, 3)))
    return np.kron(a, b)


def test_separability_ceiling(rng):
    worst = 0.0
    for _ in range(10_000):
        k = int(rng.integers(1, 4))
        w = rng.dirichlet(np.ones(k))
        rho = sum(wi * _random_product(rng) for wi in w)
        worst = max(worst, entanglement_fidelity_bound(DensityMatrix(rho)))
    assert worst <= 0.5 + 1e-9


# --- bounds and rates ---------------------------------------------------------

def test_classical_bound_examples():
    v = classical_bound_check(0.88, "state_transfer")
    assert v.exceeds and v.margin == pytest.approx(0.213, abs=5e-4)
    v = classical_bound_check(0.5, "entanglement")
    assert not v.exceeds and v.margin == 0
    assert classical_bound_check(0.63, "entanglement").exceeds
    with pytest.raises(ValueError):
        classical_bound_check(1.2, "entanglement")
    with pytest.raises(ValueError):
        classical_bound_check(0.7, "bell")


def test_rates_exact_products():
    m = ImperfectionModel(alpha=0.05, beta=0.04, xi=0.03, n_s=1.4e-2)
    r = rates(m, PulseSchedule(rep_rate=4.7e5))
    f = Fraction
    r_s = f("0.05") * f("0.014") * f("470000")
    zeta = f("0.04") * f("0.03")
    assert r_s == 329
    assert abs(r.r_s - float(r_s)) < 1e-12 * 329
    assert abs(r.zeta - float(zeta)) < 1e-12
    assert abs(r.r_si - float(zeta * r_s)) < 1e-12
    r_2 = (f("0.04") * f("0.03") * f("0.05") * f("0.014")) ** 2 * f("470000")
    assert abs(r.r_2 - float(r_2)) < 1e-12 * float(r_2)
    assert r.r_2 == pytest.approx(3.3e-7, rel=0.01)
    assert r.n_s_inferred == pytest.approx(0.014, rel=1e-12)
    assert infer_n_s(329, 0.05, 4.7e5) == pytest.approx(0.014)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_rates_nonnegative_and_zeta(a, b, x, n):
    r = rates(ImperfectionModel(alpha=a, beta=b, xi=x, n_s=n), PulseSchedule())
    assert min(r.as_dict().values()) >= 0
    assert abs(r.zeta - b * x) <= 1e-12


# --- errors and time bins -----------------------------------------------------

def test_fidelity_error_reference_tables():
    f, err = fidelity_with_error(T0, T45)
    assert f == pytest.approx(0.681, abs=5e-4)
    assert 0.02 < err < 0.05
    fb, errb = fidelity_with_error(T0, T45, method="bootstrap", seed=1)
    assert fb == f
    assert errb == pytest.approx(err, rel=0.25)
    with pytest.raises(ValueError):
        fidelity_with_error(T0, T45, method="jackknife")


def _runs(m, sched, n, seed, window):
    out = []
    for k, s in enumerate([*max_correlation_settings("0").values(), *max_correlation_settings("45").values()]):
        ev = run_experiment(m, sched, s, n, seed + k)
        out.append(match_coincidences(gate(ev, sched), window))
    return BasisRuns(*out)


def test_time_bins_noiseless_flat():
    sched = PulseSchedule()
    w = reference_window(100)
    bins = time_binned_fidelity(_runs(ImperfectionModel.noiseless(), sched, 20_000, 1, w), w)
    assert len(bins) == 4
    for b in bins:
        assert b.f_si == pytest.approx(1.0) and b.error == 0.0 and not b.below_threshold


def test_time_bins_follow_model_and_decrease():
    m = ImperfectionModel.noiseless(v_pop=0.8, v_coh=0.9, decoherence=DecoherenceModel(120.0))
    sched = PulseSchedule(delta_t=200)
    w = reference_window(200)
    bins = time_binned_fidelity(_runs(m, sched, 150_000, 9, w), w)
    fs = [b.f_si for b in bins]
    assert all(a >= b for a, b in zip(fs, fs[1:]))
    for b in bins:
        t0, t45 = window_tables(m, sched, b.window)
        exact = entanglement_fidelity_bound(reconstruct_density(t0, t45))
        assert abs(b.f_si - exact) < 4 * b.error
        # the analytic state at the bin's mean delay is a close proxy
        assert abs(model_fidelity(m, b.mean_delay) - exact) < 0.01
        assert b.below_threshold == (b.f_si - b.error <= ENTANGLEMENT_LIMIT)


def test_time_bins_empty_quarter():
    c = CoincidenceList([0], [0], [2], [5])
    empty = CoincidenceList()
    bins = time_binned_fidelity(BasisRuns(c, c, c, c), CoincidenceWindow(0, 80))
    # one pair fills every row of the first quarter with a single D2 count
    assert not bins[0].empty and bins[0].n_pairs == 4
    assert all(b.empty and b.f_si is None for b in bins[1:])
    bins = time_binned_fidelity(BasisRuns(empty, empty, empty, empty), CoincidenceWindow(0, 80))
    assert all(b.empty and b.n_pairs == 0 for b in bins)
