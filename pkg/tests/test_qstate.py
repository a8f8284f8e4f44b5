import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dlczsim.qstate import (
    DensityMatrix,
    DimensionError,
    EnsembleMode,
    StateVector,
    WriteProcessParams,
    apply_unitary,
    bell_state,
    effective_states,
    excitation_conditional_state,
    fidelity,
    partial_trace,
    tensor,
    write_emission_state,
)
from dlczsim.optics import H, V
from dlczsim.simkernel import ImperfectionModel, noisy_joint_state

from helpers import random_density

S = 1 / np.sqrt(2)
finite_angle = st.floats(-50, 50, allow_nan=False)


def test_bell_state_eta_zero():
    np.testing.assert_allclose(bell_state(0).amplitudes, [S, 0, 0, S], atol=1e-15)


def test_bell_state_eta_pi():
    np.testing.assert_allclose(bell_state(np.pi).amplitudes, [S, 0, 0, -S], atol=1e-15)


@given(finite_angle)
def test_bell_state_normalized(eta):
    assert abs(np.linalg.norm(bell_state(eta).amplitudes) - 1) < 1e-12


@given(finite_angle)
def test_bell_marginals_maximally_mixed(eta):
    psi = bell_state(eta)
    for keep in ("signal", "idler"):
        np.testing.assert_allclose(partial_trace(psi, keep).entries, np.eye(2) / 2, atol=1e-12)


def test_bell_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        bell_state(np.nan)


def test_write_emission_no_coupling():
    psi = write_emission_state(WriteProcessParams(chi=0.0))
    np.testing.assert_allclose(psi.amplitudes, [1, 0, 0])


def test_write_emission_conditional_state():
    psi = write_emission_state(WriteProcessParams(chi=0.1))
    # by hand: the chi-order term is chi(|L> + |R>), normalized to (|L> + |R>)/sqrt(2)
    cond = excitation_conditional_state(psi)
    np.testing.assert_allclose(cond.amplitudes, [S, S], atol=1e-15)
    # and the full post-normalized state is (1, chi, chi)/sqrt(1 + 2 chi^2)
    np.testing.assert_allclose(psi.amplitudes, np.array([1, 0.1, 0.1]) / np.sqrt(1.02), atol=1e-15)


@given(st.floats(0, 0.5))
def test_write_emission_left_right_symmetric(chi):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = write_emission_state(WriteProcessParams(chi=chi)).amplitudes
    assert abs(abs(a[1]) ** 2 - abs(a[2]) ** 2) < 1e-15


def test_write_params_limits():
    with pytest.raises(ValueError):
        WriteProcessParams(chi=0.6)
    with pytest.warns(UserWarning):
        WriteProcessParams(chi=0.2)


def test_fidelity_examples():
    psi = bell_state(0)
    assert fidelity(psi.projector(), psi) == pytest.approx(1.0, abs=1e-15)
    assert fidelity(DensityMatrix.maximally_mixed(4), psi) == pytest.approx(0.25, abs=1e-15)


def test_fidelity_noise_model_matches_dense_contraction():
    m = ImperfectionModel(v_pop=0.8, v_coh=0.5, background=0.0)
    rho = noisy_joint_state(m, eta=0.0)
    psi = bell_state(0)
    # brute-force sum over all index pairs
    a = psi.amplitudes
    brute = sum(np.conj(a[i]) * rho.entries[i, j] * a[j] for i in range(4) for j in range(4)).real
    assert fidelity(rho, psi) == pytest.approx(brute, abs=1e-15)
    # and the closed form (1+Vp)/4 + Vc (1+Vp)/4 = 0.45 + 0.225
    assert fidelity(rho, psi) == pytest.approx(0.675, abs=1e-12)


def test_fidelity_dimension_mismatch():
    with pytest.raises(DimensionError):
        fidelity(DensityMatrix.maximally_mixed(2), bell_state(0))


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_fidelity_linear_in_rho(seed, a):
    rng = np.random.default_rng(seed)
    r1, r2 = random_density(rng), random_density(rng)
    psi = StateVector.normalized(rng.normal(size=4) + 1j * rng.normal(size=4))
    mix = DensityMatrix(a * r1 + (1 - a) * r2)
    lhs = fidelity(mix, psi)
    rhs = a * fidelity(DensityMatrix(r1), psi) + (1 - a) * fidelity(DensityMatrix(r2), psi)
    assert abs(lhs - rhs) < 1e-12


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
def test_density_invariants_hold_for_random_states(seed, dim):
    rng = np.random.default_rng(seed)
    rho = DensityMatrix(random_density(rng, dim, rank=int(rng.integers(1, dim + 1))))
    e = rho.entries
    assert np.max(np.abs(e - e.conj().T)) <= 1e-12
    assert abs(np.trace(e) - 1) <= 1e-12
    assert rho.min_eigenvalue() >= -1e-10


def test_density_rejects_invalid():
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 1j], [1j, 0.5]]))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(DimensionError):
        DensityMatrix(np.eye(5) / 5)


def test_state_vector_rejects_unnormalized():
    with pytest.raises(ValueError):
        StateVector(np.array([1.0, 1.0]))


def test_state_is_immutable():
    psi = bell_state(0)
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 0


def test_tensor_basis_order():
    np.testing.assert_array_equal(tensor(H, V).amplitudes, [0, 1, 0, 0])


def test_apply_identity():
    psi = bell_state(0.3)
    np.testing.assert_allclose(apply_unitary(np.eye(4), psi).amplitudes, psi.amplitudes)


def test_apply_unitary_rejects_non_unitary():
    with pytest.raises(ValueError):
        apply_unitary(np.diag([1.0, 2.0]), H)


def test_partial_trace_bell():
    np.testing.assert_allclose(partial_trace(bell_state(0), "signal").entries, np.eye(2) / 2, atol=1e-15)


def test_effective_states_uniform():
    eff = effective_states(EnsembleMode.uniform(5, 7))
    assert eff.inner("L", "L") == pytest.approx(1.0, abs=1e-12)
    assert eff.inner("L", "R") == 0


@given(st.integers(0, 2**32 - 1))
def test_effective_states_gram_identity(seed):
    rng = np.random.default_rng(seed)
    nl, nr = rng.integers(1, 40, size=2)
    mode = EnsembleMode.from_weights(
        rng.normal(size=nl) + 1j * rng.normal(size=nl), rng.normal(size=nr) + 1j * rng.normal(size=nr)
    )
    np.testing.assert_allclose(effective_states(mode).gram(), np.eye(2), atol=1e-12)


def test_gram_identity_100_draws(rng):
    for _ in range(100):
        nl, nr = rng.integers(1, 60, size=2)
        mode = EnsembleMode.from_weights(rng.normal(size=nl) + 1j * rng.normal(size=nl), rng.normal(size=nr))
        assert np.max(np.abs(effective_states(mode).gram() - np.eye(2))) < 1e-12


def test_ensemble_mode_zero_weights():
    with pytest.raises(ValueError):
        EnsembleMode.from_weights([0, 0], [1])
