import warnings

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from starkprobe.models import Family, Monomial, Parabolic, ProbeSpec, build_hamiltonian, enumerate_half_filling
from starkprobe.spectral import (
    NearDegeneracyWarning,
    SolverError,
    analytic_bloch,
    energy_gap,
    full_spectrum,
    ground_pair,
    inverse_participation_ratio,
    is_near_degenerate,
    sign_gauge,
)

MB = Family.MANY_BODY


@pytest.mark.parametrize("L", [2, 7, 101, 501])
def test_zero_field_matches_bloch(L):
    num = full_spectrum(build_hamiltonian(ProbeSpec(L, Monomial(0.0, 1.0))))
    ref = analytic_bloch(L)
    assert np.max(np.abs(num.energies - ref.energies)) < 1e-10
    assert np.max(np.abs(num.vectors - ref.vectors)) < 1e-10


def test_bloch_vectors_are_orthonormal_eigenvectors():
    L = 9
    ref = analytic_bloch(L, J=0.5)
    H = build_hamiltonian(ProbeSpec(L, Monomial(0.0, 1.0), J=0.5)).to_dense()
    assert np.allclose(ref.vectors.T @ ref.vectors, np.eye(L), atol=1e-13)
    assert np.allclose(H @ ref.vectors, ref.vectors * ref.energies, atol=1e-13)


def test_full_spectrum_dense_cap():
    with pytest.raises(ValueError):
        full_spectrum(build_hamiltonian(ProbeSpec(30, Monomial(0.1, 1.0))), dense_cap=20)


def test_gauge_largest_component_positive():
    v = np.array([0.1, -0.9, 0.3])
    assert sign_gauge(v)[1] > 0
    assert np.array_equal(sign_gauge(-v), sign_gauge(v))


def test_gauge_ties_go_to_the_lowest_index():
    v = np.array([-0.5, 0.5 * (1 + 1e-12), 0.1])
    assert sign_gauge(v)[0] > 0


@pytest.mark.parametrize("L", [12, 14])
def test_lanczos_agrees_with_dense(L):
    spec = ProbeSpec(L, Monomial(1e-2, 2.0), MB)
    H = build_hamiltonian(spec)
    sparse = ground_pair(H, k=2, warn=False)
    w, v = sla.eigh(H.to_dense(), subset_by_index=[0, 1])
    assert np.allclose([p.energy for p in sparse], w, rtol=1e-12, atol=1e-10)
    assert abs(abs(sparse[0].vector @ v[:, 0]) - 1.0) < 1e-10
    assert all(p.residual < 1e-9 for p in sparse)


def test_lanczos_is_deterministic_for_a_seed():
    H = build_hamiltonian(ProbeSpec(12, Monomial(1e-3, 1.0), MB))
    a = ground_pair(H, seed=7)[0].vector
    b = ground_pair(H, seed=7)[0].vector
    c = ground_pair(H, seed=8)[0].vector
    assert np.array_equal(a, b)
    assert np.allclose(a, c, atol=1e-10)  # the gauge removes start-vector dependence


def test_lanczos_iteration_cap_raises():
    H = build_hamiltonian(ProbeSpec(12, Monomial(1e-3, 1.0), MB))
    with pytest.raises(SolverError):
        ground_pair(H, k=2, maxiter=1)


def test_energy_gap_single_particle_small_field():
    L = 51
    g = energy_gap(ProbeSpec(L, Monomial(1e-12, 1.0))).gap
    E = analytic_bloch(L).energies
    assert g == pytest.approx(E[1] - E[0], rel=1e-9)


def test_many_body_gap_is_positive():
    assert energy_gap(ProbeSpec(8, Parabolic(1e-4, 1e-4), MB)).gap > 0


def test_near_degeneracy_warns():
    # deep in the double well the two mirror states are degenerate to machine precision
    spec = ProbeSpec(101, Parabolic(0.5 * 100, 0.5))
    with pytest.warns(NearDegeneracyWarning):
        ground_pair(build_hamiltonian(spec), k=2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ground_pair(build_hamiltonian(spec), k=2, warn=False)


def test_degeneracy_threshold_is_relative():
    assert is_near_degenerate(1000.0, 1000.0 + 1e-10)
    assert not is_near_degenerate(1.0, 1.0 + 1e-11)


def test_ipr_limits():
    assert inverse_participation_ratio(np.eye(5)[2]) == pytest.approx(1.0)
    assert inverse_participation_ratio(np.ones(4) / 2) == pytest.approx(0.25)


@pytest.mark.property
@given(L=st.integers(3, 60), h=st.floats(0.0, 2.0), g=st.floats(0.25, 3.0))
def test_ground_pair_is_lowest_and_gauged(L, h, g):
    H = build_hamiltonian(ProbeSpec(L, Monomial(h, g)))
    p = ground_pair(H, k=1)[0]
    w = np.linalg.eigvalsh(H.to_dense())
    assert p.energy == pytest.approx(w[0], abs=1e-10 * max(1.0, abs(w[0])))
    a = np.abs(p.vector)
    assert p.vector[np.argmax(a >= a.max() * (1 - 1e-8))] > 0


@pytest.mark.property
@given(L=st.sampled_from([4, 6, 8, 10]), h1=st.floats(0.0, 1.0), h2=st.floats(0.0, 0.1))
def test_many_body_ground_energy_matches_dense(L, h1, h2):
    spec = ProbeSpec(L, Parabolic(h1, h2), MB)
    H = build_hamiltonian(spec, enumerate_half_filling(L))
    w = np.linalg.eigvalsh(H.to_dense())
    assert ground_pair(H, k=1)[0].energy == pytest.approx(w[0], abs=1e-9)
