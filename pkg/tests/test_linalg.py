import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qclausius.errors import ParameterError, StructuralError
from qclausius.linalg import (
    check_density,
    check_hermitian,
    check_unitary,
    commutator,
    eigh,
    expm_h,
    kron,
    logm_pd,
    max_norm,
    partial_trace,
    random_density,
    random_hermitian,
    trace_pair,
)

seeds = st.integers(0, 2**32 - 1)


def test_hermitian_check_rejects_asymmetric(rng):
    a = random_hermitian(4, rng)
    a[0, 1] += 1e-6
    with pytest.raises(StructuralError):
        check_hermitian(a)


def test_unitary_and_density_checks(rng):
    u = expm_h(random_hermitian(5, rng), -1j * 0.7)
    check_unitary(u)
    with pytest.raises(StructuralError):
        check_unitary(2 * u)
    rho = random_density(5, rng)
    check_density(rho)
    with pytest.raises(StructuralError):
        check_density(1.1 * rho)


def test_eigh_reconstructs_random_6x6(rng):
    a = random_hermitian(6, rng)
    dec = eigh(a)
    assert max_norm(dec.reconstruct() - a) <= 1e-10 * max_norm(a)


def test_eigh_is_deterministic_on_degenerate_spectrum():
    a = np.diag([1.0, 1.0, 2.0, 2.0, 2.0]).astype(complex)
    q = np.linalg.qr(np.random.default_rng(0).normal(size=(5, 5)) + 1j * np.random.default_rng(1).normal(size=(5, 5)))[0]
    b = q @ a @ q.conj().T
    d1, d2 = eigh(b), eigh(b.copy())
    assert np.array_equal(d1.eigenvectors, d2.eigenvectors)
    # phase convention: first non-negligible entry of each column is real positive
    for col in d1.eigenvectors.T:
        lead = col[np.argmax(np.abs(col) > 1e-10)]
        assert abs(lead.imag) < 1e-12 and lead.real > 0


def test_expm_matches_taylor_series(rng):
    a = random_hermitian(4, rng)
    x = -1j * 0.3 * a
    taylor = sum(np.linalg.matrix_power(x, k) / math.factorial(k) for k in range(20))
    assert max_norm(expm_h(a, -0.3j) - taylor) <= 1e-12


def test_logm_round_trip(rng):
    rho = random_density(4, rng)
    assert max_norm(expm_h(logm_pd(rho), 1.0) - rho) <= 1e-10


def test_partial_trace_of_product(rng):
    a = random_hermitian(2, rng)
    b = random_hermitian(3, rng)
    ab = kron(a, b)
    assert max_norm(partial_trace(ab, [2, 3], keep=[0]) - a * np.trace(b)) <= 1e-12
    assert max_norm(partial_trace(ab, [2, 3], keep=[1]) - b * np.trace(a)) <= 1e-12


def test_partial_trace_rejects_bad_dims(rng):
    with pytest.raises((ParameterError, StructuralError, ValueError)):
        partial_trace(random_hermitian(6, rng), [2, 2], keep=[0])


@given(seeds, st.floats(-10, 10), st.floats(-10, 10))
def test_one_parameter_group(seed, t, s):
    a = random_hermitian(4, np.random.default_rng(seed))
    lhs = expm_h(a, -1j * t) @ expm_h(a, -1j * s)
    assert max_norm(lhs - expm_h(a, -1j * (t + s))) <= 1e-10


@given(seeds)
def test_trace_cyclic_under_conjugation(seed):
    r = np.random.default_rng(seed)
    a, b = random_hermitian(5, r), random_hermitian(5, r)
    u = expm_h(random_hermitian(5, r), -1j * 1.3)
    lhs = np.trace(u @ a @ u.conj().T @ b)
    rhs = np.trace(a @ u.conj().T @ b @ u)
    assert abs(lhs - rhs) <= 1e-10


def test_trace_pair_and_commutator(rng):
    rho, a = random_density(4, rng), random_hermitian(4, rng)
    assert abs(trace_pair(rho, a) - np.trace(rho @ a)) < 1e-13
    assert max_norm(commutator(a, a)) == 0.0
