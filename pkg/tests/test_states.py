import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qclausius.errors import ConfigurationError, ConsistencyError
from qclausius.fock import build_tight_binding_model
from qclausius.linalg import expm_h, max_norm, random_density, random_hermitian
from qclausius.model import ModelRecipe, ReservoirRecipe
from qclausius.states import (
    ModularGenerator,
    driven_initial_state,
    entropy_report,
    extrapolate_kappa_squared,
    gibbs_state,
    kms_boundary_check,
    perturbed_kms_limit_check,
    relative_entropy,
    reservoir_marginal,
    system_gibbs,
    system_marginal,
    vn_entropy,
)


@pytest.fixture(scope="module")
def spec():
    return build_tight_binding_model(ModelRecipe((ReservoirRecipe(3, beta=1.5, mu=0.2),), kappa=0.3))


def test_uncoupled_marginals_are_gibbs(spec):
    w = np.array([[0.4]])
    rho = driven_initial_state(spec.with_kappa(0.0), w)
    target = system_gibbs(spec, w, 1.5, 0.2)
    assert max_norm(system_marginal(spec, rho) - target) <= 1e-12
    # the reservoir factor is the grand-canonical state of H_1
    k1 = 1.5 * (spec.h_reservoirs[0] - 0.2 * spec.n_reservoir(0))
    ref = reservoir_marginal(spec, gibbs_state(k1))
    assert max_norm(reservoir_marginal(spec, rho) - ref) <= 1e-12


def test_initial_state_needs_one_reservoir():
    two = build_tight_binding_model(ModelRecipe((ReservoirRecipe(2), ReservoirRecipe(2)), kappa=0.1))
    with pytest.raises(ConfigurationError):
        driven_initial_state(two, np.array([[0.0]]))


def test_kms_condition_and_negative_control(spec, rng):
    k = ModularGenerator.coupled_equilibrium(spec, spec.lift_system(np.array([[0.1]])))
    rho = gibbs_state(k)
    a = random_hermitian(spec.dim, rng) + 1j * random_hermitian(spec.dim, rng)
    b = random_hermitian(spec.dim, rng)
    assert kms_boundary_check(rho, k, a, b) <= 1e-10
    with pytest.raises(ConsistencyError):
        kms_boundary_check(random_density(spec.dim, rng), k, a, b)


def test_entropy_of_maximally_mixed():
    assert vn_entropy(np.eye(4) / 4) == pytest.approx(np.log(4), abs=1e-14)
    assert vn_entropy(np.diag([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)


@given(st.integers(0, 2**32 - 1))
def test_entropy_unitary_invariance(seed):
    r = np.random.default_rng(seed)
    rho = random_density(5, r)
    u = expm_h(random_hermitian(5, r), -1j)
    assert abs(vn_entropy(u @ rho @ u.conj().T) - vn_entropy(rho)) <= 1e-10


@given(st.integers(0, 2**32 - 1))
def test_klein_inequality(seed):
    r = np.random.default_rng(seed)
    rho, sigma = random_density(4, r), random_density(4, r)
    assert relative_entropy(rho, sigma) >= 0.0
    assert relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-10)


def test_relative_entropy_support_violation():
    assert relative_entropy(np.diag([0.5, 0.5]), np.diag([1.0, 0.0])) == np.inf


def test_entropy_report(rng):
    rho, sigma = random_density(3, rng), random_density(3, rng)
    rep = entropy_report(rho, sigma)
    assert rep.vn_entropy == pytest.approx(vn_entropy(rho))
    assert rep.relative_entropy == pytest.approx(relative_entropy(rho, sigma))
    assert sum(rep.spectrum) == pytest.approx(1.0)


def test_kappa_squared_extrapolation_is_exact_on_quadratics():
    kap = [0.3, 0.2, 0.1]
    vals = [1.0 + 2.0 * k**2 - 3.0 * k**4 for k in kap]
    assert float(extrapolate_kappa_squared(kap, vals)) == pytest.approx(1.0, abs=1e-12)


def test_coupled_marginal_tends_to_system_gibbs(spec):
    rep = perturbed_kms_limit_check(spec, np.array([[0.3]]))
    assert rep.monotone
    assert rep.deviation < min(rep.deviations)


def test_reservoir_generator_gives_fermi_occupations():
    rec = ModelRecipe((ReservoirRecipe(3, beta=1.0, mu=0.0, onsite=0.1),), kappa=0.0)
    spec3 = build_tight_binding_model(rec)
    rho = gibbs_state(ModularGenerator.reservoir_product(spec3).K)
    modes = spec3.single_particle.modes("R1")
    basis = spec3.basis
    c = np.array([[np.trace(rho @ (basis.cdag(n) @ basis.c(m)).toarray()) for n in modes] for m in modes])
    h1 = spec3.single_particle.h0()[np.ix_(modes, modes)]
    eps, q = np.linalg.eigh(h1)
    occ = np.real(np.diag(q.conj().T @ c @ q))
    assert np.allclose(occ, 1.0 / (1.0 + np.exp(eps)), atol=1e-12)


def test_coupled_state_is_stationary():
    m = build_tight_binding_model(ModelRecipe((ReservoirRecipe(3, beta=1.0, mu=0.1),), kappa=0.2))
    w = m.lift_system(np.array([[0.4]]))
    k = ModularGenerator.coupled_equilibrium(m, w).K
    rho = gibbs_state(k)
    u = expm_h(m.hamiltonian(w), -5j)
    assert max_norm(u @ rho @ u.conj().T - rho) <= 1e-10


@pytest.fixture(scope="module")
def six_site():
    return ModelRecipe((ReservoirRecipe(6, beta=1.0, mu=0.1),), kappa=0.2)


def test_marginal_deviation_shrinks_with_kappa(six_site):
    rep = perturbed_kms_limit_check(build_tight_binding_model(six_site), np.array([[0.5]]), (0.2, 0.05))
    assert rep.deviations[1] < rep.deviations[0]


def test_marginal_deviation_ignores_site_labels(six_site):
    from dataclasses import replace

    from qclausius.model import reservoir_permutation

    w = np.array([[0.5]])
    a = perturbed_kms_limit_check(build_tight_binding_model(six_site), w)
    perm = replace(six_site, mode_order=reservoir_permutation(six_site))
    b = perturbed_kms_limit_check(build_tight_binding_model(perm), w)
    assert np.allclose(a.deviations, b.deviations, atol=1e-12)
