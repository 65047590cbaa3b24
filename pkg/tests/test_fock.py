import itertools

import numpy as np
import pytest

from qclausius.errors import CapacityError, ConfigurationError
from qclausius.fock import (
    ModeLayout,
    build_jordan_wigner,
    build_tight_binding_model,
    gauge_rotation,
    parity_operator,
    second_quantize,
    validate_model,
)
from qclausius.linalg import max_norm, random_hermitian
from qclausius.model import ModelRecipe, ReservoirRecipe, build_single_particle


def _layout(n):
    return ModeLayout.from_regions(["S"] + ["R1"] * (n - 1))


def test_canonical_anticommutation():
    basis = build_jordan_wigner(_layout(4))
    eye = np.eye(16)
    for m, n in itertools.product(range(4), repeat=2):
        cm, cn = basis.c(m).toarray(), basis.c(n).toarray()
        anti = cm @ cn.conj().T + cn.conj().T @ cm
        assert max_norm(anti - (m == n) * eye) <= 1e-12
        assert max_norm(cm @ cn + cn @ cm) <= 1e-12


def test_capacity_guard():
    with pytest.raises(CapacityError):
        ModeLayout.from_regions(["S"] + ["R1"] * 12, dim_cap=4096).dim  # 2^13 modes


def test_many_body_spectrum_is_subset_sums():
    recipe = ModelRecipe((ReservoirRecipe(3, onsite=0.2),), kappa=0.4, system_onsite=(0.5,))
    spec = build_tight_binding_model(recipe)
    eps = np.linalg.eigvalsh(spec.single_particle.h_total())
    sums = sorted(sum(c) for r in range(len(eps) + 1) for c in itertools.combinations(eps, r))
    assert np.allclose(np.linalg.eigvalsh(spec.hamiltonian()), sums, atol=1e-12)


def test_structural_invariants_hold():
    recipe = ModelRecipe((ReservoirRecipe(2), ReservoirRecipe(2, beta=2.0)), kappa=0.3, interaction=0.7)
    spec = build_tight_binding_model(recipe)
    checks = validate_model(spec)
    assert max(checks.values()) <= 1e-12


def test_parity_and_gauge():
    recipe = ModelRecipe((ReservoirRecipe(3),), kappa=0.3)
    spec = build_tight_binding_model(recipe)
    theta = parity_operator(spec.layout)
    assert max_norm(theta @ theta - np.eye(spec.dim)) == 0
    h = spec.hamiltonian()
    assert max_norm(theta @ h - h @ theta) <= 1e-12
    g1, g2 = gauge_rotation(spec.layout, 0.4), gauge_rotation(spec.layout, 1.1)
    assert max_norm(g1 @ g2 - gauge_rotation(spec.layout, 1.5)) <= 1e-10
    assert max_norm(g1 @ h - h @ g1) <= 1e-12
    # G c G^dag = e^{i phi} c for G = exp(-i phi N)
    c0 = spec.basis.c(0).toarray()
    assert max_norm(g1 @ c0 @ g1.conj().T - np.exp(0.4j) * c0) <= 1e-12


def test_second_quantization_of_one_body_matrix(rng):
    basis = build_jordan_wigner(_layout(3))
    x = random_hermitian(3, rng)
    big = second_quantize(basis, x)
    # one-particle sector reproduces x
    one = [k for k in range(8) if basis.occupations[:, k].sum() == 1]
    modes = [int(np.argmax(basis.occupations[:, k])) for k in one]
    sub = big[np.ix_(one, one)]
    assert max_norm(sub - x[np.ix_(modes, modes)]) <= 1e-12


def test_density_interaction_breaks_quadratic_form():
    r = ModelRecipe((ReservoirRecipe(2),), kappa=0.2, interaction=0.5)
    assert not r.is_quadratic
    assert not build_tight_binding_model(r).is_quadratic


def test_recipe_validation():
    with pytest.raises(ConfigurationError):
        ModelRecipe((), kappa=0.1)
    with pytest.raises(ConfigurationError):
        ModelRecipe((ReservoirRecipe(2, system_site=3),), kappa=0.1)
    with pytest.raises(ConfigurationError):
        ModelRecipe((ReservoirRecipe(2),), mode_order=(0, 0, 1))


def test_mode_order_permutation_preserves_spectrum():
    base = ModelRecipe((ReservoirRecipe(3, onsite=0.1),), kappa=0.3)
    perm = ModelRecipe((ReservoirRecipe(3, onsite=0.1),), kappa=0.3, mode_order=(0, 3, 2, 1))
    a = np.linalg.eigvalsh(build_single_particle(base).h_total())
    b = np.linalg.eigvalsh(build_single_particle(perm).h_total())
    assert np.allclose(a, b, atol=1e-13)
