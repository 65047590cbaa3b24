"""Two interchangeable representations of the same model.

Both expose operators as square matrices and states ``X`` that evolve as
``U X U^dag`` with expectations ``Tr(X A)``:

* :class:`FockBackend` -- density matrices on the ``2^n`` Fock space;
* :class:`QuadraticBackend` -- ``n x n`` correlation matrices and
  single-particle operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CapabilityError, ConfigurationError, StructuralError
from .fock import ModelSpec, build_tight_binding_model
from .linalg import UNITARY_TOL, trace_pair
from .model import ModelRecipe
from .quadratic import (
    QuadraticModel,
    entropy_from_correlation,
    fermi_from_generator,
    gaussian_relative_entropy,
)
from .states import gibbs_state, relative_entropy, system_marginal, vn_entropy


class Backend:
    kind: str
    recipe: ModelRecipe

    # representation-specific hooks
    def lift(self, x_full: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lift_small(self, w: np.ndarray) -> np.ndarray:
        """Representation of an ``n_S x n_S`` matrix on the system alone."""
        raise NotImplementedError

    def gibbs(self, k: np.ndarray) -> np.ndarray:
        """State of modular generator ``k`` (already lifted)."""
        raise NotImplementedError

    def system_state(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def entropy(self, reduced: np.ndarray) -> float:
        raise NotImplementedError

    def relative_entropy(self, r1: np.ndarray, r2: np.ndarray) -> float:
        raise NotImplementedError

    def settle(self, x: np.ndarray) -> np.ndarray:
        """Evolved state with round-off drift removed (Hermitian part, unit trace where applicable)."""
        return 0.5 * (x + x.conj().T)

    # shared API
    @cached_property
    def sp(self):
        from .model import build_single_particle

        return build_single_particle(self.recipe)

    @property
    def kappa(self) -> float:
        return float(self.recipe.kappa)

    @property
    def n_reservoirs(self) -> int:
        return len(self.recipe.reservoirs)

    @property
    def betas(self):
        return self.sp.betas

    @property
    def mus(self):
        return self.sp.mus

    def lift_system(self, w: np.ndarray) -> np.ndarray:
        return self.lift(self.sp.embed_system(w))

    @cached_property
    def h_system(self):
        return self.lift(self.sp.h_system)

    @cached_property
    def h_reservoirs(self):
        return tuple(self.lift(h) for h in self.sp.h_reservoirs)

    @cached_property
    def n_system(self):
        return self.lift(self.sp.projectors["S"])

    @cached_property
    def n_reservoirs_ops(self):
        return tuple(self.lift(self.sp.projectors[f"R{j + 1}"]) for j in range(self.n_reservoirs))

    @cached_property
    def n_total(self):
        return self.lift(np.eye(self.sp.n))

    @cached_property
    def d_system(self):
        return self.lift(self.sp.d_system)

    @property
    def v(self) -> np.ndarray:
        return self.lift(self.sp.v)

    @property
    def dim(self) -> int:
        return self.h_system.shape[0]

    def hamiltonian(self, w_full: np.ndarray | None = None) -> np.ndarray:
        h = self.h_system + sum(self.h_reservoirs) + self.kappa * self.v
        return h if w_full is None else h + w_full

    def expect(self, x: np.ndarray, a: np.ndarray) -> float:
        return float(np.real(trace_pair(x, a)))

    def coupled_gibbs(self, w_system: np.ndarray) -> np.ndarray:
        """Initial state of the driven single-bath protocol."""
        if self.n_reservoirs != 1:
            raise ConfigurationError(f"the driven protocol needs exactly one reservoir, got {self.n_reservoirs}")
        beta, mu = self.betas[0], self.mus[0]
        return self.gibbs(beta * (self.hamiltonian(self.lift_system(w_system)) - mu * self.n_total))

    def reservoir_product_state(self) -> np.ndarray:
        """Gibbs state of ``sum_j beta_j (H_j - mu_j N_j) - D_S``."""
        k = -self.d_system
        for j, h in enumerate(self.h_reservoirs):
            k = k + self.betas[j] * (h - self.mus[j] * self.n_reservoirs_ops[j])
        return self.gibbs(k)

    def system_gibbs(self, w: np.ndarray, beta: float, mu: float = 0.0) -> np.ndarray:
        ns = len(self.sp.system_modes)
        return self.gibbs(beta * self.lift_small(np.asarray(w) - mu * np.eye(ns)))

    def heat_currents(self) -> list[np.ndarray]:
        """``kappa (-i[H_j, V] + mu_j i[N_j, V])`` for each reservoir."""
        v = self.kappa * self.v
        out = []
        for j, h in enumerate(self.h_reservoirs):
            n = self.n_reservoirs_ops[j]
            out.append(-1j * (h @ v - v @ h) + self.mus[j] * 1j * (n @ v - v @ n))
        return out


@dataclass
class FockBackend(Backend):
    recipe: ModelRecipe
    kind: str = "fock"

    @cached_property
    def spec(self) -> ModelSpec:
        return build_tight_binding_model(self.recipe)

    @cached_property
    def sp(self):
        return self.spec.single_particle

    def lift(self, x_full):
        return self.spec.lift(x_full)

    def lift_small(self, w):
        return self.spec.system_operator(np.asarray(w))

    @property
    def v(self):
        return self.spec.v  # includes the density-density term when present

    def gibbs(self, k):
        return gibbs_state(k)

    def system_state(self, x):
        return system_marginal(self.spec, x)

    def settle(self, x):
        # thousands of unitary steps leave a trace drift of order 1e-12; anything
        # beyond the unitarity tolerance is a genuine error
        x = 0.5 * (x + x.conj().T)
        tr = float(np.real(np.trace(x)))
        if abs(tr - 1.0) > UNITARY_TOL:
            raise StructuralError(f"evolved state has trace {tr:.15g}")
        return x / tr

    def entropy(self, reduced):
        return vn_entropy(reduced)

    def relative_entropy(self, r1, r2):
        return relative_entropy(r1, r2)


@dataclass
class QuadraticBackend(Backend):
    recipe: ModelRecipe
    kind: str = "quadratic"

    def __post_init__(self):
        self.model = QuadraticModel.from_recipe(self.recipe)

    @cached_property
    def sp(self):
        return self.model.sp

    def lift(self, x_full):
        return np.asarray(x_full, dtype=complex)

    def lift_small(self, w):
        return np.asarray(w, dtype=complex)

    def gibbs(self, k):
        return fermi_from_generator(k)

    def system_state(self, x):
        idx = self.sp.system_modes
        return x[np.ix_(idx, idx)]

    def entropy(self, reduced):
        return entropy_from_correlation(reduced)

    def relative_entropy(self, r1, r2):
        return gaussian_relative_entropy(r1, r2)


def make_backend(recipe: ModelRecipe, backend: str = "auto") -> Backend:
    """``auto`` picks the quadratic backend whenever the model has no interaction."""
    if backend == "auto":
        backend = "quadratic" if recipe.is_quadratic else "fock"
    if backend == "fock":
        return FockBackend(recipe)
    if backend == "quadratic":
        if not recipe.is_quadratic:
            raise CapabilityError("interacting models need the Fock backend")
        return QuadraticBackend(recipe)
    raise ConfigurationError(f"unknown backend {backend!r}")
