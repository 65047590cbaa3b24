"""Fermionic Fock-space realization of a system coupled to reservoirs.

Mode ``m`` of a :class:`ModeLayout` is the ``m``-th tensor factor (mode 0 is
the most significant).  Each factor uses the occupation basis ``|0>, |1>`` and
the Jordan-Wigner string ``Z = diag(1, -1)`` on every preceding mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, StructuralError
from .linalg import max_norm
from .model import ModelRecipe, SingleParticleModel, build_single_particle

DEFAULT_DIM_CAP = 2**12
INVARIANT_TOL = 1e-12

_A = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))
_Z = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))


@dataclass(frozen=True)
class ModeLayout:
    """Ordered fermionic modes, each tagged ``(region, species, site)``."""

    modes: tuple[tuple[str, int, int], ...]
    dim_cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        if not self.modes:
            raise StructuralError("layout needs at least one mode")
        if len(set(self.modes)) != len(self.modes):
            raise StructuralError("layout modes must be distinct")
        if self.dim > self.dim_cap:
            raise CapacityError(
                f"Fock dimension 2^{self.n_modes} = {self.dim} exceeds the cap {self.dim_cap}"
            )

    @classmethod
    def from_regions(cls, regions: Sequence[str], sites: Sequence[int] | None = None, species=None, dim_cap=DEFAULT_DIM_CAP):
        sites = list(sites) if sites is not None else list(range(len(regions)))
        species = list(species) if species is not None else [1] * len(regions)
        return cls(tuple(zip(regions, species, sites)), dim_cap)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def dim(self) -> int:
        return 2**self.n_modes

    @property
    def regions(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(m[0] for m in self.modes))

    @property
    def species(self) -> tuple[int, ...]:
        return tuple(sorted(set(m[1] for m in self.modes)))

    def indices(self, region: str | None = None, species: int | None = None) -> list[int]:
        return [
            k
            for k, (r, s, _) in enumerate(self.modes)
            if (region is None or r == region) and (species is None or s == species)
        ]


@dataclass(frozen=True)
class OperatorBasis:
    """Sparse annihilation operators ``c_m``; creation operators are adjoints."""

    layout: ModeLayout
    annihilators: tuple[sp.csr_matrix, ...]

    def c(self, m: int) -> sp.csr_matrix:
        return self.annihilators[m]

    def cdag(self, m: int) -> sp.csr_matrix:
        return self.annihilators[m].conj().T.tocsr()

    @cached_property
    def occupations(self) -> np.ndarray:
        """``occupations[m, k]`` is the occupation of mode ``m`` in basis state ``k``."""
        n = self.layout.n_modes
        k = np.arange(self.layout.dim)
        return np.array([(k >> (n - 1 - m)) & 1 for m in range(n)], dtype=float)

    def number(self, modes: Sequence[int]) -> np.ndarray:
        """Dense diagonal number operator summed over ``modes``."""
        occ = self.occupations[list(modes)].sum(axis=0) if len(modes) else np.zeros(self.layout.dim)
        return np.diag(occ).astype(complex)


def build_jordan_wigner(layout: ModeLayout) -> OperatorBasis:
    n = layout.n_modes
    eye = sp.identity(2, dtype=complex, format="csr")
    ops = []
    for m in range(n):
        factors = [_Z] * m + [_A] + [eye] * (n - m - 1)
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op.tocsr())
    return OperatorBasis(layout, tuple(ops))


def second_quantize(basis: OperatorBasis, x: np.ndarray) -> np.ndarray:
    """Dense ``sum_mn x_mn c_m^dag c_n`` for a single-particle matrix ``x``."""
    x = np.asarray(x)
    n = basis.layout.n_modes
    if x.shape != (n, n):
        raise StructuralError(f"single-particle matrix must be {n}x{n}, got {x.shape}")
    out = sp.csr_matrix((basis.layout.dim, basis.layout.dim), dtype=complex)
    for m, k in zip(*np.nonzero(x)):
        out = out + x[m, k] * (basis.cdag(m) @ basis.c(k))
    return out.toarray()


def parity_operator(layout: ModeLayout) -> np.ndarray:
    occ = build_jordan_wigner(layout).occupations
    return np.diag(np.prod(1.0 - 2.0 * occ, axis=0)).astype(complex)


def gauge_rotation(layout: ModeLayout, phi) -> np.ndarray:
    """``exp(-i sum_lambda phi_lambda N_lambda)``; conjugation maps ``c_m`` to ``e^{i phi} c_m``.

    ``phi`` is a scalar (single species) or a mapping/sequence indexed by the
    species labels of the layout, in sorted order.
    """
    occ = build_jordan_wigner(layout).occupations
    species = layout.species
    if np.isscalar(phi):
        phis = {s: float(phi) for s in species}
    elif isinstance(phi, dict):
        phis = {s: float(phi.get(s, 0.0)) for s in species}
    else:
        phi = list(phi)
        if len(phi) != len(species):
            raise StructuralError(f"expected {len(species)} gauge angles, got {len(phi)}")
        phis = dict(zip(species, map(float, phi)))
    angle = np.zeros(layout.dim)
    for m, (_, s, _) in enumerate(layout.modes):
        angle += phis[s] * occ[m]
    return np.diag(np.exp(-1j * angle))


def _comm(a, b) -> np.ndarray:
    return a @ b - b @ a


@dataclass(frozen=True)
class ModelSpec:
    """Fock-space operators of the system+reservoir decomposition.

    ``h_system`` is the static system part; ``h_reservoirs[j]``, ``numbers``
    and ``v`` are embedded in the full space.  ``v`` excludes the coupling
    constant ``kappa``.
    """

    layout: ModeLayout
    basis: OperatorBasis
    single_particle: SingleParticleModel
    h_system: np.ndarray
    h_reservoirs: tuple[np.ndarray, ...]
    v: np.ndarray
    kappa: float
    numbers: dict  # region label -> number operator
    betas: tuple[float, ...]
    mus: tuple[float, ...]
    d_system: np.ndarray
    interaction: float = 0.0
    checks: dict = field(default_factory=dict)

    @property
    def is_quadratic(self) -> bool:
        return self.interaction == 0.0

    @property
    def n_reservoirs(self) -> int:
        return len(self.h_reservoirs)

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def n_system(self) -> np.ndarray:
        return self.numbers["S"]

    def n_reservoir(self, j: int) -> np.ndarray:
        return self.numbers[f"R{j + 1}"]

    @property
    def n_total(self) -> np.ndarray:
        return sum(self.numbers.values())

    @property
    def system_dims(self) -> tuple[int, int]:
        ns = len(self.single_particle.system_modes)
        return 2**ns, 2 ** (self.layout.n_modes - ns)

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Second-quantize a full single-particle matrix."""
        return second_quantize(self.basis, x)

    def lift_system(self, w: np.ndarray) -> np.ndarray:
        return self.lift(self.single_particle.embed_system(w))

    def system_operator(self, w: np.ndarray) -> np.ndarray:
        """Second-quantize an ``n_S x n_S`` matrix on the system factor alone."""
        ns = len(self.single_particle.system_modes)
        sub = build_jordan_wigner(ModeLayout.from_regions(["S"] * ns))
        return second_quantize(sub, w)

    def hamiltonian(self, w_full: np.ndarray | None = None) -> np.ndarray:
        h = self.h_system + sum(self.h_reservoirs) + self.kappa * self.v
        return h if w_full is None else h + w_full

    def with_kappa(self, kappa: float) -> "ModelSpec":
        from dataclasses import replace

        return replace(self, kappa=float(kappa))


def _interaction_term(basis: OperatorBasis, bonds, u: float) -> np.ndarray:
    out = np.zeros((basis.layout.dim, basis.layout.dim), dtype=complex)
    for a, b in bonds:
        out += u * np.diag(basis.occupations[a] * basis.occupations[b])
    return out


def validate_model(spec: ModelSpec, tol: float = INVARIANT_TOL) -> dict:
    """Check the structural commutator invariants; return the measured residuals."""
    res = {}
    hs = spec.h_reservoirs
    for j in range(len(hs)):
        for k in range(j + 1, len(hs)):
            res[f"[H_{j + 1},H_{k + 1}]"] = max_norm(_comm(hs[j], hs[k]))
        # H_j must commute with every mode operator outside R_j
        own = set(spec.layout.indices(f"R{j + 1}"))
        worst = 0.0
        for m in range(spec.layout.n_modes):
            if m not in own:
                c = spec.basis.c(m)
                worst = max(worst, max_norm(np.asarray(c.T @ hs[j].T).T - np.asarray(c @ hs[j])))
        res[f"[H_{j + 1},off-support]"] = worst
        res[f"[H_{j + 1},H_S]"] = max_norm(_comm(hs[j], spec.h_system))
    n_tot = spec.n_total
    res["[N_tot,V]"] = max_norm(_comm(n_tot, spec.v))
    theta = np.diag(parity_operator(spec.layout))
    res["parity(V)"] = max_norm(theta[:, None] * spec.v * theta[None, :] - spec.v)
    labels = list(spec.numbers)
    worst = 0.0
    for a in labels:
        for b in labels:
            worst = max(worst, max_norm(_comm(spec.numbers[a], spec.numbers[b])))
    res["[N_r,N_r']"] = worst
    scale = max(1.0, max_norm(spec.v), *(max_norm(h) for h in hs))
    for name, val in res.items():
        if val > tol * scale:
            raise StructuralError(f"model invariant {name} violated: residual {val:.3e}")
    return res


def build_tight_binding_model(recipe: ModelRecipe, dim_cap: int = DEFAULT_DIM_CAP) -> ModelSpec:
    spm = build_single_particle(recipe)
    layout = ModeLayout.from_regions(spm.regions, spm.sites, dim_cap=dim_cap)
    basis = build_jordan_wigner(layout)
    h_s = second_quantize(basis, spm.h_system)
    h_res = tuple(second_quantize(basis, h) for h in spm.h_reservoirs)
    v = second_quantize(basis, spm.v)
    if recipe.interaction:
        v = v + _interaction_term(basis, spm.v_bonds, recipe.interaction)
    numbers = {r: basis.number(layout.indices(r)) for r in layout.regions}
    spec = ModelSpec(
        layout=layout,
        basis=basis,
        single_particle=spm,
        h_system=h_s,
        h_reservoirs=h_res,
        v=v,
        kappa=float(recipe.kappa),
        numbers=numbers,
        betas=spm.betas,
        mus=spm.mus,
        d_system=second_quantize(basis, spm.d_system),
        interaction=float(recipe.interaction),
    )
    spec.checks.update(validate_model(spec))
    return spec
