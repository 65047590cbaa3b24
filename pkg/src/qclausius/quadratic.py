"""Free-fermion backend built on single-particle correlation matrices.

Convention: ``C[m, n] = <c_n^dag c_m>``.  Then ``<c^dag x c> = Tr(x C)``, a
quadratic Hamiltonian ``c^dag h c`` evolves ``C`` as ``u C u^dag`` with
``u = exp(-i h t)``, and the Gibbs state of ``c^dag k c`` (modular
generator, ``rho ~ exp(-c^dag k c)``) has ``C = (1 + e^k)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import CapabilityError, StructuralError
from .linalg import HERMITIAN_TOL, check_hermitian, eigh, eigvalsh, hermiticity_error, max_norm
from .model import ModelRecipe, SingleParticleModel, build_single_particle
from .states import EntropyReport

SPECTRUM_TOL = 1e-9


@dataclass(frozen=True)
class QuadraticModel:
    """Single-particle blocks of a number-conserving quadratic model."""

    sp: SingleParticleModel

    @classmethod
    def from_recipe(cls, recipe: ModelRecipe) -> "QuadraticModel":
        if not recipe.is_quadratic:
            raise CapabilityError("the quadratic backend cannot represent a density-density interaction")
        return cls(build_single_particle(recipe))

    @property
    def n(self) -> int:
        return self.sp.n

    @property
    def regions(self) -> tuple[str, ...]:
        return self.sp.regions

    def h(self, w_system: np.ndarray | None = None) -> np.ndarray:
        return self.sp.h_total(w_system)

    def check_blocks(self) -> None:
        """Reservoir blocks must not couple to each other or to the system directly."""
        h = self.sp.h0()
        regions = np.array(self.regions)
        cross = regions[:, None] != regions[None, :]
        if max_norm(np.where(cross, h, 0.0)) > 0:
            raise StructuralError("uncoupled Hamiltonian has inter-region entries")
        v = self.sp.v
        res = np.char.startswith(regions.astype(str), "R")
        if max_norm(np.where(res[:, None] & res[None, :], v, 0.0)) > 0:
            raise StructuralError("coupling connects reservoir modes directly")


def check_correlation(c: np.ndarray, tol: float = SPECTRUM_TOL) -> np.ndarray:
    if hermiticity_error(c) > HERMITIAN_TOL * 10:
        raise StructuralError("correlation matrix is not Hermitian")
    lam = eigvalsh(0.5 * (c + c.conj().T))
    if lam.size and (lam[0] < -tol or lam[-1] > 1 + tol):
        raise StructuralError(f"correlation spectrum [{lam[0]:.3e}, {lam[-1]:.6f}] leaves [0, 1]")
    return c


def fermi_from_generator(k: np.ndarray) -> np.ndarray:
    """``(1 + e^k)^{-1}`` for a Hermitian single-particle modular generator."""
    dec = eigh(k)
    c = dec.apply(lambda x: expit(-x))
    return 0.5 * (c + c.conj().T)


def gibbs_correlation(h: np.ndarray, beta: float, mu: float = 0.0) -> np.ndarray:
    """Grand-canonical correlation matrix ``(1 + exp(beta (h - mu)))^{-1}``."""
    check_hermitian(h, name="single-particle Hamiltonian")
    return fermi_from_generator(beta * (np.asarray(h) - mu * np.eye(h.shape[0])))


def evolve_correlation(c0: np.ndarray, path, t_span, output_times=None, tol: float = 1e-10, steps_per_unit=None):
    """``C(t) = u(t) C0 u(t)^dag`` at the output times of a single-particle propagator trace."""
    from .evolution import DEFAULT_STEPS_PER_UNIT, propagate

    trace = propagate(path, t_span, output_times, tol, steps_per_unit or DEFAULT_STEPS_PER_UNIT)
    return trace.times, [u @ c0 @ u.conj().T for u in trace.unitaries]


def _binary_entropy(lam: np.ndarray) -> float:
    lam = np.clip(lam, 0.0, 1.0)
    out = 0.0
    for p in (lam, 1.0 - lam):
        nz = p[p > 0]
        out -= float(np.sum(nz * np.log(nz)))
    return out


def entropy_from_correlation(c: np.ndarray) -> float:
    return _binary_entropy(eigvalsh(0.5 * (c + c.conj().T)))


def entropies_from_correlation(c: np.ndarray, modes: Sequence[int] | None = None) -> EntropyReport:
    idx = list(range(c.shape[0])) if modes is None else list(modes)
    block = c[np.ix_(idx, idx)]
    lam = eigvalsh(0.5 * (block + block.conj().T))
    return EntropyReport(_binary_entropy(lam), None, tuple(float(x) for x in lam))


def gaussian_relative_entropy(c1: np.ndarray, c2: np.ndarray, support_tol: float = 1e-14) -> float:
    """Relative entropy ``S(rho_1 | rho_2)`` of two number-conserving Gaussian states.

    Writing ``rho_2 ~ exp(-c^dag k c)`` with ``k = ln((1 - C_2) / C_2)``,
    ``S = -S(C_1) + Tr(k C_1) - Tr ln(1 - C_2)``.  Returns ``inf`` when
    ``rho_1`` has weight outside the support of ``rho_2``.
    """
    dec = eigh(0.5 * (c2 + c2.conj().T))
    lam = dec.eigenvalues
    q = dec.eigenvectors
    c1_eig = q.conj().T @ c1 @ q
    occ1 = np.real(np.diag(c1_eig))
    # an eigenmode of C_2 that is surely empty (full) must be empty (full) in rho_1
    empty = lam <= support_tol
    full = lam >= 1 - support_tol
    if np.any(occ1[empty] > support_tol) or np.any(occ1[full] < 1 - support_tol):
        return float("inf")
    ok = ~(empty | full)
    lo, hi = lam[ok], 1.0 - lam[ok]
    k = np.log(hi) - np.log(lo)
    val = -entropy_from_correlation(c1) + float(np.sum(k * occ1[ok])) - float(np.sum(np.log(hi)))
    # frozen modes contribute nothing when rho_1 agrees with them
    return max(val, 0.0) if val > -1e-10 else val


def wick_three_point(c: np.ndarray, a: np.ndarray, b: np.ndarray, d: np.ndarray) -> complex:
    """``<A B D>`` for bilinears ``A = c^dag a c`` etc. in the Gaussian state ``C``."""
    cb = np.eye(c.shape[0]) - c
    ta, tb, td = (np.trace(x @ c) for x in (a, b, d))
    return (
        ta * tb * td
        + ta * np.trace(b @ cb @ d @ c)
        + td * np.trace(a @ cb @ b @ c)
        + tb * np.trace(a @ cb @ d @ c)
        + np.trace(a @ cb @ b @ cb @ d @ c)
        - np.trace(a @ cb @ d @ c @ b @ c)
    )


def wick_two_point(c: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    """``<A B>`` for bilinears in the Gaussian state ``C``."""
    cb = np.eye(c.shape[0]) - c
    return np.trace(a @ c) * np.trace(b @ c) + np.trace(a @ cb @ b @ c)


def ledger_from_correlation(*args, cocycle: bool = False, **kwargs):
    """Thermodynamic ledger evaluated with correlation matrices.

    The cocycle form of the heat is not available on this backend.
    """
    if cocycle:
        raise CapabilityError("the cocycle heat formula needs the Fock backend")
    from .thermo import evolve_ledger

    return evolve_ledger(*args, want_cocycle=False, **kwargs)
