"""Equilibrium states, entropies and the finite-dimensional KMS condition.

States are built from a modular generator ``K`` with ``rho = exp(-K)/Z``
(the "temperature -1" convention).  Physical inverse temperatures enter only
through the constructors of ``K``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ConsistencyError
from .fock import ModelSpec
from .linalg import (
    LOG_FLOOR,
    SpectralDecomposition,
    check_density,
    check_hermitian,
    eigh,
    eigvalsh,
    expm_h,
    max_norm,
    partial_trace,
    trace_pair,
)

SUPPORT_TOL = 1e-14


@dataclass(frozen=True)
class ModularGenerator:
    K: np.ndarray

    def __post_init__(self):
        check_hermitian(self.K, name="modular generator")

    @classmethod
    def reservoir_product(cls, model: ModelSpec) -> "ModularGenerator":
        """``sum_j beta_j (H_j - mu_j N_j) - D_S``."""
        k = -model.d_system.copy()
        for j, h in enumerate(model.h_reservoirs):
            k = k + model.betas[j] * (h - model.mus[j] * model.n_reservoir(j))
        return cls(k)

    @classmethod
    def coupled_equilibrium(cls, model: ModelSpec, w_full: np.ndarray | None = None) -> "ModularGenerator":
        """``beta (H_1 + H_S + W + kappa V - mu N_tot)`` for a single reservoir."""
        if model.n_reservoirs != 1:
            raise ConfigurationError(f"a single reservoir is required, got {model.n_reservoirs}")
        beta, mu = model.betas[0], model.mus[0]
        return cls(beta * (model.hamiltonian(w_full) - mu * model.n_total))


def _gibbs_from_decomposition(dec: SpectralDecomposition) -> np.ndarray:
    w = dec.eigenvalues - dec.eigenvalues[0]  # shift so the largest weight is 1
    p = np.exp(-w)
    p /= p.sum()
    return dec.apply(lambda _: p)


def gibbs_state(K) -> np.ndarray:
    """``exp(-K) / Tr exp(-K)``, evaluated with ``K`` shifted by its minimum eigenvalue."""
    k = K.K if isinstance(K, ModularGenerator) else K
    rho = _gibbs_from_decomposition(eigh(k))
    return 0.5 * (rho + rho.conj().T)


def system_marginal(model: ModelSpec, rho: np.ndarray) -> np.ndarray:
    return partial_trace(rho, model.system_dims, keep=[0])


def reservoir_marginal(model: ModelSpec, rho: np.ndarray) -> np.ndarray:
    return partial_trace(rho, model.system_dims, keep=[1])


def system_gibbs(model: ModelSpec, w_system: np.ndarray, beta: float, mu: float = 0.0) -> np.ndarray:
    """``exp(-beta (W - mu N_S)) / Xi`` on the system factor."""
    ns = len(model.single_particle.system_modes)
    op = model.system_operator(np.asarray(w_system) - mu * np.eye(ns))
    return gibbs_state(beta * op)


def driven_initial_state(model: ModelSpec, w0_system: np.ndarray) -> np.ndarray:
    """Grand-canonical state of the coupled model with the initial drive ``W_0``."""
    if model.n_reservoirs != 1:
        raise ConfigurationError(
            f"the driven single-bath protocol needs exactly one reservoir, got {model.n_reservoirs}"
        )
    w_full = model.lift_system(w0_system)
    return gibbs_state(ModularGenerator.coupled_equilibrium(model, w_full))


def kms_boundary_check(rho: np.ndarray, K, a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> float:
    """``|Tr(rho A sigma_{-i}(B)) - Tr(rho B A)|`` with ``sigma_x(B) = e^{-iKx} B e^{iKx}``."""
    k = K.K if isinstance(K, ModularGenerator) else np.asarray(K)
    dec = eigh(k)
    ref = _gibbs_from_decomposition(dec)
    dev = max_norm(ref - rho)
    if dev > tol:
        raise ConsistencyError(f"rho is not the Gibbs state of K: deviation {dev:.3e} > {tol:.1e}")
    # sigma_{-i}(B) = e^{-K} B e^{K}; a constant shift of K cancels
    shifted = SpectralDecomposition(dec.eigenvalues - dec.eigenvalues.mean(), dec.eigenvectors)
    sigma_b = expm_h(shifted, -1.0) @ b @ expm_h(shifted, 1.0)
    return abs(trace_pair(rho, a @ sigma_b) - trace_pair(rho, b @ a))


def _entropy_from_probabilities(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def vn_entropy(rho: np.ndarray) -> float:
    check_density(rho)
    lam = np.clip(eigvalsh(0.5 * (rho + rho.conj().T)), 0.0, None)
    return _entropy_from_probabilities(lam)


def relative_entropy(rho: np.ndarray, sigma: np.ndarray, floor: float = LOG_FLOOR) -> float:
    """``Tr rho (ln rho - ln sigma)``; ``inf`` when ``rho`` has weight outside the support of ``sigma``."""
    check_density(rho, name="rho")
    check_density(sigma, name="sigma")
    ds = eigh(sigma)
    kernel = ds.eigenvalues <= SUPPORT_TOL
    if np.any(kernel):
        q = ds.eigenvectors[:, kernel]
        leak = float(np.real(np.einsum("ik,ij,jk->", q.conj(), rho, q)))
        if leak > SUPPORT_TOL:
            return float("inf")
    dr = eigh(rho)
    lam = np.clip(dr.eigenvalues, 0.0, None)
    s_rho = -_entropy_from_probabilities(lam)
    log_sigma = ds.apply(lambda x: np.log(np.maximum(x, floor)))
    cross = float(np.real(trace_pair(rho, log_sigma)))
    val = s_rho - cross
    # round-off below zero is clipped; anything larger is left visible
    return max(val, 0.0) if val > -1e-10 else val


@dataclass(frozen=True)
class EntropyReport:
    vn_entropy: float
    relative_entropy: float | None = None
    spectrum: tuple[float, ...] = ()

    def __post_init__(self):
        if self.relative_entropy is not None and self.relative_entropy < -1e-10:
            raise ConsistencyError(f"negative relative entropy {self.relative_entropy:.3e}")


def entropy_report(rho: np.ndarray, sigma: np.ndarray | None = None) -> EntropyReport:
    lam = eigvalsh(0.5 * (rho + rho.conj().T))
    rel = relative_entropy(rho, sigma) if sigma is not None else None
    return EntropyReport(vn_entropy(rho), rel, tuple(float(x) for x in lam))


@dataclass(frozen=True)
class KappaLimitReport:
    kappas: tuple[float, ...]
    deviations: tuple[float, ...]
    deviation: float  # of the kappa -> 0 extrapolation
    monotone: bool
    marginals: tuple[np.ndarray, ...] = field(repr=False, default=())


def extrapolate_kappa_squared(kappas: Sequence[float], values: Sequence) -> np.ndarray:
    """Value at ``kappa = 0`` of the polynomial in ``kappa^2`` through the samples.

    Works elementwise on arrays; with three samples this is ``a + b k^2 + c k^4``.
    """
    x = np.asarray(kappas, dtype=float) ** 2
    if len(set(x)) != len(x):
        raise ConfigurationError("kappa values must have distinct magnitudes")
    vals = np.asarray(values)
    # Lagrange weights at x = 0
    w = np.array([np.prod([-x[m] / (x[k] - x[m]) for m in range(len(x)) if m != k]) for k in range(len(x))])
    return np.tensordot(w, vals, axes=(0, 0))


def perturbed_kms_limit_check(
    model: ModelSpec, w_system: np.ndarray, kappas: Sequence[float] = (0.2, 0.1, 0.05)
) -> KappaLimitReport:
    """System marginal of the coupled equilibrium state, extrapolated to ``kappa = 0``.

    The deviation is measured against ``exp(-beta (W - mu N_S)) / Xi`` in max-entry norm.
    """
    beta, mu = model.betas[0], model.mus[0]
    target = system_gibbs(model, w_system, beta, mu)
    w_full = model.lift_system(w_system)
    marginals, devs = [], []
    for k in kappas:
        rho = gibbs_state(ModularGenerator.coupled_equilibrium(model.with_kappa(k), w_full))
        m = system_marginal(model, rho)
        marginals.append(m)
        devs.append(max_norm(m - target))
    if all(k == 0 for k in kappas):
        return KappaLimitReport(tuple(kappas), tuple(devs), 0.0, True, tuple(marginals))
    ext = extrapolate_kappa_squared(kappas, marginals) if len(kappas) > 1 else marginals[0]
    order = np.argsort(np.abs(kappas))[::-1]
    seq = [devs[i] for i in order]
    monotone = all(seq[i + 1] <= seq[i] + 1e-15 for i in range(len(seq) - 1))
    if not monotone:
        warnings.warn("marginal deviations are not monotone in kappa; the reservoir may be too small", RuntimeWarning)
    return KappaLimitReport(tuple(kappas), tuple(devs), max_norm(ext - target), monotone, tuple(marginals))
