"""Dense Hermitian kernels.

Every matrix function in the package goes through :func:`eigh`, so the
exponential, logarithm and Gibbs weights share one deterministic code path.
Conventions: operators are ``numpy`` complex arrays, the max-entry norm is
``max|A_ij|`` and :func:`op_norm` is the spectral norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ParameterError, RangeError, StructuralError

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
TRACE_TOL = 1e-12
MIN_EIGENVALUE_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10
LOG_FLOOR = 1e-300
EXP_LIMIT = 700.0


def max_norm(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def op_norm(a: np.ndarray) -> float:
    """Spectral norm; exact for Hermitian input via its eigenvalues."""
    if a.size == 0:
        return 0.0
    if hermiticity_error(a) <= HERMITIAN_TOL:
        return float(np.max(np.abs(eigvalsh(0.5 * (a + a.conj().T)))))
    return float(np.linalg.norm(a, 2))


def _square(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"{name}: expected a square matrix, got shape {a.shape}")
    return a


def hermiticity_error(a: np.ndarray) -> float:
    """Max-entry deviation from hermiticity relative to the largest entry."""
    a = _square(a, "hermiticity_error")
    scale = max_norm(a)
    if scale == 0.0:
        return 0.0
    return max_norm(a - a.conj().T) / scale


def check_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL, name: str = "operator") -> np.ndarray:
    err = hermiticity_error(a)
    if err > tol:
        raise StructuralError(f"{name} is not Hermitian: relative deviation {err:.3e} > {tol:.1e}")
    return np.asarray(a)


def check_unitary(u: np.ndarray, tol: float = UNITARY_TOL, name: str = "operator") -> np.ndarray:
    u = _square(u, name)
    err = max_norm(u @ u.conj().T - np.eye(u.shape[0]))
    if err > tol:
        raise StructuralError(f"{name} is not unitary: ||U U^dag - I||_max = {err:.3e} > {tol:.1e}")
    return u


def check_density(
    rho: np.ndarray,
    herm_tol: float = HERMITIAN_TOL,
    trace_tol: float = TRACE_TOL,
    eig_tol: float = MIN_EIGENVALUE_TOL,
    name: str = "density matrix",
) -> np.ndarray:
    rho = check_hermitian(rho, herm_tol, name)
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise StructuralError(f"{name}: trace {tr.real:.15g} differs from 1 by more than {trace_tol:.1e}")
    lam_min = float(np.min(eigvalsh(0.5 * (rho + rho.conj().T))))
    if lam_min < -eig_tol:
        raise StructuralError(f"{name}: minimum eigenvalue {lam_min:.3e} below -{eig_tol:.1e}")
    return rho


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues and the unitary whose columns are eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.conj().T

    def apply(self, f) -> np.ndarray:
        """Return ``Q f(Lambda) Q^dag`` for a vectorised scalar function."""
        q = self.eigenvectors
        return (q * f(self.eigenvalues)) @ q.conj().T


def _fix_phases(q: np.ndarray, tol: float) -> np.ndarray:
    q = q.copy()
    for k in range(q.shape[1]):
        col = q[:, k]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size:
            z = col[nz[0]]
            q[:, k] = col * (abs(z) / z)
    return q


def _lex_key(col: np.ndarray) -> tuple:
    # rounding keeps the order stable against last-bit noise
    return tuple(np.round(np.column_stack([col.real, col.imag]).ravel(), 12))


def _lapack_eigh(h: np.ndarray):
    # the divide-and-conquer driver occasionally fails to converge on benign input
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError:
        return sla.eigh(h, driver="evr")


def eigvalsh(h: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError:
        return sla.eigh(h, eigvals_only=True, driver="evr")


def eigh(a: np.ndarray, herm_tol: float = HERMITIAN_TOL, tie_tol: float = 1e-12) -> SpectralDecomposition:
    """Deterministic Hermitian eigendecomposition.

    Each eigenvector is phase-fixed so its first non-negligible component is
    real-positive; within a degenerate cluster (eigenvalues closer than
    ``tie_tol * max(1, |lambda|_max)``) columns are ordered lexicographically.
    """
    a = _square(a, "eigh")
    check_hermitian(a, herm_tol, "eigh input")
    h = 0.5 * (a + a.conj().T)
    w, q = _lapack_eigh(h)
    q = _fix_phases(q.astype(complex, copy=False), 1e-10)
    if w.size > 1:
        scale = tie_tol * max(1.0, float(np.max(np.abs(w))))
        start = 0
        order = np.arange(w.size)
        for k in range(1, w.size + 1):
            if k == w.size or w[k] - w[k - 1] > scale:
                if k - start > 1:
                    idx = sorted(range(start, k), key=lambda j: _lex_key(q[:, j]))
                    order[start:k] = idx
                start = k
        q = q[:, order]
        w = w[order]
    return SpectralDecomposition(np.ascontiguousarray(w), np.ascontiguousarray(q))


def _as_decomposition(a) -> SpectralDecomposition:
    return a if isinstance(a, SpectralDecomposition) else eigh(a)


def expm_h(a, scale: complex) -> np.ndarray:
    """``exp(scale * A)`` for Hermitian ``A`` (or a precomputed decomposition).

    Raises :class:`RangeError` when an exponent's real part exceeds 700.
    """
    scale = complex(scale)
    if not np.isfinite(scale):
        raise ParameterError(f"expm_h: non-finite scale {scale}")
    dec = _as_decomposition(a)
    z = scale * dec.eigenvalues
    worst = float(np.max(z.real)) if z.size else 0.0
    if worst > EXP_LIMIT:
        raise RangeError(f"expm_h: exponent real part {worst:.6g} exceeds {EXP_LIMIT:g}")
    q = dec.eigenvectors
    return (q * np.exp(z)) @ q.conj().T


def logm_pd(rho, floor: float = LOG_FLOOR) -> np.ndarray:
    """Matrix logarithm of a density matrix with eigenvalues clamped at ``floor``."""
    if not floor > 0:
        raise ParameterError(f"logm_pd: floor must be positive, got {floor}")
    if not isinstance(rho, SpectralDecomposition):
        check_density(rho)
    dec = _as_decomposition(rho)
    q = dec.eigenvectors
    return (q * np.log(np.maximum(dec.eigenvalues, floor))) @ q.conj().T


def kron(*ops: np.ndarray) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def partial_trace(a: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every tensor factor not listed in ``keep``.

    ``dims`` lists the factor dimensions, most significant factor first.
    """
    a = _square(a, "partial_trace")
    dims = [int(d) for d in dims]
    total = int(np.prod(dims)) if dims else 1
    if total != a.shape[0]:
        raise StructuralError(f"partial_trace: factor dims {dims} do not multiply to {a.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise StructuralError(f"partial_trace: keep indices {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = a.reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    # contract the traced factors pairwise, highest index first so axes stay valid
    for k in sorted(traced, reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + m)
    d = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d, d)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise StructuralError(f"commutator: shape mismatch {a.shape} vs {b.shape}")
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise StructuralError(f"anticommutator: shape mismatch {a.shape} vs {b.shape}")
    return a @ b + b @ a


def trace_pair(rho: np.ndarray, a: np.ndarray) -> complex:
    """``Tr(rho A)`` without forming the product."""
    if rho.shape != a.shape:
        raise StructuralError(f"trace_pair: shape mismatch {rho.shape} vs {a.shape}")
    return complex(np.einsum("ij,ji->", rho, a))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (x + x.conj().T)


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random density matrix (Ginibre ensemble)."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
