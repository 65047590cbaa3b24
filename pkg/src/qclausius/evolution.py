"""Time evolution for ``H(t) = H_static + g(t) D``.

Conventions
-----------
All propagators returned here are Schroedinger propagators
``U(t) = T exp(-i int H)``; states evolve as ``rho_t = U rho U^dag`` and the
Heisenberg picture is ``tau_t(A) = U^dag A U``.  This is the single
conversion point between the two pictures.

Ramps use the symmetric splitting
``U(t + h) = e^{-i S h/2} e^{-i g(t + h/2) D h} e^{-i S h/2} U(t)``, which is
the exponential midpoint rule in the interaction picture of the static part
``S``: its error is governed by ``[S, D]`` rather than by ``|S|``, and every
factor comes from two cached eigendecompositions.  Holds (constant ``g``)
are propagated exactly.  Step control halves ``h`` until the Richardson
estimate ``|X_h - X_{h/2}| / 3`` meets the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import NumericalError, ParameterError
from .linalg import SpectralDecomposition, check_hermitian, eigh, expm_h, max_norm, op_norm
from .schedule import DriveSchedule, Segment

DEFAULT_STEPS_PER_UNIT = 32
MAX_REFINEMENTS = 10


@dataclass
class DrivenHamiltonian:
    """``H(t) = static + g(t) * direction`` with ``g`` from a schedule (or ``g = 0``)."""

    static: np.ndarray
    direction: np.ndarray | None = None
    schedule: DriveSchedule | None = None
    _cache: dict = field(default_factory=dict, repr=False)
    _split: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        check_hermitian(self.static, name="static Hamiltonian")
        if self.direction is None:
            self.direction = np.zeros_like(self.static)
        check_hermitian(self.direction, name="drive direction")

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    def g(self, t: float) -> float:
        return 0.0 if self.schedule is None else self.schedule.g(t)

    def at(self, t: float) -> np.ndarray:
        return self.static + self.g(t) * self.direction

    def at_g(self, g: float) -> np.ndarray:
        return self.static + g * self.direction

    def decomposition(self, g: float) -> SpectralDecomposition:
        key = float(g)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = eigh(self.at_g(key))
        return self._cache[key]

    @property
    def direction_decomposition(self) -> SpectralDecomposition:
        if "D" not in self._split:
            self._split["D"] = eigh(self.direction)
        return self._split["D"]

    def split_factors(self, h: float, sign: float = -1.0, outer=None):
        """Cached ``(E V_D, V_D^dag E)`` with ``E = e^{sign i S h/2}``.

        ``outer`` (a decomposition ``B``) replaces ``S`` by ``S - B`` inside and
        wraps ``e^{sign i B h/2}`` around, for the interaction picture of ``B``.
        """
        key = (float(h), sign, id(outer))
        f = self._split.get(key)
        if f is None:
            if len(self._split) > 32:
                d = self._split.get("D")
                self._split.clear()
                if d is not None:
                    self._split["D"] = d
            vd = self.direction_decomposition.eigenvectors
            if outer is None:
                half = expm_h(self.decomposition(0.0), sign * 0.5j * h)
                left, right = half, half
            else:
                # entries hold ``outer`` so its id stays unique while cached
                cached = self._split.get(("inner", id(outer)))
                if cached is None:
                    cached = self._split[("inner", id(outer))] = (eigh(self.static - outer.reconstruct()), outer)
                inner = cached[0]
                eo = expm_h(outer, sign * 0.5j * h)
                ei = expm_h(inner, sign * 0.5j * h)
                left, right = eo @ ei, ei @ eo
            f = self._split[key] = (left @ vd, vd.conj().T @ right, outer)
        return f[:2]

    def ramp_step(self, tm: float, h: float) -> np.ndarray:
        """Schroedinger step over ``[tm - h/2, tm + h/2]``."""
        left, right = self.split_factors(h)
        ph = np.exp(-1j * h * self.g(tm) * self.direction_decomposition.eigenvalues)
        return (left * ph) @ right

    def heisenberg_step(self, tm: float, h: float, outer: SpectralDecomposition) -> np.ndarray:
        """``e^{iBh/2} e^{i(S-B)h/2} e^{i g D h} e^{i(S-B)h/2} e^{iBh/2}``."""
        left, right = self.split_factors(h, 1.0, outer)
        ph = np.exp(1j * h * self.g(tm) * self.direction_decomposition.eigenvalues)
        return (left * ph) @ right

    def segments(self, start: float, end: float) -> list[tuple[Segment, float]]:
        """Segments clipped to ``[start, end]`` with the hold value of ``g`` (``nan`` on ramps)."""
        if self.schedule is None:
            return [(Segment(start, end, "hold", 0), 0.0)]
        out = []
        for seg in self.schedule.segments(max(end, self.schedule.total_time)):
            a, b = max(seg.start, start), min(seg.end, end)
            if b <= a:
                continue
            val = self.schedule.hold_value(seg) if seg.kind == "hold" else float("nan")
            out.append((Segment(a, b, seg.kind, seg.step), val))
        first = out[0][0].start if out else end
        if start < first:  # before the schedule starts
            out.insert(0, (Segment(start, first, "hold", 0), 0.0))
        return out

    def jumps(self, start: float, end: float) -> list[tuple[float, float]]:
        if self.schedule is None:
            return []
        return [(s, dg) for s, dg in self.schedule.jumps() if start <= s < end]


# events produced while marching along a path
@dataclass(frozen=True)
class Step:
    t0: float
    t1: float
    propagator: np.ndarray
    ramp: bool


@dataclass(frozen=True)
class Node:
    t: float
    segment: int
    last: bool


@dataclass(frozen=True)
class Jump:
    t: float
    dg: float


def ramp_step_count(length: float, steps_per_unit: int) -> int:
    n = max(2, math.ceil(length * steps_per_unit))
    return n + (n % 2)  # even, so Simpson's rule applies on the nodes


def march(
    path: DrivenHamiltonian,
    start: float,
    end: float,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
    sample_times: Sequence[float] = (),
    midpoint=None,
) -> Iterator[Step | Node | Jump]:
    """Yield propagator steps, ramp nodes and jumps from ``start`` to ``end``.

    Hold segments are split at ``sample_times``; ramp nodes are emitted at
    every step boundary (including both ends).  ``midpoint(t, h)`` may replace
    the default ramp step :meth:`DrivenHamiltonian.ramp_step`.
    """
    samples = sorted(float(s) for s in sample_times if start < s < end)
    jumps = path.jumps(start, end)
    for idx, (seg, gval) in enumerate(path.segments(start, end)):
        for tj, dg in jumps:
            if tj == seg.start:
                yield Jump(tj, dg)
        a, b = seg.start, seg.end
        if seg.kind == "ramp":
            n = ramp_step_count(b - a, steps_per_unit)
            h = (b - a) / n
            yield Node(a, idx, False)
            for k in range(n):
                ta, tb = a + k * h, (a + (k + 1) * h if k + 1 < n else b)
                tm = a + (k + 0.5) * h
                p = midpoint(tm, h) if midpoint is not None else path.ramp_step(tm, h)
                yield Step(ta, tb, p, True)
                yield Node(tb, idx, k + 1 == n)
        else:
            dec = path.decomposition(gval)
            cuts = [a] + [s for s in samples if a < s < b] + [b]
            for ta, tb in zip(cuts[:-1], cuts[1:]):
                yield Step(ta, tb, expm_h(dec, -1j * (tb - ta)), False)


def _has_ramps(path: DrivenHamiltonian, start: float, end: float) -> bool:
    return any(seg.kind == "ramp" for seg, _ in path.segments(start, end))


@dataclass(frozen=True)
class PropagatorTrace:
    times: tuple[float, ...]
    unitaries: tuple[np.ndarray, ...]
    steps_per_unit: int
    error_estimate: float

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise ParameterError(f"time {t} is not a stored output time")
        return self.unitaries[k]

    def unitarity_drift(self) -> float:
        return max(max_norm(u @ u.conj().T - np.eye(u.shape[0])) for u in self.unitaries)


def _propagate_once(path, start, end, steps_per_unit, outputs) -> list[np.ndarray]:
    u = np.eye(path.dim, dtype=complex)
    stored = {}
    targets = sorted(set(outputs))
    if targets and targets[0] <= start:
        stored[targets[0]] = u.copy()
    for ev in march(path, start, end, steps_per_unit, sample_times=targets):
        if isinstance(ev, Step):
            u = ev.propagator @ u
            for t in targets:
                if t not in stored and abs(ev.t1 - t) <= 1e-12 * max(1.0, abs(t)):
                    stored[t] = u.copy()
    for t in targets:
        if t not in stored:
            raise ParameterError(f"output time {t} does not fall on the step grid of [{start}, {end}]")
    return [stored[t] for t in targets]


def refine(compute, tol: float, steps_per_unit: int, needed: bool, metric):
    """Double the resolution until the Richardson estimate drops below ``tol``.

    ``compute(n)`` returns a result at ``n`` steps per unit time, ``metric(a, b)``
    the distance between two results.  Returns ``(fine, coarse, n, estimate)``.
    """
    coarse = compute(steps_per_unit)
    if not needed:
        return coarse, coarse, steps_per_unit, 0.0
    n = steps_per_unit
    history = []
    for _ in range(MAX_REFINEMENTS):
        fine = compute(2 * n)
        est = metric(coarse, fine) / 3.0
        history.append(est)
        if est <= tol:
            return fine, coarse, 2 * n, est
        if len(history) >= 3 and history[-1] > 0.5 * history[-3]:
            raise NumericalError(f"step control stalled: Richardson estimates {history}")
        coarse, n = fine, 2 * n
    raise NumericalError(f"step control did not reach tol={tol:.1e}; estimates {history}")


def propagate(
    path: DrivenHamiltonian,
    t_span: tuple[float, float],
    output_times: Sequence[float] | None = None,
    tol: float = 1e-10,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
) -> PropagatorTrace:
    """Schroedinger propagator ``U(t <- t_span[0])`` stored at ``output_times``."""
    start, end = map(float, t_span)
    if end < start:
        raise ParameterError("t_span must be increasing")
    if output_times is None:
        output_times = sorted({start, end} | {s.end for s, _ in path.segments(start, end)})
    outputs = sorted(set(float(t) for t in output_times))

    def compute(n):
        return _propagate_once(path, start, end, n, outputs)

    def metric(a, b):
        return max(max_norm(x - y) for x, y in zip(a, b))

    fine, _, n, est = refine(compute, tol, steps_per_unit, _has_ramps(path, start, end), metric)
    return PropagatorTrace(tuple(outputs), tuple(fine), n, est)


@dataclass(frozen=True)
class CocycleTrace:
    times: tuple[float, ...]
    unitaries: tuple[np.ndarray, ...]
    steps_per_unit: int
    error_estimate: float

    def at(self, t: float) -> np.ndarray:
        return PropagatorTrace.at(self, t)  # same lookup rule


def _cocycle_once(path, base_dec, start, end, n, outputs, exact_holds) -> list[np.ndarray]:
    # carries G = Gamma_t e^{iBt}: the step Gamma <- Gamma e^{iB t_a} M e^{-iB t_b}
    # becomes G <- G M, with M the Heisenberg step of the interaction-picture
    # midpoint rule, e^{iB t_m} e^{i h X(t_m)} e^{-iB t_m} conjugated back
    def phase(t):  # e^{iBt}
        return expm_h(base_dec, 1j * t)

    def heis(tm, h):
        return path.heisenberg_step(tm, h, base_dec)

    g = phase(start)
    stored = {}
    targets = sorted(set(outputs))
    if targets and targets[0] <= start:
        stored[targets[0]] = np.eye(path.dim, dtype=complex)
    if exact_holds:
        events = march(path, start, end, n, targets, midpoint=heis)
    else:
        events = _all_midpoint(path, start, end, n, targets, heis)
    for ev in events:
        if isinstance(ev, Step):
            # ramp steps carry M itself; holds carry the exact Schroedinger factor
            g = g @ (ev.propagator if ev.ramp else ev.propagator.conj().T)
            for t in targets:
                if t not in stored and abs(ev.t1 - t) <= 1e-12 * max(1.0, abs(t)):
                    stored[t] = g @ phase(-t)
    return [stored[t] for t in targets]


def _all_midpoint(path, start, end, n, targets, heis):
    """Midpoint stepping on every segment, holds included (used for verification)."""
    cuts = sorted({start, end} | {t for t in targets if start < t < end} | {s.end for s, _ in path.segments(start, end)})
    for a, b in zip(cuts[:-1], cuts[1:]):
        m = ramp_step_count(b - a, n)
        h = (b - a) / m
        for k in range(m):
            ta, tb = a + k * h, (a + (k + 1) * h if k + 1 < m else b)
            yield Step(ta, tb, heis(a + (k + 0.5) * h, h), True)


def cocycle(
    path: DrivenHamiltonian,
    base: np.ndarray,
    t_span: tuple[float, float],
    output_times: Sequence[float] | None = None,
    tol: float = 1e-10,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
    exact_holds: bool = True,
) -> CocycleTrace:
    """Interaction-picture cocycle ``Gamma_t`` relative to the base evolution ``B``.

    ``Gamma`` solves ``dGamma/dt = i Gamma e^{iBt} X(t) e^{-iBt}`` with
    ``X(t) = H(t) - B`` and ``Gamma_0 = 1``, so that
    ``tau_t(A) = Gamma_t e^{iBt} A e^{-iBt} Gamma_t^dag``.  Ramps use the
    midpoint rule of this equation; holds use its closed-form solution unless
    ``exact_holds`` is false.
    """
    start, end = map(float, t_span)
    if output_times is None:
        output_times = sorted({start, end} | {s.end for s, _ in path.segments(start, end)})
    outputs = sorted(set(float(t) for t in output_times))
    base_dec = eigh(base)

    def compute(n):
        return _cocycle_once(path, base_dec, start, end, n, outputs, exact_holds)

    def metric(a, b):
        return max(max_norm(x - y) for x, y in zip(a, b))

    needed = (not exact_holds) or _has_ramps(path, start, end)
    fine, _, n, est = refine(compute, tol, steps_per_unit, needed, metric)
    return CocycleTrace(tuple(outputs), tuple(fine), n, est)


def cocycle_fixed(path: DrivenHamiltonian, base: np.ndarray, horizon: float, steps_per_unit: int) -> np.ndarray:
    """``Gamma_T`` at a fixed ramp resolution (no step control)."""
    return _cocycle_once(path, eigh(base), 0.0, float(horizon), steps_per_unit, [0.0, float(horizon)], True)[-1]


def small_system_unitary(
    schedule: DriveSchedule,
    times: Sequence[float],
    lift=None,
    tol: float = 1e-10,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
) -> list[np.ndarray]:
    """``u_t`` solving ``du/dt = i u W(t)``, ``u_0 = 1``, at each of ``times``.

    ``lift`` maps the schedule's single-particle matrices to the representation
    in which ``u`` is wanted (identity by default).
    """
    lift = lift or (lambda x: x)
    path = DrivenHamiltonian(lift(schedule.w0), lift(schedule.wf - schedule.w0), schedule)
    times = [float(t) for t in times]
    trace = propagate(path, (0.0, max(times + [0.0])), sorted(set(times) | {0.0}), tol, steps_per_unit)
    return [trace.at(t).conj().T for t in times]


# ---------------------------------------------------------------- Dyson series

GL_NODES = 16


def _gl_panel_matrices(order: int = GL_NODES):
    """Gauss-Legendre nodes/weights on [-1, 1] and the spectral integration matrix.

    ``S[k, m] = int_{-1}^{x_k} L_m(x) dx`` with ``L_m`` the Lagrange basis on the nodes.
    """
    from numpy.polynomial import legendre as leg

    x, w = leg.leggauss(order)
    vander = leg.legvander(x, order - 1)
    q = np.zeros((order, order))
    for j in range(order):
        c = np.zeros(order + 1)
        c[j] = 1.0
        anti = leg.legint(c, lbnd=-1.0)
        q[:, j] = leg.legval(x, anti)
    return x, w, q @ np.linalg.inv(vander)


@dataclass(frozen=True)
class DysonResult:
    y: np.ndarray
    n_max: int
    truncation_bound: float
    panels: int
    quadrature_estimate: float


def _dyson_once(dec: SpectralDecomposition, p_eig: np.ndarray, t: float, n_max: int, panels: int) -> np.ndarray:
    x, w, s = _gl_panel_matrices()
    lam = dec.eigenvalues
    dim = lam.size
    length = t / panels
    f_prev_nodes = None
    totals = [np.eye(dim, dtype=complex)]
    # G at every node, in the eigenbasis of B: G_ab(s) = P_ab e^{i(l_a - l_b)s}
    nodes = np.concatenate([(p + 0.5) * length + 0.5 * length * x for p in range(panels)])
    diff = lam[:, None] - lam[None, :]
    g_nodes = p_eig[None, :, :] * np.exp(1j * diff[None, :, :] * nodes[:, None, None])
    f_prev_nodes = np.broadcast_to(np.eye(dim, dtype=complex), (nodes.size, dim, dim))
    for _ in range(n_max):
        integrand = f_prev_nodes @ g_nodes
        f_nodes = np.empty_like(integrand)
        acc = np.zeros((dim, dim), dtype=complex)
        for p in range(panels):
            blk = integrand[p * GL_NODES : (p + 1) * GL_NODES]
            f_nodes[p * GL_NODES : (p + 1) * GL_NODES] = acc + 0.5 * length * np.einsum("km,mij->kij", s, blk)
            acc = acc + 0.5 * length * np.einsum("m,mij->ij", w, blk)
        f_nodes *= 1j
        totals.append(1j * acc)
        f_prev_nodes = f_nodes
    y_eig = sum(totals)
    q = dec.eigenvectors
    return q @ y_eig @ q.conj().T


def dyson_series(
    base: np.ndarray,
    perturbation: np.ndarray,
    t: float,
    n_max: int = 12,
    tol: float = 1e-8,
    panels: int | None = None,
) -> DysonResult:
    """Truncated series for ``Y_t`` solving ``dY/dt = i Y G(t)``, ``G(s) = e^{iBs} P e^{-iBs}``.

    ``Y_t = 1 + sum_n i^n int_{0<s_1<...<s_n<t} G(s_1) ... G(s_n)``; the
    nested integrals use composite 16-point Gauss-Legendre panels and a
    spectral integration matrix.  With ``base = -H`` and ``perturbation = V``
    this is ``Y_t = e^{-i(H-V)t} e^{iHt}``.
    """
    if not 0 <= n_max <= 12:
        raise ParameterError(f"n_max must lie in [0, 12], got {n_max}")
    check_hermitian(base, name="base generator")
    check_hermitian(perturbation, name="perturbation")
    pn = op_norm(perturbation)
    bound = (pn * abs(t)) ** (n_max + 1) / math.factorial(n_max + 1)
    if bound > tol:
        need = next((k for k in range(n_max, 60) if (pn * abs(t)) ** (k + 1) / math.factorial(k + 1) <= tol), None)
        raise ParameterError(f"truncation bound {bound:.3e} exceeds tol {tol:.1e}; need n_max >= {need}")
    if t == 0 or pn == 0:
        return DysonResult(np.eye(base.shape[0], dtype=complex), n_max, bound, 0, 0.0)
    dec = eigh(base)
    p_eig = dec.eigenvectors.conj().T @ perturbation @ dec.eigenvectors
    spread = float(dec.eigenvalues[-1] - dec.eigenvalues[0])
    if panels is None:
        panels = max(1, math.ceil(abs(t) * (spread + pn) / 4.0))
    y = _dyson_once(dec, p_eig, t, n_max, panels)
    y2 = _dyson_once(dec, p_eig, t, n_max, 2 * panels)
    return DysonResult(y2, n_max, bound, 2 * panels, max_norm(y2 - y))
