"""Drive schedules ``W(t) = W_0 + g(t) (W_f - W_0)``.

``W_0`` and ``W_f`` are ``n_S x n_S`` single-particle matrices on the system
sites.  A staircase of ``N`` steps starts step ``j`` at
``T~_{j-1} = T_1 + ... + T_{j-1}`` and ramps for ``t0`` with the profile
``phi``, so ``g = (j - 1 + phi((t - T~_{j-1}) / t0)) / N`` on that step.  A
stepwise drive is the one-step staircase whose only wait is the full horizon.
``t0 = 0`` means an instantaneous jump at the start of each step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .linalg import check_hermitian


def _quintic(s):
    return s**3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _quintic_prime(s):
    return 30.0 * s * s * (1.0 - s) ** 2


def _cubic(s):
    return s * s * (3.0 - 2.0 * s)


def _cubic_prime(s):
    return 6.0 * s * (1.0 - s)


PROFILES: dict[str, tuple[Callable, Callable]] = {
    "quintic": (_quintic, _quintic_prime),
    "cubic": (_cubic, _cubic_prime),
}


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    kind: str  # "ramp" or "hold"
    step: int  # 1-based staircase step


@dataclass(frozen=True)
class DriveSchedule:
    kind: str
    w0: np.ndarray
    wf: np.ndarray
    t0: float
    waits: tuple[float, ...]
    profile: str = "quintic"

    def __post_init__(self):
        if self.kind not in ("stepwise", "staircase"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.profile not in PROFILES:
            raise ConfigurationError(f"unknown ramp profile {self.profile!r}; choose from {sorted(PROFILES)}")
        w0 = np.asarray(self.w0, dtype=complex)
        wf = np.asarray(self.wf, dtype=complex)
        if w0.ndim != 2 or w0.shape != wf.shape:
            raise ConfigurationError(f"W0 and Wf must be square matrices of equal shape, got {w0.shape}, {wf.shape}")
        check_hermitian(w0, name="W0")
        check_hermitian(wf, name="Wf")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "wf", wf)
        if self.t0 < 0:
            raise ConfigurationError("ramp duration t0 must be non-negative")
        if not self.waits:
            raise ConfigurationError("at least one wait duration is required")
        if self.kind == "stepwise" and len(self.waits) != 1:
            raise ConfigurationError("a stepwise schedule has exactly one wait (the horizon T)")
        for j, tj in enumerate(self.waits):
            if tj < self.t0:
                raise ConfigurationError(f"wait T_{j + 1} = {tj} is shorter than the ramp t0 = {self.t0}")

    @classmethod
    def stepwise(cls, w0, wf, t0: float, horizon: float, profile: str = "quintic") -> "DriveSchedule":
        return cls("stepwise", w0, wf, float(t0), (float(horizon),), profile)

    @classmethod
    def staircase(cls, w0, wf, t0: float, n_steps: int, wait, profile: str = "quintic") -> "DriveSchedule":
        if n_steps < 1:
            raise ConfigurationError("staircase needs at least one step")
        waits = tuple(float(wait) for _ in range(n_steps)) if np.isscalar(wait) else tuple(map(float, wait))
        if len(waits) != n_steps:
            raise ConfigurationError(f"expected {n_steps} wait durations, got {len(waits)}")
        return cls("staircase", w0, wf, float(t0), waits, profile)

    @property
    def n_steps(self) -> int:
        return len(self.waits)

    @property
    def delta_w(self) -> np.ndarray:
        return (self.wf - self.w0) / self.n_steps

    @property
    def total_time(self) -> float:
        return float(sum(self.waits))

    @property
    def step_starts(self) -> tuple[float, ...]:
        """``T~_0 = 0, T~_1, ..., T~_{N-1}``."""
        return tuple(float(x) for x in np.concatenate([[0.0], np.cumsum(self.waits)[:-1]]))

    def w_step(self, j: int) -> np.ndarray:
        """Plateau value ``W_j = W_0 + j (W_f - W_0) / N``."""
        return self.w0 + j * self.delta_w

    def _locate(self, t: float) -> tuple[int, float]:
        starts = self.step_starts
        j = int(np.searchsorted(starts, t, side="right"))  # 1-based step containing t
        j = min(max(j, 1), self.n_steps)
        return j, t - starts[j - 1]

    def g(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= self.total_time:
            return 1.0
        j, tau = self._locate(t)
        phi, _ = PROFILES[self.profile]
        frac = 1.0 if self.t0 == 0 or tau >= self.t0 else float(phi(tau / self.t0))
        return (j - 1 + frac) / self.n_steps

    def g_dot(self, t: float) -> float:
        if self.t0 == 0 or t <= 0.0 or t >= self.total_time:
            return 0.0
        j, tau = self._locate(t)
        if tau >= self.t0:
            return 0.0
        _, dphi = PROFILES[self.profile]
        return float(dphi(tau / self.t0)) / (self.t0 * self.n_steps)

    def w(self, t: float) -> np.ndarray:
        return self.w0 + self.g(t) * (self.wf - self.w0)

    def w_dot(self, t: float) -> np.ndarray:
        return self.g_dot(t) * (self.wf - self.w0)

    def segments(self, horizon: float | None = None) -> list[Segment]:
        """Ramp and hold intervals covering ``[0, horizon]`` (default: total time)."""
        end = self.total_time if horizon is None else float(horizon)
        out = []
        for j, (s, tj) in enumerate(zip(self.step_starts, self.waits), start=1):
            if s >= end:
                break
            if self.t0 > 0:
                out.append(Segment(s, min(s + self.t0, end), "ramp", j))
            if s + self.t0 < end:
                out.append(Segment(s + self.t0, min(s + tj, end), "hold", j))
        if end > self.total_time:
            out.append(Segment(self.total_time, end, "hold", self.n_steps))
        return [seg for seg in out if seg.end > seg.start]

    def jumps(self) -> list[tuple[float, float]]:
        """``(time, delta g)`` for instantaneous steps (only when ``t0 = 0``)."""
        if self.t0 > 0:
            return []
        return [(s, 1.0 / self.n_steps) for s in self.step_starts]

    def hold_value(self, segment: Segment) -> float:
        return segment.step / self.n_steps


def commuting_with_number(schedule: DriveSchedule, n_system: np.ndarray, lift, times: Sequence[float], tol=1e-12) -> float:
    """Largest ``||[N_S, W(t)]||_max`` over ``times`` for a lifting map ``lift``."""
    worst = 0.0
    for t in times:
        w = lift(schedule.w(t))
        worst = max(worst, float(np.max(np.abs(n_system @ w - w @ n_system))))
    if worst > tol:
        raise ConfigurationError(f"drive does not conserve the system particle number: {worst:.3e}")
    return worst
