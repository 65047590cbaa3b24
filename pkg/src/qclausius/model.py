"""Model recipes and their single-particle blocks.

A recipe describes a small system of ``system_sites`` fermionic levels coupled
to ``M`` uniform tight-binding chains.  Both backends are built from the same
:class:`SingleParticleModel`, which keeps every block embedded in the full
``n x n`` single-particle space:

* ``h_system`` -- on-site energies and intra-system hopping,
* ``h_reservoirs[j]`` -- the ``j``-th chain,
* ``v`` -- the system-reservoir bonds (without the coupling constant),
* ``projectors[region]`` -- diagonal projectors onto each region's modes.

Mode order: system sites first, then each reservoir chain starting at the site
adjacent to the system.  ``mode_order`` relabels modes without changing the
physics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ReservoirRecipe:
    sites: int
    hopping: float = 1.0
    onsite: float = 0.0
    beta: float = 1.0
    mu: float = 0.0
    system_site: int = 0

    @property
    def recurrence_time(self) -> float:
        # one-way transit at the maximal group velocity 2*hopping
        return self.sites / (2.0 * abs(self.hopping))


@dataclass(frozen=True)
class ModelRecipe:
    reservoirs: tuple[ReservoirRecipe, ...]
    kappa: float = 0.1
    system_sites: int = 1
    system_onsite: tuple[float, ...] = ()
    system_hopping: float = 0.0
    interaction: float = 0.0
    system_bias: tuple[float, ...] = ()  # optional D_S diagonal, used only by K_omega
    mode_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.system_sites < 1:
            raise ConfigurationError("system_sites must be at least 1")
        if not self.reservoirs:
            raise ConfigurationError("at least one reservoir is required")
        for j, r in enumerate(self.reservoirs):
            if r.sites < 1:
                raise ConfigurationError(f"reservoir {j + 1}: sites must be positive")
            if not 0 <= r.system_site < self.system_sites:
                raise ConfigurationError(f"reservoir {j + 1}: system_site {r.system_site} out of range")
        if self.system_onsite and len(self.system_onsite) != self.system_sites:
            raise ConfigurationError("system_onsite must list one energy per system site")
        if self.system_bias and len(self.system_bias) != self.system_sites:
            raise ConfigurationError("system_bias must list one value per system site")
        n = self.n_modes
        if self.mode_order is not None and sorted(self.mode_order) != list(range(n)):
            raise ConfigurationError(f"mode_order must be a permutation of range({n})")

    @property
    def n_modes(self) -> int:
        return self.system_sites + sum(r.sites for r in self.reservoirs)

    @property
    def is_quadratic(self) -> bool:
        return self.interaction == 0.0

    @property
    def recurrence_time(self) -> float:
        return min(r.recurrence_time for r in self.reservoirs)

    def with_kappa(self, kappa: float) -> "ModelRecipe":
        return _replace(self, kappa=float(kappa))

    def with_reservoirs(self, **changes) -> "ModelRecipe":
        res = tuple(_replace(r, **changes) for r in self.reservoirs)
        return _replace(self, reservoirs=res)


def _replace(obj, **changes):
    from dataclasses import replace

    return replace(obj, **changes)


@dataclass(frozen=True)
class SingleParticleModel:
    regions: tuple[str, ...]  # region label per mode ("S", "R1", ...)
    sites: tuple[int, ...]  # site index within its region
    h_system: np.ndarray
    h_reservoirs: tuple[np.ndarray, ...]
    v: np.ndarray
    v_bonds: tuple[tuple[int, int], ...]  # (system mode, reservoir mode) per bond
    kappa: float
    betas: tuple[float, ...]
    mus: tuple[float, ...]
    d_system: np.ndarray
    interaction: float = 0.0
    projectors: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.regions)

    @property
    def n_reservoirs(self) -> int:
        return len(self.h_reservoirs)

    def modes(self, region: str) -> list[int]:
        return [m for m, r in enumerate(self.regions) if r == region]

    @property
    def system_modes(self) -> list[int]:
        return self.modes("S")

    def h0(self) -> np.ndarray:
        return self.h_system + sum(self.h_reservoirs)

    def h_total(self, w_system: np.ndarray | None = None) -> np.ndarray:
        h = self.h0() + self.kappa * self.v
        if w_system is not None:
            h = h + self.embed_system(w_system)
        return h

    def embed_system(self, w: np.ndarray) -> np.ndarray:
        """Embed an ``n_S x n_S`` matrix acting on system sites into the full space."""
        sm = self.system_modes
        w = np.asarray(w)
        if w.shape != (len(sm), len(sm)):
            raise ConfigurationError(f"system operator must be {len(sm)}x{len(sm)}, got {w.shape}")
        out = np.zeros((self.n, self.n), dtype=complex)
        out[np.ix_(sm, sm)] = w
        return out


def build_single_particle(recipe: ModelRecipe) -> SingleParticleModel:
    ns = recipe.system_sites
    n = recipe.n_modes
    regions: list[str] = ["S"] * ns
    sites: list[int] = list(range(ns))
    for j, r in enumerate(recipe.reservoirs):
        regions += [f"R{j + 1}"] * r.sites
        sites += list(range(r.sites))

    h_s = np.zeros((n, n), dtype=complex)
    onsite = recipe.system_onsite or (0.0,) * ns
    for i in range(ns):
        h_s[i, i] = onsite[i]
        if i + 1 < ns:
            h_s[i, i + 1] = h_s[i + 1, i] = -recipe.system_hopping
    h_res = []
    v = np.zeros((n, n), dtype=complex)
    bonds = []
    offset = ns
    for r in recipe.reservoirs:
        h = np.zeros((n, n), dtype=complex)
        for k in range(r.sites):
            h[offset + k, offset + k] = r.onsite
            if k + 1 < r.sites:
                h[offset + k, offset + k + 1] = h[offset + k + 1, offset + k] = -r.hopping
        h_res.append(h)
        v[r.system_site, offset] += 1.0
        v[offset, r.system_site] += 1.0
        bonds.append((r.system_site, offset))
        offset += r.sites
    d_s = np.zeros((n, n), dtype=complex)
    for i, b in enumerate(recipe.system_bias):
        d_s[i, i] = b

    perm = recipe.mode_order
    if perm is not None:
        # new mode k is old mode perm[k]
        p = np.asarray(perm)
        inv = np.argsort(p)
        regions = [regions[i] for i in p]
        sites = [sites[i] for i in p]
        take = np.ix_(p, p)
        h_s, v, d_s = h_s[take], v[take], d_s[take]
        h_res = [h[take] for h in h_res]
        bonds = [(int(inv[a]), int(inv[b])) for a, b in bonds]
        if [m for m, r in enumerate(regions) if r == "S"] != list(range(ns)):
            raise ConfigurationError("mode_order must keep system modes first and in order")

    projectors = {}
    for label in dict.fromkeys(regions):
        p = np.zeros((n, n), dtype=complex)
        for m, r in enumerate(regions):
            if r == label:
                p[m, m] = 1.0
        projectors[label] = p

    return SingleParticleModel(
        regions=tuple(regions),
        sites=tuple(sites),
        h_system=h_s,
        h_reservoirs=tuple(h_res),
        v=v,
        v_bonds=tuple(bonds),
        kappa=float(recipe.kappa),
        betas=tuple(float(r.beta) for r in recipe.reservoirs),
        mus=tuple(float(r.mu) for r in recipe.reservoirs),
        d_system=d_s,
        interaction=float(recipe.interaction),
        projectors=projectors,
    )


def reservoir_permutation(recipe: ModelRecipe, reversed_reservoirs: Sequence[int] = (0,)) -> tuple[int, ...]:
    """Mode order that reverses the labels of the listed reservoirs' sites."""
    order = list(range(recipe.system_sites))
    offset = recipe.system_sites
    for j, r in enumerate(recipe.reservoirs):
        block = list(range(offset, offset + r.sites))
        order += block[::-1] if j in reversed_reservoirs else block
        offset += r.sites
    return tuple(order)
