"""Self-checking acceptance suite.

Every criterion is a function taking keyword parameters (tolerances, model
sizes) and returning a :class:`CriterionResult`.  ``verify_suite`` runs them
at a level and accepts per-criterion overrides, e.g. ``{1: {"tol": 0.0}}``.
"""

from __future__ import annotations

import json
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import ConsistencyError
from ..backends import FockBackend, QuadraticBackend, make_backend
from ..evolution import DrivenHamiltonian, cocycle, dyson_series
from ..linalg import max_norm, op_norm, random_hermitian
from ..model import ModelRecipe, ReservoirRecipe
from ..processes import (
    convergence_study,
    deficit_constant,
    ledger_problem,
    protocol_cell,
    run_staircase,
    run_stepwise,
    staircase_schedule,
)
from ..schedule import DriveSchedule
from ..states import kms_boundary_check
from ..thermo import evolve_ledger, maclennan_zubarev_identity, entropy_production_growth


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metric: float | None
    threshold: float | None
    seconds: float
    detail: dict = field(default_factory=dict)

    @property
    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        m = "n/a" if self.metric is None else f"{self.metric:.3e}"
        t = "n/a" if self.threshold is None else f"{self.threshold:.3e}"
        return f"[{tag}] criterion {self.number:2d}: {self.title} (metric {m}, threshold {t}, {self.seconds:.1f}s)"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["status"] = "pass" if self.passed else "fail"
        return d


def _timed(number: int, title: str, fn: Callable[[], tuple[bool, float | None, float | None, dict]]) -> CriterionResult:
    t = time.perf_counter()
    ok, metric, threshold, detail = fn()
    return CriterionResult(number, title, bool(ok), metric, threshold, time.perf_counter() - t, detail)


# ---------------------------------------------------------------- 1-4: identities


def criterion_1(tol: float = 1e-7, times=(1.0, 2.0, 3.0), kappa: float = 0.3) -> CriterionResult:
    def run():
        r = ModelRecipe((ReservoirRecipe(3, beta=1.0), ReservoirRecipe(3, beta=2.0)), kappa=kappa)
        be = FockBackend(r)
        res = [maclennan_zubarev_identity(be, t) for t in times]
        worst = max(x.residual for x in res)
        return worst <= tol, worst, tol, {"residuals": [x.residual for x in res], "quadrature": [x.quadrature_error for x in res]}

    return _timed(1, "operator identity for the coupled modular generator", run)


def criterion_2(tol: float = 1e-7, kappas=(0.1, 0.2, 0.4), horizons=(2.0, 5.0, 8.0)) -> CriterionResult:
    def run():
        worst, rows = 0.0, []
        for k in kappas:
            be = FockBackend(ModelRecipe((ReservoirRecipe(4, beta=1.0, mu=0.1),), kappa=k))
            for T in horizons:
                sched = DriveSchedule.stepwise([[0.3]], [[-0.5]], 0.5, T)
                led, _ = evolve_ledger(ledger_problem(be, sched), tol=1e-9)
                rel = led.heat_mismatch / max(1.0, abs(led.Q_balance))
                worst = max(worst, rel)
                rows.append({"kappa": k, "T": T, "Q_balance": led.Q_balance, "Q_cocycle": led.Q_cocycle, "relative_mismatch": rel})
        return worst <= tol, worst, tol, {"runs": rows}

    return _timed(2, "balance heat equals cocycle heat", run)


def criterion_3(tol: float = 1e-8, kappa: float = 0.25, times=(1.0, 2.0, 4.0), n_max: int = 12) -> CriterionResult:
    def run():
        be = FockBackend(ModelRecipe((ReservoirRecipe(2, beta=1.0),), kappa=kappa))
        h = be.hamiltonian()
        v = be.kappa * be.v
        base = h - v
        worst, rows = 0.0, []
        for t in times:
            if op_norm(v) * t > 1.0 + 1e-12:
                continue
            d = dyson_series(base, v, t, n_max=n_max)
            c = cocycle(DrivenHamiltonian(h), base, (0.0, t), [0.0, t], tol=1e-10, exact_holds=False)
            err = max_norm(d.y - c.at(t))
            worst = max(worst, err)
            rows.append({"t": t, "error": err, "truncation_bound": d.truncation_bound})
        return bool(rows) and worst <= tol, worst, tol, {"runs": rows}

    return _timed(3, "truncated Dyson series matches the integrated cocycle", run)


def criterion_4(tol: float = 1e-10, pairs: int = 50, seed: int = 7) -> CriterionResult:
    def run():
        be = FockBackend(ModelRecipe((ReservoirRecipe(3, beta=1.3, mu=0.2),), kappa=0.4))
        beta, mu = be.betas[0], be.mus[0]
        k = beta * (be.hamiltonian() - mu * be.n_total)
        rho = be.gibbs(k)
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(pairs):
            a = random_hermitian(be.dim, rng) + 1j * random_hermitian(be.dim, rng)
            b = random_hermitian(be.dim, rng) + 1j * random_hermitian(be.dim, rng)
            try:
                r = kms_boundary_check(rho, k, a, b, tol=max(tol, 1e-300))
            except ConsistencyError:
                return False, None, tol, {"error": "boundary condition violated"}
            worst = max(worst, r)
        return worst <= tol, worst, tol, {"dim": be.dim, "pairs": pairs}

    return _timed(4, "KMS boundary condition on random pairs", run)


# ---------------------------------------------------------------- 5-8: protocols


def criterion_5(budget_fraction: float = 0.05, backend: str = "quadratic", sites: int = 8) -> CriterionResult:
    def run():
        r = ModelRecipe((ReservoirRecipe(sites, beta=1.0),), kappa=0.1)
        horizon = 0.5 * r.recurrence_time
        sched = DriveSchedule.stepwise([[-1.0]], [[0.5]], 0.5, horizon)
        v = run_stepwise(r, sched, (0.2, 0.1, 0.05), backend)
        ok = v.residual <= v.budget and v.budget <= budget_fraction * abs(v.delta_s) and v.clausius_gap >= -v.budget
        return ok, v.residual, v.budget, _verdict_detail(v)

    return _timed(5, "stepwise Clausius equality on the two-level benchmark", run)


STAIRCASE_BENCHMARK = dict(sites=128, w0=-1.0, wf=0.5, beta=2.0, t0=1.0, wait=32.0, kappas=(0.5, 0.4, 0.3))
_cache: dict = {}


def _staircase_verdicts(n_list, **kw):
    p = {**STAIRCASE_BENCHMARK, **kw}
    key = (tuple(n_list), tuple(sorted((k, v if not isinstance(v, tuple) else tuple(v)) for k, v in p.items())))
    if key not in _cache:
        r = ModelRecipe((ReservoirRecipe(p["sites"], beta=p["beta"]),), kappa=p["kappas"][0])
        _cache[key] = [
            run_staircase(r, staircase_schedule([[p["w0"]]], [[p["wf"]]], p["t0"], n, p["wait"]), p["kappas"]) for n in n_list
        ]
    return _cache[key]


def _verdict_detail(v) -> dict:
    return {
        "beta_q": v.beta_q,
        "delta_s": v.delta_s,
        "deficits": list(v.deficits),
        "clausius_gap": v.clausius_gap,
        "residual": v.residual,
        "budget": v.budget,
        "budget_parts": v.budget_parts,
        "status": v.status,
        "warnings": list(v.warnings),
    }


def criterion_6(n_list=(2, 4, 8), budget_scale: float = 1.0, **model) -> CriterionResult:
    def run():
        vs = _staircase_verdicts(n_list, **model)
        ratios = [v.residual / (budget_scale * v.budget) if budget_scale * v.budget > 0 else np.inf for v in vs]
        worst = max(ratios)
        return worst <= 1.0, worst, 1.0, {"N": list(n_list), "verdicts": [_verdict_detail(v) for v in vs]}

    return _timed(6, "staircase ledger identity at finite N (residual / budget)", run)


def criterion_7(n_list=(2, 4, 8, 16), band=(-1.4, -0.6), sites: int = 64) -> CriterionResult:
    def run():
        r = ModelRecipe((ReservoirRecipe(sites, beta=2.0),), kappa=0.5)
        rep = convergence_study(r, [[0.0]], [[1.5]], 1.0, list(n_list), (0.7, 0.6, 0.5), 0.5 * r.recurrence_time, "quadratic", tuple(band))
        ok = rep.status == "pass"
        return ok, rep.slope, None, {"gaps": list(rep.gaps), "budgets": list(rep.budgets), "slope": rep.slope, "band": list(band), "status": rep.status}

    return _timed(7, "O(1/N) approach of beta Q to Delta S (log-log slope)", run)


def criterion_8(n_list=(2, 4, 8), factor: float = 2.0, **model) -> CriterionResult:
    def run():
        p = {**STAIRCASE_BENCHMARK, **model}
        vs = _staircase_verdicts(n_list, **model)
        ks = [deficit_constant(v, np.array([[p["w0"]]]), np.array([[p["wf"]]])) for v in vs]
        spread = max(ks) / min(ks)
        return spread <= factor, spread, factor, {"N": list(n_list), "K_prime": ks}

    return _timed(8, "per-step deficit constant stable across N (max/min)", run)


# ---------------------------------------------------------------- 9-12


def criterion_9(rel_tol: float = 0.10, control_tol: float = 0.05, window=(3.0, 5.5), kappa: float = 0.6) -> CriterionResult:
    def run():
        r = ModelRecipe((ReservoirRecipe(6, beta=0.5), ReservoirRecipe(6, beta=2.0)), kappa=kappa)
        ctrl = r.with_reservoirs(beta=1.25)
        times = np.linspace(0.0, 6.0, 121)
        rep = entropy_production_growth(make_backend(r), times, tuple(window), make_backend(ctrl), rel_tol, control_tol)
        detail = {
            "slope": rep.slope,
            "plateau": rep.plateau,
            "relative_error": rep.relative_error,
            "control_ratio": rep.control_ratio,
            "window": list(rep.window),
            "status": rep.status,
            "notes": rep.notes,
        }
        return rep.status == "pass", rep.relative_error, rel_tol, detail

    return _timed(9, "entropy-production integral grows at the plateau rate", run)


def bundled_quadratic_models() -> dict[str, ModelRecipe]:
    return {
        "1+3": ModelRecipe((ReservoirRecipe(3, beta=1.0, mu=0.2),), kappa=0.3),
        "2+4": ModelRecipe((ReservoirRecipe(4, beta=0.8, mu=-0.1, onsite=0.1),), kappa=0.4, system_sites=2, system_onsite=(0.2, -0.3), system_hopping=0.5),
        "3+1+3": ModelRecipe((ReservoirRecipe(3, beta=1.0), ReservoirRecipe(3, beta=2.0, mu=0.3)), kappa=0.3),
        "1+7": ModelRecipe((ReservoirRecipe(7, beta=2.0),), kappa=0.5),
    }


def _shared_quantities(be, recipe: ModelRecipe) -> dict[str, float]:
    out = {}
    ns = recipe.system_sites
    w = np.diag(np.linspace(-0.4, 0.4, ns)) if ns > 1 else np.array([[0.25]])
    if be.n_reservoirs == 1:
        x = be.coupled_gibbs(w)
    else:
        x = be.reservoir_product_state()
    out["N_S"] = be.expect(x, be.n_system)
    out["H_S"] = be.expect(x, be.h_system)
    out["V"] = be.expect(x, be.v)
    out["S_system"] = be.entropy(be.system_state(x))
    gs = be.system_gibbs(w, 1.0, 0.1)
    out["S_gibbs"] = be.entropy(gs)
    out["D_gibbs"] = be.relative_entropy(gs, be.system_gibbs(-w, 0.7, 0.0))
    for j, cur in enumerate(be.heat_currents()):
        out[f"J_{j + 1}"] = be.expect(x, cur)
    if be.n_reservoirs == 1:
        wf = -w + 0.1 * np.eye(ns)
        sched = DriveSchedule.staircase(w, wf, 0.5, 2, 1.5)
        cell = protocol_cell(recipe, sched, recipe.kappa, be.kind, tol=1e-9)
        led = cell.ledger
        out.update(Q=led.Q_balance, W=led.W_T, Z=led.Z_T, S_f=cell.system_entropy_final)
        for j, d in enumerate(cell.reference.deficits):
            out[f"D_{j + 1}"] = d
    return out


def criterion_10(tol: float = 1e-8) -> CriterionResult:
    def run():
        worst, per = 0.0, {}
        for name, recipe in bundled_quadratic_models().items():
            if recipe.n_modes > 8:
                continue
            a = _shared_quantities(FockBackend(recipe), recipe)
            b = _shared_quantities(QuadraticBackend(recipe), recipe)
            diff = {k: abs(a[k] - b[k]) for k in a}
            per[name] = max(diff.values())
            worst = max(worst, per[name])
        return worst <= tol, worst, tol, {"max_difference": per}

    return _timed(10, "Fock and quadratic backends agree", run)


def criterion_11(limit: float = 60.0, modes: int = 200, suite_elapsed: float | None = None, suite_limit: float = 300.0) -> CriterionResult:
    def run():
        r = ModelRecipe((ReservoirRecipe(modes - 1, beta=1.0),), kappa=0.3)
        sched = DriveSchedule.stepwise([[-1.0]], [[0.5]], 1.0, 0.5 * r.recurrence_time)
        t = time.perf_counter()
        cell = protocol_cell(r, sched, 0.3, "quadratic")
        dt = time.perf_counter() - t
        ok = dt <= limit and np.isfinite(cell.ledger.Q_balance)
        detail = {"seconds_200_modes": dt, "Q_balance": cell.ledger.Q_balance}
        if suite_elapsed is not None:
            detail["fast_suite_seconds"] = suite_elapsed + dt
            ok = ok and suite_elapsed + dt <= suite_limit
        return ok, dt, limit, detail

    return _timed(11, "performance budget", run)


def _determinism_config(outdir: str) -> dict:
    return {
        "name": "determinism-check",
        "protocol": "staircase",
        "backend": "quadratic",
        "seed": 3,
        "model": {"reservoirs": [{"beta": 1.5, "mu": 0.1}]},
        "schedule": {"w0": [[-0.5]], "wf": [[0.5]], "t0": 0.5},
        "sweep": {"kappa": [0.4, 0.3, 0.2], "n_steps": [1, 2], "reservoir_sites": [8], "t_wait": [2.0]},
        "tolerances": {"ledger": 1e-7},
        "output": {"directory": outdir},
    }


def criterion_12() -> CriterionResult:
    from .config import parse_config
    from .runner import RECORDS, run_experiment

    def run():
        tmp = Path(tempfile.mkdtemp(prefix="qclausius-det-"))
        try:
            cfg = parse_config(_determinism_config(str(tmp / "a")))
            a = run_experiment(cfg, tmp / "a", workers=1)
            b = run_experiment(cfg, tmp / "b", workers=1)
            csv_a = (tmp / "a" / "results.csv").read_bytes()
            same = csv_a == (tmp / "b" / "results.csv").read_bytes()
            # interrupted run: keep two finished cells plus a torn third line
            c = tmp / "c"
            c.mkdir()
            shutil.copy(tmp / "a" / "config.json", c / "config.json")
            lines = (tmp / "a" / RECORDS).read_text().splitlines(keepends=True)
            (c / RECORDS).write_text("".join(lines[:2]) + lines[2][: len(lines[2]) // 2])
            resumed = run_experiment(cfg, c, workers=1)
            same_resume = (c / "results.csv").read_bytes() == csv_a
            again = run_experiment(cfg, tmp / "a", workers=1)
            ok = same and same_resume and again.computed == 0 and resumed.computed == len(lines) - 2
            detail = {
                "repeat_identical": same,
                "resume_identical": same_resume,
                "cells": a.computed,
                "recomputed_on_resume": resumed.computed,
                "recomputed_on_rerun": again.computed,
                "summary_status": json.loads((tmp / "a" / "summary.json").read_text())["status"],
            }
            return ok, None, None, detail
        finally:
            shutil.rmtree(tmp, ignore_errors=True)

    return _timed(12, "bit-identical CSV on repeat and on resume", run)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
}
LEVELS = {
    "fast": (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12),
    "full": (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 11),
}
# the full level also repeats the two-level benchmark on the Fock backend
FULL_EXTRA = {"5f": (5, {"backend": "fock"})}


@dataclass
class SuiteReport:
    level: str
    results: list[CriterionResult]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def as_dict(self) -> dict:
        return {"level": self.level, "passed": self.passed, "seconds": self.seconds, "criteria": [r.as_dict() for r in self.results]}


def verify_suite(level: str = "fast", overrides: dict[int, dict] | None = None, only=None, echo=None) -> SuiteReport:
    """Run the acceptance criteria at ``fast`` or ``full`` level."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {sorted(LEVELS)}")
    overrides = overrides or {}
    start = time.perf_counter()
    results = []
    order = [n for n in LEVELS[level] if only is None or n in only]
    for n in order:
        kw = dict(overrides.get(n, {}))
        if n == 11 and only is None:
            # the fast level is the full run minus this criterion
            kw.setdefault("suite_elapsed", sum(r.seconds for r in results if r.number in LEVELS["fast"]))
        res = CRITERIA[n](**kw)
        results.append(res)
        if echo:
            echo(res.line)
    if level == "full" and only is None:
        for label, (n, kw) in FULL_EXTRA.items():
            res = CRITERIA[n](**{**kw, **overrides.get(n, {})})
            res.title += f" ({label}: {kw})"
            results.append(res)
            if echo:
                echo(res.line)
    results.sort(key=lambda r: r.number)
    return SuiteReport(level, results, time.perf_counter() - start)
