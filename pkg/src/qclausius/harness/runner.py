"""Sweep execution, persistence and result files.

Each ``kappa`` cell is an independent job.  Finished cells are appended to
``cells.jsonl`` (one JSON object per line, flushed per cell); a re-run replays
that file and only computes the missing keys.  The CSV, the summary and the
plot data are always rebuilt from the persisted records, so an interrupted
and resumed run produces the same bytes as an uninterrupted one.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..processes import CellResult, ReferenceChain, convergence_study, protocol_cell, reduce_cells, deficit_constant
from ..schedule import DriveSchedule
from ..states import extrapolate_kappa_squared
from ..thermo import ThermoLedger
from .config import ExperimentConfig

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "config_hash",
    "protocol",
    "backend",
    "reservoir_sites",
    "kappa",
    "N_steps",
    "T_wait",
    "beta",
    "mu",
    "Q_balance",
    "Q_cocycle",
    "W_T",
    "Z_T",
    "S_initial",
    "S_final",
    "rel_entropy_sum",
    "clausius_gap",
    "budget",
    "status",
)
WORKERS_ENV = "QCLAUSIUS_WORKERS"
RECORDS = "cells.jsonl"


@dataclass(frozen=True, order=True)
class CellKey:
    reservoir_sites: int
    n_steps: int
    t_wait: float
    kappa: float

    def as_list(self) -> list:
        return [self.reservoir_sites, self.n_steps, self.t_wait, self.kappa]

    @property
    def group(self) -> tuple[int, int, float]:
        return (self.reservoir_sites, self.n_steps, self.t_wait)


def resolve_wait(cfg: ExperimentConfig, sites: int, value) -> float:
    if value == "auto":
        hop = abs(cfg.model.reservoirs[0].hopping)
        return 0.5 * sites / (2.0 * hop)
    return float(value)


def cell_keys(cfg: ExperimentConfig) -> list[CellKey]:
    keys = set()
    for sites in cfg.sweep.reservoir_sites:
        for n in cfg.sweep.n_steps:
            for tw in cfg.sweep.t_wait:
                for k in cfg.sweep.kappa:
                    keys.add(CellKey(sites, n, resolve_wait(cfg, sites, tw), float(k)))
    return sorted(keys)


def build_schedule(cfg: ExperimentConfig, n_steps: int, wait: float) -> DriveSchedule:
    s = cfg.schedule
    if cfg.protocol == "stepwise":
        return DriveSchedule.stepwise(s.w0, s.wf, s.t0, wait, s.profile)
    return DriveSchedule.staircase(s.w0, s.wf, s.t0, n_steps, wait, s.profile)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def compute_cell(cfg: ExperimentConfig, key: CellKey) -> dict:
    """Run one cell; numerical failures become a ``fail`` record instead of an exception."""
    start = time.perf_counter()
    rec = {"key": key.as_list()}
    try:
        sched = build_schedule(cfg, key.n_steps, key.t_wait)
        cell = protocol_cell(
            cfg.recipe(key.reservoir_sites, key.kappa),
            sched,
            key.kappa,
            cfg.backend,
            cfg.tolerances.ledger,
            cfg.steps_per_unit,
        )
        rec.update(
            status="ok",
            backend=cell.backend,
            beta=cell.beta,
            mu=cell.mu,
            ledger=_plain(asdict(cell.ledger)),
            reference=_plain(asdict(cell.reference)),
            system_entropy=[cell.system_entropy_initial, cell.system_entropy_final],
        )
    except Exception as err:  # the run goes on; the cell is marked failed
        rec.update(status="fail", error=f"{type(err).__name__}: {err}", trace=traceback.format_exc(limit=3))
    rec["seconds"] = time.perf_counter() - start
    return rec


def _cell_from_record(rec: dict) -> CellResult:
    led = dict(rec["ledger"])
    for name in ("stage_boundaries", "sample_times", "sample_heat", "relative_entropies"):
        led[name] = tuple(led[name])
    ref = rec["reference"]
    return CellResult(
        kappa=float(rec["key"][3]),
        backend=rec["backend"],
        beta=rec["beta"],
        mu=rec["mu"],
        ledger=ThermoLedger(**led),
        reference=ReferenceChain(ref["entropy_initial"], ref["entropy_final"], tuple(ref["deficits"])),
        system_entropy_initial=rec["system_entropy"][0],
        system_entropy_final=rec["system_entropy"][1],
    )


class RecordStore:
    """Append-only JSON-lines file of finished cells."""

    def __init__(self, path: Path):
        self.path = path

    def load(self) -> dict[CellKey, dict]:
        out = {}
        if not self.path.exists():
            return out
        raw = self.path.read_bytes()
        if raw and not raw.endswith(b"\n"):
            # a crash mid-write leaves a torn last line; drop it
            raw = raw[: raw.rfind(b"\n") + 1]
            self.path.write_bytes(raw)
        for line in raw.decode().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            out[CellKey(*rec["key"])] = rec
        return out

    def append(self, rec: dict) -> None:
        with self.path.open("a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def worker_count(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    if cfg.workers:
        return cfg.workers
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


def _execute(cfg: ExperimentConfig, todo: list[CellKey], store: RecordStore, workers: int) -> None:
    if not todo:
        return
    if workers == 1 or len(todo) == 1:
        for key in todo:
            log.info("cell %s", key)
            store.append(compute_cell(cfg, key))
        return
    with ProcessPoolExecutor(max_workers=min(workers, len(todo))) as pool:
        futures = {pool.submit(compute_cell, cfg, key): key for key in todo}
        for fut in as_completed(futures):
            log.info("cell %s done", futures[fut])
            store.append(fut.result())  # single writer: the parent process


# ---------------------------------------------------------------- result files


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    v = float(x)
    # shortest string that round-trips; integral values drop the ".0"
    return str(int(v)) if v.is_integer() and abs(v) < 1e16 else repr(v)


def _nan_row(cfg, h, key, backend, status):
    row = dict.fromkeys(CSV_COLUMNS, float("nan"))
    row.update(config_hash=h, protocol=cfg.protocol, backend=backend, reservoir_sites=key.reservoir_sites, kappa=key.kappa, N_steps=key.n_steps, T_wait=key.t_wait, Q_cocycle=None, status=status)
    return row


def summarize(cfg: ExperimentConfig, records: dict[CellKey, dict]) -> tuple[list[dict], dict]:
    """CSV rows (one per cell plus an extrapolated ``kappa = 0`` row per group) and the summary."""
    h = cfg.config_hash()
    groups: dict[tuple, list[CellKey]] = {}
    for key in sorted(records):
        groups.setdefault(key.group, []).append(key)
    rows, verdicts = [], []
    for gkey in sorted(groups):
        keys = sorted(groups[gkey], key=lambda k: -k.kappa)
        recs = [records[k] for k in keys]
        sites, n, wait = gkey
        failed = [k for k, r in zip(keys, recs) if r["status"] != "ok"]
        entry = {"reservoir_sites": sites, "N_steps": n, "T_wait": wait, "kappas": [k.kappa for k in keys]}
        if failed:
            for k, r in zip(keys, recs):
                rows.append(_nan_row(cfg, h, k, r.get("backend", cfg.backend), "fail"))
            entry.update(status="fail", errors=[records[k].get("error") for k in failed])
            verdicts.append(entry)
            continue
        cells = [_cell_from_record(r) for r in recs]
        sched = build_schedule(cfg, n, wait)
        v = reduce_cells(cells, sched, cfg.protocol if cfg.protocol != "convergence" else "staircase")
        ref = cells[0].reference
        for c in cells:
            led = c.ledger
            rows.append(
                dict(
                    config_hash=h,
                    protocol=cfg.protocol,
                    backend=c.backend,
                    reservoir_sites=sites,
                    kappa=c.kappa,
                    N_steps=n,
                    T_wait=wait,
                    beta=c.beta,
                    mu=c.mu,
                    Q_balance=led.Q_balance,
                    Q_cocycle=led.Q_cocycle,
                    W_T=led.W_T,
                    Z_T=led.Z_T,
                    S_initial=ref.entropy_initial,
                    S_final=ref.entropy_final,
                    rel_entropy_sum=sum(ref.deficits),
                    clausius_gap=c.clausius_gap,
                    budget=v.budget,
                    status=v.status,
                )
            )
        kap = [c.kappa for c in cells]

        def ext(vals):
            return float(extrapolate_kappa_squared(kap, vals)) if len(vals) > 1 else float(vals[0])

        qc = [c.ledger.Q_cocycle for c in cells]
        beta = cells[0].beta
        rows.append(
            dict(
                config_hash=h,
                protocol=cfg.protocol,
                backend=cells[0].backend,
                reservoir_sites=sites,
                kappa=0.0,
                N_steps=n,
                T_wait=wait,
                beta=beta,
                mu=cells[0].mu,
                Q_balance=v.beta_q / beta,
                Q_cocycle=None if any(q is None for q in qc) else ext(qc),
                W_T=ext([c.ledger.W_T for c in cells]),
                Z_T=ext([c.ledger.Z_T for c in cells]),
                S_initial=ref.entropy_initial,
                S_final=ref.entropy_final,
                rel_entropy_sum=sum(ref.deficits),
                clausius_gap=v.clausius_gap,
                budget=v.budget,
                status=v.status,
            )
        )
        w0 = np.asarray(cfg.schedule.w0)
        wf = np.asarray(cfg.schedule.wf)
        entry.update(
            status=v.status,
            beta_q=v.beta_q,
            delta_s=v.delta_s,
            deficits=list(v.deficits),
            deficit_constant=deficit_constant(v, w0, wf),
            predicted_beta_q=v.predicted_beta_q,
            clausius_gap=v.clausius_gap,
            residual=v.residual,
            budget=v.budget,
            budget_parts=v.budget_parts,
            warnings=list(v.warnings),
            heat_mismatch=None if math.isnan(v.heat_mismatch) else v.heat_mismatch,
            _verdict=v,
        )
        verdicts.append(entry)
    summary = {"name": cfg.name, "config_hash": h, "protocol": cfg.protocol, "groups": verdicts}
    if cfg.protocol == "convergence":
        summary["convergence"] = _convergence(cfg, verdicts)
    statuses = [g["status"] for g in verdicts] + [c["status"] for c in summary.get("convergence", [])]
    summary["status"] = "fail" if "fail" in statuses else ("inconclusive" if "inconclusive" in statuses else ("warning" if "warning" in statuses else "pass"))
    for g in verdicts:
        g.pop("_verdict", None)
    return rows, _plain(summary)


def _convergence(cfg: ExperimentConfig, verdicts: list[dict]) -> list[dict]:
    out = []
    series: dict[tuple, list[dict]] = {}
    for g in verdicts:
        series.setdefault((g["reservoir_sites"], g["T_wait"]), []).append(g)
    for (sites, wait), gs in sorted(series.items()):
        gs = sorted(gs, key=lambda g: g["N_steps"])
        entry = {"reservoir_sites": sites, "T_wait": wait, "N": [g["N_steps"] for g in gs]}
        if any("_verdict" not in g for g in gs) or len(gs) < 4:
            entry.update(status="fail", slope=None)
            out.append(entry)
            continue
        rep = convergence_study(
            cfg.recipe(sites, max(cfg.sweep.kappa)),
            cfg.schedule.w0,
            cfg.schedule.wf,
            cfg.schedule.t0,
            entry["N"],
            cfg.sweep.kappa,
            wait,
            slope_band=(cfg.tolerances.slope_low, cfg.tolerances.slope_high),
            verdicts=[g["_verdict"] for g in gs],
        )
        status = {"pass": "pass", "fail": "fail"}.get(rep.status, "inconclusive")
        entry.update(
            status=status,
            detail=rep.status,
            slope=rep.slope,
            intercept=rep.intercept,
            gaps=list(rep.gaps),
            budgets=list(rep.budgets),
            monotone=rep.monotone,
            deficit_constants=list(rep.deficit_constants),
            slope_band=list(rep.slope_band),
        )
        out.append(entry)
    return out


def write_csv(rows: list[dict], path: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([fmt(r[c]) for c in CSV_COLUMNS])
    path.write_text(buf.getvalue())


def write_plot_data(summary: dict, outdir: Path) -> list[Path]:
    paths = []
    for c in summary.get("convergence", []):
        if c.get("gaps") is None:
            continue
        p = outdir / f"convergence_L{c['reservoir_sites']}_T{fmt(c['T_wait'])}.dat"
        lines = ["# N  abs_betaQ_minus_dS  budget  deficit_constant"]
        for n, g, b, k in zip(c["N"], c["gaps"], c["budgets"], c["deficit_constants"]):
            lines.append(f"{n} {fmt(g)} {fmt(b)} {fmt(k)}")
        p.write_text("\n".join(lines) + "\n")
        paths.append(p)
    return paths


@dataclass
class RunOutcome:
    outdir: Path
    computed: int
    skipped: int
    failed_cells: int
    summary: dict

    @property
    def exit_code(self) -> int:
        return 1 if self.failed_cells else 0


def run_experiment(cfg: ExperimentConfig, outdir: str | Path | None = None, workers: int | None = None) -> RunOutcome:
    out = Path(outdir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    store = RecordStore(out / RECORDS)
    meta = out / "config.json"
    h = cfg.config_hash()
    if meta.exists():
        old = json.loads(meta.read_text()).get("config_hash")
        if old != h:
            raise FileExistsError(f"{out} holds results of a different config ({old[:12]}); choose another directory")
    else:
        meta.write_text(json.dumps({"config_hash": h, "config": json.loads(cfg.canonical_json())}, indent=2, sort_keys=True) + "\n")
    done = store.load()
    todo = [k for k in cell_keys(cfg) if k not in done]
    _execute(cfg, todo, store, workers or worker_count(cfg))
    records = store.load()
    rows, summary = summarize(cfg, {k: records[k] for k in cell_keys(cfg)})
    write_csv(rows, out / "results.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n")
    write_plot_data(summary, out)
    failed = sum(1 for k in cell_keys(cfg) if records[k]["status"] != "ok")
    return RunOutcome(out, len(todo), len(cell_keys(cfg)) - len(todo), failed, summary)
