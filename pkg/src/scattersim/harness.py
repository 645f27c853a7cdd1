"""Seeded Monte Carlo experiment driver and report writer."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analytics
from .analytics import LatencyModel
from .cache import Cache, Domain, ATTACKER_SDID
from .covert import CovertProfileConfig, TransmissionConfig, calibrate_threshold, covert_profile, transmit
from .idf import CacheGeometry
from .profiling import (Flush, ProceedNormally, ProfilingConfig, VictimModel,
                        exploit_evict_probability, profile_eviction_set)
from .reference import REFERENCE_ROWS

log = logging.getLogger(__name__)

KINDS = ("profile", "covert", "exploit", "predict")

PROFILE_COLUMNS = ("n_ways", "b_indices", "k", "m_pr", "k_prime", "p", "A_v", "Aa_per_Av",
                   "a_miss", "time_ms")
COVERT_COLUMNS = ("n_ways", "b_indices", "f", "s", "d", "t_R", "t_T", "bin_size", "rounds",
                  "ber", "bandwidth_bps", "mean_miss_0", "mean_miss_1")
EXPLOIT_COLUMNS = ("n_ways", "b_indices", "k", "t", "A_v", "evict_probability", "time_ms")
PREDICT_COLUMNS = ("n_ways", "b_indices", "k", "t", "quantity", "value", "formula")
COLUMNS = {"profile": PROFILE_COLUMNS, "covert": COVERT_COLUMNS, "exploit": EXPLOIT_COLUMNS,
           "predict": PREDICT_COLUMNS}
UNITS = {"time_ms": "ms", "bandwidth_bps": "bit/s", "p": "1", "a_miss": "1", "ber": "1",
         "evict_probability": "1"}

TABLE_CELLS = tuple((r.n_ways, r.b_indices, r.k) for r in REFERENCE_ROWS)


class SpecError(ValueError):
    pass


def desk_trials(k: int, paper_scale: bool = False) -> int:
    if k == 1:
        return 10**7 if paper_scale else 10**4
    if k < 2000:
        return 10**5 if paper_scale else 10**3
    return 10**4 if paper_scale else 10**3


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "profile"
    cells: tuple = ()          # explicit (n_ways, b_indices, k) tuples, profile/exploit/predict
    geometries: tuple = ((8, 11),)
    k: tuple = (1,)
    t: tuple = (1,)
    f: tuple = (0.05,)
    s: tuple = (64,)
    trials: int | None = None  # None: desk-scale default per cell
    paper_scale: bool = False
    master_seed: int = 0
    mode: str = "flush"        # flush | proceed
    flush_accesses: int | None = None
    batch_size: int = 8000
    bits: int = 10_000
    pilot_bits: int = 256
    exploit_trials: int = 10_000
    latency: LatencyModel = field(default_factory=LatencyModel)
    out: str | None = None
    format: str = "csv"
    threads: int = 1
    dump_trials: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"kind: expected one of {KINDS}, got {self.kind!r}")
        if self.format not in ("csv", "json"):
            raise SpecError(f"format: expected csv or json, got {self.format!r}")
        if self.mode not in ("flush", "proceed"):
            raise SpecError(f"mode: expected flush or proceed, got {self.mode!r}")
        if self.trials is not None and self.trials < 1:
            raise SpecError("trials: must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise SpecError("seed: must be an unsigned 64-bit integer")
        for name in ("geometries", "k", "t", "f", "s"):
            if not getattr(self, name):
                raise SpecError(f"{name}: grid must be non-empty")
        for n, b in self.geometries:
            if n < 1 or b < 1:
                raise SpecError(f"geometries: invalid ({n}, {b})")

    def grid(self) -> list[dict]:
        """Cell parameter dicts in report order."""
        if self.kind == "covert":
            return [dict(n_ways=n, b_indices=b, f=f, s=s)
                    for n, b in self.geometries for f in self.f for s in self.s]
        if self.cells:
            base = [(n, b, k) for n, b, k in self.cells]
        else:
            base = [(n, b, k) for n, b in self.geometries for k in self.k]
        if self.kind == "profile":
            return [dict(n_ways=n, b_indices=b, k=k, t=t) for n, b, k in base for t in self.t]
        return [dict(n_ways=n, b_indices=b, k=k, t=t) for n, b, k in base for t in self.t]

    def cell_trials(self, cell: dict) -> int:
        if self.trials is not None:
            return self.trials
        if self.kind == "profile":
            return desk_trials(cell["k"], self.paper_scale)
        if self.kind == "predict":
            return 100
        return 1 if self.kind == "exploit" else 3


_SPEC_KEYS = {"kind", "cells", "geometries", "k", "t", "f", "s", "trials", "paper_scale", "seed",
              "mode", "flush_accesses", "batch_size", "bits", "pilot_bits", "exploit_trials",
              "latency", "out", "format", "threads", "dump_trials"}


def spec_from_mapping(data: dict[str, Any]) -> ExperimentSpec:
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise SpecError(f"unknown field(s): {', '.join(sorted(unknown))}")
    kw: dict[str, Any] = {}
    try:
        for key in ("kind", "mode", "out", "format", "dump_trials"):
            if key in data:
                kw[key] = str(data[key])
        for key in ("trials", "flush_accesses", "batch_size", "bits", "pilot_bits",
                    "exploit_trials", "threads"):
            if key in data:
                kw[key] = int(data[key])
        if "seed" in data:
            kw["master_seed"] = int(data["seed"])
        if "paper_scale" in data:
            kw["paper_scale"] = bool(data["paper_scale"])
        if "cells" in data:
            kw["cells"] = tuple(tuple(int(x) for x in c) for c in data["cells"])
            if any(len(c) != 3 for c in kw["cells"]):
                raise SpecError("cells: each cell is [n_ways, b_indices, k]")
        if "geometries" in data:
            kw["geometries"] = tuple(tuple(int(x) for x in g) for g in data["geometries"])
            if any(len(g) != 2 for g in kw["geometries"]):
                raise SpecError("geometries: each entry is [n_ways, b_indices]")
        for key, conv in (("k", int), ("t", int), ("f", float), ("s", int)):
            if key in data:
                v = data[key]
                kw[key] = tuple(conv(x) for x in (v if isinstance(v, list) else [v]))
        if "latency" in data:
            kw["latency"] = LatencyModel(**{k: float(v) for k, v in data["latency"].items()})
    except SpecError:
        raise
    except (TypeError, ValueError) as exc:
        raise SpecError(f"invalid field value: {exc}") from exc
    return ExperimentSpec(**kw)


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from exc
    try:
        return spec_from_mapping(data)
    except SpecError as exc:
        raise SpecError(f"{path}: {exc}") from exc


def trial_rng(master_seed: int, cell: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, a pure function of its coordinates."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(cell, trial)))


# per-trial workers; each returns a flat dict of numbers

def _profile_trial(spec: ExperimentSpec, cell: dict, rng: np.random.Generator) -> dict:
    geom = CacheGeometry(cell["n_ways"], cell["b_indices"])
    cache = Cache(geom, rng=rng)
    mode = Flush(spec.flush_accesses) if spec.mode == "flush" else ProceedNormally()
    rep = profile_eviction_set(cache, ProfilingConfig(k=cell["k"], t=cell["t"],
                                                      inter_iteration_mode=mode))
    return dict(iterations=rep.iterations, A_v=rep.A_v, A_a=rep.A_a,
                attacker_misses=rep.attacker_misses, prune_passes=rep.prune_passes_total,
                k_prime_total=rep.k_prime_total, successes=rep.successes,
                bound_ok=int(rep.bound_ok), bound_tight=rep.bound_tight,
                m_pr=rep.m_pr, k_prime=rep.k_prime,
                p_hat=rep.p_hat, a_miss=rep.a_miss)


def _covert_trial(spec: ExperimentSpec, cell: dict, rng: np.random.Generator) -> dict:
    cache = Cache(CacheGeometry(cell["n_ways"], cell["b_indices"]), rng=rng)
    ep = covert_profile(cache, CovertProfileConfig(batch_size=spec.batch_size, f=cell["f"]),
                        s=cell["s"])
    d = calibrate_threshold(cache, ep, cell["s"], spec.pilot_bits, spec.flush_accesses)
    msg = rng.integers(0, 2, spec.bits, dtype=np.uint8)
    rep = transmit(cache, ep, TransmissionConfig(s=cell["s"], d=d,
                                                 flush_accesses=spec.flush_accesses),
                   msg, spec.latency)
    return dict(d=d, t_R=len(ep.t_R), t_T=len(ep.t_T), bin_size=ep.bin_size, rounds=ep.rounds,
                bits=rep.bits_sent, bit_errors=rep.bit_errors, ber=rep.ber,
                modeled_time=rep.modeled_time, bandwidth_bps=rep.bandwidth,
                mean_miss_0=rep.mean_miss_count(0), mean_miss_1=rep.mean_miss_count(1))


def _exploit_trial(spec: ExperimentSpec, cell: dict, rng: np.random.Generator) -> dict:
    cache = Cache(CacheGeometry(cell["n_ways"], cell["b_indices"]), rng=rng)
    attacker = Domain(ATTACKER_SDID, "attacker")
    rep = profile_eviction_set(cache, ProfilingConfig(k=cell["k"], t=cell["t"]), attacker)
    prob = exploit_evict_probability(cache, rep.collision_addresses, attacker,
                                     trials=spec.exploit_trials,
                                     flush_accesses=spec.flush_accesses)
    return dict(A_v=rep.A_v, A_a=rep.A_a, attacker_misses=rep.attacker_misses,
                evict_probability=prob)


def _predict_trial(spec: ExperimentSpec, cell: dict, rng: np.random.Generator) -> dict:
    # a short t = 1 run supplies k', m_pr and the attacker miss mix
    return _profile_trial(spec, dict(cell, t=1), rng)


_WORKERS = {"profile": _profile_trial, "covert": _covert_trial, "exploit": _exploit_trial,
            "predict": _predict_trial}


def _run_chunk(args) -> tuple[list[dict] | None, str | None]:
    spec, cell_idx, cell, start, stop = args
    worker = _WORKERS[spec.kind]
    out = []
    try:
        for trial in range(start, stop):
            out.append(worker(spec, cell, trial_rng(spec.master_seed, cell_idx, trial)))
    except Exception as exc:  # recorded per cell, see run()
        return None, f"trial {trial}: {type(exc).__name__}: {exc}"
    return out, None


@dataclass
class FieldStats:
    mean: float
    sd: float
    se: float
    count: int


@dataclass
class CellResult:
    params: dict
    trials: int
    per_trial: dict[str, np.ndarray] = field(default_factory=dict)
    stats: dict[str, FieldStats] = field(default_factory=dict)
    row: dict[str, Any] = field(default_factory=dict)
    error: str | None = None


@dataclass
class AggregateStats:
    kind: str
    columns: tuple
    cells: list[CellResult]

    @property
    def ok(self) -> bool:
        return all(c.error is None for c in self.cells)

    def rows(self) -> list[dict]:
        out = []
        for c in self.cells:
            if self.kind == "predict":
                out.extend(c.row.get("predictions", []))
            else:
                out.append(c.row)
        return out


def field_stats(values) -> FieldStats:
    v = np.asarray(values, dtype=float)
    n = len(v)
    mean = float(v.mean()) if n else math.nan
    sd = float(v.std(ddof=1)) if n > 1 else 0.0
    return FieldStats(mean, sd, sd / math.sqrt(n) if n else math.nan, n)


def _profile_row(spec: ExperimentSpec, cell: dict, tr: dict[str, np.ndarray]) -> dict:
    it = tr["iterations"].sum()
    A_v = tr["A_v"].mean()
    Aa_per_Av = tr["A_a"].sum() / tr["A_v"].sum()
    a_miss = tr["attacker_misses"].sum() / tr["A_a"].sum()
    time_s = analytics.runtime(spec.latency, A_v, A_v * Aa_per_Av, a_miss,
                               flushing=spec.mode == "flush")
    return dict(n_ways=cell["n_ways"], b_indices=cell["b_indices"], k=cell["k"],
                m_pr=tr["prune_passes"].sum() / it, k_prime=tr["k_prime_total"].sum() / it,
                p=tr["successes"].sum() / it, A_v=A_v, Aa_per_Av=Aa_per_Av, a_miss=a_miss,
                time_ms=time_s * 1e3)


def _covert_row(spec, cell, tr):
    bits = tr["bits"].sum()
    return dict(n_ways=cell["n_ways"], b_indices=cell["b_indices"], f=cell["f"], s=cell["s"],
                d=tr["d"].mean(), t_R=tr["t_R"].mean(), t_T=tr["t_T"].mean(),
                bin_size=tr["bin_size"].mean(), rounds=tr["rounds"].mean(),
                ber=tr["bit_errors"].sum() / bits,
                bandwidth_bps=bits / tr["modeled_time"].sum(),
                mean_miss_0=tr["mean_miss_0"].mean(), mean_miss_1=tr["mean_miss_1"].mean())


def _exploit_row(spec, cell, tr):
    A_v = tr["A_v"].mean()
    a_miss = tr["attacker_misses"].sum() / tr["A_a"].sum()
    time_s = analytics.runtime(spec.latency, A_v, tr["A_a"].mean(), a_miss)
    return dict(n_ways=cell["n_ways"], b_indices=cell["b_indices"], k=cell["k"], t=cell["t"],
                A_v=A_v, evict_probability=tr["evict_probability"].mean(), time_ms=time_s * 1e3)


def predictions(n_ways: int, b_indices: int, k: int, t: int, k_prime: float, m_pr: float,
                Aa_per_Av: float, a_miss: float,
                latency: LatencyModel = LatencyModel()) -> list[analytics.Prediction]:
    N = n_ways << b_indices
    P = analytics.Prediction
    av_o = analytics.av_original(n_ways, b_indices, t)
    av_e = analytics.av_expected(n_ways, b_indices, k_prime, t)
    p = k_prime / N
    return [
        P("av_original", av_o, "n_ways^2 * 2^b_indices * t"),
        P("coupon_coverage", analytics.coupon_coverage(N, k), "N * (1 - (1 - 1/N)^k)"),
        P("k_prime", k_prime, "simulated prime+prune"),
        P("m_pr", m_pr, "simulated prime+prune"),
        P("av_expected", av_e, "n_ways * 2^b_indices * t / k_prime"),
        P("aa_upper", analytics.aa_upper(m_pr, k, t, p), "(m_pr + 2) * k * t / p"),
        P("c_bound", analytics.c_bound(n_ways, p), "min(n_ways, 1/p)"),
        P("runtime_original_s", analytics.runtime(latency, av_o, 2 * av_o, 0.0),
          "runtime(A_v = av_original, A_a = 2 A_v, a_miss = 0)"),
        P("runtime_expected_s", analytics.runtime(latency, av_e, av_e * Aa_per_Av, a_miss),
          "runtime(A_v = av_expected, A_a = A_v * simulated A_a/A_v, simulated a_miss)"),
    ]


def _predict_row(spec, cell, tr):
    a_miss = tr["attacker_misses"].sum() / tr["A_a"].sum()
    preds = predictions(cell["n_ways"], cell["b_indices"], cell["k"], cell["t"],
                        tr["k_prime_total"].sum() / tr["iterations"].sum(),
                        tr["prune_passes"].sum() / tr["iterations"].sum(),
                        tr["A_a"].sum() / tr["A_v"].sum(), a_miss, spec.latency)
    return dict(predictions=[dict(n_ways=cell["n_ways"], b_indices=cell["b_indices"],
                                  k=cell["k"], t=cell["t"], quantity=p.name, value=p.value,
                                  formula=p.formula) for p in preds])


_ROWS = {"profile": _profile_row, "covert": _covert_row, "exploit": _exploit_row,
         "predict": _predict_row}


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(n, start + size)


def run(spec: ExperimentSpec, write: bool = True) -> AggregateStats:
    """Run every cell of ``spec``; results do not depend on ``spec.threads``."""
    cells = spec.grid()
    tasks = []
    for idx, cell in enumerate(cells):
        n = spec.cell_trials(cell)
        size = max(1, n // 64) if spec.threads != 1 else n
        tasks.extend((spec, idx, cell, a, b) for a, b in _chunks(n, size))
    if spec.threads == 1:
        outputs = [_run_chunk(t) for t in tasks]
    else:
        workers = spec.threads or os.cpu_count() or 1
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_chunk, tasks))

    results = []
    for idx, cell in enumerate(cells):
        mine = [o for t, o in zip(tasks, outputs) if t[1] == idx]
        res = CellResult(cell, spec.cell_trials(cell))
        errors = [e for _, e in mine if e]
        if errors:
            res.error = errors[0]
            log.error("cell %s failed: %s", cell, res.error)
            res.row = {c: cell.get(c, math.nan) for c in COLUMNS[spec.kind]}
        else:
            records = [r for recs, _ in mine for r in recs]
            res.per_trial = {key: np.array([r[key] for r in records]) for key in records[0]}
            res.stats = {key: field_stats(v) for key, v in res.per_trial.items()}
            res.row = _ROWS[spec.kind](spec, cell, res.per_trial)
        results.append(res)
    stats = AggregateStats(spec.kind, COLUMNS[spec.kind], results)
    if write:
        text = emit_report(stats, spec.format)
        if spec.out:
            write_text(spec.out, text)
        else:
            sys.stdout.write(text)
        if spec.dump_trials:
            write_text(spec.dump_trials, dump_trials(stats))
    return stats


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.4g}"
    return str(x)


def _round4(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.4g}") if math.isfinite(x) else None
    return x


def emit_report(stats: AggregateStats, format: str = "csv") -> str:
    """Render the report; CSV keeps the fixed column order, JSON adds units."""
    rows = stats.rows()
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(stats.columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in stats.columns])
        return buf.getvalue()
    if format == "json":
        doc = {
            "kind": stats.kind,
            "columns": list(stats.columns),
            "units": {c: UNITS[c] for c in stats.columns if c in UNITS},
            "rows": [{c: _round4(row[c]) for c in stats.columns} for row in rows],
            "errors": [dict(cell=c.params, error=c.error) for c in stats.cells if c.error],
        }
        return json.dumps(doc, indent=2) + "\n"
    raise ValueError(f"unknown format {format!r}")


def dump_trials(stats: AggregateStats) -> str:
    """One JSON line per trial, with the cell parameters attached."""
    lines = []
    for c in stats.cells:
        keys = list(c.per_trial)
        for i in range(c.trials if c.per_trial else 0):
            rec = dict(c.params, trial=i)
            rec.update({k: c.per_trial[k][i].item() for k in keys})
            lines.append(json.dumps(rec))
    return "\n".join(lines) + ("\n" if lines else "")


def write_text(path: str | Path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc
