"""Placement-algorithm comparison study.

Each iteration starts from an empty network, feeds randomly generated
workloads to one placement algorithm until the network saturates, and
records the bandwidth that was placed.  All algorithms in a study see the
same workload sequence per iteration.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import path_impact
from .controller import (
    ControllerState,
    PlacementDecision,
    PlacementRequest,
    evaluate_capacity,
    place,
    place_lowest_latency,
    place_random,
)
from .model import FailureSetSpec, Topology, TrafficMatrix, enumerate_scenarios

logger = logging.getLogger(__name__)

DE = "demand_engineering"
RANDOM = "random"
LATENCY = "lowest_latency"
ALGORITHMS = (DE, RANDOM, LATENCY)
ALIASES = {"de": DE, "demand_engineering": DE, "random": RANDOM, "latency": LATENCY,
           "lowest_latency": LATENCY}
SUBSET_MODES = ("uniform_size", "bernoulli")


def parse_algorithms(text: str | Sequence[str]) -> tuple[str, ...]:
    names = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for n in names:
        key = ALIASES.get(n.strip().lower())
        if key is None:
            raise ValueError(f"unknown algorithm {n!r}; expected one of {sorted(ALIASES)}")
        if key not in out:
            out.append(key)
    if not out:
        raise ValueError("no algorithms selected")
    return tuple(out)


@dataclass(frozen=True)
class StudyConfig:
    topology: Topology
    seed: int = 0
    iterations: int = 100
    algorithms: tuple[str, ...] = ALGORITHMS
    bw_min_mbps: int = 50
    bw_max_mbps: int = 500
    util_cap: float = 1.0
    failure_spec: FailureSetSpec = field(default_factory=FailureSetSpec)
    subset_mode: str = "uniform_size"
    baseline_retry: bool = False
    max_workloads: int = 10_000
    access_sites: tuple[str, ...] | None = None
    candidates: tuple[str, ...] | None = None
    initial_matrix: TrafficMatrix = field(default_factory=TrafficMatrix)

    def __post_init__(self) -> None:
        if self.bw_min_mbps > self.bw_max_mbps:
            raise ValueError("bw_min_mbps must not exceed bw_max_mbps")
        if self.bw_min_mbps < 0:
            raise ValueError("bandwidths must be nonnegative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.subset_mode not in SUBSET_MODES:
            raise ValueError(f"subset_mode must be one of {SUBSET_MODES}")
        object.__setattr__(self, "algorithms", parse_algorithms(self.algorithms))
        if not self.sites:
            raise ValueError("topology has no access sites")
        if not self.dcs:
            raise ValueError("topology has no DC sites")

    @property
    def sites(self) -> tuple[str, ...]:
        return tuple(self.access_sites) if self.access_sites is not None else tuple(self.topology.access_sites)

    @property
    def dcs(self) -> tuple[str, ...]:
        return tuple(self.candidates) if self.candidates is not None else tuple(self.topology.dc_sites)


@dataclass(frozen=True)
class Workload:
    a_ends: tuple[str, ...]
    bandwidth_mbps: int

    @property
    def total_mbps(self) -> int:
        return len(self.a_ends) * 2 * self.bandwidth_mbps

    def request(self, request_id: str, config: StudyConfig) -> PlacementRequest:
        return PlacementRequest.uniform(
            request_id, self.a_ends, config.dcs, self.bandwidth_mbps,
            l_max_ms=math.inf, util_threshold=config.util_cap, failure_spec=config.failure_spec,
        )


def generate_workload(rng: np.random.Generator, access_sites: Sequence[str], config: StudyConfig) -> Workload:
    """Random a-end subset and one bandwidth shared by every leg.

    ``uniform_size`` draws the subset size uniformly from 1..n, then a
    uniform subset of that size; ``bernoulli`` keeps each site with
    probability 1/2, redrawing empty subsets.
    """
    sites = list(access_sites)
    if not sites:
        raise ValueError("no access sites")
    n = len(sites)
    if config.subset_mode == "uniform_size":
        k = int(rng.integers(1, n + 1))
        picked = set(rng.choice(n, size=k, replace=False).tolist())
    else:
        picked = set()
        while not picked:
            picked = set(np.flatnonzero(rng.random(n) < 0.5).tolist())
    bw = int(rng.integers(config.bw_min_mbps, config.bw_max_mbps + 1))
    return Workload(tuple(sites[i] for i in sorted(picked)), bw)


@dataclass(frozen=True)
class TraceRecord:
    index: int
    workload: Workload
    chosen: str | None
    max_path_util: float


@dataclass(frozen=True)
class RunResult:
    algorithm: str
    iteration: int
    workloads_placed: int
    aggregate_mbps: int
    trace: tuple[TraceRecord, ...]
    stop_reason: str  # "saturated" or "budget"

    @property
    def final_rejected(self) -> TraceRecord | None:
        if self.stop_reason == "saturated" and self.trace and self.trace[-1].chosen is None:
            return self.trace[-1]
        return None

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("placement_index", "workload_size", "chosen_site", "max_path_util"))
        for r in self.trace:
            w.writerow((r.index, r.workload.total_mbps, r.chosen or "", repr(r.max_path_util)))
        return buf.getvalue()


def _streams(seed: int, iteration: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Workload and pick generators for one iteration (same for every algorithm)."""
    wl, pick = np.random.SeedSequence([seed, iteration]).spawn(2)
    return np.random.default_rng(wl), np.random.default_rng(pick)


def _any_site_fits(state: ControllerState, request: PlacementRequest) -> bool:
    return any(evaluate_capacity(state, request, c).feasible for c in request.candidates)


def run_iteration(config: StudyConfig, algorithm: str, iteration: int = 0) -> RunResult:
    """Place workloads with one algorithm until no candidate site can take the next one."""
    algorithm = parse_algorithms([algorithm])[0]
    wl_rng, pick_rng = _streams(config.seed, iteration)
    state = ControllerState(config.topology, config.initial_matrix)
    trace: list[TraceRecord] = []
    placed = 0
    aggregate = 0
    stop = "budget"
    for idx in range(config.max_workloads):
        wl = generate_workload(wl_rng, config.sites, config)
        request = wl.request(f"w{idx}", config)
        if algorithm == DE:
            d = place(state, request)
        elif algorithm == RANDOM:
            d = place_random(state, request, pick_rng, retry=config.baseline_retry)
        else:
            d = place_lowest_latency(state, request, retry=config.baseline_retry)
        if d.committed:
            placed += 1
            aggregate += wl.total_mbps
            trace.append(TraceRecord(idx, wl, d.chosen, d.chosen_evaluation.wc_path_util))
            continue
        trace.append(TraceRecord(idx, wl, None, _best_util(d)))
        if algorithm == DE or not _any_site_fits(state, request):
            stop = "saturated"
            break
    else:
        logger.warning("%s iteration %d hit the %d-workload budget", algorithm, iteration, config.max_workloads)
    return RunResult(algorithm, iteration, placed, aggregate, tuple(trace), stop)


def _best_util(d: PlacementDecision) -> float:
    return min((e.wc_path_util for e in d.evaluations), default=math.nan)


@dataclass(frozen=True)
class AlgorithmTotals:
    algorithm: str
    iterations: int
    workloads_placed: int
    aggregate_mbps: int
    pct_of_de: float | None


@dataclass(frozen=True)
class StudyReport:
    config: StudyConfig
    runs: dict[str, tuple[RunResult, ...]]

    @property
    def rows(self) -> list[AlgorithmTotals]:
        totals = {a: sum(r.aggregate_mbps for r in rs) for a, rs in self.runs.items()}
        show_pct = len(self.runs) > 1 and DE in self.runs and totals[DE] > 0
        out = []
        for a, rs in self.runs.items():
            out.append(AlgorithmTotals(
                a, len(rs), sum(r.workloads_placed for r in rs), totals[a],
                totals[a] / totals[DE] if show_pct else None,
            ))
        return out

    def per_iteration(self, algorithm: str) -> list[int]:
        return [r.aggregate_mbps for r in self.runs[algorithm]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("algorithm", "iterations", "workloads_placed", "aggregate_mbps", "pct_of_de"))
        for r in self.rows:
            w.writerow((r.algorithm, r.iterations, r.workloads_placed, r.aggregate_mbps,
                        "" if r.pct_of_de is None else f"{100 * r.pct_of_de:.1f}"))
        return buf.getvalue()

    def to_table(self) -> str:
        rows = self.rows
        show_pct = any(r.pct_of_de is not None for r in rows)
        header = f"{'Algorithm':<20} {'Workloads':>10} {'Aggregate demand (Mbps)':>24}"
        if show_pct:
            header += f" {'% of DE':>8}"
        lines = [header, "-" * len(header)]
        for r in rows:
            line = f"{r.algorithm:<20} {r.workloads_placed:>10,} {r.aggregate_mbps:>24,}"
            if show_pct:
                line += f" {100 * r.pct_of_de:>7.0f}%"
            lines.append(line)
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path, traces: bool = True) -> None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "study.csv").write_text(self.to_csv())
            if traces:
                (out / "traces").mkdir(exist_ok=True)
                for a, rs in self.runs.items():
                    for r in rs:
                        (out / "traces" / f"iter-{r.iteration}-{a}.csv").write_text(r.trace_csv())
        except OSError as exc:
            raise OSError(f"cannot write study output to {exc.filename or out}: {exc.strerror}") from exc


def run_study(config: StudyConfig) -> StudyReport:
    runs: dict[str, list[RunResult]] = {a: [] for a in config.algorithms}
    for it in range(config.iterations):
        for a in config.algorithms:
            runs[a].append(run_iteration(config, a, it))
    return StudyReport(config, {a: tuple(rs) for a, rs in runs.items()})


@dataclass(frozen=True)
class AuditFinding:
    iteration: int
    algorithm: str
    index: int
    message: str


def audit_run(config: StudyConfig, result: RunResult) -> list[AuditFinding]:
    """Replay a trace through the stand-alone analysis functions.

    Checks that every commit kept worst-case path utilisation within the
    cap and that the final rejected workload exceeds it at every candidate.
    """
    topo = config.topology
    scenarios = enumerate_scenarios(topo, config.failure_spec)
    committed = list(config.initial_matrix)
    findings = []
    for rec in result.trace:
        request = rec.workload.request(f"w{rec.index}", config)
        if rec.chosen is not None:
            new = request.demands_for(rec.chosen)
            imp = path_impact(topo, committed, new, scenarios)
            if imp.any_unrouted or imp.wc_path_util > config.util_cap:
                findings.append(AuditFinding(result.iteration, result.algorithm, rec.index,
                                             f"commit at {rec.chosen} reached {imp.wc_path_util:.6f}"))
            committed.extend(new)
    final = result.final_rejected
    if final is not None:
        request = final.workload.request(f"w{final.index}", config)
        for site in config.dcs:
            imp = path_impact(topo, committed, request.demands_for(site), scenarios)
            if not (imp.any_unrouted or imp.wc_path_util > config.util_cap):
                findings.append(AuditFinding(result.iteration, result.algorithm, final.index,
                                             f"final workload fits at {site} ({imp.wc_path_util:.6f})"))
    elif result.stop_reason == "saturated":
        findings.append(AuditFinding(result.iteration, result.algorithm, -1, "no final rejection recorded"))
    return findings
