"""Placement controller: admission control and site selection.

For each candidate site the controller adds the request's demand legs to a
snapshot of the committed traffic, measures worst-case path utilisation and
latency across the requested failure scenarios, rejects candidates that
break the SLA, and picks the feasible site with the lowest worst-case path
utilisation.  Accepted placements are committed immediately.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .analysis import Evaluator, PathImpact, impact_from_base
from .model import (
    NO_FAILURE,
    Demand,
    FailureScenario,
    FailureSetSpec,
    Topology,
    TrafficMatrix,
    enumerate_scenarios,
)

TIE_TOLERANCE = 1e-9


class Verdict(str, enum.Enum):
    FEASIBLE = "feasible"
    REJECT_CAPACITY = "reject_capacity"
    REJECT_LATENCY = "reject_latency"
    REJECT_UNROUTABLE = "reject_unroutable"


class PlacementError(Exception):
    """Request is invalid or a state transition is not allowed."""


@dataclass(frozen=True)
class Leg:
    a_end: str
    up_mbps: float  # a_end -> site
    down_mbps: float  # site -> a_end


@dataclass(frozen=True)
class PlacementRequest:
    request_id: str
    legs: tuple[Leg, ...]
    candidates: tuple[str, ...]
    l_max_ms: float = math.inf
    util_threshold: float = 1.0
    failure_spec: FailureSetSpec = field(default_factory=FailureSetSpec)

    def __post_init__(self) -> None:
        object.__setattr__(self, "legs", tuple(self.legs))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.legs:
            raise PlacementError("request needs at least one A-end")
        if not self.candidates:
            raise PlacementError("request needs at least one candidate site")
        if len(set(self.candidates)) != len(self.candidates):
            raise PlacementError("duplicate candidate sites")
        if len({leg.a_end for leg in self.legs}) != len(self.legs):
            raise PlacementError("duplicate A-ends")
        for leg in self.legs:
            if not (leg.up_mbps >= 0 and leg.down_mbps >= 0):
                raise PlacementError(f"negative bandwidth for A-end {leg.a_end!r}")
        if not self.l_max_ms > 0:
            raise PlacementError("l_max_ms must be > 0")
        if not 0 < self.util_threshold <= 1:
            raise PlacementError("util_threshold must be in (0, 1]")

    @classmethod
    def uniform(cls, request_id: str, a_ends: Sequence[str], candidates: Sequence[str],
                mbps: float, **kw) -> PlacementRequest:
        """Same bandwidth on every leg in both directions."""
        return cls(request_id, tuple(Leg(a, mbps, mbps) for a in a_ends), tuple(candidates), **kw)

    @property
    def a_ends(self) -> tuple[str, ...]:
        return tuple(leg.a_end for leg in self.legs)

    def validate_against(self, topo: Topology) -> None:
        for i, a in enumerate(self.a_ends):
            if a not in topo.node_map:
                raise PlacementError(f"a_ends[{i}]: unknown node {a!r}")
        for i, b in enumerate(self.candidates):
            if b not in topo.node_map:
                raise PlacementError(f"candidates[{i}]: unknown node {b!r}")

    def demands_for(self, site: str) -> list[Demand]:
        """Both legs per A-end toward ``site``; legs local to the site carry no network demand."""
        out = []
        for leg in self.legs:
            if leg.a_end == site:
                continue
            out.append(Demand(f"{self.request_id}:{leg.a_end}>{site}", leg.a_end, site, leg.up_mbps))
            out.append(Demand(f"{self.request_id}:{site}>{leg.a_end}", site, leg.a_end, leg.down_mbps))
        return out

    @property
    def total_mbps(self) -> float:
        return sum(leg.up_mbps + leg.down_mbps for leg in self.legs)


def capacity_rejects(wc_path_util: float, threshold: float) -> bool:
    """True when worst-case path utilisation exceeds T; equality admits."""
    return wc_path_util > threshold


def remaining_rejects(wc_path_util: float, threshold: float) -> bool:
    """True when remaining capacity R = 1 - WCPU falls below 1 - T.

    Evaluated in exact rational arithmetic so rounding of the two
    subtractions cannot disagree with :func:`capacity_rejects`.
    """
    if math.isinf(wc_path_util):
        return True
    one = Fraction(1)
    return one - Fraction(wc_path_util) < one - Fraction(threshold)


@dataclass(frozen=True)
class CandidateEvaluation:
    candidate: str
    wc_path_util: float
    wc_path_latency_ms: float
    verdict: Verdict

    @property
    def remaining_r(self) -> float:
        return 1.0 - self.wc_path_util

    @property
    def feasible(self) -> bool:
        return self.verdict is Verdict.FEASIBLE


def judge(impact: PathImpact, threshold: float, l_max_ms: float) -> Verdict:
    if impact.any_unrouted:
        return Verdict.REJECT_UNROUTABLE
    if remaining_rejects(impact.wc_path_util, threshold):
        return Verdict.REJECT_CAPACITY
    if impact.wc_path_latency_ms > l_max_ms:
        return Verdict.REJECT_LATENCY
    return Verdict.FEASIBLE


@dataclass(frozen=True)
class PlacementDecision:
    request_id: str
    evaluations: tuple[CandidateEvaluation, ...]
    chosen: str | None
    committed: bool
    demands: tuple[Demand, ...] = ()
    policy: str = "demand_engineering"
    rolled_back: bool = False

    def evaluation(self, site: str) -> CandidateEvaluation:
        for ev in self.evaluations:
            if ev.candidate == site:
                return ev
        raise KeyError(site)

    @property
    def chosen_evaluation(self) -> CandidateEvaluation | None:
        return None if self.chosen is None else self.evaluation(self.chosen)


def choose(evaluations: Sequence[CandidateEvaluation]) -> str | None:
    """Lowest WCPU among feasible candidates; ties go to lower latency, then node id."""
    feasible = [e for e in evaluations if e.feasible]
    if not feasible:
        return None
    best = min(e.wc_path_util for e in feasible)
    tied = [e for e in feasible if e.wc_path_util <= best + TIE_TOLERANCE]
    best_lat = min(e.wc_path_latency_ms for e in tied)
    tied = [e for e in tied if e.wc_path_latency_ms <= best_lat + TIE_TOLERANCE]
    return min(e.candidate for e in tied)


class ControllerState:
    """Committed traffic, the decision log, and a load cache per scenario.

    ``place`` and ``rollback`` run under :attr:`lock`; readers see whole
    snapshots because ``committed_matrix`` is replaced, never mutated.
    """

    def __init__(self, topology: Topology, matrix: TrafficMatrix | None = None, wcpu_reading: str = "a"):
        matrix = matrix if matrix is not None else TrafficMatrix()
        matrix.validate_against(topology)
        self.topology = topology
        self.initial_matrix = matrix
        self.committed_matrix = matrix
        self.decision_log: list[PlacementDecision] = []
        self.wcpu_reading = wcpu_reading
        self.evaluator = Evaluator(topology)
        self.lock = threading.RLock()
        self._base: dict[FailureScenario, np.ndarray] = {}
        self._scenarios: dict[FailureSetSpec, list[FailureScenario]] = {}

    def scenarios(self, spec: FailureSetSpec) -> list[FailureScenario]:
        out = self._scenarios.get(spec)
        if out is None:
            out = self._scenarios[spec] = enumerate_scenarios(self.topology, spec)
        return out

    def base_loads(self, scenario: FailureScenario) -> np.ndarray:
        vec = self._base.get(scenario)
        if vec is None:
            vec = self._base[scenario] = self.evaluator.load_vector(self.committed_matrix, scenario)
        return vec

    def impact(self, demands: Sequence[Demand], spec: FailureSetSpec) -> PathImpact:
        scenarios = self.scenarios(spec)
        base = {s: self.base_loads(s) for s in scenarios}
        return impact_from_base(self.evaluator, base, demands, scenarios, self.wcpu_reading)

    def commit(self, decision: PlacementDecision) -> None:
        with self.lock:
            base = {}
            for s, vec in self._base.items():
                vec = vec.copy()
                self.evaluator.accumulate(vec, decision.demands, s)
                base[s] = vec
            self._base = base
            self.committed_matrix = self.committed_matrix.extended(decision.demands)
            self.decision_log.append(decision)

    def log_rejection(self, decision: PlacementDecision) -> None:
        with self.lock:
            self.decision_log.append(decision)

    def committed_decisions(self) -> list[PlacementDecision]:
        return [d for d in self.decision_log if d.committed and not d.rolled_back]

    def find(self, request_id: str) -> PlacementDecision | None:
        for d in reversed(self.decision_log):
            if d.request_id == request_id:
                return d
        return None

    def network_wc_util(self, spec: FailureSetSpec = FailureSetSpec()) -> float:
        ev = self.evaluator
        worst = 0.0
        for s in self.scenarios(spec):
            util = self.base_loads(s) / ev.capacity
            if len(util):
                worst = max(worst, float(util.max()))
        return worst


def evaluate_candidate(state: ControllerState, request: PlacementRequest, candidate: str) -> CandidateEvaluation:
    if candidate not in request.candidates:
        raise PlacementError(f"{candidate!r} is not a candidate of request {request.request_id!r}")
    impact = state.impact(request.demands_for(candidate), request.failure_spec)
    return CandidateEvaluation(
        candidate,
        impact.wc_path_util,
        impact.wc_path_latency_ms,
        judge(impact, request.util_threshold, request.l_max_ms),
    )


def _check_new(state: ControllerState, request: PlacementRequest) -> None:
    request.validate_against(state.topology)
    prior = state.find(request.request_id)
    if prior is not None and prior.committed and not prior.rolled_back:
        raise PlacementError(f"request id {request.request_id!r} already committed")


def _finish(state: ControllerState, request: PlacementRequest, evaluations, chosen, policy) -> PlacementDecision:
    if chosen is None:
        decision = PlacementDecision(request.request_id, tuple(evaluations), None, False, policy=policy)
        state.log_rejection(decision)
        return decision
    decision = PlacementDecision(
        request.request_id, tuple(evaluations), chosen, True, tuple(request.demands_for(chosen)), policy
    )
    state.commit(decision)
    return decision


def place(state: ControllerState, request: PlacementRequest) -> PlacementDecision:
    """Evaluate every candidate on the same snapshot, commit the best feasible one."""
    with state.lock:
        _check_new(state, request)
        evaluations = [evaluate_candidate(state, request, c) for c in request.candidates]
        return _finish(state, request, evaluations, choose(evaluations), "demand_engineering")


def evaluate_capacity(state: ControllerState, request: PlacementRequest, site: str) -> CandidateEvaluation:
    """Baseline check: only the utilisation cap and reachability apply, never latency."""
    impact = state.impact(request.demands_for(site), request.failure_spec)
    return CandidateEvaluation(site, impact.wc_path_util, impact.wc_path_latency_ms,
                               judge(impact, request.util_threshold, math.inf))


def _place_in_order(state, request, order, retry, policy) -> PlacementDecision:
    evaluations = []
    chosen = None
    for site in order:
        ev = evaluate_capacity(state, request, site)
        evaluations.append(ev)
        if ev.feasible:
            chosen = site
            break
        if not retry:
            break
    return _finish(state, request, evaluations, chosen, policy)


def place_random(
    state: ControllerState,
    request: PlacementRequest,
    rng: int | np.random.Generator | None = None,
    retry: bool = False,
) -> PlacementDecision:
    """Network-unaware baseline: a uniformly random candidate.

    The pick is committed only if its worst-case path utilisation stays
    within ``request.util_threshold``.  With ``retry`` the remaining
    candidates are tried in random order.
    """
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    with state.lock:
        _check_new(state, request)
        order = [request.candidates[i] for i in gen.permutation(len(request.candidates))]
        return _place_in_order(state, request, order, retry, "random")


def average_latency(state: ControllerState, request: PlacementRequest, site: str) -> float:
    """Mean no-failure latency over all constituent legs (local legs count as 0 ms)."""
    ev = state.evaluator
    total = 0.0
    for leg in request.legs:
        if leg.a_end == site:
            continue
        total += ev.max_latency(NO_FAILURE, leg.a_end, site)
        total += ev.max_latency(NO_FAILURE, site, leg.a_end)
    return total / (2 * len(request.legs))


def place_lowest_latency(state: ControllerState, request: PlacementRequest, retry: bool = False) -> PlacementDecision:
    """Topology-aware, traffic-unaware baseline: lowest average path latency."""
    with state.lock:
        _check_new(state, request)
        ranked = sorted(request.candidates, key=lambda c: (average_latency(state, request, c), c))
        ranked = [c for c in ranked if math.isfinite(average_latency(state, request, c))] or ranked[:1]
        return _place_in_order(state, request, ranked, retry, "lowest_latency")


def rollback(state: ControllerState, request_id: str) -> PlacementDecision:
    """Undo the most recent committed placement (LIFO only)."""
    with state.lock:
        target = state.find(request_id)
        if target is None or not target.committed or target.rolled_back:
            raise PlacementError(f"no committed placement {request_id!r}")
        live = state.committed_decisions()
        if live[-1] is not target:
            raise PlacementError(f"placement {request_id!r} is not the most recent commit")
        state.committed_matrix = state.committed_matrix.without(d.id for d in target.demands)
        state._base = {}
        undone = replace(target, rolled_back=True)
        idx = max(i for i, d in enumerate(state.decision_log) if d is target)
        state.decision_log[idx] = undone
        return undone


def replay(state: ControllerState, decisions: Sequence[PlacementDecision]) -> None:
    """Re-apply logged commits and rollbacks in order (no re-evaluation)."""
    for d in decisions:
        if d.committed:
            state.commit(replace(d, rolled_back=False))
            if d.rolled_back:
                rollback(state, d.request_id)
        else:
            state.log_rejection(d)


__all__ = [
    "CandidateEvaluation", "ControllerState", "Leg", "PlacementDecision", "PlacementError",
    "PlacementRequest", "Verdict", "average_latency", "capacity_rejects", "choose",
    "evaluate_candidate", "evaluate_capacity", "judge", "place", "place_lowest_latency", "place_random",
    "remaining_rejects", "replay", "rollback",
]
