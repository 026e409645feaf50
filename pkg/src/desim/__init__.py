"""Demand-engineering placement controller and simulation toolkit."""

from .analysis import (
    Evaluator,
    PathImpact,
    UtilizationReport,
    link_loads,
    path_impact,
    worst_case_utilization,
)
from .controller import (
    CandidateEvaluation,
    ControllerState,
    Leg,
    PlacementDecision,
    PlacementError,
    PlacementRequest,
    Verdict,
    evaluate_candidate,
    place,
    place_lowest_latency,
    place_random,
    rollback,
)
from .model import (
    Circuit,
    Demand,
    Edge,
    FailureScenario,
    FailureSetSpec,
    ModelError,
    Node,
    Topology,
    TrafficMatrix,
    dump_demands,
    dump_topology,
    enumerate_scenarios,
    parse_demands,
    parse_topology,
)
from .routing import (
    FlowMap,
    LatencyExtremes,
    ResidualTopology,
    SpfResult,
    apply_failure,
    path_latency_extremes,
    route_demand,
    shortest_paths,
)

__version__ = "0.1.0"
