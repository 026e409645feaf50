"""HTTP/JSON front end for the placement controller.

Endpoints::

    POST   /v1/placements              place a workload (idempotent on request_id)
    GET    /v1/state                   topology summary and committed load
    DELETE /v1/placements/{request_id} roll back the most recent placement

An admission failure is a normal 200 response with ``chosen: null``.
HTTP errors are reserved for protocol faults.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import anyio
import yaml
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .analysis import WCPU_READINGS, worst_case_utilization
from .controller import (
    CandidateEvaluation,
    ControllerState,
    Leg,
    PlacementDecision,
    PlacementError,
    PlacementRequest,
    Verdict,
    place,
    rollback,
)
from .model import Demand, FailureSetSpec, ModelError, TrafficMatrix, parse_demands, parse_topology

logger = logging.getLogger(__name__)

API_VERSION = 1
WARNING_HEADER = "X-Desim-Warning"


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8080"
    topology: str | None = None
    demands: str | None = None
    strict_json: bool = False
    wcpu_reading: str = "a"
    decision_log: str | None = None
    state_failure_sets: list[str] = field(default_factory=lambda: ["none"])
    lock_timeout_s: float = 10.0

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host or "127.0.0.1", int(port)


_ENV_PREFIX = "DESIM_"


def _coerce(name: str, raw: str) -> Any:
    if name == "strict_json":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if name == "lock_timeout_s":
        return float(raw)
    if name == "state_failure_sets":
        return [s for s in raw.split(",") if s.strip()]
    return raw


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> ServiceConfig:
    """YAML file values, then ``DESIM_<FIELD>`` environment overrides."""
    env = os.environ if env is None else env
    values: dict[str, Any] = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a mapping")
        values.update(data)
    names = {f.name for f in fields(ServiceConfig)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        raw = env.get(_ENV_PREFIX + name.upper())
        if raw is not None:
            values[name] = _coerce(name, raw)
    cfg = ServiceConfig(**values)
    if cfg.wcpu_reading not in WCPU_READINGS:
        raise ValueError(f"wcpu_reading must be one of {WCPU_READINGS}")
    FailureSetSpec.from_names(cfg.state_failure_sets)
    return cfg


def load_state(cfg: ServiceConfig) -> ControllerState:
    if cfg.topology is None:
        raise ValueError("no topology configured")
    topo = parse_topology(Path(cfg.topology).read_text())
    matrix = parse_demands(Path(cfg.demands).read_text(), topo) if cfg.demands else TrafficMatrix()
    return ControllerState(topo, matrix, cfg.wcpu_reading)


# -- JSON mapping ---------------------------------------------------------------


class BadRequest(Exception):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def demand_to_dict(d: Demand) -> dict:
    return {"id": d.id, "src": d.src, "dst": d.dst, "mbps": d.bandwidth_mbps}


def decision_to_dict(d: PlacementDecision) -> dict:
    return {
        "api_version": API_VERSION,
        "request_id": d.request_id,
        "chosen": d.chosen,
        "committed": d.committed,
        "evaluations": [
            {
                "candidate": e.candidate,
                "verdict": e.verdict.value,
                "wc_path_util": _finite(e.wc_path_util),
                "remaining_r": _finite(e.remaining_r),
                "wc_path_latency_ms": _finite(e.wc_path_latency_ms),
            }
            for e in d.evaluations
        ],
        "demands": [demand_to_dict(x) for x in d.demands],
        "policy": d.policy,
    }


def decision_from_dict(doc: Mapping) -> PlacementDecision:
    def num(x):
        return math.inf if x is None else float(x)

    return PlacementDecision(
        doc["request_id"],
        tuple(
            CandidateEvaluation(e["candidate"], num(e["wc_path_util"]), num(e["wc_path_latency_ms"]),
                                Verdict(e["verdict"]))
            for e in doc["evaluations"]
        ),
        doc["chosen"],
        doc["committed"],
        tuple(Demand(x["id"], x["src"], x["dst"], float(x["mbps"])) for x in doc["demands"]),
        doc.get("policy", "demand_engineering"),
    )


_REQUEST_FIELDS = {"api_version", "request_id", "a_ends", "candidates", "legs", "l_max_ms",
                   "util_threshold", "failure_sets"}
_LEG_FIELDS = {"up_mbps", "down_mbps"}


def _number(value: Any, path: str, *, allow_none: bool = False) -> float | None:
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise BadRequest("expected a number", path)
    return float(value)


def _str_list(value: Any, path: str) -> list[str]:
    if not isinstance(value, list) or not value:
        raise BadRequest("expected a nonempty list of strings", path)
    for i, v in enumerate(value):
        if not isinstance(v, str):
            raise BadRequest("expected a string", f"{path}[{i}]")
    return value


def parse_request(body: Any) -> tuple[PlacementRequest, list[str]]:
    """Validate an API request body; returns the request and unknown field paths."""
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    unknown = sorted(set(body) - _REQUEST_FIELDS)
    version = body.get("api_version", API_VERSION)
    if version != API_VERSION:
        raise BadRequest(f"unsupported api_version {version!r}", "api_version")
    rid = body.get("request_id")
    if not isinstance(rid, str) or not rid:
        raise BadRequest("request_id must be a nonempty string", "request_id")
    a_ends = _str_list(body.get("a_ends"), "a_ends")
    candidates = _str_list(body.get("candidates"), "candidates")
    legs_raw = body.get("legs")
    if not isinstance(legs_raw, list) or len(legs_raw) != len(a_ends):
        raise BadRequest("legs must be a list with one entry per a_end", "legs")
    legs = []
    for i, (a, leg) in enumerate(zip(a_ends, legs_raw)):
        if not isinstance(leg, dict):
            raise BadRequest("expected an object", f"legs[{i}]")
        unknown.extend(f"legs[{i}].{k}" for k in sorted(set(leg) - _LEG_FIELDS))
        up = _number(leg.get("up_mbps"), f"legs[{i}].up_mbps")
        down = _number(leg.get("down_mbps"), f"legs[{i}].down_mbps")
        if up < 0 or down < 0:
            raise BadRequest("bandwidth must be >= 0", f"legs[{i}]")
        legs.append(Leg(a, up, down))
    l_max = _number(body.get("l_max_ms"), "l_max_ms", allow_none=True)
    threshold = _number(body.get("util_threshold"), "util_threshold")
    fs = body.get("failure_sets", ["none"])
    if not isinstance(fs, list) or not all(isinstance(x, str) for x in fs):
        raise BadRequest("failure_sets must be a list of strings", "failure_sets")
    try:
        spec = FailureSetSpec.from_names(fs)
    except ModelError as exc:
        raise BadRequest(str(exc), "failure_sets") from None
    try:
        req = PlacementRequest(rid, tuple(legs), tuple(candidates),
                               math.inf if l_max is None else l_max, threshold, spec)
    except PlacementError as exc:
        raise BadRequest(str(exc)) from None
    return req, unknown


def _canonical(body: Any) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _encode(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


# -- service state ---------------------------------------------------------------


class PlacementService:
    """Controller state plus idempotency records and the decision log."""

    def __init__(self, cfg: ServiceConfig, state: ControllerState | None = None):
        self.cfg = cfg
        self.state = state
        self.responses: dict[str, tuple[str, bytes]] = {}
        self._log_lock = threading.Lock()
        self.state_spec = FailureSetSpec.from_names(cfg.state_failure_sets)
        if self.state is not None and cfg.decision_log and Path(cfg.decision_log).exists():
            self.replay_log(Path(cfg.decision_log))

    def _append(self, event: dict) -> None:
        if not self.cfg.decision_log:
            return
        with self._log_lock, open(self.cfg.decision_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def replay_log(self, path: Path) -> None:
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            event = json.loads(line)
            if event["event"] == "place":
                decision = decision_from_dict(event["decision"])
                if decision.committed:
                    self.state.commit(decision)
                else:
                    self.state.log_rejection(decision)
                self.responses[decision.request_id] = (event["body_hash"], event["response"].encode())
            elif event["event"] == "rollback":
                rollback(self.state, event["request_id"])
                self.responses.pop(event["request_id"], None)
            else:
                raise ValueError(f"{path}:{lineno}: unknown event {event['event']!r}")
        logger.info("replayed %s: %d committed demands", path, len(self.state.committed_matrix))

    def post(self, body: Any) -> tuple[int, bytes, dict[str, str]]:
        if self.state is None:
            return 503, _encode({"error": "state not loaded"}), {}
        headers: dict[str, str] = {}
        try:
            request, unknown = parse_request(body)
        except BadRequest as exc:
            return 400, _encode({"error": str(exc), "field": exc.field}), headers
        if unknown:
            if self.cfg.strict_json:
                return 400, _encode({"error": "unknown fields", "field": unknown[0], "fields": unknown}), headers
            headers[WARNING_HEADER] = "ignored unknown fields: " + ",".join(unknown)
        digest = _canonical(body)
        if not self.state.lock.acquire(timeout=self.cfg.lock_timeout_s):
            return 503, _encode({"error": "controller busy"}), {"Retry-After": "1"}
        try:
            prior = self.responses.get(request.request_id)
            if prior is not None:
                if prior[0] != digest:
                    return 409, _encode({"error": "request_id reused with a different body",
                                         "field": "request_id"}), headers
                return 200, prior[1], headers
            try:
                decision = place(self.state, request)
            except PlacementError as exc:
                return 400, _encode({"error": str(exc), "field": _field_of(str(exc))}), headers
            payload = _encode(decision_to_dict(decision))
            self.responses[request.request_id] = (digest, payload)
            self._append({"event": "place", "body_hash": digest, "response": payload.decode(),
                          "decision": decision_to_dict(decision)})
            return 200, payload, headers
        finally:
            self.state.lock.release()

    def delete(self, request_id: str) -> tuple[int, bytes]:
        if self.state is None:
            return 503, _encode({"error": "state not loaded"})
        if not self.state.lock.acquire(timeout=self.cfg.lock_timeout_s):
            return 503, _encode({"error": "controller busy"})
        try:
            target = self.state.find(request_id)
            if target is None or not target.committed or target.rolled_back:
                return 404, _encode({"error": f"no committed placement {request_id!r}"})
            try:
                rollback(self.state, request_id)
            except PlacementError as exc:
                return 409, _encode({"error": str(exc)})
            self.responses.pop(request_id, None)
            self._append({"event": "rollback", "request_id": request_id})
            return 200, _encode({"request_id": request_id, "rolled_back": True,
                                 "committed_demands": len(self.state.committed_matrix)})
        finally:
            self.state.lock.release()

    def snapshot(self) -> tuple[int, bytes]:
        if self.state is None:
            return 503, _encode({"error": "state not loaded"})
        with self.state.lock:
            matrix = self.state.committed_matrix
            n_decisions = len(self.state.decision_log)
        topo = self.state.topology
        wc = worst_case_utilization(topo, matrix, self.state.scenarios(self.state_spec), self.state.evaluator)
        return 200, _encode({
            "api_version": API_VERSION,
            "topology": {
                "nodes": len(topo.nodes),
                "circuits": len(topo.circuits),
                "dc_sites": topo.dc_sites,
                "access_sites": topo.access_sites,
            },
            "committed_demands": len(matrix),
            "decisions": n_decisions,
            "failure_sets": self.state_spec.names(),
            "network_wc_util": wc.network_wc_util,
        })


def _field_of(message: str) -> str | None:
    head = message.split(":", 1)[0]
    return head if head.startswith(("a_ends[", "candidates[")) else None


def create_app(cfg: ServiceConfig | None = None, state: ControllerState | None = None) -> FastAPI:
    """Build the app; state is loaded from ``cfg`` unless given."""
    cfg = cfg or ServiceConfig()
    if state is None and cfg.topology:
        try:
            state = load_state(cfg)
        except (OSError, ModelError, ValueError) as exc:
            logger.error("cannot load state: %s", exc)
    service = PlacementService(cfg, state)
    app = FastAPI(title="desim placement controller", version=str(API_VERSION))
    app.state.service = service

    def raw(status: int, payload: bytes, headers: dict[str, str] | None = None) -> Response:
        return Response(payload, status_code=status, media_type="application/json", headers=headers)

    @app.post("/v1/placements")
    async def post_placement(request: Request) -> Response:
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return JSONResponse({"error": f"malformed JSON: {exc}", "field": None}, status_code=400)
        status, payload, headers = await anyio.to_thread.run_sync(service.post, body)
        return raw(status, payload, headers)

    @app.get("/v1/state")
    def get_state() -> Response:
        status, payload = service.snapshot()
        return raw(status, payload)

    @app.delete("/v1/placements/{request_id}")
    def delete_placement(request_id: str) -> Response:
        status, payload = service.delete(request_id)
        return raw(status, payload)

    return app


def check(cfg: ServiceConfig) -> ControllerState:
    """Load and validate configured inputs (including the decision log)."""
    state = load_state(cfg)
    PlacementService(cfg, state)
    return state


def serve(cfg: ServiceConfig) -> None:
    import uvicorn

    host, port = cfg.host_port
    uvicorn.run(create_app(cfg), host=host, port=port)


__all__ = ["ServiceConfig", "PlacementService", "create_app", "load_config", "load_state", "check", "serve",
           "decision_to_dict", "decision_from_dict", "parse_request"]
