import json
import threading
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from desim.controller import ControllerState
from desim.model import dump_topology
from desim.service import (
    WARNING_HEADER,
    PlacementService,
    ServiceConfig,
    create_app,
    load_config,
    parse_request,
)


def body(rid="r1", a_ends=("a",), candidates=("b", "c"), mbps=100, **extra):
    doc = {
        "request_id": rid,
        "a_ends": list(a_ends),
        "candidates": list(candidates),
        "legs": [{"up_mbps": mbps, "down_mbps": mbps} for _ in a_ends],
        "l_max_ms": None,
        "util_threshold": 0.95,
    }
    doc.update(extra)
    return doc


@pytest.fixture
def client(triangle):
    return TestClient(create_app(ServiceConfig(), ControllerState(triangle)))


def test_valid_request_commits(client):
    r = client.post("/v1/placements", json=body())
    assert r.status_code == 200
    doc = r.json()
    assert doc["chosen"] == "b" and doc["committed"] is True
    assert [e["verdict"] for e in doc["evaluations"]] == ["feasible", "feasible"]
    assert doc["evaluations"][0]["wc_path_util"] == pytest.approx(0.1)
    assert len(doc["demands"]) == 2


def test_unknown_node_is_400_with_field(client):
    r = client.post("/v1/placements", json=body(a_ends=("zzz",)))
    assert r.status_code == 400
    assert r.json()["field"] == "a_ends[0]"
    r = client.post("/v1/placements", json=body(candidates=("b", "zzz")))
    assert r.status_code == 400
    assert r.json()["field"] == "candidates[1]"


@pytest.mark.parametrize("patch,field", [
    ({"util_threshold": 1.5}, None),
    ({"util_threshold": "high"}, "util_threshold"),
    ({"legs": []}, "legs"),
    ({"request_id": ""}, "request_id"),
    ({"failure_sets": ["bogus"]}, "failure_sets"),
    ({"api_version": 2}, "api_version"),
    ({"l_max_ms": -1}, None),
])
def test_bad_requests(client, patch, field):
    r = client.post("/v1/placements", json=body(**patch))
    assert r.status_code == 400
    assert r.json()["field"] == field


def test_malformed_json(client):
    r = client.post("/v1/placements", content=b"{not json", headers={"content-type": "application/json"})
    assert r.status_code == 400


def test_rejection_is_200_without_commit(client):
    r = client.post("/v1/placements", json=body(mbps=5000))
    assert r.status_code == 200
    assert r.json()["chosen"] is None
    assert {e["verdict"] for e in r.json()["evaluations"]} == {"reject_capacity"}
    assert client.get("/v1/state").json()["committed_demands"] == 0


def test_idempotent_replay_is_byte_identical(client):
    first = client.post("/v1/placements", json=body())
    second = client.post("/v1/placements", json=body())
    assert first.content == second.content
    assert client.get("/v1/state").json()["committed_demands"] == 2
    r = client.post("/v1/placements", json=body(mbps=200))
    assert r.status_code == 409


def test_strict_and_lenient_unknown_fields(triangle):
    lenient = TestClient(create_app(ServiceConfig(), ControllerState(triangle)))
    r = lenient.post("/v1/placements", json=body(colour="blue"))
    assert r.status_code == 200
    assert "colour" in r.headers[WARNING_HEADER]
    strict = TestClient(create_app(ServiceConfig(strict_json=True), ControllerState(triangle)))
    doc = body()
    doc["legs"][0]["jitter"] = 1
    r = strict.post("/v1/placements", json=doc)
    assert r.status_code == 400
    assert r.json()["field"] == "legs[0].jitter"


def test_state_endpoint(client):
    s = client.get("/v1/state").json()
    assert s["topology"] == {"nodes": 3, "circuits": 3, "dc_sites": ["b", "c"], "access_sites": ["a", "b", "c"]}
    assert s["network_wc_util"] == 0
    client.post("/v1/placements", json=body(mbps=300))
    s = client.get("/v1/state").json()
    assert s["committed_demands"] == 2 and s["decisions"] == 1
    assert s["network_wc_util"] == pytest.approx(0.3)


def test_delete_lifo(client):
    client.post("/v1/placements", json=body("r1"))
    client.post("/v1/placements", json=body("r2"))
    assert client.delete("/v1/placements/nope").status_code == 404
    assert client.delete("/v1/placements/r1").status_code == 409
    r = client.delete("/v1/placements/r2")
    assert r.status_code == 200 and r.json() == {"request_id": "r2", "rolled_back": True, "committed_demands": 2}
    assert client.delete("/v1/placements/r2").status_code == 404
    assert client.delete("/v1/placements/r1").status_code == 200
    assert client.get("/v1/state").json()["committed_demands"] == 0
    # a rolled-back id may be reused
    assert client.post("/v1/placements", json=body("r1", mbps=50)).status_code == 200


def test_unloaded_state_is_503():
    c = TestClient(create_app(ServiceConfig(topology="/no/such/file.json")))
    assert c.get("/v1/state").status_code == 503
    assert c.post("/v1/placements", json=body()).status_code == 503
    assert c.delete("/v1/placements/x").status_code == 503


def test_lock_timeout_is_503(triangle):
    state = ControllerState(triangle)
    svc = PlacementService(ServiceConfig(lock_timeout_s=0.05), state)
    held = threading.Event()
    release = threading.Event()

    def holder():
        with state.lock:
            held.set()
            release.wait(5)

    t = threading.Thread(target=holder)
    t.start()
    held.wait(5)
    status, _, headers = svc.post(body())
    release.set()
    t.join()
    assert status == 503 and headers["Retry-After"] == "1"


def test_decision_log_replay(tmp_path, triangle):
    topo_path = tmp_path / "t.json"
    topo_path.write_text(dump_topology(triangle))
    log = tmp_path / "decisions.jsonl"
    cfg = ServiceConfig(topology=str(topo_path), decision_log=str(log))
    c1 = TestClient(create_app(cfg))
    first = c1.post("/v1/placements", json=body("r1", mbps=200)).content
    c1.post("/v1/placements", json=body("r2", a_ends=("a", "b"), mbps=100))
    c1.post("/v1/placements", json=body("r3", mbps=9000))
    c1.post("/v1/placements", json=body("r4", mbps=10))
    c1.delete("/v1/placements/r4")
    before = c1.app.state.service.state.committed_matrix
    events = [json.loads(l)["event"] for l in log.read_text().splitlines()]
    assert events == ["place"] * 4 + ["rollback"]

    c2 = TestClient(create_app(cfg))
    after = c2.app.state.service.state.committed_matrix
    assert list(after) == list(before)
    assert c2.post("/v1/placements", json=body("r1", mbps=200)).content == first
    assert c2.get("/v1/state").json() == c1.get("/v1/state").json()


def test_concurrent_posts_linearise(triangle):
    state = ControllerState(triangle)
    svc = PlacementService(ServiceConfig(), state)
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda i: svc.post(body(f"r{i}", mbps=100)), range(20)))
    assert all(s == 200 for s, _, _ in results)
    chosen = [json.loads(p)["chosen"] for _, p, _ in results]
    # 100 Mbps per direction over 1000 Mbps links at T=0.95: exactly 9 fit at each of b and c
    assert chosen.count("b") == 9 and chosen.count("c") == 9 and chosen.count(None) == 2
    assert len(state.committed_matrix) == 36
    from desim.analysis import worst_case_utilization

    assert worst_case_utilization(triangle, state.committed_matrix, state.scenarios(svc.state_spec)).network_wc_util <= 0.95


def test_parse_request_defaults():
    req, unknown = parse_request(body())
    assert req.l_max_ms == float("inf") and unknown == []
    assert req.failure_spec.names() == ["none"]


def test_load_config_env_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("listen: 0.0.0.0:9000\nstrict_json: false\nstate_failure_sets: [none, circuits]\n")
    cfg = load_config(p, env={"DESIM_STRICT_JSON": "true", "DESIM_LOCK_TIMEOUT_S": "2.5"})
    assert cfg.host_port == ("0.0.0.0", 9000)
    assert cfg.strict_json is True and cfg.lock_timeout_s == 2.5
    assert cfg.state_failure_sets == ["none", "circuits"]
    p.write_text("bogus: 1\n")
    with pytest.raises(ValueError, match="bogus"):
        load_config(p, env={})
    with pytest.raises(ValueError):
        load_config(None, env={"DESIM_WCPU_READING": "c"})
