"""HTTP session service: lifecycle, error mapping, event stream."""

import json

import pytest
from fastapi.testclient import TestClient

from anydiff.service import create_app


def _payload(branches=4, seed=0, outer=3, inner=4, **plan_extra):
    return {
        "prior": {
            "components": [
                {"weight": 0.5, "mean": [-2.0, 0.0], "cov": 0.25, "label": 0},
                {"weight": 0.5, "mean": [2.0, 0.0], "cov": 0.25, "label": 1},
            ]
        },
        "schedule": {"kind": "linear", "T": 1000},
        "plan": {"outer_steps": outer, "inner_steps": inner, **plan_extra},
        "branches": branches,
        "seed": seed,
    }


@pytest.fixture()
def client():
    with TestClient(create_app(max_sessions=8)) as c:
        yield c


def _create(client, **kw):
    resp = client.post("/sessions", json=_payload(**kw))
    assert resp.status_code == 201, resp.text
    return resp.json()


def test_healthz(client):
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert resp.json()["status"] == "ok"


def test_create_descriptor(client):
    desc = _create(client)
    assert desc["n_branches"] == 4
    assert desc["nfe_count"] == 0
    assert desc["phase"] == "awaiting_inner"
    assert desc["outer_index"] == 0
    assert desc["plan"]["inner_steps"] == [4, 4, 4]
    assert client.get(f"/sessions/{desc['id']}").json() == desc


def test_create_validation(client):
    assert client.post("/sessions", json={"prior": {}}).status_code == 422
    bad_prior = _payload()
    bad_prior["prior"]["components"][0]["weight"] = 0.9  # weights sum != 1
    assert client.post("/sessions", json=bad_prior).status_code == 400
    bad_branches = _payload(branches=0)
    assert client.post("/sessions", json=bad_branches).status_code == 400
    bad_plan = _payload()
    bad_plan["plan"]["inner_steps"] = [4, 4]  # three transitions
    assert client.post("/sessions", json=bad_plan).status_code == 400


def test_unknown_session_404(client):
    assert client.get("/sessions/deadbeef").status_code == 404
    assert client.post("/sessions/deadbeef/advance").status_code == 404


def test_advance_and_result_flow(client):
    sid = _create(client, branches=2)["id"]
    resp = client.get(f"/sessions/{sid}/result")
    assert resp.status_code == 409  # nothing computed yet
    assert client.post(f"/sessions/{sid}/advance", json={"stride": 0}).status_code == 400
    desc = client.post(f"/sessions/{sid}/advance").json()
    assert desc["nfe_count"] == 8 and desc["phase"] == "at_outer_boundary"
    result = client.get(f"/sessions/{sid}/result", params={"branch": 1})
    assert result.status_code == 200
    body = result.json()
    assert body["branch"] == 1 and len(body["values"]) == 2
    assert body["nfe_count"] == 8
    assert client.get(f"/sessions/{sid}/result", params={"branch": 7}).status_code == 400
    # strided advance stays inside the inner pass
    desc = client.post(f"/sessions/{sid}/advance", json={"stride": 2}).json()
    assert desc["phase"] == "awaiting_inner" and desc["nfe_count"] == 12
    desc = client.post(f"/sessions/{sid}/advance").json()
    assert desc["phase"] == "at_outer_boundary" and desc["nfe_count"] == 16
    desc = client.post(f"/sessions/{sid}/advance").json()
    assert desc["phase"] == "finished" and desc["nfe_count"] == 24
    assert client.post(f"/sessions/{sid}/advance").status_code == 409


def test_select_converges_branches(client):
    payload = _payload()
    payload["plan"]["inner"] = {"variant": "ddim", "eta": 0.0}
    resp = client.post("/sessions", json=payload)
    assert resp.status_code == 201
    sid = resp.json()["id"]
    assert client.post(f"/sessions/{sid}/select", json={"branch": 2}).status_code == 409
    client.post(f"/sessions/{sid}/advance")
    assert (
        client.post(f"/sessions/{sid}/select", json={"branch": 9}).status_code == 400
    )
    assert client.post(f"/sessions/{sid}/select", json={"branch": 2}).status_code == 200
    previews = [
        client.get(f"/sessions/{sid}/result", params={"branch": b}).json()["values"]
        for b in range(4)
    ]
    assert previews[0] == previews[1] == previews[2] == previews[3]
    # deterministic inner steps keep converged branches in lockstep
    client.post(f"/sessions/{sid}/advance")
    after = [
        client.get(f"/sessions/{sid}/result", params={"branch": b}).json()["values"]
        for b in range(4)
    ]
    assert after[0] == after[1] == after[2] == after[3]


def test_condition_edit(client):
    sid = _create(client)["id"]
    resp = client.post(
        f"/sessions/{sid}/condition", json={"kind": "class", "label": 1}
    )
    assert resp.status_code == 409  # wrong phase
    client.post(f"/sessions/{sid}/advance")
    resp = client.post(
        f"/sessions/{sid}/condition", json={"kind": "class", "label": 9}
    )
    assert resp.status_code == 400  # unknown label
    resp = client.post(
        f"/sessions/{sid}/condition", json={"kind": "class", "label": 1}
    )
    assert resp.status_code == 200
    assert resp.json()["phase"] == "at_outer_boundary"


def test_capacity_503():
    with TestClient(create_app(max_sessions=1)) as client:
        _create(client)
        resp = client.post("/sessions", json=_payload())
        assert resp.status_code == 503


def test_busy_mutation_409(client):
    sid = _create(client)["id"]
    record = client.app.state.store.get(sid)
    assert record.lock.acquire(blocking=False)
    try:
        assert client.post(f"/sessions/{sid}/advance").status_code == 409
    finally:
        record.lock.release()
    assert client.post(f"/sessions/{sid}/advance").status_code == 200


def test_websocket_replay_and_end(client):
    sid = _create(client, branches=2, outer=2, inner=3)["id"]
    while client.get(f"/sessions/{sid}").json()["phase"] != "finished":
        client.post(f"/sessions/{sid}/advance")
    frames = []
    with client.websocket_connect(f"/sessions/{sid}/events") as ws:
        while True:
            msg = ws.receive_json()
            frames.append(msg)
            if msg["type"] == "end":
                break
    events = [f for f in frames if f["type"] == "event"]
    # outer step 0 streams every call; outer step 1 only the boundary
    assert len(events) == 2 * 3 + 2
    nfes = [e["nfe"] for e in events]
    assert nfes == sorted(nfes)
    assert frames[-1]["nfe_count"] == 12
    boundary = [e for e in events if e["boundary"]]
    assert len(boundary) == 4  # two branches, two outer steps


def test_websocket_unknown_session(client):
    with client.websocket_connect("/sessions/unknown/events") as ws:
        msg = ws.receive_json()
        assert msg["type"] == "error"


def test_event_log(tmp_path):
    with TestClient(
        create_app(max_sessions=4, event_log_dir=str(tmp_path))
    ) as client:
        sid = _create(client, branches=1, outer=2, inner=2)["id"]
        client.post(f"/sessions/{sid}/advance")
        client.post(f"/sessions/{sid}/advance")
        lines = (tmp_path / f"{sid}.jsonl").read_text().splitlines()
    records = [json.loads(line) for line in lines]
    assert [r["nfe"] for r in records] == [1, 2, 4]
    assert all(r["session"] == sid for r in records)
    assert records[-1]["boundary"] is True
