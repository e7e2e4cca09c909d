"""Gateway tests: HTTP lifecycle, streaming protocol, guidance handling."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from steertab import codec, gateway, sim
from steertab.codec import ImagePoint
from steertab.flow import FlowModel
from steertab.gateway import (
    MSG_ACTION,
    MSG_COT,
    MSG_ERROR,
    MSG_GAP,
    MSG_GUIDANCE,
    MSG_GUIDANCE_ACK,
    MSG_HELLO,
    MSG_OBSERVATION,
    MSG_RESULT,
    PROTOCOL_VERSION,
    GatewayConfig,
    StreamBuffer,
    create_app,
    wire_roundtrip,
)
from steertab.guide import GuidanceEvent, PointPrior, UP_FRONT
from steertab.runtime import Policy


@pytest.fixture()
def client():
    policy = Policy(model=FlowModel(seed=0))
    app = create_app(policy, GatewayConfig(capacity=4, fast_hz=500.0))
    with TestClient(app) as c:
        yield c


SHORT = {"scenario": "single_target", "seed": 0,
         "config": {"max_fast_ticks": 20, "clock_mode": "simulated"}}


def wait_done(client, sid, timeout=5.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        desc = client.get(f"/sessions/{sid}").json()
        if desc["state"] == "done":
            return desc
        time.sleep(0.02)
    raise AssertionError("session did not finish")


class TestLifecycle:
    def test_create_and_finish(self, client):
        r = client.post("/sessions", json=SHORT)
        assert r.status_code == 201
        desc = r.json()
        assert desc["scenario"] == "single_target"
        done = wait_done(client, desc["session_id"])
        assert done["outcome"] in (True, False)

    def test_result_available_after_done(self, client):
        sid = client.post("/sessions", json=SHORT).json()["session_id"]
        wait_done(client, sid)
        r = client.get(f"/sessions/{sid}/result")
        assert r.status_code == 200
        body = r.json()
        assert body["outcome"] in ("success", "failure")
        assert body["final_tick"] == 20
        lines = body["trace_jsonl"].strip().splitlines()
        assert json.loads(lines[0])["record"] == "meta"

    def test_result_conflict_while_running(self, client):
        body = {"scenario": "single_target", "seed": 0,
                "config": {"max_fast_ticks": 400, "clock_mode": "wall"}}
        sid = client.post("/sessions", json=body).json()["session_id"]
        r = client.get(f"/sessions/{sid}/result")
        assert r.status_code == 409
        assert r.json()["detail"]["class"] == "stale"

    def test_list_and_get(self, client):
        sid = client.post("/sessions", json=SHORT).json()["session_id"]
        assert any(d["session_id"] == sid for d in client.get("/sessions").json())
        assert client.get(f"/sessions/{sid}").json()["session_id"] == sid
        assert client.get("/sessions/nope").status_code == 404

    def test_bad_requests(self, client):
        assert client.post("/sessions", json={"scenario": "mars"}).status_code == 400
        r = client.post("/sessions",
                        json={"config": {"warp_speed": 9}})
        assert r.status_code == 400
        assert "warp_speed" in r.json()["detail"]["detail"]

    def test_duplicate_session_id_rejected(self, client):
        body = dict(SHORT, session_id="dup")
        assert client.post("/sessions", json=body).status_code == 201
        assert client.post("/sessions", json=body).status_code == 400

    def test_capacity_enforced(self, client):
        slow = {"scenario": "single_target",
                "config": {"max_fast_ticks": 400, "clock_mode": "wall"}}
        for i in range(4):
            assert client.post("/sessions", json=dict(slow, seed=i)).status_code == 201
        r = client.post("/sessions", json=dict(slow, seed=99))
        assert r.status_code == 429
        assert r.json()["detail"]["class"] == "capacity"


class TestStream:
    def test_full_replay_and_sequencing(self, client):
        sid = client.post("/sessions", json=SHORT).json()["session_id"]
        wait_done(client, sid)
        msgs = []
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            hello = json.loads(ws.receive_text())
            assert hello["type"] == MSG_HELLO
            assert hello["protocol_version"] == PROTOCOL_VERSION
            while True:
                msg = json.loads(ws.receive_text())
                msgs.append(msg)
                if msg["type"] == MSG_RESULT:
                    break
        seqs = [m["seq"] for m in msgs]
        assert seqs == sorted(seqs) and len(set(seqs)) == len(seqs)
        for m in msgs:
            if m["type"] == MSG_ACTION:
                assert 0 <= m["staleness"] <= 5
        types = [m["type"] for m in msgs]
        assert types.count(MSG_OBSERVATION) == 20
        assert types.count(MSG_ACTION) == 20
        assert types.count(MSG_COT) == 4  # slow_period 5 over 20 ticks
        assert types[-1] == MSG_RESULT

    def test_cot_messages_parse_on_the_wire(self, client):
        sid = client.post("/sessions", json=SHORT).json()["session_id"]
        wait_done(client, sid)
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_text()  # hello
            while True:
                msg = json.loads(ws.receive_text())
                if msg["type"] == MSG_COT:
                    assert wire_roundtrip(msg) == msg
                    assert msg["slow_tick"] >= 0
                if msg["type"] == MSG_RESULT:
                    break

    def test_unknown_session_stream_errors(self, client):
        with client.websocket_connect("/sessions/ghost/stream") as ws:
            msg = json.loads(ws.receive_text())
            assert msg["type"] == MSG_ERROR


class TestGuidance:
    WALL = {"scenario": "single_target", "seed": 0,
            "config": {"max_fast_ticks": 400, "clock_mode": "wall"}}

    def _event(self, x=0.431, y=0.382):
        return GuidanceEvent(prior=PointPrior(ImagePoint(x, y)),
                             timing=UP_FRONT).to_json()

    def test_http_guidance_ack(self, client):
        sid = client.post("/sessions", json=self.WALL).json()["session_id"]
        r = client.post(f"/sessions/{sid}/guidance",
                        json={"type": MSG_GUIDANCE, "event": self._event()})
        assert r.status_code == 200
        body = r.json()
        assert body["type"] == MSG_GUIDANCE_ACK
        assert body["effective_fast_tick"] % 5 == 0

    def test_ws_guidance_ack_and_cot_reflects_point(self, client):
        # Click on the block (slightly off-center): the next Cot's affordance
        # must echo the click exactly.
        state, task = sim.reset(0, "single_target")
        obs = sim.observe(state, sim.NO_PERTURBATION, 0, task)
        c = obs.main_view[0].box.center
        click = (c.x + 0.01, c.y - 0.01)
        expected = f"({codec.quantize_coord(click[0])},{codec.quantize_coord(click[1])})"
        sid = client.post("/sessions", json=self.WALL).json()["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.receive_text()  # hello
            ws.send_text(json.dumps({"type": MSG_GUIDANCE,
                                     "event": self._event(*click)}))
            ack = None
            effective = None
            saw_point = False
            while True:
                msg = json.loads(ws.receive_text())
                if msg["type"] == MSG_GUIDANCE_ACK:
                    ack = msg
                    effective = msg["effective_fast_tick"]
                if (msg["type"] == MSG_COT and effective is not None
                        and msg["fast_tick"] >= effective):
                    saw_point = expected in msg["cot"]
                    break
                if msg["type"] == MSG_RESULT:
                    break
            assert ack is not None
            assert saw_point

    def test_invalid_prior_rejected(self, client):
        sid = client.post("/sessions", json=self.WALL).json()["session_id"]
        bad = {"type": MSG_GUIDANCE,
               "event": {"prior": {"kind": "point", "x": 1.7, "y": 0.5},
                         "timing": UP_FRONT, "source": "user", "issued_at": 0}}
        r = client.post(f"/sessions/{sid}/guidance", json=bad)
        assert r.status_code == 422
        assert r.json()["detail"]["class"] == "validation"

    def test_guidance_after_done_is_stale(self, client):
        sid = client.post("/sessions", json=SHORT).json()["session_id"]
        wait_done(client, sid)
        r = client.post(f"/sessions/{sid}/guidance",
                        json={"type": MSG_GUIDANCE, "event": self._event()})
        assert r.status_code == 409
        assert r.json()["detail"]["class"] == "stale"

    def test_malformed_guidance_message(self, client):
        sid = client.post("/sessions", json=self.WALL).json()["session_id"]
        r = client.post(f"/sessions/{sid}/guidance", json={"type": "Nonsense"})
        assert r.status_code == 400


class TestStreamBuffer:
    def _msg(self, typ, seq):
        return {"type": typ, "session": "s", "seq": seq}

    def test_drops_oldest_droppable_with_gap(self):
        buf = StreamBuffer(capacity=3)
        for i in range(3):
            buf.push(self._msg(MSG_OBSERVATION, i))
        buf.push(self._msg(MSG_ACTION, 3))
        first = buf.pop(0)
        assert first["type"] == MSG_GAP and first["dropped"] == 1

    def test_consecutive_gaps_merge(self):
        buf = StreamBuffer(capacity=2)
        for i in range(5):
            buf.push(self._msg(MSG_OBSERVATION, i))
        first = buf.pop(0)
        assert first["type"] == MSG_GAP and first["dropped"] == 3

    def test_cot_never_dropped(self):
        buf = StreamBuffer(capacity=2)
        buf.push(self._msg(MSG_COT, 0))
        buf.push(self._msg(MSG_COT, 1))
        buf.push(self._msg(MSG_COT, 2))
        got = [buf.pop(0)["seq"] for _ in range(3)]
        assert got == [0, 1, 2]
        assert buf.dropped == 0

    def test_pop_after_close_returns_none(self):
        buf = StreamBuffer(capacity=2)
        buf.close()
        assert buf.pop(0) is None
