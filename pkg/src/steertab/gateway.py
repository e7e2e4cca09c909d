"""Network gateway: live episodes as a bidirectional NDJSON message stream.

HTTP endpoints create/list sessions and fetch results; a WebSocket per
session streams ``Observation``/``Cot``/``Action``/``Result`` messages and
accepts ``Guidance`` messages from clients.  Every server message carries
the session id and a per-session monotone sequence number.  A slow client
never stalls the control loop: each client has a bounded buffer with an
oldest-Observation drop policy and explicit gap markers; ``Cot`` and
``Result`` messages are never dropped.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from . import runtime, sim
from .codec import CotValidationError, parse_cot
from .guide import GuidanceEvent, PriorValidationError, validate_prior

PROTOCOL_VERSION = 1
DEFAULT_CAPACITY = 16
DEFAULT_BUFFER = 256
DEFAULT_FAST_HZ = 10.0

MSG_HELLO = "Hello"
MSG_OBSERVATION = "Observation"
MSG_COT = "Cot"
MSG_ACTION = "Action"
MSG_GUIDANCE = "Guidance"
MSG_GUIDANCE_ACK = "GuidanceAck"
MSG_RESULT = "Result"
MSG_ERROR = "Error"
MSG_GAP = "Gap"

ERR_BAD_REQUEST = "bad_request"
ERR_VALIDATION = "validation"
ERR_STALE = "stale"
ERR_CAPACITY = "capacity"


def _chunk_digest(chunk) -> str:
    return hashlib.sha256(json.dumps(
        [[round(float(v), 9) for v in row] for row in chunk]).encode()).hexdigest()[:16]


class StreamBuffer:
    """Bounded per-client queue.

    When full, the oldest Observation (or Action) message is dropped and
    replaced by a Gap marker; Cot/Result/Error messages are never dropped
    (the buffer grows past capacity rather than lose them).
    """

    _DROPPABLE = (MSG_OBSERVATION, MSG_ACTION)

    def __init__(self, capacity: int = DEFAULT_BUFFER):
        self.capacity = capacity
        self._items: deque = deque()
        self._cond = threading.Condition()
        self.closed = False
        self.dropped = 0

    def push(self, msg: dict) -> None:
        with self._cond:
            if len(self._items) >= self.capacity:
                for i, old in enumerate(self._items):
                    if old["type"] in self._DROPPABLE:
                        seq = old["seq"]
                        self.dropped += 1
                        gap = {"type": MSG_GAP, "session": old["session"],
                               "seq": seq, "dropped": 1}
                        prev = self._items[i - 1] if i > 0 else None
                        if prev is not None and prev["type"] == MSG_GAP:
                            prev["dropped"] += 1
                            del self._items[i]
                        else:
                            self._items[i] = gap
                        break
                # No droppable entry: grow past capacity (Cot/Result kept).
            self._items.append(msg)
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def pop(self, timeout: Optional[float] = None) -> Optional[dict]:
        with self._cond:
            if not self._items and not self.closed:
                self._cond.wait(timeout)
            if self._items:
                return self._items.popleft()
            return None  # closed or timed out


@dataclass
class SessionDescriptor:
    session_id: str
    scenario: str
    perturbation: dict
    config: dict
    state: str = "pending"  # pending | running | done
    outcome: Optional[bool] = None

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id, "scenario": self.scenario,
            "perturbation": self.perturbation, "config": self.config,
            "state": self.state, "outcome": self.outcome,
        }


class Session:
    """One runtime episode plus its fan-out message log."""

    def __init__(self, descriptor: SessionDescriptor, engine: runtime.EpisodeEngine,
                 fast_hz: float, buffer_capacity: int):
        self.descriptor = descriptor
        self.engine = engine
        self.fast_hz = fast_hz
        self.buffer_capacity = buffer_capacity
        self.seq = 0
        self.log: List[dict] = []
        self.clients: List[StreamBuffer] = []
        self.trace: Optional[runtime.EpisodeTrace] = None
        self._lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None

    # -- message fan-out -----------------------------------------------------

    def _emit(self, msg_type: str, payload: dict) -> None:
        with self._lock:
            msg = {"type": msg_type, "session": self.descriptor.session_id,
                   "seq": self.seq, **payload}
            self.seq += 1
            self.log.append(msg)
            for client in self.clients:
                client.push(dict(msg))

    def attach(self) -> StreamBuffer:
        """Subscribe a client; replays the full log so far, then follows live."""
        buf = StreamBuffer(self.buffer_capacity)
        with self._lock:
            for msg in self.log:
                buf.push(dict(msg))
            self.clients.append(buf)
        return buf

    def detach(self, buf: StreamBuffer) -> None:
        with self._lock:
            if buf in self.clients:
                self.clients.remove(buf)
        buf.close()

    # -- episode loop ---------------------------------------------------------

    def start(self) -> None:
        self._thread = threading.Thread(target=self._run, daemon=True)
        self.descriptor.state = "running"
        self._thread.start()

    def join(self, timeout: Optional[float] = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    def inject(self, event: GuidanceEvent) -> int:
        return self.engine.inject_guidance(event)

    def _run(self) -> None:
        engine = self.engine
        wall = engine.config.clock_mode == runtime.WALL
        period = 1.0 / self.fast_hz if wall else 0.0
        n_slow = 0
        n_fast = 0
        while not engine.done:
            start = time.monotonic()
            tick = engine.tick
            obs = sim.observe(engine.state, engine.perturbation, engine.seed,
                              engine.task)
            self._emit(MSG_OBSERVATION, {"fast_tick": tick, **obs.to_json()})
            engine.advance()
            while n_slow < len(engine.slow_records):
                rec = engine.slow_records[n_slow]
                n_slow += 1
                self._emit(MSG_COT, {
                    "slow_tick": rec.slow_index, "fast_tick": rec.fast_tick,
                    "cot": rec.cot_text,
                    "picked_label": rec.picked_label,
                    "picked_box": list(rec.picked_box),
                    "grounding_rule": rec.grounding_rule,
                })
            while n_fast < len(engine.fast_records):
                rec = engine.fast_records[n_fast]
                n_fast += 1
                self._emit(MSG_ACTION, {
                    "fast_tick": rec.tick, "executed_step": list(rec.action),
                    "gripper": list(rec.gripper), "staleness": rec.staleness,
                    "chunk_digest": _chunk_digest([rec.action]),
                })
            if wall:
                time.sleep(max(0.0, period - (time.monotonic() - start)))
        self.trace = engine.trace()
        self.descriptor.state = "done"
        self.descriptor.outcome = self.trace.success
        self._emit(MSG_RESULT, {
            "outcome": "success" if self.trace.success else "failure",
            "final_tick": self.trace.final_tick,
            "trace_ref": f"/sessions/{self.descriptor.session_id}/result",
        })
        with self._lock:
            for client in self.clients:
                client.close()


@dataclass
class GatewayConfig:
    capacity: int = DEFAULT_CAPACITY
    buffer_capacity: int = DEFAULT_BUFFER
    fast_hz: float = DEFAULT_FAST_HZ


def _parse_runtime_config(data: dict) -> runtime.RuntimeConfig:
    allowed = {"slow_period", "chunk_length", "max_fast_ticks", "clock_mode",
               "chunk_stride", "euler_steps"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown runtime config keys: {sorted(unknown)}")
    return runtime.RuntimeConfig(**data)


def create_app(policy: runtime.Policy, config: GatewayConfig = GatewayConfig()) -> FastAPI:
    app = FastAPI(title="steertab gateway")
    sessions: Dict[str, Session] = {}
    app.state.sessions = sessions

    def _get(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail={"class": ERR_BAD_REQUEST,
                                             "detail": "unknown session"})
        return session

    @app.post("/sessions", status_code=201)
    def start_session(body: dict):
        running = sum(1 for s in sessions.values()
                      if s.descriptor.state != "done")
        if running >= config.capacity:
            raise HTTPException(429, detail={"class": ERR_CAPACITY,
                                             "detail": "capacity exceeded"})
        scenario = body.get("scenario", "single_target")
        if scenario not in sim.SCENARIOS:
            raise HTTPException(400, detail={"class": ERR_BAD_REQUEST,
                                             "detail": f"unknown scenario {scenario!r}"})
        try:
            perturbation = sim.PerturbationConfig.from_dict(
                body.get("perturbation", {}))
            rt_config = _parse_runtime_config(body.get("config", {}))
            script = {
                int(k): [GuidanceEvent.from_json(e) for e in evs]
                for k, evs in body.get("script", {}).items()
            }
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(400, detail={"class": ERR_BAD_REQUEST,
                                             "detail": str(exc)})
        seed = int(body.get("seed", 0))
        session_id = body.get("session_id") or uuid.uuid4().hex[:12]
        if session_id in sessions:
            raise HTTPException(400, detail={"class": ERR_BAD_REQUEST,
                                             "detail": "session id already used"})
        engine = runtime.EpisodeEngine(scenario, perturbation, policy,
                                       rt_config, seed, script or None)
        descriptor = SessionDescriptor(
            session_id=session_id, scenario=scenario,
            perturbation=body.get("perturbation", {}),
            config=body.get("config", {}))
        session = Session(descriptor, engine, config.fast_hz,
                          config.buffer_capacity)
        sessions[session_id] = session
        session.start()
        return descriptor.to_json()

    @app.get("/sessions")
    def list_sessions():
        return [s.descriptor.to_json() for s in sessions.values()]

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _get(session_id).descriptor.to_json()

    @app.get("/sessions/{session_id}/result")
    def get_result(session_id: str):
        session = _get(session_id)
        if session.trace is None:
            raise HTTPException(409, detail={"class": ERR_STALE,
                                             "detail": "session still running"})
        trace = session.trace
        return {
            "outcome": "success" if trace.success else "failure",
            "final_tick": trace.final_tick,
            "trace_jsonl": trace.to_jsonl(),
        }

    @app.post("/sessions/{session_id}/guidance")
    def post_guidance(session_id: str, body: dict):
        session = _get(session_id)
        return _handle_guidance(session, body)

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        session = sessions.get(session_id)
        if session is None:
            await websocket.send_text(json.dumps({
                "type": MSG_ERROR, "session": session_id, "seq": 0,
                "class": ERR_BAD_REQUEST, "detail": "unknown session"}))
            await websocket.close()
            return
        await websocket.send_text(json.dumps({
            "type": MSG_HELLO, "session": session_id, "seq": -1,
            "protocol_version": PROTOCOL_VERSION}))
        buf = session.attach()
        loop = asyncio.get_running_loop()

        async def sender():
            while True:
                msg = await loop.run_in_executor(None, buf.pop, 0.1)
                if msg is not None:
                    await websocket.send_text(json.dumps(msg))
                elif buf.closed:
                    return

        send_task = asyncio.ensure_future(sender())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError as exc:
                    reply = {"class": ERR_BAD_REQUEST, "detail": str(exc),
                             "type": MSG_ERROR}
                else:
                    reply = _handle_guidance(session, body, raise_http=False)
                reply.setdefault("session", session_id)
                reply.setdefault("seq", -1)
                await websocket.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            session.detach(buf)

    return app


def _handle_guidance(session: Session, body: dict, raise_http: bool = True) -> dict:
    def error(cls: str, detail: str, status: int) -> dict:
        payload = {"type": MSG_ERROR, "class": cls, "detail": detail}
        if raise_http:
            raise HTTPException(status, detail={"class": cls, "detail": detail})
        return payload

    if body.get("type") != MSG_GUIDANCE or "event" not in body:
        return error(ERR_BAD_REQUEST, "expected a Guidance message with an event", 400)
    try:
        event = GuidanceEvent.from_json(body["event"])
        validate_prior(event.prior)
    except (PriorValidationError, CotValidationError, ValueError,
            KeyError, TypeError) as exc:
        return error(ERR_VALIDATION, str(exc), 422)
    try:
        effective = session.inject(event)
    except runtime.StaleEpisodeError as exc:
        return error(ERR_STALE, str(exc), 409)
    return {"type": MSG_GUIDANCE_ACK, "session": session.descriptor.session_id,
            "effective_fast_tick": effective}


def wire_roundtrip(msg: dict) -> dict:
    """Serialize then parse a wire message; used by protocol property tests."""
    out = json.loads(json.dumps(msg))
    if out.get("type") == MSG_COT and "cot" in out:
        parse_cot(out["cot"])  # parsed fields must remain valid on the wire
    return out
