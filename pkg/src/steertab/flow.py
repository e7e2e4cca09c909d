"""Flow-matching action head.

A small feed-forward network parameterizes a time-dependent velocity field
over flattened action chunks.  Training uses the standard conditional
flow-matching objective with linear interpolation paths and a Gaussian source;
sampling integrates the field with fixed-step Euler.  Everything is plain
numpy with hand-written backprop so gradients can be checked exactly.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .reasoner import MEMORY_DIM, ReasoningMemory
from .sim import Observation

CHUNK_LEN = 8
ACTION_DIM = 3
HIDDEN = 64
EULER_STEPS = 10

# Conditioning layout:
#   [0:3]   proprio (x, y, aperture)
#   [3:6]   wrist nearest object (dx, dy, distance); sentinel (0, 0, 1)
#   [6:10]  target passthrough: affordance - gripper and next waypoint -
#           gripper, each normalized to action units by the same uniform
#           scaling the stepper applies (divide by max(step, |dx|, |dy|)),
#           so entries sit in [-1, 1] and preserve the direction ratio
#   [10:42] reasoning memory vector
WRIST_SENTINEL_DIST = 1.0
WRIST_RANGE = 0.2  # matches the simulator's wrist view radius
TARGET_BLOCK = 4
COND_DIM = 3 + 3 + TARGET_BLOCK + MEMORY_DIM
_WAYPOINT_REACHED = 0.05  # waypoints closer than this count as passed
_OFFSET_SCALE = 0.05      # matches the simulator's per-tick step size


class FlowError(ValueError):
    pass


class DivergenceError(FlowError):
    pass


@dataclass
class ActionChunk:
    steps: np.ndarray  # (k, 3) of (dx, dy, grip) in [-1, 1]

    def __post_init__(self):
        a = np.asarray(self.steps, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != ACTION_DIM or a.shape[0] < 1:
            raise FlowError(f"chunk must be (k, {ACTION_DIM}) with k >= 1, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise FlowError("chunk contains non-finite entries")
        self.steps = a

    @property
    def k(self) -> int:
        return self.steps.shape[0]


def featurize(observation: Observation, memory: ReasoningMemory) -> np.ndarray:
    """Deterministic conditioning vector for the action head."""
    v = np.zeros(COND_DIM, dtype=np.float64)
    gx, gy, aperture = observation.proprio
    v[0:3] = (gx, gy, aperture)

    # Close-range offset to the plan's terminal waypoint (grasp site before
    # the grasp, place site during transport).  Referencing the reasoner's
    # plan rather than the nearest wrist-view object keeps the policy steered
    # by the grounded choice when look-alike distractors sit closer to the
    # gripper; gating on the wrist range keeps it a local precision cue.
    v[3:6] = (0.0, 0.0, WRIST_SENTINEL_DIST)
    terminal = memory.vector[14:16]
    if terminal[0] != 0.0 or terminal[1] != 0.0:
        dist = math.hypot(terminal[0] - gx, terminal[1] - gy)
        if dist <= WRIST_RANGE:
            v[3:6] = (terminal[0] - gx, terminal[1] - gy, dist)

    def normalized(dx: float, dy: float) -> Tuple[float, float]:
        m = max(_OFFSET_SCALE, abs(dx), abs(dy))
        return dx / m, dy / m

    mem = memory.vector
    aff = mem[4:6]
    if aff[0] != 0.0 or aff[1] != 0.0:
        v[6], v[7] = normalized(aff[0] - gx, aff[1] - gy)
    waypoints = mem[6:16].reshape(5, 2)
    if np.any(waypoints):
        # Anchor at the nearest waypoint and only look forward from there:
        # between slow-loop refreshes the gripper keeps moving, so earlier
        # waypoints sit behind it and would otherwise read as "next".
        nearest = min(range(len(waypoints)), key=lambda i: math.hypot(
            waypoints[i][0] - gx, waypoints[i][1] - gy))
        wp = waypoints[-1]
        for cand in waypoints[nearest:]:
            if math.hypot(cand[0] - gx, cand[1] - gy) > _WAYPOINT_REACHED:
                wp = cand
                break
        v[8], v[9] = normalized(wp[0] - gx, wp[1] - gy)
    v[10:] = mem
    return v


# ---------------------------------------------------------------------------
# Model


@dataclass
class FlowModel:
    """Two-hidden-layer tanh network: (x, tau, cond) -> velocity over the chunk."""

    chunk_len: int = CHUNK_LEN
    cond_dim: int = COND_DIM
    hidden: int = HIDDEN
    seed: int = 0
    params: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.out_dim = self.chunk_len * ACTION_DIM
        self.in_dim = self.out_dim + 1 + self.cond_dim
        if not self.params:
            rng = np.random.default_rng(self.seed)
            def init(n_in, n_out):
                return rng.normal(0.0, 1.0 / math.sqrt(n_in), size=(n_in, n_out))
            self.params = {
                "W1": init(self.in_dim, self.hidden), "b1": np.zeros(self.hidden),
                "W2": init(self.hidden, self.hidden), "b2": np.zeros(self.hidden),
                "W3": init(self.hidden, self.out_dim), "b3": np.zeros(self.out_dim),
            }
        self._check_shapes()

    def _check_shapes(self):
        expect = {
            "W1": (self.in_dim, self.hidden), "b1": (self.hidden,),
            "W2": (self.hidden, self.hidden), "b2": (self.hidden,),
            "W3": (self.hidden, self.out_dim), "b3": (self.out_dim,),
        }
        for k, shape in expect.items():
            if self.params[k].shape != shape:
                raise FlowError(f"parameter {k} has shape {self.params[k].shape}, "
                                f"expected {shape}")

    def velocity(self, x: np.ndarray, tau, cond: np.ndarray) -> np.ndarray:
        """Evaluate the field on a batch; x (n, out_dim), tau scalar or (n,), cond (n, cond_dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
        tau_col = np.broadcast_to(np.asarray(tau, dtype=np.float64).reshape(-1, 1),
                                  (x.shape[0], 1))
        inp = np.concatenate([x, tau_col, cond], axis=1)
        p = self.params
        h1 = np.tanh(inp @ p["W1"] + p["b1"])
        h2 = np.tanh(h1 @ p["W2"] + p["b2"])
        return h2 @ p["W3"] + p["b3"]

    def copy(self) -> "FlowModel":
        return FlowModel(self.chunk_len, self.cond_dim, self.hidden, self.seed,
                         {k: v.copy() for k, v in self.params.items()})


def _forward_with_cache(params, inp):
    h1 = np.tanh(inp @ params["W1"] + params["b1"])
    h2 = np.tanh(h1 @ params["W2"] + params["b2"])
    out = h2 @ params["W3"] + params["b3"]
    return out, (inp, h1, h2)


def fm_loss_and_grad(
    model: FlowModel,
    chunks: np.ndarray,
    conds: np.ndarray,
    seed: int,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Conditional flow-matching loss and its analytic gradient.

    Per sample: a0 ~ N(0, I), tau ~ U(0, 1), x = (1 - tau) a0 + tau a1,
    target u = a1 - a0, loss = mean over the batch of ||v(x, tau, c) - u||^2.
    """
    n = len(chunks)
    if n == 0:
        raise FlowError("empty batch")
    a1 = np.asarray(chunks, dtype=np.float64).reshape(n, -1)
    conds = np.asarray(conds, dtype=np.float64)
    rng = np.random.default_rng(seed)
    a0 = rng.normal(size=a1.shape)
    tau = rng.uniform(size=(n, 1))
    x = (1.0 - tau) * a0 + tau * a1
    u = a1 - a0

    inp = np.concatenate([x, tau, conds], axis=1)
    out, (inp, h1, h2) = _forward_with_cache(model.params, inp)
    r = out - u
    loss = float(np.mean(np.sum(r * r, axis=1)))
    if not math.isfinite(loss):
        raise FlowError("non-finite flow-matching loss (check parameter block W3/b3)")

    p = model.params
    d_out = 2.0 * r / n
    grads = {
        "W3": h2.T @ d_out,
        "b3": d_out.sum(axis=0),
    }
    d_h2 = (d_out @ p["W3"].T) * (1.0 - h2 * h2)
    grads["W2"] = h1.T @ d_h2
    grads["b2"] = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ p["W2"].T) * (1.0 - h1 * h1)
    grads["W1"] = inp.T @ d_h1
    grads["b1"] = d_h1.sum(axis=0)
    return loss, grads


@dataclass
class TrainConfig:
    steps: int = 4000
    learning_rate: float = 0.05
    batch_size: int = 256
    seed: int = 0


def train(
    dataset: Tuple[np.ndarray, np.ndarray],
    config: TrainConfig = TrainConfig(),
    model: Optional[FlowModel] = None,
) -> Tuple[FlowModel, List[float]]:
    """Plain seeded minibatch gradient descent; returns (model, loss curve)."""
    conds, chunks = dataset
    n = len(conds)
    if n == 0:
        raise FlowError("empty dataset")
    conds = np.asarray(conds, dtype=np.float64)
    chunks = np.asarray(chunks, dtype=np.float64).reshape(n, -1)
    if model is None:
        model = FlowModel(chunk_len=chunks.shape[1] // ACTION_DIM,
                          cond_dim=conds.shape[1], seed=config.seed)
    else:
        model = model.copy()

    idx_rng = np.random.default_rng([config.seed, 0x7A41])
    curve: List[float] = []
    for step_i in range(config.steps):
        if config.batch_size >= n:
            batch = np.arange(n)
        else:
            batch = idx_rng.integers(0, n, size=config.batch_size)
        loss, grads = fm_loss_and_grad(
            model, chunks[batch], conds[batch], seed=(config.seed * 1_000_003 + step_i)
        )
        if loss > 1e6:
            raise DivergenceError(
                f"training diverged at step {step_i} (loss {loss:.3g}); lower the learning rate"
            )
        for k, g in grads.items():
            model.params[k] -= config.learning_rate * g
        curve.append(loss)
    return model, curve


def validation_loss(model: FlowModel, dataset, seed: int = 1, rounds: int = 8) -> float:
    """Monte-Carlo estimate of the flow-matching loss over a dataset."""
    conds, chunks = dataset
    total = 0.0
    for i in range(rounds):
        loss, _ = fm_loss_and_grad(model, chunks, conds, seed=seed * 7919 + i)
        total += loss
    return total / rounds


def sample_chunk(
    model: FlowModel,
    cond: np.ndarray,
    euler_steps: int = EULER_STEPS,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> ActionChunk:
    """Integrate the velocity field from Gaussian noise; output clipped to [-1, 1]."""
    if euler_steps < 1:
        raise FlowError("euler_steps must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, model.out_dim))
    cond = np.asarray(cond, dtype=np.float64).reshape(1, -1)
    dt = 1.0 / euler_steps
    for i in range(euler_steps):
        v = model.velocity(x, i * dt, cond)
        if not np.all(np.isfinite(v)):
            raise FlowError(f"non-finite velocity at Euler step {i}")
        x = x + dt * v
    out = np.clip(x.reshape(model.chunk_len, ACTION_DIM), -1.0, 1.0)
    return ActionChunk(out)


# ---------------------------------------------------------------------------
# Serialization

_MAGIC = b"STFW"
_VERSION = 1
_PARAM_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")


def save_model(model: FlowModel, path: str) -> None:
    """Versioned binary: magic, version, dims, then float64 parameter blocks."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIIII", _VERSION, model.chunk_len, model.cond_dim,
                            model.hidden, model.seed & 0xFFFFFFFF))
        for name in _PARAM_ORDER:
            arr = np.ascontiguousarray(model.params[name], dtype=np.float64)
            f.write(arr.tobytes())


def load_model(path: str) -> FlowModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise FlowError(f"bad magic {magic!r}; not a flow model file")
        version, chunk_len, cond_dim, hidden, seed = struct.unpack("<IIIII", f.read(20))
        if version != _VERSION:
            raise FlowError(f"unsupported model file version {version}")
        stub = FlowModel(chunk_len=chunk_len, cond_dim=cond_dim, hidden=hidden, seed=0)
        params = {}
        for name in _PARAM_ORDER:
            shape = stub.params[name].shape
            count = int(np.prod(shape))
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise FlowError(f"truncated parameter block {name}")
            params[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return FlowModel(chunk_len=chunk_len, cond_dim=cond_dim, hidden=hidden,
                     seed=seed, params=params)


def export_loss_curve(curve: Sequence[float], path: str) -> None:
    with open(path, "w") as f:
        f.write("step,loss\n")
        for i, v in enumerate(curve):
            f.write(f"{i},{v!r}\n")
