"""Dense ELU towers, Adam, and the two-tower model container.

Model file layout (little-endian)::

    8 bytes   magic b"CCALNET1"
    u8        head code (0 tno, 1 learned-rank, 2 ccal-rank)
    u64       seed
    2x tower: u32 n_layers, then per layer u32 fan_in, u32 fan_out, u8 activation
              (0 linear, 1 elu), fan_in*fan_out f64 weights (row-major), fan_out f64 biases
    u8        has_state; if 1: u32 d_x, u32 d_y, u32 k, f64 reg, d_x f64 mean_x,
              d_y f64 mean_y, d_x*k f64 proj_x, d_y*k f64 proj_y, k f64 corr
    u32       length of the UTF-8 JSON training-config echo, then the bytes
"""
import io
import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cca import CcaState
from .errors import ContractError, FormatError, PoisonedGradientError, StaleTapeError

HEADS = ("tno", "learned-rank", "ccal-rank")
ACTIVATIONS = ("linear", "elu")
MODEL_MAGIC = b"CCALNET1"


def elu(x):
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


@dataclass(frozen=True)
class TowerSpec:
    """Layer widths from input to output; ELU on hidden layers, linear output."""

    widths: tuple
    activations: Optional[tuple] = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ContractError(f"a tower needs at least one layer of positive width, got {widths}")
        acts = self.activations
        if acts is None:
            acts = ("elu",) * (len(widths) - 2) + ("linear",)
        acts = tuple(acts)
        if len(acts) != len(widths) - 1 or any(a not in ACTIVATIONS for a in acts):
            raise ContractError(f"bad activations {acts} for widths {widths}")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "activations", acts)

    @property
    def output_width(self):
        return self.widths[-1]


class Tower:
    def __init__(self, spec, weights, biases):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        self.version = 0

    @classmethod
    def init(cls, spec, seed, tower_index=0):
        """Glorot-uniform weights, zero biases; every layer has its own seeded stream."""
        weights, biases = [], []
        for i, (fi, fo) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            rng = np.random.default_rng([seed, tower_index, i])
            limit = np.sqrt(6.0 / (fi + fo))
            weights.append(rng.uniform(-limit, limit, size=(fi, fo)))
            biases.append(np.zeros(fo))
        return cls(spec, weights, biases)

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self):
        return Tower(self.spec, [W.copy() for W in self.weights], [b.copy() for b in self.biases])


@dataclass
class MlpTape:
    tower: Tower
    version: int
    inputs: list
    pre: list


def mlp_forward(tower, A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != tower.spec.widths[0]:
        raise ContractError(f"tower expects input width {tower.spec.widths[0]}, got shape {A.shape}")
    inputs, pre = [], []
    h = A
    for W, b, act in zip(tower.weights, tower.biases, tower.spec.activations):
        inputs.append(h)
        z = h @ W + b
        pre.append(z)
        h = elu(z) if act == "elu" else z
    return h, MlpTape(tower, tower.version, inputs, pre)


def mlp_backward(tape, adj_out):
    """Returns ``(grads, adj_input)``; ``grads`` is ordered like ``Tower.params()``."""
    tower = tape.tower
    if tape.version != tower.version:
        raise StaleTapeError("tower parameters changed since this forward pass")
    g = np.asarray(adj_out, dtype=np.float64)
    grads = []
    for W, h, z, act in reversed(list(zip(tower.weights, tape.inputs, tape.pre, tower.spec.activations))):
        if act == "elu":
            g = g * elu_grad(z)
        grads += [g.sum(axis=0), h.T @ g]
        g = g @ W.T
    grads.reverse()
    return grads, g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(params, grads, adam, weight_decay=0.0):
    """In-place Adam update with L2 weight decay folded into the gradients."""
    if len(params) != len(grads):
        raise ContractError("params and grads differ in length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ContractError(f"gradient {i} has shape {g.shape}, parameter {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise PoisonedGradientError(f"non-finite gradient for parameter {i} at step {adam.step + 1}")
    if not adam.m:
        adam.m = [np.zeros_like(p) for p in params]
        adam.v = [np.zeros_like(p) for p in params]
    adam.step += 1
    t = adam.step
    c1 = 1.0 - adam.beta1 ** t
    c2 = 1.0 - adam.beta2 ** t
    for p, g, m, v in zip(params, grads, adam.m, adam.v):
        if weight_decay:
            g = g + weight_decay * p
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * g * g
        p -= adam.lr * (m / c1) / (np.sqrt(v / c2) + adam.eps)
    return params, adam


@dataclass
class DualNet:
    tower_f: Tower
    tower_g: Tower
    head: str
    seed: int = 0
    cca_state: Optional[CcaState] = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.head not in HEADS:
            raise ContractError(f"unknown head {self.head!r}; expected one of {HEADS}")
        kf, kg = self.tower_f.spec.output_width, self.tower_g.spec.output_width
        if kf != kg:
            raise ContractError(f"towers must share output width, got {kf} and {kg}")

    @classmethod
    def init(cls, spec_f, spec_g, head, seed=0):
        return cls(Tower.init(spec_f, seed, 0), Tower.init(spec_g, seed, 1), head, seed)

    @property
    def k(self):
        return self.tower_f.spec.output_width

    def params(self):
        return self.tower_f.params() + self.tower_g.params()

    def bump(self):
        self.tower_f.version += 1
        self.tower_g.version += 1

    def copy(self):
        return DualNet(self.tower_f.copy(), self.tower_g.copy(), self.head, self.seed,
                       None if self.cca_state is None else self.cca_state.copy(), dict(self.config))

    def towers(self, A, B):
        """Topmost hidden representations of both views (before any CCA projection)."""
        return mlp_forward(self.tower_f, A)[0], mlp_forward(self.tower_g, B)[0]

    def uses_cca(self):
        return self.head in ("tno", "ccal-rank")

    def embed_x(self, A):
        x = mlp_forward(self.tower_f, A)[0]
        if not self.uses_cca():
            return x
        self._require_state()
        return (x - self.cca_state.mean_x) @ self.cca_state.proj_x

    def embed_y(self, B):
        y = mlp_forward(self.tower_g, B)[0]
        if not self.uses_cca():
            return y
        self._require_state()
        return (y - self.cca_state.mean_y) @ self.cca_state.proj_y

    def _require_state(self):
        if self.cca_state is None:
            raise ContractError(f"model with head {self.head!r} has no fitted CCA state; refit it on training data")


# ---------------------------------------------------------------------------
# model file

def _write_tower(buf, tower):
    buf.write(struct.pack("<I", len(tower.weights)))
    for W, b, act in zip(tower.weights, tower.biases, tower.spec.activations):
        buf.write(struct.pack("<IIB", W.shape[0], W.shape[1], ACTIVATIONS.index(act)))
        buf.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def model_to_bytes(model):
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<BQ", HEADS.index(model.head), model.seed))
    _write_tower(buf, model.tower_f)
    _write_tower(buf, model.tower_g)
    st = model.cca_state
    buf.write(struct.pack("<B", st is not None))
    if st is not None:
        buf.write(struct.pack("<IIId", st.proj_x.shape[0], st.proj_y.shape[0], st.k, st.reg))
        for arr in (st.mean_x, st.mean_y, st.proj_x, st.proj_y, st.corr):
            buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    cfg = json.dumps(model.config, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    return buf.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated model file while reading {what}", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def floats(self, shape, what):
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n, what), dtype="<f8").astype(np.float64).reshape(shape)


def _read_tower(r):
    (n,) = r.unpack("<I", "layer count")
    widths, acts, weights, biases = [], [], [], []
    for i in range(n):
        fi, fo, act = r.unpack("<IIB", f"layer {i} header")
        if act >= len(ACTIVATIONS):
            raise FormatError(f"unknown activation code {act}", r.pos - 1)
        if widths and widths[-1] != fi:
            raise FormatError("layer widths do not chain", r.pos - 9)
        widths = widths or [fi]
        widths.append(fo)
        acts.append(ACTIVATIONS[act])
        weights.append(r.floats((fi, fo), f"layer {i} weights"))
        biases.append(r.floats((fo,), f"layer {i} biases"))
    return Tower(TowerSpec(tuple(widths), tuple(acts)), weights, biases)


def model_from_bytes(data):
    r = _Reader(data)
    if r.take(8, "magic") != MODEL_MAGIC:
        raise FormatError("bad magic, not a CCALNET1 model file", 0)
    head, seed = r.unpack("<BQ", "head")
    if head >= len(HEADS):
        raise FormatError(f"unknown head code {head}", 8)
    tf = _read_tower(r)
    tg = _read_tower(r)
    (has_state,) = r.unpack("<B", "state flag")
    state = None
    if has_state:
        dx, dy, k, reg = r.unpack("<IIId", "state header")
        state = CcaState(r.floats((dx,), "mean_x"), r.floats((dy,), "mean_y"),
                         r.floats((dx, k), "proj_x"), r.floats((dy, k), "proj_y"),
                         r.floats((k,), "corr"), reg, k)
    (n,) = r.unpack("<I", "config length")
    try:
        config = json.loads(r.take(n, "config").decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"config echo is not valid JSON ({exc})", r.pos - n) from None
    if r.pos != len(data):
        raise FormatError("trailing bytes after model", r.pos)
    return DualNet(tf, tg, HEADS[head], seed, state, config)


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
