"""Stacked LSTM binary classifier trained with exact BPTT and Adam.

Gate blocks are stacked in the order forget, input, output, candidate, so a
layer's ``W`` is ``(4H, D)``, ``U`` is ``(4H, H)`` and ``b`` is ``(4H,)``.
The recurrences themselves run in ``_backend.kernels``.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _backend

CHECKPOINT_FORMAT = "paperecg-lstm"
CHECKPOINT_VERSION = 1
GATES = ("f", "i", "o", "g")

_generation = itertools.count(1)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite")


@dataclass(eq=False)
class LstmLayerParams:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        g4, _ = self.W.shape
        if g4 % 4 or self.U.shape != (g4, g4 // 4) or self.b.shape != (g4,):
            raise ValueError(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str):
        """``(W_g, U_g, b_g)`` views for one gate."""
        k = GATES.index(name)
        h = self.hidden
        sl = slice(k * h, (k + 1) * h)
        return self.W[sl], self.U[sl], self.b[sl]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(np.zeros(hidden), np.zeros(hidden))


def lstm_step(params: LstmLayerParams, x_t, prev: LstmState):
    """One time step; returns the new state and the gate activations ``(f, i, o, g)``."""
    x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
    _finite(x_t, prev.h, prev.c, params.W, params.U, params.b)
    if x_t.size != params.input_size or prev.h.size != params.hidden:
        raise ValueError("dimension mismatch")
    h = params.hidden
    z = params.W @ x_t + params.U @ prev.h + params.b
    f = sigmoid(z[:h])
    i = sigmoid(z[h:2 * h])
    o = sigmoid(z[2 * h:3 * h])
    g = np.tanh(z[3 * h:])
    c = f * prev.c + i * g
    return LstmState(o * np.tanh(c), c), {"f": f, "i": i, "o": o, "g": g}


@dataclass(eq=False)
class LstmModel:
    layers: list
    dense_w: np.ndarray
    dense_b: np.ndarray            # shape (1,) so optimisers can update in place
    dropout: float = 0.25
    metadata: dict = field(default_factory=dict)
    generation: int = field(default_factory=lambda: next(_generation))

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        self.dense_w = np.ascontiguousarray(self.dense_w, dtype=np.float64).reshape(-1)
        self.dense_b = np.ascontiguousarray(self.dense_b, dtype=np.float64).reshape(1)
        for lo, hi in zip(self.layers, self.layers[1:]):
            if hi.input_size != lo.hidden:
                raise ValueError("layer input size must equal the previous layer's hidden size")
        if self.dense_w.size != self.layers[-1].hidden:
            raise ValueError("dense weights must match the top layer's hidden size")

    @classmethod
    def init(cls, input_size: int = 1, hidden: int = 150, num_layers: int = 1,
             dropout: float = 0.25, seed: int = 0, metadata: dict | None = None) -> "LstmModel":
        """Uniform init in +-1/sqrt(H) for every weight and bias."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(hidden)
        layers = []
        d = input_size
        for _ in range(num_layers):
            layers.append(LstmLayerParams(
                rng.uniform(-bound, bound, (4 * hidden, d)),
                rng.uniform(-bound, bound, (4 * hidden, hidden)),
                rng.uniform(-bound, bound, 4 * hidden),
            ))
            d = hidden
        return cls(layers, rng.uniform(-bound, bound, hidden), rng.uniform(-bound, bound, 1),
                   dropout, dict(metadata or {}))

    @property
    def hidden(self) -> int:
        return self.layers[-1].hidden

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    def params(self) -> list:
        out = []
        for L in self.layers:
            out += [L.W, L.U, L.b]
        return out + [self.dense_w, self.dense_b]

    def param_names(self) -> list:
        out = []
        for k in range(len(self.layers)):
            out += [f"layer{k}.W", f"layer{k}.U", f"layer{k}.b"]
        return out + ["dense.w", "dense.b"]

    def touch(self):
        """Mark the parameters as changed; invalidates outstanding forward caches."""
        self.generation = next(_generation)

    def copy(self) -> "LstmModel":
        return LstmModel([LstmLayerParams(L.W.copy(), L.U.copy(), L.b.copy()) for L in self.layers],
                         self.dense_w.copy(), self.dense_b.copy(), self.dropout, json.loads(json.dumps(self.metadata)))


@dataclass(eq=False)
class ForwardCache:
    model_id: int
    generation: int
    inputs: list          # per layer: (T, D) input sequence as seen by the layer
    hs: list              # per layer: (T+1, H), row 0 is the zero initial state
    cs: list
    gates: list           # per layer: (T, 4H)
    masks: list           # inter-layer masks (T, H) already scaled, or None
    out_mask: np.ndarray  # scaled mask on h_T, or None
    h_top: np.ndarray     # (masked) h_T fed to the dense head
    logit: float


def _mask(rng, shape, p):
    keep = rng.random(shape) >= p
    return keep.astype(np.float64) / (1.0 - p)


def forward_sequence(model: LstmModel, x, train: bool = False, seed: int | None = None):
    """Run a sequence through every layer; returns ``(probability, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    T = x.shape[0]
    if T < 1:
        raise ValueError("sequence must have at least one step")
    if x.shape[1] != model.input_size:
        raise ValueError(f"dimension mismatch: input has {x.shape[1]} features, model expects {model.input_size}")
    _finite(x)
    p = model.dropout
    drop = train and p > 0.0
    rng = np.random.default_rng(seed) if drop else None
    k = _backend.kernels
    inputs, hs_l, cs_l, gates_l, masks = [], [], [], [], []
    seq = x
    for li, L in enumerate(model.layers):
        if li > 0:
            if drop:
                m = _mask(rng, seq.shape, p)
                seq = seq * m
                masks.append(m)
            else:
                masks.append(None)
        inputs.append(seq)
        xwb = np.ascontiguousarray(seq @ L.W.T + L.b)
        hs, cs, gates = k.lstm_forward(xwb, L.U)
        hs_l.append(hs)
        cs_l.append(cs)
        gates_l.append(gates)
        seq = hs[1:]
    h_top = hs_l[-1][T]
    out_mask = None
    if drop:
        out_mask = _mask(rng, h_top.shape, p)
        h_top = h_top * out_mask
    logit = float(model.dense_w @ h_top + model.dense_b[0])
    if not math.isfinite(logit):
        raise ValueError("non-finite")
    cache = ForwardCache(id(model), model.generation, inputs, hs_l, cs_l, gates_l, masks,
                         out_mask, h_top, logit)
    return _sigmoid_scalar(logit), cache


def predict(model: LstmModel, x) -> float:
    return forward_sequence(model, x, train=False)[0]


def _softplus(z: float) -> float:
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def loss_from_logit(logit: float, y: int, pos_weight: float = 1.0) -> float:
    """-(w y log s + (1-y) log(1-s)) with s = sigmoid(logit), evaluated in log space."""
    return pos_weight * y * _softplus(-logit) + (1 - y) * _softplus(logit)


def loss_weighted_bce(prob: float, y: int, pos_weight: float = 1.0) -> float:
    if not 0.0 < prob < 1.0:
        raise ValueError("probability must lie strictly inside (0, 1)")
    return loss_from_logit(math.log(prob) - math.log1p(-prob), y, pos_weight)


def backward_sequence(model: LstmModel, cache: ForwardCache, y: int, pos_weight: float = 1.0) -> list:
    """Gradients of the weighted loss for ``model.params()``, in the same order."""
    if cache is None:
        raise ValueError("missing forward cache")
    if cache.model_id != id(model) or cache.generation != model.generation:
        raise ValueError("stale forward cache: parameters changed since the forward pass")
    s = _sigmoid_scalar(cache.logit)
    dlogit = -pos_weight * y * (1.0 - s) + (1 - y) * s
    d_dense_w = dlogit * cache.h_top
    d_dense_b = np.array([dlogit])
    dh_top = dlogit * model.dense_w
    if cache.out_mask is not None:
        dh_top = dh_top * cache.out_mask
    k = _backend.kernels
    T = cache.gates[0].shape[0]
    grads = [None] * (3 * len(model.layers))
    dh_ext = np.zeros((T, model.hidden))
    dh_ext[T - 1] = dh_top
    for li in range(len(model.layers) - 1, -1, -1):
        L = model.layers[li]
        dz = k.lstm_backward(cache.gates[li], cache.cs[li], L.U, np.ascontiguousarray(dh_ext))
        grads[3 * li] = dz.T @ cache.inputs[li]
        grads[3 * li + 1] = dz.T @ cache.hs[li][:T]
        grads[3 * li + 2] = dz.sum(axis=0)
        if li > 0:
            dh_ext = dz @ L.W
            m = cache.masks[li - 1]
            if m is not None:
                dh_ext = dh_ext * m
    return grads + [d_dense_w, d_dense_b]


# --- Adam ----------------------------------------------------------------

@dataclass(eq=False)
class AdamState:
    m: list
    v: list
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params: list, grads: list, state: AdamState):
    """Bias-corrected Adam, updating ``params`` in place. Returns ``(params, state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must line up")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.alpha * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --- training ------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, instance: int, loss: float):
        super().__init__(f"diverged: non-finite loss {loss} at epoch {epoch}, instance {instance}")
        self.epoch, self.instance, self.loss = epoch, instance, loss


@dataclass
class TrainConfig:
    epochs: int = 15
    lr: float = 1e-3
    pos_weight: float = 1.0
    seed: int = 0


def _step_seed(seed: int, epoch: int, idx: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, idx]).generate_state(1)[0])


def train(model: LstmModel, dataset, config: TrainConfig, progress=None):
    """Instance-wise (batch size 1) training; returns ``(model, per-epoch total loss)``."""
    data = list(dataset)
    if not data:
        raise ValueError("empty training set")
    params = model.params()
    state = AdamState.for_params(params, alpha=config.lr)
    rng = np.random.default_rng(config.seed)
    log = []
    for epoch in range(config.epochs):
        total = 0.0
        for idx in rng.permutation(len(data)):
            x, y = data[idx]
            _, cache = forward_sequence(model, x, train=True, seed=_step_seed(config.seed, epoch, int(idx)))
            loss = loss_from_logit(cache.logit, y, config.pos_weight)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, int(idx), loss)
            total += loss
            grads = backward_sequence(model, cache, y, config.pos_weight)
            adam_step(params, grads, state)
            model.touch()
        if not math.isfinite(total):
            raise TrainingDiverged(epoch, -1, total)
        log.append(total)
        if progress:
            progress(epoch, total)
    return model, log


# --- checkpoints ---------------------------------------------------------

def _enc(obj) -> str:
    """JSON with every float written to 17 significant digits, keys sorted."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if not math.isfinite(f):
            raise ValueError("cannot serialise non-finite number")
        return "%.17g" % f
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _enc(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_enc(v) for v in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_enc(obj[k])}" for k in sorted(obj)) + "}"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _arr(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.ravel()}


def model_to_json(model: LstmModel) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "hyperparams": {"input_size": model.input_size, "hidden": model.hidden,
                        "num_layers": len(model.layers), "dropout": model.dropout},
        "layers": [{"W": _arr(L.W), "U": _arr(L.U), "b": _arr(L.b)} for L in model.layers],
        "dense": {"w": _arr(model.dense_w), "b": _arr(model.dense_b)},
        "metadata": model.metadata,
    }
    return _enc(doc) + "\n"


def _unarr(d, name) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in d["shape"])
        a = np.asarray(d["data"], dtype=np.float64)
        return a.reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"corrupt checkpoint: bad array {name}: {exc}") from None


def model_from_json(text: str) -> LstmModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt checkpoint: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("corrupt checkpoint: not an LSTM checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version mismatch: expected {CHECKPOINT_VERSION}, got {doc.get('version')!r}")
    try:
        layers = [LstmLayerParams(_unarr(L["W"], "W"), _unarr(L["U"], "U"), _unarr(L["b"], "b"))
                  for L in doc["layers"]]
        hp = doc["hyperparams"]
        model = LstmModel(layers, _unarr(doc["dense"]["w"], "dense.w"), _unarr(doc["dense"]["b"], "dense.b"),
                          float(hp["dropout"]), dict(doc.get("metadata") or {}))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"corrupt checkpoint: missing field {exc}") from None
    if (model.hidden != hp["hidden"] or len(model.layers) != hp["num_layers"]
            or model.input_size != hp["input_size"]):
        raise ValueError("corrupt checkpoint: hyperparameters disagree with the stored arrays")
    for p in model.params():
        if not np.all(np.isfinite(p)):
            raise ValueError("corrupt checkpoint: non-finite parameter")
    return model


def save_model(path, model: LstmModel) -> None:
    from .ioutil import atomic_write_text
    atomic_write_text(path, model_to_json(model))


def load_model(path) -> LstmModel:
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())
