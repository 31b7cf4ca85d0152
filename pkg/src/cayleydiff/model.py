"""Residual MLP score network with hand-rolled reverse-mode differentiation.

Architecture: [features | sinusoidal time embedding] -> input affine ->
n_blocks * [layernorm -> affine -> SiLU -> affine -> skip] -> output affine ->
exp. The exponential head keeps scores strictly positive and makes the log in
the training objective exact (the network learns log-scores).

Weights and activations are float32 by default; the loss is always accumulated
in float64. ``model.astype(np.float64)`` yields a double-precision twin of the
same network for finite-difference gradient checking.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DomainError, FormatError, NumericError
from .graphs import CayleyGraph

LN_EPS = 1e-5

CHECKPOINT_MAGIC = b"CDSM"
CHECKPOINT_VERSION = 1


def time_embedding(t, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal embedding of integer times, shape (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _dsilu_from_sig(x, sig):
    return sig * (1.0 + x * (1.0 - sig))


class ScoreModel:
    """Per-generator positive score network sigma_{theta,t}(x)."""

    def __init__(self, feature_dim: int, n_out: int, hidden_dim: int = 256,
                 n_blocks: int = 4, time_embed_dim: int = 16,
                 params: dict | None = None, dtype=np.float32):
        if min(feature_dim, n_out, hidden_dim, time_embed_dim) < 1 or n_blocks < 0:
            raise DomainError("model dimensions must be positive")
        if time_embed_dim % 2:
            raise DomainError("time_embed_dim must be even")
        self.feature_dim = feature_dim
        self.n_out = n_out
        self.hidden_dim = hidden_dim
        self.n_blocks = n_blocks
        self.time_embed_dim = time_embed_dim
        self.dtype = dtype
        self.params = params if params is not None else {}

    # -- parameter bookkeeping ------------------------------------------------

    def param_names(self) -> list[str]:
        names = ["w_in", "b_in"]
        for k in range(self.n_blocks):
            names += [f"block{k}.ln_g", f"block{k}.ln_b", f"block{k}.w1",
                      f"block{k}.b1", f"block{k}.w2", f"block{k}.b2"]
        names += ["w_out", "b_out"]
        return names

    def param_shape(self, name: str) -> tuple:
        H, F, E, O = self.hidden_dim, self.feature_dim, self.time_embed_dim, self.n_out
        if name == "w_in":
            return (F + E, H)
        if name == "b_in":
            return (H,)
        if name == "w_out":
            return (H, O)
        if name == "b_out":
            return (O,)
        leaf = name.split(".")[1]
        return {"ln_g": (H,), "ln_b": (H,), "w1": (H, H), "b1": (H,),
                "w2": (H, H), "b2": (H,)}[leaf]

    @property
    def n_parameters(self) -> int:
        return sum(int(np.prod(self.param_shape(n))) for n in self.param_names())

    def astype(self, dtype) -> "ScoreModel":
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        return ScoreModel(self.feature_dim, self.n_out, self.hidden_dim,
                          self.n_blocks, self.time_embed_dim, params, dtype)

    def copy(self) -> "ScoreModel":
        return ScoreModel(self.feature_dim, self.n_out, self.hidden_dim,
                          self.n_blocks, self.time_embed_dim,
                          {k: v.copy() for k, v in self.params.items()}, self.dtype)

    # -- forward ---------------------------------------------------------------

    def _forward_cached(self, features: np.ndarray, t) -> tuple[np.ndarray, dict]:
        p = self.params
        X = np.asarray(features, dtype=self.dtype)
        emb = time_embedding(t, self.time_embed_dim, self.dtype)
        if emb.shape[0] == 1 and X.shape[0] > 1:
            emb = np.broadcast_to(emb, (X.shape[0], self.time_embed_dim))
        full = np.concatenate([X, emb], axis=1)
        cache = {"input": full, "blocks": []}
        Z = full @ p["w_in"] + p["b_in"]
        H = self.hidden_dim
        for k in range(self.n_blocks):
            g, b = p[f"block{k}.ln_g"], p[f"block{k}.ln_b"]
            mu = Z.mean(axis=1, keepdims=True)
            zc = Z - mu
            var = (np.einsum("ij,ij->i", zc, zc) / H)[:, None]
            inv_std = 1.0 / np.sqrt(var + LN_EPS)
            u = zc * inv_std
            s = u * g + b
            h1 = s @ p[f"block{k}.w1"] + p[f"block{k}.b1"]
            sig = _sigmoid(h1)
            act = h1 * sig
            cache["blocks"].append({"z_in": Z, "inv_std": inv_std, "u": u,
                                    "s": s, "h1": h1, "sig": sig, "act": act})
            Z = Z + act @ p[f"block{k}.w2"] + p[f"block{k}.b2"]
        cache["z_last"] = Z
        logits = Z @ p["w_out"] + p["b_out"]
        cache["logits"] = logits
        return logits, cache

    def logits(self, features: np.ndarray, t) -> np.ndarray:
        out, _ = self._forward_cached(features, t)
        return out

    def forward(self, features: np.ndarray, t) -> np.ndarray:
        """Scores exp(logits) for a batch of feature rows at time(s) t."""
        logits, cache = self._forward_cached(features, t)
        scores = np.exp(logits)
        if not np.all(np.isfinite(scores)):
            raise NumericError("non-finite score output " + _locate_nonfinite(cache))
        return scores

    def score_batch(self, graph: CayleyGraph, states: np.ndarray, t) -> np.ndarray:
        return self.forward(graph.encode_batch(states), t)

    def score_state(self, graph: CayleyGraph, x: np.ndarray, t: int) -> np.ndarray:
        if t < 1:
            raise DomainError("score is defined for time indices t >= 1")
        return self.score_batch(graph, np.asarray(x)[None, :], t)[0]

    # -- backward ----------------------------------------------------------------

    def backward(self, cache: dict, dlogits: np.ndarray) -> dict:
        """Gradients of sum(dlogits * logits) w.r.t. every parameter."""
        p = self.params
        grads = {}
        Z = cache["z_last"]
        grads["w_out"] = Z.T @ dlogits
        grads["b_out"] = dlogits.sum(axis=0)
        dZ = dlogits @ p["w_out"].T
        for k in reversed(range(self.n_blocks)):
            c = cache["blocks"][k]
            dact = dZ @ p[f"block{k}.w2"].T
            grads[f"block{k}.w2"] = c["act"].T @ dZ
            grads[f"block{k}.b2"] = dZ.sum(axis=0)
            dh1 = dact * _dsilu_from_sig(c["h1"], c["sig"])
            grads[f"block{k}.w1"] = c["s"].T @ dh1
            grads[f"block{k}.b1"] = dh1.sum(axis=0)
            ds = dh1 @ p[f"block{k}.w1"].T
            grads[f"block{k}.ln_g"] = (ds * c["u"]).sum(axis=0)
            grads[f"block{k}.ln_b"] = ds.sum(axis=0)
            du = ds * p[f"block{k}.ln_g"]
            dz_ln = c["inv_std"] * (
                du - du.mean(axis=1, keepdims=True)
                - c["u"] * (du * c["u"]).mean(axis=1, keepdims=True))
            dZ = dZ + dz_ln
        grads["w_in"] = cache["input"].T @ dZ
        grads["b_in"] = dZ.sum(axis=0)
        return grads


def _locate_nonfinite(cache: dict) -> str:
    if not np.all(np.isfinite(cache["input"])):
        return "(input features)"
    for k, c in enumerate(cache["blocks"]):
        for leaf in ("u", "h1", "act"):
            if not np.all(np.isfinite(c[leaf])):
                return f"(block {k}, tensor {leaf})"
    if not np.all(np.isfinite(cache["logits"])):
        return "(output logits)"
    return "(exp head overflow)"


def init_model(feature_dim: int, n_out: int, hidden_dim: int = 256,
               n_blocks: int = 4, time_embed_dim: int = 16,
               seed: int = 0) -> ScoreModel:
    """He-scaled random weights; normalization gains 1, all biases 0. The
    output layer is drawn small so a fresh model scores near 1 everywhere."""
    model = ScoreModel(feature_dim, n_out, hidden_dim, n_blocks, time_embed_dim)
    rng = np.random.default_rng(seed)
    p = {}
    for name in model.param_names():
        shape = model.param_shape(name)
        leaf = name.split(".")[-1]
        if leaf in ("b_in", "b1", "b2", "b_out", "ln_b"):
            p[name] = np.zeros(shape, dtype=np.float32)
        elif leaf == "ln_g":
            p[name] = np.ones(shape, dtype=np.float32)
        elif name == "w_out":
            std = 0.01 / np.sqrt(shape[0])
            p[name] = (rng.standard_normal(shape) * std).astype(np.float32)
        else:
            std = np.sqrt(2.0 / shape[0])
            p[name] = (rng.standard_normal(shape) * std).astype(np.float32)
    model.params = p
    return model


def score_forward(model: ScoreModel, features: np.ndarray, t: int) -> np.ndarray:
    """Score vector for one feature row at time t (1-based)."""
    if t < 1:
        raise DomainError("score is defined for time indices t >= 1")
    features = np.asarray(features)
    if features.shape != (model.feature_dim,):
        raise DomainError(f"features must have length {model.feature_dim}")
    return model.forward(features[None, :], t)[0]


# ---------------------------------------------------------------------------
# Training objective
# ---------------------------------------------------------------------------

def _loss_rows(model: ScoreModel, batch, graph: CayleyGraph):
    """Assemble the forward rows both loss terms share.

    Row ((i*T + t)*S + a) holds successor x_{i,t} a, scored at time t+1. The
    log term reads slot a^-1 of every row; the positive sum term reads the
    rows where a is the move the trajectory actually took, because those
    successors are exactly the states x_{i,t+1} sampled from p_{t+1}.
    """
    from .diffusion import TrajectoryBatch

    batch = TrajectoryBatch.from_list(batch)
    B, Tp1, L = batch.states.shape
    T = Tp1 - 1
    S = graph.n_generators
    prev = batch.states[:, :T, :].reshape(B * T, L)
    succ = graph.neighbors_batch(prev).reshape(B * T * S, L)
    feats = graph.encode_batch(succ)
    t_col = np.repeat(np.tile(np.arange(1, T + 1), B), S)
    inv_slot = np.tile(graph.generators.inverse_of, B * T)
    taken_rows = np.arange(B * T) * S + batch.moves.reshape(-1)
    return feats, t_col, inv_slot, taken_rows, B


def loss_and_grad(model: ScoreModel, batch, graph: CayleyGraph):
    """Score-entropy loss on a trajectory batch and its exact gradient.

    loss = sum_t [ mean_i sum_a sigma_t(x_{i,t})_a
                   - mean_i sum_a log sigma_t(x_{i,t-1} a)_{a^-1} ]
    """
    feats, t_col, inv_slot, taken_rows, B = _loss_rows(model, batch, graph)
    logits, cache = model._forward_cached(feats, t_col)
    e1 = np.exp(logits[taken_rows])
    rows = np.arange(logits.shape[0])
    log_vals = logits[rows, inv_slot]
    loss = float(e1.sum(dtype=np.float64) / B - log_vals.sum(dtype=np.float64) / B)
    if not np.isfinite(loss):
        raise NumericError("non-finite training loss " + _locate_nonfinite(cache))
    dlogits = np.zeros_like(logits)
    dlogits[taken_rows] = e1 / B
    dlogits[rows, inv_slot] -= 1.0 / B
    grads = model.backward(cache, dlogits)
    return loss, grads


def loss_only(model: ScoreModel, batch, graph: CayleyGraph) -> float:
    feats, t_col, inv_slot, taken_rows, B = _loss_rows(model, batch, graph)
    logits = model.logits(feats, t_col)
    e1 = np.exp(logits[taken_rows])
    rows = np.arange(logits.shape[0])
    loss = float(e1.sum(dtype=np.float64) / B
                 - logits[rows, inv_slot].sum(dtype=np.float64) / B)
    if not np.isfinite(loss):
        raise NumericError("non-finite evaluation loss")
    return loss


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, model: ScoreModel, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in model.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in model.params.items()}


def optimizer_step(model: ScoreModel, grads: dict, state: AdamState,
                   lr: float) -> tuple[ScoreModel, AdamState]:
    """Bias-corrected adaptive-moment update, applied in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in model.params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise DomainError(f"gradient shape mismatch for {k}")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        p -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return model, state


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_HEADER = "<4sHBBIIIII"  # magic, version, flags, pad, 5 dims


def save_checkpoint(model: ScoreModel, path, opt_state: AdamState | None = None) -> None:
    """Write magic/version/dims header then float32 tensors in declaration
    order; optionally append the optimizer state (flag bit 0)."""
    flags = 1 if opt_state is not None else 0
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEADER, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                             flags, 0, model.feature_dim, model.time_embed_dim,
                             model.hidden_dim, model.n_blocks, model.n_out))
        for name in model.param_names():
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())
        if opt_state is not None:
            fh.write(struct.pack("<QffQ", opt_state.step, opt_state.beta1,
                                 opt_state.beta2, 0))
            for name in model.param_names():
                fh.write(np.ascontiguousarray(opt_state.m[name], dtype="<f4").tobytes())
            for name in model.param_names():
                fh.write(np.ascontiguousarray(opt_state.v[name], dtype="<f4").tobytes())


def load_checkpoint(path, with_opt_state: bool = False):
    """Read a checkpoint; returns the model, or (model, AdamState | None)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head_len = struct.calcsize(_HEADER)
    if len(raw) < head_len:
        raise FormatError(f"{path}: truncated checkpoint header")
    magic, version, flags, _, fdim, edim, hdim, nblocks, nout = struct.unpack(
        _HEADER, raw[:head_len])
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    model = ScoreModel(fdim, nout, hdim, nblocks, edim)
    off = head_len
    params = {}
    for name in model.param_names():
        shape = model.param_shape(name)
        nbytes = int(np.prod(shape)) * 4
        if off + nbytes > len(raw):
            raise FormatError(f"{path}: truncated while reading {name}")
        params[name] = np.frombuffer(raw, dtype="<f4", count=int(np.prod(shape)),
                                     offset=off).reshape(shape).copy()
        off += nbytes
    model.params = params
    opt_state = None
    if flags & 1:
        opt_head = struct.calcsize("<QffQ")
        if off + opt_head > len(raw):
            raise FormatError(f"{path}: truncated optimizer header")
        step, b1, b2, _ = struct.unpack("<QffQ", raw[off:off + opt_head])
        off += opt_head
        opt_state = AdamState(model, float(b1), float(b2))
        opt_state.step = step
        for store in (opt_state.m, opt_state.v):
            for name in model.param_names():
                shape = model.param_shape(name)
                nbytes = int(np.prod(shape)) * 4
                if off + nbytes > len(raw):
                    raise FormatError(f"{path}: truncated optimizer tensors")
                store[name] = np.frombuffer(raw, dtype="<f4",
                                            count=int(np.prod(shape)),
                                            offset=off).reshape(shape).copy()
                off += nbytes
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    if not all(np.all(np.isfinite(v)) for v in model.params.values()):
        raise FormatError(f"{path}: checkpoint contains non-finite weights")
    if with_opt_state:
        return model, opt_state
    return model
