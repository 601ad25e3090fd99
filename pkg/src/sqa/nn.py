"""Minimal numpy recurrent network toolkit.

Everything works on float64 batches: a step takes ``x`` of shape (B, D) and
``h`` of shape (B, H).  Backward passes are written out by hand and checked
against central finite differences in the test suite.

Parameters live in flat ``{name: ndarray}`` dicts so models, the optimizer
and the checkpoint format can treat them uniformly.  Biases are stored as
(1, n) rows.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

INIT_SCALE = 0.08
UNK = "<unk>"
CHECKPOINT_HEADER = "SQAMODEL v1"

Params = Dict[str, np.ndarray]


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def uniform(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


@dataclass
class TrainConfig:
    seed: int = 0
    emb_dim: int = 300
    hidden: int = 100
    lr: float = 0.001
    dropout: float = 0.1
    epochs: int = 30
    batch_size: int = 64
    replication: int = 4
    type_negatives: int = 10
    train_embeddings: bool = True

    def __post_init__(self):
        for name in ("emb_dim", "hidden", "epochs", "batch_size", "replication", "type_negatives"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


# ---------------------------------------------------------------- embeddings


class EmbeddingTable:
    """Token -> row lookup with a dedicated ``<unk>`` row at index 0.

    Tokens not present in the pretrained file get a random row derived from
    ``(seed, crc32(token))``, so the vector of a missing token does not
    depend on the order in which tokens are first seen.
    """

    def __init__(self, dim: int, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self.vocab: Dict[str, int] = {UNK: 0}
        self.matrix = self.oov_vector(UNK)[None, :]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def oov_vector(self, token: str) -> np.ndarray:
        rng = np.random.default_rng([self.seed, zlib.crc32(token.encode("utf-8"))])
        return uniform(rng, self.dim)

    def add_many(self, tokens: Iterable[str], vectors: Optional[Sequence[np.ndarray]] = None) -> None:
        new, rows = [], []
        for i, tok in enumerate(tokens):
            if tok in self.vocab or tok in new:
                continue
            new.append(tok)
            rows.append(vectors[i] if vectors is not None else self.oov_vector(tok))
        if not new:
            return
        start = len(self.vocab)
        for j, tok in enumerate(new):
            self.vocab[tok] = start + j
        self.matrix = np.vstack([self.matrix, np.asarray(rows, dtype=np.float64)])

    def index(self, token: str) -> int:
        return self.vocab.get(token, 0)

    def lookup(self, token: str) -> np.ndarray:
        i = self.vocab.get(token)
        return self.matrix[i] if i is not None else self.oov_vector(token)

    def restrict(self, tokens: Iterable[str]) -> "EmbeddingTable":
        """A new table holding only ``tokens`` (plus ``<unk>``)."""
        table = EmbeddingTable(self.dim, self.seed)
        tokens = sorted(set(tokens) - {UNK})
        table.matrix = self.lookup(UNK)[None, :].copy()
        table.add_many(tokens, [self.lookup(t) for t in tokens])
        return table


class EmbeddingFormatError(ValueError):
    pass


def load_embeddings(source: Iterable[str], dim: int, seed: int = 0) -> EmbeddingTable:
    """Read GloVe text format: ``token v1 ... vD`` per line."""
    table = EmbeddingTable(dim, seed)
    tokens, rows = [], []
    seen = set()
    for lineno, line in enumerate(source, 1):
        parts = line.rstrip("\r\n").rstrip(" ").split(" ")
        if len(parts) == 1 and not parts[0]:
            continue
        if len(parts) - 1 != dim:
            raise EmbeddingFormatError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
        if parts[0] in seen:
            continue
        seen.add(parts[0])
        tokens.append(parts[0])
        try:
            rows.append(np.array(parts[1:], dtype=np.float64))
        except ValueError as exc:
            raise EmbeddingFormatError(f"line {lineno}: {exc}") from None
    table.add_many(tokens, rows)
    return table


# --------------------------------------------------------------------- cells


def init_gru(rng, d: int, h: int) -> Params:
    return {"W": uniform(rng, (d, 3 * h)), "U": uniform(rng, (h, 3 * h)), "b": uniform(rng, (1, 3 * h))}


def init_lstm(rng, d: int, h: int) -> Params:
    return {"W": uniform(rng, (d, 4 * h)), "U": uniform(rng, (h, 4 * h)), "b": uniform(rng, (1, 4 * h))}


def _check_cell(p: Params, x, h, gates: int) -> None:
    d, gh = p["W"].shape
    _check(gh % gates == 0 and p["U"].shape == (gh // gates, gh), "cell parameter shapes inconsistent")
    _check(x.shape[-1] == d, f"input has dim {x.shape[-1]}, cell expects {d}")
    _check(h.shape[-1] == gh // gates, f"state has dim {h.shape[-1]}, cell expects {gh // gates}")


def gru_forward(p: Params, x, h):
    """GRU update: z, r gates and candidate n = tanh(Wx + U(r*h) + b)."""
    H = h.shape[-1]
    a = x @ p["W"] + p["b"]
    u = h @ p["U"][:, :2 * H]
    z = sigmoid(a[:, :H] + u[:, :H])
    r = sigmoid(a[:, H:2 * H] + u[:, H:])
    rh = r * h
    n = np.tanh(a[:, 2 * H:] + rh @ p["U"][:, 2 * H:])
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, z, r, rh, n)


def gru_backward(p: Params, cache, dh_new):
    x, h, z, r, rh, n = cache
    H = h.shape[-1]
    U = p["U"]
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    dan = dn * (1.0 - n * n)
    drh = dan @ U[:, 2 * H:].T
    dr = drh * h
    dh += drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    da = np.concatenate([daz, dar, dan], axis=1)
    dzr = da[:, :2 * H]
    dh += dzr @ U[:, :2 * H].T
    grads = {
        "W": x.T @ da,
        "U": np.concatenate([h.T @ dzr, rh.T @ dan], axis=1),
        "b": da.sum(axis=0, keepdims=True),
    }
    dx = da @ p["W"].T
    return dx, dh, grads


def gru_step(p: Params, x, h):
    """Single unbatched or batched GRU step."""
    x, h = np.asarray(x, dtype=np.float64), np.asarray(h, dtype=np.float64)
    squeeze = x.ndim == 1
    x2, h2 = np.atleast_2d(x), np.atleast_2d(h)
    _check_cell(p, x2, h2, 3)
    _check(x2.shape[0] == h2.shape[0], "batch size mismatch")
    out, _ = gru_forward(p, x2, h2)
    return out[0] if squeeze else out


def lstm_forward(p: Params, x, h, c):
    """LSTM step with gate order input, forget, output, candidate."""
    H = h.shape[-1]
    a = x @ p["W"] + h @ p["U"] + p["b"]
    i = sigmoid(a[:, :H])
    f = sigmoid(a[:, H:2 * H])
    o = sigmoid(a[:, 2 * H:3 * H])
    g = np.tanh(a[:, 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, o, g, tc)


def lstm_backward(p: Params, cache, dh_new, dc_new):
    x, h, c, i, f, o, g, tc = cache
    do = dh_new * tc
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    da = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c * f * (1.0 - f),
        do * o * (1.0 - o),
        dc * i * (1.0 - g * g),
    ], axis=1)
    grads = {"W": x.T @ da, "U": h.T @ da, "b": da.sum(axis=0, keepdims=True)}
    return da @ p["W"].T, da @ p["U"].T, dc * f, grads


def lstm_step(p: Params, x, state):
    h, c = state
    x, h, c = (np.asarray(v, dtype=np.float64) for v in (x, h, c))
    squeeze = x.ndim == 1
    x2, h2, c2 = np.atleast_2d(x), np.atleast_2d(h), np.atleast_2d(c)
    _check_cell(p, x2, h2, 4)
    _check(h2.shape == c2.shape, "h and c shapes differ")
    h_new, c_new, _ = lstm_forward(p, x2, h2, c2)
    return (h_new[0], c_new[0]) if squeeze else (h_new, c_new)


# ------------------------------------------------------------------ encoders


def _sub(params: Params, prefix: str) -> Params:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix + ".")}


class BiEncoder:
    """Bidirectional GRU or LSTM over padded batches.

    ``X`` has shape (B, T, D) and ``mask`` (B, T) marks real tokens;
    sequences are right-padded.  Padded steps carry the state through
    unchanged, so the forward final state is the one at the last real token
    and the backward pass starts from zero at the real end.
    """

    def __init__(self, kind: str, prefix: str):
        if kind not in ("gru", "lstm"):
            raise ValueError(f"unknown cell kind {kind!r}")
        self.kind = kind
        self.prefix = prefix

    def init(self, rng, d: int, h: int) -> Params:
        init = init_gru if self.kind == "gru" else init_lstm
        out = {}
        for direction in ("fwd", "bwd"):
            for k, v in init(rng, d, h).items():
                out[f"{self.prefix}.{direction}.{k}"] = v
        return out

    def forward(self, params: Params, X, mask):
        B, T, _ = X.shape
        outs, finals, caches = [], [], []
        for direction in ("fwd", "bwd"):
            p = _sub(params, f"{self.prefix}.{direction}")
            H = p["U"].shape[0]
            h = np.zeros((B, H))
            c = np.zeros((B, H))
            seq = np.zeros((B, T, H))
            steps = []
            order = range(T) if direction == "fwd" else range(T - 1, -1, -1)
            for t in order:
                m = mask[:, t:t + 1]
                if self.kind == "gru":
                    h_new, cache = gru_forward(p, X[:, t], h)
                    h = m * h_new + (1.0 - m) * h
                else:
                    h_new, c_new, cache = lstm_forward(p, X[:, t], h, c)
                    h = m * h_new + (1.0 - m) * h
                    c = m * c_new + (1.0 - m) * c
                seq[:, t] = h
                steps.append((t, cache))
            outs.append(seq)
            finals.append(h)
            caches.append(steps)
        return np.concatenate(outs, axis=2), np.concatenate(finals, axis=1), (X.shape, mask, caches)

    def backward(self, params: Params, cache, d_out=None, d_final=None):
        """Return (dX, grads) given gradients w.r.t. per-step outputs and/or the final vector."""
        (B, T, D), mask, caches = cache
        dX = np.zeros((B, T, D))
        grads: Params = {}
        for k, direction in enumerate(("fwd", "bwd")):
            p = _sub(params, f"{self.prefix}.{direction}")
            H = p["U"].shape[0]
            sl = slice(k * H, (k + 1) * H)
            g = {name: np.zeros_like(v) for name, v in p.items()}
            dh = d_final[:, sl].copy() if d_final is not None else np.zeros((B, H))
            dc = np.zeros((B, H))
            for t, step_cache in reversed(caches[k]):
                if d_out is not None:
                    dh += d_out[:, t, sl]
                m = mask[:, t:t + 1]
                if self.kind == "gru":
                    dx, dh_prev, gs = gru_backward(p, step_cache, m * dh)
                    dh = dh_prev + (1.0 - m) * dh
                else:
                    dx, dh_prev, dc_prev, gs = lstm_backward(p, step_cache, m * dh, m * dc)
                    dh = dh_prev + (1.0 - m) * dh
                    dc = dc_prev + (1.0 - m) * dc
                dX[:, t] += dx
                for name in g:
                    g[name] += gs[name]
            for name, v in g.items():
                grads[f"{self.prefix}.{direction}.{name}"] = v
        return dX, grads


def bi_encode(cells: Tuple[Params, Params], seq: Sequence, kind: str = "gru"):
    """Encode one sequence with a (forward, backward) cell pair.

    Returns per-step vectors of size 2H and the final 2H vector.
    """
    if len(seq) == 0:
        raise ValueError("empty sequence")
    enc = BiEncoder(kind, "enc")
    params = {f"enc.fwd.{k}": v for k, v in cells[0].items()}
    params.update({f"enc.bwd.{k}": v for k, v in cells[1].items()})
    X = np.asarray(seq, dtype=np.float64)[None]
    out, final, _ = enc.forward(params, X, np.ones((1, X.shape[1])))
    return list(out[0]), final[0]


# -------------------------------------------------------- dense and dropout


@dataclass
class DenseParams:
    W: np.ndarray
    b: np.ndarray
    activation: str = "none"

    def __post_init__(self):
        if self.activation not in ("none", "sigmoid", "softmax", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        _check(self.W.ndim == 2 and self.W.shape[1] >= 1, "dense output dim must be >= 1")


def activate(z, activation: str):
    if activation == "sigmoid":
        return sigmoid(z)
    if activation == "softmax":
        return softmax(z)
    if activation == "tanh":
        return np.tanh(z)
    return z


def dense_forward(params: DenseParams, x):
    x = np.asarray(x, dtype=np.float64)
    _check(x.shape[-1] == params.W.shape[0], f"input has dim {x.shape[-1]}, layer expects {params.W.shape[0]}")
    return activate(x @ params.W + np.reshape(params.b, -1), params.activation)


def dropout_apply(x, rate: float, train: bool, rng: Optional[np.random.Generator] = None):
    """Inverted dropout; returns ``(output, mask)`` so callers can backprop."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1)")
    x = np.asarray(x, dtype=np.float64)
    if not train or rate == 0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None


def adam_update(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam step; updates ``state`` and returns new params."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    _check(params.shape == grads.shape, f"shape mismatch {params.shape} vs {grads.shape}")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    _check(state.m.shape == params.shape, "optimizer state shape differs from params")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = state.m / (1 - state.beta1 ** state.step)
    v_hat = state.v / (1 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.states: Dict[str, AdamState] = {}

    def step(self, params: Params, grads: Params, frozen: Iterable[str] = ()) -> None:
        for name in sorted(params):
            if name in frozen or name not in grads:
                continue
            st = self.states.get(name)
            if st is None:
                st = self.states[name] = AdamState(self.lr, self.beta1, self.beta2, self.eps)
            params[name] = adam_update(st, params[name], grads[name])


# ------------------------------------------------------------ grad checking


def grad_check(loss_fn: Callable[[Params], float], params: Params, grads: Params, eps: float = 1e-5,
               floor: float = 1e-6, max_entries: Optional[int] = None, rng=None) -> float:
    """Worst relative error between ``grads`` and central differences of ``loss_fn``.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``.  Central
    differences carry roundoff near ``1e-16 * |loss| / eps``, so entries
    smaller than ``floor`` are effectively compared on an absolute scale.
    With ``max_entries`` only that many randomly chosen entries per tensor
    are probed.
    """
    worst = 0.0
    for name in sorted(params):
        p = params[name]
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)
        g = grads[name].reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            fp = loss_fn(params)
            flat[i] = old - eps
            fm = loss_fn(params)
            flat[i] = old
            num = (fp - fm) / (2 * eps)
            err = abs(g[i] - num) / max(abs(g[i]), abs(num), floor)
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------- batching


def pad(seqs: Sequence[Sequence[int]]):
    T = max(len(s) for s in seqs)
    ids = np.zeros((len(seqs), T), dtype=np.int64)
    mask = np.zeros((len(seqs), T))
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return ids, mask


def embedding_grad(shape, ids, dX) -> np.ndarray:
    g = np.zeros(shape)
    np.add.at(g, ids.reshape(-1), dX.reshape(-1, shape[1]))
    return g


# -------------------------------------------------------------- checkpoints


def save_checkpoint(path, params: Params, meta: dict) -> None:
    """Write ``SQAMODEL v1``, a ``meta`` JSON line, then named 2-D tensors."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(CHECKPOINT_HEADER + "\n")
        f.write("meta\t" + json.dumps(meta, sort_keys=True) + "\n")
        for name in sorted(params):
            t = np.atleast_2d(params[name])
            f.write(f"{name}\t{t.shape[0]}\t{t.shape[1]}\n")
            for row in t:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_checkpoint(path) -> Tuple[Params, dict]:
    params: Params = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != CHECKPOINT_HEADER:
            raise ValueError(f"{path}: not a model checkpoint ({header!r})")
        tag, _, payload = f.readline().rstrip("\n").partition("\t")
        if tag != "meta":
            raise ValueError(f"{path}: missing meta line")
        meta = json.loads(payload)
        for line in f:
            if not line.strip():
                continue
            name, rows, cols = line.rstrip("\n").split("\t")
            rows, cols = int(rows), int(cols)
            data = [f.readline().split() for _ in range(rows)]
            t = np.array(data, dtype=np.float64).reshape(rows, cols)
            params[name] = t
    return params, meta


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)


# ------------------------------------------------------------------ training


def train_loop(params: Params, examples: list, loss_and_grads, config: TrainConfig,
               frozen: Iterable[str] = (), on_epoch=None) -> List[float]:
    """Shuffled minibatch Adam training; returns the mean loss of every epoch.

    ``loss_and_grads(batch, rng)`` must return ``(loss, grads)`` for a list of
    examples, using ``rng`` for dropout.  Shuffling and dropout draw from
    separate streams seeded by ``config.seed``.
    """
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    opt = Adam(lr=config.lr)
    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(examples))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start:start + config.batch_size]]
            loss, grads = loss_and_grads(params, batch, dropout_rng)
            opt.step(params, grads, frozen)
            total += loss * len(batch)
            count += len(batch)
        history.append(float(total / count))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return history
