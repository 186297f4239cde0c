"""Parameterized auto-regressive predictors with exact gradients.

Three kinds share one flat-parameter interface:

* tabular_bigram     -- a V x V logit table, analytically checkable;
* tiny_attention     -- causal self-attention blocks (pre-LN, relu MLP,
                        sinusoidal positions, tied readout) in pure NumPy
                        with a hand-written backward pass;
* linear_readout_lds -- next-observation linear predictor under squared
                        error for continuous sequences.

Everything is float64; a model value is immutable once constructed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

try:  # optional fused kernels; the NumPy path below is the reference
    if os.environ.get("ICL_LAB_NO_NUMBA"):
        raise ImportError
    from numba import config as _numba_config
    from numba import njit, prange

    _numba_config.THREADING_LAYER = "omp"

    @njit(parallel=True, fastmath=True, cache=True)
    def _causal_softmax_jit(scores, scale):  # pragma: no cover - timed, not traced
        Bnh, T, _ = scores.shape
        for b in prange(Bnh):
            for i in range(T):
                row = scores[b, i]
                m = -1e300
                for j in range(i + 1):
                    row[j] *= scale
                    if row[j] > m:
                        m = row[j]
                s = 0.0
                for j in range(i + 1):
                    row[j] = np.exp(row[j] - m)
                    s += row[j]
                inv = 1.0 / s
                for j in range(i + 1):
                    row[j] *= inv
                for j in range(i + 1, T):
                    row[j] = 0.0

    @njit(parallel=True, fastmath=True, cache=True)
    def _causal_softmax_bwd_jit(dattn, attn):  # pragma: no cover
        Bnh, T, _ = dattn.shape
        for b in prange(Bnh):
            for i in range(T):
                da = dattn[b, i]
                a = attn[b, i]
                inner = 0.0
                for j in range(i + 1):
                    inner += da[j] * a[j]
                for j in range(i + 1):
                    da[j] = a[j] * (da[j] - inner)
                for j in range(i + 1, T):
                    da[j] = 0.0

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


class IncompatibleArchitectureError(ValueError):
    """Weight transfer between architectures that do not nest."""


@dataclass(frozen=True)
class ArchSpec:
    """Architecture descriptor; parameter count is a pure function of this."""

    kind: str
    vocab_size: int = 0
    context_len: int = 0
    d_model: int = 0
    n_heads: int = 1
    n_layers: int = 1
    d_ff: int = 0
    obs_dim: int = 0

    def __post_init__(self):
        if self.kind not in ("tabular_bigram", "tiny_attention", "linear_readout_lds"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "tabular_bigram" and self.vocab_size < 2:
            raise ValueError("tabular_bigram needs vocab_size >= 2")
        if self.kind == "tiny_attention":
            if self.vocab_size < 2 or self.d_model < 1 or self.context_len < 1:
                raise ValueError("tiny_attention needs vocab_size, d_model, context_len")
            if self.d_model % self.n_heads:
                raise ValueError("d_model must be divisible by n_heads")
            if self.d_ff == 0:
                object.__setattr__(self, "d_ff", 4 * self.d_model)
        if self.kind == "linear_readout_lds" and self.obs_dim < 1:
            raise ValueError("linear_readout_lds needs obs_dim >= 1")


def _attention_layout(arch: ArchSpec) -> list[tuple[str, tuple[int, ...]]]:
    d, f = arch.d_model, arch.d_ff
    blocks = [("embed", (arch.vocab_size, d))]
    for layer in range(arch.n_layers):
        blocks += [
            (f"l{layer}.ln1_g", (d,)),
            (f"l{layer}.ln1_b", (d,)),
            (f"l{layer}.wq", (d, d)),
            (f"l{layer}.wk", (d, d)),
            (f"l{layer}.wv", (d, d)),
            (f"l{layer}.wo", (d, d)),
            (f"l{layer}.ln2_g", (d,)),
            (f"l{layer}.ln2_b", (d,)),
            (f"l{layer}.w1", (d, f)),
            (f"l{layer}.b1", (f,)),
            (f"l{layer}.w2", (f, d)),
            (f"l{layer}.b2", (d,)),
        ]
    blocks += [("lnf_g", (d,)), ("lnf_b", (d,))]
    return blocks


def param_layout(arch: ArchSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Named parameter blocks, in flat-vector order."""
    if arch.kind == "tabular_bigram":
        return [("table", (arch.vocab_size, arch.vocab_size))]
    if arch.kind == "linear_readout_lds":
        return [("A", (arch.obs_dim, arch.obs_dim)), ("b", (arch.obs_dim,))]
    return _attention_layout(arch)


def count_params(arch: ArchSpec) -> int:
    return int(sum(np.prod(shape) for _, shape in param_layout(arch)))


def unpack(arch: ArchSpec, params: np.ndarray) -> dict[str, np.ndarray]:
    """Views into the flat vector, one per named block (no copies)."""
    out: dict[str, np.ndarray] = {}
    off = 0
    for name, shape in param_layout(arch):
        size = int(np.prod(shape))
        out[name] = params[off : off + size].reshape(shape)
        off += size
    return out


@dataclass(frozen=True)
class SequenceModel:
    arch: ArchSpec
    params: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64)
        expected = count_params(self.arch)
        if p.shape != (expected,):
            raise ValueError(f"params must be flat with length {expected}, got {p.shape}")
        object.__setattr__(self, "params", p)

    @property
    def n_param(self) -> int:
        return self.params.size

    def with_params(self, params: np.ndarray) -> "SequenceModel":
        return replace(self, params=params)


def init_model(arch: ArchSpec, seed=0, init_std: float = 0.02) -> SequenceModel:
    """Fresh model: Gaussian weights N(0, init_std^2), layer norms at identity,
    and an all-zero bigram table (uniform predictions)."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    params = np.zeros(count_params(arch))
    blocks = unpack(arch, params)
    for name, block in blocks.items():
        if name.endswith("ln1_g") or name.endswith("ln2_g") or name == "lnf_g":
            block[...] = 1.0
        elif name.endswith("_b") or name.endswith(".b1") or name.endswith(".b2") or name == "b":
            block[...] = 0.0
        elif name == "table":
            block[...] = 0.0
        else:
            block[...] = init_std * rng.standard_normal(block.shape)
    return SequenceModel(arch=arch, params=params)


# ---------------------------------------------------------------------------
# attention internals
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _positional_encoding(context_len: int, d_model: int) -> np.ndarray:
    pos = np.arange(context_len)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / (10000.0 ** (2 * (i // 2) / d_model))
    pe = np.zeros((context_len, d_model))
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


def _layernorm_fwd(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (x - mu) / sigma
    return xhat * gamma + beta, (xhat, sigma)


def _layernorm_bwd(dy, gamma, cache):
    xhat, sigma = cache
    g = dy * gamma
    m1 = g.mean(axis=-1, keepdims=True)
    m2 = (g * xhat).mean(axis=-1, keepdims=True)
    dx = (g - m1 - xhat * m2) / sigma
    axes = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=axes), dy.sum(axis=axes)


def _split_heads(x, n_heads):
    """(B, T, d) -> contiguous (B * nh, T, dh); contiguity keeps the batched
    matmuls on the BLAS fast path."""
    B, T, d = x.shape
    return np.ascontiguousarray(x.reshape(B, T, n_heads, d // n_heads).transpose(0, 2, 1, 3)).reshape(
        B * n_heads, T, d // n_heads
    )


def _merge_heads(x, n_heads):
    Bnh, T, dh = x.shape
    B = Bnh // n_heads
    return np.ascontiguousarray(x.reshape(B, n_heads, T, dh).transpose(0, 2, 1, 3)).reshape(B, T, n_heads * dh)


@lru_cache(maxsize=8)
def _causal_mask(T: int) -> np.ndarray:
    return np.triu(np.full((T, T), -np.inf), k=1)


def _causal_softmax(scores: np.ndarray, scale: float) -> None:
    """In-place masked softmax over the last axis, rows limited to j <= i."""
    if HAVE_NUMBA:
        _causal_softmax_jit(scores, scale)
        return
    T = scores.shape[1]
    scores *= scale
    scores += _causal_mask(T)
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)


def _causal_softmax_bwd(dattn: np.ndarray, attn: np.ndarray) -> None:
    """In-place softmax backward: dattn becomes dscores."""
    if HAVE_NUMBA:
        _causal_softmax_bwd_jit(dattn, attn)
        return
    inner = (dattn * attn).sum(axis=-1, keepdims=True)
    dattn -= inner
    dattn *= attn  # masked entries have attn == 0, so they zero out


def _attention_forward(arch: ArchSpec, blocks, X: np.ndarray, need_cache: bool):
    """Logits (B, T, V) for token batch X; optional caches for backward."""
    B, T = X.shape
    if T > arch.context_len:
        raise ValueError(f"sequence length {T} exceeds context length {arch.context_len}")
    d, nh = arch.d_model, arch.n_heads
    scale = 1.0 / np.sqrt(d // nh)
    h = blocks["embed"][X] + _positional_encoding(arch.context_len, d)[:T]
    caches = [] if need_cache else None
    for layer in range(arch.n_layers):
        p = {k.split(".", 1)[1]: v for k, v in blocks.items() if k.startswith(f"l{layer}.")}
        a, ln1c = _layernorm_fwd(h, p["ln1_g"], p["ln1_b"])
        q = _split_heads(a @ p["wq"], nh)
        k_ = _split_heads(a @ p["wk"], nh)
        v = _split_heads(a @ p["wv"], nh)
        attn = np.matmul(q, np.ascontiguousarray(k_.swapaxes(1, 2)))
        _causal_softmax(attn, scale)
        ov = _merge_heads(np.matmul(attn, v), nh)
        h = h + ov @ p["wo"]
        m, ln2c = _layernorm_fwd(h, p["ln2_g"], p["ln2_b"])
        pre = m @ p["w1"] + p["b1"]
        act = np.maximum(pre, 0.0)
        h = h + act @ p["w2"] + p["b2"]
        if need_cache:
            caches.append(
                dict(a=a, ln1c=ln1c, q=q, k=k_, v=v, attn=attn, ov=ov, m=m, ln2c=ln2c, pre=pre, act=act)
            )
    f, lnfc = _layernorm_fwd(h, blocks["lnf_g"], blocks["lnf_b"])
    logits = f @ blocks["embed"].T
    if need_cache:
        return logits, dict(X=X, f=f, lnfc=lnfc, layers=caches, scale=scale)
    return logits, None


def _attention_backward(arch: ArchSpec, blocks, cache, dlogits, grads):
    X, f = cache["X"], cache["f"]
    nh = arch.n_heads
    scale = cache["scale"]
    B, T, V = dlogits.shape
    flat_dl = dlogits.reshape(-1, V)
    grads["embed"] += flat_dl.T @ f.reshape(-1, arch.d_model)
    df = dlogits @ blocks["embed"]
    dh, dg, db = _layernorm_bwd(df, blocks["lnf_g"], cache["lnfc"])
    grads["lnf_g"] += dg
    grads["lnf_b"] += db
    for layer in reversed(range(arch.n_layers)):
        p = {k.split(".", 1)[1]: v for k, v in blocks.items() if k.startswith(f"l{layer}.")}
        g = {k.split(".", 1)[1]: v for k, v in grads.items() if k.startswith(f"l{layer}.")}
        c = cache["layers"][layer]
        # MLP (residual): h = h_in + relu(m @ w1 + b1) @ w2 + b2
        dact = dh @ p["w2"].T
        g["w2"] += c["act"].reshape(-1, arch.d_ff).T @ dh.reshape(-1, arch.d_model)
        g["b2"] += dh.sum(axis=(0, 1))
        dpre = dact
        dpre *= c["pre"] > 0
        g["w1"] += c["m"].reshape(-1, arch.d_model).T @ dpre.reshape(-1, arch.d_ff)
        g["b1"] += dpre.sum(axis=(0, 1))
        dm = dpre @ p["w1"].T
        dh_mid, dg2, db2 = _layernorm_bwd(dm, p["ln2_g"], c["ln2c"])
        g["ln2_g"] += dg2
        g["ln2_b"] += db2
        dh = dh + dh_mid
        # attention (residual): h = h_in + merge(attn @ v) @ wo
        dov = dh @ p["wo"].T
        g["wo"] += c["ov"].reshape(-1, arch.d_model).T @ dh.reshape(-1, arch.d_model)
        dov_h = _split_heads(dov, nh)
        dattn = np.matmul(dov_h, np.ascontiguousarray(c["v"].swapaxes(1, 2)))
        # dv = attn^T @ dov, computed transposed so both operands stay contiguous
        dv = np.matmul(np.ascontiguousarray(dov_h.swapaxes(1, 2)), c["attn"]).swapaxes(1, 2)
        _causal_softmax_bwd(dattn, c["attn"])
        dscores = dattn
        dq = np.matmul(dscores, c["k"])
        dq *= scale
        dk = np.matmul(np.ascontiguousarray(c["q"].swapaxes(1, 2)), dscores).swapaxes(1, 2)
        dk *= scale
        dq, dk, dv = _merge_heads(dq, nh), _merge_heads(dk, nh), _merge_heads(dv, nh)
        a_flat = c["a"].reshape(-1, arch.d_model)
        g["wq"] += a_flat.T @ dq.reshape(-1, arch.d_model)
        g["wk"] += a_flat.T @ dk.reshape(-1, arch.d_model)
        g["wv"] += a_flat.T @ dv.reshape(-1, arch.d_model)
        da = dq @ p["wq"].T + dk @ p["wk"].T + dv @ p["wv"].T
        dh_attn, dg1, db1 = _layernorm_bwd(da, p["ln1_g"], c["ln1c"])
        g["ln1_g"] += dg1
        g["ln1_b"] += db1
        dh = dh + dh_attn
    # input embedding lookup
    np.add.at(grads["embed"], X.reshape(-1), dh.reshape(-1, arch.d_model))


# ---------------------------------------------------------------------------
# shared prediction / loss API
# ---------------------------------------------------------------------------


def _check_token_batch(arch: ArchSpec, seqs: np.ndarray) -> np.ndarray:
    seqs = np.asarray(seqs, dtype=np.int64)
    if seqs.ndim == 1:
        seqs = seqs[None, :]
    if seqs.size == 0:
        raise ValueError("empty sequence batch")
    if seqs.min() < 0 or seqs.max() >= arch.vocab_size:
        raise ValueError("token id out of range [0, V)")
    return seqs


def logits_all(model: SequenceModel, seqs) -> np.ndarray:
    """Per-position next-token logits, shape (B, T, V)."""
    arch = model.arch
    if arch.kind == "linear_readout_lds":
        raise ValueError("logits are undefined for continuous models")
    seqs = _check_token_batch(arch, seqs)
    blocks = unpack(arch, model.params)
    if arch.kind == "tabular_bigram":
        return blocks["table"][seqs]
    logits, _ = _attention_forward(arch, blocks, seqs, need_cache=False)
    return logits


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_all_dists(model: SequenceModel, seq) -> np.ndarray:
    """Distribution over the next token at every position, shape (T, V)."""
    return _softmax(logits_all(model, np.asarray(seq)[None, :])[0])


def predict_dist(model: SequenceModel, prefix) -> np.ndarray:
    """Next-token distribution given a nonempty prefix."""
    prefix = np.asarray(prefix)
    if prefix.ndim != 1 or prefix.size == 0:
        raise ValueError("prefix must be a nonempty 1-D token array")
    return predict_all_dists(model, prefix)[-1]


def predict_next_obs(model: SequenceModel, prefix_obs) -> np.ndarray:
    """Next observation for the continuous model (depends on the last y only)."""
    if model.arch.kind != "linear_readout_lds":
        raise ValueError("predict_next_obs requires a linear_readout_lds model")
    prefix_obs = np.asarray(prefix_obs, dtype=np.float64)
    if prefix_obs.ndim != 2 or prefix_obs.shape[0] < 1:
        raise ValueError("prefix must be (t, p) with t >= 1")
    blocks = unpack(model.arch, model.params)
    return blocks["A"] @ prefix_obs[-1] + blocks["b"]


def nll_and_grad_batch(model: SequenceModel, seqs) -> tuple[float, np.ndarray]:
    """Mean next-token NLL over a batch plus its exact flat gradient.

    Token models: loss = mean over sequences of
    (1/(T-1)) sum_t -log P(x_{t+1} | x_{1..t}).  Continuous models: mean
    squared prediction error over positions and observation components.
    """
    arch = model.arch
    grad = np.zeros_like(model.params)
    grads = unpack(arch, grad)
    if arch.kind == "linear_readout_lds":
        ys = np.asarray(seqs, dtype=np.float64)
        if ys.ndim == 2:
            ys = ys[None]
        B, T, p = ys.shape
        if T < 2:
            raise ValueError("sequence length must be >= 2")
        blocks = unpack(arch, model.params)
        prev, nxt = ys[:, :-1], ys[:, 1:]
        pred = prev @ blocks["A"].T + blocks["b"]
        err = pred - nxt
        denom = B * (T - 1) * p
        loss = float((err**2).sum() / denom)
        scl = 2.0 / denom
        grads["A"] += scl * np.einsum("btp,btq->pq", err, prev)
        grads["b"] += scl * err.sum(axis=(0, 1))
        return loss, grad

    seqs = _check_token_batch(arch, seqs)
    B, T = seqs.shape
    if T < 2:
        raise ValueError("sequence length must be >= 2")
    targets = seqs[:, 1:]
    if arch.kind == "tabular_bigram":
        blocks = unpack(arch, model.params)
        logits = blocks["table"][seqs[:, :-1]]
        probs = _softmax(logits)
        idx = np.arange(T - 1)
        logp = np.log(probs[np.arange(B)[:, None], idx[None, :], targets])
        loss = float(-logp.mean())
        dlogits = probs
        dlogits[np.arange(B)[:, None], idx[None, :], targets] -= 1.0
        dlogits /= B * (T - 1)
        np.add.at(grads["table"], seqs[:, :-1].reshape(-1), dlogits.reshape(-1, arch.vocab_size))
        return loss, grad

    blocks = unpack(arch, model.params)
    logits, cache = _attention_forward(arch, blocks, seqs, need_cache=True)
    probs = _softmax(logits)
    pos = np.arange(T - 1)
    logp = np.log(probs[np.arange(B)[:, None], pos[None, :], targets])
    loss = float(-logp.mean())
    dlogits = probs
    dlogits[np.arange(B)[:, None], pos[None, :], targets] -= 1.0
    dlogits[:, -1, :] = 0.0
    dlogits /= B * (T - 1)
    _attention_backward(arch, blocks, cache, dlogits, grads)
    return loss, grad


def nll_and_grad(model: SequenceModel, seq) -> tuple[float, np.ndarray]:
    """Single-sequence NLL and gradient (batch of one)."""
    seq = np.asarray(seq)
    if seq.ndim == 1 and model.arch.kind != "linear_readout_lds":
        if seq.size < 2:
            raise ValueError("sequence length must be >= 2")
        return nll_and_grad_batch(model, seq[None, :])
    return nll_and_grad_batch(model, seq)


def nll_batch(model: SequenceModel, seqs, chunk: int = 32) -> float:
    """Mean loss only (no gradient); large batches are processed in chunks
    to keep the attention score tensors small."""
    arch = model.arch
    if arch.kind == "linear_readout_lds":
        ys = np.asarray(seqs, dtype=np.float64)
        if ys.ndim == 2:
            ys = ys[None]
        blocks = unpack(arch, model.params)
        pred = ys[:, :-1] @ blocks["A"].T + blocks["b"]
        return float(((pred - ys[:, 1:]) ** 2).mean())
    seqs = _check_token_batch(arch, seqs)
    B, T = seqs.shape
    total = 0.0
    for lo in range(0, B, chunk):
        part = seqs[lo : lo + chunk]
        logits = logits_all(model, part)
        probs = _softmax(logits)
        targets = part[:, 1:]
        logp = np.log(probs[np.arange(part.shape[0])[:, None], np.arange(T - 1)[None, :], targets])
        total += -logp.sum()
    return float(total / (B * (T - 1)))


# ---------------------------------------------------------------------------
# prior-model weight transfer
# ---------------------------------------------------------------------------


def init_from_prior(
    small: SequenceModel, large_arch: ArchSpec, seed=0, init_std: float = 0.02
) -> SequenceModel:
    """Grow a trained model into a larger architecture of the same kind.

    Overlapping blocks (shared layers, leading rows/columns) are copied
    verbatim; every other weight follows the fresh-init distribution.
    """
    sa = small.arch
    if sa.kind != large_arch.kind:
        raise IncompatibleArchitectureError(f"cannot transfer {sa.kind} into {large_arch.kind}")
    pairs = {
        "tabular_bigram": [("vocab_size", "vocab_size")],
        "linear_readout_lds": [("obs_dim", "obs_dim")],
        "tiny_attention": [(f, f) for f in ("vocab_size", "context_len", "d_model", "n_layers", "d_ff")],
    }[sa.kind]
    for f_small, f_large in pairs:
        if getattr(sa, f_small) > getattr(large_arch, f_large):
            raise IncompatibleArchitectureError(
                f"{f_small}={getattr(sa, f_small)} exceeds target {getattr(large_arch, f_large)}"
            )
    big = init_model(large_arch, seed=seed, init_std=init_std)
    small_blocks = unpack(sa, small.params)
    big_blocks = unpack(large_arch, big.params)
    for name, src in small_blocks.items():
        if name not in big_blocks:
            continue
        dst = big_blocks[name]
        sl = tuple(slice(0, s) for s in src.shape)
        dst[sl] = src
    return big


# ---------------------------------------------------------------------------
# checkpoint format: text header, then little-endian float64 parameter block
# ---------------------------------------------------------------------------

_ARCH_FIELDS = ("kind", "vocab_size", "context_len", "d_model", "n_heads", "n_layers", "d_ff", "obs_dim")


def save_model(model: SequenceModel, path: str) -> None:
    with open(path, "wb") as f:
        for name in _ARCH_FIELDS:
            f.write(f"{name}={getattr(model.arch, name)}\n".encode())
        f.write(f"n_param={model.n_param}\n".encode())
        f.write(b"end_header\n")
        f.write(model.params.astype("<f8").tobytes())


def load_model(path: str) -> SequenceModel:
    with open(path, "rb") as f:
        fields: dict[str, str] = {}
        while True:
            line = f.readline().decode().rstrip("\n")
            if line == "end_header":
                break
            if not line:
                raise ValueError("truncated checkpoint header")
            key, _, value = line.partition("=")
            fields[key] = value
        arch = ArchSpec(
            kind=fields["kind"],
            **{k: int(fields[k]) for k in _ARCH_FIELDS if k != "kind"},
        )
        n_param = int(fields["n_param"])
        params = np.frombuffer(f.read(8 * n_param), dtype="<f8").astype(np.float64)
    return SequenceModel(arch=arch, params=params)
