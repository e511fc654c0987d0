# dncga/neuralcore.py
"""Dense math for the crossover policy: embeddings, LSTM cells, additive
pointer attention, Adam, and the DNCW weight file.

Everything works on float64 numpy arrays with an optional leading batch
shape; the backward functions are hand-derived and accumulate into a
GradientSet.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.special import expit, logsumexp

from dncga.errors import (
    CorruptWeightsError,
    EmbeddingRangeError,
    ShapeError,
    TrainingDivergenceError,
    TransferIncompatibilityError,
)

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"DNCW"
WEIGHTS_VERSION = 1

# Fixed tensor order of the weight file and of every GradientSet.
TENSOR_ORDER = (
    "embed_table",
    "enc_lstm.W",
    "enc_lstm.U",
    "enc_lstm.b",
    "dec_lstm.W",
    "dec_lstm.U",
    "dec_lstm.b",
    "attn_ref",
    "attn_query",
    "attn_v",
    "start_token",
)


# -------------------------------------------------------------------
# Parameters
# -------------------------------------------------------------------
@dataclass
class LstmWeights:
    """Gate blocks stacked as rows [input, forget, cell, output]."""

    W: np.ndarray  # [4d, d] input weights
    U: np.ndarray  # [4d, d] recurrent weights
    b: np.ndarray  # [4d]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "LstmState":
        return cls(h=np.zeros(shape), c=np.zeros(shape))


@dataclass
class PolicyParameters:
    embed_table: np.ndarray
    enc_lstm: LstmWeights
    dec_lstm: LstmWeights
    attn_ref: np.ndarray
    attn_query: np.ndarray
    attn_v: np.ndarray
    start_token: np.ndarray

    @property
    def d(self) -> int:
        return int(self.embed_table.shape[1])

    @property
    def vocab_size(self) -> int:
        return int(self.embed_table.shape[0])

    def tensors(self) -> dict[str, np.ndarray]:
        """Name -> array (the live arrays, not copies) in TENSOR_ORDER."""
        return {
            "embed_table": self.embed_table,
            "enc_lstm.W": self.enc_lstm.W,
            "enc_lstm.U": self.enc_lstm.U,
            "enc_lstm.b": self.enc_lstm.b,
            "dec_lstm.W": self.dec_lstm.W,
            "dec_lstm.U": self.dec_lstm.U,
            "dec_lstm.b": self.dec_lstm.b,
            "attn_ref": self.attn_ref,
            "attn_query": self.attn_query,
            "attn_v": self.attn_v,
            "start_token": self.start_token,
        }

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray]) -> "PolicyParameters":
        return cls(
            embed_table=t["embed_table"],
            enc_lstm=LstmWeights(t["enc_lstm.W"], t["enc_lstm.U"], t["enc_lstm.b"]),
            dec_lstm=LstmWeights(t["dec_lstm.W"], t["dec_lstm.U"], t["dec_lstm.b"]),
            attn_ref=t["attn_ref"],
            attn_query=t["attn_query"],
            attn_v=t["attn_v"],
            start_token=t["start_token"],
        )

    def copy(self) -> "PolicyParameters":
        return PolicyParameters.from_tensors({k: v.copy() for k, v in self.tensors().items()})

    def freeze(self) -> None:
        """Make every array read-only; writes after this raise ValueError."""
        for arr in self.tensors().values():
            arr.flags.writeable = False

    @property
    def frozen(self) -> bool:
        return not self.embed_table.flags.writeable


def tensor_shapes(d: int, vocab_size: int) -> dict[str, tuple[int, ...]]:
    return {
        "embed_table": (vocab_size, d),
        "enc_lstm.W": (4 * d, d),
        "enc_lstm.U": (4 * d, d),
        "enc_lstm.b": (4 * d,),
        "dec_lstm.W": (4 * d, d),
        "dec_lstm.U": (4 * d, d),
        "dec_lstm.b": (4 * d,),
        "attn_ref": (d, d),
        "attn_query": (d, d),
        "attn_v": (d,),
        "start_token": (d,),
    }


def init_parameters(d: int, vocab_size: int, rng: np.random.Generator) -> PolicyParameters:
    """Uniform in [-1/sqrt(d), 1/sqrt(d)], drawn in TENSOR_ORDER."""
    if d < 1 or vocab_size < 1:
        raise ShapeError(f"d and vocab_size must be positive, got d={d}, vocab_size={vocab_size}")
    bound = 1.0 / np.sqrt(d)
    shapes = tensor_shapes(d, vocab_size)
    return PolicyParameters.from_tensors(
        {name: rng.uniform(-bound, bound, size=shapes[name]) for name in TENSOR_ORDER}
    )


class GradientSet:
    """One float64 array per parameter tensor, same names and shapes."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = arrays

    @classmethod
    def zeros_like(cls, params: PolicyParameters) -> "GradientSet":
        return cls({k: np.zeros_like(v, dtype=np.float64) for k, v in params.tensors().items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.arrays[name] = value

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __iadd__(self, other: "GradientSet") -> "GradientSet":
        for k in self.arrays:
            self.arrays[k] += other.arrays[k]
        return self

    def scale(self, factor: float) -> None:
        for arr in self.arrays.values():
            arr *= factor

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a))) if a.size else 0.0 for a in self.arrays.values())

    def check_congruent(self, params: PolicyParameters) -> None:
        for name, arr in params.tensors().items():
            if name not in self.arrays or self.arrays[name].shape != arr.shape:
                got = self.arrays[name].shape if name in self.arrays else None
                raise ShapeError(f"gradient for {name} has shape {got}, parameter has {arr.shape}")


# -------------------------------------------------------------------
# Embedding
# -------------------------------------------------------------------
def check_gene_range(genes: np.ndarray, vocab_size: int) -> None:
    genes = np.asarray(genes)
    if genes.size == 0:
        return
    bad = genes[(genes < 0) | (genes >= vocab_size)]
    if bad.size:
        raise EmbeddingRangeError(int(bad.flat[0]), vocab_size)


def embed_gene(params: PolicyParameters, gene: int) -> np.ndarray:
    check_gene_range(np.asarray([gene]), params.vocab_size)
    return params.embed_table[gene]


def embed_genes(params: PolicyParameters, genes: np.ndarray) -> np.ndarray:
    """Vectorized lookup: integer array of any shape -> [..., d]."""
    genes = np.asarray(genes)
    check_gene_range(genes, params.vocab_size)
    return params.embed_table[genes]


# -------------------------------------------------------------------
# LSTM cell
# -------------------------------------------------------------------
@dataclass
class LstmCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


def _check_lstm_shapes(weights: LstmWeights, x: np.ndarray, state: LstmState) -> int:
    d = weights.U.shape[1]
    if (
        weights.W.shape[0] != 4 * d
        or weights.U.shape != (4 * d, d)
        or weights.b.shape != (4 * d,)
        or x.shape[-1] != weights.W.shape[1]
        or state.h.shape[-1] != d
        or state.c.shape != state.h.shape
    ):
        raise ShapeError(
            f"LSTM shape mismatch: W{weights.W.shape} U{weights.U.shape} b{weights.b.shape} "
            f"x{x.shape} h{state.h.shape} c{state.c.shape}"
        )
    return d


def lstm_step_cached(
    weights: LstmWeights, x: np.ndarray, state: LstmState
) -> tuple[LstmState, LstmCache]:
    d = _check_lstm_shapes(weights, x, state)
    z = x @ weights.W.T + state.h @ weights.U.T + weights.b
    i = expit(z[..., 0:d])
    f = expit(z[..., d : 2 * d])
    g = np.tanh(z[..., 2 * d : 3 * d])
    o = expit(z[..., 3 * d : 4 * d])
    c = f * state.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = LstmCache(x=x, h_prev=state.h, c_prev=state.c, i=i, f=f, g=g, o=o, tanh_c=tanh_c)
    return LstmState(h=h, c=c), cache


def lstm_step(weights: LstmWeights, x: np.ndarray, state: LstmState) -> LstmState:
    return lstm_step_cached(weights, x, state)[0]


def lstm_step_backward(
    weights: LstmWeights,
    cache: LstmCache,
    dh: np.ndarray,
    dc: np.ndarray,
    grads: GradientSet,
    prefix: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backprop one cell step for a batch [B, d].

    Accumulates dW, dU, db under `prefix` and returns (dx, dh_prev, dc_prev).
    """
    i, f, g, o = cache.i, cache.f, cache.g, cache.o
    do = dh * cache.tanh_c
    dc = dc + dh * o * (1.0 - cache.tanh_c**2)
    di = dc * g
    dg = dc * i
    df = dc * cache.c_prev
    dc_prev = dc * f
    dz = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g**2), do * o * (1.0 - o)], axis=-1
    )
    grads[f"{prefix}.W"] += dz.T @ cache.x
    grads[f"{prefix}.U"] += dz.T @ cache.h_prev
    grads[f"{prefix}.b"] += dz.sum(axis=0)
    return dz @ weights.W, dz @ weights.U, dc_prev


# -------------------------------------------------------------------
# Pointer attention
# -------------------------------------------------------------------
@dataclass
class PointerCache:
    refs: np.ndarray  # [B, m, d]
    query: np.ndarray  # [B, d]
    t: np.ndarray  # [B, m, d] tanh activations


def pointer_scores(
    params: PolicyParameters, refs: np.ndarray, query: np.ndarray
) -> tuple[np.ndarray, PointerCache]:
    """Additive scores u_i = v . tanh(W_ref r_i + W_q q) over the m references."""
    if refs.ndim < 2 or refs.shape[-2] < 2:
        raise ShapeError(f"pointer attention needs at least 2 references, got shape {refs.shape}")
    if refs.shape[-1] != params.d or query.shape[-1] != params.d:
        raise ShapeError(f"refs {refs.shape} / query {query.shape} do not match d={params.d}")
    proj = refs @ params.attn_ref.T + (query @ params.attn_query.T)[..., None, :]
    t = np.tanh(proj)
    return t @ params.attn_v, PointerCache(refs=refs, query=query, t=t)


def log_softmax(u: np.ndarray) -> np.ndarray:
    return u - logsumexp(u, axis=-1, keepdims=True)


def pointer_attention(params: PolicyParameters, refs: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Attention over the references; every entry is at least the smallest positive float64."""
    u, _ = pointer_scores(params, np.asarray(refs, dtype=np.float64), np.asarray(query, dtype=np.float64))
    probs = np.maximum(np.exp(log_softmax(u)), np.finfo(np.float64).tiny)
    return probs / probs.sum(axis=-1, keepdims=True)


def pointer_backward(
    params: PolicyParameters, cache: PointerCache, du: np.ndarray, grads: GradientSet
) -> tuple[np.ndarray, np.ndarray]:
    """Backprop scores [B, m] -> (d_refs [B, m, d], d_query [B, d])."""
    d = params.d
    grads["attn_v"] += np.einsum("bm,bmd->d", du, cache.t)
    dpre = du[..., None] * params.attn_v * (1.0 - cache.t**2)
    grads["attn_ref"] += dpre.reshape(-1, d).T @ cache.refs.reshape(-1, d)
    dq = dpre.sum(axis=-2)
    grads["attn_query"] += dq.T @ cache.query
    return dpre @ params.attn_ref, dq @ params.attn_query


# -------------------------------------------------------------------
# Adam
# -------------------------------------------------------------------
@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_parameters(cls, params: PolicyParameters, **hyper) -> "AdamState":
        state = cls(**hyper)
        for k, arr in params.tensors().items():
            state.m[k] = np.zeros_like(arr)
            state.v[k] = np.zeros_like(arr)
        return state


def adam_step(
    params: PolicyParameters, grads: GradientSet, state: AdamState
) -> tuple[PolicyParameters, AdamState]:
    """Bias-corrected Adam, updating the parameter arrays in place."""
    grads.check_congruent(params)
    for name in grads:
        if not np.all(np.isfinite(grads[name])):
            raise TrainingDivergenceError(f"non-finite gradient in tensor {name}")

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    step_size = state.lr / bc1

    for name, p in params.tensors().items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= step_size * m / (np.sqrt(v / bc2) + state.eps)
        if not np.all(np.isfinite(p)):
            raise TrainingDivergenceError(f"tensor {name} became non-finite after Adam step {state.t}")
    return params, state


# -------------------------------------------------------------------
# DNCW weight file
# -------------------------------------------------------------------
# Layout: b"DNCW" | uint32 version | uint32 d | uint32 vocab_size |
#         each tensor of TENSOR_ORDER as float64 little-endian, C order.
_HEADER = struct.Struct("<4sIII")


def save_parameters(params: PolicyParameters, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [_HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, params.d, params.vocab_size)]
    for name, arr in params.tensors().items():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path.write_bytes(b"".join(chunks))
    logger.info("saved policy weights d=%d vocab_size=%d to %s", params.d, params.vocab_size, path)


def load_parameters(path: str | Path, required_vocab: int | None = None) -> PolicyParameters:
    """Read a DNCW file; `required_vocab` is the gene range of the target problem."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as exc:
        raise CorruptWeightsError(f"weights file not found: {path}") from exc
    if len(raw) < _HEADER.size:
        raise CorruptWeightsError(f"{path}: truncated header")
    magic, version, d, vocab_size = _HEADER.unpack_from(raw)
    if magic != WEIGHTS_MAGIC:
        raise CorruptWeightsError(f"{path}: bad magic {magic!r}")
    if version != WEIGHTS_VERSION:
        raise CorruptWeightsError(f"{path}: unsupported format version {version}")
    if d < 1 or vocab_size < 1:
        raise CorruptWeightsError(f"{path}: invalid dimensions d={d} vocab_size={vocab_size}")

    shapes = tensor_shapes(d, vocab_size)
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(raw) != expected:
        raise CorruptWeightsError(f"{path}: expected {expected} bytes, found {len(raw)}")

    offset = _HEADER.size
    tensors: dict[str, np.ndarray] = {}
    for name in TENSOR_ORDER:
        count = int(np.prod(shapes[name]))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64)
        tensors[name] = arr.reshape(shapes[name])
        offset += 8 * count
    params = PolicyParameters.from_tensors(tensors)

    if not all(np.all(np.isfinite(a)) for a in tensors.values()):
        raise CorruptWeightsError(f"{path}: non-finite values")
    if required_vocab is not None and vocab_size < required_vocab:
        raise TransferIncompatibilityError(
            f"{path}: weights cover gene values < {vocab_size}, problem needs {required_vocab}"
        )
    return params
