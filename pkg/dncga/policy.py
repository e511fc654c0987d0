# dncga/policy.py
"""Sequence-level forward and backward passes of the crossover policy.

Shapes: a group of K crossovers is an integer array of parents [K, m, n];
the policy chooses, for every position j, which of the m parents donates
gene j. Encoder states are [n, K, m, d], decoder states [K, d].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from dncga.errors import ShapeError
from dncga.neuralcore import (
    GradientSet,
    LstmCache,
    LstmState,
    PointerCache,
    PolicyParameters,
    check_gene_range,
    embed_genes,
    log_softmax,
    lstm_step_backward,
    lstm_step_cached,
    pointer_backward,
    pointer_scores,
)

logger = logging.getLogger(__name__)

# chooser(step, log_probs [K, m]) -> chosen parent index [K]
Chooser = Callable[[int, np.ndarray], np.ndarray]


@dataclass
class _EncoderPass:
    h: np.ndarray  # [n, K, m, d]
    c: np.ndarray  # [n, K, m, d]
    caches: list[LstmCache] = field(default_factory=list)


@dataclass
class _DecoderPass:
    choices: np.ndarray  # [K, n]
    log_probs: np.ndarray  # [K, n] log-prob of the chosen parent
    step_log_probs: list[np.ndarray] = field(default_factory=list)  # each [K, m]
    lstm_caches: list[LstmCache] = field(default_factory=list)
    pointer_caches: list[PointerCache] = field(default_factory=list)
    genes: list[np.ndarray] = field(default_factory=list)  # chosen gene values per step


@dataclass
class DecodeResult:
    children: np.ndarray  # [K, n]
    choices: np.ndarray  # [K, n] parent index per step
    log_probs: np.ndarray  # [K, n]
    random_steps: np.ndarray  # [K, n] bool, True where the ε branch fired


def _as_groups(parents: np.ndarray) -> np.ndarray:
    parents = np.asarray(parents)
    if parents.ndim != 3:
        raise ShapeError(f"parent groups must be [K, m, n], got shape {parents.shape}")
    _, m, n = parents.shape
    if m < 2:
        raise ShapeError(f"crossover needs at least 2 parents, got {m}")
    if n < 1:
        raise ShapeError("genomes must have at least one gene")
    return parents.astype(np.int64, copy=False)


def _encode(params: PolicyParameters, parents: np.ndarray, keep_cache: bool) -> _EncoderPass:
    K, m, n = parents.shape
    d = params.d
    state = LstmState.zeros((K * m, d))
    hs = np.empty((n, K, m, d))
    cs = np.empty((n, K, m, d))
    out = _EncoderPass(h=hs, c=cs)
    for t in range(n):
        x = embed_genes(params, parents[:, :, t].reshape(-1))
        state, cache = lstm_step_cached(params.enc_lstm, x, state)
        hs[t] = state.h.reshape(K, m, d)
        cs[t] = state.c.reshape(K, m, d)
        if keep_cache:
            out.caches.append(cache)
    return out


def _references(enc: _EncoderPass, step: int, lag: int) -> np.ndarray:
    idx = step - lag
    if idx < 0:
        return np.zeros_like(enc.h[0])
    return enc.h[idx]


def _decode(
    params: PolicyParameters,
    parents: np.ndarray,
    enc: _EncoderPass,
    choose: Chooser,
    lag: int,
    keep_cache: bool,
) -> _DecoderPass:
    K, m, n = parents.shape
    rows = np.arange(K)
    # the parents' final encoder states condition the decoder
    state = LstmState(h=enc.h[-1].mean(axis=1), c=enc.c[-1].mean(axis=1))
    x = np.broadcast_to(params.start_token, (K, params.d))
    out = _DecoderPass(choices=np.empty((K, n), dtype=np.int64), log_probs=np.empty((K, n)))
    for j in range(n):
        state, lstm_cache = lstm_step_cached(params.dec_lstm, x, state)
        u, pointer_cache = pointer_scores(params, _references(enc, j, lag), state.h)
        logp = log_softmax(u)
        chosen = np.asarray(choose(j, logp), dtype=np.int64)
        out.choices[:, j] = chosen
        out.log_probs[:, j] = logp[rows, chosen]
        genes = parents[rows, chosen, j]
        x = embed_genes(params, genes)
        if keep_cache:
            out.step_log_probs.append(logp)
            out.lstm_caches.append(lstm_cache)
            out.pointer_caches.append(pointer_cache)
            out.genes.append(genes)
    return out


# -------------------------------------------------------------------
# Public forward API
# -------------------------------------------------------------------
def encode_parents(
    params: PolicyParameters, parents: np.ndarray
) -> tuple[list[list[LstmState]], np.ndarray]:
    """Encode one group of m parents -> (states[i][j], summary of length m*d)."""
    group = _as_groups(np.asarray(parents)[None, ...])
    enc = _encode(params, group, keep_cache=False)
    _, _, m, _ = enc.h.shape
    n = group.shape[2]
    states = [[LstmState(h=enc.h[j, 0, i], c=enc.c[j, 0, i]) for j in range(n)] for i in range(m)]
    summary = enc.h[-1, 0].reshape(-1)
    return states, summary


def epsilon_mask(
    shape: tuple[int, int], epsilon: float, mode: str, rng: np.random.Generator
) -> np.ndarray:
    """Which (offspring, step) pairs take a uniformly random parent."""
    K, n = shape
    if mode == "per_step":
        return rng.random((K, n)) < epsilon
    if mode == "single_gene":
        mask = np.zeros((K, n), dtype=bool)
        hit = rng.random(K) < epsilon
        positions = rng.integers(0, n, size=K)
        mask[np.flatnonzero(hit), positions[hit]] = True
        return mask
    raise ValueError(f"unknown epsilon mode {mode!r}")


def decode_children(
    params: PolicyParameters,
    parents: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    epsilon_mode: str = "per_step",
    pointer_lag: int = 0,
) -> DecodeResult:
    """Sample one child per parent group, gene by gene."""
    parents = _as_groups(parents)
    K, m, n = parents.shape
    check_gene_range(parents, params.vocab_size)
    random_steps = epsilon_mask((K, n), epsilon, epsilon_mode, rng)
    uniforms = rng.random((K, n))
    random_parents = rng.integers(0, m, size=(K, n))

    def choose(j: int, logp: np.ndarray) -> np.ndarray:
        cdf = np.cumsum(np.exp(logp), axis=-1)
        sampled = np.minimum((cdf < uniforms[:, j, None]).sum(axis=-1), m - 1)
        return np.where(random_steps[:, j], random_parents[:, j], sampled)

    enc = _encode(params, parents, keep_cache=False)
    dec = _decode(params, parents, enc, choose, pointer_lag, keep_cache=False)
    children = parents[np.arange(K)[:, None], dec.choices, np.arange(n)[None, :]]
    return DecodeResult(
        children=children, choices=dec.choices, log_probs=dec.log_probs, random_steps=random_steps
    )


def decode_child(
    params: PolicyParameters,
    parents: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    epsilon_mode: str = "per_step",
    pointer_lag: int = 0,
) -> DecodeResult:
    return decode_children(params, np.asarray(parents)[None, ...], epsilon, rng, epsilon_mode, pointer_lag)


def sequence_log_probs(
    params: PolicyParameters, parents: np.ndarray, choices: np.ndarray, pointer_lag: int = 0
) -> np.ndarray:
    """Per-step log-probabilities of fixed parent choices [K, n]."""
    parents = _as_groups(parents)
    choices = np.asarray(choices, dtype=np.int64)
    if choices.shape != (parents.shape[0], parents.shape[2]):
        raise ShapeError(f"choices {choices.shape} do not match parent groups {parents.shape}")
    enc = _encode(params, parents, keep_cache=False)
    dec = _decode(params, parents, enc, lambda j, _: choices[:, j], pointer_lag, keep_cache=False)
    return dec.log_probs


# -------------------------------------------------------------------
# REINFORCE
# -------------------------------------------------------------------
def policy_entropy(params: PolicyParameters, parents: np.ndarray, pointer_lag: int = 0) -> float:
    """Mean per-step entropy (nats) of the pointer distribution along argmax decodes.

    ln(m) for a policy that ignores its inputs, near 0 for one that has
    collapsed onto a single parent.
    """
    parents = _as_groups(parents)
    check_gene_range(parents, params.vocab_size)
    entropies: list[np.ndarray] = []

    def choose(j: int, logp: np.ndarray) -> np.ndarray:
        entropies.append(-(np.exp(logp) * logp).sum(axis=-1))
        return logp.argmax(axis=-1)

    enc = _encode(params, parents, keep_cache=False)
    _decode(params, parents, enc, choose, pointer_lag, keep_cache=False)
    return float(np.mean(entropies))


def _chunk_backward(
    params: PolicyParameters,
    parents: np.ndarray,
    choices: np.ndarray,
    weights: np.ndarray,
    pointer_lag: int,
    grads: GradientSet,
) -> float:
    """Loss and gradients of -sum_k sum_j weights[k, j] * log p(choice_kj) for one chunk."""
    K, m, n = parents.shape
    d = params.d
    enc = _encode(params, parents, keep_cache=True)
    dec = _decode(params, parents, enc, lambda j, _: choices[:, j], pointer_lag, keep_cache=True)
    loss = -float(np.sum(weights * dec.log_probs))

    rows = np.arange(K)
    d_enc_h = np.zeros_like(enc.h)
    dh_next = np.zeros((K, d))
    dc_next = np.zeros((K, d))
    for j in range(n - 1, -1, -1):
        probs = np.exp(dec.step_log_probs[j])
        onehot = np.zeros_like(probs)
        onehot[rows, choices[:, j]] = 1.0
        du = -weights[:, j, None] * (onehot - probs)
        d_refs, d_query = pointer_backward(params, dec.pointer_caches[j], du, grads)
        if j - pointer_lag >= 0:
            d_enc_h[j - pointer_lag] += d_refs
        dx, dh_next, dc_next = lstm_step_backward(
            params.dec_lstm, dec.lstm_caches[j], d_query + dh_next, dc_next, grads, "dec_lstm"
        )
        if j == 0:
            grads["start_token"] += dx.sum(axis=0)
        else:
            np.add.at(grads["embed_table"], dec.genes[j - 1], dx)

    # decoder initial state is the parent-mean of the last encoder state
    d_enc_h[-1] += dh_next[:, None, :] / m
    dh_enc = np.zeros((K * m, d))
    dc_enc = np.repeat(dc_next[:, None, :] / m, m, axis=1).reshape(K * m, d)
    for t in range(n - 1, -1, -1):
        dh = d_enc_h[t].reshape(K * m, d) + dh_enc
        dx, dh_enc, dc_enc = lstm_step_backward(
            params.enc_lstm, enc.caches[t], dh, dc_enc, grads, "enc_lstm"
        )
        np.add.at(grads["embed_table"], parents[:, :, t].reshape(-1), dx)
    return loss


def reinforce_gradients(
    params: PolicyParameters,
    parents: np.ndarray,
    choices: np.ndarray,
    policy_steps: np.ndarray,
    rewards: np.ndarray,
    pointer_lag: int = 0,
    chunk_size: int = 128,
) -> tuple[float, GradientSet]:
    """Surrogate loss -(1/B) sum_b reward_b sum_{policy steps j} log p_bj and its gradient.

    `policy_steps` [B, n] is False for steps taken by the ε branch; those
    steps contribute nothing. Records are processed in chunks and summed,
    which gives the same gradient as a single pass.
    """
    parents = _as_groups(parents)
    B = parents.shape[0]
    choices = np.asarray(choices, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    weights = rewards[:, None] * np.asarray(policy_steps, dtype=np.float64) / B

    grads = GradientSet.zeros_like(params)
    loss = 0.0
    for start in range(0, B, chunk_size):
        sl = slice(start, start + chunk_size)
        loss += _chunk_backward(params, parents[sl], choices[sl], weights[sl], pointer_lag, grads)
    return loss, grads
