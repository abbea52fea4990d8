"""Joint single-head attention: chunked quadratic local + linearized global.

Both branches read low-dimensional queries/keys derived from one shared
representation (a convolution module output), per-branch elementwise scale
and offset, and rotary position embedding. The local branch scores
non-overlapping chunks of size P with squared-ReLU attention; the global
branch is a bilinear product evaluated key-side first so no frames-by-frames
matrix is ever formed. The joint output is the elementwise sum of the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .conv_module import ConvModuleParams, DenseParams, init_conv_module, \
    init_dense, project
from .errors import ConfigError

# count of chunk score matrices computed, for tests asserting the scores are
# built once per chunk and shared by the value and gate paths
_chunk_score_count = 0


def reset_chunk_score_count() -> None:
    global _chunk_score_count
    _chunk_score_count = 0


def chunk_score_count() -> int:
    return _chunk_score_count


_rope_cache: dict = {}


def _rope_tables(n_pos: int, dim: int, base: float, dtype) -> tuple:
    key = (n_pos, dim, float(base), np.dtype(dtype).str)
    hit = _rope_cache.get(key)
    if hit is not None:
        return hit
    half = dim // 2
    theta = float(base) ** (-2.0 * np.arange(half) / dim)
    angles = np.arange(n_pos)[:, None] * theta[None, :]
    tables = (np.cos(angles).astype(dtype), np.sin(angles).astype(dtype))
    _rope_cache.clear()  # keep at most one (S, D) regime resident
    _rope_cache[key] = tables
    return tables


def rope(x, base: float = 10000.0) -> ad.Tensor:
    """Rotate feature pairs (2j, 2j+1) of row m by angle m * base^(-2j/D)."""
    x = ad.as_tensor(x)
    if x.ndim != 2:
        raise ConfigError(f"rope expects (S, D), got shape {x.shape}")
    n_pos, dim = x.shape
    if dim % 2 != 0:
        raise ConfigError(f"rope needs an even feature dim, got {dim}")
    cos, sin = _rope_tables(n_pos, dim, base, x.dtype)
    even, odd = x.data[:, 0::2], x.data[:, 1::2]
    out = np.empty_like(x.data)
    out[:, 0::2] = even * cos - odd * sin
    out[:, 1::2] = even * sin + odd * cos

    def backward(g):
        ge, go = g[:, 0::2], g[:, 1::2]
        gx = np.empty_like(g)
        gx[:, 0::2] = ge * cos + go * sin  # rotate back by -angle
        gx[:, 1::2] = -ge * sin + go * cos
        ad.accumulate_grad(x, gx)

    return ad.make_op(out, [x], backward)


@dataclass
class ChunkPlan:
    frames: int  # true sequence length S
    size: int  # chunk length P
    count: int  # number of chunks H = ceil(S / P)
    pad: int  # H * P - S, always < P


def plan_chunks(frames: int, size: int) -> ChunkPlan:
    if size < 1:
        raise ConfigError(f"chunk size must be >= 1, got {size}")
    count = -(-frames // size)
    return ChunkPlan(frames=frames, size=size, count=count,
                     pad=count * size - frames)


@dataclass
class AttentionParams:
    shared: ConvModuleParams | DenseParams  # N -> D
    local_q_scale: ad.Tensor
    local_q_offset: ad.Tensor
    local_k_scale: ad.Tensor
    local_k_offset: ad.Tensor
    global_q_scale: ad.Tensor
    global_q_offset: ad.Tensor
    global_k_scale: ad.Tensor
    global_k_offset: ad.Tensor
    chunk_size: int
    rope_base: float = 10000.0
    # optional activation applied to the global branch inputs; the plain
    # bilinear product needs none, so default off
    global_feature_map: str | None = None


_MODES = ("joint", "local_only", "global_only")


def init_attention(
    store: ad.ParamStore, prefix: str, n_in: int, attn_dim: int,
    dw_kernel: int, dropout_p: float, chunk_size: int,
    rng: np.random.Generator, dense_shared: bool = False,
) -> AttentionParams:
    if dense_shared:
        shared = init_dense(store, f"{prefix}.shared", n_in, attn_dim, rng)
    else:
        shared = init_conv_module(
            store, f"{prefix}.shared", n_in, attn_dim, dw_kernel, dropout_p, rng
        )

    def pair(name):
        return (
            store.add(f"{prefix}.{name}_scale", np.ones(attn_dim)),
            store.add(f"{prefix}.{name}_offset", np.zeros(attn_dim)),
        )

    lq, lqo = pair("local_q")
    lk, lko = pair("local_k")
    gq, gqo = pair("global_q")
    gk, gko = pair("global_k")
    return AttentionParams(
        shared=shared,
        local_q_scale=lq, local_q_offset=lqo,
        local_k_scale=lk, local_k_offset=lko,
        global_q_scale=gq, global_q_offset=gqo,
        global_k_scale=gk, global_k_offset=gko,
        chunk_size=chunk_size,
    )


def _derive(shared, scale, offset, base):
    return rope(ad.add(ad.mul(shared, scale), offset), base)


def derive_qk(shared, p: AttentionParams):
    """Shared (S, D) -> (local q, local k, global q, global k), RoPE applied."""
    return (
        _derive(shared, p.local_q_scale, p.local_q_offset, p.rope_base),
        _derive(shared, p.local_k_scale, p.local_k_offset, p.rope_base),
        _derive(shared, p.global_q_scale, p.global_q_offset, p.rope_base),
        _derive(shared, p.global_k_scale, p.global_k_offset, p.rope_base),
    )


def global_attention(q, k, values, gates, feature_map: str | None = None):
    """Linearized branch: out = q @ ((1/S) k^T x), key side contracted first.

    Cost O(S * D * G) and intermediates of size D x G; the frames-by-frames
    score matrix is never materialized.
    """
    q, k = ad.as_tensor(q), ad.as_tensor(k)
    if feature_map is not None:
        q = ad.activation(feature_map, q)
        k = ad.activation(feature_map, k)
    beta = 1.0 / q.shape[0]
    k_t = ad.transpose(k)

    def branch(x):
        return ad.matmul(q, ad.mul(ad.matmul(k_t, x), beta))

    return branch(values), branch(gates)


def local_attention(q, k, values, gates, chunk_size: int):
    """Chunked quadratic branch with squared-ReLU scores, built once per
    chunk and shared by the value and gate paths."""
    global _chunk_score_count
    q, k = ad.as_tensor(q), ad.as_tensor(k)
    frames, dim = q.shape
    plan = plan_chunks(frames, chunk_size)

    def chunked(x, width):
        x = ad.pad_axis_end(ad.as_tensor(x), 0, plan.pad)
        return ad.reshape(x, (plan.count, plan.size, width))

    q3 = chunked(q, dim)
    k3 = chunked(k, dim)
    gamma = 1.0 / chunk_size
    scores = ad.relu_squared(
        ad.mul(ad.matmul(q3, ad.permute(k3, (0, 2, 1))), gamma)
    )
    _chunk_score_count += plan.count

    def branch(x):
        width = x.shape[1]
        out = ad.matmul(scores, chunked(x, width))
        out = ad.reshape(out, (plan.count * plan.size, width))
        return ad.narrow(out, 0, 0, frames)

    return branch(values), branch(gates)


def joint_attention(
    x, values, gates, p: AttentionParams, mode: str = "joint",
    train: bool = False, rng: np.random.Generator | None = None,
):
    """Block input (S, N) + value/gate sequences (S, G) -> attended pair.

    Returns (attended values, attended gates). Modes: "joint" sums the local
    and global branch outputs elementwise; the *_only modes return a single
    branch for ablations.
    """
    if mode not in _MODES:
        raise ConfigError(f"unknown attention mode {mode!r}; expected {_MODES}")
    shared = project(x, p.shared, train, rng)
    q_loc, k_loc, q_glob, k_glob = derive_qk(shared, p)
    if mode == "local_only":
        return local_attention(q_loc, k_loc, values, gates, p.chunk_size)
    if mode == "global_only":
        return global_attention(q_glob, k_glob, values, gates,
                                p.global_feature_map)
    lv, lg = local_attention(q_loc, k_loc, values, gates, p.chunk_size)
    gv, gg = global_attention(q_glob, k_glob, values, gates,
                              p.global_feature_map)
    return ad.add(lv, gv), ad.add(lg, gg)
