"""Convolution module: norm -> expanding linear -> SiLU -> depthwise + skip.

Used in three widths inside each block (feature-to-gate/value at 2N, the
shared attention representation at D, and the output projection back to N).
A dense variant (norm + linear only) stands in for ablation runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError


@dataclass
class ConvModuleParams:
    norm_gain: ad.Tensor  # (N_in,)
    norm_bias: ad.Tensor  # (N_in,)
    proj_weight: ad.Tensor  # (N_out, N_in)
    proj_bias: ad.Tensor  # (N_out,)
    dw_weight: ad.Tensor  # (N_out, K2)
    dropout_p: float = 0.0


@dataclass
class DenseParams:
    norm_gain: ad.Tensor
    norm_bias: ad.Tensor
    proj_weight: ad.Tensor
    proj_bias: ad.Tensor


def _init_norm_and_proj(store, prefix, n_in, n_out, rng):
    bound = 1.0 / math.sqrt(n_in)
    return (
        store.add(f"{prefix}.norm_g", np.ones(n_in)),
        store.add(f"{prefix}.norm_b", np.zeros(n_in)),
        store.add(f"{prefix}.proj_w", rng.uniform(-bound, bound, (n_out, n_in))),
        store.add(f"{prefix}.proj_b", np.zeros(n_out)),
    )


def init_conv_module(
    store: ad.ParamStore, prefix: str, n_in: int, n_out: int, dw_kernel: int,
    dropout_p: float, rng: np.random.Generator,
) -> ConvModuleParams:
    if dw_kernel % 2 == 0:
        raise ConfigError(f"depthwise kernel must be odd, got {dw_kernel}")
    gain, bias, proj_w, proj_b = _init_norm_and_proj(store, prefix, n_in, n_out, rng)
    k_bound = 1.0 / math.sqrt(dw_kernel)
    return ConvModuleParams(
        norm_gain=gain,
        norm_bias=bias,
        proj_weight=proj_w,
        proj_bias=proj_b,
        dw_weight=store.add(
            f"{prefix}.dw_w", rng.uniform(-k_bound, k_bound, (n_out, dw_kernel))
        ),
        dropout_p=dropout_p,
    )


def init_dense(
    store: ad.ParamStore, prefix: str, n_in: int, n_out: int,
    rng: np.random.Generator,
) -> DenseParams:
    gain, bias, proj_w, proj_b = _init_norm_and_proj(store, prefix, n_in, n_out, rng)
    return DenseParams(
        norm_gain=gain, norm_bias=bias, proj_weight=proj_w, proj_bias=proj_b
    )


def conv_module_forward(
    x, p: ConvModuleParams, train: bool = False,
    rng: np.random.Generator | None = None,
) -> ad.Tensor:
    """x (S, N_in) -> (S, N_out); the skip spans the depthwise convolution."""
    y0 = ad.silu(ad.linear(ad.layer_norm(x, p.norm_gain, p.norm_bias),
                           p.proj_weight, p.proj_bias))
    along_time = ad.transpose(y0)  # depthwise runs over frames per channel
    dw = ad.transpose(ad.depthwise_conv1d(along_time, p.dw_weight))
    return ad.dropout(ad.add(y0, dw), p.dropout_p, rng, train)


def dense_forward(x, p: DenseParams, train: bool = False,
                  rng: np.random.Generator | None = None) -> ad.Tensor:
    """Ablation stand-in: normalization and projection only."""
    return ad.linear(ad.layer_norm(x, p.norm_gain, p.norm_bias),
                     p.proj_weight, p.proj_bias)


def project(x, p, train: bool = False,
            rng: np.random.Generator | None = None) -> ad.Tensor:
    """Dispatch on the parameter flavor; keeps ablation call sites uniform."""
    if isinstance(p, ConvModuleParams):
        return conv_module_forward(x, p, train, rng)
    if isinstance(p, DenseParams):
        return dense_forward(x, p, train, rng)
    raise ConfigError(f"unknown projection parameters: {type(p).__name__}")
