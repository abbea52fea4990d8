"""Reverse-mode automatic differentiation over numpy arrays.

Define-by-run: primitives executed while a ``Tape`` is active append a node
holding a backward closure; ``Tape.backward`` replays the nodes in exact
reverse execution order, accumulating gradients into every tensor on the
path to the loss. Without an active tape the same primitives run as plain
numpy forward code, so one implementation serves training, evaluation and
the finite-difference oracle.

Shape conventions follow the rest of the package: sequences are (frames,
features), 1-D convolutions are (channels, length). Element precision is
whatever dtype the arrays carry; tests use float64, training may use
float32.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError

_active_tape: "Tape | None" = None


class Tensor:
    """A numpy array plus a gradient slot and an optional backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # operator sugar; all routed through the module-level primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of executed primitives for one forward pass.

    Use as a context manager; a tape is rebuilt per forward pass and is
    confined to one thread of execution.
    """

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active_tape
        _active_tape = self._prev
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, root: Tensor) -> None:
        """Seed d(root)/d(root) = 1 and visit nodes in reverse execution order."""
        if root.data.ndim != 0:
            raise DimensionError(
                f"backward root must be scalar, got shape {root.data.shape}"
            )
        if not np.isfinite(root.data):
            raise NumericalError(f"backward root is non-finite: {root.data}")
        seed = np.ones((), dtype=root.data.dtype)
        root.grad = seed if root.grad is None else root.grad + seed
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def as_tensor(x) -> Tensor:
    """Wrap scalars / numpy arrays as constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Wrap binary operands; Python scalars adopt the tensor side's dtype so
    constants like 1/S never upcast a float32 graph (mirrors numpy's weak
    scalar promotion, which is lost once the scalar becomes a 0-d array)."""
    if isinstance(a, Tensor) and isinstance(b, (int, float)):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and isinstance(a, (int, float)):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return as_tensor(a), as_tensor(b)


def constant(x, dtype=None) -> Tensor:
    return Tensor(np.asarray(x, dtype=dtype))


def _recording(*tensors: Tensor) -> bool:
    return _active_tape is not None and any(t.requires_grad for t in tensors)


def _attach(out: Tensor, backward: Callable[[np.ndarray], None]) -> Tensor:
    out.requires_grad = True
    out._backward = backward
    _active_tape._nodes.append(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    # never in-place: g may alias another node's grad buffer
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data + b.data)
    if not _recording(a, b):
        return out

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.data.shape))

    return _attach(out, backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data - b.data)
    if not _recording(a, b):
        return out

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.data.shape))

    return _attach(out, backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data * b.data)
    if not _recording(a, b):
        return out

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _attach(out, backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = Tensor(a.data / b.data)
    if not _recording(a, b):
        return out

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _attach(out, backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, -g)

    return _attach(out, backward)


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner axes disagree: {a.data.shape} @ {b.data.shape}"
        )
    if a.data.ndim == 3 and b.data.ndim == 3 and a.data.shape[0] != b.data.shape[0]:
        raise DimensionError(
            f"matmul batch axes disagree: {a.data.shape[0]} vs {b.data.shape[0]}"
        )
    out = Tensor(a.data @ b.data)
    if not _recording(a, b):
        return out

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            _accum(b, np.swapaxes(a.data, -1, -2) @ g)

    return _attach(out, backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got {a.data.shape}")
    out = Tensor(a.data.T)
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, g.T)

    return _attach(out, backward)


def permute(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    out = Tensor(np.transpose(a.data, axes))
    if not _recording(a):
        return out

    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accum(a, np.transpose(g, inverse))

    return _attach(out, backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    if not _recording(a):
        return out

    orig = a.data.shape

    def backward(g):
        _accum(a, g.reshape(orig))

    return _attach(out, backward)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    a = as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(a.data[idx])
    if not _recording(a):
        return out

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accum(a, full)

    return _attach(out, backward)


def pad_axis_end(a, axis: int, extra: int) -> Tensor:
    """Append ``extra`` zeros at the end of ``axis``."""
    a = as_tensor(a)
    if extra == 0:
        return a
    widths = [(0, 0)] * a.data.ndim
    widths[axis] = (0, extra)
    out = Tensor(np.pad(a.data, widths))
    if not _recording(a):
        return out

    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(0, a.data.shape[axis])
    idx = tuple(idx)

    def backward(g):
        _accum(a, g[idx])

    return _attach(out, backward)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum())
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _attach(out, backward)


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.mean())
    if not _recording(a):
        return out

    n = a.data.size

    def backward(g):
        _accum(a, np.broadcast_to(g / n, a.data.shape))

    return _attach(out, backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data))
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, g / a.data)

    return _attach(out, backward)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0))
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, g * (a.data > 0))

    return _attach(out, backward)


def relu_squared(a) -> Tensor:
    a = as_tensor(a)
    pos = np.maximum(a.data, 0)
    out = Tensor(pos * pos)
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, g * (2.0 * pos))

    return _attach(out, backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s)
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, g * (s * (1.0 - s)))

    return _attach(out, backward)


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(a.data * s)
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, g * (s * (1.0 + a.data * (1.0 - s))))

    return _attach(out, backward)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(a) -> Tensor:
    """GELU, tanh approximation (keeps the package free of an erf dependency)."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(inner)
    out = Tensor(0.5 * x * (1.0 + t))
    if not _recording(a):
        return out

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        _accum(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner))

    return _attach(out, backward)


_ACTIVATIONS = {
    "relu": relu,
    "relu_squared": relu_squared,
    "sigmoid": sigmoid,
    "silu": silu,
    "swish": silu,
    "gelu": gelu,
    "bilinear": lambda a: as_tensor(a),  # identity: gate stays a plain product
}


def activation(kind: str, a) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(
            f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}"
        ) from None
    return fn(a)


def activation_kinds() -> list[str]:
    return sorted(_ACTIVATIONS)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------


def dropout(a, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout: scale by 1/(1-p) at train time, identity at eval."""
    a = as_tensor(a)
    if not train or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ConfigError("training-mode dropout needs an explicit RNG")
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype)
    keep /= 1.0 - p
    out = Tensor(a.data * keep)
    if not _recording(a):
        return out

    def backward(g):
        _accum(a, g * keep)

    return _attach(out, backward)


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def conv1d(x, weight, bias, stride: int) -> Tensor:
    """Strided 1-D convolution. x (Cin, L), weight (Cout, Cin, K), bias (Cout,).

    out[c, t] = bias[c] + sum_{i,k} weight[c, i, k] * x[i, t*stride + k]
    Lout = (L - K) // stride + 1.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.data.ndim != 2 or weight.data.ndim != 3:
        raise DimensionError(
            f"conv1d expects x (Cin, L) and weight (Cout, Cin, K); "
            f"got {x.data.shape} and {weight.data.shape}"
        )
    cin, L = x.data.shape
    cout, w_cin, K = weight.data.shape
    if w_cin != cin:
        raise DimensionError(
            f"conv1d channel axes disagree: x has Cin={cin}, weight has Cin={w_cin}"
        )
    if bias.data.shape != (cout,):
        raise DimensionError(
            f"conv1d bias axis disagrees: expected ({cout},), got {bias.data.shape}"
        )
    if L < K:
        raise DimensionError(f"conv1d input length {L} shorter than kernel {K}")
    if stride < 1:
        raise ConfigError(f"conv1d stride must be >= 1, got {stride}")

    lout = (L - K) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x.data, K, axis=1)[:, ::stride]
    win = win[:, :lout]  # (Cin, Lout, K)
    out_data = np.einsum("oik,ilk->ol", weight.data, win, optimize=True)
    out_data += bias.data[:, None]
    out = Tensor(out_data)
    if not _recording(x, weight, bias):
        return out

    def backward(g):
        if bias.requires_grad:
            _accum(bias, g.sum(axis=1))
        if weight.requires_grad:
            _accum(weight, np.einsum("ol,ilk->oik", g, win, optimize=True))
        if x.requires_grad:
            spread = np.einsum("ol,oik->ilk", g, weight.data, optimize=True)
            gx = np.zeros_like(x.data)
            span = stride * (lout - 1) + 1
            for k in range(K):
                gx[:, k : k + span : stride] += spread[:, :, k]
            _accum(x, gx)

    return _attach(out, backward)


def transposed_conv1d(x, weight, stride: int) -> Tensor:
    """Adjoint of conv1d. x (Cin, L), weight (Cin, Cout, K) -> (Cout, Lout).

    Lout = (L - 1) * stride + K; out[o, t*stride + k] += x[i, t] * weight[i, o, k].
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 3:
        raise DimensionError(
            f"transposed_conv1d expects x (Cin, L) and weight (Cin, Cout, K); "
            f"got {x.data.shape} and {weight.data.shape}"
        )
    cin, L = x.data.shape
    w_cin, cout, K = weight.data.shape
    if w_cin != cin:
        raise DimensionError(
            f"transposed_conv1d channel axes disagree: x has Cin={cin}, "
            f"weight has Cin={w_cin}"
        )
    if stride < 1:
        raise ConfigError(f"transposed_conv1d stride must be >= 1, got {stride}")

    lout = (L - 1) * stride + K
    spread = np.einsum("il,iok->olk", x.data, weight.data, optimize=True)
    out_data = np.zeros((cout, lout), dtype=x.data.dtype)
    span = stride * (L - 1) + 1
    for k in range(K):
        out_data[:, k : k + span : stride] += spread[:, :, k]
    out = Tensor(out_data)
    if not _recording(x, weight):
        return out

    def backward(g):
        win = np.lib.stride_tricks.sliding_window_view(g, K, axis=1)[:, ::stride]
        win = win[:, :L]  # (Cout, L, K)
        if x.requires_grad:
            _accum(x, np.einsum("iok,olk->il", weight.data, win, optimize=True))
        if weight.requires_grad:
            _accum(weight, np.einsum("il,olk->iok", x.data, win, optimize=True))

    return _attach(out, backward)


def depthwise_conv1d(x, weight) -> Tensor:
    """Per-channel same-length convolution. x (C, L), weight (C, K), K odd.

    Symmetric zero padding of (K-1)/2 on each side keeps the output length L;
    channel c of the output depends only on channel c of the input.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise DimensionError(
            f"depthwise_conv1d expects x (C, L) and weight (C, K); "
            f"got {x.data.shape} and {weight.data.shape}"
        )
    C, L = x.data.shape
    w_c, K = weight.data.shape
    if w_c != C:
        raise DimensionError(
            f"depthwise_conv1d channel axes disagree: x has C={C}, weight has C={w_c}"
        )
    if K % 2 == 0:
        raise ConfigError(f"depthwise kernel size must be odd, got {K}")

    pad = (K - 1) // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad)))
    out_data = weight.data[:, 0:1] * xp[:, 0:L]
    for k in range(1, K):
        out_data += weight.data[:, k : k + 1] * xp[:, k : k + L]
    out = Tensor(out_data)
    if not _recording(x, weight):
        return out

    def backward(g):
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for k in range(K):
                gw[:, k] = (g * xp[:, k : k + L]).sum(axis=1)
            _accum(weight, gw)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for k in range(K):
                gxp[:, k : k + L] += weight.data[:, k : k + 1] * g
            _accum(x, gxp[:, pad : pad + L])

    return _attach(out, backward)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Per-frame layer normalization over the feature axis.

    x (S, N), gain (N,), bias (N,): each frame is centered, scaled to unit
    variance (guarded by eps), then affinely transformed.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.data.ndim != 2:
        raise DimensionError(f"layer_norm expects x (S, N), got {x.data.shape}")
    N = x.data.shape[1]
    if gain.data.shape != (N,) or bias.data.shape != (N,):
        raise DimensionError(
            f"layer_norm gain/bias must be ({N},), got "
            f"{gain.data.shape} and {bias.data.shape}"
        )
    mean = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor(xhat * gain.data + bias.data)
    if not _recording(x, gain, bias):
        return out

    def backward(g):
        if bias.requires_grad:
            _accum(bias, g.sum(axis=0))
        if gain.requires_grad:
            _accum(gain, (g * xhat).sum(axis=0))
        if x.requires_grad:
            gh = g * gain.data
            # d/dx of (x - mean) * inv_std, both mean and var depend on x
            gx = inv_std * (
                gh
                - gh.mean(axis=1, keepdims=True)
                - xhat * (gh * xhat).mean(axis=1, keepdims=True)
            )
            _accum(x, gx)

    return _attach(out, backward)


def linear(x, weight, bias) -> Tensor:
    """Per-frame affine map: x (S, N_in) @ weight (N_out, N_in)^T + bias."""
    y = matmul(x, transpose(weight))
    return add(y, bias)


# ---------------------------------------------------------------------------
# custom op hook (used by rope in the attention module)
# ---------------------------------------------------------------------------


def make_op(data: np.ndarray, inputs: Iterable[Tensor],
            backward: Callable[[np.ndarray], None]) -> Tensor:
    """Register a fused primitive: forward result + backward closure.

    The closure receives the output gradient and must push gradients into
    its inputs via ``accumulate_grad``.
    """
    out = Tensor(data)
    if not _recording(*inputs):
        return out
    return _attach(out, backward)


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad`` without aliasing; for make_op closures."""
    _accum(t, g)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


class ParamStore:
    """Named trainable tensors with paired gradient slots.

    Names are unique and hierarchical ("block0.convm_u.proj_w"); every entry
    keeps a gradient of the same shape as its value.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise ConfigError(f"duplicate parameter name {name!r}")
        # np.array rather than ascontiguousarray: the latter turns 0-d into (1,)
        t = Tensor(
            np.array(value, dtype=self.dtype, order="C"),
            requires_grad=trainable,
            name=name,
        )
        t.grad = np.zeros_like(t.data)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def tensors(self) -> list[Tensor]:
        return list(self._entries.values())

    def trainable(self):
        return [(n, t) for n, t in self._entries.items() if t.requires_grad]

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = np.zeros_like(t.data)

    def total_scalars(self, trainable_only: bool = True) -> int:
        return sum(
            t.data.size
            for t in self._entries.values()
            if t.requires_grad or not trainable_only
        )

    def grad_norm(self) -> float:
        total = 0.0
        for _, t in self.trainable():
            if t.grad is not None:
                total += float(np.dot(t.grad.ravel(), t.grad.ravel()))
        return math.sqrt(total)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self._entries.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._entries) - set(arrays)
        extra = set(arrays) - set(self._entries)
        if missing or extra:
            raise ConfigError(
                f"parameter set mismatch: missing={sorted(missing)} extra={sorted(extra)}"
            )
        for n, t in self._entries.items():
            src = np.asarray(arrays[n], dtype=self.dtype)
            if src.shape != t.data.shape:
                raise DimensionError(
                    f"parameter {n!r} shape mismatch: {src.shape} vs {t.data.shape}"
                )
            t.data = np.ascontiguousarray(src)


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------


def gradient_check(
    f: Callable[[ParamStore], Tensor],
    params: ParamStore,
    h: float = 1e-5,
    rel_floor: float = 1e-8,
    verbose: bool = False,
) -> float:
    """Compare reverse-mode gradients against central finite differences.

    Runs f once under a tape for analytic gradients, then perturbs every
    trainable scalar by +/-h and recomputes f without a tape. Returns the
    worst relative error max(|a - n| / max(|a|, |n|, rel_floor)).
    """
    if params.dtype != np.float64:
        raise ConfigError("gradient_check requires a float64 ParamStore")
    if not 1e-6 <= h <= 1e-4:
        raise ConfigError(f"step size h must lie in [1e-6, 1e-4], got {h}")

    params.zero_grad()
    with Tape() as tape:
        loss = f(params)
        tape.backward(loss)
    analytic = {n: t.grad.copy() for n, t in params.trainable()}

    worst = 0.0
    worst_at = ""
    for name, t in params.trainable():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f(params).data)
            flat[i] = orig - h
            f_minus = float(f(params).data)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericalError(
                    f"non-finite loss while perturbing {name}[{i}]"
                )
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(a_flat[i])
            if not math.isfinite(a):
                raise NumericalError(f"non-finite analytic gradient at {name}[{i}]")
            rel = abs(a - numeric) / max(abs(a), abs(numeric), rel_floor)
            if rel > worst:
                worst = rel
                worst_at = f"{name}[{i}]"
        if verbose:
            print(f"gradient_check: done {name}, worst so far {worst:.3e} at {worst_at}")
    if verbose and worst_at:
        print(f"gradient_check: max relative error {worst:.3e} at {worst_at}")
    return worst
