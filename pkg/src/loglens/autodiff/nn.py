"""Layer primitives built on the autodiff tensor: parameter containers,
dense/LSTM/attention/convolution building blocks, and positional encodings."""

from __future__ import annotations

import math

import numpy as np

from ..exceptions import ConfigurationError, DimensionError
from ..rng import Rng
from .tensor import (
    Tensor,
    concat,
    matmul,
    narrow,
    relu,
    sigmoid,
    softmax,
    tanh,
    unfold_windows,
)


class ParamSet:
    """Named, ordered collection of parameter tensors.

    Parameters are drawn from a single xoshiro stream in creation order, so a
    fixed (seed, architecture) pair always reproduces bit-identical values.
    Weights are uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases start at
    zero. Constant entries (e.g. frozen semantic tables) carry no gradient but
    serialize with the rest.
    """

    def __init__(self, rng_seed: int):
        self.rng_seed = int(rng_seed)
        self._rng = Rng(self.rng_seed)
        self._params: dict[str, Tensor] = {}

    def uniform(self, name: str, shape: tuple, fan_in: int) -> Tensor:
        bound = 1.0 / math.sqrt(fan_in)
        t = Tensor(self._rng.uniform(-bound, bound, shape), requires_grad=True)
        return self._register(name, t)

    def zeros(self, name: str, shape: tuple) -> Tensor:
        t = Tensor(np.zeros(shape), requires_grad=True)
        return self._register(name, t)

    def constant(self, name: str, array: np.ndarray) -> Tensor:
        t = Tensor(np.array(array, dtype=np.float64))
        return self._register(name, t)

    def _register(self, name: str, t: Tensor) -> Tensor:
        if name in self._params:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def trainable(self):
        return [(n, p) for n, p in self._params.items() if p.requires_grad]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            if name in self._params:
                if self._params[name].data.shape != arr.shape:
                    raise DimensionError(
                        f"parameter {name!r}: stored shape {arr.shape} != "
                        f"expected {self._params[name].data.shape}"
                    )
                self._params[name].data = np.asarray(arr, dtype=np.float64)
            else:
                self._params[name] = Tensor(arr)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    if b is not None:
        out = out + b
    return out


# ---------------------------------------------------------------------------
# LSTM


def lstm_params(ps: ParamSet, prefix: str, in_dim: int, units: int) -> None:
    ps.uniform(f"{prefix}.wx", (in_dim, 4 * units), fan_in=in_dim)
    ps.uniform(f"{prefix}.wh", (units, 4 * units), fan_in=units)
    ps.zeros(f"{prefix}.b", (4 * units,))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor,
              wx: Tensor, wh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One gated recurrence step on a (batch, dim) slice.

    Gate order in the packed weight matrices is input, forget, output,
    candidate. Input/forget/output gates are sigmoid, the candidate is tanh,
    so the new hidden state lies strictly inside (-1, 1).
    """
    units = wh.shape[0]
    if x.shape[-1] != wx.shape[0] or h.shape[-1] != units or c.shape[-1] != units:
        raise DimensionError(
            f"lstm_cell: x{x.shape} h{h.shape} c{c.shape} vs "
            f"wx{wx.shape} wh{wh.shape}"
        )
    gates = matmul(x, wx) + matmul(h, wh) + b
    i = sigmoid(narrow(gates, -1, 0, units))
    f = sigmoid(narrow(gates, -1, units, units))
    o = sigmoid(narrow(gates, -1, 2 * units, units))
    g = tanh(narrow(gates, -1, 3 * units, units))
    c_next = f * c + i * g
    h_next = o * tanh(c_next)
    return h_next, c_next


def run_lstm(xs: list[Tensor], ps: ParamSet, prefix: str, units: int) -> list[Tensor]:
    """Unroll one LSTM layer over a list of (batch, dim) inputs."""
    batch = xs[0].shape[0]
    wx, wh, b = ps[f"{prefix}.wx"], ps[f"{prefix}.wh"], ps[f"{prefix}.b"]
    h = Tensor(np.zeros((batch, units)))
    c = Tensor(np.zeros((batch, units)))
    hs = []
    for x in xs:
        h, c = lstm_cell(x, h, c, wx, wh, b)
        hs.append(h)
    return hs


# ---------------------------------------------------------------------------
# multi-head self-attention


def attention_params(ps: ParamSet, prefix: str, dim: int) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        ps.uniform(f"{prefix}.{name}", (dim, dim), fan_in=dim)


def multihead_attention(x: Tensor, heads: int, wq: Tensor, wk: Tensor,
                        wv: Tensor, wo: Tensor, return_weights: bool = False):
    """Scaled dot-product self-attention over positions.

    ``x`` is (L, d) or (batch, L, d); d must divide evenly into ``heads``.
    Per head the attention rows are a softmax over all positions, so each row
    sums to one; head outputs are concatenated and projected by ``wo``.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    b, length, dim = x.shape
    if dim % heads != 0:
        raise ConfigurationError(f"model dim {dim} not divisible by {heads} heads")
    dk = dim // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(b, length, heads, dk).transpose((0, 2, 1, 3))

    q = split(matmul(x, wq))
    k = split(matmul(x, wk))
    v = split(matmul(x, wv))
    scores = matmul(q, k.transpose((0, 1, 3, 2))) * (1.0 / math.sqrt(dk))
    weights = softmax(scores, axis=-1)
    mixed = matmul(weights, v)
    merged = mixed.transpose((0, 2, 1, 3)).reshape(b, length, dim)
    out = matmul(merged, wo)
    if squeeze:
        out = out.reshape(length, dim)
    if return_weights:
        return out, weights.data.copy()
    return out


def sinusoidal_encoding(length: int, dim: int) -> np.ndarray:
    """Standard sine/cosine position table, shape (length, dim)."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * (i // 2)) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table


# ---------------------------------------------------------------------------
# convolution


def conv2d(image: Tensor, filters: list[Tensor]) -> list[Tensor]:
    """Valid cross-correlation of a 2-D image with each 2-D filter.

    Output map for an (h, w) image and (fh, fw) filter has shape
    (h - fh + 1, w - fw + 1).
    """
    if image.ndim != 2:
        raise DimensionError(f"conv2d expects a 2-D image, got {image.shape}")
    h, w = image.shape
    maps = []
    for filt in filters:
        if filt.ndim != 2:
            raise DimensionError(f"conv2d filter must be 2-D, got {filt.shape}")
        fh, fw = filt.shape
        if fh > h or fw > w:
            raise DimensionError(
                f"conv2d: filter {filt.shape} larger than image {image.shape}"
            )
        x = image.reshape(1, h, w)
        rows = []
        for j in range(w - fw + 1):
            strip = narrow(x, 2, j, fw)            # (1, h, fw)
            patches = unfold_windows(strip, fh)    # (1, h-fh+1, fh*fw)
            col = matmul(patches, filt.reshape(fh * fw, 1))  # (1, h-fh+1, 1)
            rows.append(col.reshape(h - fh + 1, 1))
        maps.append(concat(rows, axis=1))
    return maps


def conv_full_width(x: Tensor, weight: Tensor, bias: Tensor, height: int) -> Tensor:
    """Batched valid convolution with filters spanning the full feature width.

    ``x`` is (batch, L, d); ``weight`` is (height*d, n_filters). Returns
    feature maps (batch, L-height+1, n_filters) after a ReLU.
    """
    patches = unfold_windows(x, height)
    return relu(matmul(patches, weight) + bias)
