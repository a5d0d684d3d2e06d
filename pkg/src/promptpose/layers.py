"""Parameterized building blocks shared by the visual encoder, the prompt
feature extractor, and the language model: linear maps (optionally with
low-rank adapters), layer norm, multi-head attention, and pre-norm blocks.

Parameter registries are plain dicts of name -> Tensor; `params()` lists
everything for serialization, `trainable_params()` only what the optimizer
may update.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ShapeError
from .numerics import Rng, Tensor


class LoraAdapter:
    """Low-rank additive delta for one weight: W_eff = W + (alpha/r) * up @ down.

    `up` starts at zero so the adapted forward equals the base forward until
    training moves it.
    """

    def __init__(self, d_out: int, d_in: int, rank: int, alpha: float, rng: Rng, dtype):
        if rank <= 0:
            raise ConfigError(f"LoRA rank must be positive, got {rank}")
        self.rank = rank
        self.alpha = float(alpha)
        self.down = Tensor(rng.normal((rank, d_in), std=1.0 / np.sqrt(d_in), dtype=dtype),
                           requires_grad=True)
        self.up = Tensor(np.zeros((d_out, rank), dtype=dtype), requires_grad=True)

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.down": self.down, f"{prefix}.up": self.up}


class Linear:
    """Affine map y = x @ W^T + b with W stored as (d_out, d_in)."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, dtype, std: float | None = None,
                 bias: bool = True, zero_init: bool = False):
        self.d_in, self.d_out = d_in, d_out
        if zero_init:
            w = np.zeros((d_out, d_in), dtype=dtype)
        else:
            w = rng.normal((d_out, d_in), std=std if std is not None else 1.0 / np.sqrt(d_in),
                           dtype=dtype)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True) if bias else None
        self.lora: LoraAdapter | None = None

    def attach_lora(self, rank: int, alpha: float, rng: Rng) -> None:
        self.lora = LoraAdapter(self.d_out, self.d_in, rank, alpha, rng, self.w.dtype)
        # base weights are frozen while the adapter trains
        self.w.requires_grad = False
        if self.b is not None:
            self.b.requires_grad = False

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"linear expects last dim {self.d_in}, got {x.shape}")
        y = nm.linear(x, self.w, self.b)
        if self.lora is not None:
            delta = nm.linear(nm.linear(x, self.lora.down), self.lora.up)
            y = nm.add(y, nm.mul(delta, self.lora.scale))
        return y

    def params(self, prefix: str) -> dict:
        out = {f"{prefix}.w": self.w}
        if self.b is not None:
            out[f"{prefix}.b"] = self.b
        if self.lora is not None:
            out.update(self.lora.params(f"{prefix}.lora"))
        return out


class LayerNorm:
    def __init__(self, dim: int, dtype):
        self.gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return nm.layer_norm(x, self.gain, self.bias)

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.gain": self.gain, f"{prefix}.bias": self.bias}


def rotary_tables(positions: np.ndarray, head_dim: int, dtype, base: float = 10000.0):
    """cos/sin tables for rotary attention at the given integer positions."""
    half = head_dim // 2
    inv_freq = base ** (-np.arange(half, dtype=np.float64) * 2.0 / head_dim)
    ang = np.asarray(positions, dtype=np.float64)[:, None] * inv_freq[None, :]
    cos = np.concatenate([np.cos(ang), np.cos(ang)], axis=-1).astype(dtype)
    sin = np.concatenate([np.sin(ang), np.sin(ang)], axis=-1).astype(dtype)
    return Tensor(cos), Tensor(sin)


def apply_rotary(x: Tensor, cos: Tensor, sin: Tensor) -> Tensor:
    """Rotate (B, H, S, dh) queries/keys by per-position angles (S, dh)."""
    return nm.rope(x, cos, sin)


class MultiHeadAttention:
    """Scaled dot-product attention over (B, S, D) streams.

    Supports self- and cross-attention, an optional additive mask
    (broadcastable to (B, heads, Sq, Sk)), and optional rotary tables applied
    to queries and keys.
    """

    def __init__(self, dim: int, heads: int, rng: Rng, dtype):
        if dim % heads != 0:
            raise ConfigError(f"attention dim {dim} not divisible by {heads} heads")
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        # queries/keys/values come out of one fused projection
        self.wqkv = Linear(dim, 3 * dim, rng.child(0), dtype, std=1.0 / np.sqrt(dim))
        self.wo = Linear(dim, dim, rng.child(3), dtype)

    def _split(self, x: Tensor, b: int, s: int) -> Tensor:
        return nm.swapaxes(nm.reshape(x, (b, s, self.heads, self.head_dim)), 1, 2)

    def __call__(self, xq: Tensor, xkv: Tensor, mask: Tensor | None = None,
                 rotary=None, collect: dict | None = None) -> Tensor:
        b, sq = xq.shape[0], xq.shape[1]
        sk = xkv.shape[1]
        if xq is xkv:
            qkv = self.wqkv(xq)
            q = self._split(nm.slice_axis(qkv, 2, 0, self.dim), b, sq)
            k = self._split(nm.slice_axis(qkv, 2, self.dim, 2 * self.dim), b, sk)
            v = self._split(nm.slice_axis(qkv, 2, 2 * self.dim, 3 * self.dim), b, sk)
        else:
            q = self._split(nm.slice_axis(self.wqkv(xq), 2, 0, self.dim), b, sq)
            kv = self.wqkv(xkv)
            k = self._split(nm.slice_axis(kv, 2, self.dim, 2 * self.dim), b, sk)
            v = self._split(nm.slice_axis(kv, 2, 2 * self.dim, 3 * self.dim), b, sk)
        if rotary is not None:
            cos_q, sin_q, cos_k, sin_k = rotary
            q = apply_rotary(q, cos_q, sin_q)
            k = apply_rotary(k, cos_k, sin_k)
        out = nm.scaled_attention(q, k, v, 1.0 / np.sqrt(self.head_dim),
                                  mask=mask, collect=collect)
        out = nm.reshape(nm.swapaxes(out, 1, 2), (b, sq, self.dim))
        return self.wo(out)

    def params(self, prefix: str) -> dict:
        out = {}
        for name, lin in (("wqkv", self.wqkv), ("wo", self.wo)):
            out.update(lin.params(f"{prefix}.{name}"))
        return out

    def linears(self):
        return [self.wqkv, self.wo]


class Mlp:
    def __init__(self, dim: int, hidden: int, rng: Rng, dtype):
        self.fc1 = Linear(dim, hidden, rng.child(0), dtype)
        self.fc2 = Linear(hidden, dim, rng.child(1), dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(nm.gelu(self.fc1(x)))

    def params(self, prefix: str) -> dict:
        return {**self.fc1.params(f"{prefix}.fc1"), **self.fc2.params(f"{prefix}.fc2")}

    def linears(self):
        return [self.fc1, self.fc2]


class PreNormBlock:
    """Pre-norm transformer block: x + attn(ln(x)); then x + mlp(ln(x))."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: Rng, dtype):
        self.ln1 = LayerNorm(dim, dtype)
        self.attn = MultiHeadAttention(dim, heads, rng.child(0), dtype)
        self.ln2 = LayerNorm(dim, dtype)
        self.mlp = Mlp(dim, dim * mlp_ratio, rng.child(1), dtype)

    def __call__(self, x: Tensor, mask=None, rotary=None) -> Tensor:
        h = self.ln1(x)
        x = nm.add(x, self.attn(h, h, mask=mask, rotary=rotary))
        x = nm.add(x, self.mlp(self.ln2(x)))
        return x

    def params(self, prefix: str) -> dict:
        out = {}
        out.update(self.ln1.params(f"{prefix}.ln1"))
        out.update(self.attn.params(f"{prefix}.attn"))
        out.update(self.ln2.params(f"{prefix}.ln2"))
        out.update(self.mlp.params(f"{prefix}.mlp"))
        return out

    def linears(self):
        return self.attn.linears() + self.mlp.linears()
