"""Visual encoder, prompt encoder, and prompt feature extraction.

The visual encoder is a small from-scratch pre-norm ViT producing an h x w x d
feature map. Query maps are projected per position into the language model's
width; support maps are consumed by a prompt feature extractor: either two
cross-attention transformer layers driven by the encoded keypoint prompt
(trainable, sees the whole support map), or a local average-pooling readout
kept as the ablation baseline (bilinear sample blended with its clamped 3x3
neighborhood, then a linear projection; no global context on purpose).

The prompt encoder turns a normalized 2D coordinate into a feature-space
vector: sin/cos position features at d/4 geometric frequencies per coordinate
(2*pi*2^i for i = 0..d/4-1), followed by a two-layer GELU MLP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .config import ModelConfig
from .errors import ConfigError, ContractError, DomainError
from .layers import LayerNorm, Linear, Mlp, MultiHeadAttention, PreNormBlock
from .numerics import Rng, Tensor


@dataclass
class ImagePatch:
    """Square crop/resize result in [0,1]^3, ready for the encoder."""

    pixels: np.ndarray  # (H, W, 3) float in [0,1]

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] != px.shape[1]:
            raise DomainError(f"image patch must be square (H, W, 3), got {px.shape}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise DomainError("image patch values must lie in [0,1]")
        self.pixels = px

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


@dataclass
class FeatureMap:
    grid: Tensor       # (h, w, d)
    role: str          # "query" | "support"

    @property
    def h(self) -> int:
        return self.grid.shape[0]

    @property
    def w(self) -> int:
        return self.grid.shape[1]

    @property
    def d(self) -> int:
        return self.grid.shape[2]


@dataclass
class KeypointPrompt:
    x: float
    y: float

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise DomainError(f"keypoint prompt ({self.x}, {self.y}) outside [0,1]^2")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass
class PromptEmbedding:
    vector: Tensor     # (d,)


@dataclass
class PromptTokens:
    tokens: Tensor     # (n_p, d_llm)


@dataclass
class QueryVisualTokens:
    tokens: Tensor     # (h*w, d_llm)


def sincos_embedding(xy, d: int):
    """Position features: per coordinate, sin then cos at d/4 frequencies.

    Layout: [sin(f_i * x)..., cos(f_i * x)..., sin(f_i * y)..., cos(f_i * y)...]
    with f_i = 2*pi*2^i. Accepts an ndarray (pure forward) or a Tensor
    (differentiable w.r.t. the coordinate).
    """
    if d % 4 != 0:
        raise ConfigError(f"position embedding width must be divisible by 4, got {d}")
    n = d // 4
    freqs = (2.0 * np.pi) * (2.0 ** np.arange(n))
    if isinstance(xy, Tensor):
        freq_t = Tensor(freqs.astype(xy.dtype))
        parts = []
        for c in range(2):
            coord = nm.slice_axis(xy, xy.ndim - 1, c, c + 1)   # (..., 1)
            ang = nm.mul(coord, freq_t)                        # (..., n)
            parts.extend([nm.sin(ang), nm.cos(ang)])
        return nm.concat(parts, axis=-1)
    xy = np.asarray(xy, dtype=np.float64)
    ang = xy[..., :, None] * freqs                             # (..., 2, n)
    out = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)  # (..., 2, 2n)
    return out.reshape(*xy.shape[:-1], d)


class VisualEncoder:
    """Pre-norm ViT over non-overlapping patches with learned position embeddings."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        cfg.validate()
        self.cfg = cfg
        dtype = cfg.dtype
        self.grid = cfg.grid
        patch_dim = cfg.patch * cfg.patch * 3
        self.patch_proj = Linear(patch_dim, cfg.d, rng.child(0), dtype)
        self.pos_embed = Tensor(rng.child(1).normal((self.grid * self.grid, cfg.d),
                                                    std=0.02, dtype=dtype),
                                requires_grad=True)
        self.blocks = [PreNormBlock(cfg.d, cfg.enc_heads, 4, rng.child(2 + i), dtype)
                       for i in range(cfg.enc_blocks)]
        self.ln_f = LayerNorm(cfg.d, dtype)

    def _patchify(self, images: np.ndarray) -> np.ndarray:
        b, hpx, wpx, _ = images.shape
        p = self.cfg.patch
        if hpx % p or wpx % p:
            raise ConfigError(f"image size {hpx}x{wpx} not divisible by patch {p}")
        h, w = hpx // p, wpx // p
        x = images.reshape(b, h, p, w, p, 3).transpose(0, 1, 3, 2, 4, 5)
        return x.reshape(b, h * w, p * p * 3)

    def forward(self, images: np.ndarray) -> Tensor:
        """(B, H, W, 3) pixels -> (B, h*w, d) features."""
        patches = Tensor(self._patchify(images).astype(self.cfg.dtype))
        x = nm.add(self.patch_proj(patches), self.pos_embed)
        for block in self.blocks:
            x = block(x)
        return self.ln_f(x)

    def encode_image(self, img: ImagePatch, role: str = "query") -> FeatureMap:
        if img.size != self.cfg.input_size:
            raise ConfigError(
                f"encoder configured for {self.cfg.input_size}px input, got {img.size}px")
        feats = self.forward(img.pixels[None])
        grid = nm.reshape(feats, (self.grid, self.grid, self.cfg.d))
        return FeatureMap(grid=grid, role=role)

    def params(self, prefix: str = "encoder") -> dict:
        out = self.patch_proj.params(f"{prefix}.patch_proj")
        out[f"{prefix}.pos_embed"] = self.pos_embed
        for i, blk in enumerate(self.blocks):
            out.update(blk.params(f"{prefix}.block{i}"))
        out.update(self.ln_f.params(f"{prefix}.ln_f"))
        return out


class QueryProjection:
    """Per-position affine map from encoder width d into the LM width."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        self.linear = Linear(cfg.d, cfg.d_llm, rng, cfg.dtype)

    def forward(self, feats: Tensor) -> Tensor:
        return self.linear(feats)

    def project_query(self, fq: FeatureMap) -> QueryVisualTokens:
        if fq.role != "query":
            raise ContractError("support feature maps are never projected into the LM")
        flat = nm.reshape(fq.grid, (fq.h * fq.w, fq.d))
        return QueryVisualTokens(tokens=self.linear(flat))

    def params(self, prefix: str = "query_proj") -> dict:
        return self.linear.params(prefix)


class PromptEncoder:
    """Normalized keypoint coordinate -> feature-space vector (PE + 2-layer MLP)."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        dtype = cfg.dtype
        self.d = cfg.d
        self.fc1 = Linear(cfg.d, cfg.d, rng.child(0), dtype)
        self.fc2 = Linear(cfg.d, cfg.d, rng.child(1), dtype)

    def forward(self, xy) -> Tensor:
        """(B, 2) coordinates (ndarray or Tensor) -> (B, d)."""
        if isinstance(xy, Tensor):
            pe = sincos_embedding(xy, self.d)
        else:
            xy = np.asarray(xy, dtype=np.float64)
            if np.any(xy < 0.0) or np.any(xy > 1.0):
                raise DomainError("prompt coordinates must lie in [0,1]")
            pe = Tensor(sincos_embedding(xy, self.d).astype(self.fc1.w.dtype))
        return self.fc2(nm.gelu(self.fc1(pe)))

    def encode_prompt(self, prompt: KeypointPrompt) -> PromptEmbedding:
        vec = self.forward(prompt.as_array()[None])
        return PromptEmbedding(vector=nm.reshape(vec, (self.d,)))

    def params(self, prefix: str = "prompt_enc") -> dict:
        return {**self.fc1.params(f"{prefix}.fc1"), **self.fc2.params(f"{prefix}.fc2")}


class CrossAttnExtractor:
    """Two cross-attention transformer layers: prompt embedding as query,
    flattened support features as keys/values; output projected to the LM width."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        dtype = cfg.dtype
        self.cfg = cfg
        self.n_p = cfg.n_prompt_tokens
        if self.n_p > 1:
            self.query_tokens = Tensor(rng.child(9).normal((self.n_p, cfg.d), std=0.02,
                                                           dtype=dtype), requires_grad=True)
        else:
            self.query_tokens = None
        self.layers = []
        for i in range(2):
            self.layers.append({
                "ln_q": LayerNorm(cfg.d, dtype),
                "ln_kv": LayerNorm(cfg.d, dtype),
                "attn": MultiHeadAttention(cfg.d, cfg.enc_heads, rng.child(10 + 2 * i), dtype),
                "ln_mlp": LayerNorm(cfg.d, dtype),
                "mlp": Mlp(cfg.d, cfg.d * 4, rng.child(11 + 2 * i), dtype),
            })
        self.out_proj = Linear(cfg.d, cfg.d_llm, rng.child(20), dtype)

    def forward(self, fp: Tensor, fs_flat: Tensor, collect: dict | None = None) -> Tensor:
        """fp (B, d), fs_flat (B, h*w, d) -> prompt tokens (B, n_p, d_llm)."""
        if fp.shape[-1] != fs_flat.shape[-1]:
            raise ConfigError(
                f"prompt embedding dim {fp.shape[-1]} != support feature dim {fs_flat.shape[-1]}")
        b = fp.shape[0]
        x = nm.reshape(fp, (b, 1, fp.shape[-1]))
        if self.query_tokens is not None:
            x = nm.add(self.query_tokens, x)   # (B, n_p, d) via broadcast
        for i, layer in enumerate(self.layers):
            sub = {} if collect is not None else None
            h = layer["attn"](layer["ln_q"](x), layer["ln_kv"](fs_flat), collect=sub)
            if collect is not None:
                collect[f"attn{i}"] = sub["attn"]
            x = nm.add(x, h)
            x = nm.add(x, layer["mlp"](layer["ln_mlp"](x)))
        return self.out_proj(x)

    def extract(self, fp: PromptEmbedding, fs: FeatureMap,
                collect: dict | None = None) -> PromptTokens:
        if fs.role != "support":
            raise ContractError("prompt features are extracted from support maps only")
        flat = nm.reshape(fs.grid, (1, fs.h * fs.w, fs.d))
        vec = nm.reshape(fp.vector, (1, fp.vector.shape[-1]))
        out = self.forward(vec, flat, collect=collect)
        return PromptTokens(tokens=nm.reshape(out, (self.n_p, out.shape[-1])))

    def params(self, prefix: str = "extractor") -> dict:
        out = {}
        if self.query_tokens is not None:
            out[f"{prefix}.query_tokens"] = self.query_tokens
        for i, layer in enumerate(self.layers):
            out.update(layer["ln_q"].params(f"{prefix}.l{i}.ln_q"))
            out.update(layer["ln_kv"].params(f"{prefix}.l{i}.ln_kv"))
            out.update(layer["attn"].params(f"{prefix}.l{i}.attn"))
            out.update(layer["ln_mlp"].params(f"{prefix}.l{i}.ln_mlp"))
            out.update(layer["mlp"].params(f"{prefix}.l{i}.mlp"))
        out.update(self.out_proj.params(f"{prefix}.out_proj"))
        return out


def _avgpool_weights(xy: np.ndarray, h: int, w: int) -> np.ndarray:
    """Constant (B, h*w) readout weights: bilinear sample at xy blended 50/50
    with the mean of the clamped 3x3 neighborhood of the nearest cell."""
    b = xy.shape[0]
    weights = np.zeros((b, h * w), dtype=np.float64)
    gx = xy[:, 0] * w - 0.5
    gy = xy[:, 1] * h - 0.5
    x0 = np.floor(gx)
    y0 = np.floor(gy)
    fx = gx - x0
    fy = gy - y0
    for dy, dx, wgt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                        (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        cx = np.clip(x0 + dx, 0, w - 1).astype(int)
        cy = np.clip(y0 + dy, 0, h - 1).astype(int)
        np.add.at(weights, (np.arange(b), cy * w + cx), 0.5 * wgt)
    nx = np.clip(np.round(gx), 0, w - 1).astype(int)
    ny = np.clip(np.round(gy), 0, h - 1).astype(int)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            cx = np.clip(nx + dx, 0, w - 1)
            cy = np.clip(ny + dy, 0, h - 1)
            np.add.at(weights, (np.arange(b), cy * w + cx), 0.5 / 9.0)
    return weights


class AvgPoolExtractor:
    """Local readout baseline: no attention, no global context."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        self.cfg = cfg
        self.n_p = cfg.n_prompt_tokens
        self.out_proj = Linear(cfg.d, cfg.d_llm, rng, cfg.dtype)

    def forward(self, xy: np.ndarray, fs_flat: Tensor, grid: int) -> Tensor:
        """xy (B, 2) prompt coords, fs_flat (B, h*w, d) -> (B, n_p, d_llm)."""
        if fs_flat.shape[1] != grid * grid:
            raise ConfigError(f"support map has {fs_flat.shape[1]} cells, expected {grid * grid}")
        wts = _avgpool_weights(np.asarray(xy, dtype=np.float64), grid, grid)
        wts_t = Tensor(wts[:, None, :].astype(fs_flat.dtype))      # (B, 1, hw)
        pooled = nm.matmul(wts_t, fs_flat)                         # (B, 1, d)
        out = self.out_proj(pooled)
        if self.n_p > 1:
            out = nm.concat([out] * self.n_p, axis=1)
        return out

    def extract(self, prompt: KeypointPrompt, fs: FeatureMap) -> PromptTokens:
        if fs.role != "support":
            raise ContractError("prompt features are extracted from support maps only")
        flat = nm.reshape(fs.grid, (1, fs.h * fs.w, fs.d))
        out = self.forward(prompt.as_array()[None], flat, fs.h)
        return PromptTokens(tokens=nm.reshape(out, (self.n_p, out.shape[-1])))

    def params(self, prefix: str = "extractor") -> dict:
        return self.out_proj.params(f"{prefix}.out_proj")
