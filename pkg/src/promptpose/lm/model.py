"""Decoder-only transformer over concatenated multimodal tokens.

Sequence layout is [query visual tokens, prompt tokens, text tokens]. The
visual/prompt prefix attends bidirectionally within itself and is visible to
every text position; text attends causally within itself. Rotary position
rotation is applied to text positions only (the visual tokens carry the ViT's
own learned spatial embedding). The output head is weight-tied to the token
embedding. Low-rank adapters can be attached to every block linear, freezing
the base weights.
"""

from __future__ import annotations

import numpy as np

from .. import numerics as nm
from ..config import STRATEGY_SPECIAL, ModelConfig
from ..errors import ConfigError, ContractError
from ..layers import Linear, LayerNorm, PreNormBlock, rotary_tables
from ..numerics import Rng, Tensor
from .vocab import Vocabulary


def build_fusion_mask(prefix_len: int, text_len: int, dtype,
                      key_valid: np.ndarray | None = None) -> Tensor:
    """Additive attention mask for the [prefix | text] layout.

    Key j is visible to query i iff j is in the prefix, or j <= i within the
    text segment. `key_valid` (B, S) additionally masks padded or absent key
    slots.
    """
    s = prefix_len + text_len
    i = np.arange(s)[:, None]
    j = np.arange(s)[None, :]
    allowed = (j < prefix_len) | (j <= i)
    allowed &= ~((i < prefix_len) & (j >= prefix_len))
    mask = np.where(allowed, 0.0, -np.inf)[None, None]            # (1, 1, S, S)
    if key_valid is not None:
        kv = np.where(key_valid[:, None, None, :], 0.0, -np.inf)  # (B, 1, 1, S)
        mask = mask + kv
    return Tensor(mask.astype(dtype))


def text_rotary(prefix_len: int, text_len: int, head_dim: int, dtype):
    """Rotary tables: identity rotation on the prefix, 0..T-1 over text."""
    positions = np.concatenate([np.zeros(prefix_len, dtype=np.int64),
                                np.arange(text_len, dtype=np.int64)])
    cos, sin = rotary_tables(positions, head_dim, dtype)
    return cos, sin, cos, sin


class PositionHead:
    """Two-layer head mapping a latent to a keypoint position in [0,1]^2."""

    def __init__(self, cfg: ModelConfig, rng: Rng, zero_init: bool = False):
        dtype = cfg.dtype
        self.fc1 = Linear(cfg.d_llm, cfg.d_llm, rng.child(0), dtype, zero_init=zero_init)
        self.fc2 = Linear(cfg.d_llm, 2, rng.child(1), dtype, zero_init=zero_init)
        if not zero_init:
            # start near the image center: small final-layer weights
            self.fc2.w.data *= 0.1

    def __call__(self, u: Tensor) -> Tensor:
        return nm.sigmoid(self.fc2(nm.gelu(self.fc1(u))))

    def params(self, prefix: str = "pos_head") -> dict:
        return {**self.fc1.params(f"{prefix}.fc1"), **self.fc2.params(f"{prefix}.fc2")}


class LanguageModel:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, rng: Rng):
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        dtype = cfg.dtype
        self.embed = Tensor(rng.child(0).normal((len(vocab), cfg.d_llm), std=0.02, dtype=dtype),
                            requires_grad=True)
        if vocab.kpt is not None:
            # the keypoint marker starts at the mean of all other embeddings
            others = np.delete(self.embed.data, vocab.kpt, axis=0)
            self.embed.data[vocab.kpt] = others.mean(axis=0)
        self.blocks = [PreNormBlock(cfg.d_llm, cfg.lm_heads, 4, rng.child(1 + i), dtype)
                       for i in range(cfg.lm_blocks)]
        self.ln_f = LayerNorm(cfg.d_llm, dtype)
        self.pos_head = PositionHead(cfg, rng.child(90)) if cfg.strategy == STRATEGY_SPECIAL else None
        self.head_dim = cfg.d_llm // cfg.lm_heads
        self.lora_enabled = False

    # -- adapters -------------------------------------------------------------
    def enable_lora(self, rng: Rng) -> None:
        """Attach low-rank adapters to every block linear; freeze base weights."""
        cfg = self.cfg
        if cfg.lora_rank <= 0:
            raise ConfigError(f"LoRA rank must be positive, got {cfg.lora_rank}")
        for bi, block in enumerate(self.blocks):
            for li, lin in enumerate(block.linears()):
                lin.attach_lora(cfg.lora_rank, cfg.lora_alpha, rng.child(bi, li))
        self.embed.requires_grad = False
        for t in self.ln_f.params("x").values():
            t.requires_grad = False
        for block in self.blocks:
            for name, t in block.params("x").items():
                if ".lora." not in name:
                    t.requires_grad = False
        self.lora_enabled = True

    def base_weight_bytes(self) -> bytes:
        """Concatenated bytes of all non-adapter LM weights (frozen-base audit).

        The position head is excluded: like the encoders it is fully
        fine-tuned even when the LM itself trains through adapters.
        """
        params = self.params()
        parts = []
        for name in sorted(params):
            if ".lora." in name or ".pos_head." in name:
                continue
            parts.append(params[name].data.tobytes())
        return b"".join(parts)

    # -- forward --------------------------------------------------------------
    def transform(self, seq: Tensor, prefix_len: int,
                  key_valid: np.ndarray | None = None) -> Tensor:
        """Run the block stack over a fused (B, S, d_llm) sequence."""
        b, s, _ = seq.shape
        text_len = s - prefix_len
        mask = build_fusion_mask(prefix_len, text_len, self.cfg.dtype, key_valid)
        rotary = text_rotary(prefix_len, text_len, self.head_dim, self.cfg.dtype)
        x = seq
        for block in self.blocks:
            x = block(x, mask=mask, rotary=rotary)
        return self.ln_f(x)

    def embed_tokens(self, ids: np.ndarray) -> Tensor:
        return nm.embedding(self.embed, ids)

    def logits(self, states: Tensor) -> Tensor:
        """Weight-tied projection onto the vocabulary."""
        return nm.matmul(states, nm.swapaxes(self.embed, 0, 1))

    def fuse_and_transform(self, zq, zp, token_ids) -> Tensor:
        """Single-sequence fusion: [z_q, z_p?, t] -> latent states (S, d_llm).

        `zq` is (Nq, d_llm) (or QueryVisualTokens), `zp` is (Np, d_llm) / None
        for textual prompting, `token_ids` a 1-D id sequence.
        """
        zq_t = zq.tokens if hasattr(zq, "tokens") else zq
        parts = [nm.reshape(zq_t, (1,) + tuple(zq_t.shape))]
        prefix_len = zq_t.shape[0]
        if zp is not None:
            zp_t = zp.tokens if hasattr(zp, "tokens") else zp
            if zp_t.shape[-1] != zq_t.shape[-1]:
                raise ConfigError(
                    f"prompt token width {zp_t.shape[-1]} != visual width {zq_t.shape[-1]}")
            parts.append(nm.reshape(zp_t, (1,) + tuple(zp_t.shape)))
            prefix_len += zp_t.shape[0]
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.size:
            parts.append(self.embed_tokens(ids[None]))
        seq = nm.concat(parts, axis=1)
        states = self.transform(seq, prefix_len)
        return nm.reshape(states, (seq.shape[1], self.cfg.d_llm))

    def next_token(self, states: Tensor) -> Tensor:
        """Distribution over the vocabulary from the last latent state."""
        if states.shape[0] == 0:
            raise ContractError("next_token requires a nonempty state sequence")
        last = nm.slice_axis(states, 0, states.shape[0] - 1, states.shape[0])
        return nm.reshape(nm.softmax(self.logits(last), axis=-1), (len(self.vocab),))

    def decode_position_special(self, u_kpt: Tensor) -> Tensor:
        if self.pos_head is None:
            raise ContractError("position head only exists under the special-token strategy")
        return self.pos_head(u_kpt)

    # -- registry ---------------------------------------------------------------
    def params(self, prefix: str = "lm") -> dict:
        out = {f"{prefix}.embed": self.embed}
        for i, block in enumerate(self.blocks):
            out.update(block.params(f"{prefix}.block{i}"))
        out.update(self.ln_f.params(f"{prefix}.ln_f"))
        if self.pos_head is not None:
            out.update(self.pos_head.params(f"{prefix}.pos_head"))
        return out
