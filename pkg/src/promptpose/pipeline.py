"""Full model assembly: visual encoder + prompt pathway + language model.

The batched prefix layout is uniform: [query visual tokens | prompt slot].
Samples without a support prompt leave the slot as masked zeros, which the
attention mask removes exactly, so batched outputs match the per-sample
concatenation the public fusion op performs.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .config import EXTRACTOR_AVGPOOL, ModelConfig
from .encoders import (
    AvgPoolExtractor,
    CrossAttnExtractor,
    PromptEncoder,
    QueryProjection,
    VisualEncoder,
)
from .errors import CheckpointError
from .lm.model import LanguageModel
from .lm.vocab import Vocabulary, build_vocabulary
from .numerics import Rng, Tensor, derive_seed
from .tasks.records import TaskSample
from .tasks.samples import word_inventory


def default_vocabulary(strategy: str) -> Vocabulary:
    from .config import STRATEGY_SPECIAL
    return build_vocabulary(word_inventory(), special_token=(strategy == STRATEGY_SPECIAL))


class KeypointModel:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        root = Rng(derive_seed(seed, 0xA11))
        self.encoder = VisualEncoder(cfg, root.child(1))
        self.qproj = QueryProjection(cfg, root.child(2))
        self.pencoder = PromptEncoder(cfg, root.child(3))
        if cfg.extractor == EXTRACTOR_AVGPOOL:
            self.extractor = AvgPoolExtractor(cfg, root.child(4))
        else:
            self.extractor = CrossAttnExtractor(cfg, root.child(4))
        self.lm = LanguageModel(cfg, vocab, root.child(5))
        if cfg.lora:
            self.lm.enable_lora(root.child(6))
        if not cfg.encoder_trainable:
            for t in self.encoder.params().values():
                t.requires_grad = False

    @property
    def n_query_tokens(self) -> int:
        return self.cfg.grid * self.cfg.grid

    @property
    def prefix_len(self) -> int:
        return self.n_query_tokens + self.cfg.n_prompt_tokens

    def params(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.encoder.params("encoder"))
        out.update(self.qproj.params("query_proj"))
        out.update(self.pencoder.params("prompt_enc"))
        out.update(self.extractor.params("extractor"))
        out.update(self.lm.params("lm"))
        return out

    def trainable_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if v.requires_grad}

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params().items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.params()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise CheckpointError(
                f"parameter names differ from checkpoint (missing {missing[:4]}, "
                f"unexpected {extra[:4]})")
        for name, tensor in params.items():
            arr = arrays[name]
            if tuple(arr.shape) != tuple(tensor.shape):
                raise CheckpointError(
                    f"shape mismatch for {name}: checkpoint {tuple(arr.shape)} vs "
                    f"model {tuple(tensor.shape)}")
            tensor.data = arr.astype(tensor.dtype, copy=True)

    # -- batched prefix assembly ----------------------------------------------
    def build_prefix(self, samples: list[TaskSample]):
        """-> (prefix (B, P, d_llm), prefix_valid (B, P) bool)."""
        cfg = self.cfg
        b = len(samples)
        sup_idx = [i for i, s in enumerate(samples) if s.support is not None]
        n_p = cfg.n_prompt_tokens

        # one encoder pass over query and support images together
        pixels = [s.query.pixels for s in samples]
        pixels.extend(samples[i].support[0].pixels for i in sup_idx)
        feats = self.encoder.forward(np.stack(pixels))               # (B+M, hw, d)
        fq = nm.slice_axis(feats, 0, 0, b)
        zq = self.qproj.forward(fq)                                  # (B, hw, d_llm)

        if sup_idx:
            fs = nm.slice_axis(feats, 0, b, b + len(sup_idx))        # (M, hw, d)
            xy = np.array([[samples[i].support[1].x, samples[i].support[1].y]
                           for i in sup_idx], dtype=np.float64)
            if isinstance(self.extractor, AvgPoolExtractor):
                zp_all = self.extractor.forward(xy, fs, cfg.grid)    # (M, n_p, d_llm)
            else:
                fp = self.pencoder.forward(xy)                       # (M, d)
                zp_all = self.extractor.forward(fp, fs)
            row_of = {i: j for j, i in enumerate(sup_idx)}
            zeros = Tensor(np.zeros((n_p, cfg.d_llm), dtype=cfg.dtype))
            rows = []
            for i in range(b):
                if i in row_of:
                    j = row_of[i]
                    rows.append(nm.reshape(nm.slice_axis(zp_all, 0, j, j + 1),
                                           (n_p, cfg.d_llm)))
                else:
                    rows.append(zeros)
            zp = nm.stack(rows, axis=0)                              # (B, n_p, d_llm)
        else:
            zp = Tensor(np.zeros((b, n_p, cfg.d_llm), dtype=cfg.dtype))

        prefix = nm.concat([zq, zp], axis=1)
        prefix_valid = np.ones((b, self.prefix_len), dtype=bool)
        for i, s in enumerate(samples):
            if s.support is None:
                prefix_valid[i, self.n_query_tokens:] = False
        return prefix, prefix_valid
