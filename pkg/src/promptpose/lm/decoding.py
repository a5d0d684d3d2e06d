"""Keypoint position codec and greedy identify-then-detect decoding.

Positions are exchanged as text of the exact shape ``(a.aaa, b.bbb)``:
normalized to [0,1], three decimals, half-up rounding. Greedy decoding emits
an identity clause (keypoint name), a separator, then the position: either
the keypoint marker token (whose latent feeds the regression head) or the
coordinate digits themselves. A non-ItD mode skips the clause.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .. import numerics as nm
from ..config import STRATEGY_SPECIAL, STRATEGY_TEXT
from ..errors import ContractError, DomainError, GenerationOverrun, ParseError
from ..numerics import Tensor
from .model import LanguageModel
from .vocab import Vocabulary

_POSITION_RE = re.compile(r"^\((\d+\.\d{1,3}), (\d+\.\d{1,3})\)$")


@dataclass
class KeypointPosition:
    """2D keypoint position normalized to the query image, both coords in [0,1]."""

    x: float
    y: float
    clamped: bool = False

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise DomainError(f"position ({self.x}, {self.y}) outside [0,1]^2")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


def _round3(v: float) -> str:
    """Half-up rounding to three decimals, formatted from integers."""
    q = int(math.floor(v * 1000.0 + 0.5))
    return f"{q // 1000}.{q % 1000:03d}"


def format_position_text(y) -> str:
    """`(a.aaa, b.bbb)` with half-up rounding; input must lie in [0,1]^2."""
    if isinstance(y, KeypointPosition):
        vx, vy = y.x, y.y
    else:
        vx, vy = float(y[0]), float(y[1])
    if not (0.0 <= vx <= 1.0 and 0.0 <= vy <= 1.0):
        raise DomainError(f"cannot format out-of-range position ({vx}, {vy})")
    return f"({_round3(vx)}, {_round3(vy)})"


def parse_position_text(s: str) -> KeypointPosition:
    """Strict inverse of `format_position_text` (1-3 decimals accepted).

    Values drifting past [0,1] by at most 0.05 are clamped and flagged;
    anything further out is an error.
    """
    m = _POSITION_RE.match(s)
    if m is None:
        raise ParseError(f"malformed position text: {s!r}", span=s)
    vals = []
    clamped = False
    for g in m.groups():
        v = float(g)
        if v < -0.05 or v > 1.05:
            raise DomainError(f"position component {g} outside [0,1] by more than 0.05")
        if v < 0.0 or v > 1.0:
            v = min(1.0, max(0.0, v))
            clamped = True
        vals.append(v)
    return KeypointPosition(vals[0], vals[1], clamped=clamped)


@dataclass
class GenerationResult:
    semantic: str = ""
    position: KeypointPosition | None = None
    confidence: float = 0.0
    ok: bool = False
    overrun: bool = False
    echoed: bool = False
    tokens: list = field(default_factory=list)

    def text(self, vocab: Vocabulary) -> str:
        return vocab.decode(self.tokens)


class GreedyDecoder:
    """Batched greedy decoding against a frozen model (no sampling)."""

    def __init__(self, lm: LanguageModel, itd: bool = True, max_tokens: int = 64):
        self.lm = lm
        self.vocab = lm.vocab
        self.itd = itd
        self.max_tokens = max_tokens
        self.strategy = lm.cfg.strategy

    def generate_batch(self, prefix: Tensor, instr_ids: list, echo_xy: list | None = None,
                       prefix_valid: np.ndarray | None = None) -> list[GenerationResult]:
        """Decode one sequence per prefix row.

        `prefix` is (B, P, d_llm); `instr_ids` one id list per sample;
        `echo_xy` optional per-sample (x, y) echoed as the position when the
        answer carries no coordinates (semantic-only queries); `prefix_valid`
        (B, P) masks unused prefix slots.
        """
        vocab = self.vocab
        b = prefix.shape[0]
        p = prefix.shape[1]
        text_ids = [[vocab.bos] + list(ids) + [vocab.sep] for ids in instr_ids]
        stems = [len(t) for t in text_ids]
        results = [GenerationResult() for _ in range(b)]
        probs_log: list[list[float]] = [[] for _ in range(b)]
        done = np.zeros(b, dtype=bool)
        pending_kpt = np.full(b, -1, dtype=np.int64)  # text index of the marker token

        with nm.no_grad():
            for _ in range(self.max_tokens + 1):
                if done.all():
                    break
                tmax = max(len(t) for t in text_ids)
                ids = np.full((b, tmax), vocab.eos, dtype=np.int64)
                key_valid = np.zeros((b, p + tmax), dtype=bool)
                key_valid[:, :p] = True if prefix_valid is None else prefix_valid
                for k, t in enumerate(text_ids):
                    ids[k, :len(t)] = t
                    key_valid[k, p:p + len(t)] = True
                seq = nm.concat([prefix, self.lm.embed_tokens(ids)], axis=1)
                states = self.lm.transform(seq, p, key_valid)

                # harvest regression-head positions for freshly emitted markers
                ready = np.nonzero(pending_kpt >= 0)[0]
                if ready.size:
                    pos_idx = p + pending_kpt[ready]
                    u_kpt = nm.gather_rows(states, ready, pos_idx)
                    u_prev = nm.gather_rows(states, ready, pos_idx - 1)
                    y = self.lm.decode_position_special(u_kpt).data
                    y2 = self.lm.decode_position_special(u_prev).data
                    for row, k in enumerate(ready):
                        res = results[k]
                        res.position = KeypointPosition(float(y[row, 0]), float(y[row, 1]))
                        res.confidence = float(1.0 - np.abs(y[row] - y2[row]).sum() / 2.0)
                        res.ok = True
                        self._fill_semantic(res, text_ids[k], stems[k])
                        done[k] = True
                        pending_kpt[k] = -1
                if done.all():
                    break

                live = np.nonzero(~done)[0]
                last_idx = np.array([p + len(text_ids[k]) - 1 for k in live])
                last_states = nm.gather_rows(states, live, last_idx)
                logits = self.lm.logits(last_states).data
                shifted = logits - logits.max(axis=1, keepdims=True)
                pdist = np.exp(shifted)
                pdist /= pdist.sum(axis=1, keepdims=True)
                next_ids = pdist.argmax(axis=1)

                for row, k in enumerate(live):
                    tok = int(next_ids[row])
                    text_ids[k].append(tok)
                    probs_log[k].append(float(pdist[row, tok]))
                    if len(text_ids[k]) - stems[k] > self.max_tokens:
                        done[k] = True
                        results[k].overrun = True
                        continue
                    if tok == vocab.eos:
                        self._finish_on_eos(results[k], text_ids[k], stems[k], k, echo_xy)
                        done[k] = True
                    elif self.strategy == STRATEGY_SPECIAL and tok == vocab.kpt:
                        pending_kpt[k] = len(text_ids[k]) - 1
                    elif self.strategy == STRATEGY_TEXT and vocab.tokens[tok] == ")":
                        if self._try_parse_coords(results[k], text_ids[k], stems[k],
                                                  probs_log[k]):
                            done[k] = True

            for k in range(b):
                if not done[k] and not results[k].ok:
                    results[k].overrun = True
                results[k].tokens = text_ids[k][stems[k]:]
        return results

    def _fill_semantic(self, res: GenerationResult, ids: list, stem: int) -> None:
        gen = ids[stem:]
        clause = []
        for t in gen:
            if t in (self.vocab.sep, self.vocab.eos):
                break
            if self.vocab.tokens[t] == "(":
                break
            if t == self.vocab.kpt:
                break
            clause.append(t)
        res.semantic = self.vocab.decode(clause)

    def _finish_on_eos(self, res: GenerationResult, ids: list, stem: int,
                       k: int, echo_xy) -> None:
        self._fill_semantic(res, ids, stem)
        if res.position is None and echo_xy is not None and echo_xy[k] is not None:
            ex, ey = echo_xy[k]
            res.position = KeypointPosition(float(ex), float(ey))
            res.confidence = 1.0
            res.echoed = True
            res.ok = True
        elif res.position is not None:
            res.ok = True

    def _try_parse_coords(self, res: GenerationResult, ids: list, stem: int,
                          probs: list) -> bool:
        gen = ids[stem:]
        open_tok = self.vocab.index["("]
        if open_tok not in gen:
            return False
        start = len(gen) - 1 - gen[::-1].index(open_tok)
        span = gen[start:]
        try:
            pos = parse_position_text(self.vocab.decode(span))
        except (ParseError, DomainError):
            return False
        res.position = pos
        res.confidence = float(np.prod(probs[start:]))
        res.ok = True
        self._fill_semantic(res, ids, stem)
        return True


def generate_itd(lm: LanguageModel, zq, zp, instruction_ids, itd: bool = True,
                 max_tokens: int = 64, echo_xy=None):
    """Single-sequence identify-then-detect decoding.

    Returns (semantic_answer, KeypointPosition). Raises GenerationOverrun when
    the length cap is hit without a usable position.
    """
    zq_t = zq.tokens if hasattr(zq, "tokens") else zq
    parts = [zq_t]
    if zp is not None:
        parts.append(zp.tokens if hasattr(zp, "tokens") else zp)
    prefix = nm.reshape(nm.concat(parts, axis=0),
                        (1, sum(t.shape[0] for t in parts), zq_t.shape[-1]))
    dec = GreedyDecoder(lm, itd=itd, max_tokens=max_tokens)
    res = dec.generate_batch(prefix, [list(instruction_ids)],
                             echo_xy=[echo_xy] if echo_xy is not None else None)[0]
    if not res.ok:
        raise GenerationOverrun(
            f"no position after {max_tokens} tokens (emitted: {res.text(lm.vocab)!r})")
    return res.semantic, res.position
