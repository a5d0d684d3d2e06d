"""Closed word-level vocabulary with an exact round-trip tokenizer.

Ids are assigned in a fixed order: control tokens, the optional keypoint
marker, digits, punctuation, then sorted words. Encoding is greedy
longest-match with single spaces between matches; decoding re-inserts spaces
with attachment rules for punctuation and digit runs, so
``decode(encode(s)) == s`` for every template and answer string the tasks
produce.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

from ..errors import TokenizationError

BOS = "<bos>"
EOS = "<eos>"
SEP = "<sep>"
KPT = "<keypoint>"

DIGITS = tuple("0123456789")
PUNCT = (".", ",", "(", ")")


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        if len(set(self.tokens)) != len(self.tokens):
            raise TokenizationError("duplicate tokens in vocabulary")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        # longest-first candidates per leading character
        self._by_first: dict[str, list[str]] = {}
        for t in self.tokens:
            self._by_first.setdefault(t[0], []).append(t)
        for lst in self._by_first.values():
            lst.sort(key=len, reverse=True)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def bos(self) -> int:
        return self.index[BOS]

    @property
    def eos(self) -> int:
        return self.index[EOS]

    @property
    def sep(self) -> int:
        return self.index[SEP]

    @property
    def kpt(self) -> int | None:
        return self.index.get(KPT)

    def encode(self, s: str) -> list[int]:
        """Greedy longest-match; digits and punctuation match per character."""
        ids: list[int] = []
        i = 0
        n = len(s)
        while i < n:
            if s[i] == " " and ids:
                i += 1
                if i == n:
                    break
            cands = self._by_first.get(s[i], ())
            for t in cands:
                if s.startswith(t, i):
                    ids.append(self.index[t])
                    i += len(t)
                    break
            else:
                raise TokenizationError(f"symbol not in vocabulary: {s[i]!r} at offset {i}")
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        parts = []
        prev = None
        for i in ids:
            tok = self.tokens[i]
            if prev is not None and not self._attached(prev, tok):
                parts.append(" ")
            parts.append(tok)
            prev = tok
        return "".join(parts)

    @staticmethod
    def _attached(prev: str, tok: str) -> bool:
        if tok in (")", ",", "."):
            return True
        if prev in ("(", "."):
            return True
        if prev in DIGITS and tok in DIGITS:
            return True
        return False

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens)


def build_vocabulary(words: Iterable[str], special_token: bool) -> Vocabulary:
    """Assemble the closed vocabulary: controls, digits, punctuation, words.

    `special_token` adds the keypoint marker (position decoding via the
    regression head); without it the model spells coordinates as digit text.
    """
    tokens = [BOS, EOS, SEP]
    if special_token:
        tokens.append(KPT)
    tokens.extend(DIGITS)
    tokens.extend(PUNCT)
    seen = set(tokens)
    for w in sorted(set(words)):
        if not w or " " in w:
            raise TokenizationError(f"vocabulary words must be single tokens, got {w!r}")
        if w not in seen:
            tokens.append(w)
            seen.add(w)
    return Vocabulary(tokens)
