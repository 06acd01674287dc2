"""Token/id vocabulary shared by generators, ensembles, and file formats."""

from __future__ import annotations

from .text_metrics import TokenSequence

PAD = 0
BOS = 1
EOS = 2
UNK = 3

RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocab:
    """Bijective id<->token mapping with fixed reserved ids 0..3.

    Ids 0..3 are always <pad>, <bos>, <eos>, <unk>; content tokens get
    the remaining ids in the order given to the constructor.
    """

    __slots__ = ("tokens", "_index")

    def __init__(self, tokens):
        tokens = tuple(tokens)
        if len(tokens) < 5:
            raise ValueError(f"vocab needs at least 5 tokens, got {len(tokens)}")
        if tokens[:4] != RESERVED_TOKENS:
            raise ValueError(f"vocab must start with {RESERVED_TOKENS}, got {tokens[:4]}")
        index = {tok: i for i, tok in enumerate(tokens)}
        if len(index) != len(tokens):
            raise ValueError("vocab tokens must be unique")
        self.tokens = tokens
        self._index = index

    @classmethod
    def from_content(cls, content_tokens) -> "Vocab":
        """Vocab over the sorted unique content tokens (deterministic ids)."""
        uniq = sorted(set(content_tokens) - set(RESERVED_TOKENS))
        return cls(RESERVED_TOKENS + tuple(uniq))

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __hash__(self) -> int:
        return hash(self.tokens)

    def id(self, token: str) -> int:
        """Id of a token, UNK for out-of-vocabulary tokens."""
        return self._index.get(token, UNK)

    def token(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, tokens: TokenSequence) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids) -> TokenSequence:
        return [self.tokens[i] for i in ids]
