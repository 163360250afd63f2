"""Text splitting and the chunk model shared by every graph layer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, runtime_checkable


class ChunkKind(str, Enum):
    LEAF = "leaf"
    SUMMARY = "summary"


@runtime_checkable
class Tokenizer(Protocol):
    """Anything that can turn text into a token list.

    The engine only needs ``tokenize`` and ``count``; a model-served
    tokenizer can be plugged in by implementing the same two methods.
    """

    def tokenize(self, text: str) -> list[str]: ...

    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    """Splits on runs of Unicode whitespace. Deterministic, dependency-free."""

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def count(self, text: str) -> int:
        return len(text.split())


DEFAULT_TOKENIZER = WhitespaceTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> int:
    return tokenizer.count(text)


@dataclass
class DocumentChunk:
    """A leaf or summary text unit; the node payload of every graph layer.

    ``source_ids`` lists the chunks a summary was written from. Leaves are
    original text and therefore carry no sources.
    """

    id: int
    text: str
    token_count: int
    kind: ChunkKind
    layer_index: int
    source_ids: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError("chunk id must be non-negative")
        if self.token_count < 0:
            raise ValueError("token_count must be non-negative")
        if self.layer_index < 0:
            raise ValueError("layer_index must be non-negative")
        if self.kind == ChunkKind.LEAF and self.source_ids:
            raise ValueError("leaf chunks cannot have source_ids")
        if self.kind == ChunkKind.SUMMARY and not self.source_ids:
            raise ValueError("summary chunks must have source_ids")


# closing quotes/brackets that may trail a sentence-final mark
_CLOSERS = "\"'”’»)]}"
_SENTENCE_END = ".!?…"


def _ends_sentence(token: str) -> bool:
    stripped = token.rstrip(_CLOSERS)
    return bool(stripped) and stripped[-1] in _SENTENCE_END


def _window_break(tokens: list[str], pos: int, target_len: int) -> int:
    """Tokens to take from ``pos`` for one full window.

    Prefers a sentence-final token inside the last 20% of the window; falls
    back to the full window when none is there.
    """
    earliest = max(0, math.ceil(target_len * 0.8) - 1)
    for j in range(target_len - 1, earliest - 1, -1):
        if _ends_sentence(tokens[pos + j]):
            return j + 1
    return target_len


def split_text(
    text: str,
    target_len: int,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    start_id: int = 0,
    layer_index: int = 0,
) -> list[DocumentChunk]:
    """Greedy left-to-right split into chunks of at most ``target_len`` tokens.

    Chunk ids are consecutive starting at ``start_id``. Joining the chunk
    texts with single spaces reproduces the input up to whitespace
    normalization.
    """
    if target_len < 1:
        raise ValueError("target_len must be at least 1")
    tokens = tokenizer.tokenize(text)
    chunks: list[DocumentChunk] = []
    pos = 0
    while pos < len(tokens):
        remaining = len(tokens) - pos
        take = remaining if remaining <= target_len else _window_break(tokens, pos, target_len)
        body = " ".join(tokens[pos : pos + take])
        chunks.append(
            DocumentChunk(
                id=start_id + len(chunks),
                text=body,
                token_count=take,
                kind=ChunkKind.LEAF,
                layer_index=layer_index,
            )
        )
        pos += take
    return chunks
