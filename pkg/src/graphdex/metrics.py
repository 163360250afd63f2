"""Evaluation metrics: longest-common-subsequence F1 and choice accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .chunking import DEFAULT_TOKENIZER, Tokenizer


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence of two token sequences."""
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0] * (len(b) + 1)
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge_l_f1(
    prediction: str, reference: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER
) -> float:
    """LCS-based F1 over whitespace tokens; empty either side scores 0."""
    pred_tokens = tokenizer.tokenize(prediction)
    ref_tokens = tokenizer.tokenize(reference)
    if not pred_tokens or not ref_tokens:
        return 0.0
    lcs = lcs_length(pred_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred_tokens)
    recall = lcs / len(ref_tokens)
    return 2.0 * precision * recall / (precision + recall)


def _normalize_choice(choice: str) -> str:
    return choice.strip().casefold()


def choice_accuracy(predictions: Sequence[str], golds: Sequence[str]) -> float:
    """Fraction of exact matches after whitespace strip and casefold."""
    if len(predictions) != len(golds):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(golds)} golds"
        )
    if not predictions:
        raise ValueError("need at least one prediction")
    hits = sum(
        1
        for pred, gold in zip(predictions, golds)
        if _normalize_choice(pred) == _normalize_choice(gold)
    )
    return hits / len(predictions)


@dataclass
class EvalReport:
    """Per-item scores plus their aggregate; aggregate is the plain mean."""

    metric: str
    per_item: list[float]
    aggregate: float

    @property
    def item_count(self) -> int:
        return len(self.per_item)


def evaluate_rouge(
    predictions: Sequence[str],
    references: Sequence[str],
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> EvalReport:
    if len(predictions) != len(references):
        raise ValueError("predictions and references must align")
    if not predictions:
        raise ValueError("need at least one prediction")
    scores = [
        rouge_l_f1(pred, ref, tokenizer) for pred, ref in zip(predictions, references)
    ]
    return EvalReport(
        metric="rouge_l_f1", per_item=scores, aggregate=sum(scores) / len(scores)
    )


def evaluate_accuracy(predictions: Sequence[str], golds: Sequence[str]) -> EvalReport:
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds must align")
    if not predictions:
        raise ValueError("need at least one prediction")
    per_item = [
        1.0 if _normalize_choice(pred) == _normalize_choice(gold) else 0.0
        for pred, gold in zip(predictions, golds)
    ]
    return EvalReport(
        metric="accuracy", per_item=per_item, aggregate=sum(per_item) / len(per_item)
    )
