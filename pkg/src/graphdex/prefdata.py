"""Preference-pair synthesis from retrieval contexts.

Each QA pair yields one record per selected context size. The chosen
response carries generated reasoning ahead of the answer; the rejected
response is the bare answer, so pairs differ only in the presence of the
reasoning chain.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .backends import BackendError, Embedder, Generator, load_template, render_template
from .config import BuildConfig
from .graph import HierarchicalIndex
from .retrieval import RetrievalResult, rank

logger = logging.getLogger(__name__)

REASON_MARKER = "###Reason: "
ANSWER_MARKER = "###Answer: "


@dataclass
class QAPair:
    id: str
    question: str
    answer: str
    options: list[str] | None = None


@dataclass
class PreferenceRecord:
    query: str
    context: list[str]
    chosen: str
    rejected: str
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "query": self.query,
            "context": self.context,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "meta": self.meta,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PreferenceRecord":
        return cls(
            query=data["query"],
            context=list(data["context"]),
            chosen=data["chosen"],
            rejected=data["rejected"],
            meta=dict(data.get("meta", {})),
        )


def build_contexts(result: RetrievalResult, index: HierarchicalIndex) -> list[list[str]]:
    """Nested prefix contexts: element j holds the texts of the top j+1 hits."""
    if not result.entries:
        raise ValueError("retrieval result is empty")
    texts = [index.chunks[entry.chunk_id].text for entry in result.entries]
    return [texts[: j + 1] for j in range(len(texts))]


def make_record(
    query: str,
    context: Sequence[str],
    answer: str,
    reasoning: str,
    source_qa_id: str = "",
) -> PreferenceRecord:
    """One preference pair: reasoned answer (chosen) vs bare answer (rejected)."""
    if not answer:
        raise ValueError("answer must be non-empty")
    chosen = f"{REASON_MARKER}{reasoning}\n{ANSWER_MARKER}{answer}"
    return PreferenceRecord(
        query=query,
        context=list(context),
        chosen=chosen,
        rejected=answer,
        meta={"context_size": len(context), "source_qa_id": source_qa_id},
    )


def parse_chosen(chosen: str) -> tuple[str, str]:
    """Splits a chosen response back into (reasoning, answer)."""
    if not chosen.startswith(REASON_MARKER):
        raise ValueError("chosen response does not start with the reason marker")
    separator = "\n" + ANSWER_MARKER
    cut = chosen.rfind(separator)
    if cut < 0:
        raise ValueError("chosen response has no answer marker")
    reasoning = chosen[len(REASON_MARKER) : cut]
    answer = chosen[cut + len(separator) :]
    return reasoning, answer


def _render_prompt(template: str, question: str, context: Sequence[str], answer: str) -> str:
    numbered = "\n".join(f"{i + 1}. {text}" for i, text in enumerate(context))
    if not numbered:
        numbered = "(no passages retrieved)"
    return render_template(template, question=question, context=numbered, answer=answer)


def synthesize_dataset(
    qa_pairs: Sequence[QAPair],
    index: HierarchicalIndex,
    config: BuildConfig,
    reasoning_backends: Sequence[Generator],
    embedder: Embedder,
    *,
    context_sizes: Sequence[int] | None = None,
    include_empty_context: bool = False,
    template: str | None = None,
    on_skip: Callable[[QAPair, int, Exception], None] | None = None,
) -> list[PreferenceRecord]:
    """Builds preference records for every QA pair and context size.

    Context sizes default to {1, 2, 4, top_k}; sizes beyond the retrieved
    depth clip to it, and duplicate effective sizes collapse. Reasoning
    generation rotates round-robin over ``reasoning_backends`` per record;
    a failing backend skips that record, counts it, and the run continues.
    """
    if not reasoning_backends:
        raise ValueError("need at least one reasoning backend")
    sizes = sorted(
        {int(s) for s in (context_sizes or (1, 2, 4, config.top_k_retrieval))}
    )
    if any(s < 0 for s in sizes):
        raise ValueError("context sizes must be non-negative")
    if 0 in sizes and not include_empty_context:
        raise ValueError("context size 0 requires include_empty_context")
    if include_empty_context and 0 not in sizes:
        sizes = [0] + sizes
    if template is None:
        template = load_template("cot_reason.txt")
    records: list[PreferenceRecord] = []
    skipped = 0
    record_counter = 0
    for qa in qa_pairs:
        result = rank(index, qa.question, config.top_k_retrieval, embedder)
        contexts = build_contexts(result, index)
        used_depths: set[int] = set()
        for size in sizes:
            depth = min(size, len(contexts))
            if depth in used_depths:
                continue
            used_depths.add(depth)
            context = [] if depth == 0 else contexts[depth - 1]
            prompt = _render_prompt(template, qa.question, context, qa.answer)
            backend = reasoning_backends[record_counter % len(reasoning_backends)]
            record_counter += 1
            try:
                reasoning = backend.complete(prompt, config.small)
            except BackendError as exc:
                skipped += 1
                logger.warning("skipping qa=%s size=%d: %s", qa.id, size, exc)
                if on_skip is not None:
                    on_skip(qa, size, exc)
                continue
            records.append(
                make_record(qa.question, context, qa.answer, reasoning, qa.id)
            )
    logger.info("synthesized %d records (%d skipped)", len(records), skipped)
    return records


def load_qa_pairs(path: str | Path) -> list[QAPair]:
    """Reads line-delimited JSON QA pairs with fields id/question/answer."""
    pairs: list[QAPair] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                pairs.append(
                    QAPair(
                        id=str(data["id"]),
                        question=data["question"],
                        answer=data["answer"],
                        options=data.get("options"),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad QA record: {exc}") from exc
    return pairs


def write_records(records: Sequence[PreferenceRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_json_dict(), ensure_ascii=False))
            handle.write("\n")


def load_records(path: str | Path) -> list[PreferenceRecord]:
    records: list[PreferenceRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(PreferenceRecord.from_json_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad record: {exc}") from exc
    return records
