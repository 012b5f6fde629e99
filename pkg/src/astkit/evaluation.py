"""Retrieval and response quality metrics, plus blueprint diversity.

Fixture mode is fully deterministic (token sets and hash-embedding cosine)
so CI can assert exact values; critic mode delegates claim extraction and
verification to a judge model when one is configured. All metrics live in
[0, 1].
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendUnavailable, TooFewBlueprints, UnknownQuery
from .gateway import ChatMessage, Gateway
from .knowledge import embed, tokenize
from .scenario import ScenarioBlueprint

_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


@dataclass(frozen=True)
class EvalConfig:
    support_threshold: float = 0.35  # min cosine for a sentence to count as supported
    relevancy_questions: int = 3


@dataclass
class EvalReport:
    mode: str
    faithfulness: float | None = None
    context_precision: float | None = None
    response_relevancy: float | None = None
    context_recall: float | None = None
    flags: list[str] = field(default_factory=list)
    per_item: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("faithfulness", "context_precision", "response_relevancy",
                     "context_recall"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "faithfulness": self.faithfulness,
            "context_precision": self.context_precision,
            "response_relevancy": self.response_relevancy,
            "context_recall": self.context_recall,
            "flags": self.flags,
            "per_item": self.per_item,
        }


@dataclass
class DiversityReport:
    use_case: str
    pairwise: list[tuple[int, int, float]]
    mean: float


def jaccard(a: str, b: str) -> float:
    """Unique-token Jaccard similarity; two empty token sets score 1.0."""
    set_a, set_b = set(tokenize(a)), set(tokenize(b))
    if not set_a and not set_b:
        return 1.0
    union = set_a | set_b
    return len(set_a & set_b) / len(union)


def diversity(blueprints: list[ScenarioBlueprint], use_case: str = "") -> DiversityReport:
    """Pairwise Jaccard of blueprint raw texts over all C(n,2) pairs."""
    if len(blueprints) < 2:
        raise TooFewBlueprints("diversity needs at least two blueprints")
    pairwise = []
    for i in range(len(blueprints)):
        for j in range(i + 1, len(blueprints)):
            pairwise.append((i, j, jaccard(blueprints[i].raw_text, blueprints[j].raw_text)))
    mean = sum(score for _i, _j, score in pairwise) / len(pairwise)
    return DiversityReport(
        use_case=use_case or (blueprints[0].use_case if blueprints else ""),
        pairwise=pairwise,
        mean=mean,
    )


@dataclass(frozen=True)
class RelevanceLabels:
    by_query: dict[str, frozenset[str]]

    @classmethod
    def from_dict(cls, data: dict[str, list[str]]) -> "RelevanceLabels":
        return cls({query: frozenset(ids) for query, ids in data.items()})

    def relevant(self, query_id: str) -> frozenset[str]:
        if query_id not in self.by_query:
            raise UnknownQuery(f"no labels for query {query_id!r}")
        return self.by_query[query_id]


def context_precision(retrieved: list[str], labels: RelevanceLabels, query_id: str) -> float:
    """|retrieved and relevant| / |retrieved|."""
    relevant = labels.relevant(query_id)
    if not retrieved:
        return 0.0
    return sum(1 for cid in retrieved if cid in relevant) / len(retrieved)


def context_recall(retrieved: list[str], labels: RelevanceLabels,
                   query_id: str) -> tuple[float, bool]:
    """|retrieved and relevant| / |relevant|; (1.0, flagged) when no labels."""
    relevant = labels.relevant(query_id)
    if not relevant:
        return 1.0, True
    hits = sum(1 for cid in set(retrieved) if cid in relevant)
    return hits / len(relevant), False


def _split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_RE.split(text.strip()) if s.strip()]


def _cosine(a: str, b: str) -> float:
    try:
        return float(np.dot(embed(a), embed(b)))
    except Exception:
        return 0.0


def faithfulness(
    response: str,
    contexts: list[str],
    mode: str = "fixture",
    gateway: Gateway | None = None,
    config: EvalConfig | None = None,
) -> float:
    """Fraction of response sentences (fixture) or claims (critic) supported
    by at least one context."""
    if not contexts:
        raise ValueError("contexts must be non-empty")
    config = config or EvalConfig()
    if mode == "fixture":
        sentences = _split_sentences(response)
        if not sentences:
            return 0.0
        supported = sum(
            1
            for sentence in sentences
            if max(_cosine(sentence, ctx) for ctx in contexts) >= config.support_threshold
        )
        return supported / len(sentences)
    if mode != "critic":
        raise ValueError(f"unknown mode {mode!r}")
    if gateway is None:
        raise BackendUnavailable("critic mode requires a gateway")
    claims_text = gateway.complete([
        ChatMessage("user",
                    "Extract the factual claims from the answer below, one per "
                    f"line, no numbering.\n\nANSWER:\n{response}")
    ])
    claims = [line.strip() for line in claims_text.splitlines() if line.strip()]
    if not claims:
        return 0.0
    context_block = "\n\n".join(contexts)
    numbered = "\n".join(f"{i}. {claim}" for i, claim in enumerate(claims, start=1))
    verdict_text = gateway.complete([
        ChatMessage("user",
                    "For each numbered claim, answer yes if it is supported by "
                    "the context and no otherwise, one verdict per line in the "
                    f"form '<number>. yes|no'.\n\nCONTEXT:\n{context_block}\n\n"
                    f"CLAIMS:\n{numbered}")
    ])
    verdicts = re.findall(r"\b(yes|no)\b", verdict_text.lower())
    if not verdicts:
        return 0.0
    supported = sum(1 for v in verdicts[: len(claims)] if v == "yes")
    return supported / len(claims)


def response_relevancy(
    query: str,
    response: str,
    mode: str = "fixture",
    gateway: Gateway | None = None,
    config: EvalConfig | None = None,
) -> float:
    """Fixture: clamped cosine(query, response). Critic: mean cosine between
    the query and questions the judge generates back from the response."""
    if not query.strip() or not response.strip():
        raise ValueError("query and response must be non-empty")
    config = config or EvalConfig()
    if mode == "fixture":
        return min(1.0, max(0.0, _cosine(query, response)))
    if mode != "critic":
        raise ValueError(f"unknown mode {mode!r}")
    if gateway is None:
        raise BackendUnavailable("critic mode requires a gateway")
    questions_text = gateway.complete([
        ChatMessage("user",
                    f"Write {config.relevancy_questions} questions that the "
                    "answer below directly answers, one per line, no "
                    f"numbering.\n\nANSWER:\n{response}")
    ])
    questions = [q.strip() for q in questions_text.splitlines() if q.strip()]
    if not questions:
        return 0.0
    scores = [min(1.0, max(0.0, _cosine(query, q))) for q in questions]
    return sum(scores) / len(scores)
