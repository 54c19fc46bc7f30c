"""Retrieval and answer-quality measurement.

Retrieval quality (MRR, hit@k) is scored per corpus part across four
indexing strategies: one whole-corpus index, a chunked corpus index, and
their topic-routed variants where each hierarchy leaf gets its own index and
queries go to the gold document's topic. Answer records carry an attempt
flag, a 0-3 accuracy grade, ROUGE-L, and slots for externally computed
scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .chunking import Chunk, chunk_document
from .corpus import Document, tokenize
from .errors import DataError, ParameterError
from .hierarchy import Hierarchy
from .vectorstore import VectorIndex, build_index, search

STRATEGIES = ("whole_corpus", "chunked", "topic_routed", "topic_routed_chunked")

# shipped, editable refusal markers; a matching response counts as no attempt
REFUSAL_PATTERNS = (
    "i cannot",
    "i can't",
    "i don't have access",
    "i do not have access",
    "i don't have the ability",
    "unable to answer",
    "cannot provide an exact",
)


def mrr(ranks: list[int | None]) -> float:
    """Mean reciprocal rank; a missing gold document contributes 0."""
    if not ranks:
        raise ParameterError("ranks must be non-empty")
    total = 0.0
    for r in ranks:
        if r is not None:
            if r < 1:
                raise ParameterError(f"ranks are 1-based, got {r}")
            total += 1.0 / r
    return total / len(ranks)


def hit_at_k(ranks: list[int | None], k: int) -> float:
    """Percentage of cases whose gold document ranks within the top k."""
    if not ranks:
        raise ParameterError("ranks must be non-empty")
    if k < 1:
        raise ParameterError("k must be >= 1")
    if any(r is not None and r < 1 for r in ranks):
        raise ParameterError("ranks are 1-based")
    hits = sum(1 for r in ranks if r is not None and r <= k)
    return 100.0 * hits / len(ranks)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(reference: str, candidate: str) -> float:
    """Token-level ROUGE-L F1 (beta = 1).

    Tokens come from the corpus tokenizer with stop words retained, so common
    words still count toward overlap. Returns 0 when either side is empty.
    """
    ref = tokenize(reference, remove_stopwords=False)
    cand = tokenize(candidate, remove_stopwords=False)
    if not ref or not cand:
        return 0.0
    lcs = _lcs_length(ref, cand)
    if lcs == 0:
        return 0.0
    recall = lcs / len(ref)
    precision = lcs / len(cand)
    return 2 * recall * precision / (recall + precision)


@dataclass
class EvalRecord:
    question: str
    reference: str
    response: str
    attempted: int = 1
    accuracy: int = 0
    rouge_l: float = 0.0
    external_scores: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "EvalRecord":
        return cls(**d)


def looks_like_refusal(response: str) -> bool:
    low = response.lower()
    return any(p in low for p in REFUSAL_PATTERNS)


def grade(record: EvalRecord, auto_refusal: bool = True) -> EvalRecord:
    """Validate a human-graded record and apply the refusal rule.

    With `auto_refusal`, a response matching the refusal patterns forces
    attempted=0 and accuracy=0. Accuracy outside 0-3 or a graded non-attempt
    is rejected. ROUGE-L is (re)computed from reference and response.
    """
    if record.accuracy not in (0, 1, 2, 3):
        raise DataError(f"accuracy must be 0..3, got {record.accuracy}")
    if record.attempted not in (0, 1):
        raise DataError(f"attempted must be 0 or 1, got {record.attempted}")
    attempted, accuracy = record.attempted, record.accuracy
    if auto_refusal and looks_like_refusal(record.response):
        attempted, accuracy = 0, 0
    if attempted == 0 and accuracy != 0:
        raise DataError("attempted=0 requires accuracy=0")
    record.attempted = attempted
    record.accuracy = accuracy
    record.rouge_l = rouge_l(record.reference, record.response)
    return record


def attach_external_scores(records: list[EvalRecord], sidecar_path: str | Path) -> None:
    """Merge externally computed metric scores (keyed by question) into records.

    The sidecar is JSON: {question: {metric: value, ...}, ...}. Entailment-
    style metrics are never computed here, only ingested.
    """
    payload = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    for rec in records:
        scores = payload.get(rec.question)
        if scores:
            rec.external_scores.update({str(k): float(v) for k, v in scores.items()})


@dataclass(frozen=True)
class RetrievalCase:
    question: str
    gold_doc_id: str
    source_part: str
    gold_topic_id: str | None = None


@dataclass
class StrategyReport:
    strategy: str
    mrr_per_part: dict[str, float]
    hit_at_10_per_part: dict[str, float]
    ranks: dict[str, list[int | None]] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "mrr_per_part": self.mrr_per_part,
            "hit_at_10_per_part": self.hit_at_10_per_part,
        }


def load_cases(path: str | Path) -> list[RetrievalCase]:
    """Read JSONL retrieval cases {question, gold_doc_id, source_part, gold_topic_id?}."""
    cases = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                cases.append(RetrievalCase(
                    question=rec["question"],
                    gold_doc_id=rec["gold_doc_id"],
                    source_part=rec["source_part"],
                    gold_topic_id=rec.get("gold_topic_id"),
                ))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: bad case record: {exc}") from exc
    return cases


def _whole_doc_chunks(docs: list[Document]) -> list[Chunk]:
    return [
        Chunk(doc_id=d.id, index=0, unit="words", start=0,
              end=len(d.text.split()), text=d.text)
        for d in docs
    ]


def _overlap_chunks(docs: list[Document], size: int, overlap: int) -> list[Chunk]:
    out: list[Chunk] = []
    for d in docs:
        out.extend(chunk_document(d, "words", size, overlap))
    return out


def _doc_rank(hits: list[tuple[Chunk, float]], gold_doc_id: str) -> int | None:
    """1-based rank of the gold document among distinct retrieved documents.

    Every document is represented by its best chunk, so chunked and
    unchunked strategies rank on the same scale.
    """
    seen: set[str] = set()
    for chunk, _ in hits:
        if chunk.doc_id in seen:
            continue
        seen.add(chunk.doc_id)
        if chunk.doc_id == gold_doc_id:
            return len(seen)
    return None


def run_retrieval_eval(
    cases: list[RetrievalCase],
    docs: list[Document],
    hierarchy: Hierarchy | None,
    provider,
    strategy: str,
    chunk_size: int = 300,
    chunk_overlap: int = 50,
) -> StrategyReport:
    """Score one indexing strategy over a case set.

    Builds the strategy's index(es), embeds each question, and records the
    rank of the gold document (its best chunk counts). Topic-routed
    strategies need the hierarchy; each query searches only the index of the
    topic containing its gold document, mirroring routing by known origin.
    """
    if strategy not in STRATEGIES:
        raise ParameterError(f"unknown strategy {strategy!r}")
    routed = strategy.startswith("topic_routed")
    chunked = strategy.endswith("chunked")
    if routed and hierarchy is None:
        raise ParameterError(f"strategy {strategy!r} requires a hierarchy")
    if not cases:
        raise ParameterError("cases must be non-empty")

    def make_chunks(subset: list[Document]) -> list[Chunk]:
        return _overlap_chunks(subset, chunk_size, chunk_overlap) if chunked \
            else _whole_doc_chunks(subset)

    by_id = {d.id: d for d in docs}
    ranks_per_part: dict[str, list[int | None]] = {}

    if not routed:
        index = build_index(make_chunks(docs), provider)
        for case in cases:
            vec = provider.embed([case.question])[0]
            hits = search(index, vec, top_k=len(index))
            ranks_per_part.setdefault(case.source_part, []).append(
                _doc_rank(hits, case.gold_doc_id)
            )
    else:
        leaf_of = hierarchy.leaf_of_doc()
        indexes: dict[str, VectorIndex] = {}
        for leaf in hierarchy.leaves():
            subset = [by_id[i] for i in leaf.doc_ids if i in by_id]
            if subset:
                indexes[leaf.id] = build_index(make_chunks(subset), provider, topic_id=leaf.id)
        for case in cases:
            topic = case.gold_topic_id or leaf_of.get(case.gold_doc_id)
            if topic is None or topic not in indexes:
                ranks_per_part.setdefault(case.source_part, []).append(None)
                continue
            vec = provider.embed([case.question])[0]
            hits = search(indexes[topic], vec, top_k=len(indexes[topic]))
            ranks_per_part.setdefault(case.source_part, []).append(
                _doc_rank(hits, case.gold_doc_id)
            )

    return StrategyReport(
        strategy=strategy,
        mrr_per_part={p: mrr(r) for p, r in sorted(ranks_per_part.items())},
        hit_at_10_per_part={p: hit_at_k(r, 10) for p, r in sorted(ranks_per_part.items())},
        ranks=ranks_per_part,
    )


def report_to_json(reports: list[StrategyReport], metadata: dict | None = None) -> str:
    payload = {
        "metadata": metadata or {},
        "strategies": [r.to_json_dict() for r in reports],
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def report_to_csv(reports: list[StrategyReport]) -> str:
    lines = ["strategy,part,mrr,hit_at_10"]
    for r in reports:
        for part in sorted(r.mrr_per_part):
            lines.append(f"{r.strategy},{part},{r.mrr_per_part[part]:.6f},{r.hit_at_10_per_part[part]:.2f}")
    return "\n".join(lines) + "\n"
