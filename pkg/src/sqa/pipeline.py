"""End-to-end question answering and the evaluation harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .context import RankedCandidates, _rank, rank_by_out_degree, rank_by_type_score
from .kb import KbStore, normalize_id
from .matcher import rank_relations
from .ngram import NgramIndex, ScoredCandidate, ranked_tail, retrieve_candidates, tokenize
from .tagger import extract_fragments

MODES = ("full_candidates", "top1_none", "top1_type", "top1_out_degree")
DISAMBIGUATIONS = ("none", "out_degree", "notable_type")
RECALL_KS = (1, 5, 10, 400)

_TOP1_METHOD = {"top1_none": "none", "top1_type": "notable_type", "top1_out_degree": "out_degree"}


@dataclass(frozen=True)
class PipelineMode:
    kind: str = "full_candidates"
    disambiguation: str = "none"

    def __post_init__(self):
        if self.kind not in MODES:
            raise ValueError(f"unknown mode {self.kind!r}; expected one of {', '.join(MODES)}")
        if self.disambiguation not in DISAMBIGUATIONS:
            raise ValueError(f"unknown disambiguation {self.disambiguation!r}")

    @property
    def ranking(self) -> str:
        return _TOP1_METHOD.get(self.kind, self.disambiguation)

    def __str__(self) -> str:
        if self.kind == "full_candidates":
            return f"{self.kind}/{self.disambiguation}"
        return self.kind


@dataclass(frozen=True)
class Answer:
    subject: Optional[str] = None
    relation: Optional[str] = None
    objects: FrozenSet[str] = frozenset()
    unanswered: bool = False

    @classmethod
    def none(cls) -> "Answer":
        return cls(unanswered=True)


@dataclass(frozen=True)
class Question:
    subject: str
    relation: str
    object: str
    text: str


def read_questions(lines: Iterable[str]) -> Tuple[List[Question], int]:
    """Parse ``subject<TAB>relation<TAB>object<TAB>question`` rows; returns (rows, skipped)."""
    rows, skipped = [], 0
    for line in lines:
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4 or not all(p.strip() for p in parts):
            skipped += 1
            continue
        s, r, o, text = parts
        rows.append(Question(normalize_id(s), normalize_id(r), normalize_id(o), text.strip()))
    return rows, skipped


@dataclass
class _Analysis:
    tokens: List[str]
    candidates: Dict[str, ScoredCandidate]
    reach: Dict[str, Fraction]


class QAPipeline:
    """Binds a sealed store, its index, a tagger and the matchers.

    ``tagger`` needs ``tag(tokens) -> list of 'e'/'c'``; matchers need
    ``score_many(tokens, targets) -> list of floats``.
    """

    def __init__(self, store: KbStore, index: NgramIndex, tagger, matcher, type_matcher=None):
        self.store = store
        self.index = index
        self.tagger = tagger
        self.matcher = matcher
        self.type_matcher = type_matcher

    def _analyze(self, question: str) -> _Analysis:
        tokens = tokenize(question)
        if not tokens:
            return _Analysis(tokens, {}, {})
        cands: Dict[str, ScoredCandidate] = {}
        reach: Dict[str, Fraction] = {}
        for frag in extract_fragments(self.tagger.tag(tokens), tokens):
            for c in retrieve_candidates(self.index, self.store, frag.tokens):
                cur = cands.get(c.entity)
                if cur is None or c.score > cur.score:
                    cands[c.entity] = c
            for e, s in ranked_tail(self.index, frag.tokens).items():
                reach[e] = max(reach.get(e, s), s)
        return _Analysis(tokens, cands, reach)

    def candidate_set(self, question: str) -> Set[ScoredCandidate]:
        return set(self._analyze(question).candidates.values())

    def rank_entities(self, tokens: Sequence[str], entities: Iterable[str], method: str,
                      scores: Optional[Dict[str, Fraction]] = None) -> RankedCandidates:
        if method == "out_degree":
            return rank_by_out_degree(self.store, entities)
        if method == "notable_type":
            if self.type_matcher is None:
                raise ValueError("notable-type ranking needs a type matcher")
            return rank_by_type_score(self.type_matcher, tokens, self.store, entities)
        scores = scores or {}
        return _rank({e: float(scores.get(e, 0)) for e in entities}, "none")

    def _answer(self, a: _Analysis, mode: PipelineMode) -> Answer:
        if not a.candidates:
            return Answer.none()
        scores = {e: c.score for e, c in a.candidates.items()}
        if mode.kind == "full_candidates":
            pool = set().union(*(self.store.relations_of(e) for e in a.candidates))
            if not pool:
                return Answer.none()
            relation = rank_relations(self.matcher, a.tokens, pool)[0][0]
            holders = [e for e in a.candidates if relation in self.store.relations_of(e)]
            subject = self.rank_entities(a.tokens, holders, mode.ranking, scores).top()
        else:
            subject = self.rank_entities(a.tokens, a.candidates, mode.ranking, scores).top()
            pool = self.store.relations_of(subject)
            if not pool:
                return Answer.none()
            relation = rank_relations(self.matcher, a.tokens, pool)[0][0]
        return Answer(subject, relation, frozenset(self.store.objects_of(subject, relation)))

    def answer(self, question: str, mode: PipelineMode = PipelineMode()) -> Answer:
        return self._answer(self._analyze(question), mode)

    def _ranked_list(self, a: _Analysis, mode: PipelineMode, limit: int) -> List[str]:
        """Candidate set in mode order, followed by the rest of the reachable entities."""
        if not a.candidates:
            return []
        method = mode.ranking
        scores = {e: c.score for e, c in a.candidates.items()}
        head = self.rank_entities(a.tokens, a.candidates, method, scores).entities
        rest = [e for e in a.reach if e not in a.candidates]
        if rest and len(head) < limit:
            if method == "none":
                key = {e: 0.0 for e in rest}
            else:
                key = dict(self.rank_entities(a.tokens, rest, method).items)
            rest.sort(key=lambda e: (-a.reach[e], -key[e], e))
        return (head + rest)[:limit]

    def ranked_candidates(self, question: str, mode: PipelineMode = PipelineMode(), limit: int = 400) -> List[str]:
        return self._ranked_list(self._analyze(question), mode, limit)

    def evaluate(self, questions: Sequence[Question], mode: PipelineMode = PipelineMode(),
                 skipped: int = 0) -> "EvalReport":
        n = len(questions)
        correct = same_name = unique = not_unique = rel_right = 0
        hits = dict.fromkeys(RECALL_KS, 0)
        limit = max(RECALL_KS)
        for q in questions:
            a = self._analyze(q.text)
            ans = self._answer(a, mode)
            ok = not ans.unanswered and ans.subject == q.subject and ans.relation == q.relation
            correct += ok
            if (not ok and not ans.unanswered and ans.subject != q.subject
                    and self.store.aliases(ans.subject) & self.store.aliases(q.subject)):
                same_name += 1
            if q.subject in a.candidates:
                if len(a.candidates) == 1:
                    unique += 1
                else:
                    not_unique += 1
            ranked = self._ranked_list(a, mode, limit)
            if q.subject in ranked:
                pos = ranked.index(q.subject)
                for k in RECALL_KS:
                    hits[k] += pos < k
            gold_rels = self.store.relations_of(q.subject)
            if a.tokens and gold_rels:
                rel_right += rank_relations(self.matcher, a.tokens, gold_rels)[0][0] == q.relation
        rate = (lambda x: x / n) if n else (lambda x: 0.0)
        return EvalReport(
            mode=str(mode), questions=n, skipped=skipped, correct=correct,
            accuracy=rate(correct), same_name_error=rate(same_name),
            recall={k: rate(v) for k, v in hits.items()},
            entity_unique=rate(unique), entity_not_unique=rate(not_unique),
            entity_total=rate(unique + not_unique), relation_accuracy=rate(rel_right),
        )


def answer(question: str, mode: PipelineMode, models, store: KbStore, index: NgramIndex) -> Answer:
    """Functional entry point; ``models`` is ``(tagger, matcher[, type_matcher])``."""
    return QAPipeline(store, index, *models).answer(question, mode)


def candidate_set(question: str, tagger, index: NgramIndex, store: KbStore) -> Set[ScoredCandidate]:
    return QAPipeline(store, index, tagger, None).candidate_set(question)


@dataclass
class EvalReport:
    mode: str
    questions: int
    skipped: int
    correct: int
    accuracy: float
    same_name_error: float
    recall: Dict[int, float] = field(default_factory=dict)
    entity_unique: float = 0.0
    entity_not_unique: float = 0.0
    entity_total: float = 0.0
    relation_accuracy: float = 0.0

    def to_kv(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"questions: {self.questions}",
            f"skipped: {self.skipped}",
            f"correct: {self.correct}",
            f"accuracy: {self.accuracy:.6f}",
            f"same_name_error: {self.same_name_error:.6f}",
        ]
        lines += [f"recall@{k}: {v:.6f}" for k, v in sorted(self.recall.items())]
        lines += [
            f"entity_unique: {self.entity_unique:.6f}",
            f"entity_not_unique: {self.entity_not_unique:.6f}",
            f"entity_total: {self.entity_total:.6f}",
            f"relation_accuracy: {self.relation_accuracy:.6f}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "EvalReport":
        kv = dict(line.split(": ", 1) for line in text.splitlines() if ": " in line)
        return cls(
            mode=kv["mode"], questions=int(kv["questions"]), skipped=int(kv["skipped"]),
            correct=int(kv["correct"]), accuracy=float(kv["accuracy"]),
            same_name_error=float(kv["same_name_error"]),
            recall={int(k[7:]): float(v) for k, v in kv.items() if k.startswith("recall@")},
            entity_unique=float(kv["entity_unique"]), entity_not_unique=float(kv["entity_not_unique"]),
            entity_total=float(kv["entity_total"]), relation_accuracy=float(kv["relation_accuracy"]),
        )

    def to_table(self) -> str:
        pct = lambda x: f"{100 * x:5.1f}%"  # noqa: E731
        out = [
            f"Mode: {self.mode}    questions: {self.questions}    skipped rows: {self.skipped}",
            "",
            "Entity recognition",
            f"  unique                       {pct(self.entity_unique)}",
            f"  not unique                   {pct(self.entity_not_unique)}",
            f"  total                        {pct(self.entity_total)}",
            "",
            f"Relation matching (gold entity) {pct(self.relation_accuracy)}",
            "",
            "QA                 error with same name entity   accuracy",
            f"  {self.mode:<16} {pct(self.same_name_error):>27}   {pct(self.accuracy)}",
            "",
            "Recall of top K entity candidates",
        ]
        out += [f"  K={k:<4} {pct(v)}" for k, v in sorted(self.recall.items())]
        return "\n".join(out) + "\n"


def tagger_training_set(store: KbStore, questions: Iterable[Question]) -> Tuple[List[Tuple[List[str], List[str]]], int]:
    """Distantly supervised (tokens, tags) items; returns (items, skipped)."""
    from .tagger import generate_tag_labels

    items, skipped = [], 0
    for q in questions:
        rec = store.records.get(q.subject)
        tags = generate_tag_labels(q.text, rec) if rec is not None else None
        if tags is None:
            skipped += 1
            continue
        items.append((tokenize(q.text), tags))
    return items, skipped
