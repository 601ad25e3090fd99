"""Inverted n-gram index over entity aliases and candidate scoring.

A fragment of question text is first matched exactly against aliases.  When
nothing matches, its maximal 1-3 grams are looked up and every hit is
weighted by ``n / (alias_len * n_entities_for_gram)``.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .kb import KbStore, normalize_alias

MAX_N = 3
INDEX_HEADER = "NGRAMIDX v1"

Ngram = Tuple[str, ...]


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, strip edge punctuation from each token."""
    tokens = []
    for raw in normalize_alias(text).split(" "):
        tok = raw.strip(string.punctuation)
        if tok:
            tokens.append(tok)
    return tokens


def contiguous_ngrams(tokens: Sequence[str], max_n: int = MAX_N) -> List[Ngram]:
    """All contiguous n-grams, n = 1..max_n, in (n, position) order."""
    return [tuple(tokens[i:i + n]) for n in range(1, max_n + 1) for i in range(len(tokens) - n + 1)]


def extract_ngrams(fragment: Sequence[str]) -> Set[Ngram]:
    """Maximal n-grams of a fragment.

    An n-gram is dropped when its token set is contained in the token set of
    another n-gram.  N-grams with identical token sets are represented once,
    by the longest and then leftmost of them, so the survivors form an
    antichain under token-set inclusion.
    """
    if not fragment:
        raise ValueError("empty fragment")
    by_set: Dict[frozenset, Ngram] = {}
    for gram in sorted(contiguous_ngrams(fragment), key=len, reverse=True):
        by_set.setdefault(frozenset(gram), gram)
    sets = list(by_set)
    return {by_set[s] for s in sets if not any(s < other for other in sets)}


def contains(tokens: Sequence[str], gram: Sequence[str]) -> bool:
    n = len(gram)
    return any(tuple(tokens[i:i + n]) == tuple(gram) for i in range(len(tokens) - n + 1))


def score_candidate(gram_len: int, alias_len: int, retrieved: int) -> Fraction:
    if alias_len == 0 or retrieved == 0:
        raise ZeroDivisionError("division by zero")
    return Fraction(gram_len, alias_len * retrieved)


@dataclass(frozen=True)
class ScoredCandidate:
    entity: str
    score: Fraction
    matched_gram: Ngram
    matched_alias: str


class NgramIndex:
    def __init__(self) -> None:
        self.postings: Dict[str, Set[str]] = {}
        # entity -> token tuples of its aliases; L_i is taken from these
        self.alias_tokens: Dict[str, Set[Ngram]] = {}
        self._exact: Dict[Ngram, Set[str]] = {}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NgramIndex):
            return NotImplemented
        return self.postings == other.postings and self.alias_tokens == other.alias_tokens

    def add_alias(self, entity: str, alias: str) -> None:
        tokens = tuple(tokenize(alias))
        if not tokens:
            return
        self.alias_tokens.setdefault(entity, set()).add(tokens)
        self._exact.setdefault(tokens, set()).add(entity)
        for gram in contiguous_ngrams(tokens):
            self.postings.setdefault(" ".join(gram), set()).add(entity)

    def lookup(self, gram: Sequence[str]) -> Set[str]:
        return self.postings.get(" ".join(gram), set())

    def exact(self, fragment: Sequence[str]) -> Set[str]:
        return set(self._exact.get(tuple(fragment), ()))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(INDEX_HEADER + "\n")
            for gram in sorted(self.postings):
                for e in sorted(self.postings[gram]):
                    f.write(f"{gram}\t{e}\n")

    @classmethod
    def load(cls, path, store: KbStore) -> "NgramIndex":
        """Reload a snapshot; alias lengths are recovered from ``store``."""
        index = cls()
        with open(path, encoding="utf-8") as f:
            header = f.readline().rstrip("\n")
            if header != INDEX_HEADER:
                raise ValueError(f"{path}: not an n-gram index snapshot ({header!r})")
            for lineno, line in enumerate(f, 2):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}: line {lineno}: expected gram<TAB>entity")
                index.postings.setdefault(parts[0], set()).add(parts[1])
        for e in sorted({e for ents in index.postings.values() for e in ents}):
            for alias in store.aliases(e):
                tokens = tuple(tokenize(alias))
                if tokens:
                    index.alias_tokens.setdefault(e, set()).add(tokens)
                    index._exact.setdefault(tokens, set()).add(e)
        return index


def build_index(store: KbStore) -> NgramIndex:
    index = NgramIndex()
    for e, rec in store.records.items():
        for alias in rec.aliases:
            index.add_alias(e, alias)
    return index


def exact_alias_match(index: NgramIndex, store: Optional[KbStore], fragment: Sequence[str]) -> Set[str]:
    return index.exact(fragment)


def _score_grams(index: NgramIndex, grams) -> Dict[str, ScoredCandidate]:
    best: Dict[str, ScoredCandidate] = {}
    for gram in sorted(grams):
        hits = index.lookup(gram)
        if not hits:
            continue
        c = len(hits)
        for e in hits:
            for alias in sorted(index.alias_tokens.get(e, ())):
                if not contains(alias, gram):
                    continue
                score = score_candidate(len(gram), len(alias), c)
                cur = best.get(e)
                if cur is None or score > cur.score:
                    best[e] = ScoredCandidate(e, score, gram, " ".join(alias))
    return best


def score_all(index: NgramIndex, fragment: Sequence[str]) -> Dict[str, ScoredCandidate]:
    """Best n-gram score for every entity reachable from the fragment.

    Only the maximal n-grams are used, unless none of them hits the index;
    then every contiguous 1-3 gram of the fragment is tried.
    """
    maximal = extract_ngrams(fragment)
    best = _score_grams(index, maximal)
    if not best:
        best = _score_grams(index, set(contiguous_ngrams(fragment)) - maximal)
    return best


def retrieve_candidates(index: NgramIndex, store: Optional[KbStore], fragment: Sequence[str]) -> Set[ScoredCandidate]:
    """Exact alias matches if any, else the n-gram hits tied at the top score."""
    if not fragment:
        raise ValueError("empty fragment")
    fragment = tuple(fragment)
    exact = index.exact(fragment)
    if exact:
        return {ScoredCandidate(e, Fraction(1), fragment, " ".join(fragment)) for e in exact}
    best = score_all(index, fragment)
    if not best:
        return set()
    top = max(c.score for c in best.values())
    return {c for c in best.values() if c.score == top}


def ranked_tail(index: NgramIndex, fragment: Sequence[str]) -> Dict[str, Fraction]:
    """Score of every entity the fragment reaches, used for long candidate lists.

    Exact alias matches score at least 1.
    """
    fragment = tuple(fragment)
    scores = {e: c.score for e, c in score_all(index, fragment).items()}
    for e in index.exact(fragment):
        scores[e] = max(scores.get(e, Fraction(0)), Fraction(1))
    return scores

