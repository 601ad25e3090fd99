"""Re-ranking of same-name entity candidates by out-degree or notable type."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .kb import KbStore
from .matcher import MatchModel, MatchPair, train_matcher, type_tokens
from .ngram import tokenize


@dataclass(frozen=True)
class RankedCandidates:
    items: Tuple[Tuple[str, float], ...]
    method: str

    @property
    def entities(self) -> List[str]:
        return [e for e, _ in self.items]

    def top(self) -> str:
        return self.items[0][0]


def _rank(keys: dict, method: str) -> RankedCandidates:
    if not keys:
        raise ValueError("empty candidate set")
    return RankedCandidates(tuple(sorted(keys.items(), key=lambda ek: (-ek[1], ek[0]))), method)


def rank_unranked(candidates: Iterable[str]) -> RankedCandidates:
    return _rank({e: 0.0 for e in candidates}, "none")


def rank_by_out_degree(store: KbStore, candidates: Iterable[str]) -> RankedCandidates:
    return _rank({e: float(store.out_degree(e)) for e in candidates}, "out_degree")


def rank_by_type_score(model, q: Sequence[str], store: KbStore, candidates: Iterable[str]) -> RankedCandidates:
    """Rank by the matcher score of each candidate's notable type; untyped entities score 0."""
    cands = sorted(set(candidates))
    if not cands:
        raise ValueError("empty candidate set")
    typed = [e for e in cands if store.notable_type(e)]
    keys = dict.fromkeys(cands, 0.0)
    if typed:
        types = [store.notable_type(e) for e in typed]
        keys.update(zip(typed, model.score_many(q, types)))
    return _rank(keys, "notable_type")


def generate_type_pairs(dataset: Iterable[Tuple[Sequence[str], str]], all_types: Iterable[str],
                        replication: int = 4, negatives: int = 10, seed: int = 0) -> List[MatchPair]:
    """Gold type replicated ``replication`` times plus uniformly drawn wrong types."""
    types = sorted(set(all_types))
    rng = np.random.default_rng([seed, 3])
    pairs = []
    for question, gold in dataset:
        q = tuple(tokenize(question) if isinstance(question, str) else question)
        pairs.extend([MatchPair(q, gold, 1)] * replication)
        others = [t for t in types if t != gold]
        k = min(negatives, len(others))
        for i in sorted(rng.choice(len(others), size=k, replace=False)) if k else ():
            pairs.append(MatchPair(q, others[i], 0))
    return pairs


def train_type_matcher(dataset: Sequence[Tuple[Sequence[str], str]], all_types: Iterable[str],
                       config: nn.TrainConfig, embeddings: Optional[nn.EmbeddingTable] = None,
                       on_epoch=None, history: Optional[list] = None) -> MatchModel:
    if not dataset:
        raise ValueError("empty dataset")
    all_types = set(all_types)
    pairs = generate_type_pairs(dataset, all_types, config.replication, config.type_negatives, config.seed)
    extra = {tok for t in all_types for tok in type_tokens(t)}
    return train_matcher(pairs, config, target="type", embeddings=embeddings, extra_tokens=extra,
                         on_epoch=on_epoch, history=history)
