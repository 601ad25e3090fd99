"""Question/relation semantic matcher and its training-pair generator.

Question and target (relation path or notable type) are encoded by two
separate Bi-GRUs.  The final vectors are concatenated and passed through a
tanh hidden layer and a sigmoid output unit; the output is the match score.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import nn
from .kb import is_relation_id
from .ngram import tokenize
from .tagger import _table_from_meta, build_table

_REL_SPLIT = re.compile(r"[/_.]+")


def domain_of(r: str) -> str:
    """First path segment of a relation id."""
    if not is_relation_id(r):
        raise ValueError(f"malformed relation id {r!r}")
    return next(seg for seg in r.split("/") if seg)


def relation_tokens(r: str) -> List[str]:
    return [t for t in _REL_SPLIT.split(r.lower()) if t]


def type_tokens(t: str) -> List[str]:
    """Tokens of a notable type: words for labels, path pieces for type ids."""
    if t.startswith("/"):
        return relation_tokens(t)
    return tokenize(t)


TARGET_TOKENIZERS = {"relation": relation_tokens, "type": type_tokens}


@dataclass(frozen=True)
class MatchPair:
    question: Tuple[str, ...]
    relation: str
    tag: int


def generate_training_pairs(dataset: Iterable[Tuple[Sequence[str], str]], all_relations: Iterable[str],
                            replication: int = 4) -> List[MatchPair]:
    """Pair each question with every relation of its gold relation's domain.

    The gold pair is tagged 1 and emitted ``replication`` times in total;
    the other relations of the domain are tagged 0 once each.
    """
    if replication < 1:
        raise ValueError("replication must be >= 1")
    by_domain: Dict[str, List[str]] = defaultdict(list)
    known = set(all_relations)
    for r in sorted(known):
        by_domain[domain_of(r)].append(r)
    pairs = []
    for question, gold in dataset:
        if gold not in known:
            raise ValueError(f"gold relation {gold!r} not among the known relations")
        q = tuple(tokenize(question) if isinstance(question, str) else question)
        for r in by_domain[domain_of(gold)]:
            if r == gold:
                pairs.extend([MatchPair(q, r, 1)] * replication)
            else:
                pairs.append(MatchPair(q, r, 0))
    return pairs


def write_pairs(pairs: Iterable[MatchPair], f) -> None:
    for p in pairs:
        f.write(f"{' '.join(p.question)}\t{p.relation}\t{p.tag}\n")


def read_pairs(lines: Iterable[str]) -> List[MatchPair]:
    out = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise ValueError(f"line {lineno}: expected question<TAB>target<TAB>0|1")
        out.append(MatchPair(tuple(parts[0].split()), parts[1], int(parts[2])))
    return out


class MatchModel:
    kind = "matcher"

    def __init__(self, params: nn.Params, table: nn.EmbeddingTable, config: nn.TrainConfig,
                 target: str = "relation"):
        if target not in TARGET_TOKENIZERS:
            raise ValueError(f"unknown target kind {target!r}")
        self.params = params
        self.table = table
        self.config = config
        self.target = target
        self.q_enc = nn.BiEncoder("gru", "q_enc")
        self.t_enc = nn.BiEncoder("gru", "t_enc")

    @classmethod
    def init(cls, table: nn.EmbeddingTable, config: nn.TrainConfig, target: str = "relation") -> "MatchModel":
        rng = np.random.default_rng([config.seed, 0])
        D, H = table.dim, config.hidden
        params = {"emb": table.matrix.copy()}
        params.update(nn.BiEncoder("gru", "q_enc").init(rng, D, H))
        params.update(nn.BiEncoder("gru", "t_enc").init(rng, D, H))
        params["hid.W"] = nn.uniform(rng, (4 * H, H))
        params["hid.b"] = nn.uniform(rng, (1, H))
        params["out.W"] = nn.uniform(rng, (H, 1))
        params["out.b"] = nn.uniform(rng, (1, 1))
        return cls(params, table, config, target)

    def target_tokens(self, t: str) -> List[str]:
        return TARGET_TOKENIZERS[self.target](t) or [nn.UNK]

    def ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.table.index(t) for t in tokens]

    def forward(self, params, q_ids, q_mask, t_ids, t_mask, train=False, rng=None):
        emb = params["emb"]
        _, fq, cq = self.q_enc.forward(params, emb[q_ids], q_mask)
        _, ft, ct = self.t_enc.forward(params, emb[t_ids], t_mask)
        v = np.concatenate([fq, ft], axis=1)
        v_d, keep = nn.dropout_apply(v, self.config.dropout, train, rng)
        h1 = np.tanh(v_d @ params["hid.W"] + params["hid.b"])
        logit = h1 @ params["out.W"] + params["out.b"]
        return logit[:, 0], (q_ids, t_ids, cq, ct, v_d, keep, h1)

    def loss_and_grads(self, params, batch, rng=None, train=True):
        q_ids, q_mask = nn.pad([b[0] for b in batch])
        t_ids, t_mask = nn.pad([b[1] for b in batch])
        y = np.array([b[2] for b in batch], dtype=np.float64)
        logit, (q_ids, t_ids, cq, ct, v_d, keep, h1) = self.forward(
            params, q_ids, q_mask, t_ids, t_mask, train and rng is not None, rng)
        B = len(batch)
        loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
        d_logit = ((nn.sigmoid(logit) - y) / B)[:, None]
        grads = {"out.W": h1.T @ d_logit, "out.b": d_logit.sum(axis=0, keepdims=True)}
        d_a1 = (d_logit @ params["out.W"].T) * (1.0 - h1 * h1)
        grads["hid.W"] = v_d.T @ d_a1
        grads["hid.b"] = d_a1.sum(axis=0, keepdims=True)
        dv = d_a1 @ params["hid.W"].T
        if keep is not None:
            dv = dv * keep
        H2 = dv.shape[1] // 2
        dXq, gq = self.q_enc.backward(params, cq, d_final=dv[:, :H2])
        dXt, gt = self.t_enc.backward(params, ct, d_final=dv[:, H2:])
        grads.update(gq)
        grads.update(gt)
        shape = params["emb"].shape
        grads["emb"] = nn.embedding_grad(shape, q_ids, dXq) + nn.embedding_grad(shape, t_ids, dXt)
        return loss, grads

    def score_many(self, q_tokens: Sequence[str], targets: Sequence[str]) -> List[float]:
        if not q_tokens:
            raise ValueError("empty question")
        if not targets:
            return []
        q = self.ids(q_tokens)
        q_ids, q_mask = nn.pad([q] * len(targets))
        t_ids, t_mask = nn.pad([self.ids(self.target_tokens(t)) for t in targets])
        logit, _ = self.forward(self.params, q_ids, q_mask, t_ids, t_mask)
        return [float(s) for s in nn.sigmoid(logit)]

    def score(self, q_tokens: Sequence[str], target: str) -> float:
        return self.score_many(q_tokens, [target])[0]

    def save(self, path) -> None:
        nn.save_checkpoint(path, self.params, {
            "kind": self.kind, "target": self.target, "config": nn.config_dict(self.config),
            "vocab": sorted(self.table.vocab, key=self.table.vocab.get), "seed": self.table.seed,
        })

    @classmethod
    def from_checkpoint(cls, params, meta) -> "MatchModel":
        table = _table_from_meta(params["emb"], meta)
        return cls(params, table, nn.TrainConfig(**meta["config"]), meta.get("target", "relation"))


def train_matcher(pairs: Sequence[MatchPair], config: nn.TrainConfig, target: str = "relation",
                  embeddings: Optional[nn.EmbeddingTable] = None, extra_tokens: Iterable[str] = (),
                  on_epoch=None, history: Optional[list] = None) -> MatchModel:
    """Fit a matcher on tagged (question, target) pairs with binary cross-entropy."""
    tags = {p.tag for p in pairs}
    if tags != {0, 1}:
        raise ValueError("degenerate training set")
    tokenizer = TARGET_TOKENIZERS[target]
    vocab: Set[str] = set(extra_tokens)
    for p in pairs:
        vocab.update(p.question)
        vocab.update(tokenizer(p.relation))
    model = MatchModel.init(build_table(vocab, config, embeddings), config, target)
    examples = [(model.ids(p.question), model.ids(model.target_tokens(p.relation)), p.tag) for p in pairs]
    frozen = () if config.train_embeddings else ("emb",)
    losses = nn.train_loop(model.params, examples, model.loss_and_grads, config, frozen, on_epoch)
    model.table.matrix = model.params["emb"]
    if history is not None:
        history.extend(losses)
    return model


def score_pair(model, q: Sequence[str], r: str) -> float:
    if not q:
        raise ValueError("empty question")
    return model.score(q, r)


def rank_relations(model, q: Sequence[str], candidates: Iterable[str]) -> List[Tuple[str, float]]:
    """Candidates by descending score, ties in lexicographic order."""
    cands = sorted(set(candidates))
    if not cands:
        raise ValueError("empty candidate set")
    scores = model.score_many(q, cands)
    return sorted(zip(cands, scores), key=lambda rs: (-rs[1], rs[0]))


def pair_accuracy(model, pairs: Sequence[MatchPair]) -> float:
    right = sum((model.score(p.question, p.relation) > 0.5) == bool(p.tag) for p in pairs)
    return right / len(pairs) if pairs else 0.0


def load_model(path):
    """Load a tagger or matcher checkpoint."""
    from .tagger import TaggerModel

    params, meta = nn.load_checkpoint(path)
    kinds = {"tagger": TaggerModel, "matcher": MatchModel}
    if meta.get("kind") not in kinds:
        raise ValueError(f"{path}: unknown model kind {meta.get('kind')!r}")
    return kinds[meta["kind"]].from_checkpoint(params, meta)
