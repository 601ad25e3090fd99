"""Bi-LSTM e/c sequence labeller and distant-supervision label generation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .kb import EntityRecord
from .ngram import tokenize

TAGS = ("c", "e")
ENTITY, CONTEXT = "e", "c"


@dataclass(frozen=True)
class Fragment:
    start: int
    end: int
    tokens: Tuple[str, ...]


def _find(haystack: Sequence[str], needle: Sequence[str]) -> int:
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if tuple(haystack[i:i + n]) == tuple(needle):
            return i
    return -1


def _longest_common_run(a: Sequence[str], b: Sequence[str]) -> Tuple[int, int]:
    """(length, start in ``a``) of the longest run shared with ``b``; earliest start wins."""
    best = (0, -1)
    for i in range(len(a)):
        for j in range(len(b)):
            k = 0
            while i + k < len(a) and j + k < len(b) and a[i + k] == b[j + k]:
                k += 1
            if k > best[0]:
                best = (k, i)
    return best


def generate_tag_labels(question: str, gold_subject: EntityRecord) -> Optional[List[str]]:
    """Align the gold subject's aliases against the question.

    The longest alias found verbatim is marked (first occurrence).  Failing
    that, the longest token run shared with any alias is marked.  Returns
    None when the question shares no token with any alias.
    """
    tokens = tokenize(question)
    if not tokens:
        return None
    aliases = sorted({tuple(tokenize(a)) for a in gold_subject.aliases} - {()}, key=lambda a: (-len(a), a))
    span = None
    for alias in aliases:
        pos = _find(tokens, alias)
        if pos >= 0:
            span = (pos, pos + len(alias))
            break
    if span is None:
        best = (0, -1)
        for alias in aliases:
            k, pos = _longest_common_run(tokens, alias)
            if k > best[0] or (k == best[0] and k > 0 and pos < best[1]):
                best = (k, pos)
        if best[0] == 0:
            return None
        span = (best[1], best[1] + best[0])
    return [ENTITY if span[0] <= i < span[1] else CONTEXT for i in range(len(tokens))]


def extract_fragments(tags: Sequence[str], tokens: Sequence[str]) -> List[Fragment]:
    if len(tags) != len(tokens):
        raise ValueError(f"{len(tags)} tags for {len(tokens)} tokens")
    out, start = [], None
    for i, tag in enumerate(list(tags) + [CONTEXT]):
        if tag == ENTITY and start is None:
            start = i
        elif tag != ENTITY and start is not None:
            out.append(Fragment(start, i, tuple(tokens[start:i])))
            start = None
    return out


class TaggerModel:
    """Embedding -> Bi-LSTM -> per-token softmax over {c, e}."""

    kind = "tagger"

    def __init__(self, params: nn.Params, table: nn.EmbeddingTable, config: nn.TrainConfig):
        self.params = params
        self.table = table
        self.config = config
        self.encoder = nn.BiEncoder("lstm", "tag_enc")

    @classmethod
    def init(cls, table: nn.EmbeddingTable, config: nn.TrainConfig) -> "TaggerModel":
        rng = np.random.default_rng([config.seed, 0])
        H = config.hidden
        params = {"emb": table.matrix.copy()}
        params.update(nn.BiEncoder("lstm", "tag_enc").init(rng, table.dim, H))
        params["head.W"] = nn.uniform(rng, (2 * H, len(TAGS)))
        params["head.b"] = nn.uniform(rng, (1, len(TAGS)))
        return cls(params, table, config)

    def ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.table.index(t) for t in tokens]

    def forward(self, params, ids, mask):
        X = params["emb"][ids]
        out, _, enc_cache = self.encoder.forward(params, X, mask)
        probs = nn.softmax(out @ params["head.W"] + params["head.b"])
        return probs, (ids, out, enc_cache)

    def loss_and_grads(self, params, batch, rng=None):
        ids, mask = nn.pad([b[0] for b in batch])
        labels, _ = nn.pad([b[1] for b in batch])
        probs, (ids, out, enc_cache) = self.forward(params, ids, mask)
        n = mask.sum()
        p_gold = np.take_along_axis(probs, labels[..., None], axis=2)[..., 0]
        loss = float(-(np.log(p_gold) * mask).sum() / n)
        d_logits = probs.copy()
        np.put_along_axis(d_logits, labels[..., None], np.take_along_axis(d_logits, labels[..., None], 2) - 1.0, 2)
        d_logits *= mask[..., None] / n
        B, T, H2 = out.shape
        grads = {
            "head.W": out.reshape(-1, H2).T @ d_logits.reshape(-1, len(TAGS)),
            "head.b": d_logits.reshape(-1, len(TAGS)).sum(axis=0, keepdims=True),
        }
        d_out = d_logits @ params["head.W"].T
        dX, enc_grads = self.encoder.backward(params, enc_cache, d_out=d_out)
        grads.update(enc_grads)
        grads["emb"] = nn.embedding_grad(params["emb"].shape, ids, dX)
        return loss, grads

    def tag_probs(self, tokens: Sequence[str]) -> np.ndarray:
        ids, mask = nn.pad([self.ids(tokens)])
        probs, _ = self.forward(self.params, ids, mask)
        return probs[0]

    def tag(self, tokens: Sequence[str]) -> List[str]:
        if not tokens:
            raise ValueError("empty question")
        return [TAGS[k] for k in self.tag_probs(tokens).argmax(axis=1)]

    def save(self, path) -> None:
        nn.save_checkpoint(path, self.params, {
            "kind": self.kind, "config": nn.config_dict(self.config),
            "vocab": sorted(self.table.vocab, key=self.table.vocab.get), "seed": self.table.seed,
        })

    @classmethod
    def from_checkpoint(cls, params, meta) -> "TaggerModel":
        table = _table_from_meta(params["emb"], meta)
        return cls(params, table, nn.TrainConfig(**meta["config"]))


def _table_from_meta(emb: np.ndarray, meta: dict) -> nn.EmbeddingTable:
    table = nn.EmbeddingTable(emb.shape[1], meta.get("seed", 0))
    table.vocab = {tok: i for i, tok in enumerate(meta["vocab"])}
    table.matrix = emb
    return table


def build_table(tokens: Iterable[str], config: nn.TrainConfig,
                embeddings: Optional[nn.EmbeddingTable] = None) -> nn.EmbeddingTable:
    """Embedding table restricted to ``tokens``, seeded from pretrained vectors if given."""
    tokens = sorted(set(tokens))
    if embeddings is not None:
        return embeddings.restrict(tokens)
    table = nn.EmbeddingTable(config.emb_dim, config.seed)
    table.add_many(tokens)
    return table


def train_tagger(dataset: Sequence[Tuple[Sequence[str], Sequence[str]]], config: nn.TrainConfig,
                 embeddings: Optional[nn.EmbeddingTable] = None, on_epoch=None,
                 history: Optional[list] = None) -> TaggerModel:
    """Fit a tagger on (tokens, tags) pairs with per-token cross-entropy."""
    if not dataset:
        raise ValueError("empty dataset")
    for tokens, tags in dataset:
        if len(tokens) != len(tags) or not tokens:
            raise ValueError("every item needs one tag per token and at least one token")
    table = build_table((t for toks, _ in dataset for t in toks), config, embeddings)
    model = TaggerModel.init(table, config)
    examples = [(model.ids(toks), [TAGS.index(t) for t in tags]) for toks, tags in dataset]
    frozen = () if config.train_embeddings else ("emb",)
    losses = nn.train_loop(model.params, examples, model.loss_and_grads, config, frozen, on_epoch)
    model.table.matrix = model.params["emb"]
    if history is not None:
        history.extend(losses)
    return model


def tag_question(model, tokens: Sequence[str]) -> List[str]:
    return model.tag(tokens)


def token_accuracy(model, dataset) -> float:
    right = total = 0
    for tokens, tags in dataset:
        pred = model.tag(tokens)
        right += sum(p == t for p, t in zip(pred, tags))
        total += len(tags)
    return right / total if total else 0.0
