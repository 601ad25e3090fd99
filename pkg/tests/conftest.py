import numpy as np
import pytest

from sqa import data_path
from sqa.kb import KbStore, load_store
from sqa.ngram import build_index, tokenize
from sqa.pipeline import read_questions
from sqa.tagger import generate_tag_labels


@pytest.fixture(scope="session")
def mini_store() -> KbStore:
    return load_store(data_path("triples.tsv"), data_path("aliases.tsv"), data_path("types.tsv"))


@pytest.fixture(scope="session")
def mini_index(mini_store):
    return build_index(mini_store)


@pytest.fixture(scope="session")
def mini_questions():
    rows, skipped = read_questions(data_path("questions.tsv").read_text().splitlines())
    assert skipped == 0
    return rows


class GoldTagger:
    """Tags the gold subject's alias span, looked up by question tokens."""

    def __init__(self, store, questions):
        self.spans = {}
        for q in questions:
            tags = generate_tag_labels(q.text, store.records[q.subject])
            if tags is not None:
                self.spans[tuple(tokenize(q.text))] = tags

    def tag(self, tokens):
        return self.spans.get(tuple(tokens), ["c"] * len(tokens))


class GoldMatcher:
    """Scores 1 for the gold relation of a known question, 0 otherwise."""

    def __init__(self, questions):
        self.gold = {tuple(tokenize(q.text)): q.relation for q in questions}

    def score_many(self, q_tokens, targets):
        gold = self.gold.get(tuple(q_tokens))
        return [1.0 if t == gold else 0.0 for t in targets]

    def score(self, q_tokens, target):
        return self.score_many(q_tokens, [target])[0]


class TableMatcher:
    """Fixed score per target string; stands in for a trained type matcher."""

    def __init__(self, scores):
        self.scores = scores

    def score_many(self, q_tokens, targets):
        return [self.scores.get(t, 0.0) for t in targets]

    def score(self, q_tokens, target):
        return self.scores.get(target, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# trained toy models, shared between unit and acceptance tests

@pytest.fixture(scope="session")
def toy_tagger():
    import toys
    from sqa.tagger import train_tagger

    history = []
    model = train_tagger(toys.tagging_items(50, 1), toys.TAGGER_CONFIG, history=history)
    return model, history


@pytest.fixture(scope="session")
def toy_matcher():
    import toys
    from sqa.matcher import generate_training_pairs, train_matcher

    pairs = generate_training_pairs(toys.relation_questions(20, 1), toys.RELATIONS, 4)
    history = []
    model = train_matcher(pairs, toys.MATCHER_CONFIG, embeddings=toys.matcher_vectors(), history=history)
    return model, history


@pytest.fixture(scope="session")
def toy_type_matcher():
    import toys
    from sqa.context import train_type_matcher

    history = []
    model = train_type_matcher(toys.type_questions(20, 1), toys.TYPE_CUES, toys.MATCHER_CONFIG,
                               toys.type_vectors(), history=history)
    return model, history


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
