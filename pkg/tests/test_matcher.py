import io
import math

import numpy as np
import pytest
import toys
from hypothesis import given, settings
from hypothesis import strategies as st

from sqa import nn
from sqa.matcher import (
    MatchModel,
    MatchPair,
    domain_of,
    generate_training_pairs,
    load_model,
    pair_accuracy,
    rank_relations,
    read_pairs,
    relation_tokens,
    score_pair,
    train_matcher,
    write_pairs,
)
from sqa.ngram import tokenize


@pytest.mark.parametrize("r,d", [
    ("/music/release/label", "music"),
    ("/people/person/place_of_birth", "people"),
    ("/music/genre/parent_genre", "music"),
])
def test_domain_of(r, d):
    assert domain_of(r) == d


def test_domain_of_malformed():
    with pytest.raises(ValueError):
        domain_of("music")


@pytest.mark.parametrize("r,toks", [
    ("/music/album/album_content_type", ["music", "album", "album", "content", "type"]),
    ("/music/live_album/concert_tour", ["music", "live", "album", "concert", "tour"]),
    ("/a", ["a"]),
])
def test_relation_tokens(r, toks):
    assert relation_tokens(r) == toks


def test_pairs_ten_relation_domain():
    rels = [f"/d/x/r{i}" for i in range(10)]
    pairs = generate_training_pairs([("q one", "/d/x/r3")], rels)
    assert len(pairs) == 13
    assert sum(p.tag for p in pairs) == 4
    assert {p.relation for p in pairs if p.tag == 0} == set(rels) - {"/d/x/r3"}


def test_pairs_singleton_domain():
    pairs = generate_training_pairs([("q", "/solo/x/y")], ["/solo/x/y", "/other/a/b"])
    assert [p.tag for p in pairs] == [1, 1, 1, 1]


def test_pairs_two_questions_five_relations():
    rels = [f"/d/x/r{i}" for i in range(5)]
    pairs = generate_training_pairs([("q a", rels[0]), ("q b", rels[1])], rels + ["/e/y/z"])
    assert len(pairs) == 16


def test_pairs_unknown_gold():
    with pytest.raises(ValueError):
        generate_training_pairs([("q", "/d/x/missing")], ["/d/x/r"])


domain_sizes = st.dictionaries(st.sampled_from("abcdefgh"), st.integers(1, 12), min_size=1)


@given(domain_sizes, st.integers(1, 6), st.data())
@settings(max_examples=200, deadline=None)
def test_pair_count_law(sizes, replication, data):
    rels = [f"/{d}/t/r{i}" for d, n in sizes.items() for i in range(n)]
    golds = data.draw(st.lists(st.sampled_from(rels), min_size=1, max_size=10))
    pairs = generate_training_pairs([(f"q{i}", g) for i, g in enumerate(golds)], rels, replication)
    assert len(pairs) == sum(sizes[domain_of(g)] - 1 + replication for g in golds)
    pos = sum(p.tag for p in pairs)
    assert pos == replication * len(golds)
    assert (len(pairs) - pos) == sum(sizes[domain_of(g)] - 1 for g in golds)


def test_pairs_file_roundtrip():
    pairs = generate_training_pairs([("who is it", "/d/x/a")], ["/d/x/a", "/d/x/b"], 2)
    buf = io.StringIO()
    write_pairs(pairs, buf)
    assert read_pairs(buf.getvalue().splitlines()) == pairs
    with pytest.raises(ValueError, match="line 1"):
        read_pairs(["q\t/r/x\t2"])


def _tiny_model(seed=0):
    cfg = nn.TrainConfig(seed=seed, emb_dim=4, hidden=3)
    table = nn.EmbeddingTable(4, seed)
    table.add_many(["what", "is", "it", "music", "album", "genre", "film"])
    return MatchModel.init(table, cfg)


def test_zero_head_scores_half():
    model = _tiny_model()
    model.params["out.W"][:] = 0
    model.params["out.b"][:] = 0
    assert score_pair(model, ["what", "is", "it"], "/music/album/genre") == 0.5
    assert model.score(["never", "seen"], "/film/x/y") == 0.5


def test_score_deterministic_and_in_range():
    model = _tiny_model()
    a = score_pair(model, ["what", "is", "it"], "/music/album/genre")
    assert a == score_pair(model, ["what", "is", "it"], "/music/album/genre")
    assert 0 < a < 1
    with pytest.raises(ValueError):
        score_pair(model, [], "/music/album/genre")


def test_init_loss_near_ln2():
    model = _tiny_model()
    pairs = generate_training_pairs([("what is it", "/music/album/genre")],
                                    ["/music/album/genre", "/music/album/x", "/music/y/z"])
    batch = [(model.ids(p.question), model.ids(model.target_tokens(p.relation)), p.tag) for p in pairs]
    loss, _ = model.loss_and_grads(model.params, batch, train=False)
    assert abs(loss - math.log(2)) < 0.05


@pytest.mark.parametrize("draw_seed", range(20))
def test_full_matcher_grad_check(draw_seed):
    rng = np.random.default_rng(draw_seed)
    model = _tiny_model(draw_seed)
    params = {k: rng.uniform(-0.5, 0.5, v.shape) for k, v in model.params.items()}
    batch = [
        (model.ids(["what", "is", "it"]), model.ids(relation_tokens("/music/album/genre")), 1),
        (model.ids(["film", "it"]), model.ids(relation_tokens("/film/x")), 0),
    ]
    _, grads = model.loss_and_grads(params, batch, train=False)
    assert nn.grad_check(lambda p: model.loss_and_grads(p, batch, train=False)[0], params, grads) < 1e-3


def test_degenerate_training_set():
    cfg = nn.TrainConfig(emb_dim=4, hidden=3, epochs=1)
    with pytest.raises(ValueError, match="degenerate"):
        train_matcher([MatchPair(("q",), "/a/b", 1)], cfg)
    with pytest.raises(ValueError, match="degenerate"):
        train_matcher([], cfg)


def test_toy_matcher_pair_accuracy(toy_matcher):
    model, history = toy_matcher
    assert len(history) == 50
    held_out = generate_training_pairs(toys.relation_questions(10, 2), toys.RELATIONS, 1)
    assert pair_accuracy(model, held_out) >= 0.95


def test_toy_matcher_gold_beats_domain_negatives(toy_matcher):
    model, _ = toy_matcher
    held_out = toys.relation_questions(10, 2)
    wins = 0
    for q, gold in held_out:
        same = [r for r in toys.RELATIONS if domain_of(r) == domain_of(gold)]
        wins += rank_relations(model, q, same)[0][0] == gold
    assert wins / len(held_out) >= 0.95


def test_training_is_seed_deterministic(tmp_path):
    cfg = nn.TrainConfig(seed=4, emb_dim=6, hidden=5, batch_size=8, epochs=2)
    pairs = generate_training_pairs(toys.relation_questions(3, 1), toys.RELATIONS, 4)
    train_matcher(pairs, cfg).save(tmp_path / "a")
    train_matcher(pairs, cfg).save(tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    other = nn.TrainConfig(seed=5, emb_dim=6, hidden=5, batch_size=8, epochs=2)
    train_matcher(pairs, other).save(tmp_path / "c")
    assert (tmp_path / "a").read_bytes() != (tmp_path / "c").read_bytes()


def test_checkpoint_roundtrip(toy_matcher, tmp_path):
    model, _ = toy_matcher
    model.save(tmp_path / "m.ckpt")
    again = load_model(tmp_path / "m.ckpt")
    q = "what is the genre of ent1".split()
    assert again.score_many(q, toys.RELATIONS) == model.score_many(q, toys.RELATIONS)


class ConstantMatcher:
    def score_many(self, q, targets):
        return [0.25] * len(targets)


def test_rank_relations_rules():
    assert rank_relations(ConstantMatcher(), ["q"], {"/a/b"}) == [("/a/b", 0.25)]
    ranked = rank_relations(ConstantMatcher(), ["q"], {"/z/y", "/a/c", "/m/n"})
    assert [r for r, _ in ranked] == ["/a/c", "/m/n", "/z/y"]
    with pytest.raises(ValueError):
        rank_relations(ConstantMatcher(), ["q"], set())


def test_rank_relations_is_a_permutation(toy_matcher):
    model, _ = toy_matcher
    ranked = rank_relations(model, "which label does ent3 have".split(), toys.RELATIONS)
    assert sorted(r for r, _ in ranked) == sorted(toys.RELATIONS)
    scores = [s for _, s in ranked]
    assert scores == sorted(scores, reverse=True)


def test_album_question_top_relation(mini_store, mini_questions):
    """A matcher trained on the bundled questions puts album_content_type first for the album."""
    data = [(tokenize(q.text), q.relation) for q in mini_questions]
    pairs = generate_training_pairs(data, mini_store.all_relations())
    cfg = nn.TrainConfig(seed=0, emb_dim=32, hidden=32, batch_size=8, epochs=50, lr=0.01)
    model = train_matcher(pairs, cfg)
    q = tokenize("what format is the album fearless in")
    top, _ = rank_relations(model, q, mini_store.relations_of("/m/01hmylb"))[0]
    assert top == "/music/album/album_content_type"
