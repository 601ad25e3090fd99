import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqa.kb import (
    KbFormatError,
    KbStore,
    extract_notable_types_ntriples,
    freebase_iri_to_id,
    ingest_aliases,
    ingest_notable_types,
    ingest_triples,
)

ALBUM_FACT = "/m/01hmylb\t/music/album/album_content_type\t/m/06vw6v"


def test_empty_stream():
    store = ingest_triples([])
    assert len(store) == 0
    assert store.num_entities == 0


def test_single_fact():
    store = ingest_triples(["/m/a\t/music/release/label\t/m/b"])
    assert len(store) == 1
    assert store.out_degree("/m/a") == 1


def test_five_relations_same_subject():
    lines = [f"/m/a\t/d/r{i}/x\t/m/o{i}" for i in range(5)]
    assert ingest_triples(lines).out_degree("/m/a") == 5


def test_duplicates_collapse_and_comments_skipped():
    store = ingest_triples(["# header", ALBUM_FACT, "", ALBUM_FACT])
    assert len(store) == 1
    assert store.out_degree("/m/01hmylb") == 1


@pytest.mark.parametrize("line", ["/m/a\t/r/x", "/m/a\t/r/x\t/m/b\textra", "/m/a /r/x /m/b"])
def test_malformed_triple_reports_line(line):
    with pytest.raises(KbFormatError, match="line 2"):
        ingest_triples([ALBUM_FACT, line])


def test_bad_relation_rejected():
    with pytest.raises(KbFormatError):
        ingest_triples(["/m/a\tnot-a-path\t/m/b"])


def test_multiple_objects_in_one_field():
    store = ingest_triples(["/m/a\t/r/x\t/m/b /m/c"])
    assert store.objects_of("/m/a", "/r/x") == {"/m/b", "/m/c"}


def test_simplequestions_id_prefix_is_stripped():
    store = ingest_triples(["www.freebase.com/m/a\twww.freebase.com/music/album/genre\twww.freebase.com/m/b"])
    assert store.objects_of("/m/a", "/music/album/genre") == {"/m/b"}


def test_aliases_normalised_and_set_semantics():
    store = ingest_aliases(["/m/a\tBarack   Obama ", "/m/a\tbarack obama"], KbStore())
    assert store.aliases("/m/a") == {"barack obama"}


def test_same_alias_two_entities():
    store = ingest_aliases(["/m/a\tparis", "/m/b\tParis"], KbStore())
    assert "paris" in store.aliases("/m/a") and "paris" in store.aliases("/m/b")


def test_alias_malformed():
    with pytest.raises(KbFormatError, match="line 1"):
        ingest_aliases(["/m/a"], KbStore())


def test_notable_types():
    store = ingest_notable_types(["/m/a\tmusical album", "/m/b\tfilm", "/m/a\tmusical release"], KbStore())
    assert store.notable_type("/m/a") == "musical release"
    assert store.notable_type("/m/b") == "film"
    assert store.notable_type("/m/zzz") is None
    with pytest.raises(KbFormatError):
        ingest_notable_types(["/m/a\t"], KbStore())


def test_distinct_type_count_1275():
    lines = [f"/m/e{i}\ttype {i % 1275}" for i in range(3000)]
    assert len(ingest_notable_types(lines, KbStore()).notable_types()) == 1275


def test_out_degree_subject_position_only():
    store = ingest_triples(["/m/e\t/r/a\t/m/x", "/m/e\t/r/a\t/m/y", "/m/e\t/r/b\t/m/z"])
    assert store.out_degree("/m/e") == 3
    assert store.out_degree("/m/x") == 0
    assert store.out_degree("/m/unknown") == 0


def test_relations_and_objects():
    store = ingest_triples(["/m/e\t/r/a\t/m/x", "/m/e\t/r/a\t/m/y", "/m/f\t/r/a\t/m/x", "/m/f\t/r/b\t/m/y"])
    assert store.relations_of("/m/e") == {"/r/a"}
    assert store.relations_of("/m/f") == {"/r/a", "/r/b"}
    assert store.relations_of("/m/nope") == set()
    assert store.objects_of("/m/e", "/r/a") == {"/m/x", "/m/y"}
    assert store.objects_of("/m/e", "/r/b") == set()


def test_album_fact(mini_store):
    assert mini_store.objects_of("/m/01hmylb", "/music/album/album_content_type") == {"/m/06vw6v"}


def test_sealed_store_rejects_writes(mini_store):
    with pytest.raises(RuntimeError):
        mini_store.add_triple("/m/a", "/r/x", "/m/b")


def test_save_load_roundtrip(mini_store, tmp_path):
    path = tmp_path / "kb.bin"
    mini_store.save(path)
    assert KbStore.load(path) == mini_store


# N-Triples extraction

NS = "http://rdf.freebase.com/ns/"


def test_iri_rewrite():
    assert freebase_iri_to_id(NS + "m.01hmylb") == "/m/01hmylb"
    assert freebase_iri_to_id(NS + "music.album") == "/music/album"


def test_extract_matching_line():
    line = f"<{NS}m.01hmylb> <{NS}common.topic.notable_types> <{NS}m.0kpv11> ."
    assert list(extract_notable_types_ntriples([line])) == ["/m/01hmylb\t/m/0kpv11"]


def test_extract_literal_object():
    line = f'<{NS}m.01hmylb> <{NS}common.topic.notable_types> "musical album"@en .'
    assert list(extract_notable_types_ntriples([line])) == ["/m/01hmylb\tmusical album"]


def test_extract_filters_and_counts_invalid():
    stats = {}
    lines = [
        f"<{NS}m.01hmylb> <{NS}type.object.name> \"Fearless\"@en .",
        "this is not n-triples",
        f"<{NS}m.0x> <{NS}common.topic.notable_types>",
        "",
    ]
    assert list(extract_notable_types_ntriples(lines, stats=stats)) == []
    assert stats["skipped"] == 2
    assert list(extract_notable_types_ntriples([])) == []


def test_extract_custom_suffix():
    line = f"<{NS}m.01> <{NS}my.custom.pred> \"x\" ."
    assert list(extract_notable_types_ntriples([line], predicate_suffix="custom.pred")) == ["/m/01\tx"]


def test_extract_composes_with_ingest():
    nt = [
        f'<{NS}m.01hmylb> <{NS}common.topic.notable_types> "musical album" .',
        f'<{NS}m.0h2fl7> <{NS}common.topic.notable_types> "film" .',
    ]
    via_nt = ingest_notable_types(extract_notable_types_ntriples(nt), KbStore())
    direct = ingest_notable_types(["/m/01hmylb\tmusical album", "/m/0h2fl7\tfilm"], KbStore())
    assert via_nt == direct


# properties

ids = st.sampled_from([f"/m/{c}" for c in "abcdefghij"])
rels = st.sampled_from(["/a/x/y", "/a/z/w", "/b/q/r", "/c/s/t"])
triples = st.lists(st.tuples(ids, rels, ids), max_size=60)


def _lines(ts):
    return ["\t".join(t) for t in ts]


@given(triples)
@settings(max_examples=200, deadline=None)
def test_out_degree_recount(ts):
    store = ingest_triples(_lines(ts))
    distinct = set(ts)
    for e in {t[0] for t in ts} | {t[2] for t in ts}:
        assert store.out_degree(e) == sum(1 for t in distinct if t[0] == e)
        assert store.out_degree(e) == sum(len(store.objects_of(e, r)) for r in store.relations_of(e))
        assert bool(store.relations_of(e)) == (store.out_degree(e) > 0)


@given(triples)
@settings(max_examples=100, deadline=None)
def test_ingest_idempotent(ts):
    once = ingest_triples(_lines(ts))
    twice = ingest_triples(_lines(ts) + _lines(ts))
    assert once == twice


def test_out_degree_recount_large(rng):
    subj = rng.integers(0, 500, size=10_000)
    rel = rng.integers(0, 20, size=10_000)
    obj = rng.integers(0, 500, size=10_000)
    ts = [(f"/m/{s}", f"/d/r{r}/x", f"/m/{o}") for s, r, o in zip(subj, rel, obj)]
    store = ingest_triples(_lines(ts))
    counts = {}
    for t in set(ts):
        counts[t[0]] = counts.get(t[0], 0) + 1
    assert all(store.out_degree(e) == c for e, c in counts.items())
    assert len(store) == len(set(ts))
