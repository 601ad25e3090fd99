"""Triple store with entity aliases, notable types and out-degree counts.

Identifiers follow the Freebase MID convention (``/m/01hmylb``); relations
are slash paths (``/music/album/album_content_type``).  Files are UTF-8 TSV,
``#`` lines are comments.
"""

from __future__ import annotations

import gzip
import pickle
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, Optional, Set

FREEBASE_NS = "http://rdf.freebase.com/ns/"
NOTABLE_TYPE_SUFFIX = "common.topic.notable_types"

_WS = re.compile(r"\s+")
_NTRIPLE = re.compile(
    r'^<([^<>\s]+)>\s+<([^<>\s]+)>\s+(<[^<>\s]+>|"(?:[^"\\]|\\.)*"(?:@[A-Za-z0-9-]+|\^\^<[^<>\s]+>)?)\s*\.\s*$'
)


class KbFormatError(ValueError):
    """A line of an input file does not follow the expected framing."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def normalize_alias(text: str) -> str:
    return _WS.sub(" ", text.strip().lower())


def normalize_id(raw: str) -> str:
    """Map ``www.freebase.com/m/x`` (SimpleQuestions layout) to ``/m/x``."""
    raw = raw.strip()
    for prefix in ("http://www.freebase.com", "https://www.freebase.com", "www.freebase.com"):
        if raw.startswith(prefix):
            return raw[len(prefix):]
    return raw


def is_relation_id(r: str) -> bool:
    return r.startswith("/") and any(r.split("/"))


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str


@dataclass
class EntityRecord:
    id: str
    aliases: Set[str] = field(default_factory=set)
    notable_type: Optional[str] = None
    out_degree: int = 0


class KbStore:
    """Subject-indexed triple store.

    Build with the ``ingest_*`` functions, then :meth:`seal`.  Queries about
    unknown entities return empty results instead of raising.
    """

    def __init__(self) -> None:
        self._facts: Dict[str, Dict[str, Set[str]]] = {}
        self.records: Dict[str, EntityRecord] = {}
        self.sealed = False

    def _check_writable(self) -> None:
        if self.sealed:
            raise RuntimeError("store is sealed")

    def record(self, e: str) -> EntityRecord:
        rec = self.records.get(e)
        if rec is None:
            rec = self.records[e] = EntityRecord(e)
        return rec

    def add_triple(self, s: str, r: str, o: str) -> bool:
        """Insert one fact; returns False if it was already present."""
        self._check_writable()
        objects = self._facts.setdefault(s, {}).setdefault(r, set())
        if o in objects:
            return False
        objects.add(o)
        self.record(s).out_degree += 1
        self.record(o)
        return True

    def add_alias(self, e: str, alias: str) -> None:
        self._check_writable()
        alias = normalize_alias(alias)
        if alias:
            self.record(e).aliases.add(alias)

    def set_notable_type(self, e: str, type_text: str) -> None:
        self._check_writable()
        self.record(e).notable_type = type_text.strip()

    def seal(self) -> "KbStore":
        self.sealed = True
        return self

    # queries

    def __len__(self) -> int:
        return sum(rec.out_degree for rec in self.records.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KbStore):
            return NotImplemented
        return self._facts == other._facts and self.records == other.records

    @property
    def num_entities(self) -> int:
        return len(self.records)

    def triples(self) -> Iterator[Triple]:
        for s, rels in self._facts.items():
            for r, objs in rels.items():
                for o in objs:
                    yield Triple(s, r, o)

    def out_degree(self, e: str) -> int:
        rec = self.records.get(e)
        return rec.out_degree if rec else 0

    def relations_of(self, e: str) -> Set[str]:
        return set(self._facts.get(e, ()))

    def objects_of(self, e: str, r: str) -> Set[str]:
        return set(self._facts.get(e, {}).get(r, ()))

    def aliases(self, e: str) -> Set[str]:
        rec = self.records.get(e)
        return set(rec.aliases) if rec else set()

    def notable_type(self, e: str) -> Optional[str]:
        rec = self.records.get(e)
        return rec.notable_type if rec else None

    def all_relations(self) -> Set[str]:
        return {r for rels in self._facts.values() for r in rels}

    def notable_types(self) -> Set[str]:
        return {rec.notable_type for rec in self.records.values() if rec.notable_type}

    # persistence

    def save(self, path) -> None:
        with gzip.open(path, "wb") as f:
            pickle.dump(self, f, protocol=pickle.HIGHEST_PROTOCOL)

    @staticmethod
    def load(path) -> "KbStore":
        with gzip.open(path, "rb") as f:
            store = pickle.load(f)
        if not isinstance(store, KbStore):
            raise TypeError(f"{path} does not hold a KbStore")
        return store


def _records(source: Iterable[str], nfields: int) -> Iterator[tuple]:
    for lineno, line in enumerate(source, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != nfields:
            raise KbFormatError(lineno, f"expected {nfields} tab-separated fields, got {len(parts)}")
        if not all(p.strip() for p in parts):
            raise KbFormatError(lineno, "empty field")
        yield lineno, parts


def ingest_triples(source: Iterable[str], store: Optional[KbStore] = None) -> KbStore:
    """Read ``subject<TAB>relation<TAB>object`` lines.

    The object field may hold several whitespace-separated ids, as in the
    FB2M distribution; each becomes its own triple.
    """
    store = store if store is not None else KbStore()
    for lineno, (s, r, o) in _records(source, 3):
        s, r = normalize_id(s), normalize_id(r)
        if not is_relation_id(r):
            raise KbFormatError(lineno, f"bad relation id {r!r}")
        for obj in o.split():
            store.add_triple(s, r, normalize_id(obj))
    return store


def ingest_aliases(source: Iterable[str], store: KbStore) -> KbStore:
    for _, (e, alias) in _records(source, 2):
        store.add_alias(normalize_id(e), alias)
    return store


def ingest_notable_types(source: Iterable[str], store: KbStore) -> KbStore:
    for _, (e, type_text) in _records(source, 2):
        store.set_notable_type(normalize_id(e), type_text)
    return store


def freebase_iri_to_id(iri: str) -> str:
    """``http://rdf.freebase.com/ns/m.01hmylb`` -> ``/m/01hmylb``.

    Non-MID names in the namespace (``music.album``) become slash paths.
    IRIs outside the Freebase namespace are returned unchanged.
    """
    if not iri.startswith(FREEBASE_NS):
        return iri
    local = iri[len(FREEBASE_NS):]
    if local.startswith(("m.", "g.")):
        return "/" + local.replace(".", "/", 1)
    return "/" + local.replace(".", "/")


def _unescape_literal(body: str) -> str:
    return re.sub(r'\\(["\\nrt])', lambda m: {"n": "\n", "r": "\r", "t": "\t"}.get(m.group(1), m.group(1)), body)


def extract_notable_types_ntriples(
    source: Iterable[str],
    predicate_suffix: str = NOTABLE_TYPE_SUFFIX,
    stats: Optional[dict] = None,
) -> Iterator[str]:
    """Yield ``entity_id<TAB>type_text`` lines for notable-type statements.

    Structurally invalid lines are skipped; their count goes to
    ``stats["skipped"]`` when a dict is supplied.
    """
    if stats is not None:
        stats.setdefault("skipped", 0)
    for line in source:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m = _NTRIPLE.match(line)
        if m is None:
            if stats is not None:
                stats["skipped"] += 1
            continue
        subj, pred, obj = m.groups()
        if not pred.endswith(predicate_suffix):
            continue
        if obj.startswith("<"):
            value = freebase_iri_to_id(obj[1:-1])
        else:
            value = _unescape_literal(obj[1:obj.rindex('"')])
        value = " ".join(value.split())
        if value:
            yield f"{freebase_iri_to_id(subj)}\t{value}"


def open_text(path) -> Iterator[str]:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as f:
        yield from f


def load_store(triples, aliases=None, types=None) -> KbStore:
    store = ingest_triples(open_text(triples))
    if aliases:
        ingest_aliases(open_text(aliases), store)
    if types:
        ingest_notable_types(open_text(types), store)
    return store.seal()
