"""``sqa`` command line: data preparation, training, evaluation and querying."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import nn
from .context import train_type_matcher
from .kb import KbStore, extract_notable_types_ntriples, load_store, open_text
from .matcher import generate_training_pairs, load_model, read_pairs, train_matcher, write_pairs
from .ngram import NgramIndex, build_index, tokenize
from .pipeline import DISAMBIGUATIONS, MODES, PipelineMode, QAPipeline, read_questions, tagger_training_set
from .tagger import TAGS, train_tagger

log = logging.getLogger("sqa")


def _default_seed() -> int:
    try:
        return int(os.environ.get("SQA_SEED", "0"))
    except ValueError:
        return 0


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--emb-dim", type=_positive_int, default=300)
    p.add_argument("--hidden", type=_positive_int, default=100)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--epochs", type=_positive_int, default=30)
    p.add_argument("--batch-size", type=_positive_int, default=64)
    p.add_argument("--replication", type=_positive_int, default=4)
    p.add_argument("--type-negatives", type=_positive_int, default=10)
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--embeddings", help="GloVe-format text file (sets --emb-dim from the file)")


def _config(args) -> nn.TrainConfig:
    return nn.TrainConfig(
        seed=args.seed, emb_dim=args.emb_dim, hidden=args.hidden, lr=args.lr, dropout=args.dropout,
        epochs=args.epochs, batch_size=args.batch_size, replication=args.replication,
        type_negatives=args.type_negatives, train_embeddings=not args.freeze_embeddings,
    )


def _embeddings(args):
    if not args.embeddings:
        return None
    return nn.load_embeddings(open_text(args.embeddings), args.emb_dim, args.seed)


def _log_epoch(epoch, loss):
    log.info("epoch %d loss %.6f", epoch + 1, loss)


def _questions(path):
    rows, skipped = read_questions(open_text(path))
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    return rows, skipped


def _pipeline(args) -> QAPipeline:
    store = KbStore.load(args.kb)
    index = NgramIndex.load(args.index, store) if args.index else build_index(store)
    type_matcher = load_model(args.type_matcher) if args.type_matcher else None
    return QAPipeline(store, index, load_model(args.tagger), load_model(args.matcher), type_matcher)


def cmd_ingest(args) -> int:
    store = load_store(args.triples, args.aliases, args.types)
    store.save(args.out)
    print(f"triples: {len(store)}")
    print(f"entities: {store.num_entities}")
    print(f"relations: {len(store.all_relations())}")
    print(f"notable_types: {len(store.notable_types())}")
    return 0


def cmd_extract_types(args) -> int:
    stats = {}
    n = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for line in extract_notable_types_ntriples(open_text(args.input), args.predicate_suffix, stats):
            out.write(line + "\n")
            n += 1
    print(f"written: {n}")
    print(f"skipped: {stats['skipped']}")
    return 0


def cmd_build_index(args) -> int:
    index = build_index(KbStore.load(args.kb))
    index.save(args.out)
    print(f"grams: {len(index.postings)}")
    return 0


def cmd_label_entities(args) -> int:
    store = KbStore.load(args.kb)
    rows, _ = _questions(args.questions)
    items, skipped = tagger_training_set(store, rows)
    with open(args.out, "w", encoding="utf-8") as out:
        for tokens, tags in items:
            out.write(f"{' '.join(tokens)}\t{' '.join(tags)}\n")
    print(f"labelled: {len(items)}")
    print(f"skipped: {skipped}")
    return 0


def _read_tag_file(path):
    data = []
    for lineno, line in enumerate(open_text(path), 1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        text, _, tags = line.partition("\t")
        tokens, tags = tokenize(text), tags.split()
        if len(tokens) != len(tags) or not set(tags) <= set(TAGS):
            raise ValueError(f"{path}: line {lineno}: tags do not line up with tokens")
        data.append((tokens, tags))
    return data


def cmd_train_tagger(args) -> int:
    model = train_tagger(_read_tag_file(args.tags), _config(args), _embeddings(args), on_epoch=_log_epoch)
    model.save(args.out)
    return 0


def cmd_gen_pairs(args) -> int:
    store = KbStore.load(args.kb)
    rows, _ = _questions(args.questions)
    pairs = generate_training_pairs(((tokenize(q.text), q.relation) for q in rows),
                                    store.all_relations(), args.replication)
    with open(args.out, "w", encoding="utf-8") as out:
        write_pairs(pairs, out)
    print(f"pairs: {len(pairs)}")
    return 0


def cmd_train_matcher(args) -> int:
    pairs = read_pairs(open_text(args.pairs))
    model = train_matcher(pairs, _config(args), embeddings=_embeddings(args), on_epoch=_log_epoch)
    model.save(args.out)
    return 0


def cmd_train_type_matcher(args) -> int:
    store = KbStore.load(args.kb)
    rows, _ = _questions(args.questions)
    data = [(tokenize(q.text), store.notable_type(q.subject)) for q in rows if store.notable_type(q.subject)]
    model = train_type_matcher(data, store.notable_types(), _config(args), _embeddings(args), on_epoch=_log_epoch)
    model.save(args.out)
    return 0


def cmd_eval(args) -> int:
    pipe = _pipeline(args)
    rows, skipped = _questions(args.questions)
    report = pipe.evaluate(rows, PipelineMode(args.mode, args.disambiguation), skipped)
    if not args.quiet:
        print(report.to_table())
    sys.stdout.write(report.to_kv())
    if args.report:
        Path(args.report).write_text(report.to_kv(), encoding="utf-8")
    return 0


def cmd_ask(args) -> int:
    pipe = _pipeline(args)
    ans = pipe.answer(args.question, PipelineMode(args.mode, args.disambiguation))
    if ans.unanswered:
        print("unanswered")
        return 1
    for o in sorted(ans.objects) or [""]:
        print(f"{ans.subject}\t{ans.relation}\t{o}")
    return 0


def _add_model_flags(p):
    p.add_argument("--kb", required=True)
    p.add_argument("--index", help="index snapshot; rebuilt from the store if omitted")
    p.add_argument("--tagger", required=True)
    p.add_argument("--matcher", required=True)
    p.add_argument("--type-matcher")
    p.add_argument("--mode", choices=MODES, default="full_candidates")
    p.add_argument("--disambiguation", choices=DISAMBIGUATIONS, default="none")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqa", description="Simple question answering over a triple KB.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load TSV files into a sealed store")
    p.add_argument("--triples", required=True)
    p.add_argument("--aliases")
    p.add_argument("--types")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract-types", help="N-Triples dump -> notable-type TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--predicate-suffix", default="common.topic.notable_types")
    p.set_defaults(func=cmd_extract_types)

    p = sub.add_parser("build-index", help="write an n-gram index snapshot")
    p.add_argument("--kb", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("label-entities", help="distant e/c labels for tagger training")
    p.add_argument("--kb", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label_entities)

    p = sub.add_parser("train-tagger")
    p.add_argument("--tags", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_tagger)

    p = sub.add_parser("gen-pairs", help="domain-partitioned relation matching pairs")
    p.add_argument("--kb", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--replication", type=_positive_int, default=4)
    p.set_defaults(func=cmd_gen_pairs)

    p = sub.add_parser("train-matcher")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_matcher)

    p = sub.add_parser("train-type-matcher")
    p.add_argument("--kb", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_type_matcher)

    p = sub.add_parser("eval")
    _add_model_flags(p)
    p.add_argument("--questions", required=True)
    p.add_argument("--report", help="also write the key: value block to this file")
    p.add_argument("--quiet", action="store_true", help="omit the human-readable table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ask")
    p.add_argument("question")
    _add_model_flags(p)
    p.set_defaults(func=cmd_ask)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"sqa {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
