"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 responder protocol error. Diagnostics go to stderr; data goes to files
(or stdout where a command has no ``--out``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import FORMAT_VERSION, __version__, jsonio
from .episode import EpisodeFormatError, Split, compute_stats, load_episodes, validate_corpus
from .evaluate import EvalReport, aggregate_runs, evaluate, read_predictions, write_predictions
from .language import Lexicon
from .questions import GenContext, GenPolicy, build_static_dataset, gen_ood_sets, load_ood_bank, read_qa, write_qa
from .responders import DEFAULT_TIMEOUT, PriorTables, ResponderProtocolError, make_responder
from .simulator import IDENTITY_MAP, SimConfig, WorldCatalog, generate_corpus, ingest_external
from .splits import SplitSpec, object_split, verb_split

log = logging.getLogger("epiqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PROTOCOL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epiqa", description="Episode question-answering dataset toolkit.")
    parser.add_argument("--version", action="version",
                        version=f"epiqa {__version__} (format version {FORMAT_VERSION})")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=_positive, default=1, help="worker processes (default 1)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate an episode corpus")
    p.add_argument("--catalog", help="world catalog JSON (default: packaged)")
    p.add_argument("--lexicon", help="lexicon JSON (default: packaged)")
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--n-valid-seen", type=int, required=True)
    p.add_argument("--n-valid-unseen", type=int, required=True)
    p.add_argument("--unseen-layout-fraction", type=float, default=0.25)
    p.add_argument("--distractor-rate", type=float, default=0.35)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("ingest", parents=[common], help="convert external traces to the episode format")
    p.add_argument("--input", required=True)
    p.add_argument("--schema-map", help="JSON object: native field -> dotted source path (default: identity)")
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true", help="exit 2 if any record was rejected")

    p = sub.add_parser("generate", parents=[common], help="generate the static QA set")
    p.add_argument("--episodes", required=True)
    p.add_argument("--reference", help="episodes used for statistics and negatives (default: --episodes)")
    p.add_argument("--lexicon")
    p.add_argument("--per-type", type=_positive, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--visibility-unit", choices=["episode", "step"], default="episode")
    p.add_argument("--enable-before-after-pairs", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")

    p = sub.add_parser("ood", parents=[common], help="write the out-of-distribution negative sets")
    p.add_argument("--bank", help="question bank JSON (default: packaged)")
    p.add_argument("--lexicon")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("split", parents=[common], help="build a zero-shot hold-out split")
    p.add_argument("--episodes", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--mode", choices=["object", "verb"], default="object")
    p.add_argument("--verb", help="verb to hold out in verb mode (default: seeded choice)")
    p.add_argument("--rank-by", choices=["summary", "visibility"], default="summary")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics")
    p.add_argument("--episodes", required=True)
    p.add_argument("--out", help="output JSON (default: stdout)")

    p = sub.add_parser("evaluate", parents=[common], help="run a responder and score it")
    p.add_argument("--qa", required=True, action="append", help="QA file (repeatable)")
    p.add_argument("--episodes", action="append", default=[], help="episode file (repeatable)")
    p.add_argument("--lexicon")
    p.add_argument("--responder", default="oracle",
                   help='oracle | prior | constant-no | uniform | cmd:"<argv>"')
    p.add_argument("--predictions", help="score this predictions file instead of running a responder")
    p.add_argument("--predictions-out", help="write the responder's predictions here")
    p.add_argument("--train-qa", help="training QA file (prior and uniform responders)")
    p.add_argument("--train-episodes", help="training episodes (successor and frequency tables)")
    p.add_argument("--split", help="split file; adds a held-out vs rest transfer section")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="seconds per item for cmd: responders")
    p.add_argument("--seed", type=int, default=0, help="seed for the uniform responder")
    p.add_argument("--out", required=True)

    p = sub.add_parser("aggregate", parents=[common], help="mean and std over several reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("validate", parents=[common], help="check an episode corpus")
    p.add_argument("--episodes", required=True, action="append")
    return parser


def _lexicon(path: str | None) -> Lexicon:
    return Lexicon.load(path)


def cmd_simulate(args) -> int:
    catalog = WorldCatalog.load(args.catalog)
    config = SimConfig(args.n_train, args.n_valid_seen, args.n_valid_unseen, args.seed,
                       args.unseen_layout_fraction, args.distractor_rate)
    by_split, _ = generate_corpus(catalog, config, args.out_dir, lexicon=_lexicon(args.lexicon),
                                  workers=args.workers)
    for split, eps in by_split.items():
        log.info("%s: %d episodes", split, len(eps))
    return EXIT_OK


def cmd_ingest(args) -> int:
    schema = dict(IDENTITY_MAP)
    if args.schema_map:
        schema = json.loads(Path(args.schema_map).read_text("utf-8"))
    result = ingest_external(args.input, schema, args.out)
    for line_no, message in result.diagnostics:
        print(f"{args.input}:{line_no}: {message}", file=sys.stderr)
    print(f"ingested {result.written} episode(s), rejected {len(result.diagnostics)}", file=sys.stderr)
    return EXIT_DATA if args.strict and result.diagnostics else EXIT_OK


def cmd_generate(args) -> int:
    episodes = load_episodes(args.episodes)
    if not episodes:
        raise ValueError(f"{args.episodes}: no episodes")
    reference = load_episodes(args.reference) if args.reference else episodes
    policy = GenPolicy(args.per_type, args.seed, args.enable_before_after_pairs, args.visibility_unit)
    ctx = GenContext.build(reference, _lexicon(args.lexicon), policy, compute_stats(reference, args.workers))
    items, manifest = build_static_dataset(episodes, ctx, args.workers)
    write_qa(args.out, items)
    jsonio.write_json(args.manifest or f"{args.out}.manifest.json", "manifest", manifest)
    log.info("wrote %d items to %s", len(items), args.out)
    return EXIT_OK


def cmd_ood(args) -> int:
    sets = gen_ood_sets(load_ood_bank(args.bank), _lexicon(args.lexicon))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind, items in sets.items():
        write_qa(out / f"ood_{kind}.jsonl", items)
    return EXIT_OK


def cmd_split(args) -> int:
    episodes = [e for e in load_episodes(args.episodes) if e.split == Split.TRAIN.value]
    if not episodes:
        raise ValueError(f"{args.episodes}: no train episodes")
    lex = _lexicon(args.lexicon)
    if args.mode == "object":
        spec = object_split(episodes, compute_stats(episodes, args.workers), lex, args.seed, args.rank_by)
    else:
        spec = verb_split(episodes, lex, args.seed, args.verb)
    spec.save(args.out)
    log.info("held out %d of %d train episodes", len(spec.heldout_episode_ids), len(episodes))
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = compute_stats(load_episodes(args.episodes), args.workers)
    if args.out:
        jsonio.write_json(args.out, "stats", stats.to_dict())
    else:
        json.dump({**jsonio.header("stats"), **stats.to_dict()}, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    lex = _lexicon(args.lexicon)
    qa = [item for path in args.qa for item in read_qa(path)]
    episodes = [ep for path in args.episodes for ep in load_episodes(path)]
    if args.predictions:
        predictions = read_predictions(args.predictions)
        name = f"file:{args.predictions}"
    else:
        tables = None
        if args.train_qa or args.train_episodes:
            train_qa = read_qa(args.train_qa) if args.train_qa else []
            stats = compute_stats(load_episodes(args.train_episodes), args.workers) if args.train_episodes else None
            tables = PriorTables.build(train_qa, stats, lex)
        responder = make_responder(args.responder, tables=tables, seed=args.seed, timeout=args.timeout,
                                   n_children=args.workers)
        predictions = responder.run(qa, {ep.episode_id: ep for ep in episodes})
        name = responder.name
        if args.predictions_out:
            write_predictions(args.predictions_out, predictions, (i.qa_id for i in qa))
    split = SplitSpec.load(args.split) if args.split else None
    report = evaluate(qa, predictions, lex, responder=name, split=split, episodes=episodes)
    report.save(args.out)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    result = aggregate_runs([EvalReport.load(p) for p in args.reports])
    jsonio.write_json(args.out, "aggregate", result)
    return EXIT_OK


def cmd_validate(args) -> int:
    bad = 0
    episodes = []
    for path in args.episodes:
        episodes.extend(load_episodes(path))
    for episode_id, violation in validate_corpus(episodes):
        print(f"{episode_id}: {violation}", file=sys.stderr)
        bad += 1
    print(f"{len(episodes)} episode(s), {bad} violation(s)", file=sys.stderr)
    return EXIT_DATA if bad else EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "generate": cmd_generate,
    "ood": cmd_ood,
    "split": cmd_split,
    "stats": cmd_stats,
    "evaluate": cmd_evaluate,
    "aggregate": cmd_aggregate,
    "validate": cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        # downstream reader (e.g. ``head``) closed early
        sys.stderr.close()
        return EXIT_OK
    except ResponderProtocolError as exc:
        print(f"epiqa: responder error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (jsonio.FormatError, EpisodeFormatError) as exc:
        print(f"epiqa: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, OSError) as exc:
        print(f"epiqa: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
