"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (apply_alignment, build_corpus, load_contextual_embeddings, load_embeddings,
                     load_matrix, parse_conllu, serialize_conllu)
from .errors import DataError, NumericalError
from .metrics import evaluate_corpus, language_distance
from .model import decode
from .transfer import TransferConfig, finetune_target, pretrain_source

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("structflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_treebank(path):
    with open(path, encoding="utf-8") as fh:
        return parse_conllu(fh)


def _observations(args, sentences):
    if args.contextual:
        with open(args.contextual, encoding="utf-8") as fh:
            vectors = load_contextual_embeddings(fh, sentences)
    else:
        if not args.embeddings:
            raise UsageError("either --embeddings or --contextual is required")
        with open(args.embeddings, encoding="utf-8") as fh:
            vectors = load_embeddings(fh)
        if args.alignment:
            with open(args.alignment, encoding="utf-8") as fh:
                vectors = apply_alignment(vectors, load_matrix(fh))
    return build_corpus(sentences, vectors)


_OVERRIDES = {
    "task": "task", "epochs": "epochs", "batch_size": "batch_size", "lr": "learning_rate",
    "restarts": "restarts", "seed": "seed", "beta1": "beta1", "beta2": "beta2", "beta3": "beta3",
    "max_length": "max_finetune_length", "tag_dim": "tag_dim", "flow": "flow", "layers": "n_layers",
}


def _config(args, preset):
    """Preset defaults, then the JSON config file, then command-line flags."""
    values = dataclasses.asdict(preset)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        TransferConfig.from_dict({**values, **data})
        values.update(data)
    for flag, field in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[field] = value
    try:
        return TransferConfig.from_dict(values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _task_hint(args):
    if args.task:
        return args.task
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            return json.load(fh).get("task", "tag")
    return "tag"


def cmd_train_source(args):
    config = _config(args, TransferConfig.source(_task_hint(args)))
    train = _observations(args, _read_treebank(args.treebank))
    dev = _observations(args, _read_treebank(args.dev)) if args.dev else None
    ckpt = pretrain_source(train, config, dev=dev)
    save_checkpoint(ckpt, args.output)
    print(json.dumps({"checkpoint": args.output, "dev_metric": ckpt.metadata["dev_metric"],
                      "seed": ckpt.metadata["seed"]}))


def cmd_finetune(args):
    source = load_checkpoint(args.source)
    preset = TransferConfig.finetune(source.params.task, args.group,
                                     n_categories=source.params.K, tag_dim=source.params.tag_dim)
    config = _config(args, preset)
    target = _observations(args, _read_treebank(args.treebank))
    ckpt = finetune_target(source, target, config)
    save_checkpoint(ckpt, args.output)
    print(json.dumps({"checkpoint": args.output, "history": ckpt.metadata["history"]}))


def cmd_predict(args):
    params = load_checkpoint(args.checkpoint).params
    sentences = _read_treebank(args.treebank)
    corpus = _observations(args, sentences)
    out = []
    for sent, obs in zip(sentences, corpus):
        pred = decode(params, obs)
        if params.task == "tag":
            out.append(dataclasses.replace(sent, upos=tuple(pred)))
        else:
            out.append(dataclasses.replace(sent, heads=tuple(pred)))
    text = serialize_conllu(out)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    report = evaluate_corpus(args.task, _read_treebank(args.pred), _read_treebank(args.gold))
    print(report.to_json())


def cmd_distance(args):
    print(f"{language_distance(args.genetic, args.geographic, args.syntactic):.6g}")


def build_parser():
    parser = _Parser(prog="structflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def inputs(p):
        p.add_argument("--treebank", required=True, help="CoNLL-U file")
        p.add_argument("--embeddings", help="word vectors, text format with 'count dim' header")
        p.add_argument("--alignment", help="square matrix applied to every word vector")
        p.add_argument("--contextual", help="per-token vectors: sent_id<TAB>index<TAB>values")

    def overrides(p):
        p.add_argument("--config", help="JSON file with TransferConfig fields")
        p.add_argument("--task", choices=("tag", "parse"))
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--restarts", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--beta1", type=float)
        p.add_argument("--beta2", type=float)
        p.add_argument("--beta3", type=float)
        p.add_argument("--max-length", type=int)
        p.add_argument("--tag-dim", type=int)
        p.add_argument("--flow", choices=("nice", "linear", "identity"))
        p.add_argument("--layers", type=int)

    p = sub.add_parser("train-source", help="supervised training on a source treebank")
    inputs(p)
    overrides(p)
    p.add_argument("--dev", help="CoNLL-U used to select among restarts")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("finetune", help="unsupervised, regularised target fine-tuning")
    inputs(p)
    overrides(p)
    p.add_argument("--source", required=True, help="source checkpoint")
    p.add_argument("--group", choices=("distant", "nearby"), default="distant",
                   help="parsing beta preset")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="fill UPOS or HEAD columns with model predictions")
    inputs(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predicted CoNLL-U against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--task", choices=("tag", "parse"), default="tag")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("distance", help="mean of genetic, geographic and syntactic distances")
    p.add_argument("genetic", type=float)
    p.add_argument("geographic", type=float)
    p.add_argument("syntactic", type=float)
    p.set_defaults(func=cmd_distance)
    return parser


def cli_main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
