"""Command-line entry point: ingest, synth, train, resolve, score, probe.

Exit codes: 0 ok, 1 data error, 2 usage error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import net
from .ingest import FormatError, dumps_jsonl, parse_conll, parse_jsonl, write_conll
from .resolve import InferenceConfig, as_document, long_distance_probe, probe_csv, resolve_document
from .score import format_csv, format_markdown, report
from .train import TrainConfig, TrainingDiverged, generate_probe, generate_synthetic, train, write_trace_csv
from .window import Vocab

log = logging.getLogger("segcoref")

OK, DATA_ERROR, USAGE_ERROR, DIVERGED = 0, 1, 2, 3


class DataError(Exception):
    pass


def git_blob_hash(path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def read_documents(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        if str(path).endswith((".conll", "_conll", ".gold_conll", ".v4_gold_conll")):
            return parse_conll(text)
        return parse_jsonl(text)
    except FormatError as e:
        loc = f"{path}:{e.line}" if e.line is not None else str(path)
        raise DataError(f"{loc}: {e.msg}") from None


def _counts(docs) -> str:
    mentions = sum(len(d.mentions) for d in docs)
    clusters = sum(len(d.clusters) for d in docs)
    return f"documents={len(docs)} mentions={mentions} clusters={clusters}"


def cmd_ingest(args) -> int:
    docs = read_documents(args.input)
    Path(args.output).write_text(dumps_jsonl(docs), encoding="utf-8")
    print(_counts(docs))
    return OK


def cmd_synth(args) -> int:
    if args.n_docs < 0 or args.doc_len < 1 or args.n_entities < 0 or args.vocab_size < 1:
        raise argparse.ArgumentTypeError("n-docs, doc-len, n-entities and vocab-size must be positive")
    if args.probe_distances:
        dists = [int(x) for x in args.probe_distances.split(",") if x]
        docs = generate_probe(args.seed, dists, args.doc_len, args.vocab_size)
    else:
        if args.doc_len < args.n_entities:
            raise argparse.ArgumentTypeError("doc-len must be at least n-entities")
        docs = generate_synthetic(args.seed, args.n_docs, args.vocab_size, args.doc_len,
                                  args.n_entities, args.max_mentions)
    Path(args.output).write_text(dumps_jsonl(docs), encoding="utf-8")
    print(_counts(docs))
    return OK


def _train_config(args) -> TrainConfig:
    overrides = dict(K=args.K, L=args.L, threshold=args.threshold, jobs=args.jobs,
                     seed=getattr(args, "seed", None), max_steps=getattr(args, "steps", None),
                     lr=getattr(args, "lr", None))
    if args.config:
        return TrainConfig.load(args.config, **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_train(args) -> int:
    cfg = _train_config(args)
    docs = read_documents(args.corpus)
    if not docs:
        raise DataError(f"{args.corpus}: empty corpus")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(docs, cfg)
    net.save_checkpoint(result.resolver, out / "resolver.ckpt")
    net.save_checkpoint(result.detector, out / "detector.ckpt")
    result.vocab.save(out / "vocab.txt")
    (out / "config.txt").write_text(cfg.dumps())
    for name, trace in result.trace.items():
        write_trace_csv(trace, out / f"{name}_loss.csv")
    manifest = {
        "config": cfg.dumps().splitlines(),
        "seed": cfg.seed,
        "corpus": {str(args.corpus): git_blob_hash(args.corpus)},
        "checkpoints": {name: git_blob_hash(out / f"{name}.ckpt") for name in ("resolver", "detector")},
        "vocab": git_blob_hash(out / "vocab.txt"),
    }
    if args.config:
        manifest["config_file"] = {str(args.config): git_blob_hash(args.config)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    final = {k: v[-1][1] for k, v in result.trace.items() if v}
    print(" ".join(f"{k}_loss={v:.6f}" for k, v in final.items()) or "no training steps")
    return OK


def _load_models(ckpt_dir, args):
    ckpt_dir = Path(ckpt_dir)
    try:
        resolver = net.load_checkpoint(ckpt_dir / "resolver.ckpt")
        detector = net.load_checkpoint(ckpt_dir / "detector.ckpt")
        vocab = Vocab.load(ckpt_dir / "vocab.txt")
    except (OSError, ValueError) as e:
        raise DataError(str(e)) from None
    threshold = args.threshold
    if threshold is None and (ckpt_dir / "config.txt").exists():
        threshold = TrainConfig.load(ckpt_dir / "config.txt").threshold
    for name, model in (("resolver", resolver), ("detector", detector)):
        d = model.dims
        for field, want in (("K", args.K), ("L", args.L)):
            if want is not None and getattr(d, field) != want:
                raise DataError(f"{name} checkpoint has {field}={getattr(d, field)}, "
                                f"but {field}={want} was requested")
        if d.vocab_size != len(vocab):
            raise DataError(f"{name} checkpoint has vocab_size={d.vocab_size}, vocabulary has {len(vocab)}")
    if resolver.dims != detector.dims:
        raise DataError("resolver and detector checkpoints have different dims")
    cfg = InferenceConfig(resolver.dims.K, resolver.dims.L, 0.5 if threshold is None else threshold)
    return resolver, detector, vocab, cfg


def cmd_resolve(args) -> int:
    resolver, detector, vocab, cfg = _load_models(args.checkpoints, args)
    docs = read_documents(args.corpus)

    def run(doc):
        return as_document(doc, resolve_document(doc, detector, resolver, vocab, cfg))

    if args.jobs and args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            responses = list(pool.map(run, docs))
    else:
        responses = [run(d) for d in docs]
    Path(args.output).write_text(dumps_jsonl(responses), encoding="utf-8")
    if args.conll:
        Path(args.conll).write_text("".join(write_conll(d) for d in responses), encoding="utf-8")
    print(_counts(responses))
    return OK


def cmd_score(args) -> int:
    key, response = read_documents(args.key), read_documents(args.response)
    phis = ["phi3", "phi4"] if args.phi == "both" else [args.phi]
    try:
        rows = {f"response ({phi})" if len(phis) > 1 else "response":
                report(key, response, phi, args.keep_singletons) for phi in phis}
    except KeyError as e:
        raise DataError(e.args[0]) from None
    md, csv = format_markdown(rows), format_csv(rows)
    print(md, end="")
    if args.out:
        Path(args.out + ".md").write_text(md)
        Path(args.out + ".csv").write_text(csv)
    return OK


def cmd_probe(args) -> int:
    resolver, _, vocab, cfg = _load_models(args.checkpoints, args)
    docs = read_documents(args.corpus)
    buckets = [int(x) for x in args.buckets.split(",")]
    csv = probe_csv(long_distance_probe(docs, resolver, vocab, cfg, buckets))
    Path(args.output).write_text(csv)
    print(csv, end="")
    return OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threshold", type=float, default=None, help="decode threshold (default 0.5)")
    common.add_argument("--K", type=int, default=None, help="maximum span length")
    common.add_argument("--L", type=int, default=None, help="window capacity in tokens")
    common.add_argument("--config", default=None, help="flat key=value config file")
    common.add_argument("--jobs", type=int, default=None, help="worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="segcoref", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="CoNLL-2012 file to line-oriented documents")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    s.add_argument("output")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-docs", type=int, default=20)
    s.add_argument("--vocab-size", type=int, default=50)
    s.add_argument("--doc-len", type=int, default=60)
    s.add_argument("--n-entities", type=int, default=4)
    s.add_argument("--max-mentions", type=int, default=4)
    s.add_argument("--probe-distances", default=None,
                   help="comma-separated distances; writes long-distance probe documents instead")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train detector and resolver")
    s.add_argument("corpus")
    s.add_argument("out_dir")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("resolve", parents=[common], help="predict clusters with trained models")
    s.add_argument("corpus")
    s.add_argument("checkpoints")
    s.add_argument("output")
    s.add_argument("--conll", default=None, help="also write a CoNLL-format response")
    s.set_defaults(func=cmd_resolve)

    s = sub.add_parser("score", parents=[common], help="MUC / B3 / CEAF report")
    s.add_argument("key")
    s.add_argument("response")
    s.add_argument("--out", default=None, help="write OUT.md and OUT.csv")
    s.add_argument("--phi", choices=["phi3", "phi4", "both"], default="phi4")
    s.add_argument("--keep-singletons", action="store_true")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("probe", parents=[common], help="long-distance recall report")
    s.add_argument("corpus")
    s.add_argument("checkpoints")
    s.add_argument("output")
    s.add_argument("--buckets", default="0,10,50,120,243")
    s.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_ERROR
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return DIVERGED
    except (argparse.ArgumentTypeError, ValueError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
