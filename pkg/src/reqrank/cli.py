"""Command line front end: ingest, train, index, eval, query, serve.

Exit codes: 0 on success, 2 for usage and input validation problems
(bad flags, malformed config, missing input files), 1 for runtime
failures. The config comes from --config, falling back to the
REQRANK_CONFIG environment variable, then to built-in defaults.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig, find_config
from .corpus import CorpusError
from .embed import EmbeddingError
from .evaluation import EvalError
from .pipeline import PipelineError, run_eval, run_index, run_ingest, run_query, run_train
from .rank import RankError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_USAGE_ERRORS = (ConfigError, PipelineError, CorpusError, EmbeddingError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reqrank", description="request-to-item retrieval pipeline")
    parser.add_argument("--config", default=None, help="path to a JSON or YAML pipeline config")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load raw data, tag, sample negatives, split, write corpus dirs")
    p.add_argument("--seed", type=int, default=None, help="override the negative sampling seed")
    p.add_argument("--out", default=None, help="override the corpus output directory")

    p = sub.add_parser("train", help="train the projection towers on the train split")
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.add_argument("--out", default=None, help="override the checkpoint path")

    sub.add_parser("index", help="build the dense and lexical indexes over the full catalog")

    p = sub.add_parser("eval", help="rank per-request pools for every configured model and report metrics")
    p.add_argument("--split", default=None, choices=("train", "dev", "test", "full"))
    p.add_argument("--pool-size", type=int, default=None, help="override the candidate pool size")

    p = sub.add_parser("query", help="rank the whole catalog for one request text")
    p.add_argument("text", help="free-form request text")
    p.add_argument("--k", type=int, default=5, help="number of results")
    p.add_argument("--model", default=None, help="model tag; default is the configured default")

    sub.add_parser("serve", help="start the HTTP query and feedback service")
    return parser


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    from dataclasses import replace

    if args.command == "ingest":
        if args.seed is not None:
            config = replace(config, negative_seed=args.seed)
        if args.out is not None:
            out = Path(args.out)
            config = replace(config, corpus_dir=out if out.is_absolute() else Path.cwd() / out)
    return config


def _dispatch(args: argparse.Namespace, config: PipelineConfig) -> int:
    if args.command == "ingest":
        manifest = run_ingest(config)
        print(f"wrote corpus to {config.corpus_dir}")
        for name in ("train", "dev", "test"):
            counts = manifest["splits"][name]
            print(f"  {name}: {counts['requests']} requests, {counts['pairs']} pairs")
        return EXIT_OK

    if args.command == "train":
        out = Path(args.out) if args.out is not None else None
        log = run_train(config, seed=args.seed, out=out)
        final = log["epochs"][-1]["mean_train_loss"] if log["epochs"] else float("nan")
        print(f"trained {len(log['epochs'])} epochs, final mean loss {final:.6f}")
        print(f"checkpoint: {out or config.checkpoint}")
        return EXIT_OK

    if args.command == "index":
        stats = run_index(config)
        print(f"dense index: {stats['dense_rows']} items -> {config.dense_index}")
        print(f"bm25 index: {stats['bm25_docs']} items -> {config.bm25_index}")
        return EXIT_OK

    if args.command == "eval":
        table = run_eval(config, split=args.split, pool_size=args.pool_size)
        print(table)
        return EXIT_OK

    if args.command == "query":
        if args.k < 1:
            raise PipelineError(f"--k must be >= 1, got {args.k}")
        results = run_query(config, args.text, k=args.k, model_tag=args.model)
        for pos, (item_id, text, score) in enumerate(results, start=1):
            print(f"{pos}\t{item_id}\t{score:.6f}\t{text}")
        return EXIT_OK

    if args.command == "serve":
        import uvicorn

        from .server import create_app

        app = create_app(config)
        uvicorn.run(app, host=config.serve_host, port=config.serve_port, log_level="info")
        return EXIT_OK

    raise PipelineError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)

    try:
        config = find_config(args.config)
        config = _apply_overrides(config, args)
        return _dispatch(args, config)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RankError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
