"""Command-line entry point.

Subcommands: ingest, build-store, run, sweep-reranker, report,
dump-templates. Every flag mirrors a config key and wins over the config
file. Exit codes: 0 success, 1 config/schema error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence

from ragbench.harness import (
    ConfigError,
    DanglingGoldIdError,
    RunConfig,
    SchemaError,
    build_store_snapshot,
    ingest,
    run_evaluation,
    sweep_reranker,
)
from ragbench.judge import dump_templates
from ragbench.reporting import ReportError, load_run, write_report_files

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; bad flags are config errors here.
    def error(self, message):  # noqa: A002 - argparse API
        raise ConfigError(message)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to the JSON run config")
    parser.add_argument("--method", help="override method name")
    parser.add_argument("--k", type=int, help="override retrieval depth")
    parser.add_argument("--ratio", type=int, help="override reranker ratio")
    parser.add_argument("--out", help="override output directory")
    parser.add_argument("--seed", type=int, help="override random seed")
    parser.add_argument("--max-in-flight", type=int, help="override request concurrency")
    parser.add_argument("--mock", help="echo or transcript:<path>")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ragbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "validate the dataset files and print stats"),
        ("build-store", "build dense + BM25 indexes and save a snapshot"),
        ("run", "run a full evaluation"),
        ("sweep-reranker", "compare reranker ratios against base retrieval"),
        ("report", "re-render table/CSV/figures from a finished run directory"),
        ("dump-templates", "write the default judge templates for customization"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        _add_common_flags(cmd)
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    config = RunConfig.from_file(args.config)
    method = config.method
    if args.method is not None:
        method = dataclasses.replace(method, method=args.method)
    if args.k is not None:
        method = dataclasses.replace(method, k=args.k)
    if args.ratio is not None:
        if args.ratio < 1:
            raise ConfigError("--ratio must be >= 1")
        method = dataclasses.replace(method, reranker_ratio=args.ratio)
    replacements: dict = {"method": method}
    if args.out is not None:
        replacements["out_dir"] = args.out
    if args.seed is not None:
        replacements["seed"] = args.seed
    if args.max_in_flight is not None:
        replacements["max_in_flight"] = args.max_in_flight
    if args.mock is not None:
        replacements["mock"] = args.mock
    try:
        return dataclasses.replace(config, **replacements)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_ingest(args: argparse.Namespace) -> int:
    config = load_config(args)
    records, documents = ingest(config.qa_path, config.corpus_path)
    print(json.dumps({"records": len(records), "documents": len(documents)}, sort_keys=True))
    return 0


def _cmd_build_store(args: argparse.Namespace) -> int:
    config = load_config(args)
    path = f"{config.out_dir}/store.json"
    stats = build_store_snapshot(config, path)
    print(json.dumps(stats, sort_keys=True))
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args)
    report = run_evaluation(config)
    counts = report.aggregates.get("counts", {})
    print(
        json.dumps(
            {"out_dir": config.out_dir, "rows": len(report.rows), "counts": counts},
            sort_keys=True,
        )
    )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args)
    sweep = sweep_reranker(config)
    print(
        json.dumps(
            {
                "out_dir": config.out_dir,
                "ratios": [entry["ratio"] for entry in sweep["entries"]],
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("--out must point at a finished run directory")
    report = load_run(args.out)
    written = write_report_files(report, args.out)
    print(json.dumps({"written": written}, sort_keys=True))
    return 0


def _cmd_dump_templates(args: argparse.Namespace) -> int:
    out_dir = args.out or "judge_templates"
    written = dump_templates(out_dir)
    print(json.dumps({"written": written}, sort_keys=True))
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "build-store": _cmd_build_store,
    "run": _cmd_run,
    "sweep-reranker": _cmd_sweep,
    "report": _cmd_report,
    "dump-templates": _cmd_dump_templates,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ConfigError, SchemaError, DanglingGoldIdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 2
        logger.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
