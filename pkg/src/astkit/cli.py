"""Command-line entry points for the simulation-testing pipeline.

Exit codes: 0 success, 2 validation failure, 3 backend error, 4 bad input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import (
    AstkitError,
    BackendUnavailable,
    BadMagic,
    CorruptHeader,
    CorruptLog,
    MissingHeader,
    NoDataRows,
    NonMonotonicTimestamps,
    Timeout,
    UnknownLog,
    UnknownRun,
    UnparseableBlueprint,
    UnparseableScript,
    WrongStage,
)
from .orchestrator import Orchestrator
from .scenario import FeedbackNote

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_BAD_INPUT = 4

_BACKEND_ERRORS = (BackendUnavailable, Timeout)
_BAD_INPUT_ERRORS = (
    ValueError, UnknownRun, UnknownLog, WrongStage, FileNotFoundError,
    BadMagic, CorruptHeader, CorruptLog, MissingHeader, NoDataRows,
    NonMonotonicTimestamps,
)
_VALIDATION_ERRORS = (UnparseableBlueprint, UnparseableScript)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ast", description="sUAS simulation-test pipeline"
    )
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--workspace", help="workspace directory (default ast_workspace)")
    parser.add_argument("--mock", action="store_true",
                        help="use scripted backends and the built-in demo knowledge bases")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-corpus", help="build the incident knowledge base")
    p.add_argument("directory")

    p = sub.add_parser("build-param-kb", help="build the parameter knowledge base")
    p.add_argument("msg_dir")

    p = sub.add_parser("run", help="start a run: blueprint generation + stage gate")
    p.add_argument("--goal", required=True)

    p = sub.add_parser("approve", help="approve a drafted blueprint")
    p.add_argument("run_id")

    p = sub.add_parser("feedback", help="send blueprint feedback")
    p.add_argument("run_id")
    p.add_argument("--text", required=True)
    p.add_argument("--section", default="all",
                   choices=("environment", "mission", "test_properties", "all"))
    p.add_argument("--author", default="cli")

    p = sub.add_parser("ingest-log", help="ingest a flight log into a run")
    p.add_argument("run_id")
    p.add_argument("file")

    p = sub.add_parser("analyze", help="ask an interactive analytics question")
    p.add_argument("log_id")
    p.add_argument("--question", required=True)

    p = sub.add_parser("eval", help="(re)compute evaluation metrics for a run")
    p.add_argument("run_id")

    p = sub.add_parser("serve", help="serve the HTTP API")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", help="optional static UI directory to serve")

    return parser


def _orchestrator(args: argparse.Namespace) -> Orchestrator:
    config = load_config(args.config, mock=args.mock, workspace=args.workspace)
    return Orchestrator(config)


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except _BACKEND_ERRORS as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except _VALIDATION_ERRORS as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _BAD_INPUT_ERRORS as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except AstkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "ingest-corpus":
        orc = _orchestrator(args)
        manifest = orc.ingest_corpus_dir(args.directory)
        _print_json({"sources": [list(row) for row in manifest.sources]})
        return EXIT_OK

    if args.command == "build-param-kb":
        orc = _orchestrator(args)
        count = orc.build_param_kb(args.msg_dir)
        _print_json({"parameters": count})
        return EXIT_OK

    if args.command == "run":
        orc = _orchestrator(args)
        manifest = orc.start_run(args.goal)
        _print_json(manifest.to_dict())
        if manifest.stage == "failed":
            cause = manifest.error or ""
            return EXIT_BACKEND if "BackendUnavailable" in cause or "Timeout" in cause \
                else EXIT_VALIDATION
        return EXIT_OK

    if args.command == "approve":
        orc = _orchestrator(args)
        manifest = orc.approve(args.run_id)
        _print_json(manifest.to_dict())
        return EXIT_OK if manifest.stage == "scripts_validated" else EXIT_VALIDATION

    if args.command == "feedback":
        orc = _orchestrator(args)
        note = FeedbackNote(author=args.author, text=args.text,
                            target_section=args.section)
        manifest = orc.submit_feedback(args.run_id, note)
        _print_json(manifest.to_dict())
        return EXIT_OK

    if args.command == "ingest-log":
        orc = _orchestrator(args)
        data = Path(args.file).read_bytes()
        manifest = orc.ingest_flight_log(args.run_id, data)
        _print_json(manifest.to_dict())
        return EXIT_OK

    if args.command == "analyze":
        orc = _orchestrator(args)
        report = orc.query_analytics(args.log_id, args.question)
        _print_json(report.to_dict())
        return EXIT_OK

    if args.command == "eval":
        orc = _orchestrator(args)
        report = orc.evaluate_run(args.run_id)
        _print_json(report.to_dict())
        return EXIT_OK

    if args.command == "serve":
        from .server import serve  # deferred so library use never binds sockets

        orc = _orchestrator(args)
        server = serve(orc, host=args.host, port=args.port, ui_dir=args.ui_dir)
        host, port = server.server_address[:2]
        print(f"listening on http://{host}:{port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            server.shutdown()
        return EXIT_OK

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
