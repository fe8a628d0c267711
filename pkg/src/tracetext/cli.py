"""Command-line front door: generate, validate, report, crosscheck,
fixtures, and serve.

Exit codes: 0 success, 1 operation error, 2 usage error (bad flags,
unreadable files, bad config).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import socket
import sys
from pathlib import Path

from . import fixtures as fixture_mod
from . import review
from .chain import ChainError, run_chain
from .config import AppConfig, ConfigError, load_config
from .llm import GeneratorUnconfigured, RemoteGenerator
from .model import (
    InvariantViolationError,
    MalformedInputError,
    SourceDocument,
    VersionMismatchError,
    deserialize,
    serialize,
    validate,
)
from .offline import OfflineGenerator, weights_for_sources

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _write_atomic(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def _sibling(out_path: str, suffix: str) -> str:
    path = Path(out_path)
    return str(path.with_name(path.stem + suffix))


def _read_source(path: str) -> SourceDocument:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    return SourceDocument(id=p.stem, text=text, title=p.stem)


def _load_doc(path: str):
    return deserialize(Path(path).read_bytes())


def _check_readable(*paths: str) -> str | None:
    for path in paths:
        if not Path(path).is_file():
            return f"cannot read file: {path}"
    return None


def _build_generator(backend: str, source: SourceDocument, cfg: AppConfig):
    if backend == "offline":
        weights = weights_for_sources([source], cfg.align.idf_floor)
        return OfflineGenerator(
            weights,
            align_cfg=cfg.align,
            sentence_count=cfg.summary_sentences,
            abbreviations=cfg.abbreviations(),
        )
    return RemoteGenerator.from_config(cfg.llm)


def cmd_generate(args) -> int:
    error = _check_readable(args.source)
    if error:
        print(error, file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    source = _read_source(args.source)
    try:
        generator = _build_generator(args.backend, source, cfg)
    except GeneratorUnconfigured as exc:
        print(f"generator_unconfigured: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        doc, report = run_chain(source, generator, cfg.chain_config())
    except ChainError as exc:
        print(f"generate failed at stage {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _write_atomic(args.out, serialize(doc))
    _write_atomic(_sibling(args.out, ".report.json"), _json_bytes(report.to_dict()))
    coverage = review.compute_coverage(doc)
    print(
        f"wrote {args.out}: {len(doc.claims)} claims, {len(doc.links)} linked, "
        f"coverage {coverage:.3f}"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    error = _check_readable(args.doc, args.source)
    if error:
        print(error, file=sys.stderr)
        return EXIT_USAGE
    source = _read_source(args.source)
    try:
        doc = _load_doc(args.doc)
    except InvariantViolationError as exc:
        for violation in exc.violations:
            print(f"{violation.code}: {violation.message}")
        return EXIT_ERROR
    except (MalformedInputError, VersionMismatchError) as exc:
        print(f"MalformedInput: {exc}")
        return EXIT_ERROR
    violations = validate(doc, source)
    for violation in violations:
        print(f"{violation.code}: {violation.message}")
    if violations:
        return EXIT_ERROR
    print("ok: document is valid against its source")
    return EXIT_OK


def cmd_report(args) -> int:
    error = _check_readable(args.doc)
    if error:
        print(error, file=sys.stderr)
        return EXIT_USAGE
    try:
        doc = _load_doc(args.doc)
    except (MalformedInputError, VersionMismatchError, InvariantViolationError) as exc:
        print(f"cannot load document: {exc}", file=sys.stderr)
        return EXIT_ERROR
    coverage = review.compute_coverage(doc)
    report = review.accuracy_report(doc)
    print(f"{'coverage':<18} {coverage:.4f}")
    print(report.as_table())
    if args.json:
        _write_atomic(
            args.json, _json_bytes({"coverage": coverage, "accuracy": report.to_dict()})
        )
    return EXIT_OK


def cmd_crosscheck(args) -> int:
    error = _check_readable(args.doc, args.source)
    if error:
        print(error, file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    source = _read_source(args.source)
    try:
        doc = _load_doc(args.doc)
    except (MalformedInputError, VersionMismatchError, InvariantViolationError) as exc:
        print(f"cannot load document: {exc}", file=sys.stderr)
        return EXIT_ERROR
    weights = weights_for_sources([source], cfg.align.idf_floor)
    entries = review.cross_check(doc, source, cfg.align, weights)
    disagreements = 0
    for entry in entries:
        best = entry.offline_best
        best_text = f"[{best.span.start},{best.span.end}) score {best.score:.3f}" if best else "none"
        flag = ""
        if entry.disagree:
            flag = "  DISAGREE"
            disagreements += 1
        linked = "linked" if entry.linked else "unlinked"
        print(f"{entry.claim_id:<6} {linked:<9} offline best: {best_text}{flag}")
    print(f"{disagreements} disagreement(s) across {len(entries)} claims")
    return EXIT_OK


def cmd_fixtures(args) -> int:
    error = _check_readable(args.source)
    if error:
        print(error, file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    source = _read_source(args.source)
    generator = _build_generator("offline", source, cfg)
    try:
        doc, _ = run_chain(source, generator, cfg.chain_config())
        doc, manifest = fixture_mod.inject(doc, source, args.kind)
    except (ChainError, fixture_mod.InjectionError) as exc:
        print(f"fixture injection failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _write_atomic(args.out, serialize(doc))
    _write_atomic(_sibling(args.out, ".manifest.json"), _json_bytes(manifest))
    print(f"wrote {args.out} ({args.kind} fixture, claim {manifest['claim_id']})")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    # Fail fast with a clean message if the port is taken.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((cfg.host, cfg.port))
    except OSError as exc:
        print(f"cannot bind {cfg.host}:{cfg.port}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        probe.close()

    import uvicorn

    from .service import create_app
    from .store import JsonFileStore

    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    store = JsonFileStore(cfg.store_path)
    app = create_app(cfg, store)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trace", description="Generate and work with traceable texts."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="summarize a source file and link claims back into it")
    p.add_argument("--source", required=True, help="path to a plain-text source file")
    p.add_argument("--backend", choices=["offline", "llm"], default="offline")
    p.add_argument("--out", required=True, help="output document path (JSON)")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check a document against its source")
    p.add_argument("--doc", required=True)
    p.add_argument("--source", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="coverage and accuracy for a document")
    p.add_argument("--doc", required=True)
    p.add_argument("--json", default=None, help="also write the report as JSON here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("crosscheck", help="compare links against the offline aligner")
    p.add_argument("--doc", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_crosscheck)

    p = sub.add_parser("fixtures", help="produce a labeled hallucination fixture")
    p.add_argument("--kind", choices=["contradiction", "extrapolation"], required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("serve", help="run the HTTP service until interrupted")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
