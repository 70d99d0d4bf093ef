"""Command-line front end: embed a corpus and write the interchange file."""

from __future__ import annotations

import argparse
import json
import sys

from .exporter import FEATURE_TAGS, ExportError, ExportJob, export

__version__ = "0.1.0"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Embed commit texts with a sentence-transformers model "
        "and dump the vectors in the interchange format.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--corpus", required=True, help="generic corpus CSV")
    parser.add_argument(
        "--model", required=True, help="sentence-encoder name or local path"
    )
    parser.add_argument("--out", required=True, help="interchange file to write")
    parser.add_argument("--feature", default="msg", choices=FEATURE_TAGS)
    parser.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = export(
            ExportJob(
                corpus_path=args.corpus,
                model_ref=args.model,
                feature_tag=args.feature,
                batch_size=args.batch_size,
                output_path=args.out,
            )
        )
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        json.dumps(
            {
                "output": str(result.path),
                "records": result.records,
                "dimension": result.dimension,
            }
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
