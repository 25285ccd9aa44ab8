"""Command-line entry point: fewgen-embed --input data.jsonl --output emb.jsonl."""

from __future__ import annotations

import argparse
import sys

from .extract import ExtractError, extract

EXIT_OK = 0
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewgen-embed",
        description="Embed a labeled text dataset into the fewgen embedding file format.",
    )
    parser.add_argument("--input", required=True, help="JSONL of {id,label,text} records")
    parser.add_argument("--output", required=True, help="embedding file to write")
    parser.add_argument("--encoder", default="hash:64",
                        help="hash:<dim> or a transformers checkpoint name")
    parser.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        count = extract(args.input, args.encoder, args.output, args.batch_size)
    except (ExtractError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {args.output}: {count} records, encoder {args.encoder}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
