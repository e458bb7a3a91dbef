"""Command line for the attribute-to-embedding export bridge."""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportError, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lm-export",
        description="Encode attributes.jsonl with a pretrained language model "
                    "and write engine-compatible embeddings.jsonl")
    parser.add_argument("--attrs", required=True, help="attributes.jsonl path")
    parser.add_argument("--model", required=True,
                        help="model name or local checkpoint directory")
    parser.add_argument("--out", required=True, help="embeddings.jsonl path")
    parser.add_argument("--pool", choices=("mean", "last"), default="mean")
    parser.add_argument("--dim-check", type=int,
                        help="fail unless the output dimension equals this")
    parser.add_argument("--truncate-dim", type=int,
                        help="keep only the first D output dimensions")
    parser.add_argument("--batch-size", type=int, default=16)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = export(args.attrs, args.model, args.out, pool=args.pool,
                         dim_check=args.dim_check, truncate_dim=args.truncate_dim,
                         batch_size=args.batch_size)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
