"""Command entrypoint: resolve model/data factories, run the extraction."""

from __future__ import annotations

import argparse
import importlib
import sys

from .extract import ExtractConfig, ExtractionError, extract


def resolve_factory(spec: str):
    """Import ``package.module:attr`` and return the attribute (a callable)."""
    if ":" not in spec:
        raise ExtractionError(f"factory {spec!r} must look like module.path:attr")
    mod_name, attr = spec.split(":", 1)
    try:
        module = importlib.import_module(mod_name)
    except ImportError as exc:
        raise ExtractionError(f"cannot import {mod_name!r}: {exc}") from exc
    try:
        factory = getattr(module, attr)
    except AttributeError as exc:
        raise ExtractionError(f"{mod_name!r} has no attribute {attr!r}") from exc
    return factory


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pyextract",
        description="Train a torch classifier and export a DCTF dynamics artifact.",
    )
    parser.add_argument("--model", required=True,
                        help="module.path:factory returning an nn.Module")
    parser.add_argument("--data", required=True,
                        help="module.path:factory returning a map-style dataset")
    parser.add_argument("--epochs", type=int, required=True)
    parser.add_argument("--ref-epoch", type=int, required=True)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--lr", type=float, default=0.01)
    parser.add_argument("--momentum", type=float, default=0.9)
    parser.add_argument("--weight-decay", type=float, default=5e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--layer", default=None,
                        help="named module to treat as the classifier head")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("-o", "--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExtractConfig(
        epochs=args.epochs,
        reference_epoch=args.ref_epoch,
        batch_size=args.batch_size,
        lr=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        seed=args.seed,
        layer=args.layer,
        device=args.device,
    )
    try:
        model = resolve_factory(args.model)()
        dataset = resolve_factory(args.data)()
        out = extract(model, dataset, cfg, args.out)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote artifact to {out} (n={len(dataset)}, E={cfg.epochs}, "
          f"reference epoch {cfg.reference_epoch})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
