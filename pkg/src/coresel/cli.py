"""Command-line orchestration: trace, select, eval, sweep.

Every subcommand is a thin wrapper over the library; given the same flags it
produces byte-identical artifact directories and coreset files. Exit codes:
0 success, 2 argument or validation error, 3 capability mismatch (the
artifact lacks a field the method needs), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from .artifact import (
    CoresetResult,
    DatasetArtifact,
    ValidationSplit,
    load_artifact,
    save_artifact,
)
from .engine import method_names, run_method
from .errors import (
    ArtifactValidationError,
    CoreselError,
    MissingTraceError,
    NumericalError,
    TensorFormatError,
)
from .trainer import (
    SyntheticSpec,
    TrainConfig,
    evaluate_coreset,
    generate_synthetic,
    holdout_split,
    load_csv,
    record_trace,
    record_trace_with_validation,
)

CORESET_SCHEMA_VERSION = 1
TEST_SPLIT_DIR = "test"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CAPABILITY = 3
EXIT_NUMERICAL = 4

_SPEC_TOKEN = re.compile(r"^(c|n|d|sep|noise)(\d+(?:\.\d+)?)$")


def parse_synthetic_spec(text: str, seed: int) -> SyntheticSpec:
    """Parse compact specs like ``c4-n200-d16-sep8`` (optional ``-noise0.5``)."""
    fields = {}
    for token in text.split("-"):
        m = _SPEC_TOKEN.match(token)
        if not m:
            raise ArtifactValidationError(
                f"bad synthetic spec token {token!r}; expected c<int>-n<int>-d<int>-sep<float>[-noise<float>]"
            )
        fields[m.group(1)] = float(m.group(2))
    missing = {"c", "n", "d", "sep"} - fields.keys()
    if missing:
        raise ArtifactValidationError(f"synthetic spec missing {sorted(missing)}")
    return SyntheticSpec(
        n_per_class=int(fields["n"]),
        num_classes=int(fields["c"]),
        dim=int(fields["d"]),
        cluster_separation=fields["sep"],
        noise_sigma=fields.get("noise", 1.0),
        seed=seed,
    )


def write_coreset(result: CoresetResult, params: dict, path) -> None:
    doc = {
        "version": CORESET_SCHEMA_VERSION,
        "method": result.method,
        "fraction": result.fraction,
        "seed": result.seed,
        "params": params,
        "indices": [int(i) for i in result.indices],
        "weights": [float(w) for w in result.weights],
        "metadata": result.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def read_coreset(path) -> tuple[CoresetResult, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactValidationError(f"cannot read coreset file {path}: {exc}") from exc
    if doc.get("version") != CORESET_SCHEMA_VERSION:
        raise ArtifactValidationError(f"unsupported coreset version {doc.get('version')!r}")
    result = CoresetResult(
        indices=np.asarray(doc["indices"], dtype=np.int64),
        weights=np.asarray(doc["weights"], dtype=np.float64),
        method=doc["method"],
        fraction=doc["fraction"],
        seed=doc["seed"],
        metadata=doc.get("metadata", {}),
    )
    result.validate()
    return result, doc.get("params", {})


def _train_config(args, seed: int | None = None) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        seed=args.seed if seed is None else seed,
        lr_schedule=args.lr_schedule,
    )


def _add_train_flags(parser, epochs_default=20):
    parser.add_argument("--arch", choices=("linear", "mlp1"), default="mlp1")
    parser.add_argument("--hidden", type=int, default=32, help="mlp1 hidden width")
    parser.add_argument("--epochs", type=int, default=epochs_default)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lr", type=float, default=0.1)
    parser.add_argument("--momentum", type=float, default=0.9)
    parser.add_argument("--weight-decay", type=float, default=5e-4)
    parser.add_argument("--lr-schedule", choices=("constant", "cosine"), default="cosine")


def cmd_trace(args) -> int:
    if (args.synthetic is None) == (args.csv is None):
        raise ArtifactValidationError("exactly one of --synthetic or --csv is required")
    out = Path(args.out)
    cfg = _train_config(args)

    if args.synthetic is not None:
        spec = parse_synthetic_spec(args.synthetic, args.seed)
        train_f, train_l, test_f, test_l = generate_synthetic(spec)
    else:
        train_f, train_l = load_csv(args.csv)
        test_f = test_l = None

    validation = None
    if args.val_fraction > 0:
        train_f, train_l, val_f, val_l, _ = holdout_split(train_f, train_l, args.val_fraction)
        trace, val_trace = record_trace_with_validation(
            args.arch, train_f, train_l, val_f, val_l, cfg, args.ref_epoch, args.hidden)
        validation = ValidationSplit(val_f, val_l, val_trace)
    else:
        trace = record_trace(args.arch, train_f, train_l, cfg, args.ref_epoch, args.hidden)

    artifact = DatasetArtifact(train_f, train_l, trace, validation)
    save_artifact(artifact, out)
    if test_f is not None:
        save_artifact(DatasetArtifact(test_f, test_l), out / TEST_SPLIT_DIR)
    print(f"wrote artifact to {out} (n={artifact.n}, C={train_l.num_classes}, "
          f"E={cfg.epochs}, reference epoch {args.ref_epoch})")
    return EXIT_OK


def cmd_select(args) -> int:
    artifact = load_artifact(args.artifact)
    extra = tuple(load_artifact(p) for p in args.runs or ())
    params = {
        "knn": args.knn,
        "eta": args.eta,
        "grad_space": args.grad_space,
        "gc_lambda": args.lam,
        "omp_lambda": args.lam,
    }
    result = run_method(artifact, args.method, args.fraction, args.balanced,
                        args.seed, params, extra)
    effective = {k: v for k, v in params.items() if v is not None}
    write_coreset(result, effective, args.out)
    print(f"wrote {args.out}: method={result.method} k={len(result.indices)} "
          f"of n={artifact.n}")
    return EXIT_OK


def _eval_once(artifact, result, test_art, args, seed) -> float:
    cfg = _train_config(args, seed)
    return evaluate_coreset(result, artifact.features, artifact.labels,
                            test_art.features, test_art.labels, cfg,
                            args.arch, args.hidden)


def _load_test_split(args, artifact_path) -> DatasetArtifact:
    test_path = Path(args.test) if args.test else Path(artifact_path) / TEST_SPLIT_DIR
    if not (test_path / "manifest.json").is_file():
        raise ArtifactValidationError(
            f"no test split at {test_path}; pass --test pointing at an artifact directory"
        )
    return load_artifact(test_path)


def cmd_eval(args) -> int:
    artifact = load_artifact(args.artifact)
    result, _ = read_coreset(args.coreset)
    result.validate(n=artifact.n)
    test_art = _load_test_split(args, args.artifact)
    if args.repeats < 1:
        raise ArtifactValidationError("--repeats must be >= 1")
    accs = [_eval_once(artifact, result, test_art, args, args.seed + i)
            for i in range(args.repeats)]
    # population std over exactly the repeat seeds (denominator r)
    report = {
        "method": result.method,
        "fraction": result.fraction,
        "coreset_size": int(len(result.indices)),
        "repeats": args.repeats,
        "seeds": [args.seed + i for i in range(args.repeats)],
        "accuracies": accs,
        "mean_acc": float(np.mean(accs)),
        "std_acc": float(np.std(accs)),
    }
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    print(f"{result.method} fraction={result.fraction:g}: "
          f"{100 * report['mean_acc']:.2f} +/- {100 * report['std_acc']:.2f} "
          f"({args.repeats} seeds)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    methods = [m for m in (args.methods.split(",") if args.methods else []) if m]
    if args.methods == "all":
        methods = method_names()
    if not methods:
        raise ArtifactValidationError("--methods must list at least one method")
    try:
        fractions = [float(f) for f in args.fractions.split(",") if f]
    except ValueError as exc:
        raise ArtifactValidationError(f"bad --fractions value: {exc}") from exc
    if not fractions:
        raise ArtifactValidationError("--fractions must list at least one fraction")
    artifact = load_artifact(args.artifact)
    test_art = _load_test_split(args, args.artifact)

    rows = []
    for method in methods:
        for fraction in fractions:
            started = time.perf_counter()
            accs = []
            for i in range(args.repeats):
                seed = args.seed + i
                result = run_method(artifact, method, fraction, args.balanced,
                                    seed, {})
                accs.append(_eval_once(artifact, result, test_art, args, seed))
            rows.append({
                "method": method,
                "fraction": fraction,
                "repeats": args.repeats,
                "mean_acc": float(np.mean(accs)),
                "std_acc": float(np.std(accs)),
                "seconds": time.perf_counter() - started,
            })

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["method", "fraction", "repeats", "mean_acc",
                                "std_acc", "seconds"])
            writer.writeheader()
            writer.writerows(rows)

    header = f"{'method':<12} {'fraction':>8} {'mean':>7} {'std':>6} {'secs':>7}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(f"{row['method']:<12} {row['fraction']:>8g} "
              f"{100 * row['mean_acc']:>7.2f} {100 * row['std_acc']:>6.2f} "
              f"{row['seconds']:>7.2f}")
    if any(r["fraction"] == 1.0 for r in rows):
        print("note: fraction 1.0 rows train on the full set and share the upper bound")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coresel",
        description="Coreset selection: build traces, select subsets, evaluate them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="train a proxy and write a dataset artifact")
    p.add_argument("--synthetic", help="spec like c4-n200-d16-sep8[-noise0.5]")
    p.add_argument("--csv", help="numeric CSV, final column = integer label")
    p.add_argument("--ref-epoch", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.0,
                   help="carve a validation split (needed by glister)")
    _add_train_flags(p)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("select", help="run one selection method on an artifact")
    p.add_argument("artifact")
    p.add_argument("--method", required=True, choices=method_names())
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="graph-cut redundancy / gradmatch ridge coefficient")
    p.add_argument("--knn", type=int, default=None, help="cal neighborhood size")
    p.add_argument("--eta", type=float, default=None, help="glister step size")
    p.add_argument("--grad-space", choices=("error_vector", "full_last_layer"),
                   default=None)
    p.add_argument("--runs", nargs="+", default=None,
                   help="additional run artifacts whose scores are averaged")
    p.add_argument("-o", "--out", default="coreset.json")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="retrain on a coreset and report test accuracy")
    p.add_argument("artifact")
    p.add_argument("--coreset", required=True)
    p.add_argument("--test", default=None,
                   help="test artifact directory (default: <artifact>/test)")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p, epochs_default=100)
    p.add_argument("-o", "--out", default=None, help="write a JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="methods x fractions accuracy table")
    p.add_argument("artifact")
    p.add_argument("--methods", required=True,
                   help="comma-separated method names, or 'all'")
    p.add_argument("--fractions", required=True, help="comma-separated fractions")
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test", default=None)
    _add_train_flags(p, epochs_default=100)
    p.add_argument("-o", "--out", default=None, help="write a CSV table here")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingTraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArtifactValidationError, TensorFormatError, CoreselError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
