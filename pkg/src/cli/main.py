#!/usr/bin/env python3
"""
TAPUDD CLI

Generate synthetic feature sets, fit OOD detectors on exported features,
score test features, evaluate score files and export 2-D score landscapes.
Every output is written atomically and gets a ``<output>.manifest.json``.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

import numpy as np
from pydantic import ValidationError

from tapudd import __version__, constants
from tapudd.archive import load_model, save_model
from tapudd.baselines import (
    fit_kl_matching,
    fit_tied_mahalanobis,
    score_energy_batch,
    score_msp_batch,
)
from tapudd.config import EnsembleConfig, FitConfig, TrainConfig
from tapudd.ensemble import fit_tapudd
from tapudd.errors import InvalidInput, ParseError, TapuddError
from tapudd.formats import atomic_write, read_features, write_features
from tapudd.landscape import landscape_grid
from tapudd.metrics import evaluate
from tapudd.scoring import scorer_for
from tapudd.stats import FeatureMatrix
from tapudd.synthetic import OOD_PROBES, SyntheticSpec, generate_synthetic, provenance
from tapudd.tap_mahalanobis import fit_tapmb
from tapudd.tap_mos import fit_tapmos

from .manifest import RunManifest, read_manifest, utc_now, write_manifest

logger = logging.getLogger("tapudd.cli")

METRICS = ["auroc", "aupr", "fpr95"]


class UsageError(Exception):
    """Flags that parse but do not make sense together (exit code 2)."""


def parse_k_list(value):
    try:
        k_list = [int(token) for token in value.split(",") if token.strip()]
    except ValueError:
        message = f"expected comma-separated integers, got {value!r}"
        raise argparse.ArgumentTypeError(message) from None
    if not k_list:
        raise argparse.ArgumentTypeError("k list is empty")
    return k_list


def positive_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}") from None
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {number}")
    return number


def parse_tpr(value):
    try:
        tpr = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {value!r}") from None
    if not 0 < tpr <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {tpr}")
    return tpr


def parse_metrics(value):
    metrics = [token.strip() for token in value.split(",") if token.strip()]
    unknown = sorted(set(metrics) - set(METRICS))
    if unknown or not metrics:
        raise argparse.ArgumentTypeError(f"metrics must be a subset of {','.join(METRICS)}")
    return metrics


def thread_count():
    raw = os.environ.get(constants.THREADS_ENV, "1")
    message = f"{constants.THREADS_ENV} must be a positive integer, got {raw!r}"
    try:
        workers = int(raw)
    except ValueError:
        raise UsageError(message) from None
    if workers < 1:
        raise UsageError(message)
    return workers


def finish(args, config, inputs, outputs, seed=None):
    """Write the run manifest for ``outputs[0]``."""
    manifest = RunManifest(
        subcommand=args.command,
        argv=args.argv,
        config=config,
        inputs=inputs,
        outputs=[str(o) for o in outputs],
        seed=seed,
        started_at=args.started_at,
        wall_clock_seconds=time.perf_counter() - args.clock,
    )
    path = write_manifest(manifest, outputs[0])
    logger.info(f"Manifest written to {path}")


def score_column(path):
    matrix = read_features(path)
    if matrix.dim != 1:
        raise InvalidInput(f"{path}: expected one score per row, got {matrix.dim} columns")
    return matrix.data[:, 0]


def archive_scorer(args):
    """Scorer for ``--model``, honouring ``--strategy`` / ``--member`` on TAPUDD archives."""
    archive = load_model(args.model)
    selecting = args.strategy is not None or args.member is not None
    if selecting and archive.model_kind != constants.MODEL_TAPUDD:
        raise UsageError(
            f"--strategy/--member apply only to TAPUDD archives, {args.model} "
            f"holds {archive.model_kind}"
        )
    return scorer_for(archive.model, strategy=args.strategy, member=args.member)


def cmd_synth(args):
    """Write a synthetic training set or one of its OOD probe sets."""
    spec = SyntheticSpec.for_task(args.task, args.seed, count=args.count)
    if args.ood is None:
        matrix = generate_synthetic(spec)
        counts = np.bincount(matrix.labels).tolist()
        summary = f"{matrix.n} rows, {len(counts)} clusters of {counts}"
    elif args.ood == "far":
        matrix = OOD_PROBES["far"](spec, n=args.n_ood)
        summary = f"{matrix.n} far-OOD probes"
    else:
        matrix = OOD_PROBES[args.ood](spec)
        summary = f"{matrix.n} {args.ood}-OOD probes"

    write_features(matrix, args.out, fmt=args.format)
    print(f"✓ {args.task}: {summary} written to {args.out}")
    config = {
        "task": args.task,
        "count": args.count,
        "ood": args.ood,
        "n_ood": args.n_ood,
        "format": args.format,
        "provenance": provenance(spec),
    }
    finish(args, config, {}, [args.out], seed=args.seed)


def fit_model(args, features):
    """Fit the detector selected by ``--method``; returns (model, resolved config)."""
    fit = FitConfig(
        max_iter=args.max_iter,
        tol=args.tol,
        reg_covar=args.reg_covar,
        n_init=args.n_init,
        seed=args.seed,
        clustering=args.clustering,
    )
    if args.method == "tapudd":
        ensemble = EnsembleConfig.for_k_list(
            args.k_list, n_e=args.n_e, m=args.m, strategy=args.strategy
        )
        workers = thread_count()
        model = fit_tapudd(features, ensemble, fit, workers=workers)
        return model, {"fit": fit.model_dump(), "ensemble": ensemble.model_dump()}
    if args.method in ("tapmb", "tapmos"):
        if args.k is None:
            raise UsageError(f"--method {args.method} needs --k")
        if args.method == "tapmb":
            return fit_tapmb(features, args.k, fit), {"k": args.k, "fit": fit.model_dump()}
        train = TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            seed=args.seed,
        )
        model = fit_tapmos(features, args.k, fit, train)
        return model, {"k": args.k, "fit": fit.model_dump(), "train": train.model_dump()}
    if args.method == "tied-mb":
        return fit_tied_mahalanobis(features, reg=args.reg_covar), {"reg_covar": args.reg_covar}
    if features.kind != constants.KIND_LOGITS:
        logger.warning(f"KL matching expects a logits file, got kind={features.kind}")
    return fit_kl_matching(features.data), {}


def cmd_fit(args):
    """Fit a detector on a feature (or logit) file and save it as an archive."""
    features = read_features(args.features)
    model, config = fit_model(args, features)
    config = {"method": args.method, **config}
    archive_provenance = {
        "version": __version__,
        "seed": args.seed,
        "features": args.features,
        "n": features.n,
        "config": config,
    }
    save_model(model, args.out, provenance=archive_provenance)
    members = len(getattr(model, "members", {})) or 1
    print(f"✓ {args.method} fitted on {features.n}×{features.dim} ({members} member(s))")
    print(f"✓ Archive written to {args.out}")
    finish(args, config, {"features": args.features}, [args.out], seed=args.seed)


def cmd_score(args):
    """Score every row of a feature file; one score per row, input order."""
    features = read_features(args.features)
    if args.model:
        scorer = archive_scorer(args)
        scores = scorer(features)
        name, inputs = scorer.name, {"model": args.model, "features": args.features}
    else:
        if args.strategy or args.member is not None:
            raise UsageError("--strategy/--member need --model")
        if args.method == "msp":
            scores = score_msp_batch(features)
        else:
            scores = score_energy_batch(features, temperature=args.temperature)
        name, inputs = args.method, {"features": args.features}

    matrix = FeatureMatrix(scores.reshape(-1, 1), kind=constants.KIND_SCORES)
    write_features(matrix, args.out, fmt=args.format)
    print(f"✓ {len(scores)} {name} scores written to {args.out}")
    config = {
        "method": name,
        "strategy": args.strategy,
        "member": args.member,
        "temperature": args.temperature,
        "format": args.format,
    }
    finish(args, config, inputs, [args.out])


def evaluation_rows(args):
    id_scores = score_column(args.id_scores)
    rows = []
    for path in args.ood_scores:
        ood_scores = score_column(path)
        report = evaluate(id_scores, ood_scores, args.tpr).model_dump()
        row = {"ood": path}
        if "auroc" in args.metrics:
            row["auroc"] = report["auroc"]
        if "aupr" in args.metrics:
            row["aupr"] = report["aupr"]
            row["aupr_positive"] = report["aupr_positive"]
        if "fpr95" in args.metrics:
            row["fpr95"] = report["fpr95"]
            row["threshold"] = report["threshold_at_tpr95"]
        row["n_id"] = report["n_id"]
        row["n_ood"] = report["n_ood"]
        rows.append(row)
    return rows


def _cell(value):
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def render_rows(rows, fmt):
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buffer = io.StringIO()
    if fmt == "csv":
        writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buffer.getvalue()

    fields = list(rows[0])
    cells = [[_cell(r[f]) for f in fields] for r in rows]
    widths = [max(len(f), *(len(c[i]) for c in cells)) for i, f in enumerate(fields)]
    lines = ["  ".join(f.ljust(w) for f, w in zip(fields, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells)
    return "\n".join(lines) + "\n"


def cmd_eval(args):
    """AUROC / AUPR (ID positive) / FPR at the given TPR for each OOD score file."""
    rows = evaluation_rows(args)
    text = render_rows(rows, args.format)
    sys.stdout.write(text)
    if args.out:
        with atomic_write(args.out) as fh:
            fh.write(text.encode("utf-8"))
        config = {"metrics": args.metrics, "tpr": args.tpr, "format": args.format}
        inputs = {"id_scores": args.id_scores, "ood_scores": list(args.ood_scores)}
        finish(args, config, inputs, [args.out])


def cmd_landscape(args):
    """Score a regular 2-D grid with a fitted model."""
    scorer = archive_scorer(args)
    grid = landscape_grid(scorer, (args.xmin, args.xmax), (args.ymin, args.ymax), args.res)
    write_features(grid, args.out, fmt=args.format)
    print(f"✓ {args.res}×{args.res} {scorer.name} landscape written to {args.out}")
    config = {
        "x_range": [args.xmin, args.xmax],
        "y_range": [args.ymin, args.ymax],
        "res": args.res,
        "strategy": args.strategy,
        "member": args.member,
        "format": args.format,
    }
    finish(args, config, {"model": args.model}, [args.out])


def cmd_replay(args):
    """Re-run the command recorded in a manifest."""
    try:
        manifest = read_manifest(args.manifest)
    except ValidationError as e:
        raise ParseError(f"{args.manifest} is not a run manifest: {e.error_count()} error(s)")
    if manifest.subcommand == "replay":
        raise UsageError("refusing to replay a replay manifest")
    print(f"✓ Replaying: tapudd {' '.join(manifest.argv)}")
    main(manifest.argv)


def add_output_format(parser, default):
    parser.add_argument(
        "--format",
        choices=["binary", "text"],
        default=default,
        help=f"Output encoding (default: {default})",
    )


def add_scorer_selection(parser):
    parser.add_argument(
        "--strategy",
        choices=constants.STRATEGIES,
        help="Re-aggregate a TAPUDD ensemble with another strategy (no refit)",
    )
    parser.add_argument(
        "--member", type=int, help="Use only the TAP-Mahalanobis member with this K"
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tapudd",
        description="TAPUDD - task-agnostic, post-hoc OOD scoring on exported features",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Binary synthetic training set and its far-OOD probes
  %(prog)s synth --task binary --seed 7 --out train.tpdd
  %(prog)s synth --task binary --seed 7 --ood far --out far.tpdd

  # TAPUDD with the default K list, or a single TAP-Mahalanobis model
  %(prog)s fit --features train.tpdd --seed 0 --out tapudd.tpda
  %(prog)s fit --method tapmb --k 2 --features train.tpdd --seed 0 --out tapmb.tpda

  # Score, switching the ensemble strategy without refitting
  %(prog)s score --model tapudd.tpda --features far.tpdd --out far.scores
  %(prog)s score --model tapudd.tpda --features far.tpdd --strategy seesaw --out far.seesaw

  # Metrics for one or more OOD score files
  %(prog)s eval --id-scores id.scores --ood-scores far.scores near.scores --format csv

  # Score landscape for external plotting
  %(prog)s landscape --model tapudd.tpda --xmin 0 --xmax 20 --ymin 2 --ymax 14 --out grid.txt

  # Re-run a recorded command
  %(prog)s replay --manifest grid.txt.manifest.json
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log progress at INFO")

    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    # Synth command
    synth_parser = subparsers.add_parser("synth", help="Generate a synthetic data set")
    synth_parser.add_argument("--task", choices=["binary", "multiclass"], required=True)
    synth_parser.add_argument("--seed", type=int, required=True, help="RNG seed")
    synth_parser.add_argument("--out", required=True, help="Output feature file")
    synth_parser.add_argument(
        "--ood", choices=sorted(OOD_PROBES), help="Write this OOD probe set instead of ID data"
    )
    synth_parser.add_argument(
        "--count",
        type=positive_int,
        help="Samples per cluster (default: 3000 binary, 500 multiclass)",
    )
    synth_parser.add_argument(
        "--n-ood", type=positive_int, default=1000, help="Number of far-OOD probes (default: 1000)"
    )
    add_output_format(synth_parser, "binary")
    synth_parser.set_defaults(func=cmd_synth)

    # Fit command
    fit_parser = subparsers.add_parser("fit", help="Fit a detector and save a model archive")
    fit_parser.add_argument(
        "--method",
        choices=["tapudd", "tapmb", "tapmos", "tied-mb", "kl"],
        default="tapudd",
        help="Detector to fit (default: tapudd)",
    )
    fit_parser.add_argument("--features", required=True, help="Feature (or logit) file")
    fit_parser.add_argument("--seed", type=int, required=True, help="RNG seed")
    fit_parser.add_argument("--out", required=True, help="Output model archive")
    fit_parser.add_argument("--k", type=int, help="Cluster count for tapmb / tapmos")
    fit_parser.add_argument(
        "--k-list",
        type=parse_k_list,
        default=list(constants.DEFAULT_K_LIST),
        help="Comma-separated K list for tapudd (default: 1,...,10,16,32)",
    )
    fit_parser.add_argument(
        "--strategy", choices=constants.STRATEGIES, default=constants.DEFAULT_STRATEGY
    )
    fit_parser.add_argument("--n-e", type=int, help="Participants for seesaw/top/bottom")
    fit_parser.add_argument("--m", type=int, help="Members trimmed from each end")
    fit_parser.add_argument("--clustering", choices=["gmm", "kmeans"], default="gmm")
    fit_parser.add_argument("--max-iter", type=int, default=constants.DEFAULT_MAX_ITER)
    fit_parser.add_argument("--tol", type=float, default=constants.DEFAULT_TOL)
    fit_parser.add_argument("--reg-covar", type=float, default=constants.DEFAULT_REG_COVAR)
    fit_parser.add_argument("--n-init", type=int, default=constants.DEFAULT_N_INIT)
    fit_parser.add_argument("--epochs", type=int, default=constants.DEFAULT_EPOCHS)
    fit_parser.add_argument("--batch-size", type=int, default=constants.DEFAULT_BATCH_SIZE)
    fit_parser.add_argument(
        "--learning-rate", type=float, default=constants.DEFAULT_LEARNING_RATE
    )
    fit_parser.set_defaults(func=cmd_fit)

    # Score command
    score_parser = subparsers.add_parser("score", help="Score a feature or logit file")
    source = score_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", help="Model archive written by 'fit'")
    source.add_argument(
        "--method", choices=["msp", "energy"], help="Archive-free logit baseline"
    )
    score_parser.add_argument("--features", required=True, help="Feature (or logit) file")
    score_parser.add_argument("--out", required=True, help="Output score file")
    score_parser.add_argument(
        "--temperature", type=float, default=1.0, help="Energy temperature (default: 1)"
    )
    add_scorer_selection(score_parser)
    add_output_format(score_parser, "text")
    score_parser.set_defaults(func=cmd_score)

    # Eval command
    eval_parser = subparsers.add_parser("eval", help="Evaluate ID vs OOD score files")
    eval_parser.add_argument("--id-scores", required=True, help="ID score file")
    eval_parser.add_argument(
        "--ood-scores", nargs="+", required=True, help="One or more OOD score files"
    )
    eval_parser.add_argument(
        "--metrics",
        type=parse_metrics,
        default=list(METRICS),
        help="Comma-separated subset of auroc,aupr,fpr95",
    )
    eval_parser.add_argument(
        "--tpr", type=parse_tpr, default=0.95, help="ID true-positive rate for fpr95"
    )
    eval_parser.add_argument("--format", choices=["table", "csv", "json"], default="table")
    eval_parser.add_argument("--out", help="Also write the report to this file")
    eval_parser.set_defaults(func=cmd_eval)

    # Landscape command
    landscape_parser = subparsers.add_parser("landscape", help="Export a 2-D score grid")
    landscape_parser.add_argument("--model", required=True, help="Model archive (2-D)")
    for flag in ("--xmin", "--xmax", "--ymin", "--ymax"):
        landscape_parser.add_argument(flag, type=float, required=True)
    landscape_parser.add_argument(
        "--res", type=int, default=100, help="Cells per axis (default: 100)"
    )
    landscape_parser.add_argument("--out", required=True, help="Output grid file")
    add_scorer_selection(landscape_parser)
    add_output_format(landscape_parser, "text")
    landscape_parser.set_defaults(func=cmd_landscape)

    # Replay command
    replay_parser = subparsers.add_parser("replay", help="Re-run a recorded command")
    replay_parser.add_argument("--manifest", required=True, help="Run manifest")
    replay_parser.set_defaults(func=cmd_replay)

    return parser


def validation_message(error):
    return "; ".join(err["msg"].removeprefix("Value error, ") for err in error.errors())


def main(argv=None):
    """Main CLI entrypoint."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(2)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    args.argv = argv
    args.started_at = utc_now()
    args.clock = time.perf_counter()

    try:
        args.func(args)
    except ValidationError as e:
        print(f"✗ Invalid configuration: {validation_message(e)}", file=sys.stderr)
        sys.exit(2)
    except UsageError as e:
        print(f"✗ {e}", file=sys.stderr)
        sys.exit(2)
    except (TapuddError, OSError) as e:
        print(f"✗ {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
