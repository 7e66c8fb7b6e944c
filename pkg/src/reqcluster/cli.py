"""Command-line interface.

Subcommands:
    run      full pipeline: cluster, merge, select representatives, name
    cluster  stop after clustering/merging; emit the clustering as JSON
    eval     cluster a labeled dataset and score against its labels
    markers  extract domain markers from a corpus
    sweep    evaluate a grid of min_sim values against a labeled dataset

Any config key can be overridden with a dotted flag of the same name, e.g.
--rbc.min-sim 0.8 or --merge.mode semantic.  --seed sets the clustering,
representative-sampling, and fallback-encoder seeds at once.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional

from . import pipeline as pl
from .corpus import read_corpus
from .errors import DataError, ProtocolError, TransportError, UsageError
from .merging import MergeConfig, extract_markers
from .metrics import load_dataset_csv, load_dataset_jsonl, recommended_min_size

_EXIT_CODES = {
    UsageError: 2,
    DataError: 3,
    TransportError: 4,
    ProtocolError: 5,
}


def _base_parser(prog: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=prog, add_help=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--input", help="input corpus path (overrides io.input_path)")
        p.add_argument("--format", choices=("lines", "jsonl"), help="input format")
        p.add_argument("--output", help="output path (default stdout)")
        p.add_argument(
            "--report", choices=("json", "markdown"), default=None, help="report format"
        )
        p.add_argument(
            "--keep-intermediate",
            action="store_true",
            help="write records/vectors/clustering/centroids next to the output",
        )

    run_p = sub.add_parser("run", help="full pipeline")
    common(run_p)
    cluster_p = sub.add_parser("cluster", help="stop after clustering/merging")
    common(cluster_p)
    eval_p = sub.add_parser("eval", help="score against a labeled dataset")
    common(eval_p)
    eval_p.add_argument("--dataset", required=True, help="labeled dataset path")
    eval_p.add_argument("--dataset-format", choices=("jsonl", "csv"), default="jsonl")
    eval_p.add_argument("--exclude-label", default=None, help="gold label to drop")
    eval_p.add_argument(
        "--min-size-from-data",
        action="store_true",
        help="set rbc.min_size to the smallest gold class size",
    )
    markers_p = sub.add_parser("markers", help="extract domain markers")
    common(markers_p)
    sweep_p = sub.add_parser("sweep", help="grid-sweep min_sim against a dataset")
    common(sweep_p)
    sweep_p.add_argument("--dataset", required=True, help="labeled dataset path")
    sweep_p.add_argument("--dataset-format", choices=("jsonl", "csv"), default="jsonl")
    sweep_p.add_argument("--exclude-label", default=None)
    sweep_p.add_argument(
        "--values", required=True, help="comma-separated min_sim values, e.g. 0.5,0.6,0.7"
    )
    return parser


def _collect_overrides(leftovers: list[str]) -> dict[str, str]:
    """Turn leftover --section.key value flags into an override map."""
    overrides: dict[str, str] = {}
    i = 0
    while i < len(leftovers):
        arg = leftovers[i]
        if not arg.startswith("--") or "." not in arg:
            raise UsageError(f"unrecognized argument {arg!r}")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            i += 1
            if i >= len(leftovers):
                raise UsageError(f"override {arg!r} is missing a value")
            value = leftovers[i]
        overrides[key.replace("-", "_")] = value
        i += 1
    return overrides


def _load_config(args: argparse.Namespace, overrides: dict[str, str]) -> pl.PipelineConfig:
    file_values = pl.load_config_file(args.config) if args.config else None
    config = pl.build_config(file_values, overrides, seed=args.seed)
    if args.input:
        config.input_path = args.input
    if args.format:
        config.input_format = args.format
    if args.output:
        config.output_path = args.output
    if args.report:
        config.report_format = args.report
    if args.keep_intermediate:
        config.keep_intermediate = True
    return config


def _emit(text: str, output_path: Optional[str]) -> None:
    if output_path:
        with open(output_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _intermediate_dir(config: pl.PipelineConfig) -> str:
    if config.output_path:
        stem = os.path.splitext(config.output_path)[0]
        return stem + ".intermediate"
    return "intermediate"


def _cmd_run(args: argparse.Namespace, overrides: dict[str, str]) -> int:
    config = _load_config(args, overrides)
    result = pl.run_pipeline(config)
    if config.keep_intermediate:
        pl.write_intermediates(result, _intermediate_dir(config))
    if config.report_format == "markdown":
        _emit(pl.report_to_markdown(result.report), config.output_path)
    else:
        _emit(pl.report_to_json(result.report), config.output_path)
    return 0


def _cmd_cluster(args: argparse.Namespace, overrides: dict[str, str]) -> int:
    config = _load_config(args, overrides)
    result = pl.run_pipeline(config, stop_after="merge")
    if config.keep_intermediate:
        pl.write_intermediates(result, _intermediate_dir(config))
    _emit(pl.report_to_json(result.report), config.output_path)
    return 0


def _load_dataset(args: argparse.Namespace):
    loader = load_dataset_jsonl if args.dataset_format == "jsonl" else load_dataset_csv
    return loader(args.dataset, exclude_label=args.exclude_label)


def _cmd_eval(args: argparse.Namespace, overrides: dict[str, str]) -> int:
    config = _load_config(args, overrides)
    dataset = _load_dataset(args)
    if args.min_size_from_data:
        config.rbc = dataclasses.replace(config.rbc, min_size=recommended_min_size(dataset))
    report, clustering, _ = pl.evaluate_dataset(dataset, config)
    payload = {
        "ari": report.ari,
        "silhouette": report.silhouette,
        "clustered_ratio": report.clustered_ratio,
        "n_clusters": report.n_clusters,
        "naming_similarity": report.naming_similarity,
        "converged": clustering.converged,
        "iterations": clustering.iterations_run,
        "config": pl.config_to_dict(config),
    }
    _emit(json.dumps(payload, indent=2) + "\n", config.output_path)
    return 0


def _cmd_markers(args: argparse.Namespace, overrides: dict[str, str]) -> int:
    config = _load_config(args, overrides)
    if not config.input_path:
        raise UsageError("markers requires an input corpus (--input)")
    records, _ = read_corpus(config.input_path, config.input_format)
    if not records:
        raise DataError("no utterances ingested")
    merge_cfg = config.merge if config.merge is not None else MergeConfig(
        mode="keyword", merge_min_sim=0.3
    )
    markers = extract_markers(records, merge_cfg)
    payload = {
        "markers": sorted(markers.markers),
        "z_scores": {w: markers.z_scores[w] for w in sorted(markers.z_scores)},
        "threshold": merge_cfg.marker_z_threshold,
    }
    _emit(json.dumps(payload, indent=2) + "\n", config.output_path)
    return 0


def _cmd_sweep(args: argparse.Namespace, overrides: dict[str, str]) -> int:
    config = _load_config(args, overrides)
    dataset = _load_dataset(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}") from exc
    rows = pl.sweep_min_sim(dataset, config, values)
    scored = [r for r in rows if r["ari"] is not None]
    best = max(scored, key=lambda r: r["ari"]) if scored else None
    payload = {"rows": rows, "best": best, "config": pl.config_to_dict(config)}
    _emit(json.dumps(payload, indent=2) + "\n", config.output_path)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "cluster": _cmd_cluster,
    "eval": _cmd_eval,
    "markers": _cmd_markers,
    "sweep": _cmd_sweep,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = _base_parser("reqcluster")
    args, leftovers = parser.parse_known_args(argv)
    try:
        overrides = _collect_overrides(leftovers)
        return _COMMANDS[args.command](args, overrides)
    except pl._StageFailure as failure:
        cause = failure.cause
        code = _EXIT_CODES.get(type(cause), 1)
        print(f"error in stage {failure.stage!r}: {cause}", file=sys.stderr)
        return code
    except (UsageError, DataError, TransportError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CODES[type(exc)]


if __name__ == "__main__":
    sys.exit(main())
