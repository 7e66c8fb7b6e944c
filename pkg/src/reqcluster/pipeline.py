"""End-to-end pipeline: ingest -> embed -> cluster -> merge -> represent ->
name -> report, with per-stage timings and deterministic reports.

Reports are deterministic given (input bytes, config, seeds): the only
nondeterministic content is the "timings" object, which consumers drop
before comparing runs.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from . import corpus as corpus_mod
from .embedding import EmbeddedCorpus, EncoderSpec, embed
from .errors import DataError, UsageError
from .merging import MergeConfig, extract_markers, merge
from .metrics import (
    EvalReport,
    LabeledDataset,
    clustered_ratio,
    evaluate_against_labels,
    gold_labels_by_record,
    majority_gold_names,
    naming_similarity,
)
from .naming import ClusterName, NamingConfig, name_clusters
from .rbc import Clustering, RbcConfig, centroid_matrix, clustering_to_dict, rbc_cluster
from .representatives import RepConfig, select_representatives

_STAGES = ("ingest", "embed", "cluster", "merge", "represent", "name", "report")


@dataclass
class PipelineConfig:
    input_path: str = ""
    input_format: str = "lines"  # "lines" or "jsonl"
    output_path: Optional[str] = None
    report_format: str = "json"  # "json" or "markdown"
    sample_n: int = 5
    keep_intermediate: bool = False
    encoder: EncoderSpec = field(default_factory=lambda: EncoderSpec(kind="fallback"))
    rbc: RbcConfig = field(default_factory=lambda: RbcConfig(min_sim=0.6, min_size=2))
    merge_mode: str = "none"  # "none", "semantic", or "keyword"
    merge: Optional[MergeConfig] = None
    representatives: RepConfig = field(default_factory=RepConfig)
    naming: NamingConfig = field(default_factory=NamingConfig)

    def __post_init__(self) -> None:
        if self.input_format not in ("lines", "jsonl"):
            raise UsageError(f"unknown input format {self.input_format!r}")
        if self.report_format not in ("json", "markdown"):
            raise UsageError(f"unknown report format {self.report_format!r}")
        if self.sample_n < 0:
            raise UsageError("sample_n must be >= 0")
        if self.merge_mode not in ("none", "semantic", "keyword"):
            raise UsageError(f"unknown merge mode {self.merge_mode!r}")
        if self.merge_mode != "none" and self.merge is None:
            self.merge = MergeConfig(mode=self.merge_mode, merge_min_sim=0.8)


_SECTION_TYPES: dict[str, Callable[..., Any]] = {
    "encoder": EncoderSpec,
    "rbc": RbcConfig,
    "merge": MergeConfig,
    "representatives": RepConfig,
    "naming": NamingConfig,
}

_IO_KEYS = {
    "input_path": str,
    "input_format": str,
    "output_path": str,
    "report_format": str,
    "sample_n": int,
    "keep_intermediate": bool,
    "merge_mode": str,
}


def _coerce(raw: str, typ: Any) -> Any:
    if typ is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ == tuple[int, ...]:
        return tuple(int(p) for p in raw.replace(",", " ").split())
    if typ == Optional[str] or typ is str:
        return raw
    return raw


def _field_types(cls: Any) -> dict[str, Any]:
    return {f.name: f.type for f in dataclasses.fields(cls)}


_TYPE_NAMES: dict[str, Any] = {
    "str": str,
    "int": int,
    "float": float,
    "bool": bool,
    "Optional[str]": Optional[str],
    "tuple[int, ...]": tuple[int, ...],
}


def _lookup_type(annotation: Any) -> Any:
    if isinstance(annotation, str):
        return _TYPE_NAMES.get(annotation, str)
    return annotation


def load_config_file(path: str) -> dict[str, dict[str, str]]:
    """Read an INI-style config file into {section: {key: raw value}}."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise UsageError(f"config file not found: {path}")
    return {section: dict(parser.items(section)) for section in parser.sections()}


def build_config(
    file_values: Optional[dict[str, dict[str, str]]] = None,
    overrides: Optional[dict[str, str]] = None,
    seed: Optional[int] = None,
) -> PipelineConfig:
    """Assemble a PipelineConfig from config-file values plus dotted-name
    overrides (e.g. {"rbc.min_sim": "0.8"}).  A master seed, when given,
    wins over every per-section seed."""
    sections: dict[str, dict[str, Any]] = {name: {} for name in _SECTION_TYPES}
    io_values: dict[str, Any] = {}

    def apply(section: str, key: str, raw: str) -> None:
        key = key.replace("-", "_")
        if section == "io":
            if key not in _IO_KEYS:
                raise UsageError(f"unknown config key io.{key}")
            io_values[key] = _coerce(raw, _IO_KEYS[key])
            return
        if section not in _SECTION_TYPES:
            raise UsageError(f"unknown config section {section!r}")
        if section == "naming" and key == "encoder":
            raise UsageError("the naming encoder follows the [encoder] section")
        types = _field_types(_SECTION_TYPES[section])
        if key not in types:
            raise UsageError(f"unknown config key {section}.{key}")
        sections[section][key] = _coerce(raw, _lookup_type(types[key]))

    for section, values in (file_values or {}).items():
        for key, raw in values.items():
            apply(section, key, raw)
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise UsageError(f"override {dotted!r} must be section.key")
        section, key = dotted.split(".", 1)
        apply(section, key, raw)

    if seed is not None:
        sections["rbc"]["seed"] = seed
        sections["representatives"]["seed"] = seed
        sections["encoder"]["fallback_seed"] = seed

    merge_mode = io_values.pop("merge_mode", "none")
    if sections["merge"] and merge_mode == "none":
        merge_mode = sections["merge"].get("mode", "semantic")
    if merge_mode != "none":
        sections["merge"].setdefault("mode", merge_mode)
        sections["merge"].setdefault("merge_min_sim", 0.8)
        merge_cfg: Optional[MergeConfig] = MergeConfig(**sections["merge"])
        merge_mode = merge_cfg.mode
    else:
        merge_cfg = None

    rbc_kwargs = {"min_sim": 0.6, "min_size": 2}
    rbc_kwargs.update(sections["rbc"])
    encoder_kwargs = dict(sections["encoder"])
    encoder_kwargs.setdefault("kind", "fallback")
    pipeline_encoder = EncoderSpec(**encoder_kwargs)
    naming_kwargs = dict(sections["naming"])
    if "ngram_orders" in naming_kwargs and not isinstance(naming_kwargs["ngram_orders"], tuple):
        naming_kwargs["ngram_orders"] = tuple(naming_kwargs["ngram_orders"])
    # precomputed vectors cannot encode fresh candidate texts, so naming
    # falls back to the hashing encoder in that case
    naming_kwargs["encoder"] = (
        pipeline_encoder
        if pipeline_encoder.kind != "precomputed"
        else EncoderSpec(kind="fallback", fallback_seed=pipeline_encoder.fallback_seed)
    )
    return PipelineConfig(
        **io_values,
        encoder=pipeline_encoder,
        rbc=RbcConfig(**rbc_kwargs),
        merge_mode=merge_mode,
        merge=merge_cfg,
        representatives=RepConfig(**sections["representatives"]),
        naming=NamingConfig(**naming_kwargs),
    )


def config_to_dict(config: PipelineConfig) -> dict[str, Any]:
    """Config echo for reports; dataclasses flattened to plain JSON types."""

    def plain(obj: Any) -> Any:
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {k: plain(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return list(obj)
        return obj

    return {
        "io": {
            "input_path": config.input_path,
            "input_format": config.input_format,
            "output_path": config.output_path,
            "report_format": config.report_format,
            "sample_n": config.sample_n,
            "keep_intermediate": config.keep_intermediate,
            "merge_mode": config.merge_mode,
        },
        "encoder": plain(config.encoder),
        "rbc": plain(config.rbc),
        "merge": plain(config.merge) if config.merge else None,
        "representatives": plain(config.representatives),
        "naming": plain(config.naming),
    }


@dataclass
class PipelineResult:
    corpus: EmbeddedCorpus
    clustering: Clustering
    names: list[ClusterName]
    representatives: dict[int, list]
    report: dict[str, Any]
    timings: dict[str, float]


class _Timer:
    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    def run(self, stage: str, fn: Callable[[], Any]) -> Any:
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise _StageFailure(stage, exc) from exc
        self.timings[stage] = time.perf_counter() - start
        return result


class _StageFailure(Exception):
    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_pipeline(config: PipelineConfig, stop_after: Optional[str] = None) -> PipelineResult:
    """Run the pipeline; stop_after names the last stage to run ("cluster"
    or "merge" for the intermediate clustering subcommand)."""
    timer = _Timer()

    def ingest() -> tuple[list, Optional[np.ndarray]]:
        if not config.input_path:
            raise UsageError("no input path configured")
        records, vectors = corpus_mod.read_corpus(config.input_path, config.input_format)
        if not records:
            raise DataError("no utterances ingested")
        return records, vectors

    records, precomputed = timer.run("ingest", ingest)
    emb = timer.run("embed", lambda: embed(records, config.encoder, precomputed))
    clustering = timer.run("cluster", lambda: rbc_cluster(emb, config.rbc))
    if config.merge is not None:
        clustering = timer.run("merge", lambda: merge(clustering, emb, config.merge))
    else:
        timer.timings["merge"] = 0.0
    if stop_after in ("cluster", "merge"):
        report = clustering_to_dict(clustering)
        report["config"] = config_to_dict(config)
        report["timings"] = timer.timings
        return PipelineResult(emb, clustering, [], {}, report, timer.timings)

    reps = timer.run(
        "represent",
        lambda: {
            c.cluster_id: select_representatives(c, emb, config.representatives)
            for c in clustering.clusters
        },
    )
    names = timer.run("name", lambda: name_clusters(clustering, emb, config.naming))
    report = timer.run("report", lambda: _build_report(config, emb, clustering, names, reps))
    report["timings"] = timer.timings
    return PipelineResult(emb, clustering, names, reps, report, timer.timings)


def _build_report(
    config: PipelineConfig,
    emb: EmbeddedCorpus,
    clustering: Clustering,
    names: list[ClusterName],
    reps: dict[int, list],
) -> dict[str, Any]:
    name_by_id = {n.cluster_id: n for n in names}
    clusters_out = []
    for cluster in clustering.clusters:
        members = sorted(
            cluster.member_ids,
            key=lambda i: (-emb.records[i].frequency, i),
        )
        cname = name_by_id[cluster.cluster_id]
        clusters_out.append(
            {
                "id": cluster.cluster_id,
                "name": cname.name,
                "name_score": cname.score,
                "size": cluster.size,
                "weight": cluster.weight,
                "representatives": [
                    {
                        "text": rec.text,
                        "frequency": rec.frequency,
                        "method": config.representatives.method,
                    }
                    for rec in reps.get(cluster.cluster_id, [])
                ],
                "members": [emb.records[i].text for i in members[: config.sample_n]],
            }
        )
    outlier_ids = sorted(
        clustering.outlier_ids, key=lambda i: (-emb.records[i].frequency, i)
    )
    ratio = clustered_ratio(clustering, emb, weighted=True)
    return {
        "summary": {
            "n_records": len(emb.records),
            "n_clusters": len(clustering.clusters),
            "n_outliers": len(clustering.outlier_ids),
            "clustered_ratio": ratio,
            "converged": clustering.converged,
            "iterations": clustering.iterations_run,
        },
        "clusters": clusters_out,
        "outliers": [emb.records[i].text for i in outlier_ids[: config.sample_n]],
        "config": config_to_dict(config),
    }


def report_to_json(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, ensure_ascii=True) + "\n"


def report_to_markdown(report: dict[str, Any]) -> str:
    lines = ["# Clustering report", ""]
    summary = report.get("summary")
    if summary:
        lines.append(
            f"{summary['n_records']} records -> {summary['n_clusters']} clusters, "
            f"{summary['n_outliers']} outliers "
            f"(clustered ratio {summary['clustered_ratio']:.4f}; "
            f"{'converged' if summary['converged'] else 'not converged'} "
            f"after {summary['iterations']} passes)"
        )
        lines.append("")
    for cluster in report.get("clusters", []):
        lines.append(
            f"## [{cluster['id']}] {cluster['name']} "
            f"(size {cluster['size']}, weight {cluster['weight']})"
        )
        if cluster["representatives"]:
            lines.append("")
            lines.append("Representatives:")
            for rep in cluster["representatives"]:
                lines.append(f"- {rep['text']} (x{rep['frequency']})")
        if cluster["members"]:
            lines.append("")
            lines.append("Members (sample):")
            for text in cluster["members"]:
                lines.append(f"- {text}")
        lines.append("")
    outliers = report.get("outliers", [])
    if outliers:
        lines.append("## Outliers (sample)")
        for text in outliers:
            lines.append(f"- {text}")
        lines.append("")
    return "\n".join(lines)


def write_intermediates(result: PipelineResult, directory: str) -> None:
    """Persist intermediate artifacts: records, vectors, clustering,
    centroids."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "records.jsonl"), "w", encoding="utf-8") as fh:
        for rec in result.corpus.records:
            fh.write(json.dumps({"id": rec.id, "text": rec.text, "count": rec.frequency}) + "\n")
    np.save(os.path.join(directory, "vectors.npy"), result.corpus.vectors)
    with open(os.path.join(directory, "clustering.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(clustering_to_dict(result.clustering), indent=2) + "\n")
    if result.clustering.clusters:
        np.save(os.path.join(directory, "centroids.npy"), centroid_matrix(result.clustering))


def evaluate_dataset(
    dataset: LabeledDataset,
    config: PipelineConfig,
    with_naming: bool = True,
) -> tuple[EvalReport, Clustering, EmbeddedCorpus]:
    """Cluster a labeled dataset's texts and score against its labels."""
    raws = [corpus_mod.RawUtterance(text=t) for t, _ in dataset.examples]
    records = corpus_mod.deduplicate(raws)
    if not records:
        raise DataError("dataset produced no records")
    emb = embed(records, config.encoder)
    clustering = rbc_cluster(emb, config.rbc)
    if config.merge is not None:
        clustering = merge(clustering, emb, config.merge)
    report = evaluate_against_labels(emb, clustering, dataset)
    if with_naming and clustering.clusters:
        names = name_clusters(clustering, emb, config.naming)
        gold_by_record = gold_labels_by_record(records, dataset)
        gold_names = majority_gold_names(clustering, gold_by_record, dataset.label_names)
        predicted = [n.name for n in sorted(names, key=lambda n: n.cluster_id)]
        gold = [gold_names[i] for i in sorted(gold_names)]
        report = EvalReport(
            ari=report.ari,
            silhouette=report.silhouette,
            clustered_ratio=report.clustered_ratio,
            n_clusters=report.n_clusters,
            naming_similarity=naming_similarity(predicted, gold, config.naming.encoder),
        )
    return report, clustering, emb


def sweep_min_sim(
    dataset: LabeledDataset,
    config: PipelineConfig,
    values: list[float],
) -> list[dict[str, Any]]:
    """Evaluate the pipeline across a grid of min_sim values."""
    if not values:
        raise UsageError("sweep requires at least one min_sim value")
    rows = []
    for value in values:
        cfg = dataclasses.replace(
            config,
            rbc=dataclasses.replace(config.rbc, min_sim=value),
        )
        report, clustering, _ = evaluate_dataset(dataset, cfg, with_naming=False)
        rows.append(
            {
                "min_sim": value,
                "ari": report.ari,
                "silhouette": report.silhouette,
                "clustered_ratio": report.clustered_ratio,
                "n_clusters": report.n_clusters,
            }
        )
    return rows
