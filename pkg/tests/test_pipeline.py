from __future__ import annotations

import json

import numpy as np
import pytest

from reqcluster.embedding import EncoderSpec
from reqcluster.errors import DataError, UsageError
from reqcluster.metrics import LabeledDataset
from reqcluster.pipeline import (
    PipelineConfig,
    _StageFailure,
    build_config,
    config_to_dict,
    evaluate_dataset,
    load_config_file,
    report_to_json,
    report_to_markdown,
    run_pipeline,
    sweep_min_sim,
    write_intermediates,
)


def geometry_jsonl(tmp_path):
    """Corpus with precomputed 3-d embeddings: two bundles at cosine 0.9
    (4 + 4 records), one orthogonal pair, one lone opposite vector."""
    v0 = [1.0, 0.0, 0.0]
    v1 = [0.9, np.sqrt(1 - 0.81), 0.0]
    v2 = [0.0, 0.0, 1.0]
    lone = [0.0, -1.0, 0.0]
    rows = []
    for i in range(4):
        rows.append({"text": f"password reset variant {i}", "count": i + 1, "embedding": v0})
    for i in range(4):
        rows.append({"text": f"unlock account variant {i}", "embedding": v1})
    rows.append({"text": "billing question one", "embedding": v2})
    rows.append({"text": "billing question two", "embedding": v2})
    rows.append({"text": "completely unrelated", "embedding": lone})
    path = tmp_path / "corpus.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(path)


def geometry_config(path, **over):
    return build_config(
        overrides={
            "io.input_path": path,
            "io.input_format": "jsonl",
            "encoder.kind": "precomputed",
            "rbc.min_sim": "0.95",
            "rbc.min_size": "2",
            **over,
        }
    )


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


def test_run_pipeline_report_shape(tmp_path):
    config = geometry_config(geometry_jsonl(tmp_path))
    result = run_pipeline(config)
    report = result.report

    summary = report["summary"]
    assert summary["n_records"] == 11
    assert summary["n_clusters"] == 3
    assert summary["n_outliers"] == 1
    # weighted ratio: clustered mass (4+3+2+1) + 4 + 2 = 16 of 17
    assert summary["clustered_ratio"] == pytest.approx(16 / 17)
    assert summary["converged"] is True

    clusters = report["clusters"]
    assert [c["size"] for c in clusters] == [4, 4, 2]
    assert clusters[0]["weight"] == 10  # counts 1..4
    # members are sampled by descending frequency, then id
    assert clusters[0]["members"][0] == "password reset variant 3"
    for cluster in clusters:
        assert cluster["representatives"]
        assert all(rep["method"] == "dpp" for rep in cluster["representatives"])
        assert isinstance(cluster["name"], str) and cluster["name"]

    assert report["outliers"] == ["completely unrelated"]
    assert set(report["config"]) == {"io", "encoder", "rbc", "merge", "representatives", "naming"}
    assert set(result.timings) == {
        "ingest", "embed", "cluster", "merge", "represent", "name", "report",
    }
    assert result.timings["merge"] == 0.0  # merging was not configured


def test_run_pipeline_semantic_merge_stage(tmp_path):
    config = geometry_config(
        geometry_jsonl(tmp_path),
        **{"merge.mode": "semantic", "merge.merge_min_sim": "0.8"},
    )
    result = run_pipeline(config)
    sizes = [c["size"] for c in result.report["clusters"]]
    assert sizes == [8, 2]  # the two 0.9-cosine bundles united
    assert result.timings["merge"] > 0.0


def test_stop_after_merge_emits_clustering_payload(tmp_path):
    config = geometry_config(geometry_jsonl(tmp_path))
    result = run_pipeline(config, stop_after="merge")
    report = result.report
    assert [c["size"] for c in report["clusters"]] == [4, 4, 2]
    assert report["outliers"] == [10]
    assert report["converged"] is True
    assert "summary" not in report
    assert report["config"]["rbc"]["min_sim"] == 0.95
    assert result.names == []
    assert result.representatives == {}


def test_reports_are_byte_identical_across_runs(tmp_path):
    config = geometry_config(geometry_jsonl(tmp_path))
    first = run_pipeline(config).report
    second = run_pipeline(config).report
    first.pop("timings")
    second.pop("timings")
    assert report_to_json(first) == report_to_json(second)


def test_lines_corpus_with_fallback_encoder(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text(
        "reset password\n"
        "reset password\n"
        "Reset Password\n"
        "reset password please\n"
        "\n"
        "unlock account\n"
        "unlock account now\n"
    )
    config = build_config(
        overrides={
            "io.input_path": str(path),
            "rbc.min_sim": "0.7",
            "rbc.min_size": "2",
        }
    )
    result = run_pipeline(config)
    report = result.report
    assert report["summary"]["n_records"] == 4  # duplicates collapsed
    assert report["summary"]["n_clusters"] == 2
    by_name = {c["name"]: c for c in report["clusters"]}
    assert set(by_name) == {"reset password", "unlock account"}
    assert by_name["reset password"]["weight"] == 4


def test_sample_n_truncates_member_and_outlier_lists(tmp_path):
    config = geometry_config(geometry_jsonl(tmp_path), **{"io.sample_n": "2"})
    report = run_pipeline(config).report
    assert all(len(c["members"]) <= 2 for c in report["clusters"])
    assert len(report["outliers"]) <= 2


def test_missing_input_fails_in_ingest_stage():
    config = PipelineConfig()
    with pytest.raises(_StageFailure) as exc_info:
        run_pipeline(config)
    assert exc_info.value.stage == "ingest"
    assert isinstance(exc_info.value.cause, UsageError)


def test_empty_corpus_fails_in_ingest_stage(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("\n\n   \n")
    config = build_config(overrides={"io.input_path": str(path)})
    with pytest.raises(_StageFailure) as exc_info:
        run_pipeline(config)
    assert exc_info.value.stage == "ingest"
    assert isinstance(exc_info.value.cause, DataError)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def test_write_intermediates_round_trip(tmp_path):
    from reqcluster.rbc import centroid_matrix, clustering_to_dict

    config = geometry_config(geometry_jsonl(tmp_path))
    result = run_pipeline(config)
    out = tmp_path / "intermediate"
    write_intermediates(result, str(out))

    lines = (out / "records.jsonl").read_text().splitlines()
    assert len(lines) == 11
    first = json.loads(lines[0])
    assert set(first) == {"id", "text", "count"}

    vectors = np.load(out / "vectors.npy")
    np.testing.assert_array_equal(vectors, result.corpus.vectors)

    stored = json.loads((out / "clustering.json").read_text())
    assert stored == clustering_to_dict(result.clustering)

    centroids = np.load(out / "centroids.npy")
    np.testing.assert_array_equal(centroids, centroid_matrix(result.clustering))


def test_report_to_markdown_sections(tmp_path):
    config = geometry_config(geometry_jsonl(tmp_path))
    text = report_to_markdown(run_pipeline(config).report)
    assert text.startswith("# Clustering report")
    assert "11 records -> 3 clusters, 1 outliers" in text
    assert "## [0] " in text
    assert "Representatives:" in text
    assert "## Outliers (sample)" in text
    assert "- completely unrelated" in text


# ---------------------------------------------------------------------------
# config assembly
# ---------------------------------------------------------------------------


def test_build_config_defaults():
    config = build_config()
    assert config.encoder.kind == "fallback"
    assert config.rbc.min_sim == 0.6
    assert config.rbc.min_size == 2
    assert config.merge_mode == "none"
    assert config.merge is None
    assert config.representatives.method == "dpp"
    assert config.naming.method == "tfidf"


def test_build_config_file_plus_override_precedence(tmp_path):
    ini = tmp_path / "conf.ini"
    ini.write_text(
        "[io]\n"
        "input_format = jsonl\n"
        "sample_n = 3\n"
        "[rbc]\n"
        "min_sim = 0.7\n"
        "min_size = 4\n"
        "[naming]\n"
        "ngram_orders = 1, 2\n"
    )
    config = build_config(
        load_config_file(str(ini)),
        overrides={"rbc.min_sim": "0.85"},
    )
    assert config.rbc.min_sim == 0.85  # override beats the file
    assert config.rbc.min_size == 4  # file value survives
    assert config.input_format == "jsonl"
    assert config.sample_n == 3
    assert config.naming.ngram_orders == (1, 2)


def test_build_config_master_seed_fans_out():
    config = build_config(
        overrides={"rbc.seed": "1", "representatives.seed": "2"}, seed=77
    )
    assert config.rbc.seed == 77
    assert config.representatives.seed == 77
    assert config.encoder.fallback_seed == 77
    assert config.naming.encoder.fallback_seed == 77


def test_build_config_rejects_unknown_names():
    with pytest.raises(UsageError, match="unknown config section"):
        build_config(overrides={"mystery.knob": "1"})
    with pytest.raises(UsageError, match="unknown config key rbc.radius"):
        build_config(overrides={"rbc.radius": "0.5"})
    with pytest.raises(UsageError, match="unknown config key io.workers"):
        build_config(overrides={"io.workers": "4"})
    with pytest.raises(UsageError, match="must be section.key"):
        build_config(overrides={"min_sim": "0.5"})


def test_build_config_naming_encoder_is_not_settable():
    with pytest.raises(UsageError, match="naming encoder follows"):
        build_config(overrides={"naming.encoder": "remote"})


def test_build_config_merge_section_implies_semantic_mode():
    config = build_config(overrides={"merge.merge_min_sim": "0.7"})
    assert config.merge_mode == "semantic"
    assert config.merge is not None
    assert config.merge.merge_min_sim == 0.7


def test_build_config_merge_mode_via_io_section():
    config = build_config(overrides={"io.merge_mode": "keyword"})
    assert config.merge_mode == "keyword"
    assert config.merge is not None
    assert config.merge.mode == "keyword"
    assert config.merge.merge_min_sim == 0.8  # default threshold


def test_build_config_precomputed_naming_still_encodes():
    config = build_config(overrides={"encoder.kind": "precomputed"}, seed=5)
    assert config.encoder.kind == "precomputed"
    # candidate phrases still need an encoder, so naming gets the hashing one
    assert config.naming.encoder.kind == "fallback"
    assert config.naming.encoder.fallback_seed == 5


def test_build_config_boolean_coercion():
    config = build_config(overrides={"io.keep_intermediate": "yes"})
    assert config.keep_intermediate is True
    with pytest.raises(UsageError, match="boolean"):
        build_config(overrides={"io.keep_intermediate": "maybe"})


def test_load_config_file_missing(tmp_path):
    with pytest.raises(UsageError, match="not found"):
        load_config_file(str(tmp_path / "nope.ini"))


def test_pipeline_config_validation():
    with pytest.raises(UsageError, match="input format"):
        PipelineConfig(input_format="csv")
    with pytest.raises(UsageError, match="report format"):
        PipelineConfig(report_format="yaml")
    with pytest.raises(UsageError, match="merge mode"):
        PipelineConfig(merge_mode="fuzzy")
    with pytest.raises(UsageError, match="sample_n"):
        PipelineConfig(sample_n=-1)
    config = PipelineConfig(merge_mode="semantic")
    assert config.merge is not None and config.merge.mode == "semantic"


def test_config_to_dict_is_json_ready(tmp_path):
    config = geometry_config(geometry_jsonl(tmp_path))
    echo = config_to_dict(config)
    json.dumps(echo)  # no numpy scalars or dataclasses left behind
    assert echo["naming"]["ngram_orders"] == [1, 2, 3]
    assert echo["io"]["input_format"] == "jsonl"


# ---------------------------------------------------------------------------
# labeled-dataset evaluation
# ---------------------------------------------------------------------------

PASSWORD_TEXTS = [
    "reset password account login",
    "reset password account login now",
    "reset password account login please",
]
BILLING_TEXTS = [
    "invoice billing charge refund",
    "invoice billing charge refund monthly",
    "invoice billing charge refund yearly",
]


def two_class_dataset():
    examples = [(t, "password") for t in PASSWORD_TEXTS]
    examples += [(t, "billing") for t in BILLING_TEXTS]
    return LabeledDataset(
        examples=tuple(examples),
        labels=frozenset({"password", "billing"}),
        label_names={"password": "password", "billing": "billing"},
    )


def eval_config():
    return build_config(
        overrides={"rbc.min_sim": "0.5", "rbc.min_size": "2"}
    )


def test_evaluate_dataset_recovers_classes():
    report, clustering, emb = evaluate_dataset(two_class_dataset(), eval_config())
    assert report.ari == 1.0
    assert report.n_clusters == 2
    assert report.clustered_ratio == 1.0
    assert report.silhouette is not None and report.silhouette > 0.2
    assert report.naming_similarity is not None
    assert 0.2 < report.naming_similarity <= 1.0
    assert len(emb.records) == 6


def test_evaluate_dataset_without_naming():
    report, _, _ = evaluate_dataset(two_class_dataset(), eval_config(), with_naming=False)
    assert report.ari == 1.0
    assert report.naming_similarity is None


def test_sweep_min_sim_grid():
    rows = sweep_min_sim(two_class_dataset(), eval_config(), [0.5, 0.95])
    assert [r["min_sim"] for r in rows] == [0.5, 0.95]
    assert rows[0]["ari"] == 1.0
    assert rows[0]["n_clusters"] == 2
    # at 0.95 nothing survives min_size, so there is nothing to score
    assert rows[1]["ari"] is None
    assert rows[1]["n_clusters"] == 0


def test_sweep_requires_values():
    with pytest.raises(UsageError):
        sweep_min_sim(two_class_dataset(), eval_config(), [])
