import json

from augmuse.cli import main
from augmuse.metrics import MetricReport


def report_with(**overrides):
    base = dict(
        f1_macro=0.5, f1_micro=0.5, prauc_macro=0.5, prauc_micro=0.5,
        rocauc_macro=0.5, rocauc_micro=0.5,
        thresholds=(0.5,), n_tracks=4, n_classes=1,
    )
    base.update(overrides)
    return MetricReport(**base)


def test_unknown_flag_exits_one(capsys):
    assert main(["ingest", "--bogus"]) == 1


def test_missing_file_is_validation_error(tmp_path):
    assert main(["ingest", "--metadata-dir", str(tmp_path), "--out", str(tmp_path / "o")]) == 1


def test_synth_corpus_then_ingest_and_plan(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main([
        "synth-corpus", "--out", str(corpus), "--classes", "2", "--hours", "0.05",
        "--seed", "4", "--track-seconds", "10",
    ]) == 0

    out = tmp_path / "snapshot"
    assert main(["ingest", "--metadata-dir", str(corpus), "--out", str(out)]) == 0
    assert (out / "durations.json").is_file()
    assert json.loads((out / "vocabulary.json").read_text()) == ["sig00", "sig01"]

    config = tmp_path / "exp.toml"
    config.write_text(
        f"""
[corpus]
metadata_dir = "{corpus}"

[generator]
kind = "white_noise"
sample_length_s = 2.0

[augmentor]
budget_fraction = 0.2

[pipeline]
trials = 1
seeds = [0]
output_dir = "{tmp_path / 'runs'}"
"""
    )
    plan_path = tmp_path / "plan.json"
    assert main(["plan", "--config", str(config), "--out", str(plan_path)]) == 0
    plan = json.loads(plan_path.read_text())
    assert plan["entries"]
    captured = capsys.readouterr().out
    assert "samples" in captured

    samples_dir = tmp_path / "generated"
    assert main(["generate", "--config", str(config), "--plan", str(plan_path), "--out", str(samples_dir)]) == 0
    assert (samples_dir / "manifest.jsonl").is_file()


def test_relabel_cli(tmp_path):
    from augmuse.corpus import TrackRecord, save_metadata
    from pathlib import Path

    root = tmp_path / "meta"
    root.mkdir()
    for split, tags in (("train", {"happy"}), ("validation", {"sad"}), ("test", {"zzz"})):
        save_metadata(
            [TrackRecord(f"{split}_t", Path("a.wav"), 5.0, frozenset(tags), split)],
            root / f"tracks_{split}.tsv",
        )
    mapping = tmp_path / "map.tsv"
    mapping.write_text("happy\tactivated_pleasant\nsad\tdeactivated_unpleasant\n")
    out = tmp_path / "out"
    assert main([
        "relabel", "--metadata-dir", str(root), "--mapping", str(mapping), "--out", str(out),
    ]) == 0
    assert (out / "drop_report.jsonl").read_text().count("\n") == 1
    assert (out / "durations.png").is_file()


def test_compare_cli(tmp_path):
    base = report_with(prauc_macro=0.125)
    aug = report_with(prauc_macro=0.134)
    base.save(tmp_path / "base.json")
    aug.save(tmp_path / "aug.json")
    out = tmp_path / "cmp"
    assert main([
        "compare", "--baseline", str(tmp_path / "base.json"),
        "--augmented", f"gen={tmp_path / 'aug.json'}", "--out", str(out),
    ]) == 0
    assert "prauc_macro" in (out / "comparison.csv").read_text()
    assert "*" in (out / "comparison.txt").read_text()


def test_compare_cli_bad_argument(tmp_path):
    base = report_with()
    base.save(tmp_path / "base.json")
    assert main([
        "compare", "--baseline", str(tmp_path / "base.json"),
        "--augmented", "missing-equals-sign", "--out", str(tmp_path / "o"),
    ]) == 1


def test_report_cli_requires_baseline(tmp_path):
    assert main(["report", "--run-dir", str(tmp_path)]) == 1
