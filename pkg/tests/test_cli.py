import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from m3pt.cli import VARIANT_ALIASES, build_config, main, run_sweep
from m3pt.data import load_dataset


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def trained_dir(runner, tiny_dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    result = runner.invoke(main, [
        "train", "--data-dir", str(tiny_dataset_dir), "--out", str(out),
        "--epochs", "2", "--seed", "0",
    ])
    assert result.exit_code == 0, result.output
    return out


# ----- config assembly ----------------------------------------------------

def test_build_config_precedence(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"D": 24, "pi": 0.3, "variant": "image"}))
    cfg = build_config(str(cfg_file), dim=16, seed=9)
    assert cfg.D == 16          # flag beats file
    assert cfg.pi == 0.3        # file beats desk default
    assert cfg.seed == 9
    assert cfg.variant == "image_only"  # alias expanded


def test_build_config_rejects_invalid(tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"tau1": -1.0}))
    with pytest.raises(ValueError):
        build_config(str(cfg_file))


def test_variant_aliases_cover_all_variants():
    assert set(VARIANT_ALIASES.values()) == {"full", "text_only", "image_only"}


# ----- gen-data -----------------------------------------------------------

def test_gen_data_writes_corpus(runner, tmp_path):
    out = tmp_path / "corpus"
    result = runner.invoke(main, ["gen-data", "--profile", "desk",
                                  "--out", str(out), "--seed", "1"])
    assert result.exit_code == 0, result.output
    assert "poi_count: 500" in result.output
    assert "tag_count: 20" in result.output
    ds = load_dataset(out)
    assert len(ds.pois) == 500


def test_gen_data_rejects_unknown_profile(runner, tmp_path):
    result = runner.invoke(main, ["gen-data", "--profile", "nope",
                                  "--out", str(tmp_path / "x")])
    assert result.exit_code != 0


# ----- pretrain-die -------------------------------------------------------

def test_pretrain_die_command(runner, tiny_dataset_dir, tmp_path):
    out = tmp_path / "die"
    result = runner.invoke(main, [
        "pretrain-die", "--data-dir", str(tiny_dataset_dir),
        "--out", str(out), "--epochs", "1", "--seed", "0",
    ])
    assert result.exit_code == 0, result.output
    assert (out / "die_checkpoint" / "manifest.txt").exists()
    corpus = (out / "pretrain_corpus.jsonl").read_text().splitlines()
    assert corpus
    rec = json.loads(corpus[0])
    assert set(rec) == {"poi_id", "image_ref", "tag"}
    assert (out / "pretrain_log.txt").read_text().strip()


# ----- train --------------------------------------------------------------

def test_train_writes_checkpoint_and_log(trained_dir):
    assert (trained_dir / "checkpoint" / "manifest.txt").exists()
    assert (trained_dir / "checkpoint" / "params.bin").exists()
    log = (trained_dir / "train_log.txt").read_text().splitlines()
    assert len(log) == 2  # one line per epoch
    assert len(log[0].split(",")) == 7


def test_train_with_die_init(runner, tiny_dataset_dir, tmp_path):
    die_out = tmp_path / "die"
    result = runner.invoke(main, [
        "pretrain-die", "--data-dir", str(tiny_dataset_dir),
        "--out", str(die_out), "--epochs", "1",
    ])
    assert result.exit_code == 0, result.output
    out = tmp_path / "model"
    result = runner.invoke(main, [
        "train", "--data-dir", str(tiny_dataset_dir), "--out", str(out),
        "--die", str(die_out / "die_checkpoint"), "--epochs", "1",
    ])
    assert result.exit_code == 0, result.output
    assert "best val F1-e" in result.output


# ----- eval ---------------------------------------------------------------

def test_eval_prints_report_and_writes_json(runner, trained_dir,
                                            tiny_dataset_dir, tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(main, [
        "eval", "--model", str(trained_dir / "checkpoint"),
        "--data-dir", str(tiny_dataset_dir), "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert "F1-e" in result.output
    report = json.loads(out.read_text())
    for key in ("M-F1", "F1-e", "HLS", "mAP", "OneError", "RankingLoss"):
        assert key in report


def test_eval_variant_flag(runner, trained_dir, tiny_dataset_dir):
    result = runner.invoke(main, [
        "eval", "--model", str(trained_dir / "checkpoint"),
        "--data-dir", str(tiny_dataset_dir), "--variant", "text",
    ])
    assert result.exit_code == 0, result.output


def test_eval_bad_data_dir_exits_nonzero(runner, trained_dir, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = runner.invoke(main, [
        "eval", "--model", str(trained_dir / "checkpoint"),
        "--data-dir", str(empty),
    ])
    assert result.exit_code == 1
    assert "error:" in result.output


# ----- tag ----------------------------------------------------------------

def test_tag_emits_sorted_records(runner, trained_dir, tiny_dataset_dir, tmp_path):
    out = tmp_path / "tags.jsonl"
    result = runner.invoke(main, [
        "tag", "--model", str(trained_dir / "checkpoint"),
        "--data-dir", str(tiny_dataset_dir), "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    ds = load_dataset(tiny_dataset_dir)
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(records) == len(ds.split("test")) * len(ds.tags)
    by_poi: dict[str, list[dict]] = {}
    for rec in records:
        assert set(rec) == {"poi_id", "tag", "score", "accepted"}
        by_poi.setdefault(rec["poi_id"], []).append(rec)
    for rows in by_poi.values():
        scores = [r["score"] for r in rows]
        assert scores == sorted(scores, reverse=True)


def test_tag_pi_flag_controls_acceptance(runner, trained_dir,
                                         tiny_dataset_dir, tmp_path):
    out = tmp_path / "tags.jsonl"
    result = runner.invoke(main, [
        "tag", "--model", str(trained_dir / "checkpoint"),
        "--data-dir", str(tiny_dataset_dir), "--out", str(out), "--pi", "0.0",
    ])
    assert result.exit_code == 0, result.output
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert all(r["accepted"] == (r["score"] > 0.0) for r in records)


# ----- sweep --------------------------------------------------------------

def test_sweep_pi_reuses_model(runner, trained_dir, tiny_dataset_dir, tmp_path):
    out = tmp_path / "sweep.jsonl"
    result = runner.invoke(main, [
        "sweep", "--param", "pi", "--grid", "0.2,0.5,0.8",
        "--data-dir", str(tiny_dataset_dir), "--out", str(out),
        "--model", str(trained_dir / "checkpoint"),
    ])
    assert result.exit_code == 0, result.output
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["pi"] for r in rows] == [0.2, 0.5, 0.8]
    assert all("F1-e" in r for r in rows)
    # ranking metrics are threshold-free, so they match across points
    assert len({round(r["mAP"], 12) for r in rows}) == 1


def test_sweep_tau1_retrains(runner, tiny_dataset_dir, tmp_path):
    out = tmp_path / "sweep.jsonl"
    result = runner.invoke(main, [
        "sweep", "--param", "tau1", "--grid", "0.12,0.5",
        "--data-dir", str(tiny_dataset_dir), "--out", str(out),
        "--epochs", "1",
    ])
    assert result.exit_code == 0, result.output
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["tau1"] for r in rows] == [0.12, 0.5]


def test_run_sweep_errors(tiny_dataset):
    from m3pt.config import desk_config
    with pytest.raises(ValueError, match="unknown sweep parameter"):
        run_sweep("lr", [0.1], tiny_dataset, desk_config())
    with pytest.raises(ValueError, match="empty grid"):
        run_sweep("pi", [], tiny_dataset, desk_config())
