"""CLI workbench: end-to-end miniature runs through main(argv)."""

import os

import numpy as np
import pytest
import yaml

from emoxfer.cli import main
from emoxfer.matio import load_matrix


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Tiny corpus -> preprocess -> short train, shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus, pre, run = str(root / "corpus"), str(root / "pre"), str(root / "run")
    assert main(["--seed", "1", "make-toy-corpus", "--out", corpus,
                 "--sources", "2", "--targets", "1", "--emotions", "3",
                 "--utts", "5", "--entangled-emotion", "2"]) == 0
    assert main(["preprocess", "--corpus", corpus, "--out", pre]) == 0
    cfg = root / "toy.yaml"
    cfg.write_text(yaml.safe_dump({
        "model": {"ffn_hidden": 64, "encoder_blocks": 1, "decoder_blocks": 1,
                  "extractor_channels": [4, 4, 8, 8, 8], "extractor_gru_hidden": 8,
                  "emotion_hidden": 16},
        "train": {"batch_size": 4, "warmup_steps": 50, "alpha": 1.05},
    }))
    assert main(["--seed", "1", "train", "--data", pre, "--out", run,
                 "--config", str(cfg), "--steps", "30"]) == 0
    return {"root": root, "corpus": corpus, "pre": pre, "run": run, "cfg": str(cfg)}


def test_train_artifacts_exist(workspace):
    assert os.path.exists(os.path.join(workspace["run"], "model.ckpt"))
    log = os.path.join(workspace["run"], "train_log.tsv")
    lines = open(log).read().splitlines()
    assert lines[0].startswith("step\tl_mel")
    assert len(lines) == 31


def test_missing_manifest_fails_nonzero(tmp_path):
    assert main(["preprocess", "--corpus", str(tmp_path), "--out", str(tmp_path / "o")]) == 1


def test_synthesize_levels_and_outputs(workspace):
    ckpt = os.path.join(workspace["run"], "model.ckpt")
    out = str(workspace["root"] / "synth")
    assert main(["synthesize", "--checkpoint", ckpt, "--text-phonemes", "1 2 3 4",
                 "--speaker", "src0", "--emotion", "1", "--level", "high",
                 "--out", out, "--preview-audio"]) == 0
    mel = load_matrix(os.path.join(out, "mel.mat"))
    assert mel.shape[1] == 80
    assert os.path.exists(os.path.join(out, "prosody.tsv"))
    assert os.path.exists(os.path.join(out, "mel.png"))
    assert os.path.exists(os.path.join(out, "preview.wav"))

    # low/high map to 0.1/1.0; moderate uses the stored median
    from emoxfer.synth import load_model

    model, ck, cfg = load_model(ckpt)
    assert model.intensity_for_level("low", 1, ck.intensity_medians()) == 0.1
    assert model.intensity_for_level("high", 1, ck.intensity_medians()) == 1.0
    med = model.intensity_for_level("moderate", 1, ck.intensity_medians())
    assert 0.0 < med < 1.0


def test_synthesize_requires_exactly_one_intensity_spec(workspace):
    ckpt = os.path.join(workspace["run"], "model.ckpt")
    out = str(workspace["root"] / "synth_err")
    assert main(["synthesize", "--checkpoint", ckpt, "--text-phonemes", "1 2",
                 "--speaker", "src0", "--emotion", "0", "--out", out]) == 1
    assert main(["synthesize", "--checkpoint", ckpt, "--text-phonemes", "1 2",
                 "--speaker", "src0", "--emotion", "0", "--level", "low",
                 "--intensity", "0.5", "--out", out]) == 1


def test_synthesize_unknown_speaker_fails(workspace):
    ckpt = os.path.join(workspace["run"], "model.ckpt")
    assert main(["synthesize", "--checkpoint", ckpt, "--text-phonemes", "1 2",
                 "--speaker", "nobody", "--emotion", "0", "--level", "high",
                 "--out", str(workspace["root"] / "x")]) == 1


def test_transfer_writes_metrics_table(workspace):
    ckpt = os.path.join(workspace["run"], "model.ckpt")
    out = str(workspace["root"] / "xfer")
    assert main(["--seed", "3", "transfer", "--checkpoint", ckpt,
                 "--data", workspace["pre"], "--corpus", workspace["corpus"],
                 "--target-speaker", "tgt0", "--sentences", "2", "--out", out]) == 0
    lines = open(os.path.join(out, "transfer_metrics.tsv")).read().splitlines()
    assert lines[0].split("\t") == [
        "emotion", "sentence", "template_correlation", "target_distance",
        "min_source_distance", "closest_speaker",
    ]
    assert len(lines) == 1 + 3 * 2  # 3 emotions x 2 sentences


def test_transfer_flag_validation(workspace):
    ckpt = os.path.join(workspace["run"], "model.ckpt")
    base = ["transfer", "--checkpoint", ckpt, "--data", workspace["pre"],
            "--corpus", workspace["corpus"], "--target-speaker", "tgt0",
            "--out", str(workspace["root"] / "xfer_err")]
    assert main(base + ["--ib-group", "3"]) == 1      # not in {2,4,8}
    assert main(base + ["--ib-group", "4"]) == 1      # lookup checkpoint
    assert main(base + ["--zero-shot"]) == 1          # lookup checkpoint


def test_zero_shot_training_and_transfer(workspace):
    run_zs = str(workspace["root"] / "run_zs")
    assert main(["--seed", "1", "train", "--data", workspace["pre"], "--out", run_zs,
                 "--config", workspace["cfg"], "--steps", "30",
                 "--timbre-mode", "zero_shot", "--exclude-speakers", "tgt0",
                 "--ib-group", "2"]) == 0
    ckpt = os.path.join(run_zs, "model.ckpt")
    out = str(workspace["root"] / "xfer_zs")
    assert main(["--seed", "3", "transfer", "--checkpoint", ckpt,
                 "--data", workspace["pre"], "--corpus", workspace["corpus"],
                 "--target-speaker", "tgt0", "--zero-shot", "--ref-utterances", "3",
                 "--ib-group", "2", "--sentences", "1", "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "transfer_metrics.tsv"))
    # group mismatch is rejected
    assert main(["transfer", "--checkpoint", ckpt, "--data", workspace["pre"],
                 "--corpus", workspace["corpus"], "--target-speaker", "tgt0",
                 "--zero-shot", "--ib-group", "8",
                 "--out", str(workspace["root"] / "bad")]) == 1


def test_resume_reproduces_full_trace(workspace):
    root = workspace["root"]
    full, part = str(root / "full"), str(root / "part")
    args = ["--seed", "5", "train", "--data", workspace["pre"],
            "--config", workspace["cfg"]]
    assert main(args + ["--out", full, "--steps", "12"]) == 0
    assert main(args + ["--out", part, "--steps", "6"]) == 0
    assert main(args + ["--out", part, "--steps", "12",
                        "--resume", os.path.join(part, "model.ckpt")]) == 0
    full_lines = open(os.path.join(full, "train_log.tsv")).read().splitlines()
    part_lines = open(os.path.join(part, "train_log.tsv")).read().splitlines()
    assert part_lines == full_lines


def test_ser_workflow_and_plots(workspace):
    root = workspace["root"]
    ser_out = str(root / "ser")
    assert main(["--seed", "2", "train-ser", "--data", workspace["pre"],
                 "--out", ser_out, "--steps", "60"]) == 0
    ckpt = os.path.join(ser_out, "ser.ckpt")
    assert os.path.exists(ckpt)

    analysis = str(root / "analysis")
    assert main(["analyze-intensity", "--data", workspace["pre"],
                 "--ser-checkpoint", ckpt, "--alphas", "1.01,1.2,2.0",
                 "--out", analysis]) == 0
    report = os.path.join(analysis, "intensity_report.tsv")
    assert os.path.exists(report)

    assert main(["label-report", "--data", workspace["pre"],
                 "--ser-checkpoint", ckpt, "--out", analysis]) == 0
    table = open(os.path.join(analysis, "label_report.tsv")).read().splitlines()
    assert table[0].startswith("speaker")
    assert len(table) == 4  # header + 3 speakers

    assert main(["export-hidden", "--data", workspace["pre"],
                 "--ser-checkpoint", ckpt, "--out", analysis]) == 0
    hidden = load_matrix(os.path.join(analysis, "hidden.mat"))
    assert hidden.shape[0] == 15

    plots = str(root / "plots")
    assert main(["plot", "losses", "--log",
                 os.path.join(workspace["run"], "train_log.tsv"), "--out", plots]) == 0
    assert os.path.exists(os.path.join(plots, "losses.png"))
    assert main(["plot", "histograms", "--report", report, "--out", plots]) == 0
    assert any(f.startswith("intensity_hist_alpha") for f in os.listdir(plots))
    assert main(["plot", "f0-contours", "--checkpoint",
                 os.path.join(workspace["run"], "model.ckpt"),
                 "--speaker", "src0", "--emotion", "1", "--out", plots]) == 0
    assert os.path.exists(os.path.join(plots, "f0_contours_emotion1.png"))


def test_plot_missing_log_fails(workspace):
    assert main(["plot", "losses", "--log", "/nonexistent.tsv",
                 "--out", str(workspace["root"] / "p")]) == 1
