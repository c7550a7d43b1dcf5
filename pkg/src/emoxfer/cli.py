"""Command-line workbench: corpus generation, preprocessing, training, transfer.

Every command is reproducible from its flags plus --seed; logs go to stderr
and artifacts to the directory named by --out.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
import torch

from .config import AudioConfig, RunConfig
from .errors import EmoxferError
from .matio import save_matrix
from .models.timbre import SUPPORTED_GROUPS
from .preprocess import preprocess_corpus
from .synth import (
    load_model,
    make_test_sentences,
    speaker_envelopes,
    trained_speakers,
    transfer_metrics,
    zero_shot_reference,
)
from .toycorpus import ToyCorpusSpec, generate_corpus, load_corpus_meta
from .train.data import PreparedDataset
from .train.loop import Trainer
from .vocoder import griffin_lim_preview

log = logging.getLogger("emoxfer")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (EmoxferError, FileNotFoundError, NotADirectoryError, ValueError) as exc:
        log.error("%s", exc)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emoxfer")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("make-toy-corpus", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--sources", type=int, default=4)
    p.add_argument("--targets", type=int, default=2)
    p.add_argument("--emotions", type=int, default=4)
    p.add_argument("--utts", type=int, default=40)
    p.add_argument("--entangled-emotion", type=int, default=3)
    p.set_defaults(func=cmd_make_toy_corpus)

    p = sub.add_parser("preprocess", help="extract mel and prosody targets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the transfer model")
    p.add_argument("--data", required=True, help="preprocessed corpus directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="YAML run configuration")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--timbre-mode", choices=["lookup", "zero_shot"], default=None)
    p.add_argument("--ib-group", type=int, default=None)
    p.add_argument("--exclude-speakers", default=None, help="comma-separated ids")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-ser", help="train the standalone emotion classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.set_defaults(func=cmd_train_ser)

    p = sub.add_parser("analyze-intensity", help="intensity histograms across alphas")
    p.add_argument("--data", required=True)
    p.add_argument("--ser-checkpoint", required=True)
    p.add_argument("--alphas", default="1.01,1.2,2.0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_intensity)

    p = sub.add_parser("label-report", help="per-speaker predicted-class table")
    p.add_argument("--data", required=True)
    p.add_argument("--ser-checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label_report)

    p = sub.add_parser("export-hidden", help="dump classifier hidden features")
    p.add_argument("--data", required=True)
    p.add_argument("--ser-checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_hidden)

    p = sub.add_parser("synthesize", help="synthesize one utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text-phonemes", required=True, help="space-separated phoneme ids")
    p.add_argument("--speaker", required=True)
    p.add_argument("--emotion", type=int, required=True)
    p.add_argument("--level", choices=["low", "moderate", "high"], default=None)
    p.add_argument("--intensity", type=float, default=None)
    p.add_argument("--data", default=None, help="preprocessed dir (zero-shot refs)")
    p.add_argument("--ref-utterances", type=int, default=5)
    p.add_argument("--preview-audio", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("transfer", help="cross-speaker transfer with metrics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="preprocessed dir (all speakers)")
    p.add_argument("--corpus", required=True, help="toy corpus dir (ground truth)")
    p.add_argument("--target-speaker", required=True)
    p.add_argument("--source-emotion", type=int, default=None, help="default: all")
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--ref-utterances", type=int, default=5)
    p.add_argument("--ib-group", type=int, default=None)
    p.add_argument("--sentences", type=int, default=5)
    p.add_argument("--intensity", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("plot", help="render plots from run artifacts")
    plot_sub = p.add_subparsers(required=True)
    q = plot_sub.add_parser("losses")
    q.add_argument("--log", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_plot_losses)
    q = plot_sub.add_parser("histograms")
    q.add_argument("--report", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_plot_histograms)
    q = plot_sub.add_parser("f0-contours")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--speaker", required=True)
    q.add_argument("--emotion", type=int, required=True)
    q.add_argument("--text-phonemes", default=None)
    q.add_argument("--data", default=None)
    q.add_argument("--ref-utterances", type=int, default=5)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_plot_f0_contours)
    return parser


# --------------------------------------------------------------------- commands


def cmd_make_toy_corpus(args) -> int:
    spec = ToyCorpusSpec(
        n_source_speakers=args.sources,
        n_target_speakers=args.targets,
        n_emotions=args.emotions,
        utterances_per_speaker=args.utts,
        seed=args.seed,
        entangled_emotion=args.entangled_emotion,
    )
    meta = generate_corpus(spec, args.out)
    log.info(
        "wrote %d utterances for %d speakers to %s",
        len(meta["utterances"]), len(meta["speakers"]), args.out,
    )
    return 0


def cmd_preprocess(args) -> int:
    meta = preprocess_corpus(args.corpus, args.out)
    log.info("preprocess complete: %s", meta)
    return 0


def cmd_train(args) -> int:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.batch is not None:
        config.train.batch_size = args.batch
    if args.warmup is not None:
        config.train.warmup_steps = args.warmup
    if args.timbre_mode is not None:
        config.model.timbre_mode = args.timbre_mode
    if args.ib_group is not None:
        if args.ib_group not in SUPPORTED_GROUPS:
            raise ValueError(f"--ib-group must be one of {SUPPORTED_GROUPS}")
        config.model.vq_groups = args.ib_group
    config.train.seed = args.seed

    dataset = PreparedDataset(args.data)
    if args.exclude_speakers:
        excluded = [s for s in args.exclude_speakers.split(",") if s]
        keep = [s for s in dataset.speakers if s not in excluded]
        dataset = dataset.restrict_speakers(keep)
        log.info("training speakers: %s", ",".join(dataset.speakers))
    config.model.vocab_size = dataset.vocab_size
    config.model.n_mels = dataset.n_mels
    config.model.n_speakers = len(dataset.speakers)

    os.makedirs(args.out, exist_ok=True)
    config.save(os.path.join(args.out, "config.yaml"))
    trainer = Trainer(dataset, config)
    if args.resume:
        trainer.resume(args.resume)
        log.info("resumed from %s at step %d", args.resume, trainer.step)
    # --steps sets the stop point only; schedule horizons stay on
    # config.train.max_steps so interrupted and full runs share one trace.
    trainer.run(
        log_path=os.path.join(args.out, "train_log.tsv"),
        max_steps=args.steps,
        checkpoint_path=os.path.join(args.out, "model.ckpt"),
    )
    log.info("finished %d steps; checkpoint at %s/model.ckpt", trainer.step, args.out)
    return 0


def cmd_train_ser(args) -> int:
    from .ser import train_ser
    from .train.checkpoint import save_checkpoint

    dataset = PreparedDataset(args.data)
    config = RunConfig()
    config.model.n_mels = dataset.n_mels
    config.train.seed = args.seed
    model, accuracy = train_ser(dataset, config.model, steps=args.steps, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(
        os.path.join(args.out, "ser.ckpt"),
        model=model, config=config, step=args.steps,
    )
    with open(os.path.join(args.out, "ser_accuracy.txt"), "w") as fh:
        fh.write(f"{accuracy:.4f}\n")
    log.info("SER held-out accuracy %.4f", accuracy)
    return 0


def _load_ser(checkpoint_path, dataset):
    from .ser import SerModel
    from .train.checkpoint import load_checkpoint

    ckpt = load_checkpoint(checkpoint_path)
    config = ckpt.run_config()
    config.model.n_mels = dataset.n_mels
    n_classes = ckpt.section("head")["weight"].shape[0]
    model = SerModel(config.model, n_classes=n_classes)
    ckpt.restore_model(model)
    model.eval()
    return model


def cmd_analyze_intensity(args) -> int:
    from .ser import intensity_sweep

    dataset = PreparedDataset(args.data)
    model = _load_ser(args.ser_checkpoint, dataset)
    alphas = [float(a) for a in args.alphas.split(",") if a]
    report = intensity_sweep(model, dataset, alphas)
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "intensity_report.tsv")
    with open(report_path, "w") as fh:
        fh.write(report.to_text())
    log.info("intensity report over %d utterances at %s", report.n_utterances, report_path)
    return 0


def cmd_label_report(args) -> int:
    from .ser import label_report, label_report_text

    dataset = PreparedDataset(args.data)
    model = _load_ser(args.ser_checkpoint, dataset)
    table = label_report(model, dataset)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "label_report.tsv")
    with open(path, "w") as fh:
        fh.write(label_report_text(table))
    log.info("label report for %d speakers at %s", len(table), path)
    return 0


def cmd_export_hidden(args) -> int:
    from .ser import export_hidden

    dataset = PreparedDataset(args.data)
    model = _load_ser(args.ser_checkpoint, dataset)
    os.makedirs(args.out, exist_ok=True)
    matrix = export_hidden(
        model, dataset,
        os.path.join(args.out, "hidden.mat"),
        os.path.join(args.out, "hidden.idx"),
    )
    log.info("exported hidden features %s", matrix.shape)
    return 0


def _resolve_intensity(args, model, ckpt, emotion):
    if (args.intensity is None) == (args.level is None):
        raise ValueError("give exactly one of --intensity or --level")
    if args.intensity is not None:
        return float(args.intensity)
    return model.intensity_for_level(args.level, emotion, ckpt.intensity_medians())


def _speaker_conditioning(args, model, ckpt, config, speaker_id):
    """Timbre encoding + prosody stats for the requested speaker."""
    if config.model.timbre_mode == "lookup":
        speakers = trained_speakers(ckpt)
        if speaker_id not in speakers:
            from .errors import UnknownSpeakerError

            raise UnknownSpeakerError(f"speaker {speaker_id!r} was not seen in training")
        timbre = model.timbre_encoder.lookup(torch.tensor(speakers.index(speaker_id)))
        stats = ckpt.speaker_stats()
        if speaker_id not in stats:
            from .errors import MissingStatsError

            raise MissingStatsError(f"checkpoint has no stats for {speaker_id!r}")
        return timbre, stats[speaker_id]
    if not args.data:
        raise ValueError("zero-shot checkpoints need --data for reference utterances")
    dataset = PreparedDataset(args.data)
    timbre, stats, refs = zero_shot_reference(model, dataset, speaker_id, args.ref_utterances)
    log.info("zero-shot references for %s: %s", speaker_id, ",".join(refs))
    return timbre, stats


def cmd_synthesize(args) -> int:
    model, ckpt, config = load_model(args.checkpoint)
    phonemes = [int(p) for p in args.text_phonemes.split()]
    intensity = _resolve_intensity(args, model, ckpt, args.emotion)
    timbre, stats = _speaker_conditioning(args, model, ckpt, config, args.speaker)
    mel, realized, durations = model.synthesize(
        phonemes, args.emotion, intensity, timbre, stats, mel_stats=ckpt.mel_stats()
    )
    os.makedirs(args.out, exist_ok=True)
    save_matrix(os.path.join(args.out, "mel.mat"), mel)
    with open(os.path.join(args.out, "prosody.tsv"), "w") as fh:
        fh.write("phoneme\tlog_f0\tenergy_db\tlog_duration\tframes\n")
        for p, row, frames in zip(phonemes, realized, durations):
            fh.write(f"{p}\t{row[0]:.6f}\t{row[1]:.6f}\t{row[2]:.6f}\t{frames}\n")
    from .plots import plot_mel

    plot_mel(mel, os.path.join(args.out, "mel.png"))
    if args.preview_audio:
        from .dsp.audio import save_wav

        clip = griffin_lim_preview(mel)
        save_wav(os.path.join(args.out, "preview.wav"), clip)
    log.info(
        "synthesized %d frames (emotion %d, intensity %.3f) to %s",
        mel.shape[0], args.emotion, intensity, args.out,
    )
    return 0


def cmd_transfer(args) -> int:
    model, ckpt, config = load_model(args.checkpoint)
    if args.ib_group is not None:
        if args.ib_group not in SUPPORTED_GROUPS:
            raise ValueError(f"--ib-group must be one of {SUPPORTED_GROUPS}")
        if config.model.timbre_mode != "zero_shot":
            raise ValueError("--ib-group applies to zero-shot checkpoints only")
        if config.model.vq_groups != args.ib_group:
            raise ValueError(
                f"checkpoint was trained with {config.model.vq_groups} groups, "
                f"not {args.ib_group}"
            )
    if args.zero_shot and config.model.timbre_mode != "zero_shot":
        raise ValueError("--zero-shot needs a checkpoint trained in zero-shot mode")
    if config.model.timbre_mode == "zero_shot" and not args.zero_shot:
        raise ValueError("zero-shot checkpoint: pass --zero-shot and --ref-utterances")

    dataset = PreparedDataset(args.data)
    meta = load_corpus_meta(args.corpus)
    templates = meta["templates"]
    source_speakers = [s["speaker_id"] for s in meta["speakers"] if s["is_source"]]
    emotions = (
        [args.source_emotion] if args.source_emotion is not None
        else list(range(len(templates)))
    )
    for e in emotions:
        if not 0 <= e < len(templates):
            raise ValueError(f"emotion {e} outside template range")

    if args.zero_shot:
        timbre, stats = zero_shot_reference(
            model, dataset, args.target_speaker, args.ref_utterances
        )[:2]
    else:
        timbre, stats = _speaker_conditioning(args, model, ckpt, config, args.target_speaker)

    envelopes = speaker_envelopes(dataset)
    sentences = make_test_sentences(dataset.vocab_size, args.sentences, args.seed)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for emotion in emotions:
        contour = templates[emotion]["contour"]
        for s_idx, phonemes in enumerate(sentences):
            mel, _, _ = model.synthesize(
                phonemes, emotion, args.intensity, timbre, stats,
                mel_stats=ckpt.mel_stats(),
            )
            m = transfer_metrics(
                mel, contour, envelopes, args.target_speaker, source_speakers
            )
            rows.append((emotion, s_idx, m))
    table_path = os.path.join(args.out, "transfer_metrics.tsv")
    with open(table_path, "w") as fh:
        fh.write(
            "emotion\tsentence\ttemplate_correlation\ttarget_distance"
            "\tmin_source_distance\tclosest_speaker\n"
        )
        for emotion, s_idx, m in rows:
            fh.write(
                f"{emotion}\t{s_idx}\t{m['template_correlation']:.6f}"
                f"\t{m['target_distance']:.6f}\t{m['min_source_distance']:.6f}"
                f"\t{m['closest_speaker']}\n"
            )
    for emotion in emotions:
        sub = [m for e, _, m in rows if e == emotion]
        corr = float(np.median([m["template_correlation"] for m in sub]))
        closest = sum(m["closest_speaker"] == args.target_speaker for m in sub)
        log.info(
            "emotion %d: median template correlation %.3f; target closest in %d/%d",
            emotion, corr, closest, len(sub),
        )
    log.info("metrics table at %s", table_path)
    return 0


def cmd_plot_losses(args) -> int:
    from .plots import plot_losses

    os.makedirs(args.out, exist_ok=True)
    path = plot_losses(args.log, os.path.join(args.out, "losses.png"))
    log.info("wrote %s", path)
    return 0


def cmd_plot_histograms(args) -> int:
    from .plots import plot_intensity_histograms

    os.makedirs(args.out, exist_ok=True)
    written = plot_intensity_histograms(args.report, args.out)
    log.info("wrote %s", ", ".join(written))
    return 0


def cmd_plot_f0_contours(args) -> int:
    from .plots import plot_f0_contours

    model, ckpt, config = load_model(args.checkpoint)
    if args.text_phonemes:
        phonemes = [int(p) for p in args.text_phonemes.split()]
    else:
        phonemes = make_test_sentences(config.model.vocab_size, 1, args.seed)[0]
    timbre, stats = _speaker_conditioning(args, model, ckpt, config, args.speaker)
    traces = {}
    for level in ("low", "moderate", "high"):
        intensity = model.intensity_for_level(level, args.emotion, ckpt.intensity_medians())
        _, realized, durations = model.synthesize(
            phonemes, args.emotion, intensity, timbre, stats, mel_stats=ckpt.mel_stats()
        )
        traces[level] = np.repeat(realized[:, 0], durations)
    os.makedirs(args.out, exist_ok=True)
    path = plot_f0_contours(
        traces, os.path.join(args.out, f"f0_contours_emotion{args.emotion}.png")
    )
    log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
