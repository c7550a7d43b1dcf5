"""The semi-supervised batch loop: Adam, schedules, logging, checkpoints."""

from __future__ import annotations

import os

import numpy as np
import torch

from ..config import RunConfig
from ..errors import DivergenceError
from ..models import TransferModel, modified_softmax
from .checkpoint import load_checkpoint, save_checkpoint
from .data import PreparedDataset, collate
from .losses import composite_loss
from .schedules import lr_schedule, tau_schedule

LOG_HEADER = "step\tl_mel\tl_pros\tl_adv\tl_emo\ttotal\ttau\tlr"


class Trainer:
    """Owns the model, optimizer and RNG streams for one training run.

    Two Trainers constructed with the same dataset, config and seed produce
    bitwise-identical loss traces; resuming from a checkpoint continues the
    exact trace of an uninterrupted run.
    """

    def __init__(self, dataset: PreparedDataset, config: RunConfig):
        torch.set_num_threads(config.train.torch_threads)
        self.dataset = dataset
        self.config = config
        seed = config.train.seed
        torch.manual_seed(seed)
        self.model = TransferModel(config.model)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(),
            lr=lr_schedule(1, config.train.warmup_steps, config.model.d_model),
            betas=(config.train.adam_beta1, config.train.adam_beta2),
            eps=config.train.adam_eps,
        )
        self.sampler_gen = torch.Generator().manual_seed(seed + 1)
        self.gumbel_gen = torch.Generator().manual_seed(seed + 2)
        self.step = 0

    # ------------------------------------------------------------------ batches

    def next_batch(self) -> dict:
        indices = torch.randint(
            0, len(self.dataset), (self.config.train.batch_size,), generator=self.sampler_gen
        )
        return collate(self.dataset, indices.tolist())

    # -------------------------------------------------------------------- steps

    def train_step(self, batch=None, lr=None, tau=None):
        """One gradient step on the composite loss; returns the LossBreakdown."""
        cfg = self.config.train
        if batch is None:
            batch = self.next_batch()
        step = self.step + 1
        if tau is None:
            tau = tau_schedule(step, cfg.max_steps, cfg.tau_start, cfg.tau_end,
                               cfg.tau_anneal_frac)
        if lr is None:
            lr = lr_schedule(step, cfg.warmup_steps, self.config.model.d_model)
        for group in self.optimizer.param_groups:
            group["lr"] = lr

        self.model.train()
        pred_mel, frame_valid, parts = self.model.forward_train(
            batch, tau=tau, alpha=cfg.alpha, generator=self.gumbel_gen
        )
        true_mel = batch["mel"][:, : pred_mel.shape[1]]
        commit = parts["commit_loss"] if self.model.timbre_encoder.mode == "zero_shot" else None
        breakdown = composite_loss(
            pred_mel,
            true_mel,
            parts["pred_pros"],
            batch["prosody"],
            parts["adv_loss"],
            parts["emo_loss"],
            lambdas=(cfg.lambda_pros, cfg.lambda_adv, cfg.lambda_emo),
            frame_valid=frame_valid,
            phoneme_valid=parts["phoneme_valid"],
            commit_loss=commit,
        )
        if not breakdown.is_finite():
            raise DivergenceError(
                f"non-finite loss at step {step}: {breakdown.detached()}",
                breakdown=breakdown.detached(),
            )
        self.optimizer.zero_grad()
        breakdown.total.backward()
        if cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg.grad_clip)
        self.optimizer.step()
        self.step = step
        self._last_tau, self._last_lr = tau, lr
        return breakdown

    def run(self, log_path=None, max_steps=None, checkpoint_path=None):
        """Train to max_steps, appending one log line per step."""
        cfg = self.config.train
        max_steps = max_steps or cfg.max_steps
        log_fh = open(log_path, "a") if log_path else None
        try:
            if log_fh and self.step == 0:
                log_fh.write(LOG_HEADER + "\n")
            while self.step < max_steps:
                breakdown = self.train_step()
                if log_fh and self.step % cfg.log_every == 0:
                    log_fh.write(format_log_line(self.step, breakdown,
                                                 self._last_tau, self._last_lr) + "\n")
            if log_fh:
                log_fh.flush()
        finally:
            if log_fh:
                log_fh.close()
        if checkpoint_path:
            self.save(checkpoint_path)

    # -------------------------------------------------------------- persistence

    def save(self, path, intensity_medians=None) -> None:
        if intensity_medians is None:
            intensity_medians = compute_intensity_medians(
                self.model, self.dataset, self.config.train.alpha
            )
        save_checkpoint(
            path,
            model=self.model,
            config=self.config,
            step=self.step,
            optimizer=self.optimizer,
            speaker_stats=self.dataset.speaker_stats,
            intensity_medians=intensity_medians,
            mel_stats=self.dataset.mel_stats,
            rng_states={
                "torch": torch.get_rng_state(),
                "sampler": self.sampler_gen.get_state(),
                "gumbel": self.gumbel_gen.get_state(),
            },
            speakers=self.dataset.speakers,
        )

    def resume(self, path) -> None:
        ckpt = load_checkpoint(path)
        ckpt.verify_hash(self.config)
        ckpt.restore_model(self.model)
        ckpt.restore_optimizer(self.optimizer, self.model)
        states = ckpt.rng_states()
        if "torch" in states:
            torch.set_rng_state(states["torch"].to(torch.uint8))
        if "sampler" in states:
            self.sampler_gen.set_state(states["sampler"].to(torch.uint8))
        if "gumbel" in states:
            self.gumbel_gen.set_state(states["gumbel"].to(torch.uint8))
        self.step = ckpt.step


def format_log_line(step, breakdown, tau, lr) -> str:
    d = breakdown.detached()
    return (
        f"{step}\t{d['l_mel']:.6e}\t{d['l_pros']:.6e}\t{d['l_adv']:.6e}"
        f"\t{d['l_emo']:.6e}\t{d['total']:.6e}\t{tau:.6e}\t{lr:.6e}"
    )


@torch.no_grad()
def compute_intensity_medians(model: TransferModel, dataset: PreparedDataset, alpha: float):
    """Per-emotion median of the posterior-probability intensity at the label.

    For every labeled utterance, the intensity is the modified-softmax value
    at its own label; the moderate synthesis level uses these medians.
    """
    model.eval()
    values: dict[int, list] = {}
    for utt in dataset.labeled():
        mel = torch.from_numpy(dataset.normalized_mel(utt)).unsqueeze(0)
        logits = model.compute_logits(mel)
        intensity = float(modified_softmax(logits, alpha)[0, utt.label])
        values.setdefault(utt.label, []).append(intensity)
    return {label: float(np.median(v)) for label, v in sorted(values.items())}
