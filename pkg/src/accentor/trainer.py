"""Training loop: masked cross entropy over augmented batches, Adam with
global-norm clipping, per-epoch dev evaluation, best-model checkpointing."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import modelfile
from .corpus import BatchPartition, augment, make_epoch
from .kernel import AdamState, adam_step, global_norm_clip, softmax_cross_entropy
from .lang import DiacriticTable, dediacritize
from .metrics import MetricsReport, score_sequences
from .model import AtcnModel

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; the last good checkpoint is left on disk."""


@dataclass
class TrainConfig:
    epochs: int = 10
    epoch_sequence_limit: int = 100000
    batch_size: int = 200
    batches_per_epoch: int | None = None     # default: epoch_sequence_limit / batch_size
    augment_p: float = 0.8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    checkpoint_every: int = 1
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.epoch_sequence_limit < 1:
            raise ValueError("all counts must be positive")
        if not 0.0 <= self.augment_p <= 1.0:
            raise ValueError("augment_p must be in [0,1]")
        if self.batches_per_epoch is None:
            self.batches_per_epoch = max(1, self.epoch_sequence_limit // self.batch_size)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "epochs", "epoch_sequence_limit", "batch_size", "batches_per_epoch",
            "augment_p", "lr", "beta1", "beta2", "adam_eps", "clip_norm",
            "seed", "checkpoint_every", "eval_every")}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def model_restorer(model: AtcnModel, constrained: bool = False,
                   batch_size: int = 64) -> Callable[[Sequence[str]], list[str]]:
    """Batched restoration callable for evaluation."""
    def run(lines: Sequence[str]) -> list[str]:
        out: list[str] = []
        for i in range(0, len(lines), batch_size):
            out.extend(model.restore_batch(lines[i:i + batch_size], constrained))
        return out
    return run


def line_restorer(fn: Callable[[str], str]) -> Callable[[Sequence[str]], list[str]]:
    def run(lines: Sequence[str]) -> list[str]:
        return [fn(line) for line in lines]
    return run


def evaluate_model(
    restore_fn: Callable[[Sequence[str]], list[str]],
    gold_lines: Sequence[str],
    table: DiacriticTable,
    strip_mode: str = "full",
    augment_p: float = 0.8,
    seed: int = 0,
) -> MetricsReport:
    """Strip the gold lines (fully, or partially with probability augment_p),
    restore, and score against the gold."""
    if strip_mode == "full":
        inputs = [dediacritize(line, table) for line in gold_lines]
    elif strip_mode == "augmented":
        inputs = [augment(line, table, augment_p, rng=[seed, i, 0xe7a1])
                  for i, line in enumerate(gold_lines)]
    else:
        raise ValueError(f"unknown strip mode {strip_mode!r}")
    return score_sequences(gold_lines, restore_fn(inputs), table)


def checkpoint_paths(out_model) -> tuple[Path, Path]:
    out_model = Path(out_model)
    ckpt = out_model.with_name(out_model.name + ".ckpt")
    return ckpt, ckpt.with_name(ckpt.name + ".opt")


def train_model(
    model: AtcnModel,
    dataset,
    dev_lines: Sequence[str],
    config: TrainConfig,
    out_model=None,
    resume: bool = False,
    log_file=None,
) -> list[dict]:
    """Run the training regime; returns one structured record per epoch.

    All per-epoch randomness (batch draws, augmentation, dropout) derives
    statelessly from (seed, epoch, draw index), so a run resumed from the
    epoch-boundary checkpoint bit-matches an uninterrupted one.
    """
    table = model.table
    partition = BatchPartition(dataset, config.batch_size, config.seed)
    adam_states = {name: AdamState.zeros_like(p) for name, p in model.params.items()}
    step = 0
    start_epoch = 0
    best_alpha = -1.0

    ckpt_path = opt_path = None
    if out_model is not None:
        ckpt_path, opt_path = checkpoint_paths(out_model)
        if resume:
            meta, adam_states = modelfile.load_optimizer(opt_path, model.params)
            step = meta["step"]
            start_epoch = meta["epochs_done"]
            best_alpha = meta["best_alpha_word"]
            log.info("resuming from %s at epoch %d", ckpt_path, start_epoch)

    records: list[dict] = []
    log_fh = open(log_file, "a", encoding="utf-8") if log_file else None
    try:
        for epoch in range(start_epoch, config.epochs):
            t0 = time.time()
            loss_sum = 0.0
            batches = make_epoch(partition, epoch, model.vocab, table,
                                 augment_p=config.augment_p,
                                 batches_per_epoch=config.batches_per_epoch,
                                 seed=config.seed)
            n_batches = 0
            for draw_index, batch in enumerate(batches):
                logits, tape = model.forward(batch.input_ids, batch.mask, train=True,
                                             rng_seed=[config.seed, epoch, draw_index, 0xd0])
                loss, grad_logits = softmax_cross_entropy(logits, batch.target_ids, batch.mask)
                if not math.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} draw {draw_index}; "
                        f"last checkpoint retained" + (f" at {ckpt_path}" if ckpt_path else ""))
                grads = model.backward(tape, grad_logits)
                ordered = [grads[name] for name in model.params]
                global_norm_clip(ordered, config.clip_norm)
                step += 1
                for name, param in model.params.items():
                    adam_step(param, grads[name], adam_states[name], step,
                              lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                              eps=config.adam_eps)
                loss_sum += loss
                n_batches += 1

            record = {
                "epoch": epoch,
                "train_loss": loss_sum / max(1, n_batches),
                "batches": n_batches,
                "seconds": round(time.time() - t0, 3),
            }

            if dev_lines and (epoch + 1) % config.eval_every == 0:
                report = evaluate_model(model_restorer(model), dev_lines, table,
                                        strip_mode="full")
                record["dev"] = dict(report.to_rows())
                if report.alpha_word_accuracy > best_alpha:
                    best_alpha = report.alpha_word_accuracy
                    if out_model is not None:
                        modelfile.save_model(model, out_model)
                        record["saved_best"] = True

            if out_model is not None and (epoch + 1) % max(1, config.checkpoint_every) == 0:
                modelfile.save_model(model, ckpt_path)
                modelfile.save_optimizer(opt_path, {
                    "step": step,
                    "epochs_done": epoch + 1,
                    "best_alpha_word": best_alpha,
                    "train_config": config.to_dict(),
                }, adam_states)

            records.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            log.info("epoch %d: loss %.4f (%.1fs)%s", epoch, record["train_loss"],
                     record["seconds"],
                     f" dev alpha-word {record['dev']['alpha_word_accuracy']}" if "dev" in record else "")

        if out_model is not None and not Path(out_model).exists():
            # no dev evaluation ever ran; persist the final state
            modelfile.save_model(model, out_model)
    finally:
        if log_fh:
            log_fh.close()
    return records
