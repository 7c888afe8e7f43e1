"""
VAE training loop with seeded per-step batches, divergence guard and resumable checkpoints
"""

import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.optim.lr_scheduler import LambdaLR

from core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from inkdata.preprocess import batch_target_len, pad_batch
from inkdata.types import Corpus, InkLine
from inkvae.config import PEN_CLASSES, VaeLossWeights, VaeModelConfig, VaeTrainConfig
from inkvae.losses import (VaeLossReport, ctc_feasible, ctc_loss, kl_loss, pen_class_alpha, pen_focal_loss,
                           style_ce, vae_total_loss)
from inkvae.gmm import gmm_nll
from inkvae.model import InkVAE, point_mask
from utils.exceptions import CheckpointError, NumericError, ValidationError, VocabularyError
from utils.resilience import DivergenceGuard
from utils.seeding import step_seed, torch_generator

logger = logging.getLogger(__name__)

VAE_KIND = "inkvae"
LogFn = Callable[[Dict[str, Any]], None]


def build_optimizer(model: torch.nn.Module, lr: float, betas: Tuple[float, float],
                    weight_decay: float) -> torch.optim.AdamW:
    return torch.optim.AdamW(model.parameters(), lr=lr, betas=tuple(betas), weight_decay=weight_decay)


def warmup_cosine(total_steps: int, warmup_frac: float) -> Callable[[int], float]:
    """Linear warm-up over warmup_frac of the steps, cosine decay to zero afterwards"""
    warmup = max(1, int(round(total_steps * warmup_frac))) if warmup_frac > 0 else 0

    def factor(step: int) -> float:
        if warmup and step < warmup:
            return (step + 1) / warmup
        progress = (step - warmup) / max(1, total_steps - warmup)
        return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))

    return factor


def build_scheduler(optimizer: torch.optim.Optimizer, total_steps: int, warmup_frac: float) -> LambdaLR:
    return LambdaLR(optimizer, warmup_cosine(total_steps, warmup_frac))


class TrainingBatch(NamedTuple):
    points: torch.Tensor
    valid_lengths: torch.Tensor
    pen_targets: torch.Tensor
    labels: List[List[int]]
    writers: torch.Tensor
    lines: List[InkLine]


class LineBatcher:
    """Draws seeded random batches of lines and turns them into model inputs"""

    def __init__(self, lines: Sequence[InkLine], vocab: Sequence[str], writers: Sequence[int],
                 max_line_points: int = 1024):
        if not lines:
            raise ValidationError("LineBatcher", "no training lines")
        self.lines = list(lines)
        self.char_index = {ch: i for i, ch in enumerate(vocab)}
        self.writer_index = {w: i for i, w in enumerate(writers)}
        self.max_line_points = max_line_points

    def indices(self, seed: int, step: int, batch_size: int) -> List[int]:
        gen = torch_generator(step_seed(seed, step, stream=0))
        return torch.randint(len(self.lines), (batch_size,), generator=gen).tolist()

    def labels(self, text: str) -> List[int]:
        try:
            return [self.char_index[ch] for ch in text]
        except KeyError as e:
            raise VocabularyError(e.args[0])

    def make(self, lines: Sequence[InkLine], device: str = "cpu") -> TrainingBatch:
        target = batch_target_len(lines, self.max_line_points)
        padded = pad_batch(lines, target)
        writers = torch.tensor([self.writer_index.get(line.writer_id, 0) for line in lines], dtype=torch.long)
        return TrainingBatch(
            points=padded.points.to(device),
            valid_lengths=padded.valid_lengths.to(device),
            pen_targets=padded.pen_targets.to(device),
            labels=[self.labels(line.text) for line in lines],
            writers=writers.to(device),
            lines=list(lines),
        )

    def draw(self, seed: int, step: int, batch_size: int, device: str = "cpu") -> TrainingBatch:
        return self.make([self.lines[i] for i in self.indices(seed, step, batch_size)], device)


def pen_state_counts(lines: Sequence[InkLine]) -> List[int]:
    counts = np.zeros(PEN_CLASSES, dtype=np.int64)
    for line in lines:
        counts += np.bincount(line.pen.astype(np.int64), minlength=PEN_CLASSES)[:PEN_CLASSES]
    return counts.tolist()


def compute_losses(model: InkVAE, batch: TrainingBatch, weights: VaeLossWeights,
                   pen_alpha: Optional[torch.Tensor], focal_gamma: float,
                   generator: Optional[torch.Generator] = None) -> VaeLossReport:
    posterior, latent = model.encode(batch.points, batch.valid_lengths, generator=generator)
    gmm = model.decode(latent.values)
    mask = point_mask(batch.valid_lengths, batch.points.shape[1])
    zero = latent.values.new_zeros(())
    gmm_term = gmm_nll(gmm, batch.points[..., :2], mask)
    pen_term = pen_focal_loss(gmm.pen_logits, batch.pen_targets, alpha=pen_alpha, gamma=focal_gamma)
    kl_term = kl_loss(posterior, latent.valid_mask())
    ocr_term = zero
    if weights.ocr > 0:
        dropped = int((~ctc_feasible(batch.labels, latent.valid_len)).sum())
        if dropped:
            logger.debug(f"Leaving {dropped} lines out of the CTC term: text longer than their latent frames")
        ocr_term = ctc_loss(model.recognize(latent), batch.labels, latent.valid_len, drop_infeasible=True)
    sty_term = style_ce(model.identify(latent), batch.writers) if weights.sty > 0 else zero
    return vae_total_loss(gmm_term, pen_term, kl_term, ocr_term, sty_term, weights)


def vae_header(model: InkVAE, vocab: Sequence[str], writers: Sequence[int], step: int, seed: int,
               config_hash: str, report: Optional[VaeLossReport], pen_alpha: Sequence[float],
               weights: VaeLossWeights) -> Dict[str, Any]:
    return {
        "kind": VAE_KIND,
        "step": step,
        "seed": seed,
        "config_hash": config_hash,
        "loss_report": report.to_dict() if report is not None else None,
        "model_config": asdict(model.config),
        "vocab": list(vocab),
        "writers": [int(w) for w in writers],
        "pen_alpha": [float(a) for a in pen_alpha],
        "loss_weights": asdict(weights),
    }


def load_vae(path: Path, device: str = "cpu") -> Tuple[InkVAE, Checkpoint]:
    ckpt = load_checkpoint(path, kind=VAE_KIND)
    header = ckpt.header
    model = InkVAE(VaeModelConfig(**header["model_config"]), len(header["vocab"]), len(header["writers"]))
    try:
        model.load_state_dict(ckpt.state)
    except RuntimeError as e:
        raise CheckpointError(path, f"parameters do not match the model: {e}")
    model.to(device).eval()
    return model, ckpt


@torch.no_grad()
def encode_lines(model: InkVAE, lines: Sequence[InkLine], max_line_points: Optional[int] = None,
                 batch_size: int = 64, device: str = "cpu") -> List[torch.Tensor]:
    """Posterior-mean latents per line, trimmed to each line's valid latent length"""
    model.eval()
    out: List[torch.Tensor] = []
    for start in range(0, len(lines), batch_size):
        chunk = list(lines[start:start + batch_size])
        padded = pad_batch(chunk, batch_target_len(chunk, max_line_points))
        _, latent = model.encode(padded.points.to(device), padded.valid_lengths.to(device), deterministic=True)
        for i in range(len(chunk)):
            out.append(latent.values[i, :int(latent.valid_len[i])].cpu())
    return out


def train_vae(corpus: Corpus, config: VaeTrainConfig, out_dir: Path, seed: int, config_hash: str = "",
              max_line_points: int = 1024, log_fn: Optional[LogFn] = None, resume: bool = False,
              device: str = "cpu") -> Path:
    """Jointly train encoder, decoder and latent heads; returns the final checkpoint path"""
    out_dir = Path(out_dir)
    last_path = out_dir / "vae_last.pt"
    final_path = out_dir / "vae.pt"
    writers = corpus.writers
    batcher = LineBatcher(corpus.lines, corpus.vocab, writers, max_line_points)
    alpha = pen_class_alpha(pen_state_counts(corpus.lines))

    torch.manual_seed(seed)
    model = InkVAE(config.model, len(corpus.vocab), len(writers)).to(device)
    optimizer = build_optimizer(model, config.lr, config.betas, config.weight_decay)
    scheduler = build_scheduler(optimizer, config.steps, config.warmup_frac)
    guard = DivergenceGuard(config.divergence_patience)

    start = 0
    if resume and last_path.exists():
        ckpt = load_checkpoint(last_path, kind=VAE_KIND)
        if config_hash and ckpt.header.get("config_hash") not in ("", config_hash):
            raise CheckpointError(last_path, "config hash differs from the current configuration")
        model.load_state_dict(ckpt.state)
        optimizer.load_state_dict(ckpt.extra["optimizer"])
        scheduler.load_state_dict(ckpt.extra["scheduler"])
        start = ckpt.step
        logger.info(f"Resuming VAE training from step {start}")

    logger.info(f"Training VAE for {config.steps} steps on {len(corpus)} lines "
                f"({sum(p.numel() for p in model.parameters()):,} parameters)")
    report: Optional[VaeLossReport] = None
    if start and ckpt.header.get("loss_report"):
        report = VaeLossReport(**ckpt.header["loss_report"])
    alpha_dev = alpha.to(device)

    def checkpoint(step: int, path: Path):
        header = vae_header(model, corpus.vocab, writers, step, seed, config_hash, report,
                            alpha.tolist(), config.weights)
        save_checkpoint(path, header, model.state_dict(),
                        extra={"optimizer": optimizer.state_dict(), "scheduler": scheduler.state_dict()})

    model.train()
    for step in range(start + 1, config.steps + 1):
        torch.manual_seed(step_seed(seed, step, stream=2))
        batch = batcher.draw(seed, step, config.batch_size, device)
        noise = torch_generator(step_seed(seed, step, stream=1))
        optimizer.zero_grad(set_to_none=True)
        try:
            step_report = compute_losses(model, batch, config.weights, alpha_dev, config.focal_gamma,
                                         generator=noise if device == "cpu" else None)
        except NumericError as e:
            guard.record_failure(step, {"error": e.message})
            scheduler.step()
            continue
        if not step_report.finite:
            guard.record_failure(step, step_report.to_dict())
            scheduler.step()
            continue
        step_report.total_tensor.backward()
        grad_norm = torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
        optimizer.step()
        scheduler.step()
        guard.record_success()
        report = step_report

        if log_fn is not None and (step % config.log_every == 0 or step == config.steps):
            log_fn({"stage": "train_vae", "step": step, "lr": scheduler.get_last_lr()[0],
                    "grad_norm": float(grad_norm), **report.to_dict()})
        if step % config.ckpt_every == 0 and step != config.steps:
            checkpoint(step, last_path)

    checkpoint(config.steps, last_path)
    checkpoint(config.steps, final_path)
    return final_path
