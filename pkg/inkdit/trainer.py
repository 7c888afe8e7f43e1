"""
Diffusion training on frozen VAE latents, plus unrolled DDIM fine-tuning
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import torch

from core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from inkdata.types import Corpus
from inkdit.config import DiTConfig, DitTrainConfig
from inkdit.model import InkDiT
from inkdit.sampling import ddim_timesteps, ddim_unroll
from inkdit.schedule import NoiseSchedule, build_schedule, forward_noise
from inkvae.layers import padding_mask
from inkvae.trainer import build_optimizer, build_scheduler, encode_lines, load_vae
from utils.exceptions import CheckpointError, ConfigurationError, DegenerateBatchError, ValidationError
from utils.resilience import DivergenceGuard
from utils.seeding import step_seed, torch_generator

logger = logging.getLogger(__name__)

DIT_KIND = "inkdit"
LogFn = Callable[[Dict[str, Any]], None]


@dataclass
class ConditionedBatch:
    x0: torch.Tensor          # [B, l, d] scaled latents, zero past valid_len
    x_ref: torch.Tensor       # [B, l, d] x0 on the reference prefix, zero elsewhere
    ref_mask: torch.Tensor    # [B, l] True on the reference prefix
    valid_mask: torch.Tensor  # [B, l] True on real latent steps
    texts: List[List[int]]

    @property
    def pad_mask(self) -> torch.Tensor:
        return ~self.valid_mask


def masked_mse(x0_hat: torch.Tensor, x0: torch.Tensor, ref_mask: torch.Tensor,
               valid_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Mean squared error over non-reference (and valid) positions, all channels"""
    if x0_hat.shape != x0.shape:
        raise ValidationError("masked_mse", f"shape {tuple(x0_hat.shape)} != {tuple(x0.shape)}")
    supervised = ~ref_mask.bool()
    if valid_mask is not None:
        supervised = supervised & valid_mask.bool()
    count = int(supervised.sum())
    if count == 0:
        raise DegenerateBatchError("every position is reference or padding; nothing to supervise")
    weight = supervised.unsqueeze(-1).to(x0.dtype)
    return ((x0_hat - x0) ** 2 * weight).sum() / (count * x0.shape[-1])


def sample_reference_lengths(lengths: Sequence[int], generator: torch.Generator,
                             frac_min: float, frac_max: float) -> List[int]:
    """Prefix length r ~ U[frac_min, frac_max] * l per line, kept within [1, l - 1]"""
    fracs = frac_min + (frac_max - frac_min) * torch.rand(len(lengths), generator=generator, dtype=torch.float64)
    out = []
    for frac, l in zip(fracs.tolist(), lengths):
        if l < 2:
            out.append(0)
            continue
        out.append(min(max(int(round(frac * l)), 1), l - 1))
    return out


def build_conditioned_batch(latents: Sequence[torch.Tensor], texts: Sequence[List[int]],
                            ref_lengths: Sequence[int], invert_ref_mask: bool = False,
                            device: str = "cpu") -> ConditionedBatch:
    """Left-align latents, put the reference prefix into x_ref and mark it in ref_mask.

    With invert_ref_mask the mask marks the generation region instead, which
    flips the positions masked_mse supervises.
    """
    length = max(max(lat.shape[0] for lat in latents), max(len(t) for t in texts))
    dim = latents[0].shape[-1]
    x0 = torch.zeros(len(latents), length, dim)
    x_ref = torch.zeros_like(x0)
    ref_mask = torch.zeros(len(latents), length, dtype=torch.bool)
    valid = torch.tensor([lat.shape[0] for lat in latents])
    for i, (lat, r) in enumerate(zip(latents, ref_lengths)):
        x0[i, :lat.shape[0]] = lat
        x_ref[i, :r] = lat[:r]
        ref_mask[i, :r] = True
    valid_mask = ~padding_mask(valid, length)
    if invert_ref_mask:
        ref_mask = ~ref_mask & valid_mask
    return ConditionedBatch(x0=x0.to(device), x_ref=x_ref.to(device), ref_mask=ref_mask.to(device),
                            valid_mask=valid_mask.to(device), texts=[list(t) for t in texts])


class LatentPool:
    """Frozen, scaled posterior-mean latents of the training lines"""

    def __init__(self, latents: List[torch.Tensor], texts: List[List[int]], scale: float):
        self.latents = latents
        self.texts = texts
        self.scale = scale

    @classmethod
    def from_corpus(cls, corpus: Corpus, vae_path: Path, max_latent_len: int, max_line_points: int,
                    scale: Optional[float] = None, device: str = "cpu") -> Tuple["LatentPool", List[str]]:
        vae, ckpt = load_vae(vae_path, device)
        vocab = ckpt.header["vocab"]
        index = {ch: i for i, ch in enumerate(vocab)}
        lines = [line for line in corpus.lines if all(ch in index for ch in line.text)]
        if len(lines) < len(corpus.lines):
            logger.warning(f"Skipped {len(corpus.lines) - len(lines)} lines with characters unknown to the VAE")
        raw = encode_lines(vae, lines, max_line_points, device=device)
        keep = [i for i, (lat, line) in enumerate(zip(raw, lines))
                if len(line.text) <= lat.shape[0] <= max_latent_len]
        if len(keep) < len(lines):
            logger.warning(f"Skipped {len(lines) - len(keep)} lines whose latent is shorter than the text "
                           f"or longer than {max_latent_len}")
        if not keep:
            raise ValidationError("train_dit", "no usable training lines")
        latents = [raw[i] for i in keep]
        if scale is None:
            std = float(torch.cat(latents).std())
            scale = 1.0 / std if std > 0 else 1.0
            logger.info(f"Latent std {std:.4f}, scale {scale:.4f}")
        texts = [[index[ch] for ch in lines[i].text] for i in keep]
        return cls([lat * scale for lat in latents], texts, scale), vocab

    def draw(self, seed: int, step: int, batch_size: int, config: DitTrainConfig,
             device: str = "cpu") -> Tuple[ConditionedBatch, torch.Generator]:
        gen = torch_generator(step_seed(seed, step, stream=0))
        idx = torch.randint(len(self.latents), (batch_size,), generator=gen).tolist()
        lats = [self.latents[i] for i in idx]
        refs = sample_reference_lengths([lat.shape[0] for lat in lats], gen,
                                        config.ref_frac_min, config.ref_frac_max)
        batch = build_conditioned_batch(lats, [self.texts[i] for i in idx], refs,
                                        config.invert_ref_mask, device)
        return batch, gen


def diffusion_loss(model: InkDiT, batch: ConditionedBatch, schedule: NoiseSchedule,
                   generator: torch.Generator) -> torch.Tensor:
    b = batch.x0.shape[0]
    t = torch.randint(1, schedule.T + 1, (b,), generator=generator)
    eps = torch.randn(batch.x0.shape, generator=generator)
    t, eps = t.to(batch.x0.device), eps.to(batch.x0.device)
    x_t = forward_noise(batch.x0, t, eps, schedule)
    z_in = model.codebook.embed_batch(batch.texts, batch.x0.shape[1])
    x0_hat = model(x_t, batch.x_ref, z_in, t, batch.pad_mask)
    return masked_mse(x0_hat, batch.x0, batch.ref_mask, batch.valid_mask)


def unrolled_loss(model: InkDiT, batch: ConditionedBatch, schedule: NoiseSchedule, grid: List[int],
                  unroll_steps: int, generator: torch.Generator) -> torch.Tensor:
    """Noise to a grid timestep, run unroll_steps differentiable DDIM calls, supervise the last x0"""
    start = int(torch.randint(0, len(grid) - unroll_steps, (1,), generator=generator))
    b = batch.x0.shape[0]
    t = torch.full((b,), grid[start], dtype=torch.long)
    eps = torch.randn(batch.x0.shape, generator=generator).to(batch.x0.device)
    x_t = forward_noise(batch.x0, t.to(batch.x0.device), eps, schedule)
    z_in = model.codebook.embed_batch(batch.texts, batch.x0.shape[1])
    denoise_fn = model.conditioned(batch.x_ref, z_in, batch.pad_mask)
    x0_hat = ddim_unroll(denoise_fn, x_t, grid, schedule, start_index=start, n_calls=unroll_steps)
    return masked_mse(x0_hat, batch.x0, batch.ref_mask, batch.valid_mask)


def dit_header(model: InkDiT, vocab: Sequence[str], step: int, seed: int, config_hash: str,
               loss: Optional[float], latent_scale: float, schedule: NoiseSchedule,
               vae_path: Path, ddim_steps: int, finetuned: bool) -> Dict[str, Any]:
    return {
        "kind": DIT_KIND,
        "step": step,
        "seed": seed,
        "config_hash": config_hash,
        "loss_report": {"masked_mse": loss},
        "model_config": asdict(model.config),
        "vocab": list(vocab),
        "latent_scale": latent_scale,
        "schedule": {"T": schedule.T, "offset": schedule.offset},
        "ddim_steps": ddim_steps,
        "vae_checkpoint": str(vae_path),
        "finetuned": finetuned,
    }


def load_dit(path: Path, device: str = "cpu") -> Tuple[InkDiT, Checkpoint]:
    ckpt = load_checkpoint(path, kind=DIT_KIND)
    model = InkDiT(DiTConfig(**ckpt.header["model_config"]), len(ckpt.header["vocab"]))
    try:
        model.load_state_dict(ckpt.state)
    except RuntimeError as e:
        raise CheckpointError(path, f"parameters do not match the model: {e}")
    model.to(device).eval()
    return model, ckpt


def schedule_from_header(header: Dict[str, Any]) -> NoiseSchedule:
    return build_schedule(header["schedule"]["T"], header["schedule"]["offset"])


def _optimize(model: InkDiT, pool: LatentPool, config: DitTrainConfig, loss_fn, steps: int, lr: float,
              seed: int, start_ckpt: Optional[Checkpoint], save: Callable[[int, Optional[float], Any, Any, Path], None],
              last_path: Path, stage: str, log_fn: Optional[LogFn], device: str) -> Optional[float]:
    optimizer = build_optimizer(model, lr, config.betas, config.weight_decay)
    scheduler = build_scheduler(optimizer, steps, config.warmup_frac)
    guard = DivergenceGuard(config.divergence_patience)
    start = 0
    if start_ckpt is not None:
        optimizer.load_state_dict(start_ckpt.extra["optimizer"])
        scheduler.load_state_dict(start_ckpt.extra["scheduler"])
        start = start_ckpt.step
        logger.info(f"Resuming {stage} from step {start}")

    loss_value: Optional[float] = None
    model.train()
    for step in range(start + 1, steps + 1):
        torch.manual_seed(step_seed(seed, step, stream=2))
        batch, gen = pool.draw(seed, step, config.batch_size, config, device)
        loss = loss_fn(batch, gen)
        optimizer.zero_grad(set_to_none=True)
        value = float(loss.detach())
        if not math.isfinite(value):
            guard.record_failure(step, {"masked_mse": value})
            scheduler.step()
            continue
        loss.backward()
        grad_norm = torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
        optimizer.step()
        scheduler.step()
        guard.record_success()
        loss_value = value
        if log_fn is not None and (step % config.log_every == 0 or step == steps):
            log_fn({"stage": stage, "step": step, "lr": scheduler.get_last_lr()[0],
                    "grad_norm": float(grad_norm), "masked_mse": value})
        if step % config.ckpt_every == 0 and step != steps:
            save(step, loss_value, optimizer, scheduler, last_path)
    save(steps, loss_value, optimizer, scheduler, last_path)
    return loss_value


def train_dit(corpus: Corpus, vae_path: Path, config: DitTrainConfig, out_dir: Path, seed: int,
              config_hash: str = "", max_line_points: int = 1024, log_fn: Optional[LogFn] = None,
              resume: bool = False, device: str = "cpu") -> Path:
    """Train the denoiser on frozen VAE latents; returns the final checkpoint path"""
    out_dir = Path(out_dir)
    last_path = out_dir / "dit_last.pt"
    final_path = out_dir / "dit.pt"
    schedule = build_schedule(config.timesteps, config.schedule_offset)

    start_ckpt = None
    scale = None
    if resume and last_path.exists():
        start_ckpt = load_checkpoint(last_path, kind=DIT_KIND)
        if config_hash and start_ckpt.header.get("config_hash") not in ("", config_hash):
            raise CheckpointError(last_path, "config hash differs from the current configuration")
        scale = float(start_ckpt.header["latent_scale"])
    pool, vocab = LatentPool.from_corpus(corpus, vae_path, config.max_latent_len, max_line_points,
                                         scale=scale, device=device)
    if pool.latents[0].shape[-1] != config.model.latent_dim:
        raise ConfigurationError("dit.model", f"latent_dim {config.model.latent_dim} does not match "
                                              f"the VAE latent width {pool.latents[0].shape[-1]}")

    torch.manual_seed(seed)
    model = InkDiT(config.model, len(vocab)).to(device)
    if start_ckpt is not None:
        model.load_state_dict(start_ckpt.state)
    logger.info(f"Training denoiser for {config.steps} steps on {len(pool.latents)} latent lines "
                f"({sum(p.numel() for p in model.parameters()):,} parameters)")

    def save(step, loss, optimizer, scheduler, path):
        header = dit_header(model, vocab, step, seed, config_hash, loss, pool.scale, schedule,
                            vae_path, config.ddim_steps, finetuned=False)
        save_checkpoint(path, header, model.state_dict(),
                        extra={"optimizer": optimizer.state_dict(), "scheduler": scheduler.state_dict()})

    def loss_fn(batch, gen):
        return diffusion_loss(model, batch, schedule, gen)

    loss = _optimize(model, pool, config, loss_fn, config.steps, config.lr, seed, start_ckpt, save,
                     last_path, "train_dit", log_fn, device)
    final = load_checkpoint(last_path, kind=DIT_KIND)
    save_checkpoint(final_path, final.header, final.state)
    logger.info(f"Denoiser training finished with masked MSE {loss}")
    return final_path


def ddim_finetune(corpus: Corpus, dit_path: Path, config: DitTrainConfig, out_dir: Path, seed: int,
                  vae_path: Optional[Path] = None, config_hash: str = "", max_line_points: int = 1024,
                  log_fn: Optional[LogFn] = None, device: str = "cpu") -> Path:
    """Short low-lr pass supervising x0 after unroll_steps differentiable DDIM calls"""
    out_dir = Path(out_dir)
    last_path = out_dir / "dit_ft_last.pt"
    final_path = out_dir / "dit_ft.pt"
    model, base = load_dit(dit_path, device)
    header = base.header
    vae_path = Path(vae_path or header["vae_checkpoint"])
    schedule = schedule_from_header(header)
    grid = ddim_timesteps(schedule.T, config.ddim_steps)
    pool, vocab = LatentPool.from_corpus(corpus, vae_path, config.max_latent_len, max_line_points,
                                         scale=float(header["latent_scale"]), device=device)
    if list(vocab) != list(header["vocab"]):
        raise CheckpointError(dit_path, "VAE and denoiser vocabularies differ")

    def save(step, loss, optimizer, scheduler, path):
        new_header = dit_header(model, vocab, step, seed, config_hash, loss, pool.scale, schedule,
                                vae_path, config.ddim_steps, finetuned=True)
        save_checkpoint(path, new_header, model.state_dict(),
                        extra={"optimizer": optimizer.state_dict(), "scheduler": scheduler.state_dict()})

    def loss_fn(batch, gen):
        return unrolled_loss(model, batch, schedule, grid, config.unroll_steps, gen)

    lr = config.lr * config.finetune_lr_scale
    logger.info(f"DDIM fine-tuning for {config.finetune_steps} steps, unroll {config.unroll_steps}, lr {lr:g}")
    _optimize(model, pool, config, loss_fn, config.finetune_steps, lr, seed, None, save,
              last_path, "ddim_finetune", log_fn, device)
    final = load_checkpoint(last_path, kind=DIT_KIND)
    save_checkpoint(final_path, final.header, final.state)
    return final_path
