"""
One-shot line generation: reference prefix in, continuation trajectory out
"""

import logging
import math
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import torch

from inkdata.augment import augment_reference
from inkdata.preprocess import LATENT_STRIDE, pad_batch, round_up
from inkdata.types import InkLine, PenState
from inkdit.model import InkDiT
from inkdit.sampling import ddim_sample
from inkdit.schedule import NoiseSchedule
from inkdit.trainer import load_dit, schedule_from_header
from inkvae.gmm import sample_trajectory
from inkvae.model import InkVAE
from inkvae.trainer import load_vae
from utils.exceptions import CheckpointError, ValidationError, VocabularyError
from utils.performance import profiler

logger = logging.getLogger(__name__)


def estimate_latent_length(n_ref_points: int, m_ref: int, m_gen: int, max_len: int) -> int:
    """Extrapolate the reference's points-per-character to the whole text"""
    estimate = math.ceil((n_ref_points / m_ref) * (m_ref + m_gen) / LATENT_STRIDE)
    return int(min(max(estimate, m_ref + m_gen), max_len))


def force_char_ends(xy: np.ndarray, pen: np.ndarray, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Ensure exactly `count` EndOfChar markers with the last point closing a character.

    Extra markers past `count` are dropped with their points; missing ones are
    placed by splitting the tail after the last marker evenly, duplicating the
    final point when the tail is too short.
    """
    pen = pen.copy()
    ends = np.flatnonzero(pen == PenState.END_OF_CHAR)
    if len(ends) >= count:
        stop = int(ends[count - 1]) + 1
        return xy[:stop], pen[:stop]
    tail_start = int(ends[-1]) + 1 if len(ends) else 0
    missing = count - len(ends)
    if len(xy) == 0:
        xy = np.zeros((1, 2))
        pen = np.zeros(1, dtype=np.int8)
    tail = len(xy) - tail_start
    if tail < missing:
        extra = missing - tail
        xy = np.concatenate([xy, np.repeat(xy[-1:], extra, axis=0)])
        pen = np.concatenate([pen, np.zeros(extra, dtype=np.int8)])
        tail = missing
    cuts = tail_start + np.ceil(np.arange(1, missing + 1) * tail / missing).astype(np.int64) - 1
    pen[cuts] = PenState.END_OF_CHAR
    return xy, pen


class InkGenerator:
    """Frozen VAE + denoiser pair used for sampling"""

    def __init__(self, vae: InkVAE, dit: InkDiT, vocab: Sequence[str], latent_scale: float,
                 schedule: NoiseSchedule, ddim_steps: int = 5, max_latent_len: int = 128, device: str = "cpu"):
        self.vae = vae.eval()
        self.dit = dit.eval()
        self.vocab = list(vocab)
        self.char_index = {ch: i for i, ch in enumerate(self.vocab)}
        self.latent_scale = latent_scale
        self.schedule = schedule
        self.ddim_steps = ddim_steps
        self.max_latent_len = max_latent_len
        self.device = device

    @classmethod
    def from_checkpoints(cls, vae_path: Path, dit_path: Path, max_latent_len: int = 128,
                         ddim_steps: Optional[int] = None, device: str = "cpu") -> "InkGenerator":
        vae, vae_ckpt = load_vae(vae_path, device)
        dit, dit_ckpt = load_dit(dit_path, device)
        if list(vae_ckpt.header["vocab"]) != list(dit_ckpt.header["vocab"]):
            raise CheckpointError(dit_path, "VAE and denoiser vocabularies differ")
        return cls(vae, dit, dit_ckpt.header["vocab"], float(dit_ckpt.header["latent_scale"]),
                   schedule_from_header(dit_ckpt.header), ddim_steps or int(dit_ckpt.header["ddim_steps"]),
                   max_latent_len, device)

    def char_ids(self, text: str) -> list:
        for ch in text:
            if ch not in self.char_index:
                raise VocabularyError(ch)
        return [self.char_index[ch] for ch in text]

    @torch.no_grad()
    def generate_line(self, text_ref: str, text_gen: str, ref_line: InkLine, seed: int,
                      mode: str = "greedy", temperature: float = 1.0, reference_jitter: bool = False,
                      trace_path: Optional[Path] = None) -> InkLine:
        if not text_gen:
            raise ValidationError("generate_line", "text_gen is empty")
        if not text_ref:
            raise ValidationError("generate_line", "a reference needs at least one character")
        if ref_line.text != text_ref:
            raise ValidationError("generate_line", f"reference trajectory is for {ref_line.text!r}, not {text_ref!r}")
        ids = self.char_ids(text_ref + text_gen)
        m_ref, m_gen = len(text_ref), len(text_gen)

        with profiler.section("generate_line"):
            if reference_jitter:
                ref_line = augment_reference(ref_line, seed)
            padded = pad_batch([ref_line], round_up(ref_line.n_points))
            _, ref_latent = self.vae.encode(padded.points.to(self.device), padded.valid_lengths.to(self.device),
                                            deterministic=True)
            r = int(ref_latent.valid_len[0])
            length = estimate_latent_length(ref_line.n_points, m_ref, m_gen, self.max_latent_len)
            length = max(length, r + 1)

            dim = ref_latent.values.shape[-1]
            x_ref = torch.zeros(1, length, dim, device=self.device)
            x_ref[0, :r] = ref_latent.values[0, :r] * self.latent_scale
            ref_mask = torch.zeros(1, length, dtype=torch.bool, device=self.device)
            ref_mask[0, :r] = True

            z_in = self.dit.codebook.embed_batch([ids], length)
            denoise_fn = self.dit.conditioned(x_ref, z_in)
            x0 = ddim_sample(denoise_fn, x_ref, ref_mask, self.schedule, self.ddim_steps, seed, trace_path)
            gmm = self.vae.decode(x0 / self.latent_scale)
            traj = sample_trajectory(gmm.select(0), mode=mode, temperature=temperature, seed=seed,
                                     expected_chars=m_ref + m_gen)

        xy, pen = traj.xy, traj.pen
        found = int((pen == PenState.END_OF_CHAR).sum())
        if found < m_ref + m_gen:
            logger.warning(f"Decoded {found} character ends for {m_ref + m_gen} characters; forcing the rest")
        xy, pen = force_char_ends(xy, pen, m_ref + m_gen)
        start = int(np.flatnonzero(pen == PenState.END_OF_CHAR)[m_ref - 1]) + 1
        return InkLine(text=text_gen, writer_id=ref_line.writer_id, xy=xy[start:], pen=pen[start:])


def generate_line(text_ref: str, text_gen: str, ref_trajectory: InkLine, generator: InkGenerator,
                  seed: int, **kwargs) -> InkLine:
    return generator.generate_line(text_ref, text_gen, ref_trajectory, seed, **kwargs)
