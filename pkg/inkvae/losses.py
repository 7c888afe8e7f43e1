"""
Training objectives for the trajectory VAE
"""

import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn.functional as F

from inkvae.config import PEN_CLASSES, VaeLossWeights
from inkvae.gmm import gmm_nll
from inkvae.types import LatentPosterior

__all__ = [
    "VaeLossReport", "ctc_feasible", "ctc_greedy_decode", "ctc_loss", "ctc_losses", "ctc_min_frames", "gmm_nll",
    "kl_loss", "pen_class_alpha", "pen_focal_loss", "style_ce", "vae_total_loss",
]


def pen_class_alpha(pen_counts: Sequence[float]) -> torch.Tensor:
    """Inverse class frequency of pen states, renormalized to mean 1"""
    counts = torch.as_tensor(pen_counts, dtype=torch.float64).clamp_min(1.0)
    inv = 1.0 / counts
    return (inv * PEN_CLASSES / inv.sum()).float()


def pen_focal_loss(pen_logits: torch.Tensor, pen_targets: torch.Tensor,
                   alpha: Optional[torch.Tensor] = None, gamma: float = 2.0) -> torch.Tensor:
    """Focal loss averaged over every step, padding included"""
    log_p = F.log_softmax(pen_logits, dim=-1)
    p = log_p.exp()
    weight = (1.0 - p).pow(gamma) if gamma else torch.ones_like(p)
    if alpha is not None:
        weight = weight * alpha.to(device=pen_logits.device, dtype=pen_logits.dtype)
    per_step = -(weight * pen_targets * log_p).sum(dim=-1)
    return per_step.mean()


def kl_loss(posterior: LatentPosterior, valid_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """KL to N(0, I), summed over channels and averaged over valid latent steps"""
    mu, logvar = posterior.mu, posterior.logvar
    per_step = 0.5 * (logvar.exp() + mu * mu - 1.0 - logvar).sum(dim=-1)
    if valid_mask is None:
        return per_step.mean()
    mask = valid_mask.to(per_step.dtype)
    total = mask.sum()
    if total == 0:
        return per_step.new_zeros(())
    return (per_step * mask).sum() / total


def _flatten_labels(labels: Sequence[Sequence[int]], device) -> tuple:
    lengths = torch.tensor([len(seq) for seq in labels], dtype=torch.long)
    flat = [int(i) for seq in labels for i in seq]
    return torch.tensor(flat, dtype=torch.long, device=device), lengths


def ctc_losses(logits: torch.Tensor, labels: Sequence[Sequence[int]], valid_lens: torch.Tensor,
               zero_infinity: bool = False) -> torch.Tensor:
    """Per-sample CTC negative log-likelihood; blank is the last class.

    Infeasible labels come back as +inf instead of raising, or as 0 with zero_infinity.
    """
    blank = logits.shape[-1] - 1
    targets, target_lens = _flatten_labels(labels, logits.device)
    log_probs = F.log_softmax(logits, dim=-1).transpose(0, 1)
    return F.ctc_loss(log_probs, targets, valid_lens.long().cpu(), target_lens,
                      blank=blank, reduction="none", zero_infinity=zero_infinity)


def ctc_min_frames(label: Sequence[int]) -> int:
    """Frames needed to align a label: one per symbol plus a blank between repeats"""
    return len(label) + sum(1 for a, b in zip(label, label[1:]) if a == b)


def ctc_feasible(labels: Sequence[Sequence[int]], valid_lens: torch.Tensor) -> torch.Tensor:
    lens = valid_lens.long().cpu().tolist()
    return torch.tensor([ctc_min_frames(label) <= n for label, n in zip(labels, lens)], dtype=torch.bool)


def ctc_loss(logits: torch.Tensor, labels: Sequence[Sequence[int]], valid_lens: torch.Tensor,
             drop_infeasible: bool = False) -> torch.Tensor:
    """Batch-mean CTC loss; with drop_infeasible, samples whose label cannot fit are left out"""
    if not drop_infeasible:
        return ctc_losses(logits, labels, valid_lens).mean()
    feasible = ctc_feasible(labels, valid_lens).to(logits.device)
    if not feasible.any():
        return (logits * 0.0).sum()
    losses = ctc_losses(logits, labels, valid_lens, zero_infinity=True)
    return losses[feasible].mean()


def ctc_greedy_decode(logits: torch.Tensor, valid_lens: torch.Tensor) -> List[List[int]]:
    """Best path: argmax per frame, collapse repeats, drop blanks"""
    blank = logits.shape[-1] - 1
    best = logits.argmax(dim=-1).cpu()
    decoded = []
    for b in range(best.shape[0]):
        out, prev = [], None
        for idx in best[b, :int(valid_lens[b])].tolist():
            if idx != prev and idx != blank:
                out.append(idx)
            prev = idx
        decoded.append(out)
    return decoded


def style_ce(writer_logits: torch.Tensor, writer_targets: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(writer_logits, writer_targets)


@dataclass
class VaeLossReport:
    gmm_nll: float
    pen_focal: float
    kl: float
    ocr_ctc: float
    style_ce: float
    total: float
    total_tensor: Optional[torch.Tensor] = field(default=None, repr=False, compare=False)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.total)

    def to_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "total_tensor"}


def vae_total_loss(gmm: torch.Tensor, pen: torch.Tensor, kl: torch.Tensor, ocr: torch.Tensor,
                   sty: torch.Tensor, weights: VaeLossWeights) -> VaeLossReport:
    """Weighted sum of the components; a zero weight removes its term entirely.

    A non-finite total is the caller's signal to skip the optimizer step.
    """
    terms = [(weights.gmm, gmm), (weights.pen, pen), (weights.kl, kl), (weights.ocr, ocr), (weights.sty, sty)]
    total = None
    for weight, value in terms:
        if weight == 0:
            continue
        term = weight * value
        total = term if total is None else total + term
    if total is None:
        total = gmm * 0.0

    def scalar(t: torch.Tensor) -> float:
        return float(t.detach()) if torch.is_tensor(t) else float(t)

    return VaeLossReport(
        gmm_nll=scalar(gmm),
        pen_focal=scalar(pen),
        kl=scalar(kl),
        ocr_ctc=scalar(ocr),
        style_ce=scalar(sty),
        total=scalar(total),
        total_tensor=total,
    )
