"""
Independently trained evaluation models: a CTC recognizer and a writer classifier.

Both reuse the VAE encoder architecture with fresh weights and read the
posterior mean, so they never see the generator's parameters.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List, Protocol, Sequence, Tuple

import torch
import torch.nn as nn

from core.checkpoint import load_checkpoint, save_checkpoint
from inkdata.preprocess import batch_target_len, normalize_line, pad_batch
from inkdata.types import Corpus, InkLine
from inkeval.config import EvalConfig
from inkeval.metrics import ar_cr
from inkvae.config import VaeModelConfig
from inkvae.layers import latent_lengths, padding_mask
from inkvae.losses import ctc_greedy_decode, ctc_loss, style_ce
from inkvae.model import OcrHead, StyleHead, TrajectoryEncoder
from inkvae.trainer import LineBatcher, build_optimizer, build_scheduler
from utils.exceptions import CheckpointError, DegenerateGeometryError
from utils.seeding import step_seed

logger = logging.getLogger(__name__)

OCR_KIND = "eval_ocr"
STYLE_KIND = "eval_style"


class Recognizer(Protocol):
    def recognize(self, lines: Sequence[InkLine]) -> List[str]:
        ...


class StyleClassifier(Protocol):
    def classify(self, lines: Sequence[InkLine]) -> List[int]:
        ...


@dataclass
class GateResult:
    name: str
    value: float
    floor: float

    @property
    def passed(self) -> bool:
        return self.value >= self.floor


def canonical(line: InkLine) -> InkLine:
    """Translate/scale a line (or line fragment) to the normalized frame the eval models train on"""
    try:
        return normalize_line(line)
    except DegenerateGeometryError:
        return line


class _EncoderModel(nn.Module):
    def __init__(self, backbone: VaeModelConfig):
        super().__init__()
        self.backbone = backbone
        self.encoder = TrajectoryEncoder(backbone)

    def features(self, lines: Sequence[InkLine], device: str) -> Tuple[torch.Tensor, torch.Tensor]:
        lines = [canonical(line) for line in lines]
        padded = pad_batch(lines, batch_target_len(lines))
        mu = self.encoder(padded.points.to(device)).mu
        return mu, latent_lengths(padded.valid_lengths.to(device))


class EvalRecognizer(_EncoderModel):
    def __init__(self, backbone: VaeModelConfig, vocab: Sequence[str]):
        super().__init__(backbone)
        self.vocab = list(vocab)
        self.head = OcrHead(backbone.latent_dim, len(self.vocab), hidden=backbone.ocr_hidden,
                            layers=backbone.ocr_layers, heads=backbone.ocr_heads, dropout=backbone.dropout)

    def logits(self, lines: Sequence[InkLine], device: str = "cpu") -> Tuple[torch.Tensor, torch.Tensor]:
        mu, valid = self.features(lines, device)
        return self.head(mu, padding_mask(valid, mu.shape[1])), valid

    @torch.no_grad()
    def recognize(self, lines: Sequence[InkLine], batch_size: int = 64) -> List[str]:
        self.eval()
        device = next(self.parameters()).device
        out: List[str] = []
        for start in range(0, len(lines), batch_size):
            logits, valid = self.logits(lines[start:start + batch_size], device)
            out.extend("".join(self.vocab[i] for i in seq) for seq in ctc_greedy_decode(logits, valid))
        return out


class EvalStyleClassifier(_EncoderModel):
    def __init__(self, backbone: VaeModelConfig, writers: Sequence[int]):
        super().__init__(backbone)
        self.writers = [int(w) for w in writers]
        self.head = StyleHead(backbone.latent_dim, len(self.writers), hidden=backbone.style_hidden)

    def logits(self, lines: Sequence[InkLine], device: str = "cpu") -> torch.Tensor:
        mu, valid = self.features(lines, device)
        return self.head(mu, valid)

    @torch.no_grad()
    def classify(self, lines: Sequence[InkLine], batch_size: int = 64) -> List[int]:
        self.eval()
        device = next(self.parameters()).device
        out: List[int] = []
        for start in range(0, len(lines), batch_size):
            pred = self.logits(lines[start:start + batch_size], device).argmax(dim=-1).tolist()
            out.extend(self.writers[i] for i in pred)
        return out


def _fit(model: nn.Module, corpus: Corpus, steps: int, config: EvalConfig, seed: int,
         loss_fn: Callable[[List[InkLine]], torch.Tensor], name: str) -> None:
    batcher = LineBatcher(corpus.lines, corpus.vocab, corpus.writers)
    optimizer = build_optimizer(model, config.lr, config.betas, config.weight_decay)
    scheduler = build_scheduler(optimizer, steps, 0.05)
    model.train()
    for step in range(1, steps + 1):
        torch.manual_seed(step_seed(seed, step, stream=2))
        lines = [batcher.lines[i] for i in batcher.indices(seed, step, config.batch_size)]
        loss = loss_fn(lines)
        optimizer.zero_grad(set_to_none=True)
        if not torch.isfinite(loss):
            logger.warning(f"{name}: non-finite loss at step {step}, skipped")
            scheduler.step()
            continue
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
        optimizer.step()
        scheduler.step()
        if step % max(1, steps // 10) == 0:
            logger.debug(f"{name} step {step}/{steps} loss {float(loss):.4f}")
    model.eval()


def train_eval_ocr(train: Corpus, test: Corpus, config: EvalConfig, seed: int,
                   device: str = "cpu") -> Tuple[EvalRecognizer, GateResult]:
    """Fresh encoder + CTC head on the training split; gate is AR on the held-out split"""
    torch.manual_seed(seed)
    model = EvalRecognizer(config.backbone, train.vocab).to(device)
    index = {ch: i for i, ch in enumerate(train.vocab)}

    def loss_fn(lines: List[InkLine]) -> torch.Tensor:
        logits, valid = model.logits(lines, device)
        return ctc_loss(logits, [[index[ch] for ch in line.text] for line in lines], valid, drop_infeasible=True)

    _fit(model, train, config.ocr_steps, config, seed, loss_fn, "eval-ocr")
    ar, cr = ar_cr(zip([line.text for line in test.lines], model.recognize(test.lines)))
    gate = GateResult("eval_ocr_ar", ar, config.gate_ar)
    _report_gate(gate, extra=f"CR {cr:.2f}%")
    return model, gate


def train_eval_style(train: Corpus, test: Corpus, config: EvalConfig, seed: int,
                     device: str = "cpu") -> Tuple[EvalStyleClassifier, GateResult]:
    torch.manual_seed(seed + 1)
    model = EvalStyleClassifier(config.backbone, train.writers).to(device)
    writer_index = {w: i for i, w in enumerate(model.writers)}

    def loss_fn(lines: List[InkLine]) -> torch.Tensor:
        targets = torch.tensor([writer_index[line.writer_id] for line in lines], device=device)
        return style_ce(model.logits(lines, device), targets)

    _fit(model, train, config.style_steps, config, seed + 1, loss_fn, "eval-style")
    pred = model.classify(test.lines)
    acc = 100.0 * sum(p == line.writer_id for p, line in zip(pred, test.lines)) / max(len(test.lines), 1)
    gate = GateResult("eval_style_acc", acc, config.gate_style)
    _report_gate(gate)
    return model, gate


def _report_gate(gate: GateResult, extra: str = "") -> None:
    suffix = f" ({extra})" if extra else ""
    if gate.passed:
        logger.info(f"{gate.name} = {gate.value:.2f}% passes floor {gate.floor:.2f}%{suffix}")
    else:
        logger.warning(f"{gate.name} = {gate.value:.2f}% is below floor {gate.floor:.2f}%; "
                       f"generator scores will be unreliable{suffix}")


def save_eval_model(model: _EncoderModel, gate: GateResult, path: Path, seed: int, config_hash: str) -> Path:
    header = {
        "kind": OCR_KIND if isinstance(model, EvalRecognizer) else STYLE_KIND,
        "step": 0,
        "seed": seed,
        "config_hash": config_hash,
        "backbone": asdict(model.backbone),
        "gate": asdict(gate),
    }
    if isinstance(model, EvalRecognizer):
        header["vocab"] = model.vocab
    else:
        header["writers"] = model.writers
    return save_checkpoint(path, header, model.state_dict())


def load_eval_model(path: Path, device: str = "cpu"):
    """Returns (model, GateResult) for either eval model kind"""
    ckpt = load_checkpoint(path)
    if ckpt.kind not in (OCR_KIND, STYLE_KIND):
        raise CheckpointError(path, f"kind {ckpt.kind!r} is not an evaluation model")
    backbone = VaeModelConfig(**ckpt.header["backbone"])
    if ckpt.kind == OCR_KIND:
        model = EvalRecognizer(backbone, ckpt.header["vocab"])
    else:
        model = EvalStyleClassifier(backbone, ckpt.header["writers"])
    model.load_state_dict(ckpt.state)
    return model.to(device).eval(), GateResult(**ckpt.header["gate"])
