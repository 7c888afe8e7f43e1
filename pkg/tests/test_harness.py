import json

import numpy as np
import pytest
import torch

from core.checkpoint import save_checkpoint
from inkdata.types import Corpus
from inkeval.config import EvalConfig
from inkeval.eval_models import (GateResult, load_eval_model, save_eval_model,
                                 train_eval_ocr, train_eval_style)
from inkeval.harness import (check_gates, compare_latents, evaluate, export_latents, load_latents,
                             silhouette_by_label, split_reference, throughput)
from inkvae.trainer import load_vae
from utils.exceptions import CheckpointError, ConfigurationError, GateFailureError, ValidationError
from utils.seeding import step_seed


class TextReader:
    """Reads the label attached to each line instead of its ink"""

    def __init__(self, blank=False):
        self.blank = blank

    def recognize(self, lines):
        return ["" if self.blank else line.text for line in lines]


class WriterReader:
    def classify(self, lines):
        return [line.writer_id for line in lines]


def _test_corpus(line_factory):
    lines = [line_factory("abcd", writer_id=0), line_factory("bca", writer_id=1, x0=2.0),
             line_factory("x", writer_id=1), line_factory("cab", writer_id=0, points_per_char=3)]
    return Corpus.from_lines(lines)


def _oracle(corpus):
    """Returns the ground-truth continuation of whichever line owns the reference"""
    by_prefix = {}
    for line in corpus.lines:
        if len(line.text) >= 2:
            ref, gt = split_reference(line)
            by_prefix[(ref.text, gt.text)] = gt

    def generate(text_ref, text_gen, ref, seed):
        return by_prefix[(text_ref, text_gen)]

    return generate


def test_split_reference(line_factory):
    ref, gt = split_reference(line_factory("abcd"))
    assert (ref.text, gt.text) == ("a", "bcd")
    ref, gt = split_reference(line_factory("ab"), prefix_frac=0.9)
    assert (ref.text, gt.text) == ("a", "b")
    ref, gt = split_reference(line_factory("abcdefghij"), prefix_frac=0.3)
    assert len(ref.text) == 3
    with pytest.raises(ValidationError):
        split_reference(line_factory("a"))


def test_oracle_generator_scores_perfectly(line_factory, tmp_path):
    corpus = _test_corpus(line_factory)
    report = evaluate(_oracle(corpus), corpus, TextReader(), WriterReader(), seed=0,
                      svg_dir=tmp_path, svg_pairs=2)
    assert report.AR == report.CR == 100.0
    assert report.style_acc == 100.0
    assert report.norm_dtw == 0.0
    assert report.layout_error == 0.0
    assert report.n_lines == 3
    assert sorted(p.name for p in tmp_path.glob("*.svg")) == ["pair_0000.svg", "pair_0001.svg"]


def test_unreadable_output_scores_zero(line_factory):
    corpus = _test_corpus(line_factory)
    report = evaluate(_oracle(corpus), corpus, TextReader(blank=True), WriterReader(), seed=0)
    assert report.AR == report.CR == 0.0


def test_seeds_follow_line_order(line_factory):
    corpus = _test_corpus(line_factory)
    oracle = _oracle(corpus)
    seen = []

    def generate(text_ref, text_gen, ref, seed):
        seen.append(seed)
        return oracle(text_ref, text_gen, ref, seed)

    first = evaluate(generate, corpus, TextReader(), WriterReader(), seed=9, max_lines=2)
    assert seen == [step_seed(9, 0, stream=3), step_seed(9, 1, stream=3)]
    second = evaluate(generate, corpus, TextReader(), WriterReader(), seed=9, max_lines=2)
    assert first == second


def test_failed_gate_stops_before_generation(line_factory):
    calls = []

    def generate(*args):
        calls.append(args)

    gates = [GateResult("eval_ocr_ar", 99.0, 97.0), GateResult("eval_style_acc", 90.0, 97.0)]
    with pytest.raises(GateFailureError) as info:
        evaluate(generate, _test_corpus(line_factory), TextReader(), WriterReader(), seed=0, gates=gates)
    assert info.value.exit_code == 3
    assert info.value.gate == "eval_style_acc"
    assert calls == []
    check_gates(gates[:1])


def test_evaluate_needs_splittable_lines(line_factory):
    corpus = Corpus.from_lines([line_factory("a"), line_factory("b", writer_id=1)])
    with pytest.raises(ValidationError):
        evaluate(lambda *a: None, corpus, TextReader(), WriterReader(), seed=0)


def test_throughput_with_fake_clock():
    clock = {"now": 0.0}
    calls = []

    def generate_chars(k):
        calls.append(k)
        clock["now"] += k / 100.0

    rate = throughput(generate_chars, n_chars=2000, chunk=20, timer=lambda: clock["now"])
    assert rate == pytest.approx(100.0)
    assert sum(calls) == 2000 + 20
    with pytest.raises(ValidationError):
        throughput(generate_chars, n_chars=0)


def test_silhouette_on_separated_clusters():
    rng = np.random.default_rng(0)
    vectors = np.concatenate([rng.normal(0, 0.01, (10, 3)), rng.normal(5, 0.01, (10, 3))])
    labels = [0] * 10 + [1] * 10
    assert silhouette_by_label(labels, vectors) > 0.99
    with pytest.raises(ValidationError):
        silhouette_by_label([0] * 20, vectors)
    with pytest.raises(ValidationError):
        silhouette_by_label(list(range(20)), vectors)


def test_export_latents_counts(tmp_path, tiny_corpus, vae_checkpoint):
    model, _ = load_vae(vae_checkpoint)
    line_path, char_path = tmp_path / "lines.jsonl", tmp_path / "chars.jsonl"
    assert export_latents(tiny_corpus, model, line_path) == len(tiny_corpus.lines)
    n_chars = sum(len(line.text) for line in tiny_corpus.lines)
    assert export_latents(tiny_corpus, model, char_path, granularity="char") == n_chars

    labels, vectors = load_latents(line_path)
    assert labels == [line.writer_id for line in tiny_corpus.lines]
    assert vectors.shape == (len(tiny_corpus.lines), 16)
    first = json.loads(char_path.read_text(encoding="utf-8").splitlines()[0])
    assert first["label"] == tiny_corpus.lines[0].text[0]
    assert (first["line"], first["char"]) == (0, 0)

    scores = compare_latents(line_path, line_path)
    assert scores["difference"] == 0.0
    with pytest.raises(ValidationError):
        export_latents(tiny_corpus, model, tmp_path / "x.jsonl", granularity="word")


@pytest.fixture
def eval_config(tiny_vae_config):
    return EvalConfig(ocr_steps=2, style_steps=2, batch_size=4, gate_ar=0.0, gate_style=0.0,
                      backbone=tiny_vae_config)


def test_eval_config_validation():
    with pytest.raises(ConfigurationError):
        EvalConfig(test_fraction=1.0)
    with pytest.raises(ConfigurationError):
        EvalConfig(sample_mode="beam")


def test_eval_models_are_seeded(tiny_corpus, eval_config):
    first, gate = train_eval_ocr(tiny_corpus, tiny_corpus, eval_config, seed=4)
    second, _ = train_eval_ocr(tiny_corpus, tiny_corpus, eval_config, seed=4)
    assert gate.name == "eval_ocr_ar" and gate.floor == 0.0
    for name, tensor in first.state_dict().items():
        assert torch.equal(second.state_dict()[name], tensor), name
    assert len(first.recognize(tiny_corpus.lines[:3])) == 3


def test_eval_model_checkpoints(tmp_path, tiny_corpus, eval_config):
    ocr, ocr_gate = train_eval_ocr(tiny_corpus, tiny_corpus, eval_config, seed=1)
    style, style_gate = train_eval_style(tiny_corpus, tiny_corpus, eval_config, seed=1)
    assert set(style.classify(tiny_corpus.lines)) <= set(tiny_corpus.writers)

    save_eval_model(ocr, ocr_gate, tmp_path / "ocr.pt", seed=1, config_hash="h")
    save_eval_model(style, style_gate, tmp_path / "style.pt", seed=1, config_hash="h")
    loaded_ocr, loaded_gate = load_eval_model(tmp_path / "ocr.pt")
    loaded_style, _ = load_eval_model(tmp_path / "style.pt")
    assert loaded_gate == ocr_gate
    assert loaded_ocr.vocab == tiny_corpus.vocab
    assert loaded_style.writers == style.writers
    assert loaded_ocr.recognize(tiny_corpus.lines) == ocr.recognize(tiny_corpus.lines)

    other = save_checkpoint(tmp_path / "vae.pt", {"kind": "inkvae", "step": 0, "config_hash": "", "seed": 0}, {})
    with pytest.raises(CheckpointError):
        load_eval_model(other)
