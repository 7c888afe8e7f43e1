import json

import numpy as np
import pytest
import torch

from inkdata.augment import augment_reference, extract_char_bank, freq_augment, inverse_frequency_probs
from inkdata.corpus_io import parse_corpus, serialize_corpus, split_corpus, write_corpus
from inkdata.preprocess import (batch_target_len, normalize_line, pad_batch, preprocess_corpus, rdp_indices,
                                rdp_simplify, simplify_line, unpad)
from inkdata.svg import write_svg
from inkdata.synth import GlyphSynthesizer, synth_corpus
from inkdata.types import Corpus, InkLine, PenPoint, PenState, PreprocessConfig, SynthStyleParams
from utils.exceptions import (AugmentationError, CorpusParseError, DegenerateGeometryError, SequenceLengthError,
                              ValidationError)


def _write_records(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


# --- types -----------------------------------------------------------------

def test_inkline_counts_end_of_char(line_factory):
    line = line_factory("abc", points_per_char=3)
    assert line.n_points == 9
    assert line.char_boundaries.tolist() == [2, 5, 8]
    assert line.char_spans() == [(0, 3), (3, 6), (6, 9)]


def test_inkline_rejects_marker_mismatch():
    with pytest.raises(ValidationError):
        InkLine(text="ab", writer_id=0, xy=np.zeros((3, 2)), pen=[0, 0, 2])


def test_inkline_rejects_trailing_points_after_last_char():
    with pytest.raises(ValidationError):
        InkLine(text="a", writer_id=0, xy=np.zeros((3, 2)), pen=[0, 2, 0])


def test_char_slice_keeps_trajectory(line_factory):
    line = line_factory("abcd", points_per_char=2, strokes_per_char=2)
    part = line.char_slice(1, 3)
    assert part.text == "bc"
    assert part.n_points == 8
    np.testing.assert_array_equal(part.xy, line.xy[4:12])
    assert line.char_slice(2, 2).text == ""


def test_corpus_char_freq_sums_to_occurrences(line_factory):
    corpus = Corpus.from_lines([line_factory("aab"), line_factory("ba", writer_id=3)])
    assert corpus.vocab == ["a", "b"]
    assert corpus.char_freq == {"a": 3, "b": 2}
    assert sum(corpus.char_freq.values()) == 5
    assert corpus.writer_count == 2


def test_corpus_rejects_text_outside_vocab(line_factory):
    with pytest.raises(ValidationError):
        Corpus.from_lines([line_factory("ab")], vocab=["a"])


def test_synth_style_params_bounds():
    with pytest.raises(ValidationError):
        SynthStyleParams(slant=0.0, scale=0.0, char_spacing=0.2, baseline_drift_amp=0.0, jitter_sigma=0.0,
                         stroke_speed=4.0, rng_seed=1)
    with pytest.raises(ValidationError):
        SynthStyleParams(slant=0.0, scale=1.0, char_spacing=0.2, baseline_drift_amp=0.0, jitter_sigma=0.0,
                         stroke_speed=1.5, rng_seed=1)


def test_preprocess_config_rejects_negative_epsilon():
    with pytest.raises(ValidationError):
        PreprocessConfig(rdp_epsilon=-0.1)


# --- corpus file -----------------------------------------------------------

def test_parse_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    corpus = parse_corpus(path)
    assert len(corpus) == 0
    assert corpus.vocab == []


def test_parse_single_record(tmp_path):
    path = _write_records(tmp_path / "one.jsonl", [
        {"text": "ab", "writer_id": 4, "points": [[0, 0, 0], [1, 0, 2], [2, 0, 0], [3, 1, 2]]},
    ])
    corpus = parse_corpus(path)
    line = corpus.lines[0]
    assert len(line.text) == 2
    assert line.char_boundaries.tolist() == [1, 3]
    assert corpus.writer_count == 1


def test_parse_rejects_missing_end_of_char(tmp_path):
    path = _write_records(tmp_path / "bad.jsonl", [
        {"text": "ab", "writer_id": 0, "points": [[0, 0, 0], [1, 0, 0], [2, 0, 2]]},
    ])
    with pytest.raises(ValidationError):
        parse_corpus(path)


def test_parse_rejects_pen_index_out_of_range(tmp_path):
    path = _write_records(tmp_path / "pen.jsonl", [
        {"text": "a", "writer_id": 0, "points": [[0, 0, 3], [1, 0, 2]]},
    ])
    with pytest.raises(ValidationError):
        parse_corpus(path)


def test_parse_reports_line_number(tmp_path):
    path = tmp_path / "broken.jsonl"
    good = json.dumps({"text": "a", "writer_id": 0, "points": [[0, 0, 0], [1, 1, 2]]})
    path.write_text(good + "\n{not json\n", encoding="utf-8")
    with pytest.raises(CorpusParseError) as excinfo:
        parse_corpus(path)
    assert excinfo.value.line_number == 2


def test_parse_missing_file(tmp_path):
    with pytest.raises(CorpusParseError):
        parse_corpus(tmp_path / "nope.jsonl")


def test_corpus_file_round_trip(tmp_path, line_factory):
    corpus = Corpus.from_lines([line_factory("ab", x0=0.123456789), line_factory("ba", writer_id=2, x0=1e-7)])
    path = write_corpus(corpus, tmp_path / "c.jsonl")
    parsed = parse_corpus(path)
    assert parsed == corpus
    assert serialize_corpus(parsed) == path.read_text(encoding="utf-8")


def test_split_is_stratified_and_keeps_vocab(tiny_corpus):
    train, test = split_corpus(tiny_corpus, 0.25, seed=3)
    assert len(train) + len(test) == len(tiny_corpus)
    assert train.vocab == test.vocab == tiny_corpus.vocab
    assert set(test.writers) == set(tiny_corpus.writers)
    again_train, again_test = split_corpus(tiny_corpus, 0.25, seed=3)
    assert again_test.lines == test.lines


# --- normalization and simplification --------------------------------------

def _single_char(xy):
    pen = [PenState.PEN_DOWN] * (len(xy) - 1) + [PenState.END_OF_CHAR]
    return InkLine(text="a", writer_id=0, xy=np.array(xy, dtype=np.float64), pen=pen)


def test_normalize_scales_height():
    out = normalize_line(_single_char([(0, 0), (0, 2)]))
    np.testing.assert_allclose(out.xy, [[0, 0], [0, 1]])


def test_normalize_translates_then_scales():
    line = _single_char([(3, 5), (3, 7), (5, 7)])
    out = normalize_line(line)
    np.testing.assert_allclose(out.xy, [[0, 0], [0, 1], [1, 1]])
    np.testing.assert_array_equal(out.pen, line.pen)


def test_normalize_is_idempotent(tiny_corpus):
    line = tiny_corpus.lines[0]
    np.testing.assert_allclose(normalize_line(line).xy, line.xy, atol=1e-12)


@pytest.mark.parametrize("scale,shift", [(0.5, (3.0, -2.0)), (7.0, (0.0, 0.0)), (1e-3, (-40.0, 11.0))])
def test_normalize_is_translation_and_scale_invariant(line_factory, scale, shift):
    line = line_factory("abc")
    moved = line.with_points(line.xy * scale + np.array(shift))
    np.testing.assert_allclose(normalize_line(moved).xy, normalize_line(line).xy, atol=1e-9)


def test_normalize_rejects_coincident_points():
    with pytest.raises(DegenerateGeometryError):
        normalize_line(_single_char([(1, 1), (1, 1), (1, 1)]))


def _stroke(*pts):
    return [PenPoint(x, y) for x, y in pts]


def test_rdp_drops_collinear_points():
    out = rdp_simplify(_stroke((0, 0), (1, 0), (2, 0)), 0.4)
    assert [(p.x, p.y) for p in out] == [(0, 0), (2, 0)]


def test_rdp_keeps_point_above_tolerance():
    assert len(rdp_simplify(_stroke((0, 0), (1, 0.5), (2, 0)), 0.4)) == 3


def test_rdp_drops_point_within_tolerance():
    out = rdp_simplify(_stroke((0, 0), (1, 0.3), (2, 0)), 0.4)
    assert [(p.x, p.y) for p in out] == [(0, 0), (2, 0)]


def test_rdp_short_strokes_unchanged():
    stroke = _stroke((0, 0), (5, 5))
    assert rdp_simplify(stroke, 0.4) == stroke
    assert rdp_simplify([], 0.4) == []


@pytest.mark.parametrize("seed", range(10))
def test_rdp_is_idempotent(seed):
    xy = np.cumsum(np.random.default_rng(seed).normal(size=(40, 2)), axis=0)
    once = xy[rdp_indices(xy, 0.4)]
    twice = once[rdp_indices(once, 0.4)]
    np.testing.assert_array_equal(once, twice)


def test_simplify_line_keeps_stroke_markers(line_factory):
    line = line_factory("abc", points_per_char=6, strokes_per_char=2)
    out = simplify_line(line, 0.4)
    assert out.text == line.text
    assert (out.pen == PenState.PEN_UP).sum() == (line.pen == PenState.PEN_UP).sum()
    assert out.char_boundaries.size == 3


def test_preprocess_drops_over_long_lines(line_factory):
    corpus = Corpus.from_lines([line_factory("ab", points_per_char=2), line_factory("abcdef", points_per_char=4)])
    out = preprocess_corpus(corpus, PreprocessConfig(rdp_epsilon=0.0, max_line_points=8))
    assert [line.text for line in out.lines] == ["ab"]
    assert out.vocab == corpus.vocab


# --- padding ---------------------------------------------------------------

def test_pad_fills_with_end_of_char(line_factory):
    line = line_factory("a", points_per_char=3)
    batch = pad_batch([line], 5)
    assert batch.points.shape == (1, 5, 5)
    assert batch.valid_lengths.tolist() == [3]
    expected = torch.tensor([0.0, 0.0, 0.0, 0.0, 1.0])
    assert torch.equal(batch.points[0, 3], expected)
    assert torch.equal(batch.points[0, 4], expected)
    assert torch.equal(batch.pen_targets, batch.points[:, :, 2:])


def test_pad_to_batch_maximum(line_factory):
    lines = [line_factory("ab", points_per_char=4), line_factory("a", points_per_char=5)]
    batch = pad_batch(lines, max(line.n_points for line in lines))
    assert batch.points.shape[1] == 8
    assert batch.valid_lengths.tolist() == [8, 5]


def test_pad_empty_batch():
    batch = pad_batch([], 8)
    assert batch.points.numel() == 0
    assert batch.valid_lengths.numel() == 0


def test_pad_rejects_long_line(line_factory):
    with pytest.raises(SequenceLengthError):
        pad_batch([line_factory("abc")], 8)


def test_pad_then_truncate_is_identity(tiny_corpus):
    lines = tiny_corpus.lines[:4]
    batch = pad_batch(lines, batch_target_len(lines), dtype=torch.float64)
    for i, line in enumerate(lines):
        xy, pen = unpad(batch, i)
        np.testing.assert_array_equal(xy, line.xy)
        np.testing.assert_array_equal(pen, line.pen)


def test_batch_target_len_rounds_to_latent_stride(line_factory):
    lines = [line_factory("a", points_per_char=3), line_factory("ab", points_per_char=5)]
    assert batch_target_len(lines) == 16
    assert batch_target_len(lines, max_line_points=8) == 8
    assert batch_target_len([]) == 8


# --- synthesis ---------------------------------------------------------------

def test_synth_is_deterministic():
    first = synth_corpus(n_writers=3, glyph_set_size=5, lines_per_writer=4, line_len_range=(2, 5), seed=11)
    second = synth_corpus(n_writers=3, glyph_set_size=5, lines_per_writer=4, line_len_range=(2, 5), seed=11)
    assert serialize_corpus(first) == serialize_corpus(second)
    other = synth_corpus(n_writers=3, glyph_set_size=5, lines_per_writer=4, line_len_range=(2, 5), seed=12)
    assert serialize_corpus(other) != serialize_corpus(first)


def test_synth_counts():
    corpus = synth_corpus(n_writers=8, glyph_set_size=20, lines_per_writer=250, line_len_range=(5, 15), seed=0)
    assert len(corpus) == 2000
    assert len(corpus.vocab) == 20
    assert corpus.writer_count == 8
    assert all(5 <= len(line.text) <= 15 for line in corpus.lines)
    assert all(line.char_boundaries.size == len(line.text) for line in corpus.lines)


def test_synth_writers_have_distinct_styles():
    synth = GlyphSynthesizer(glyph_set_size=4, n_writers=2, seed=5)
    a, b = synth.styles
    assert a.slant != b.slant
    assert a.scale != b.scale


def test_synth_frequencies_are_long_tailed():
    synth = GlyphSynthesizer(glyph_set_size=10, n_writers=2, seed=1)
    probs = np.sort(synth.glyph_probs)[::-1]
    assert probs.sum() == pytest.approx(1.0)
    assert probs[0] / probs[-1] == pytest.approx(10 ** 1.1)


@pytest.mark.parametrize("glyphs,writers", [(1, 4), (4, 1)])
def test_synth_rejects_tiny_sets(glyphs, writers):
    with pytest.raises(ValidationError):
        synth_corpus(n_writers=writers, glyph_set_size=glyphs, lines_per_writer=1, line_len_range=(1, 2), seed=0)


# --- augmentation ------------------------------------------------------------

def test_inverse_frequency_uniform():
    np.testing.assert_allclose(inverse_frequency_probs({"a": 4, "b": 4, "c": 4}, ["a", "b", "c"]), [1 / 3] * 3)


def test_inverse_frequency_arithmetic():
    np.testing.assert_allclose(inverse_frequency_probs({"a": 1, "b": 3}, ["a", "b"]), [0.75, 0.25])


def test_freq_augment_zero_is_identity(tiny_corpus):
    assert freq_augment(tiny_corpus, {}, 0, seed=0) is tiny_corpus


def test_freq_augment_appends_valid_lines():
    synth = GlyphSynthesizer(glyph_set_size=4, n_writers=2, seed=2)
    corpus = synth_corpus(n_writers=2, glyph_set_size=4, lines_per_writer=3, line_len_range=(2, 4), seed=2,
                          synthesizer=synth)
    out = freq_augment(corpus, synth.char_bank(per_char=2, seed=2), n_new=5, seed=9)
    assert len(out) == len(corpus) + 5
    assert out.lines[:len(corpus)] == corpus.lines
    for line in out.lines[len(corpus):]:
        assert line.char_boundaries.size == len(line.text)
        assert line.writer_id in corpus.writers


def test_freq_augment_uses_template_layout():
    synth = GlyphSynthesizer(glyph_set_size=3, n_writers=2, seed=4)
    corpus = synth_corpus(n_writers=2, glyph_set_size=3, lines_per_writer=1, line_len_range=(3, 3), seed=4,
                          synthesizer=synth)
    out = freq_augment(corpus, synth.char_bank(per_char=1, seed=4), n_new=4, seed=1)
    templates = {line.writer_id: line for line in corpus.lines}
    for line in out.lines[len(corpus):]:
        template = templates[line.writer_id]
        for (s, e), (ts, te) in zip(line.char_spans(), template.char_spans()):
            np.testing.assert_allclose(line.xy[s:e].min(axis=0), template.xy[ts:te].min(axis=0), atol=1e-9)
            np.testing.assert_allclose(line.xy[s:e].max(axis=0), template.xy[ts:te].max(axis=0), atol=1e-9)


def test_freq_augment_resamples_missing_writer_entries(line_factory):
    corpus = Corpus.from_lines([line_factory("ab", writer_id=0), line_factory("ab", writer_id=1)])
    bank = {"a": {0: [line_factory("a")], 1: [line_factory("a", writer_id=1)]},
            "b": {0: [line_factory("b")]}}
    out = freq_augment(corpus, bank, n_new=6, seed=0)
    for line in out.lines[2:]:
        if line.writer_id == 1:
            assert set(line.text) == {"a"}


def test_freq_augment_fails_when_no_writer_has_char(line_factory):
    corpus = Corpus.from_lines([line_factory("ab")])
    with pytest.raises(AugmentationError):
        freq_augment(corpus, {"a": {0: [line_factory("a")]}}, n_new=1, seed=0)


def test_extract_char_bank(line_factory):
    corpus = Corpus.from_lines([line_factory("aba"), line_factory("b", writer_id=1)])
    bank = extract_char_bank(corpus)
    assert len(bank["a"][0]) == 2
    assert len(bank["b"][0]) == 1 and len(bank["b"][1]) == 1
    assert all(sample.text == "a" for sample in bank["a"][0])


def test_augment_reference_keeps_pen_states(line_factory):
    line = line_factory("abc")
    jittered = augment_reference(line, seed=3)
    np.testing.assert_array_equal(jittered.pen, line.pen)
    assert not np.array_equal(jittered.xy, line.xy)
    assert augment_reference(line, seed=3) == jittered


def test_write_svg_one_polyline_per_stroke(tmp_path, line_factory):
    lines = [line_factory("ab", strokes_per_char=2), line_factory("a")]
    path = write_svg(lines, tmp_path / "out.svg")
    body = path.read_text(encoding="utf-8")
    assert body.startswith("<svg")
    assert body.count("<polyline") == 5


def test_freq_augment_skips_writers_without_bank_entries(line_factory):
    corpus = Corpus.from_lines([line_factory("ab", writer_id=w) for w in range(3)])
    bank = {"a": {0: [line_factory("a")]}, "b": {1: [line_factory("b", writer_id=1)]}}
    out = freq_augment(corpus, bank, n_new=8, seed=0)
    new = out.lines[3:]
    assert len(new) == 8
    assert {line.writer_id for line in new} <= {0, 1}
    assert all(set(line.text) == {"a"} for line in new if line.writer_id == 0)
    assert all(set(line.text) == {"b"} for line in new if line.writer_id == 1)
