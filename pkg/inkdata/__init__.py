"""
Handwriting data model, corpus format, synthesis and preprocessing
"""

from .types import Corpus, InkLine, PenPoint, PenState, PreprocessConfig, SynthStyleParams
from .corpus_io import parse_corpus, serialize_corpus, split_corpus, write_corpus
from .preprocess import (
    PaddedBatch,
    batch_target_len,
    normalize_line,
    pad_batch,
    preprocess_corpus,
    preprocess_line,
    rdp_simplify,
)
from .synth import GlyphSynthesizer, synth_corpus
from .augment import augment_reference, extract_char_bank, freq_augment

__all__ = [
    'Corpus',
    'InkLine',
    'PenPoint',
    'PenState',
    'PreprocessConfig',
    'SynthStyleParams',
    'parse_corpus',
    'serialize_corpus',
    'split_corpus',
    'write_corpus',
    'PaddedBatch',
    'batch_target_len',
    'normalize_line',
    'pad_batch',
    'preprocess_corpus',
    'preprocess_line',
    'rdp_simplify',
    'GlyphSynthesizer',
    'synth_corpus',
    'augment_reference',
    'extract_char_bank',
    'freq_augment',
]
