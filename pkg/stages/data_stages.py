"""
Corpus stages: synthesis and preprocessing
"""

import logging
from typing import Any, Dict

from inkdata.augment import freq_augment
from inkdata.corpus_io import parse_corpus, split_corpus, write_corpus
from inkdata.preprocess import preprocess_corpus
from inkdata.synth import GlyphSynthesizer, synth_corpus
from stages.base_stage import BaseStage

logger = logging.getLogger(__name__)


class SynthDataStage(BaseStage):
    """Synthetic multi-writer corpus, optionally grown by frequency-aware augmentation"""

    name = "synth-data"

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        s = self.settings.synth
        synthesizer = GlyphSynthesizer(s.glyph_set_size, s.n_writers, self.seed)
        corpus = synth_corpus(s.n_writers, s.glyph_set_size, s.lines_per_writer,
                              (s.line_len_min, s.line_len_max), self.seed, synthesizer=synthesizer)
        if s.augment_lines > 0:
            bank = synthesizer.char_bank(s.char_bank_per_char, self.seed)
            corpus = freq_augment(corpus, bank, s.augment_lines, self.seed)

        path = write_corpus(corpus, self.data_path("raw_corpus"))
        self.state.register_artifact("raw_corpus", path, lines=len(corpus), writers=corpus.writer_count,
                                     vocab_size=len(corpus.vocab), seed=self.seed,
                                     augmented=max(s.augment_lines, 0))
        return {"corpus": str(path), "lines": len(corpus)}


class PreprocessStage(BaseStage):
    """RDP + normalization, then a per-writer train/test split"""

    name = "preprocess"

    def execute(self, inputs: Dict[str, Any]) -> Dict[str, Any]:
        source = inputs.get("corpus") or self.data_path("raw_corpus")
        corpus = preprocess_corpus(parse_corpus(source), self.settings.data.preprocess)
        train, test = split_corpus(corpus, self.settings.eval.test_fraction, self.seed)

        processed_path = write_corpus(corpus, self.data_path("processed_corpus"))
        train_path = write_corpus(train, self.data_path("train_corpus"))
        test_path = write_corpus(test, self.data_path("test_corpus"))
        self.state.register_artifact("processed_corpus", processed_path, lines=len(corpus), vocab=corpus.vocab,
                                     writers=corpus.writers)
        self.state.register_artifact("train_corpus", train_path, lines=len(train))
        self.state.register_artifact("test_corpus", test_path, lines=len(test))
        return {"corpus": str(processed_path), "train": len(train), "test": len(test)}
