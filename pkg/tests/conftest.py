import numpy as np
import pytest

from inkdata.preprocess import preprocess_corpus
from inkdata.synth import synth_corpus
from inkdata.types import InkLine, PenState, PreprocessConfig
from inkdit.config import DiTConfig, DitTrainConfig
from inkvae.config import VaeModelConfig, VaeTrainConfig
from inkvae.trainer import train_vae


def make_line(text="ab", writer_id=0, points_per_char=4, strokes_per_char=1, x0=0.0):
    """Zig-zag glyphs laid left to right; every character closes with EndOfChar"""
    xy, pen = [], []
    for c in range(len(text)):
        for s in range(strokes_per_char):
            for k in range(points_per_char):
                xy.append([x0 + c + 0.8 * k / max(points_per_char - 1, 1), (k % 2) * 1.0 + 0.1 * s])
                pen.append(PenState.PEN_DOWN)
            pen[-1] = PenState.END_OF_CHAR if s == strokes_per_char - 1 else PenState.PEN_UP
    return InkLine(text=text, writer_id=writer_id, xy=np.array(xy, dtype=np.float64).reshape(-1, 2),
                   pen=np.array(pen, dtype=np.int8))


def small_vae_config():
    return VaeModelConfig(latent_dim=16, stem_width=8, stage_widths=(8, 16, 16), gmm_components=2,
                          decoder_layers=1, decoder_hidden=16, decoder_heads=2, ocr_hidden=16, ocr_layers=1,
                          ocr_heads=2, style_hidden=8, dropout=0.0)


def small_dit_config(**overrides):
    values = dict(layers=2, joint_dim=32, latent_dim=16, content_dim=16, heads=2, timestep_embed_dim=16,
                  content_blocks=1)
    values.update(overrides)
    return DiTConfig(**values)


def small_dit_train_config(**overrides):
    values = dict(batch_size=4, steps=3, log_every=1, ckpt_every=2, ddim_steps=2, unroll_steps=1,
                  finetune_steps=2, max_latent_len=64, model=small_dit_config())
    values.update(overrides)
    return DitTrainConfig(**values)


@pytest.fixture
def line_factory():
    return make_line


@pytest.fixture(scope="session")
def tiny_corpus():
    corpus = synth_corpus(n_writers=2, glyph_set_size=4, lines_per_writer=6, line_len_range=(2, 4), seed=0)
    return preprocess_corpus(corpus, PreprocessConfig())


@pytest.fixture
def tiny_vae_config():
    return small_vae_config()


@pytest.fixture
def tiny_dit_config():
    return small_dit_config()


@pytest.fixture(scope="session")
def vae_checkpoint(tmp_path_factory, tiny_corpus):
    config = VaeTrainConfig(batch_size=4, steps=2, log_every=1, ckpt_every=10, model=small_vae_config())
    return train_vae(tiny_corpus, config, tmp_path_factory.mktemp("vae"), seed=0)


@pytest.fixture(scope="session")
def dit_train_config():
    return small_dit_train_config
