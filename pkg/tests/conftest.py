import numpy as np
import pytest

from glyphsim.corpus import GlyphImage, ScriptCorpus
from glyphsim.model import EncoderConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def micro_encoder_config() -> EncoderConfig:
    """Smallest config that still exercises every architectural piece.

    56px input keeps unit tests fast; shapes follow the same bookkeeping as
    the real presets (two stages, shifted windows at stage 1, merge to a
    whole-map window at stage 2).
    """
    return EncoderConfig(
        cnn_widths=(4, 8), cnn_blocks=(1, 1),
        swin_dims=(8, 16), swin_depths=(2, 2), swin_heads=(2, 2),
        window_size=7, patch_size=4,
        fusion_hidden=16, embed_dim=8,
        input_size=56,
    )


@pytest.fixture
def micro_config():
    return micro_encoder_config()


def make_corpus(n: int, side: int = 56, name: str = "testscript",
                role: str = "target", seed: int = 0,
                with_splits: bool = False) -> ScriptCorpus:
    """Corpus of random normalized-looking glyph rasters."""
    gen = np.random.default_rng(seed)
    glyphs = []
    for i in range(n):
        pixels = gen.normal(0.0, 1.0, (side, side, 3))
        glyphs.append(GlyphImage(pixels=pixels, script=name,
                                 glyph_id=f"g{i:03d}", normalized=True))
    splits = None
    if with_splits:
        ids = [g.glyph_id for g in glyphs]
        n_train = max(2, int(round(0.7 * n)))
        n_val = max(2, (n - n_train) // 2)
        splits = {"train": ids[:n_train],
                  "val": ids[n_train:n_train + n_val],
                  "test": ids[n_train + n_val:]}
    return ScriptCorpus(name=name, role=role, glyphs=glyphs, splits=splits)
