"""glyphsim: visual-similarity analysis of glyph corpora.

Pipeline: preprocess glyph images, train an ensemble of hybrid
CNN + windowed-transformer encoders with a regularized contrastive loss,
then quantify cross-script similarity with cosine statistics, hypothesis
tests, effect sizes, clustering, projections, and attention maps.
"""

from .augment import AugmentationPolicy, augment, expand, positive_pair
from .corpus import (CorpusError, GlyphImage, ManifestEntry, ScriptCorpus,
                     build_composite, denoise_manuscript, load_corpus, split,
                     square_pad, standardize)
from .ensemble import EmbeddingSet, Ensemble, consensus_embed, member_embed
from .model import EncoderConfig, HybridEncoder, build_encoder
from .trainer import (TrainConfig, TrainRecord, contrastive_loss, lr_at,
                      train_ensemble, train_model)

__version__ = "0.1.0"

__all__ = [
    "AugmentationPolicy", "augment", "expand", "positive_pair",
    "CorpusError", "GlyphImage", "ManifestEntry", "ScriptCorpus",
    "build_composite", "denoise_manuscript", "load_corpus", "split",
    "square_pad", "standardize",
    "EmbeddingSet", "Ensemble", "consensus_embed", "member_embed",
    "EncoderConfig", "HybridEncoder", "build_encoder",
    "TrainConfig", "TrainRecord", "contrastive_loss", "lr_at",
    "train_ensemble", "train_model",
    "__version__",
]
