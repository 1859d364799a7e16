"""Glyph corpus loading and preprocessing.

Images enter as arbitrary-size rasters and leave as 224x224x3 normalized
arrays ready for the encoder: square-pad -> (optional manuscript denoise)
-> resize -> grayscale -> channel replication -> per-channel normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

INPUT_SIZE = 224
NORM_MEAN = (0.485, 0.456, 0.406)
NORM_STD = (0.229, 0.224, 0.225)
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}


class CorpusError(ValueError):
    """Invalid input to a corpus operation."""


@dataclass
class GlyphImage:
    pixels: np.ndarray  # 224x224x3 after standardization
    script: str
    glyph_id: str
    provenance: str = ""
    normalized: bool = False


@dataclass
class ScriptCorpus:
    name: str
    role: str  # "target" | "comparison"
    glyphs: list[GlyphImage]
    splits: dict[str, list[str]] | None = None
    load_report: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.role not in ("target", "comparison"):
            raise CorpusError(f"unknown corpus role: {self.role!r}")
        ids = [g.glyph_id for g in self.glyphs]
        if len(set(ids)) != len(ids):
            raise CorpusError(f"duplicate glyph_ids in corpus {self.name!r}")

    def __len__(self):
        return len(self.glyphs)

    def glyph_ids(self) -> list[str]:
        return [g.glyph_id for g in self.glyphs]

    def subset(self, split: str) -> list[GlyphImage]:
        if self.splits is None:
            raise CorpusError(f"corpus {self.name!r} has no splits")
        wanted = set(self.splits[split])
        return [g for g in self.glyphs if g.glyph_id in wanted]


@dataclass
class ManifestEntry:
    name: str
    role: str
    directory: str | None = None
    denoise: bool = False
    denoise_before_pad: bool = False
    composite: list[tuple[str, float]] | None = None  # (source name, proportion)
    size: int | None = None


def square_pad(image: np.ndarray) -> np.ndarray:
    """Pad a raster to a square, content centered, fill = border-mean intensity."""
    image = np.asarray(image)
    if image.size == 0 or image.ndim < 2:
        raise CorpusError("square_pad: empty image")
    h, w = image.shape[:2]
    side = max(h, w)
    if h == w:
        return image.copy()
    fill = _border_mean(image)
    pad_shape = (side, side) + image.shape[2:]
    out = np.full(pad_shape, fill, dtype=image.dtype if np.issubdtype(image.dtype, np.floating) else np.float64)
    if not np.issubdtype(image.dtype, np.floating):
        image = image.astype(np.float64)
    top = (side - h) // 2
    left = (side - w) // 2
    out[top:top + h, left:left + w] = image
    return out


def _border_mean(image: np.ndarray) -> float:
    h, w = image.shape[:2]
    if h == 1 or w == 1:
        return float(image.mean())
    border = np.concatenate([
        image[0].ravel(), image[-1].ravel(),
        image[1:-1, 0].ravel(), image[1:-1, -1].ravel(),
    ])
    return float(border.mean())


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Collapse to a single intensity channel (luminance weights for RGB)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.shape[2] == 1:
        return image[:, :, 0]
    w = np.asarray(LUMA_WEIGHTS)
    return image[:, :, :3] @ w


def standardize(image: np.ndarray) -> np.ndarray:
    """Resize to 224x224, replicate gray to 3 channels, normalize per channel.

    Input is a square-padded raster with values in [0, 1]; output values are
    unbounded but finite, (x - mean_c) / std_c per channel.
    """
    image = np.asarray(image, dtype=np.float64)
    if not np.isfinite(image).all():
        raise CorpusError("standardize: non-finite pixel values")
    gray = to_grayscale(image)
    if gray.shape != (INPUT_SIZE, INPUT_SIZE):
        gray = cv2.resize(gray, (INPUT_SIZE, INPUT_SIZE), interpolation=cv2.INTER_AREA)
    stacked = np.repeat(gray[:, :, None], 3, axis=2)
    mean = np.asarray(NORM_MEAN)
    std = np.asarray(NORM_STD)
    return (stacked - mean) / std


def standardize_glyph(glyph: GlyphImage) -> GlyphImage:
    """Standardize a glyph once; re-normalizing normalized pixels is refused."""
    if glyph.normalized:
        raise CorpusError(f"glyph {glyph.glyph_id!r} is already normalized")
    return GlyphImage(
        pixels=standardize(glyph.pixels),
        script=glyph.script,
        glyph_id=glyph.glyph_id,
        provenance=glyph.provenance,
        normalized=True,
    )


def denoise_manuscript(
    image: np.ndarray,
    block_size: int = 11,
    offset: float = 2.0,
    nlm_strength: float = 10.0,
    nlm_patch: int = 7,
    nlm_search: int = 21,
) -> np.ndarray:
    """Clean a manuscript scan: adaptive threshold, 2x2 closing, non-local means.

    Input is a grayscale (or convertible) raster in [0, 1]; output has the same
    shape with values in [0, 1].
    """
    image = np.asarray(image, dtype=np.float64)
    if not np.isfinite(image).all():
        raise CorpusError("denoise_manuscript: non-finite pixel values")
    gray = to_grayscale(image)
    g8 = np.clip(gray * 255.0, 0, 255).astype(np.uint8)
    binary = cv2.adaptiveThreshold(
        g8, 255, cv2.ADAPTIVE_THRESH_GAUSSIAN_C, cv2.THRESH_BINARY,
        block_size, offset,
    )
    closed = cv2.morphologyEx(binary, cv2.MORPH_CLOSE, np.ones((2, 2), np.uint8))
    smoothed = cv2.fastNlMeansDenoising(closed, None, nlm_strength, nlm_patch, nlm_search)
    return smoothed.astype(np.float64) / 255.0


def load_raster(path: str | Path) -> np.ndarray:
    """Read an image file to a float array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def load_corpus(entry: ManifestEntry, root: str | Path = ".") -> ScriptCorpus:
    """Load every readable image under the entry's directory, preprocessed.

    Unreadable files are skipped with a line in the load report; an empty or
    missing directory is an error. Glyphs are ordered by filename.
    """
    if entry.directory is None:
        raise CorpusError(f"manifest entry {entry.name!r} has no directory")
    directory = Path(root) / entry.directory
    if not directory.is_dir():
        raise CorpusError(f"corpus directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise CorpusError(f"no images in corpus directory: {directory}")
    glyphs = []
    report = []
    for path in files:
        try:
            raster = load_raster(path)
        except OSError as exc:
            report.append(f"skipped {path}: {exc}")
            continue
        pixels = preprocess(raster, denoise=entry.denoise,
                            denoise_before_pad=entry.denoise_before_pad)
        glyphs.append(GlyphImage(
            pixels=pixels, script=entry.name, glyph_id=path.stem,
            provenance=str(path), normalized=True,
        ))
    if not glyphs:
        raise CorpusError(f"no readable images in corpus directory: {directory}")
    return ScriptCorpus(name=entry.name, role=entry.role, glyphs=glyphs, load_report=report)


def preprocess(raster: np.ndarray, denoise: bool = False,
               denoise_before_pad: bool = False) -> np.ndarray:
    """Full preprocessing chain for one raw raster."""
    if denoise and denoise_before_pad:
        raster = denoise_manuscript(raster)
    padded = square_pad(raster)
    if denoise and not denoise_before_pad:
        padded = denoise_manuscript(padded)
    return standardize(padded)


def largest_remainder_counts(proportions: list[float], total: int) -> list[int]:
    """Integer counts summing to `total` with quotas rounded by largest remainder."""
    quotas = [p * total for p in proportions]
    counts = [math.floor(q) for q in quotas]
    shortfall = total - sum(counts)
    remainders = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in remainders[:shortfall]:
        counts[i] += 1
    return counts


def build_composite(
    sources: list[tuple[ScriptCorpus, float]],
    size: int,
    rng: np.random.Generator,
    name: str = "composite",
    role: str = "comparison",
    policy=None,
) -> ScriptCorpus:
    """Mix sources into one corpus of `size` glyphs at the given proportions.

    A source smaller than its quota contributes all originals plus augmented
    duplicates to fill the gap.
    """
    from .augment import AugmentationPolicy, augment as augment_one

    if not sources:
        raise CorpusError("build_composite: no sources")
    total = sum(p for _, p in sources)
    if abs(total - 1.0) > 1e-9:
        raise CorpusError(f"composite proportions sum to {total}, expected 1")
    counts = largest_remainder_counts([p for _, p in sources], size)
    if policy is None:
        policy = AugmentationPolicy()
    glyphs = []
    for (corpus, proportion), quota in zip(sources, counts):
        if quota > 0 and len(corpus) == 0:
            raise CorpusError(f"source {corpus.name!r} is empty but has proportion {proportion}")
        if quota <= len(corpus):
            idx = rng.choice(len(corpus), size=quota, replace=False)
            chosen = [corpus.glyphs[i] for i in sorted(idx)]
        else:
            chosen = list(corpus.glyphs)
            for i in range(quota - len(corpus)):
                base = corpus.glyphs[i % len(corpus)]
                pixels = augment_one(base.pixels, policy, rng)
                chosen.append(GlyphImage(
                    pixels=pixels, script=base.script,
                    glyph_id=f"{base.glyph_id}#fill{i}",
                    provenance=base.provenance, normalized=base.normalized,
                ))
        for g in chosen:
            glyphs.append(GlyphImage(
                pixels=g.pixels, script=name,
                glyph_id=f"{g.script}/{g.glyph_id}",
                provenance=g.provenance, normalized=g.normalized,
            ))
    return ScriptCorpus(name=name, role=role, glyphs=glyphs)


def split(
    corpus: ScriptCorpus,
    ratios: tuple[float, float, float] = (0.70, 0.20, 0.10),
    rng_seed: int = 0,
) -> ScriptCorpus:
    """Random train/val/test partition, deterministic under the seed."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"split ratios sum to {sum(ratios)}, expected 1")
    if len(corpus) < 10:
        raise CorpusError(f"corpus {corpus.name!r} too small to split ({len(corpus)} < 10)")
    ids = corpus.glyph_ids()
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(ids))
    counts = largest_remainder_counts(list(ratios), len(ids))
    shuffled = [ids[i] for i in order]
    splits = {
        "train": sorted(shuffled[:counts[0]]),
        "val": sorted(shuffled[counts[0]:counts[0] + counts[1]]),
        "test": sorted(shuffled[counts[0] + counts[1]:]),
    }
    return ScriptCorpus(name=corpus.name, role=corpus.role, glyphs=corpus.glyphs,
                        splits=splits, load_report=corpus.load_report)
