"""Synthetic glyph families for desk-scale verification.

Each family owns a motif set drawn from a small stroke grammar (polylines
with quantized directions and optional curvature). Families can share a
fraction of another family's motifs, so visual closeness is controlled by
construction and a pixel-overlap baseline can establish ground truth without
any model in the loop.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

CANVAS = 96
MARGIN = 12


def _name_seed(name: str) -> int:
    # stable across processes, unlike hash()
    return zlib.crc32(name.encode("utf-8"))


@dataclass
class SyntheticScriptSpec:
    family: str
    n_glyphs: int = 24
    stroke_count: tuple[int, int] = (2, 4)
    angle_set: tuple[float, ...] = (0.0, 45.0, 90.0, 135.0)
    curvature: float = 0.0
    shared_motif_fraction: float = 0.0
    shared_with: str | None = None
    motif_pool_size: int = 12

    def __post_init__(self):
        if not 0.0 <= self.shared_motif_fraction <= 1.0:
            raise ValueError("shared_motif_fraction must be in [0, 1]")
        if self.shared_motif_fraction > 0 and self.shared_with is None:
            raise ValueError("shared_motif_fraction needs shared_with")


@dataclass
class Motif:
    strokes: list[np.ndarray]  # each (k, 2) polyline in [0, 1]^2

    def as_array(self) -> np.ndarray:
        return np.concatenate([s.ravel() for s in self.strokes])


def _sample_motif(spec: SyntheticScriptSpec, rng: np.random.Generator) -> Motif:
    strokes = []
    n_strokes = rng.integers(spec.stroke_count[0], spec.stroke_count[1] + 1)
    for _ in range(n_strokes):
        start = rng.uniform(0.15, 0.85, 2)
        angle = np.deg2rad(rng.choice(spec.angle_set))
        length = rng.uniform(0.3, 0.6)
        end = start + length * np.array([np.cos(angle), np.sin(angle)])
        end = np.clip(end, 0.05, 0.95)
        if spec.curvature > 0:
            mid = (start + end) / 2
            normal = np.array([-(end - start)[1], (end - start)[0]])
            bow = mid + normal * spec.curvature * rng.uniform(0.5, 1.0)
            ts = np.linspace(0.0, 1.0, 12)[:, None]
            pts = ((1 - ts) ** 2 * start + 2 * (1 - ts) * ts * bow + ts ** 2 * end)
            strokes.append(pts)
        else:
            strokes.append(np.vstack([start, end]))
    return Motif(strokes=strokes)


def family_motifs(specs: list[SyntheticScriptSpec], seed: int) -> dict[str, list[Motif]]:
    """Resolve every family's motif set, honoring shared fractions.

    Families may only share with a family listed earlier.
    """
    motifs: dict[str, list[Motif]] = {}
    for spec in specs:
        own_rng = np.random.default_rng([seed, _name_seed(spec.family)])
        pool: list[Motif] = []
        if spec.shared_with is not None:
            if spec.shared_with not in motifs:
                raise ValueError(
                    f"family {spec.family!r} shares with {spec.shared_with!r}, "
                    "which must be listed first")
            n_shared = round(spec.shared_motif_fraction * spec.motif_pool_size)
            pool.extend(motifs[spec.shared_with][:n_shared])
        while len(pool) < spec.motif_pool_size:
            pool.append(_sample_motif(spec, own_rng))
        motifs[spec.family] = pool
    return motifs


def render_motif(motif: Motif, rng: np.random.Generator,
                 canvas: int = CANVAS) -> np.ndarray:
    """Draw one jittered instance; white page, black ink, values in [0, 1]."""
    img = Image.new("L", (canvas, canvas), 255)
    draw = ImageDraw.Draw(img)
    angle = rng.uniform(-5.0, 5.0)
    shift = rng.uniform(-2.0, 2.0, 2)
    rad = np.deg2rad(angle)
    rot = np.array([[np.cos(rad), -np.sin(rad)], [np.sin(rad), np.cos(rad)]])
    scale = canvas - 2 * MARGIN
    for stroke in motif.strokes:
        pts = stroke + rng.normal(0.0, 0.003, stroke.shape)
        pts = (pts - 0.5) @ rot.T + 0.5
        pix = pts * scale + MARGIN + shift
        draw.line([tuple(p) for p in pix], fill=0, width=3)
    return np.asarray(img, dtype=np.float64) / 255.0


@dataclass
class SyntheticFamily:
    spec: SyntheticScriptSpec
    directory: Path
    motif_arrays: list[np.ndarray] = field(default_factory=list)


def generate_synthetic(specs: list[SyntheticScriptSpec], seed: int,
                       out_dir: str | Path) -> dict[str, SyntheticFamily]:
    """Render every family's glyphs to `<out_dir>/<family>/*.png`."""
    out_dir = Path(out_dir)
    motifs = family_motifs(specs, seed)
    families = {}
    for spec in specs:
        family_dir = out_dir / spec.family
        family_dir.mkdir(parents=True, exist_ok=True)
        glyph_rng = np.random.default_rng([seed, _name_seed(spec.family), 7])
        pool = motifs[spec.family]
        for i in range(spec.n_glyphs):
            raster = render_motif(pool[i % len(pool)], glyph_rng)
            img = Image.fromarray((raster * 255).astype(np.uint8))
            img.save(family_dir / f"{spec.family}_{i:03d}.png")
        families[spec.family] = SyntheticFamily(
            spec=spec, directory=family_dir,
            motif_arrays=[m.as_array() for m in pool])
    return families


def default_fixture_specs() -> list[SyntheticScriptSpec]:
    """Three families: alpha ~ beta (shared motifs), gamma disjoint and curvier."""
    return [
        SyntheticScriptSpec(family="alpha", n_glyphs=24, motif_pool_size=8),
        SyntheticScriptSpec(family="beta", n_glyphs=24, motif_pool_size=8,
                            shared_motif_fraction=0.8, shared_with="alpha"),
        SyntheticScriptSpec(family="gamma", n_glyphs=24, motif_pool_size=8,
                            angle_set=(22.5, 67.5, 112.5, 157.5),
                            curvature=0.45),
    ]


def pixel_iou(a: np.ndarray, b: np.ndarray, ink_threshold: float = 0.5) -> float:
    """Intersection-over-union of the two rasters' ink masks."""
    ink_a = a < ink_threshold
    ink_b = b < ink_threshold
    union = (ink_a | ink_b).sum()
    if union == 0:
        return 0.0
    return float((ink_a & ink_b).sum() / union)


def mean_family_iou(dir_a: str | Path, dir_b: str | Path,
                    limit: int = 24) -> float:
    """Mean pairwise ink IoU between two rendered families."""
    from .corpus import load_raster

    files_a = sorted(Path(dir_a).glob("*.png"))[:limit]
    files_b = sorted(Path(dir_b).glob("*.png"))[:limit]
    rasters_a = [load_raster(p).mean(axis=2) for p in files_a]
    rasters_b = [load_raster(p).mean(axis=2) for p in files_b]
    values = [pixel_iou(a, b) for a in rasters_a for b in rasters_b]
    return float(np.mean(values))
