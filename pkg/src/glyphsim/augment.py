"""Label-preserving glyph augmentation and the positive-pair generator.

Every transform keeps the glyph readable: no flips, no crops. One call picks
a combo from the policy (e.g. rotation+brightness+noise), samples parameters
inside the declared ranges, and applies the combo in order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates

from .corpus import GlyphImage, ScriptCorpus, _border_mean

DEFAULT_COMBOS = (
    ("rotate", "brightness", "noise"),
    ("elastic", "contrast"),
    ("rotate", "scale", "translate"),
    ("shear", "blur"),
    ("scale", "sharpness", "speckle"),
    ("translate", "contrast", "background"),
)


@dataclass
class AugmentationPolicy:
    rotation_deg: tuple[float, float] = (-45.0, 45.0)
    scale: tuple[float, float] = (0.85, 1.15)
    translate_frac: tuple[float, float] = (-0.10, 0.10)
    shear_deg: tuple[float, float] = (-5.0, 5.0)
    elastic_alpha: float = 34.0
    elastic_sigma: float = 4.0
    brightness: tuple[float, float] = (0.7, 1.5)
    contrast: tuple[float, float] = (0.7, 1.5)
    sharpness: tuple[float, float] = (0.7, 1.6)
    blur_radius: tuple[float, float] = (0.5, 1.2)
    noise_amplitude: float = 0.05
    speckle_sigma: float = 0.05
    background_texture: bool = True
    background_jitter: bool = True
    combos: tuple[tuple[str, ...], ...] = DEFAULT_COMBOS

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        """All ranges collapsed to neutral values; augment() becomes a no-op."""
        return cls(
            rotation_deg=(0.0, 0.0), scale=(1.0, 1.0), translate_frac=(0.0, 0.0),
            shear_deg=(0.0, 0.0), elastic_alpha=0.0, brightness=(1.0, 1.0),
            contrast=(1.0, 1.0), sharpness=(1.0, 1.0), blur_radius=(0.0, 0.0),
            noise_amplitude=0.0, speckle_sigma=0.0,
            background_texture=False, background_jitter=False,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["combos"] = [list(c) for c in self.combos]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPolicy":
        d = dict(d)
        if "combos" in d:
            d["combos"] = tuple(tuple(c) for c in d["combos"])
        for key in ("rotation_deg", "scale", "translate_frac", "shear_deg",
                    "brightness", "contrast", "sharpness", "blur_radius"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def sample_parameters(policy: AugmentationPolicy, rng: np.random.Generator) -> dict:
    """Draw one full parameter set; every value stays inside its policy range."""
    u = rng.uniform
    return {
        "angle": u(*policy.rotation_deg),
        "scale": u(*policy.scale),
        "tx": u(*policy.translate_frac),
        "ty": u(*policy.translate_frac),
        "shear": u(*policy.shear_deg),
        "brightness": u(*policy.brightness),
        "contrast": u(*policy.contrast),
        "sharpness": u(*policy.sharpness),
        "blur": u(*policy.blur_radius),
        "noise": policy.noise_amplitude,
        "speckle": policy.speckle_sigma,
    }


def _dynamic_span(image: np.ndarray) -> float:
    span = float(image.max() - image.min())
    return span if span > 0 else 1.0


def _affine(image: np.ndarray, angle: float, scale: float,
            tx: float, ty: float, shear: float) -> np.ndarray:
    if angle == 0.0 and scale == 1.0 and tx == 0.0 and ty == 0.0 and shear == 0.0:
        return image.copy()
    h, w = image.shape[:2]
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    m = cv2.getRotationMatrix2D(center, angle, scale)
    if shear != 0.0:
        s = np.tan(np.deg2rad(shear))
        shear_m = np.array([[1.0, s, -s * center[1]], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        m = (np.vstack([m, [0.0, 0.0, 1.0]]) @ shear_m)[:2]
    m[0, 2] += tx * w
    m[1, 2] += ty * h
    fill = _border_mean(image)
    return cv2.warpAffine(
        image.astype(np.float64), m, (w, h),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT,
        borderValue=(fill, fill, fill, fill),
    )


def _elastic(image: np.ndarray, alpha: float, sigma: float,
             rng: np.random.Generator) -> np.ndarray:
    if alpha == 0.0:
        return image.copy()
    h, w = image.shape[:2]
    dx = gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma) * alpha
    dy = gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma) * alpha
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    coords = [np.clip(yy + dy, 0, h - 1), np.clip(xx + dx, 0, w - 1)]
    if image.ndim == 2:
        return map_coordinates(image, coords, order=1, mode="nearest")
    out = np.empty_like(image, dtype=np.float64)
    for c in range(image.shape[2]):
        out[:, :, c] = map_coordinates(image[:, :, c], coords, order=1, mode="nearest")
    return out


def _gaussian_blur(image: np.ndarray, radius: float) -> np.ndarray:
    if radius <= 0.0:
        return image.copy()
    sigmas = (radius, radius) + (0,) * (image.ndim - 2)
    return gaussian_filter(image.astype(np.float64), sigmas)


def _apply_op(op: str, image: np.ndarray, params: dict,
              policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    if op == "rotate":
        return _affine(image, params["angle"], 1.0, 0.0, 0.0, 0.0)
    if op == "scale":
        return _affine(image, 0.0, params["scale"], 0.0, 0.0, 0.0)
    if op == "translate":
        return _affine(image, 0.0, 1.0, params["tx"], params["ty"], 0.0)
    if op == "shear":
        return _affine(image, 0.0, 1.0, 0.0, 0.0, params["shear"])
    if op == "elastic":
        return _elastic(image, policy.elastic_alpha, policy.elastic_sigma, rng)
    if op == "brightness":
        return image * params["brightness"]
    if op == "contrast":
        f = params["contrast"]
        if f == 1.0:
            return image.copy()
        mean = image.mean(axis=(0, 1), keepdims=image.ndim == 3)
        return mean + (image - mean) * f
    if op == "sharpness":
        f = params["sharpness"]
        if f == 1.0:
            return image.copy()
        blurred = _gaussian_blur(image, 1.0)
        return blurred + (image - blurred) * f
    if op == "blur":
        return _gaussian_blur(image, params["blur"])
    if op == "noise":
        amp = params["noise"] * _dynamic_span(image)
        return image + rng.uniform(-amp, amp, image.shape)
    if op == "speckle":
        return image * (1.0 + rng.normal(0.0, params["speckle"], image.shape))
    if op == "background":
        if not (policy.background_texture or policy.background_jitter):
            return image.copy()
        out = image.astype(np.float64)
        span = _dynamic_span(image)
        if policy.background_texture:
            h, w = image.shape[:2]
            texture = gaussian_filter(rng.uniform(-1, 1, (h, w)), 8.0) * 0.05 * span
            out = out + (texture[:, :, None] if image.ndim == 3 else texture)
        if policy.background_jitter:
            out = out + rng.uniform(-0.02, 0.02) * span
        return out
    raise ValueError(f"unknown augmentation op: {op!r}")


def augment(image: np.ndarray, policy: AugmentationPolicy,
            rng: np.random.Generator) -> np.ndarray:
    """Apply one sampled combo from the policy; same shape out, identity preserved."""
    image = np.asarray(image, dtype=np.float64)
    in_unit_range = image.min() >= 0.0 and image.max() <= 1.0
    combo = policy.combos[rng.integers(len(policy.combos))]
    params = sample_parameters(policy, rng)
    out = image
    for op in combo:
        out = _apply_op(op, out, params, policy, rng)
    if in_unit_range:
        out = np.clip(out, 0.0, 1.0)
    return out


def positive_pair(image: np.ndarray, policy: AugmentationPolicy,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two independent augmented views of the same glyph."""
    rng_a, rng_b = rng.spawn(2)
    return augment(image, policy, rng_a), augment(image, policy, rng_b)


def expand(corpus: ScriptCorpus, k: int = 4,
           rng: np.random.Generator | None = None,
           policy: AugmentationPolicy | None = None) -> ScriptCorpus:
    """Materialize k augmented variants per glyph; output size = (k+1) x input."""
    if k < 0:
        raise ValueError("expand: k must be >= 0")
    if k == 0:
        return corpus
    rng = rng if rng is not None else np.random.default_rng(0)
    policy = policy if policy is not None else AugmentationPolicy()
    glyphs = []
    for g in corpus.glyphs:
        glyphs.append(g)
        for i in range(k):
            glyphs.append(GlyphImage(
                pixels=augment(g.pixels, policy, rng),
                script=g.script,
                glyph_id=f"{g.glyph_id}#aug{i}",
                provenance=g.provenance,
                normalized=g.normalized,
            ))
    return ScriptCorpus(name=corpus.name, role=corpus.role, glyphs=glyphs,
                        load_report=corpus.load_report)
