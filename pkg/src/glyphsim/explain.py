"""Dual-pathway attention heatmaps for the hybrid encoder.

Adapted for representation learning: the backpropagated scalar is the L2 norm
of the projected embedding, so the map shows which image regions feed the
final representation. One map per pathway per glyph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .model import HybridEncoder

PATHWAYS = ("cnn", "swin")


class ExplainError(ValueError):
    pass


@dataclass
class AttentionMap:
    pathway: str
    heat: np.ndarray  # (H, W) in [0, 1]
    glyph_id: str
    layer: str
    degenerate: bool = False
    grid: np.ndarray | None = None  # raw rectified cam at the layer's resolution


def _capture(module):
    store = {}

    def forward_hook(_module, _inputs, output):
        store["activation"] = output
        output.register_hook(lambda grad: store.__setitem__("gradient", grad))

    handle = module.register_forward_hook(forward_hook)
    return store, handle


def _cam_from(activation: torch.Tensor, gradient: torch.Tensor) -> torch.Tensor:
    # channel weights = spatially averaged gradients
    weights = gradient.mean(dim=(1, 2))
    cam = (weights[:, None, None] * activation).sum(dim=0)
    return F.relu(cam)


def grad_cam(model: HybridEncoder, pixels: np.ndarray, pathway: str,
             glyph_id: str = "", swin_stage: int = -1) -> AttentionMap:
    """Heatmap of the chosen pathway's contribution to the embedding norm.

    cnn: gradients at the last conv stage's output; swin: gradients at the
    chosen stage's final block output, reshaped to its token grid. The model
    is used frozen in eval mode and left untouched.
    """
    if pathway not in PATHWAYS:
        raise ExplainError(f"unknown pathway {pathway!r} (choose from {PATHWAYS})")
    was_training = model.training
    model.eval()
    if pathway == "cnn":
        target = model.cnn.stages[-1]
        layer_name = f"cnn.stages[{len(model.cnn.stages) - 1}]"
    else:
        target = model.swin.stages[swin_stage]
        layer_name = f"swin.stages[{swin_stage}]"
    store, handle = _capture(target)
    try:
        arr = np.asarray(pixels, dtype=np.float32)
        x = torch.from_numpy(arr[None]).permute(0, 3, 1, 2)
        embedding = model(x)
        objective = embedding.norm(p=2)
        model.zero_grad(set_to_none=True)
        objective.backward()
    finally:
        handle.remove()
        model.zero_grad(set_to_none=True)
        model.train(was_training)

    activation = store["activation"].detach()[0]
    gradient = store.get("gradient")
    if gradient is None:
        raise ExplainError("no gradient reached the target layer")
    gradient = gradient.detach()[0]
    if pathway == "cnn":
        act, grad = activation, gradient  # (C, h, w)
    else:
        n_tokens, channels = activation.shape
        side = int(round(n_tokens ** 0.5))
        act = activation.T.reshape(channels, side, side)
        grad = gradient.T.reshape(channels, side, side)

    cam = _cam_from(act, grad)
    size = model.config.input_size
    heat = F.interpolate(cam[None, None], size=(size, size), mode="bilinear",
                         align_corners=False)[0, 0].numpy()
    peak = heat.max()
    degenerate = bool(peak <= 0)
    if degenerate:
        heat = np.zeros_like(heat)
    else:
        low = heat.min()
        heat = (heat - low) / (peak - low) if peak > low else np.ones_like(heat)
    return AttentionMap(pathway=pathway, heat=heat, glyph_id=glyph_id,
                        layer=layer_name, degenerate=degenerate,
                        grid=cam.numpy())


def foreground_heat_fraction(heat: np.ndarray, foreground: np.ndarray,
                             decile: float = 0.9) -> float:
    """Share of the top-decile heat mass falling on the foreground mask."""
    if heat.shape != foreground.shape:
        raise ExplainError("heat and mask shapes differ")
    threshold = np.quantile(heat, decile)
    top = heat >= threshold
    mass = heat[top].sum()
    if mass <= 0:
        return 0.0
    return float(heat[top & foreground.astype(bool)].sum() / mass)


def window_contrast(cam_grid: np.ndarray, window: int) -> tuple[float, float]:
    """(across-window variance of window means, mean within-window variance)."""
    h, w = cam_grid.shape
    if h % window or w % window:
        raise ExplainError("cam grid not divisible by window")
    blocks = cam_grid.reshape(h // window, window, w // window, window)
    blocks = blocks.transpose(0, 2, 1, 3).reshape(-1, window * window)
    across = float(blocks.mean(axis=1).var())
    within = float(blocks.var(axis=1).mean())
    return across, within
