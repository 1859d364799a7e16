"""Hybrid two-pathway glyph encoder.

A residual CNN captures local stroke detail, a shifted-window transformer
captures global structure; a projection head fuses both into one embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class ShapeError(ValueError):
    """Input tensor shape violates the encoder's contract."""


@dataclass(frozen=True)
class EncoderConfig:
    cnn_widths: tuple[int, ...] = (64, 128, 256, 512)
    cnn_blocks: tuple[int, ...] = (2, 2, 2, 2)
    swin_dims: tuple[int, ...] = (128, 256, 512, 1024)
    swin_depths: tuple[int, ...] = (2, 2, 18, 2)
    swin_heads: tuple[int, ...] = (4, 8, 16, 32)
    window_size: int = 7
    patch_size: int = 4
    fusion_hidden: int = 1024
    embed_dim: int = 256
    bn_momentum: float = 0.01
    dropout: float = 0.1
    input_size: int = 224

    @property
    def concat_dim(self) -> int:
        return self.cnn_widths[-1] + self.swin_dims[-1]

    @classmethod
    def paper(cls) -> "EncoderConfig":
        return cls()

    @classmethod
    def tiny(cls) -> "EncoderConfig":
        """Laptop-scale preset: same topology, shrunken widths."""
        return cls(
            cnn_widths=(8, 16, 32, 64), cnn_blocks=(2, 2, 2, 2),
            swin_dims=(32, 64, 128, 256), swin_depths=(2, 2, 2, 2),
            swin_heads=(2, 2, 4, 4),
            fusion_hidden=256, embed_dim=256,
        )

    @classmethod
    def from_preset(cls, name: str) -> "EncoderConfig":
        presets = {"paper": cls.paper, "tiny": cls.tiny}
        if name not in presets:
            raise ValueError(f"unknown encoder preset {name!r} (choose from {sorted(presets)})")
        return presets[name]()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


class ResidualBlock(nn.Module):
    """Two 3x3 conv layers (each BN + ReLU) added to an identity shortcut."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        branch = F.relu(self.bn1(self.conv1(x)))
        branch = F.relu(self.bn2(self.conv2(branch)))
        return branch + self.shortcut(x)


class CnnPathway(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        w = config.cnn_widths
        self.stem = nn.Sequential(
            nn.Conv2d(3, w[0], 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(w[0]),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        stages = []
        in_ch = w[0]
        for i, (width, blocks) in enumerate(zip(w, config.cnn_blocks)):
            stage = []
            for b in range(blocks):
                stride = 2 if (i > 0 and b == 0) else 1
                stage.append(ResidualBlock(in_ch, width, stride))
                in_ch = width
            stages.append(nn.Sequential(*stage))
        self.stages = nn.ModuleList(stages)
        self.out_dim = w[-1]

    def forward(self, x):
        x = self.stem(x)
        for stage in self.stages:
            x = stage(x)
        return F.adaptive_avg_pool2d(x, 1).flatten(1)


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, H, W, C) -> (num_windows*B, window*window, C)"""
    b, h, w, c = x.shape
    x = x.view(b, h // window, window, w // window, window, c)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(-1, window * window, c)


def window_reverse(windows: torch.Tensor, window: int, h: int, w: int) -> torch.Tensor:
    """(num_windows*B, window*window, C) -> (B, H, W, C)"""
    b = windows.shape[0] // ((h // window) * (w // window))
    x = windows.view(b, h // window, w // window, window, window, -1)
    return x.permute(0, 1, 3, 2, 4, 5).reshape(b, h, w, -1)


def scaled_window_attention(q, k, v, bias=None, mask=None):
    """softmax(q k^T / sqrt(d) + bias) v over the last two axes; returns (out, attn)."""
    d = q.shape[-1]
    attn = q @ k.transpose(-2, -1) / math.sqrt(d)
    if bias is not None:
        attn = attn + bias
    if mask is not None:
        attn = attn + mask
    attn = attn.softmax(dim=-1)
    return attn @ v, attn


def relative_position_index(window: int) -> torch.Tensor:
    """Flat (N, N) lookup into the (2w-1)^2 relative position bias table."""
    coords = torch.stack(torch.meshgrid(
        torch.arange(window), torch.arange(window), indexing="ij")).flatten(1)
    relative = coords[:, :, None] - coords[:, None, :]  # 2, N, N
    relative = relative.permute(1, 2, 0)
    relative = relative + (window - 1)  # shift to [0, 2w-2]
    return relative[:, :, 0] * (2 * window - 1) + relative[:, :, 1]


class WindowAttention(nn.Module):
    """Multi-head self-attention inside one window, with relative position bias."""

    def __init__(self, dim: int, num_heads: int, window: int):
        super().__init__()
        if dim % num_heads != 0:
            raise ShapeError(f"dim {dim} not divisible by heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.window = window
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        # bias table starts at zero so initial attention is unbiased
        self.relative_bias_table = nn.Parameter(
            torch.zeros((2 * window - 1) ** 2, num_heads))
        self.register_buffer("relative_index", relative_position_index(window),
                             persistent=False)

    def forward(self, x, mask=None, return_attn=False):
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, c // self.num_heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        bias = self.relative_bias_table[self.relative_index.reshape(-1)]
        bias = bias.reshape(n, n, -1).permute(2, 0, 1).unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            bias = bias + mask.repeat(b // nw, 1, 1).unsqueeze(1)
        out, attn = scaled_window_attention(q, k, v, bias=bias)
        out = out.transpose(1, 2).reshape(b, n, c)
        out = self.proj(out)
        if return_attn:
            return out, attn
        return out


def shift_attention_mask(resolution: int, window: int, shift: int) -> torch.Tensor:
    """Additive mask blocking attention across wrapped window segments."""
    img_mask = torch.zeros(1, resolution, resolution, 1)
    slices = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    count = 0
    for hs in slices:
        for ws in slices:
            img_mask[:, hs, ws, :] = count
            count += 1
    mask_windows = window_partition(img_mask, window).squeeze(-1)
    mask = mask_windows.unsqueeze(1) - mask_windows.unsqueeze(2)
    return mask.masked_fill(mask != 0, float(-100.0)).masked_fill(mask == 0, 0.0)


class SwinBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, window: int, shift: int,
                 resolution: int, mlp_ratio: int = 4):
        super().__init__()
        self.resolution = resolution
        # a window covering the whole map leaves nothing to shift
        if resolution <= window:
            window, shift = resolution, 0
        self.window = window
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, window)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio), nn.GELU(),
            nn.Linear(dim * mlp_ratio, dim))
        if shift > 0:
            self.register_buffer("attn_mask",
                                 shift_attention_mask(resolution, window, shift),
                                 persistent=False)
        else:
            self.attn_mask = None

    def forward(self, x):
        b, L, c = x.shape
        r = self.resolution
        if L != r * r:
            raise ShapeError(f"expected {r * r} tokens, got {L}")
        shortcut = x
        x = self.norm1(x).view(b, r, r, c)
        if self.shift > 0:
            x = torch.roll(x, (-self.shift, -self.shift), dims=(1, 2))
        windows = window_partition(x, self.window)
        windows = self.attn(windows, mask=self.attn_mask)
        x = window_reverse(windows, self.window, r, r)
        if self.shift > 0:
            x = torch.roll(x, (self.shift, self.shift), dims=(1, 2))
        x = shortcut + x.view(b, L, c)
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    """Concatenate 2x2 neighborhoods, halve resolution, double channels."""

    def __init__(self, dim: int, resolution: int):
        super().__init__()
        self.resolution = resolution
        self.norm = nn.LayerNorm(4 * dim)
        self.reduce = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x):
        b, L, c = x.shape
        r = self.resolution
        x = x.view(b, r, r, c)
        x = torch.cat([x[:, 0::2, 0::2], x[:, 1::2, 0::2],
                       x[:, 0::2, 1::2], x[:, 1::2, 1::2]], dim=-1)
        x = x.view(b, (r // 2) * (r // 2), 4 * c)
        return self.reduce(self.norm(x))


class SwinPathway(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        if config.input_size % config.patch_size != 0:
            raise ShapeError("input size not divisible by patch size")
        resolution = config.input_size // config.patch_size
        self.patch_embed = nn.Conv2d(3, config.swin_dims[0],
                                     config.patch_size, stride=config.patch_size)
        self.patch_norm = nn.LayerNorm(config.swin_dims[0])
        self.stages = nn.ModuleList()
        self.merges = nn.ModuleList()
        self.resolutions = []
        for i, (dim, depth, heads) in enumerate(
                zip(config.swin_dims, config.swin_depths, config.swin_heads)):
            if resolution > config.window_size and resolution % config.window_size != 0:
                raise ShapeError(
                    f"stage {i} resolution {resolution} not divisible by window "
                    f"{config.window_size}")
            blocks = [SwinBlock(dim, heads, config.window_size,
                                0 if b % 2 == 0 else config.window_size // 2,
                                resolution)
                      for b in range(depth)]
            self.stages.append(nn.Sequential(*blocks))
            self.resolutions.append(resolution)
            if i < len(config.swin_dims) - 1:
                if config.swin_dims[i + 1] != 2 * dim:
                    raise ShapeError("stage dims must double between stages")
                self.merges.append(PatchMerging(dim, resolution))
                if resolution % 2 != 0:
                    raise ShapeError(f"cannot merge odd resolution {resolution}")
                resolution //= 2
        self.norm = nn.LayerNorm(config.swin_dims[-1])
        self.out_dim = config.swin_dims[-1]

    def forward(self, x, return_tokens=False):
        x = self.patch_embed(x)  # B, C, H', W'
        x = x.flatten(2).transpose(1, 2)
        x = self.patch_norm(x)
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if i < len(self.merges):
                x = self.merges[i](x)
        x = self.norm(x)
        if return_tokens:
            return x
        return x.mean(dim=1)


class FusionHead(nn.Module):
    """Projection head: concat -> linear -> BN -> ReLU -> dropout -> linear -> BN."""

    def __init__(self, cnn_dim: int, swin_dim: int, hidden: int, out_dim: int,
                 bn_momentum: float = 0.01, dropout: float = 0.1):
        super().__init__()
        self.cnn_dim = cnn_dim
        self.swin_dim = swin_dim
        self.fc1 = nn.Linear(cnn_dim + swin_dim, hidden)
        self.bn1 = nn.BatchNorm1d(hidden, momentum=bn_momentum)
        self.drop = nn.Dropout(dropout)
        self.fc2 = nn.Linear(hidden, out_dim)
        self.bn2 = nn.BatchNorm1d(out_dim, momentum=bn_momentum)

    def forward(self, cnn_feat, swin_feat):
        if cnn_feat.shape[-1] != self.cnn_dim or swin_feat.shape[-1] != self.swin_dim:
            raise ShapeError(
                f"fusion expects dims ({self.cnn_dim}, {self.swin_dim}), got "
                f"({cnn_feat.shape[-1]}, {swin_feat.shape[-1]})")
        z = torch.cat([cnn_feat, swin_feat], dim=-1)
        h = self.drop(F.relu(self.bn1(self.fc1(z))))
        return self.bn2(self.fc2(h))


class HybridEncoder(nn.Module):
    def __init__(self, config: EncoderConfig | None = None):
        super().__init__()
        self.config = config if config is not None else EncoderConfig.paper()
        self.cnn = CnnPathway(self.config)
        self.swin = SwinPathway(self.config)
        self.fusion = FusionHead(self.cnn.out_dim, self.swin.out_dim,
                                 self.config.fusion_hidden, self.config.embed_dim,
                                 self.config.bn_momentum, self.config.dropout)
        self.apply(_init_weights)

    def _check_input(self, x):
        s = self.config.input_size
        if x.dim() != 4 or x.shape[1] != 3 or x.shape[2] != s or x.shape[3] != s:
            raise ShapeError(f"expected input (B, 3, {s}, {s}), got {tuple(x.shape)}")

    def cnn_forward(self, x):
        self._check_input(x)
        return self.cnn(x)

    def swin_forward(self, x):
        self._check_input(x)
        return self.swin(x)

    def fuse_project(self, cnn_feat, swin_feat):
        return self.fusion(cnn_feat, swin_feat)

    def forward(self, x):
        return self.fuse_project(self.cnn_forward(x), self.swin_forward(x))

    embed = forward

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        return {
            "cnn": list(self.cnn.parameters()),
            "swin": list(self.swin.parameters()),
            "fusion": list(self.fusion.parameters()),
        }

    @torch.no_grad()
    def embed_np(self, pixels: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """Eval-mode embeddings for an (N, H, W, 3) or (H, W, 3) pixel array."""
        was_training = self.training
        self.eval()
        try:
            arr = np.asarray(pixels, dtype=np.float32)
            if arr.ndim == 3:
                arr = arr[None]
            x = torch.from_numpy(arr).permute(0, 3, 1, 2)
            outs = [self(x[i:i + batch_size]).numpy()
                    for i in range(0, len(x), batch_size)]
            return np.concatenate(outs, axis=0)
        finally:
            self.train(was_training)


def _init_weights(module: nn.Module):
    if isinstance(module, nn.Conv2d):
        nn.init.kaiming_normal_(module.weight, mode="fan_out", nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm2d, nn.BatchNorm1d, nn.LayerNorm)):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def build_encoder(config: EncoderConfig, seed: int) -> HybridEncoder:
    """Encoder with weights drawn from the given seed."""
    torch.manual_seed(seed)
    return HybridEncoder(config)


def save_checkpoint(model: HybridEncoder, path: str | Path, seed: int):
    payload = {
        "state_dict": model.state_dict(),
        "config": model.config.to_dict(),
        "seed": seed,
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[HybridEncoder, EncoderConfig, int]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    config = EncoderConfig.from_dict(payload["config"])
    model = HybridEncoder(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config, payload["seed"]
