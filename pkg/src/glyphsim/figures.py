"""Matplotlib figure rendering for the report path.

Every figure is written next to a data sidecar (csv/json/npy) holding exactly
what was plotted, so plots can be regenerated without rerunning the pipeline.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy.cluster import hierarchy as scipy_hierarchy

from .structure import Dendrogram, HeatmapGrid, Projection

DPI = 150


def _prepare(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def plot_similarity_distributions(values_by_target: dict[str, np.ndarray],
                                  title: str, path: str | Path) -> Path:
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for target, values in sorted(values_by_target.items()):
        ax.hist(values, bins=40, alpha=0.55, label=target, density=True)
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    sidecar = path.with_suffix(".csv")
    lines = ["target,value"]
    for target, values in sorted(values_by_target.items()):
        lines += [f"{target},{v:.8f}" for v in np.asarray(values).ravel()]
    sidecar.write_text("\n".join(lines) + "\n")
    return path


def plot_projection(projection: Projection, point_labels: list[str],
                    point_ids: list[str], title: str, path: str | Path) -> Path:
    path = _prepare(path)
    coords = projection.coordinates
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    for label in sorted(set(point_labels)):
        mask = np.array([pl == label for pl in point_labels])
        ax.scatter(coords[mask, 0], coords[mask, 1], s=18, alpha=0.75, label=label)
    if projection.method == "pca":
        title = f"{title}\nTotal Explained Variance: {projection.total_explained_variance * 100:.2f}%"
    ax.set_title(title)
    ax.set_xlabel(f"{projection.method} 1")
    ax.set_ylabel(f"{projection.method} 2")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    sidecar = path.with_suffix(".csv")
    lines = ["script,glyph_id," + ",".join(f"c{i}" for i in range(coords.shape[1]))]
    for label, gid, row in zip(point_labels, point_ids, coords):
        lines.append(f"{label},{gid}," + ",".join(f"{v:.8f}" for v in row))
    if projection.method == "pca":
        lines.append("# explained_variance_ratios," +
                     ",".join(f"{r:.8f}" for r in projection.explained_variance))
    sidecar.write_text("\n".join(lines) + "\n")
    return path


def plot_dendrogram(dendro: Dendrogram, title: str, path: str | Path) -> Path:
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    scipy_hierarchy.dendrogram(dendro.to_linkage_matrix(), labels=dendro.labels,
                               ax=ax, leaf_rotation=45)
    ax.set_title(title)
    ax.set_ylabel("cosine distance")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "linkage": dendro.linkage,
        "labels": dendro.labels,
        "merges": [[m.node_a, m.node_b, m.height, m.size] for m in dendro.merges],
        "leaf_order": dendro.leaf_order(),
    }, indent=2) + "\n")
    return path


def plot_heatmap(grid: HeatmapGrid, title: str, path: str | Path) -> Path:
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(grid.matrix, cmap="viridis", vmin=-1.0, vmax=1.0)
    ax.set_xticks(range(len(grid.labels)), grid.labels, rotation=45, ha="right")
    ax.set_yticks(range(len(grid.labels)), grid.labels)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="cosine similarity")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    sidecar = path.with_suffix(".csv")
    lines = ["," + ",".join(grid.labels)]
    for label, row in zip(grid.labels, grid.matrix):
        lines.append(label + "," + ",".join(f"{v:.8f}" for v in row))
    sidecar.write_text("\n".join(lines) + "\n")
    return path


def plot_gradcam_overlay(gray_image: np.ndarray, heat: np.ndarray,
                         title: str, path: str | Path) -> Path:
    path = _prepare(path)
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.6))
    axes[0].imshow(gray_image, cmap="gray")
    axes[0].set_title("input")
    axes[1].imshow(gray_image, cmap="gray")
    axes[1].imshow(heat, cmap="jet", alpha=0.45)
    axes[1].set_title(title)
    for ax in axes:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    np.save(path.with_suffix(".npy"), heat)
    return path


def plot_loss_curves(curves: dict[int, tuple[list[float], list[float]]],
                     title: str, path: str | Path) -> Path:
    """curves: model_idx -> (train losses, val losses), one line pair each."""
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for idx, (train, val) in sorted(curves.items()):
        epochs = range(1, len(train) + 1)
        ax.plot(epochs, train, label=f"model {idx} train", alpha=0.8)
        ax.plot(range(1, len(val) + 1), val, "--", label=f"model {idx} val", alpha=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    sidecar = path.with_suffix(".csv")
    lines = ["model_idx,epoch,train_loss,val_loss"]
    for idx, (train, val) in sorted(curves.items()):
        for e, (tr, vl) in enumerate(zip(train, val), start=1):
            lines.append(f"{idx},{e},{tr:.8f},{vl:.8f}")
    sidecar.write_text("\n".join(lines) + "\n")
    return path
