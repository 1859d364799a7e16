"""Embedding-space structure: agglomerative clustering, PCA, t-SNE, heatmaps.

Clustering runs on cosine distance (1 - cosine similarity) with Lance-Williams
updates for all four linkages and a lexicographic tie-break, so merge
sequences are reproducible across runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.manifold import TSNE

from .ensemble import EmbeddingSet

LINKAGES = ("single", "complete", "average", "ward")


class StructureError(ValueError):
    pass


@dataclass
class Merge:
    node_a: int
    node_b: int
    height: float
    size: int


@dataclass
class Dendrogram:
    labels: list[str]  # leaf i carries labels[i]
    merges: list[Merge]
    linkage: str

    def n_leaves(self) -> int:
        return len(self.labels)

    def leaf_order(self) -> list[str]:
        """Left-to-right leaf labels of the merge tree."""
        children = {}
        for step, merge in enumerate(self.merges):
            children[self.n_leaves() + step] = (merge.node_a, merge.node_b)

        def walk(node):
            if node < self.n_leaves():
                return [self.labels[node]]
            a, b = children[node]
            return walk(a) + walk(b)

        if not self.merges:
            return list(self.labels)
        return walk(self.n_leaves() + len(self.merges) - 1)

    def to_linkage_matrix(self) -> np.ndarray:
        """(n-1, 4) merge matrix in the layout scipy's dendrogram plotter expects."""
        return np.array([[m.node_a, m.node_b, m.height, m.size]
                         for m in self.merges], dtype=np.float64)


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if (norms == 0).any():
        raise StructureError("zero-norm vector in clustering input")
    normed = vectors / norms[:, None]
    d = 1.0 - normed @ normed.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _lance_williams_update(linkage: str, d_ki: float, d_kj: float, d_ij: float,
                           n_i: int, n_j: int, n_k: int) -> float:
    if linkage == "single":
        return min(d_ki, d_kj)
    if linkage == "complete":
        return max(d_ki, d_kj)
    if linkage == "average":
        return (n_i * d_ki + n_j * d_kj) / (n_i + n_j)
    if linkage == "ward":
        total = n_i + n_j + n_k
        sq = ((n_i + n_k) * d_ki ** 2 + (n_j + n_k) * d_kj ** 2
              - n_k * d_ij ** 2) / total
        return math.sqrt(max(sq, 0.0))
    raise StructureError(f"unknown linkage {linkage!r} (choose from {LINKAGES})")


def hierarchical_cluster(items, linkage: str = "ward") -> Dendrogram:
    """Agglomerate labeled vectors under cosine distance.

    `items` is a mapping label -> vector (insertion order ignored; leaves are
    indexed by sorted label). Ties in merge distance break lexicographically
    on the clusters' smallest leaf labels.
    """
    if linkage not in LINKAGES:
        raise StructureError(f"unknown linkage {linkage!r} (choose from {LINKAGES})")
    if hasattr(items, "items"):
        pairs = sorted(items.items())
    else:
        pairs = sorted(items)
    if len(pairs) < 2:
        raise StructureError("need at least 2 items to cluster")
    labels = [label for label, _ in pairs]
    vectors = np.asarray([np.asarray(v, dtype=np.float64) for _, v in pairs])
    dist = cosine_distance_matrix(vectors)

    n = len(labels)
    active: dict[int, dict] = {
        i: {"key": (labels[i],), "size": 1} for i in range(n)}
    d = {frozenset((i, j)): float(dist[i, j])
         for i in range(n) for j in range(i + 1, n)}
    merges = []
    next_id = n
    for _ in range(n - 1):
        best = None
        for i in sorted(active):
            for j in sorted(active):
                if j <= i:
                    continue
                cand = (d[frozenset((i, j))],) + tuple(sorted(
                    [active[i]["key"], active[j]["key"]]))
                if best is None or cand < best[0]:
                    best = (cand, i, j)
        _, i, j = best
        height = d[frozenset((i, j))]
        size = active[i]["size"] + active[j]["size"]
        merges.append(Merge(node_a=i, node_b=j, height=height, size=size))
        new = {"key": tuple(sorted(active[i]["key"] + active[j]["key"])),
               "size": size}
        for k in active:
            if k in (i, j):
                continue
            d[frozenset((next_id, k))] = _lance_williams_update(
                linkage, d[frozenset((k, i))], d[frozenset((k, j))], height,
                active[i]["size"], active[j]["size"], active[k]["size"])
        del active[i], active[j]
        active[next_id] = new
        next_id += 1
    return Dendrogram(labels=labels, merges=merges, linkage=linkage)


def script_centroids(embedding_sets: list[EmbeddingSet]) -> dict[str, np.ndarray]:
    return {e.script: e.matrix.mean(axis=0) for e in embedding_sets}


@dataclass
class Projection:
    method: str  # "pca" | "tsne"
    coordinates: np.ndarray  # (n, dims)
    explained_variance: tuple[float, ...] = ()
    rank_deficient: bool = False

    @property
    def total_explained_variance(self) -> float:
        return float(sum(self.explained_variance))


def pca_project(embeddings: np.ndarray, dims: int = 2) -> Projection:
    """Top principal components of mean-centered data, with variance ratios."""
    x = np.asarray(embeddings, dtype=np.float64)
    if dims not in (2, 3):
        raise StructureError("pca dims must be 2 or 3")
    if x.shape[0] < dims + 1:
        raise StructureError(f"need at least {dims + 1} items for {dims}-D PCA")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    total = eigvals.sum()
    rank_tol = max(eigvals[0], 1.0) * 1e-12
    rank = int((eigvals > rank_tol).sum())
    components = eigvecs[:, :dims].copy()
    # deterministic sign: largest-magnitude loading points positive
    for c in range(dims):
        peak = np.argmax(np.abs(components[:, c]))
        if components[peak, c] < 0:
            components[:, c] *= -1
    coords = centered @ components
    ratios = eigvals[:dims] / total if total > 0 else np.zeros(dims)
    rank_deficient = rank < dims
    if rank_deficient:
        coords[:, rank:] = 0.0
        ratios = np.concatenate([ratios[:rank], np.zeros(dims - rank)])
    return Projection(method="pca", coordinates=coords,
                      explained_variance=tuple(float(r) for r in ratios),
                      rank_deficient=rank_deficient)


def tsne_project(embeddings: np.ndarray, perplexity: float = 30.0,
                 seed: int = 0, max_iter: int = 1000,
                 learning_rate: float = 200.0) -> Projection:
    """2-D t-SNE with PCA initialization, deterministic under the seed."""
    x = np.asarray(embeddings, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise StructureError("need at least 4 items for t-SNE")
    if not perplexity < n - 1:
        raise StructureError(f"perplexity {perplexity} must be < n-1 = {n - 1}")
    tsne = TSNE(n_components=2, perplexity=perplexity, learning_rate=learning_rate,
                max_iter=max_iter, init="pca", random_state=seed, method="exact")
    coords = tsne.fit_transform(x)
    return Projection(method="tsne", coordinates=np.asarray(coords, dtype=np.float64))


@dataclass
class HeatmapGrid:
    labels: list[str]  # dendrogram leaf order
    matrix: np.ndarray  # symmetric centroid cosine similarities
    linkage: str
    dendrogram: Dendrogram = field(repr=False, default=None)


def similarity_heatmap(centroids: dict[str, np.ndarray],
                       linkage: str = "ward") -> HeatmapGrid:
    """Centroid cosine-similarity matrix ordered by dendrogram leaf order."""
    if len(centroids) < 2:
        raise StructureError("need at least 2 scripts for a heatmap")
    dendro = hierarchical_cluster(centroids, linkage)
    order = dendro.leaf_order()
    vectors = np.asarray([centroids[label] for label in order], dtype=np.float64)
    sim = 1.0 - cosine_distance_matrix(vectors)
    np.fill_diagonal(sim, 1.0)
    return HeatmapGrid(labels=order, matrix=sim, linkage=linkage, dendrogram=dendro)
