"""Consensus embedding extraction across trained encoder ensembles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ScriptCorpus
from .model import EncoderConfig, load_checkpoint


class EnsembleError(ValueError):
    pass


@dataclass
class Ensemble:
    name: str
    members: list  # frozen encoders exposing embed_np()
    seeds: list[int]
    paths: list[str] = field(default_factory=list)
    config: EncoderConfig | None = None
    partial: bool = False

    def __len__(self):
        return len(self.members)

    def member_ids(self) -> list[str]:
        return [f"model_{i}" for i in range(len(self.members))]


def load_ensemble(paths: list[str | Path], name: str = "ensemble",
                  partial: bool = False) -> Ensemble:
    """Load member checkpoints; members must share one encoder config."""
    members, seeds, configs = [], [], []
    for path in paths:
        model, config, seed = load_checkpoint(path)
        members.append(model)
        seeds.append(seed)
        configs.append(config)
    if not members:
        raise EnsembleError("no checkpoints given")
    if any(c != configs[0] for c in configs):
        raise EnsembleError("ensemble members disagree on encoder config")
    return Ensemble(name=name, members=members, seeds=seeds,
                    paths=[str(p) for p in paths], config=configs[0],
                    partial=partial)


@dataclass
class EmbeddingSet:
    script: str
    model_id: str  # "model_0".. or "consensus"
    ids: list[str]
    matrix: np.ndarray  # (n, d), row i embeds ids[i]

    def __post_init__(self):
        if len(self.ids) != self.matrix.shape[0]:
            raise EnsembleError("ids and matrix row count disagree")
        if not np.isfinite(self.matrix).all():
            raise EnsembleError("non-finite embedding rows")

    def __len__(self):
        return len(self.ids)

    def save(self, directory: str | Path) -> Path:
        """Write `<script>__<model_id>.npy` plus a glyph-id sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        base = directory / f"{self.script}__{self.model_id}"
        np.save(base.with_suffix(".npy"), self.matrix)
        base.with_suffix(".ids.json").write_text(
            json.dumps({"script": self.script, "model_id": self.model_id,
                        "ids": self.ids}, indent=0))
        return base.with_suffix(".npy")

    @classmethod
    def load(cls, directory: str | Path, script: str, model_id: str) -> "EmbeddingSet":
        base = Path(directory) / f"{script}__{model_id}"
        matrix = np.load(base.with_suffix(".npy"))
        meta = json.loads(base.with_suffix(".ids.json").read_text())
        return cls(script=script, model_id=model_id, ids=meta["ids"], matrix=matrix)


def member_embed(member, corpus: ScriptCorpus, model_id: str = "model_0") -> EmbeddingSet:
    """One eval-mode embedding row per glyph, rows ordered by glyph_id."""
    if len(corpus) == 0:
        raise EnsembleError(f"corpus {corpus.name!r} is empty")
    glyphs = sorted(corpus.glyphs, key=lambda g: g.glyph_id)
    pixels = np.stack([g.pixels for g in glyphs]).astype(np.float32)
    matrix = member.embed_np(pixels)
    return EmbeddingSet(script=corpus.name, model_id=model_id,
                        ids=[g.glyph_id for g in glyphs], matrix=matrix)


def consensus_embed(ensemble: Ensemble, corpus: ScriptCorpus,
                    allow_partial: bool = False) -> EmbeddingSet:
    """Per-glyph arithmetic mean of member embeddings (raw space)."""
    if ensemble.partial and not allow_partial:
        raise EnsembleError(
            f"ensemble {ensemble.name!r} is partial; pass allow_partial to override")
    if not ensemble.members:
        raise EnsembleError(f"ensemble {ensemble.name!r} has no members")
    sets = [member_embed(m, corpus, mid)
            for m, mid in zip(ensemble.members, ensemble.member_ids())]
    matrix = np.mean([s.matrix for s in sets], axis=0)
    return EmbeddingSet(script=corpus.name, model_id="consensus",
                        ids=sets[0].ids, matrix=matrix)


def embed_all(ensemble: Ensemble, corpus: ScriptCorpus,
              allow_partial: bool = False) -> dict[str, EmbeddingSet]:
    """Member embeddings plus the consensus, keyed by model_id."""
    if ensemble.partial and not allow_partial:
        raise EnsembleError(
            f"ensemble {ensemble.name!r} is partial; pass allow_partial to override")
    out = {mid: member_embed(m, corpus, mid)
           for m, mid in zip(ensemble.members, ensemble.member_ids())}
    consensus = np.mean([s.matrix for s in out.values()], axis=0)
    first = next(iter(out.values()))
    out["consensus"] = EmbeddingSet(script=corpus.name, model_id="consensus",
                                    ids=first.ids, matrix=consensus)
    return out
