"""Self-supervised contrastive training of the hybrid encoder.

One model trains on positive pairs (two augmentations of the same glyph)
against in-batch negatives; the ensemble trains one model per seed over
identical splits and records a summary row per member.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch

from .augment import AugmentationPolicy, positive_pair
from .corpus import ScriptCorpus
from .model import EncoderConfig, HybridEncoder, build_encoder, save_checkpoint

CHECKPOINT_SUFFIX = "hybrid_extractor_best.pth"


@dataclass
class TrainConfig:
    lr_max: float = 3e-5
    lr_min: float = 0.0
    weight_decay: float = 1e-3
    max_epochs: int = 20
    patience: int = 5
    warmup_frac: float = 0.10
    temperature: float = 0.1
    uniformity_weight: float = 0.1
    var_reg: float = 1.0
    var_eps: float = 1e-4
    grad_clip_norm: float = 1.0
    batch_size: int = 64
    seeds: tuple[int, ...] = (42, 43, 44, 45, 46)
    improvement_tol: float = 1e-6

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not 0 < self.warmup_frac < 1:
            raise ValueError("warmup_frac must be in (0, 1)")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)


@dataclass
class TrainRecord:
    model_idx: int
    seed: int
    best_val_loss: float
    best_epoch: int
    model_path: str
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    aborted: bool = False
    abort_reason: str = ""


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, record: TrainRecord):
        super().__init__(message)
        self.record = record


class LossTerms(NamedTuple):
    nt_xent: torch.Tensor
    variance_term: torch.Tensor
    uniformity: torch.Tensor


def contrastive_loss_terms(
    embeddings: torch.Tensor,
    pair_index,
    temperature: float = 0.1,
    var_reg: float = 1.0,
    var_eps: float = 1e-4,
) -> LossTerms:
    """The three loss components, before weighting the uniformity term.

    `embeddings` holds 2N projected rows where row i's positive is row
    pair_index[i]; the contrastive denominator runs over the 2N-1 other rows.
    The variance term penalizes collapse (reg / (Var[z] + eps), Var[z] being
    the mean squared distance of rows from their mean); the uniformity term is
    log E[exp(-2 ||f(x)-f(y)||^2)] over distinct normalized row pairs.
    """
    if embeddings.dim() != 2:
        raise ValueError("embeddings must be a 2-D (2N, D) tensor")
    two_n = embeddings.shape[0]
    if two_n < 4 or two_n % 2 != 0:
        raise ValueError("need at least 2 positive pairs (4 rows)")
    if not torch.isfinite(embeddings).all():
        raise ValueError("non-finite embedding")
    pair = torch.as_tensor(pair_index, dtype=torch.long, device=embeddings.device)
    if pair.shape != (two_n,):
        raise ValueError("pair_index must list the partner of every row")

    normed = torch.nn.functional.normalize(embeddings, dim=1, eps=1e-12)
    sim = normed @ normed.T
    logits = sim / temperature
    eye = torch.eye(two_n, dtype=torch.bool, device=embeddings.device)
    denom = torch.logsumexp(logits.masked_fill(eye, float("-inf")), dim=1)
    positive = logits[torch.arange(two_n), pair]
    nt_xent = (denom - positive).mean()

    centered = embeddings - embeddings.mean(dim=0, keepdim=True)
    variance = centered.pow(2).sum(dim=1).mean()
    if var_reg == 0:
        var_term = torch.zeros((), dtype=embeddings.dtype, device=embeddings.device)
    else:
        var_term = var_reg / (variance + var_eps)

    sq_dist = torch.cdist(normed, normed).pow(2)
    iu = torch.triu_indices(two_n, two_n, offset=1)
    uniformity = torch.log(torch.exp(-2.0 * sq_dist[iu[0], iu[1]]).mean())
    return LossTerms(nt_xent=nt_xent, variance_term=var_term, uniformity=uniformity)


def contrastive_loss(
    embeddings: torch.Tensor,
    pair_index,
    temperature: float = 0.1,
    var_reg: float = 1.0,
    uniformity_weight: float = 0.1,
    var_eps: float = 1e-4,
) -> torch.Tensor:
    """Total training loss: NT-Xent + variance term + weighted uniformity."""
    terms = contrastive_loss_terms(embeddings, pair_index, temperature,
                                   var_reg, var_eps)
    return terms.nt_xent + terms.variance_term + uniformity_weight * terms.uniformity


def pair_indices(n_pairs: int) -> list[int]:
    """Partner index for rows laid out as [a_0..a_{N-1}, b_0..b_{N-1}]."""
    return list(range(n_pairs, 2 * n_pairs)) + list(range(n_pairs))


def lr_at(step: float, total_steps: float, config: TrainConfig) -> float:
    """Linear warmup to lr_max, then cosine decay to lr_min."""
    warmup = config.warmup_frac * total_steps
    if step <= warmup:
        return config.lr_max * (step / warmup if warmup > 0 else 1.0)
    progress = (step - warmup) / (total_steps - warmup)
    return config.lr_min + 0.5 * (config.lr_max - config.lr_min) * (
        1.0 + math.cos(math.pi * progress))


class EarlyStopper:
    """Stop after `patience` epochs without improvement of at least `tol`."""

    def __init__(self, patience: int, tol: float = 1e-6):
        self.patience = patience
        self.tol = tol
        self.best_loss = math.inf
        self.best_epoch = 0
        self.epochs_since_best = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record an epoch's validation loss; True means stop now."""
        if val_loss < self.best_loss - self.tol:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        return self.epochs_since_best >= self.patience


def early_stopping_trace(val_losses, patience: int, tol: float = 1e-6):
    """Simulate the stopping rule; returns (best_epoch, stop_epoch)."""
    stopper = EarlyStopper(patience, tol)
    stop_epoch = len(val_losses)
    for epoch, loss in enumerate(val_losses, start=1):
        if stopper.update(epoch, loss):
            stop_epoch = epoch
            break
    return stopper.best_epoch, stop_epoch


def _glyph_pixels(glyphs) -> np.ndarray:
    return np.stack([g.pixels for g in glyphs]).astype(np.float32)


def _batch_views(pixels: np.ndarray, idx: np.ndarray,
                 policy: AugmentationPolicy,
                 rng: np.random.Generator) -> torch.Tensor:
    views_a, views_b = [], []
    for i in idx:
        a, b = positive_pair(pixels[i], policy, rng)
        views_a.append(a)
        views_b.append(b)
    batch = np.stack(views_a + views_b).astype(np.float32)
    return torch.from_numpy(batch).permute(0, 3, 1, 2)


def _epoch_batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if len(idx) >= 2:  # the loss needs at least 2 pairs
            yield idx


def _validation_loss(model: HybridEncoder, pixels: np.ndarray,
                     policy: AugmentationPolicy,
                     config: TrainConfig, seed: int) -> float:
    # fixed rng per call so the val pairs are identical across epochs
    rng = np.random.default_rng([seed, 777_777])
    model.eval()
    order = np.arange(len(pixels))
    losses, weights = [], []
    with torch.no_grad():
        for idx in _epoch_batches(len(pixels), config.batch_size, order):
            batch = _batch_views(pixels, idx, policy, rng)
            emb = model(batch)
            loss = contrastive_loss(emb, pair_indices(len(idx)),
                                    config.temperature, config.var_reg,
                                    config.uniformity_weight, config.var_eps)
            losses.append(float(loss))
            weights.append(len(idx))
    return float(np.average(losses, weights=weights))


def train_model(
    corpus: ScriptCorpus,
    encoder_config: EncoderConfig,
    config: TrainConfig,
    seed: int,
    model_idx: int = 1,
    run_dir: str | Path | None = None,
    ensemble_name: str = "ensemble",
    policy: AugmentationPolicy | None = None,
) -> tuple[HybridEncoder, TrainRecord]:
    """Train one encoder on the corpus's train split, early-stopped on val."""
    train_glyphs = corpus.subset("train")
    val_glyphs = corpus.subset("val")
    if len(train_glyphs) < 2 or len(val_glyphs) < 2:
        raise ValueError("train and val splits must each hold >= 2 glyphs")
    policy = policy if policy is not None else AugmentationPolicy()
    train_pixels = _glyph_pixels(train_glyphs)
    val_pixels = _glyph_pixels(val_glyphs)

    model = build_encoder(encoder_config, seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr_max,
                                  weight_decay=config.weight_decay)
    steps_per_epoch = sum(1 for _ in _epoch_batches(
        len(train_pixels), config.batch_size, np.arange(len(train_pixels))))
    total_steps = steps_per_epoch * config.max_epochs

    model_path = ""
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        model_path = str(run_dir / f"{ensemble_name}_{model_idx}_{CHECKPOINT_SUFFIX}")

    record = TrainRecord(model_idx=model_idx, seed=seed, best_val_loss=math.inf,
                         best_epoch=0, model_path=model_path)
    stopper = EarlyStopper(config.patience, config.improvement_tol)
    best_state = copy.deepcopy(model.state_dict())
    global_step = 0

    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([seed, epoch]).permutation(len(train_pixels))
        aug_rng = np.random.default_rng([seed, epoch, 1])
        model.train()
        epoch_losses = []
        for idx in _epoch_batches(len(train_pixels), config.batch_size, order):
            batch = _batch_views(train_pixels, idx, policy, aug_rng)
            emb = model(batch)
            loss = contrastive_loss(emb, pair_indices(len(idx)),
                                    config.temperature, config.var_reg,
                                    config.uniformity_weight, config.var_eps)
            if not torch.isfinite(loss):
                record.aborted = True
                record.abort_reason = f"non-finite loss at epoch {epoch}"
                record.stopped_epoch = epoch
                raise TrainingDiverged(record.abort_reason, record)
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
            global_step += 1
            lr = lr_at(global_step, total_steps, config)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        record.train_losses.append(float(np.mean(epoch_losses)))

        val_loss = _validation_loss(model, val_pixels, policy, config, seed)
        record.val_losses.append(val_loss)
        if val_loss < record.best_val_loss - config.improvement_tol:
            best_state = copy.deepcopy(model.state_dict())
        if stopper.update(epoch, val_loss):
            record.stopped_epoch = epoch
            break
    else:
        record.stopped_epoch = config.max_epochs

    record.best_val_loss = stopper.best_loss
    record.best_epoch = stopper.best_epoch
    model.load_state_dict(best_state)
    model.eval()
    if model_path:
        save_checkpoint(model, model_path, seed)
    return model, record


def train_ensemble(
    corpus: ScriptCorpus,
    encoder_config: EncoderConfig,
    config: TrainConfig,
    run_dir: str | Path | None = None,
    name: str = "ensemble",
    policy: AugmentationPolicy | None = None,
):
    """One train_model run per seed over identical splits.

    Returns (Ensemble, records). A diverged member leaves a gap and marks the
    ensemble partial; downstream consensus refuses partial ensembles unless
    overridden.
    """
    from .ensemble import Ensemble

    seeds = list(config.seeds)
    if len(set(seeds)) != len(seeds):
        raise ValueError("ensemble seeds must be distinct")
    members, paths, records = [], [], []
    partial = False
    for i, seed in enumerate(seeds, start=1):
        try:
            model, record = train_model(corpus, encoder_config, config, seed,
                                         model_idx=i, run_dir=run_dir,
                                         ensemble_name=name, policy=policy)
        except TrainingDiverged as diverged:
            records.append(diverged.record)
            partial = True
            continue
        members.append(model)
        paths.append(record.model_path)
        records.append(record)
    ensemble = Ensemble(name=name, members=members,
                        seeds=[r.seed for r in records if not r.aborted],
                        paths=paths, config=encoder_config, partial=partial)
    return ensemble, records
