"""Pipeline CLI: prepare -> train -> embed -> analyze / cluster / project / gradcam -> report.

Every command is deterministic given the same config and seed. Exit codes:
0 ok, 1 user error (bad config, missing upstream artifact, resource guard),
2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import analysis as analysis_mod
from . import figures
from . import reports
from .augment import AugmentationPolicy
from .corpus import (CorpusError, GlyphImage, ManifestEntry, ScriptCorpus,
                     build_composite, load_corpus, split)
from .ensemble import EmbeddingSet, Ensemble, embed_all, load_ensemble
from .explain import grad_cam
from .model import EncoderConfig
from .structure import (LINKAGES, hierarchical_cluster, pca_project,
                        script_centroids, similarity_heatmap, tsne_project)
from .synthetic import (SyntheticScriptSpec, default_fixture_specs,
                        generate_synthetic)
from .trainer import TrainConfig, train_ensemble

OUT_ROOT_ENV = "GLYPHSIM_OUT"


class UserError(Exception):
    """Mistake the user can fix; exits with code 1."""


@dataclass
class RunConfig:
    manifest: list[ManifestEntry] = field(default_factory=list)
    preset: str = "tiny"
    train: TrainConfig = field(default_factory=TrainConfig)
    policy: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    alpha: float = 0.05
    subsample_cap: int = 32
    out_dir: str = "runs/run"
    seed: int = 7
    perplexity: float | None = None  # None = auto-clamp
    config_dir: Path = field(default_factory=Path)

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig.from_preset(self.preset)

    def resolved_out_dir(self) -> Path:
        out = Path(self.out_dir)
        root = os.environ.get(OUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out

    def targets(self) -> list[ManifestEntry]:
        return [e for e in self.manifest if e.role == "target"]

    def comparisons(self) -> list[ManifestEntry]:
        return [e for e in self.manifest if e.role == "comparison"]


def _parse_manifest(raw: list[dict]) -> list[ManifestEntry]:
    entries = []
    for item in raw:
        item = dict(item)
        composite = item.pop("composite", None)
        if composite is not None:
            composite = [(c["source"], float(c["proportion"])) for c in composite]
        entries.append(ManifestEntry(
            name=item.pop("name"),
            role=item.pop("role"),
            directory=item.pop("dir", None),
            denoise=bool(item.pop("denoise", False)),
            denoise_before_pad=bool(item.pop("denoise_before_pad", False)),
            composite=composite,
            size=item.pop("size", None),
        ))
        if item:
            raise UserError(f"unknown manifest keys: {sorted(item)}")
    return entries


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise UserError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text()) or {}
    try:
        cfg = RunConfig(
            manifest=_parse_manifest(raw.get("manifest", [])),
            preset=raw.get("preset", "tiny"),
            train=TrainConfig.from_dict(raw["train"]) if raw.get("train")
            else TrainConfig(),
            policy=AugmentationPolicy.from_dict(raw["augment"]) if raw.get("augment")
            else AugmentationPolicy(),
            alpha=float(raw.get("alpha", 0.05)),
            subsample_cap=int(raw.get("subsample_cap", 32)),
            out_dir=raw.get("out_dir", "runs/run"),
            seed=int(raw.get("seed", 7)),
            perplexity=raw.get("perplexity"),
            config_dir=path.parent,
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise UserError(f"bad config {path}: {exc}") from exc
    if not cfg.manifest:
        raise UserError(f"config {path} declares no manifest entries")
    return cfg


def _config_overrides(cfg: RunConfig) -> dict:
    """Fields that differ from the built-in defaults, for the run manifest."""
    overrides = {}
    default_train = TrainConfig().to_dict()
    train = cfg.train.to_dict()
    train_diff = {k: v for k, v in train.items() if default_train[k] != v}
    if train_diff:
        overrides["train"] = train_diff
    default_policy = AugmentationPolicy().to_dict()
    policy = cfg.policy.to_dict()
    policy_diff = {k: v for k, v in policy.items() if default_policy[k] != v}
    if policy_diff:
        overrides["augment"] = policy_diff
    for name, value, default in (("preset", cfg.preset, "tiny"),
                                 ("alpha", cfg.alpha, 0.05),
                                 ("subsample_cap", cfg.subsample_cap, 32),
                                 ("seed", cfg.seed, 7)):
        if value != default:
            overrides[name] = value
    return overrides


def _write_resolved_config(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "seed": cfg.seed,
        "preset": cfg.preset,
        "alpha": cfg.alpha,
        "subsample_cap": cfg.subsample_cap,
        "out_dir": str(cfg.out_dir),
        "train": cfg.train.to_dict(),
        "augment": cfg.policy.to_dict(),
        "manifest": [{
            "name": e.name, "role": e.role, "dir": e.directory,
            "denoise": e.denoise, "composite": e.composite, "size": e.size,
        } for e in cfg.manifest],
        "overrides": _config_overrides(cfg),
    }
    (out / "config_resolved.yaml").write_text(yaml.safe_dump(resolved, sort_keys=True))


def _corpus_seed(root_seed: int, name: str, salt: int) -> list[int]:
    return [root_seed, zlib.crc32(name.encode("utf-8")), salt]


# ---------------------------------------------------------------------------
# prepared-corpus persistence

def save_prepared(corpus: ScriptCorpus, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{corpus.name}.npz"
    np.savez_compressed(
        path,
        pixels=np.stack([g.pixels for g in corpus.glyphs]).astype(np.float32),
        ids=np.array(corpus.glyph_ids()),
        role=np.array(corpus.role),
        splits=np.array(json.dumps(corpus.splits)),
    )
    return path


def load_prepared(directory: Path, name: str) -> ScriptCorpus:
    path = directory / f"{name}.npz"
    if not path.is_file():
        raise UserError(
            f"prepared corpus {name!r} not found at {path}; run `glyphsim prepare` first")
    data = np.load(path, allow_pickle=False)
    ids = [str(i) for i in data["ids"]]
    splits = json.loads(str(data["splits"]))
    glyphs = [GlyphImage(pixels=px.astype(np.float64), script=name, glyph_id=gid,
                         normalized=True)
              for px, gid in zip(data["pixels"], ids)]
    return ScriptCorpus(name=name, role=str(data["role"]), glyphs=glyphs,
                        splits=splits)


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.spec:
        raw = yaml.safe_load(Path(args.spec).read_text())
        specs = [SyntheticScriptSpec(**{**s, "angle_set": tuple(s["angle_set"])}
                                     if "angle_set" in s else s) for s in raw]
    else:
        specs = default_fixture_specs()
    families = generate_synthetic(specs, args.seed, out)
    config = {
        "seed": args.seed,
        "out_dir": str(out / "run"),
        "preset": "tiny",
        "train": {"max_epochs": 10, "batch_size": 16, "seeds": [42, 43, 44]},
        "manifest": [
            {"name": spec.family,
             "role": "target" if i == 0 else "comparison",
             "dir": str(Path(families[spec.family].directory).resolve())}
            for i, spec in enumerate(specs)
        ],
    }
    config_path = out / "synth_config.yaml"
    config_path.write_text(yaml.safe_dump(config, sort_keys=False))
    print(f"rendered {sum(s.n_glyphs for s in specs)} glyphs under {out}")
    print(f"starter config: {config_path}")
    return 0


def cmd_prepare(args) -> int:
    cfg = load_run_config(args.config)
    out = cfg.resolved_out_dir()
    _write_resolved_config(cfg, out)
    prepared_dir = out / "prepared"
    corpora: dict[str, ScriptCorpus] = {}
    report_lines = []
    for entry in cfg.manifest:
        if entry.composite is not None:
            continue
        corpus = load_corpus(entry, root=cfg.config_dir)
        corpora[entry.name] = corpus
        report_lines += corpus.load_report
    for entry in cfg.manifest:
        if entry.composite is None:
            continue
        try:
            sources = [(corpora[src], prop) for src, prop in entry.composite]
        except KeyError as exc:
            raise UserError(f"composite {entry.name!r} references unknown source {exc}")
        size = entry.size or sum(len(c) for c, _ in sources)
        rng = np.random.default_rng(_corpus_seed(cfg.seed, entry.name, 3))
        corpora[entry.name] = build_composite(
            sources, size, rng, name=entry.name, role=entry.role, policy=cfg.policy)
    for entry in cfg.manifest:
        corpus = corpora[entry.name]
        if entry.role == "target":
            corpus = split(corpus, rng_seed=_corpus_seed(cfg.seed, entry.name, 2))
        save_prepared(corpus, prepared_dir)
        print(f"prepared {entry.name}: {len(corpus)} glyphs"
              + (f" (splits {[len(v) for v in corpus.splits.values()]})"
                 if corpus.splits else ""))
    (prepared_dir / "load_report.txt").write_text(
        "\n".join(report_lines) + ("\n" if report_lines else ""))
    return 0


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise UserError(f"missing artifact {path}; run `glyphsim {producer}` first")
    return path


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    if cfg.preset == "paper" and not args.force:
        raise UserError(
            "the 'paper' preset trains ~100M parameters and is not laptop-sized; "
            "pass --force to proceed")
    out = cfg.resolved_out_dir()
    prepared_dir = _require(out / "prepared", "prepare")
    models_dir = out / "models"
    targets = cfg.targets()
    if args.target:
        targets = [e for e in targets if e.name == args.target]
        if not targets:
            raise UserError(f"no target-role manifest entry named {args.target!r}")
    if not targets:
        raise UserError("manifest has no target-role entries to train on")
    all_records = []
    ensembles_meta = {}
    for entry in targets:
        corpus = load_prepared(prepared_dir, entry.name)
        name = f"{entry.name}_ensemble"
        ensemble, records = train_ensemble(
            corpus, cfg.encoder_config(), cfg.train,
            run_dir=models_dir, name=name, policy=cfg.policy)
        all_records += records
        ensembles_meta[name] = {
            "target": entry.name,
            "paths": ensemble.paths,
            "seeds": ensemble.seeds,
            "partial": ensemble.partial,
        }
        figures.plot_loss_curves(
            {r.model_idx: (r.train_losses, r.val_losses)
             for r in records if not r.aborted},
            f"{name} training", models_dir / f"{name}_losses.png")
        for r in records:
            status = "aborted" if r.aborted else f"best epoch {r.best_epoch}"
            print(f"{name} model {r.model_idx} (seed {r.seed}): "
                  f"val {r.best_val_loss:.4f}, {status}")
    reports.write_training_summary(models_dir / "training_summary.csv", all_records)
    (models_dir / "ensembles.json").write_text(json.dumps(ensembles_meta, indent=2))
    return 0


def _load_ensembles(out: Path, allow_partial: bool) -> dict[str, dict]:
    meta_path = _require(out / "models" / "ensembles.json", "train")
    meta = json.loads(meta_path.read_text())
    loaded = {}
    for name, info in meta.items():
        if info["partial"] and not allow_partial:
            raise UserError(
                f"ensemble {name!r} is partial (a member diverged); "
                "pass --allow-partial to analyze it anyway")
        ensemble = load_ensemble(info["paths"], name=name, partial=info["partial"])
        loaded[name] = {"ensemble": ensemble, "target": info["target"]}
    return loaded


def cmd_embed(args) -> int:
    cfg = load_run_config(args.config)
    out = cfg.resolved_out_dir()
    prepared_dir = _require(out / "prepared", "prepare")
    ensembles = _load_ensembles(out, args.allow_partial)
    emb_root = out / "embeddings"
    for name, info in ensembles.items():
        ens_dir = emb_root / name
        for entry in cfg.manifest:
            corpus = load_prepared(prepared_dir, entry.name)
            sets = embed_all(info["ensemble"], corpus,
                             allow_partial=args.allow_partial)
            for emb in sets.values():
                emb.save(ens_dir)
        print(f"embedded {len(cfg.manifest)} corpora with {name} "
              f"({len(info['ensemble'])} members + consensus)")
    return 0


def _load_embeddings(out: Path, ensemble_name: str, script: str,
                     model_ids: list[str]) -> dict[str, EmbeddingSet]:
    directory = out / "embeddings" / ensemble_name
    _require(directory, "embed")
    sets = {}
    for mid in model_ids:
        try:
            sets[mid] = EmbeddingSet.load(directory, script, mid)
        except FileNotFoundError:
            raise UserError(
                f"missing embeddings for {script!r}/{mid} under {directory}; "
                "run `glyphsim embed` first")
    return sets


def _ensemble_model_ids(out: Path, name: str) -> list[str]:
    meta = json.loads((out / "models" / "ensembles.json").read_text())
    return [f"model_{i}" for i in range(len(meta[name]["paths"]))]


def cmd_analyze(args) -> int:
    cfg = load_run_config(args.config)
    out = cfg.resolved_out_dir()
    ensembles = _load_ensembles(out, args.allow_partial)
    analysis_dir = out / "analysis"
    analysis_dir.mkdir(parents=True, exist_ok=True)
    target_names = [info["target"] for info in ensembles.values()]
    comparison_names = [e.name for e in cfg.comparisons()]
    if not comparison_names:
        raise UserError("manifest has no comparison-role entries to analyze")

    member_dists = {}     # (comparison, model_id, target) -> distribution
    consensus_dists = {}  # (comparison, target) -> distribution
    summary_sections = {}
    for name, info in ensembles.items():
        target = info["target"]
        model_ids = _ensemble_model_ids(out, name)
        target_sets = _load_embeddings(out, name, target, model_ids + ["consensus"])
        for script in comparison_names:
            script_sets = _load_embeddings(out, name, script, model_ids + ["consensus"])
            for mid in model_ids:
                member_dists[(script, mid, target)] = analysis_mod.cross_script_similarity(
                    script_sets[mid], target_sets[mid])
            consensus_dists[(script, target)] = analysis_mod.cross_script_similarity(
                script_sets["consensus"], target_sets["consensus"])
        # per-member centroid similarity of every script to this target
        rows = []
        all_scripts = [e.name for e in cfg.manifest]
        for script in all_scripts:
            script_sets = _load_embeddings(out, name, script, model_ids)
            sims = []
            for mid in model_ids:
                c_s = script_sets[mid].matrix.mean(axis=0)
                c_t = target_sets[mid].matrix.mean(axis=0)
                sims.append(float(c_s @ c_t / (np.linalg.norm(c_s) * np.linalg.norm(c_t))))
            sims = np.asarray(sims)
            mean = float(sims.mean())
            std = float(sims.std(ddof=1)) if len(sims) > 1 else 0.0
            half = 1.96 * std / np.sqrt(len(sims))
            rows.append((script, mean, std, mean - half, mean + half))
        rows.sort(key=lambda r: -r[1])
        summary_sections[target] = rows

    # Mean similarity per (comparison, target): average of member means
    mean_cells = {}
    model_cells = {}
    for (script, mid, target), dist in member_dists.items():
        model_cells[(script, mid, target)] = dist.mean
    for script in comparison_names:
        for target in target_names:
            member_means = [model_cells[(script, mid, target)]
                            for (s, mid, t) in model_cells
                            if s == script and t == target]
            mean_cells[(script, target)] = float(np.mean(member_means))
    reports.write_mean_similarity(analysis_dir / "mean_similarity.csv",
                                  target_names, mean_cells)
    reports.write_model_similarity(analysis_dir / "model_similarity.csv",
                                   target_names, model_cells)
    consensus_cells = {(s, t): d.mean for (s, t), d in consensus_dists.items()}
    reports.write_mean_similarity(analysis_dir / "consensus_similarity.csv",
                                  target_names, consensus_cells)

    # Statistical battery over member-level distributions
    results, corrected = analysis_mod.run_stat_battery(
        member_dists, target_names, alpha=cfg.alpha,
        subsample_cap=cfg.subsample_cap, seed=cfg.seed)
    reports.write_stat_tests(analysis_dir / "stat_tests.csv", results)

    # Paired model-level tests and mean effect sizes per target pair
    pairs = [(target_names[i], target_names[j])
             for i in range(len(target_names)) for j in range(i + 1, len(target_names))]
    paired_results = []
    effect_cells = {}
    for script in comparison_names:
        for t1, t2 in pairs:
            mids = sorted({m for (s, m, t) in member_dists if s == script and t == t1})
            a = [model_cells[(script, m, t1)] for m in mids]
            b = [model_cells[(script, m, t2)] for m in mids]
            if len(a) >= 2:
                paired = analysis_mod.paired_model_t(a, b)
                ds = [analysis_mod.cohens_d(member_dists[(script, m, t1)],
                                            member_dists[(script, m, t2)]).d
                      for m in mids]
                mean_d = float(np.mean(ds))
                effect_cells[(script, f"{t1} vs. {t2}")] = (
                    mean_d, analysis_mod.effect_label(mean_d))
                paired_results.append(analysis_mod.StatTestResult(
                    comparison_script=script, model="paired",
                    test_name=f"{t1}_vs_{t2}",
                    mean1=float(np.mean(a)), mean2=float(np.mean(b)),
                    t_stat=paired.t, p_value=paired.p,
                    cohens_d=mean_d, effect_label=analysis_mod.effect_label(mean_d),
                    significant=bool(paired.p < corrected),
                    better_match=t1 if np.mean(a) >= np.mean(b) else t2,
                    degenerate=paired.degenerate))
    if paired_results:
        reports.write_stat_tests(analysis_dir / "paired_tests.csv", paired_results)
    if effect_cells:
        reports.write_effect_sizes(analysis_dir / "effect_sizes.csv",
                                   [f"{t1} vs. {t2}" for t1, t2 in pairs], effect_cells)

    reports.write_similarity_summary(analysis_dir / "similarity_summary.csv",
                                     summary_sections)

    # Leave-one-out stability: rank targets per comparison script; with a
    # single target, rank the comparison scripts against it instead.
    stability = {}
    mids = sorted({m for (_, m, _) in member_dists})
    if len(target_names) >= 2:
        for script in comparison_names:
            per_model = {m: {t: model_cells[(script, m, t)] for t in target_names}
                         for m in mids}
            report = analysis_mod.leave_one_out_stability(per_model)
            stability[script] = report
    elif len(comparison_names) >= 2 and len(mids) >= 2:
        target = target_names[0]
        per_model = {m: {s: model_cells[(s, m, target)] for s in comparison_names}
                     for m in mids}
        stability[target] = analysis_mod.leave_one_out_stability(per_model)
    (analysis_dir / "stability.json").write_text(json.dumps(
        {key: {
            "stable": rep.stable, "full_top": rep.full_top,
            "full_ranking": rep.full_ranking,
            "leave_out_top": rep.leave_out_top,
            "dissenting_models": rep.dissenting_models,
        } for key, rep in stability.items()}, indent=2, sort_keys=True) + "\n")

    # Distribution figures per ensemble (consensus level)
    for name, info in ensembles.items():
        target = info["target"]
        values = {script: consensus_dists[(script, target)].values
                  for script in comparison_names}
        figures.plot_similarity_distributions(
            values, f"{name} cosine similarity",
            out / "figures" / f"{name}_similarity.png")
    n_sig = sum(r.significant for r in results)
    print(f"analyzed {len(results)} member-level tests "
          f"({n_sig} significant at corrected alpha {corrected:.6g})")
    return 0


def cmd_cluster(args) -> int:
    cfg = load_run_config(args.config)
    out = cfg.resolved_out_dir()
    ensembles = _load_ensembles(out, args.allow_partial)
    all_scripts = [e.name for e in cfg.manifest]
    for name in ensembles:
        sets = [_load_embeddings(out, name, script, ["consensus"])["consensus"]
                for script in all_scripts]
        centroids = script_centroids(sets)
        cluster_dir = out / "cluster" / name
        for linkage in LINKAGES:
            dendro = hierarchical_cluster(centroids, linkage)
            figures.plot_dendrogram(dendro, f"{name} ({linkage} linkage)",
                                    cluster_dir / f"{linkage}_dendrogram.png")
            grid = similarity_heatmap(centroids, linkage)
            figures.plot_heatmap(grid, f"{name} ({linkage} order)",
                                 cluster_dir / f"{linkage}_heatmap.png")
        print(f"clustered {len(centroids)} scripts for {name} "
              f"({', '.join(LINKAGES)})")
    return 0


def cmd_project(args) -> int:
    cfg = load_run_config(args.config)
    out = cfg.resolved_out_dir()
    ensembles = _load_ensembles(out, args.allow_partial)
    all_scripts = [e.name for e in cfg.manifest]
    for name in ensembles:
        sets = [_load_embeddings(out, name, script, ["consensus"])["consensus"]
                for script in all_scripts]
        matrix = np.vstack([s.matrix for s in sets])
        labels = [s.script for s in sets for _ in s.ids]
        ids = [gid for s in sets for gid in s.ids]
        proj_dir = out / "projections"
        pca = pca_project(matrix, dims=2)
        figures.plot_projection(pca, labels, ids, f"{name} PCA",
                                proj_dir / f"{name}_pca.png")
        n = matrix.shape[0]
        perplexity = cfg.perplexity
        if perplexity is None:
            perplexity = min(30.0, max(2.0, (n - 2) / 3.0))
        tsne = tsne_project(matrix, perplexity=perplexity, seed=cfg.seed)
        figures.plot_projection(tsne, labels, ids, f"{name} t-SNE",
                                proj_dir / f"{name}_tsne.png")
        print(f"projected {n} embeddings for {name} "
              f"(pca variance {pca.total_explained_variance * 100:.2f}%, "
              f"tsne perplexity {perplexity:g})")
    return 0


def cmd_gradcam(args) -> int:
    cfg = load_run_config(args.config)
    out = cfg.resolved_out_dir()
    prepared_dir = _require(out / "prepared", "prepare")
    ensembles = _load_ensembles(out, args.allow_partial)
    from .corpus import NORM_MEAN, NORM_STD
    for name, info in ensembles.items():
        member = info["ensemble"].members[0]
        cam_dir = out / "gradcam" / name
        for entry in cfg.manifest:
            corpus = load_prepared(prepared_dir, entry.name)
            for glyph in corpus.glyphs[:args.count]:
                gray = glyph.pixels[:, :, 0] * NORM_STD[0] + NORM_MEAN[0]
                for pathway in ("cnn", "swin"):
                    amap = grad_cam(member, glyph.pixels, pathway,
                                    glyph_id=glyph.glyph_id)
                    safe_id = glyph.glyph_id.replace("/", "_")
                    figures.plot_gradcam_overlay(
                        gray, amap.heat, f"{pathway} pathway",
                        cam_dir / f"{entry.name}_{safe_id}_{pathway}.png")
        print(f"wrote attention maps for {name} (model_0, both pathways)")
    return 0


def cmd_report(args) -> int:
    cfg = load_run_config(args.config)
    out = cfg.resolved_out_dir()
    artifacts = []
    required = [
        ("config", out / "config_resolved.yaml", "prepare"),
        ("training_summary", out / "models" / "training_summary.csv", "train"),
        ("mean_similarity", out / "analysis" / "mean_similarity.csv", "analyze"),
        ("model_similarity", out / "analysis" / "model_similarity.csv", "analyze"),
        ("consensus_similarity", out / "analysis" / "consensus_similarity.csv", "analyze"),
        ("stat_tests", out / "analysis" / "stat_tests.csv", "analyze"),
        ("similarity_summary", out / "analysis" / "similarity_summary.csv", "analyze"),
        ("stability", out / "analysis" / "stability.json", "analyze"),
    ]
    for kind, path, producer in required:
        _require(path, producer)
        artifacts.append({"kind": kind, "path": str(path.relative_to(out))})
    optional_globs = [
        ("effect_sizes", "analysis/effect_sizes.csv"),
        ("paired_tests", "analysis/paired_tests.csv"),
        ("figure", "figures/*.png"),
        ("loss_curves", "models/*_losses.png"),
        ("dendrogram", "cluster/*/*_dendrogram.png"),
        ("dendrogram_data", "cluster/*/*_dendrogram.json"),
        ("heatmap", "cluster/*/*_heatmap.png"),
        ("heatmap_data", "cluster/*/*_heatmap.csv"),
        ("projection", "projections/*.png"),
        ("projection_data", "projections/*.csv"),
        ("gradcam", "gradcam/*/*.png"),
    ]
    for kind, pattern in optional_globs:
        for path in sorted(out.glob(pattern)):
            artifacts.append({"kind": kind, "path": str(path.relative_to(out))})
    index_path = reports.write_index(out / "report" / "index.json", artifacts)
    print(f"indexed {len(artifacts)} artifacts -> {index_path}")
    return 0


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage mistakes are user errors, not internal
        self.print_usage(sys.stderr)
        raise UserError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glyphsim",
                     description="Glyph corpus visual-similarity pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic glyph fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--spec", help="YAML list of synthetic family specs")
    p.set_defaults(func=cmd_synth)

    for name, func, extras in (
            ("prepare", cmd_prepare, ()),
            ("train", cmd_train, ("force", "target")),
            ("embed", cmd_embed, ("allow_partial",)),
            ("analyze", cmd_analyze, ("allow_partial",)),
            ("cluster", cmd_cluster, ("allow_partial",)),
            ("project", cmd_project, ("allow_partial",)),
            ("gradcam", cmd_gradcam, ("allow_partial", "count")),
            ("report", cmd_report, ())):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        if "force" in extras:
            p.add_argument("--force", action="store_true",
                           help="override the paper-preset resource guard")
        if "target" in extras:
            p.add_argument("--target", help="train only this target script")
        if "allow_partial" in extras:
            p.add_argument("--allow-partial", action="store_true", dest="allow_partial")
        if "count" in extras:
            p.add_argument("--count", type=int, default=3,
                           help="glyphs per script to explain")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
