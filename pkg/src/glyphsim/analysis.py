"""Cross-script similarity distributions and the hypothesis-test battery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats as scipy_stats

from .ensemble import EmbeddingSet

SUBSAMPLE_THRESHOLD = 1000
SUBSAMPLE_CAP = 32  # ~ sqrt(1000)
EFFECT_LABELS = ((0.2, "negligible"), (0.5, "small"), (0.8, "medium"))


class AnalysisError(ValueError):
    pass


@dataclass
class SimilarityDistribution:
    script_a: str
    script_b: str
    model_id: str
    values: np.ndarray
    n: int = 0
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.n = int(self.values.size)
        self.mean = float(self.values.mean()) if self.n else math.nan
        self.std = float(self.values.std(ddof=1)) if self.n > 1 else 0.0


def _normalized_rows(emb: EmbeddingSet) -> np.ndarray:
    norms = np.linalg.norm(emb.matrix, axis=1)
    zero = np.where(norms == 0)[0]
    if zero.size:
        raise AnalysisError(
            f"zero-norm embedding for glyph {emb.ids[zero[0]]!r} in {emb.script}")
    return emb.matrix / norms[:, None]


def cross_script_similarity(emb_a: EmbeddingSet, emb_b: EmbeddingSet) -> SimilarityDistribution:
    """All |A| x |B| cosine similarities between two embedding sets.

    Comparing a set with itself excludes the same-glyph pairs from the
    distribution (their cosine is 1 by construction).
    """
    if len(emb_a) == 0 or len(emb_b) == 0:
        raise AnalysisError("empty embedding set")
    if emb_a.matrix.shape[1] != emb_b.matrix.shape[1]:
        raise AnalysisError("embedding dimensions differ")
    matrix = _normalized_rows(emb_a) @ _normalized_rows(emb_b).T
    same_set = (emb_a.script == emb_b.script and emb_a.model_id == emb_b.model_id
                and emb_a.ids == emb_b.ids)
    if same_set:
        off_diag = ~np.eye(len(emb_a), dtype=bool)
        values = matrix[off_diag]
    else:
        values = matrix.ravel()
    return SimilarityDistribution(
        script_a=emb_a.script, script_b=emb_b.script,
        model_id=emb_a.model_id, values=values)


def similarity_matrix(emb_a: EmbeddingSet, emb_b: EmbeddingSet) -> np.ndarray:
    """The full cosine matrix; the diagonal of a self-comparison is 1."""
    matrix = _normalized_rows(emb_a) @ _normalized_rows(emb_b).T
    if emb_a.script == emb_b.script and emb_a.ids == emb_b.ids:
        np.fill_diagonal(matrix, 1.0)
    return matrix


class WelchResult(NamedTuple):
    t: float
    p: float
    df: float
    degenerate: bool


def _maybe_subsample(values: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    if values.size > SUBSAMPLE_THRESHOLD:
        idx = rng.choice(values.size, size=cap, replace=False)
        return values[np.sort(idx)]
    return values


def welch_t(dist_a, dist_b, subsample_cap: int = SUBSAMPLE_CAP,
            seed: int = 0) -> WelchResult:
    """Welch's two-sample t-test with Welch-Satterthwaite degrees of freedom.

    Distributions larger than 1000 values are subsampled to `subsample_cap`
    values without replacement under a fixed analysis seed.
    """
    a = np.asarray(getattr(dist_a, "values", dist_a), dtype=np.float64)
    b = np.asarray(getattr(dist_b, "values", dist_b), dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise AnalysisError("welch_t needs at least 2 values per distribution")
    rng = np.random.default_rng(seed)
    a = _maybe_subsample(a, subsample_cap, rng)
    b = _maybe_subsample(b, subsample_cap, rng)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    na, nb = a.size, b.size
    se_sq = va / na + vb / nb
    diff = a.mean() - b.mean()
    if se_sq == 0:
        if diff == 0:
            return WelchResult(t=0.0, p=1.0, df=float(na + nb - 2), degenerate=True)
        return WelchResult(t=math.copysign(math.inf, diff), p=0.0,
                           df=float(na + nb - 2), degenerate=True)
    t = diff / math.sqrt(se_sq)
    df = se_sq ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = 2.0 * float(scipy_stats.t.sf(abs(t), df))
    return WelchResult(t=float(t), p=p, df=float(df), degenerate=False)


class PairedResult(NamedTuple):
    t: float
    p: float
    df: float
    mean_diff: float
    degenerate: bool


def paired_model_t(means_a, means_b) -> PairedResult:
    """Paired t-test over per-model means: t = dbar / (s_d / sqrt(N))."""
    a = np.asarray(means_a, dtype=np.float64)
    b = np.asarray(means_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise AnalysisError("paired_model_t needs two equal-length 1-D lists")
    n = a.size
    if n < 2:
        raise AnalysisError("paired_model_t needs at least 2 paired models")
    diffs = a - b
    dbar = math.fsum(diffs) / n
    s_d = diffs.std(ddof=1)
    if s_d == 0:
        if dbar == 0:
            return PairedResult(t=0.0, p=1.0, df=float(n - 1), mean_diff=dbar,
                                degenerate=True)
        return PairedResult(t=math.copysign(math.inf, dbar), p=0.0,
                            df=float(n - 1), mean_diff=dbar, degenerate=True)
    t = dbar / (s_d / math.sqrt(n))
    p = 2.0 * float(scipy_stats.t.sf(abs(t), n - 1))
    return PairedResult(t=float(t), p=p, df=float(n - 1), mean_diff=dbar,
                        degenerate=False)


class EffectSize(NamedTuple):
    d: float
    label: str
    degenerate: bool


def effect_label(d: float) -> str:
    magnitude = abs(d)
    for threshold, label in EFFECT_LABELS:
        if magnitude < threshold:
            return label
    return "large"


def cohens_d(dist_a, dist_b) -> EffectSize:
    """Standardized mean difference over the pooled standard deviation."""
    a = np.asarray(getattr(dist_a, "values", dist_a), dtype=np.float64)
    b = np.asarray(getattr(dist_b, "values", dist_b), dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise AnalysisError("cohens_d needs at least 2 values per distribution")
    pooled_var = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2)
    if pooled_var == 0:
        return EffectSize(d=math.nan, label="undefined", degenerate=True)
    d = (a.mean() - b.mean()) / math.sqrt(pooled_var)
    return EffectSize(d=float(d), label=effect_label(d), degenerate=False)


def bonferroni(alpha: float, n_tests: int) -> float:
    """Corrected per-test significance level alpha / n."""
    if n_tests < 1:
        raise AnalysisError("n_tests must be >= 1")
    return alpha / n_tests


@dataclass
class StatTestResult:
    comparison_script: str
    model: str
    test_name: str
    mean1: float
    mean2: float
    t_stat: float
    p_value: float
    cohens_d: float
    effect_label: str
    significant: bool
    better_match: str
    degenerate: bool = False

    @property
    def difference(self) -> float:
        return self.mean1 - self.mean2


@dataclass
class StabilityReport:
    stable: bool
    full_top: str
    full_ranking: list[str]
    leave_out_top: dict[str, str]
    dissenting_models: list[str] = field(default_factory=list)


def leave_one_out_stability(per_model_means: dict[str, dict[str, float]]) -> StabilityReport:
    """Does dropping any single model change which target ranks first?

    `per_model_means` maps model id to {target: mean similarity}. A model is
    dissenting when its own top target differs from the full-ensemble top.
    """
    models = sorted(per_model_means)
    if len(models) < 2:
        raise AnalysisError("leave_one_out_stability needs >= 2 models")
    targets = sorted(per_model_means[models[0]])
    for m in models:
        if sorted(per_model_means[m]) != targets:
            raise AnalysisError("models disagree on the target set")

    def ranking(model_subset):
        means = {t: np.mean([per_model_means[m][t] for m in model_subset])
                 for t in targets}
        return sorted(targets, key=lambda t: (-means[t], t))

    full_ranking = ranking(models)
    full_top = full_ranking[0]
    leave_out_top = {}
    stable = True
    for left_out in models:
        rest = [m for m in models if m != left_out]
        top = ranking(rest)[0]
        leave_out_top[left_out] = top
        if top != full_top:
            stable = False
    dissenting = [m for m in models if ranking([m])[0] != full_top]
    return StabilityReport(stable=stable, full_top=full_top,
                           full_ranking=full_ranking, leave_out_top=leave_out_top,
                           dissenting_models=dissenting)


def run_stat_battery(
    distributions: dict[tuple[str, str, str], SimilarityDistribution],
    targets: list[str],
    alpha: float = 0.05,
    subsample_cap: int = SUBSAMPLE_CAP,
    seed: int = 0,
) -> tuple[list[StatTestResult], float]:
    """Welch + effect size for every target pair, per comparison script and model.

    `distributions` is keyed by (comparison_script, model_id, target). The
    Bonferroni correction uses the number of tests actually executed; every
    result's `significant` flag is judged against that corrected level.
    """
    combos = sorted({(cs, m) for cs, m, _ in distributions})
    pairs = [(targets[i], targets[j])
             for i in range(len(targets)) for j in range(i + 1, len(targets))]
    planned = []
    for comparison_script, model in combos:
        for t1, t2 in pairs:
            key1 = (comparison_script, model, t1)
            key2 = (comparison_script, model, t2)
            if key1 in distributions and key2 in distributions:
                planned.append((comparison_script, model, t1, t2))
    if not planned:
        return [], alpha
    corrected = bonferroni(alpha, len(planned))
    results = []
    for comparison_script, model, t1, t2 in planned:
        da = distributions[(comparison_script, model, t1)]
        db = distributions[(comparison_script, model, t2)]
        welch = welch_t(da, db, subsample_cap=subsample_cap, seed=seed)
        effect = cohens_d(da, db)
        results.append(StatTestResult(
            comparison_script=comparison_script, model=model,
            test_name=f"{t1}_vs_{t2}",
            mean1=da.mean, mean2=db.mean,
            t_stat=welch.t, p_value=welch.p,
            cohens_d=effect.d, effect_label=effect.label,
            significant=bool(welch.p < corrected),
            better_match=t1 if da.mean >= db.mean else t2,
            degenerate=welch.degenerate or effect.degenerate))
    return results, corrected
