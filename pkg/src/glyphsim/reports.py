"""Delimited report writers.

Column names reproduce the published table schemas byte-for-byte; values are
formatted with fixed precision so identical inputs yield identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

from .analysis import StatTestResult
from .trainer import TrainRecord

TRAINING_SUMMARY_HEADER = ["model_idx", "seed", "val_loss", "epoch", "model_path"]
STAT_TESTS_HEADER = [
    "Comparison Script", "Model", "Test", "Mean 1", "Mean 2", "Difference",
    "T-statistic", "P-value", "Cohen's d", "Effect Size", "Significant",
    "Better Match",
]
COMPARISON_COLUMN = "Comparison Script"
MODEL_COLUMN = "Model"


def write_delimited(path: str | Path, header: list[str], rows: list[list[str]],
                    delimiter: str = ",") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [delimiter.join(header)]
    lines += [delimiter.join(str(cell) for cell in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _fnum(x: float, digits: int = 6) -> str:
    return f"{x:.{digits}f}"


def write_training_summary(path: str | Path, records: list[TrainRecord]) -> Path:
    rows = [[r.model_idx, r.seed, repr(float(r.best_val_loss)), r.best_epoch,
             r.model_path] for r in records]
    return write_delimited(path, TRAINING_SUMMARY_HEADER, rows)


def write_mean_similarity(path: str | Path, targets: list[str],
                          cells: dict[tuple[str, str], float]) -> Path:
    """Mean-similarity matrix: one row per comparison script, one column per target."""
    header = [COMPARISON_COLUMN] + list(targets)
    comparisons = sorted({s for s, _ in cells})
    rows = [[script] + [_fnum(cells[(script, t)]) for t in targets]
            for script in comparisons]
    return write_delimited(path, header, rows)


def write_model_similarity(path: str | Path, targets: list[str],
                           cells: dict[tuple[str, str, str], float]) -> Path:
    """Per-model similarity matrix keyed by (comparison script, model, target)."""
    header = [COMPARISON_COLUMN, MODEL_COLUMN] + list(targets)
    combos = sorted({(s, m) for s, m, _ in cells})
    rows = [[script, model] + [_fnum(cells[(script, model, t)]) for t in targets]
            for script, model in combos]
    return write_delimited(path, header, rows)


def write_effect_sizes(path: str | Path, pair_names: list[str],
                       cells: dict[tuple[str, str], tuple[float, str]]) -> Path:
    """Mean effect sizes per target pair, formatted `d (label)`."""
    header = [COMPARISON_COLUMN] + list(pair_names)
    comparisons = sorted({s for s, _ in cells})
    rows = []
    for script in comparisons:
        row = [script]
        for pair in pair_names:
            d, label = cells[(script, pair)]
            row.append(f"{d:.2f} ({label})")
        rows.append(row)
    return write_delimited(path, header, rows)


def stat_test_row(result: StatTestResult) -> list[str]:
    return [
        result.comparison_script,
        result.model,
        result.test_name,
        _fnum(result.mean1),
        _fnum(result.mean2),
        _fnum(result.difference),
        _fnum(result.t_stat, 4),
        f"{result.p_value:.6g}",
        _fnum(result.cohens_d, 4),
        result.effect_label,
        "Yes" if result.significant else "No",
        result.better_match,
    ]


def write_stat_tests(path: str | Path, results: list[StatTestResult]) -> Path:
    return write_delimited(path, STAT_TESTS_HEADER, [stat_test_row(r) for r in results])


SUMMARY_HEADER = ["Script", "Mean Similarity", "Std Dev", "95% CI Lower", "95% CI Upper"]


def write_similarity_summary(path: str | Path,
                             sections: dict[str, list[tuple[str, float, float, float, float]]]) -> Path:
    """Per-target sections of (script, mean, std, ci_lo, ci_hi) rows.

    No timestamp line: reruns on unchanged inputs must be byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["Script Similarity Analysis Summary"]
    for target, rows in sections.items():
        lines.append(f"{target} Similarities")
        lines.append(",".join(SUMMARY_HEADER))
        for script, mean, std, lo, hi in rows:
            lines.append(",".join([script, _fnum(mean, 4), _fnum(std, 4),
                                   _fnum(lo, 4), _fnum(hi, 4)]))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_index(path: str | Path, artifacts: list[dict]) -> Path:
    """Machine-readable run index: one entry per artifact with kind and path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"artifacts": artifacts}, indent=2, sort_keys=True) + "\n")
    return path
