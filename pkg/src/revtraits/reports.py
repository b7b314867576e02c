"""Pipeline orchestration and report emission.

Bridges the persistence layer and the analysis modules: runs extraction
and judging over a corpus, assembles the per-physician trait matrix, and
writes every report the CLI exposes as delimited files (descriptives,
correlations, gender and specialty comparisons, regression, clustering,
leaderboards, and the per-figure plot-data tables).
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import clustering, corpus, judge, metrics, stats
from .errors import ArgumentError, MetricError, StageError, StatsError
from .extraction import ExtractionTask, extract
from .gateway import ChatGateway
from .schema import (
    ALL_TRAITS,
    BIG_FIVE,
    BIGFIVE,
    SUBFIVE,
    PhysicianTraitProfile,
    TraitAssessment,
    assemble_profile,
    framework,
    normalize_score,
    serialize_trait,
)
from .store import Store

# column order for the ten-trait analysis matrix; Neuroticism appears
# reverse-coded as Emotional Stability
ANALYSIS_TRAITS = (
    "Openness", "Conscientiousness", "Extraversion", "Agreeableness",
    "Emotional Stability", "IQC", "PCC", "SPS", "SCO", "STS",
)


# ---------------------------------------------------------------------------
# extraction / judging runs
# ---------------------------------------------------------------------------

def run_extraction(store: Store, gateway: ChatGateway, model_id: str,
                   framework_kinds: Sequence[str], physician_ids: Sequence[str],
                   attempt_limit: int = 3) -> int:
    """Extract and persist assessments; returns the number of assessments stored."""
    stored = 0
    for kind in framework_kinds:
        fw = framework(kind)
        for pid in physician_ids:
            record = corpus.load_record(store, pid)
            profile = corpus.build_profile(record)
            task = ExtractionTask(
                physician_id=pid, framework=fw, profile=profile,
                model_id=model_id, attempt_limit=attempt_limit,
            )
            result = extract(task, gateway)
            store.save_extraction(
                pid, fw.kind, model_id, result.raw_text, result.attempts,
                result.attribution.ok, "\n".join(result.attribution.notes),
                result.assessments,
            )
            stored += len(result.assessments)
    return stored


def _stored_assessment(row) -> TraitAssessment:
    return TraitAssessment(
        name=row["trait"], score_label=row["score_label"], evidence=row["evidence"],
        consistency=row["consistency"], sufficiency=row["sufficiency"],
    )


def run_judging(store: Store, gateway: ChatGateway, judge_model: str,
                model_ids: Sequence[str], physician_ids: Sequence[str],
                seed: int = 0) -> int:
    """Judge every (physician, trait) across the given models; returns verdict count."""
    if not model_ids:
        raise ArgumentError("need at least one model to judge")
    count = 0
    for pid in physician_ids:
        record = corpus.load_record(store, pid)
        profile = corpus.build_profile(record)
        for trait in ALL_TRAITS:
            outputs = {}
            for model_id in model_ids:
                row = store.extraction_trait(pid, model_id, trait)
                if row is None:
                    raise StageError(
                        f"no extraction for physician {pid!r} trait {trait!r} model "
                        f"{model_id!r}; run `extract` for that model first"
                    )
                outputs[model_id] = _stored_assessment(row)
            # blinding: per-(physician, trait) deterministic presentation order
            order = list(model_ids)
            random.Random(f"{seed}:{pid}:{trait}").shuffle(order)
            blinded = [serialize_trait(outputs[m]) for m in order]
            system, user = judge.build_judge_prompt(
                profile.physician_name, profile.body, trait, blinded
            )
            from .gateway import ChatRequest

            response = gateway.send(ChatRequest(
                model_id=judge_model, system_message=system, user_message=user,
            ))
            parsed = judge.parse_verdict(response.text, trait)
            blinding_table = dict(zip(judge.anon_labels(len(order)), order))
            verdict = judge.resolve_labels(parsed, blinding_table, pid, trait)
            scores = [normalize_score(outputs[m].score_label) for m in model_ids]
            try:
                agreement = judge.computed_agreement(scores)
            except MetricError:
                agreement = None
            store.save_verdict(
                pid, trait, judge_model, response.text, verdict.initial_assessment,
                verdict.consensus_label, verdict.cross_model_agreement,
                verdict.reliability, agreement, verdict.per_model,
            )
            count += 1
    return count


# ---------------------------------------------------------------------------
# leaderboards
# ---------------------------------------------------------------------------

@dataclass
class LeaderboardRow:
    model_id: str
    mae: float
    rmse: float
    high_rate: Optional[float]
    low_rate: Optional[float]
    n: int


def judge_reference_scores(store: Store, judge_model: str) -> dict[tuple[str, str], Optional[float]]:
    rows = store.judge_runs(judge_model)
    if not rows:
        raise StageError(
            f"no verdicts stored for judge {judge_model!r}; run `judge` first"
        )
    return {
        (r["physician_id"], r["trait"]): normalize_score(r["initial_score"])
        for r in rows
    }


def model_leaderboard(store: Store, reference: dict[tuple[str, str], Optional[float]],
                      model_ids: Sequence[str]) -> list[LeaderboardRow]:
    """Score each model against the reference; rows sorted by MAE then model id."""
    rows = []
    for model_id in model_ids:
        ref, pred = [], []
        for (pid, trait), y in reference.items():
            row = store.extraction_trait(pid, model_id, trait)
            if row is None:
                continue
            ref.append(y)
            pred.append(normalize_score(row["score_label"]))
        pairs = metrics.paired(ref, pred)
        hl = metrics.high_low_agreement(pairs)
        rows.append(LeaderboardRow(
            model_id=model_id,
            mae=metrics.mae(pairs),
            rmse=metrics.rmse(pairs),
            high_rate=hl.high_rate,
            low_rate=hl.low_rate,
            n=len(pairs),
        ))
    rows.sort(key=lambda r: (r.mae, r.model_id))
    return rows


def human_reference_scores(store: Store) -> dict[tuple[str, str], Optional[float]]:
    """Step-1 human scores keyed by (physician, trait); duplicates averaged."""
    sums: dict[tuple[str, str], list[float]] = {}
    seen = False
    for task in store.completed_tasks():
        payload = store.rating(task["task_id"], 1)
        if payload is None:
            continue
        seen = True
        value = normalize_score(payload["score_label"])
        if value is None:
            continue
        sums.setdefault((task["physician_id"], task["trait"]), []).append(value)
    if not seen:
        raise StageError("no completed annotation tasks; nothing to reference")
    return {key: sum(vals) / len(vals) for key, vals in sums.items()}


def write_leaderboard(rows: list[LeaderboardRow], path: str | Path) -> None:
    """Leaderboard CSV: model, mae, rmse, high, low (percent columns)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "mae", "rmse", "high", "low"])
        for row in rows:
            writer.writerow([
                row.model_id,
                f"{row.mae:.4f}",
                f"{row.rmse:.4f}",
                "" if row.high_rate is None else f"{100 * row.high_rate:.2f}%",
                "" if row.low_rate is None else f"{100 * row.low_rate:.2f}%",
            ])


# ---------------------------------------------------------------------------
# trait matrix
# ---------------------------------------------------------------------------

@dataclass
class TraitMatrix:
    physician_ids: list[str]
    columns: tuple[str, ...]
    data: np.ndarray                # NaN marks missing
    satisfaction: np.ndarray        # NaN when absent
    gender: list[Optional[str]]
    specialty: list[Optional[str]]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def load_profiles(store: Store, model_id: str) -> dict[str, PhysicianTraitProfile]:
    profiles = {}
    pids = sorted(
        set(store.extracted_physicians(model_id, "bigfive"))
        & set(store.extracted_physicians(model_id, "subfive"))
    )
    for pid in pids:
        bigfive = [_stored_assessment(r)
                   for r in store.extraction_traits_for(pid, "bigfive", model_id)]
        subfive = [_stored_assessment(r)
                   for r in store.extraction_traits_for(pid, "subfive", model_id)]
        profiles[pid] = assemble_profile(pid, bigfive, subfive)
    return profiles


def build_trait_matrix(store: Store, model_id: str) -> TraitMatrix:
    profiles = load_profiles(store, model_id)
    if not profiles:
        raise StageError(
            f"no complete extractions for model {model_id!r}; run `extract` with "
            "--framework both first"
        )
    pids = sorted(profiles)
    data = np.full((len(pids), len(ANALYSIS_TRAITS)), np.nan)
    satisfaction = np.full(len(pids), np.nan)
    gender: list[Optional[str]] = []
    specialty: list[Optional[str]] = []
    for i, pid in enumerate(pids):
        profile = profiles[pid]
        for j, trait in enumerate(ANALYSIS_TRAITS):
            if trait == "Emotional Stability":
                value = profile.emotional_stability
            else:
                value = profile.traits[trait].score
            if value is not None:
                data[i, j] = value
        row = store.get_physician(pid)
        if row["overall_rating"] is not None:
            satisfaction[i] = row["overall_rating"]
        gender.append(row["gender"])
        specialty.append(row["specialty"])
    return TraitMatrix(
        physician_ids=pids, columns=ANALYSIS_TRAITS, data=data,
        satisfaction=satisfaction, gender=gender, specialty=specialty,
    )


# ---------------------------------------------------------------------------
# analysis reports
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_profiles(store: Store, model_id: str, path: str | Path) -> int:
    """Normalized profile table: 10 scores, 10+10 quality columns, emotional stability."""
    profiles = load_profiles(store, model_id)
    if not profiles:
        raise StageError(
            f"no complete extractions for model {model_id!r}; run `extract` with "
            "--framework both first"
        )
    header = (
        ["physician_id"]
        + [f"{t}_score" for t in ALL_TRAITS]
        + [f"{t}_consistency" for t in ALL_TRAITS]
        + [f"{t}_sufficiency" for t in ALL_TRAITS]
        + ["emotional_stability"]
    )

    def fmt(value: Optional[float]) -> str:
        return "" if value is None else f"{value:g}"

    rows = []
    for pid in sorted(profiles):
        profile = profiles[pid]
        rows.append(
            [pid]
            + [fmt(profile.traits[t].score) for t in ALL_TRAITS]
            + [fmt(profile.traits[t].consistency) for t in ALL_TRAITS]
            + [fmt(profile.traits[t].sufficiency) for t in ALL_TRAITS]
            + [fmt(profile.emotional_stability)]
        )
    _write_csv(Path(path), header, rows)
    return len(rows)


def write_descriptives(matrix: TraitMatrix, out_dir: Path, seed: int = 0) -> Path:
    rows = []
    for trait in matrix.columns:
        column = matrix.column(trait)
        try:
            d = stats.describe(column)
        except StatsError:
            continue
        ci_low, ci_high = stats.bootstrap_ci(
            column, lambda a: float(np.mean(a)), seed=seed
        )
        rows.append([
            trait, d.n, f"{d.mean:.6f}", f"{d.sd:.6f}",
            "" if d.skewness is None else f"{d.skewness:.6f}",
            f"{ci_low:.6f}", f"{ci_high:.6f}",
        ])
    path = out_dir / "descriptives.csv"
    _write_csv(path, ["trait", "n", "mean", "sd", "skewness",
                      "mean_ci_low", "mean_ci_high"], rows)
    return path


def write_correlations(matrix: TraitMatrix, out_dir: Path) -> Path:
    cells = stats.correlation_matrix(matrix.data, matrix.columns)
    rows = []
    for i, a in enumerate(matrix.columns):
        for b in matrix.columns[i + 1:]:
            cell = cells[(a, b)]
            if cell is None:
                rows.append([a, b, "", "", "", "", "", ""])
            else:
                rows.append([
                    a, b, f"{cell.r:.6f}", f"{cell.ci_low:.6f}", f"{cell.ci_high:.6f}",
                    f"{cell.p:.6g}", cell.n, int(cell.significant),
                ])
    path = out_dir / "correlations.csv"
    _write_csv(path, ["trait_a", "trait_b", "r", "ci_low", "ci_high", "p", "n",
                      "significant_after_bonferroni"], rows)
    return path


def write_gender_comparison(matrix: TraitMatrix, out_dir: Path, seed: int = 0) -> Path:
    gender = np.array([g if g is not None else "" for g in matrix.gender])
    rows = []
    for trait in matrix.columns:
        column = matrix.column(trait)
        male = column[(gender == "male") & ~np.isnan(column)]
        female = column[(gender == "female") & ~np.isnan(column)]
        if male.size < 2 or female.size < 2:
            continue
        try:
            welch = stats.welch_t(male, female)
            d = stats.cohens_d(male, female)
        except StatsError:
            continue
        # bootstrap CI over the standardized difference, resampling both groups
        rng = np.random.default_rng(seed)
        boots = []
        for _ in range(1000):
            bm = male[rng.integers(0, male.size, male.size)]
            bf = female[rng.integers(0, female.size, female.size)]
            try:
                boots.append(stats.cohens_d(bm, bf))
            except StatsError:
                continue
        ci_low, ci_high = (np.quantile(boots, 0.025), np.quantile(boots, 0.975)) \
            if boots else (float("nan"), float("nan"))
        rows.append([
            trait, male.size, female.size, f"{male.mean():.6f}", f"{female.mean():.6f}",
            f"{welch.t:.6f}", f"{welch.df:.4f}", f"{welch.p:.6g}", f"{d:.6f}",
            f"{ci_low:.6f}", f"{ci_high:.6f}",
        ])
    path = out_dir / "gender_comparison.csv"
    _write_csv(path, ["trait", "n_male", "n_female", "mean_male", "mean_female",
                      "t", "df", "p", "cohens_d", "d_ci_low", "d_ci_high"], rows)
    return path


def write_specialty_comparison(matrix: TraitMatrix, out_dir: Path,
                               min_group: int = 2) -> Path:
    specialties = sorted({s for s in matrix.specialty if s})
    rows = []
    for trait in matrix.columns:
        column = matrix.column(trait)
        groups = []
        for s in specialties:
            mask = np.array([sp == s for sp in matrix.specialty]) & ~np.isnan(column)
            values = column[mask]
            if values.size >= min_group:
                groups.append(values)
        if len(groups) < 2:
            continue
        try:
            anova = stats.one_way_anova(groups)
            kw = stats.kruskal_wallis(groups)
        except StatsError:
            continue
        rows.append([
            trait, len(groups), f"{anova.f:.6f}", anova.df_between, anova.df_within,
            f"{anova.p:.6g}", f"{kw.h:.6f}", kw.df, f"{kw.p:.6g}",
        ])
    path = out_dir / "specialty_comparison.csv"
    _write_csv(path, ["trait", "n_groups", "anova_f", "df_between", "df_within",
                      "anova_p", "kruskal_h", "kruskal_df", "kruskal_p"], rows)
    return path


def write_specialty_means(matrix: TraitMatrix, out_dir: Path) -> Path:
    specialties = sorted({s for s in matrix.specialty if s})
    rows = []
    for s in specialties:
        mask = np.array([sp == s for sp in matrix.specialty])
        for trait in matrix.columns:
            column = matrix.column(trait)[mask]
            column = column[~np.isnan(column)]
            if column.size:
                rows.append([s, trait, column.size, f"{column.mean():.6f}"])
    path = out_dir / "specialty_means.csv"
    _write_csv(path, ["specialty", "trait", "n", "mean"], rows)
    return path


def regression_dataset(matrix: TraitMatrix) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Listwise-complete (traits, satisfaction) design for the regression."""
    mask = ~np.isnan(matrix.data).any(axis=1) & ~np.isnan(matrix.satisfaction)
    X = matrix.data[mask]
    y = matrix.satisfaction[mask]
    return X, y, [matrix.physician_ids[i] for i in np.flatnonzero(mask)]


def write_regression(matrix: TraitMatrix, out_dir: Path,
                     cv_seeds: Sequence[int] = (0, 1, 2, 3, 4)) -> list[Path]:
    X, y, _ = regression_dataset(matrix)
    if X.shape[0] <= X.shape[1] + 1:
        raise StageError("not enough complete rows for the satisfaction regression")
    fit = stats.ols_fit(X, y, column_names=matrix.columns)
    coef_rows = [["intercept", f"{fit.coefficients[0]:.6f}", ""]]
    for j, name in enumerate(matrix.columns):
        coef_rows.append([name, f"{fit.coefficients[j + 1]:.6f}", f"{fit.vif[j]:.6f}"])
    coef_path = out_dir / "regression_coefficients.csv"
    _write_csv(coef_path, ["term", "coefficient", "vif"], coef_rows)

    summary_path = out_dir / "regression_summary.csv"
    _write_csv(summary_path, ["n", "r_squared", "adj_r_squared", "mae", "rmse"], [[
        X.shape[0], f"{fit.r_squared:.6f}", f"{fit.adj_r_squared:.6f}",
        f"{fit.mae:.6f}", f"{fit.rmse:.6f}",
    ]])

    cv_rows = []
    if X.shape[0] >= 5 * (X.shape[1] + 2):
        for result in stats.kfold_cv(X, y, folds=5, seeds=cv_seeds):
            cv_rows.append([result.seed, f"{result.mean_r_squared:.6f}",
                            f"{result.mean_rmse:.6f}"])
    cv_path = out_dir / "regression_cv.csv"
    _write_csv(cv_path, ["seed", "mean_r_squared", "mean_rmse"], cv_rows)
    return [coef_path, summary_path, cv_path]


def trait_satisfaction_correlations(matrix: TraitMatrix) -> dict[str, tuple[float, int, float]]:
    """Per-trait Pearson r against satisfaction: trait -> (r, n, p)."""
    out = {}
    for trait in matrix.columns:
        column = matrix.column(trait)
        mask = ~np.isnan(column) & ~np.isnan(matrix.satisfaction)
        n = int(mask.sum())
        if n < 3:
            continue
        try:
            r = metrics.pearson(column[mask].tolist(), matrix.satisfaction[mask].tolist())
        except MetricError:
            continue
        out[trait] = (r, n, stats.correlation_p(r, n))
    return out


def write_trait_satisfaction(matrix: TraitMatrix, out_dir: Path) -> Path:
    rows = [
        [trait, f"{r:.6f}", n, f"{p:.6g}"]
        for trait, (r, n, p) in trait_satisfaction_correlations(matrix).items()
    ]
    path = out_dir / "trait_satisfaction.csv"
    _write_csv(path, ["trait", "r", "n", "p"], rows)
    return path


def write_distributions(matrix: TraitMatrix, out_dir: Path) -> Path:
    """Counts per discrete trait level, the data behind the distribution figures."""
    levels = (0.0, 0.25, 0.5, 0.75, 1.0)
    rows = []
    for trait in matrix.columns:
        column = matrix.column(trait)
        column = column[~np.isnan(column)]
        for level in levels:
            rows.append([trait, level, int(np.sum(column == level))])
    path = out_dir / "distributions.csv"
    _write_csv(path, ["trait", "level", "count"], rows)
    return path


def write_violin_summaries(matrix: TraitMatrix, out_dir: Path) -> Path:
    """Satisfaction distribution summaries per discrete trait level."""
    levels = (0.0, 0.25, 0.5, 0.75, 1.0)
    rows = []
    for trait in matrix.columns:
        column = matrix.column(trait)
        for level in levels:
            mask = (column == level) & ~np.isnan(matrix.satisfaction)
            values = matrix.satisfaction[mask]
            if values.size == 0:
                rows.append([trait, level, 0, "", ""])
            else:
                sd = f"{values.std(ddof=1):.6f}" if values.size > 1 else ""
                rows.append([trait, level, values.size, f"{values.mean():.6f}", sd])
    path = out_dir / "violin_satisfaction.csv"
    _write_csv(path, ["trait", "level", "n", "satisfaction_mean", "satisfaction_sd"], rows)
    return path


def run_clustering(matrix: TraitMatrix, out_dir: Path, k: Optional[int] = None,
                   seeds: Sequence[int] = (0, 1, 2), k_min: int = 1,
                   k_max: int = 10) -> dict:
    """Cluster z-scored Big Five rows; writes assignments, centroids, elbow curve."""
    bigfive_idx = [matrix.columns.index(t) for t in
                   ("Openness", "Conscientiousness", "Extraversion", "Agreeableness",
                    "Emotional Stability")]
    sub = matrix.data[:, bigfive_idx]
    z = clustering.zscore(sub)
    k_max = min(k_max, z.data.shape[0])
    elbow_result = clustering.elbow(z.data, k_min=k_min, k_max=k_max, seeds=tuple(seeds))
    chosen_k = k if k is not None else elbow_result.selected_k
    result = clustering.kmeans(z.data, chosen_k, seed=elbow_result.best_seed[chosen_k])
    names = clustering.archetype_names(result)

    _write_csv(out_dir / "elbow.csv", ["k", "wcss"],
               [[kk, f"{w:.6f}"] for kk, w in sorted(elbow_result.wcss_curve.items())])

    distances = np.sqrt(((z.data - result.centroids[result.assignments]) ** 2).sum(axis=1))
    assign_rows = []
    for row_pos, original_row in enumerate(z.row_index):
        cluster = int(result.assignments[row_pos])
        assign_rows.append([
            matrix.physician_ids[original_row], cluster, names[cluster],
            f"{distances[row_pos]:.6f}",
        ])
    _write_csv(out_dir / "clusters.csv",
               ["physician_id", "cluster", "archetype", "distance_to_centroid"],
               assign_rows)

    centroid_rows = []
    bigfive_names = [matrix.columns[i] for i in bigfive_idx]
    for c in range(result.k):
        standardized = result.centroids[c]
        original = standardized * z.sds + z.means
        for name, s_val, o_val in zip(bigfive_names, standardized, original):
            centroid_rows.append([c, names[c], name, f"{s_val:.6f}", f"{o_val:.6f}"])
    _write_csv(out_dir / "centroids.csv",
               ["cluster", "archetype", "trait", "standardized", "original_units"],
               centroid_rows)
    return {
        "selected_k": chosen_k,
        "elbow_k": elbow_result.selected_k,
        "confident": elbow_result.confident,
        "wcss": result.wcss,
        "n": int(z.data.shape[0]),
    }
