"""Experiment protocols: per-episode evaluation, correlation studies, variance
attribution, ROC threshold prediction, accuracy prediction and sweeps.

Every protocol derives one independent RNG stream per episode from the global
seed and the episode index, so results are identical at any worker count and
order-independent. Realized performance is measured on the held-out test rows
in the supervised setting and on the NQ query rows otherwise.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .episodes import Episode, EpisodeSpec, derive_seed, sample_episode
from .feature_store import FeatureSet
from .gauges import (
    GaugeReport,
    db_score,
    lr_confidence,
    similarity_metric,
)
from .learners import (
    TrainConfig,
    accuracy,
    adjusted_rand_index,
    n_means,
    predict_proba,
    train_logreg,
)
from .simgraph import DiffusionParams, cosine_matrix, diffuse, knn_sparsify, laplacian_eigenvalues


class Setting(str, Enum):
    SUPERVISED = "supervised"
    SEMI_SUPERVISED = "semi_supervised"
    UNSUPERVISED = "unsupervised"


GAUGES_BY_SETTING = {
    Setting.SUPERVISED: ("lr_loss", "similarity", "db_score", "nth_egv"),
    Setting.SEMI_SUPERVISED: (
        "lr_loss",
        "similarity",
        "db_score",
        "nth_egv",
        "lr_conf_log",
        "lr_conf_mmp",
    ),
    Setting.UNSUPERVISED: ("db_score", "nth_egv"),
}


@dataclass(frozen=True)
class EvalParams:
    """Knobs of the per-episode pipeline; defaults follow the standard recipe."""

    diffusion: DiffusionParams = DiffusionParams()
    train: TrainConfig = TrainConfig()


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation; errors on constant inputs."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise ValueError("inputs must be 1-D and equal length")
    if xv.size < 2:
        raise ValueError("need at least 2 points")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    sx = float(np.sqrt(np.sum(xc**2)))
    sy = float(np.sqrt(np.sum(yc**2)))
    # relative floor: rounding noise on constant inputs is still zero variance
    x_floor = 1e-13 * max(1.0, float(np.abs(xv).max())) * np.sqrt(xv.size)
    y_floor = 1e-13 * max(1.0, float(np.abs(yv).max())) * np.sqrt(yv.size)
    if sx <= x_floor or sy <= y_floor:
        raise ValueError("zero variance input")
    r = float(np.dot(xc, yc) / (sx * sy))
    return max(-1.0, min(1.0, r))


# ---------------------------------------------------------------------------
# per-episode evaluation


@dataclass(frozen=True)
class TaskOutcome:
    """Everything one episode produced: gauges, full spectrum, performance."""

    lr_training_loss: float | None
    similarity: float | None
    db_score: float | None
    eigenvalues: np.ndarray
    lr_confidence_log: float | None
    lr_confidence_mean_max_prob: float | None
    performance: float


def _unlabeled_spectrum(features: np.ndarray, k_neighbors: int) -> np.ndarray:
    graph = knn_sparsify(cosine_matrix(features), k_neighbors)
    return laplacian_eigenvalues(graph)


def run_task(
    fs: FeatureSet,
    episode: Episode,
    setting: Setting,
    params: EvalParams,
    seed: int,
) -> TaskOutcome:
    """Train the setting-appropriate learner and compute all applicable gauges.

    Supervised tasks work on raw features and score accuracy on the test rows;
    semi-supervised and unsupervised tasks diffuse the features first and
    score on the query rows (accuracy and ARI respectively). The gauges that
    regard samples as unlabeled operate on the support rows (supervised), all
    rows (semi-supervised) or the query rows (unsupervised).
    """
    setting = Setting(setting)
    n_way = episode.n_way
    nmeans_seed = derive_seed(seed, 0)
    k_gauge = params.diffusion.k_neighbors

    if setting is Setting.SUPERVISED:
        if not any(episode.test):
            raise ValueError("supervised evaluation needs test rows")
        feats = fs.features[episode.support_rows()].astype(np.float64)
        labels = episode.support_labels()
        model = train_logreg(feats, labels, n_way, params.train)
        clustering = n_means(feats, n_way, nmeans_seed)
        perf = accuracy(
            model, fs.features[episode.test_rows()].astype(np.float64), episode.test_labels()
        )
        return TaskOutcome(
            lr_training_loss=model.final_training_loss,
            similarity=similarity_metric(feats, labels),
            db_score=db_score(feats, clustering.assignments),
            eigenvalues=_unlabeled_spectrum(feats, k_gauge),
            lr_confidence_log=None,
            lr_confidence_mean_max_prob=None,
            performance=perf,
        )

    if setting is Setting.SEMI_SUPERVISED:
        if not any(episode.support) or not any(episode.query):
            raise ValueError("semi-supervised evaluation needs support and query rows")
        rows = np.concatenate([episode.support_rows(), episode.query_rows()])
        raw = fs.features[rows].astype(np.float64)
        graph = knn_sparsify(cosine_matrix(raw), params.diffusion.k_neighbors)
        feats = diffuse(raw, graph, params.diffusion)
        n_support = episode.support_rows().size
        sup_feats = feats[:n_support]
        sup_labels = episode.support_labels()
        query_feats = feats[n_support:]
        model = train_logreg(sup_feats, sup_labels, n_way, params.train)
        probs = predict_proba(model, query_feats)
        conf = lr_confidence(probs)
        clustering = n_means(feats, n_way, nmeans_seed)
        perf = float(np.mean(np.argmax(probs, axis=1) == episode.query_labels()))
        return TaskOutcome(
            lr_training_loss=model.final_training_loss,
            similarity=similarity_metric(sup_feats, sup_labels),
            db_score=db_score(feats, clustering.assignments),
            eigenvalues=_unlabeled_spectrum(feats, k_gauge),
            lr_confidence_log=conf.log_form,
            lr_confidence_mean_max_prob=conf.mean_max_prob,
            performance=perf,
        )

    # unsupervised: the query rows are the whole task
    if not any(episode.query):
        raise ValueError("unsupervised evaluation needs query rows")
    raw = fs.features[episode.query_rows()].astype(np.float64)
    graph = knn_sparsify(cosine_matrix(raw), params.diffusion.k_neighbors)
    feats = diffuse(raw, graph, params.diffusion)
    clustering = n_means(feats, n_way, nmeans_seed)
    perf = adjusted_rand_index(clustering.assignments, episode.query_labels())
    return TaskOutcome(
        lr_training_loss=None,
        similarity=None,
        db_score=db_score(feats, clustering.assignments),
        eigenvalues=_unlabeled_spectrum(feats, k_gauge),
        lr_confidence_log=None,
        lr_confidence_mean_max_prob=None,
        performance=perf,
    )


def outcome_to_report(
    outcome: TaskOutcome, episode_id: int, setting: Setting, spec: EpisodeSpec
) -> GaugeReport:
    n = spec.n_way
    return GaugeReport(
        episode_id=episode_id,
        setting=Setting(setting).value,
        n_way=n,
        k_shot=spec.k_shot,
        q_query=spec.q_query,
        lr_training_loss=outcome.lr_training_loss,
        similarity=outcome.similarity,
        db_score=outcome.db_score,
        nth_eigenvalue=float(outcome.eigenvalues[n - 1]),
        lr_confidence_log=outcome.lr_confidence_log,
        lr_confidence_mean_max_prob=outcome.lr_confidence_mean_max_prob,
        performance=outcome.performance,
    )


def evaluate_episode(
    fs: FeatureSet,
    episode: Episode,
    setting: Setting,
    params: EvalParams | None = None,
    seed: int = 0,
    episode_id: int = 0,
    spec: EpisodeSpec | None = None,
) -> GaugeReport:
    """Gauge report for one already-sampled episode."""
    params = params or EvalParams()
    outcome = run_task(fs, episode, setting, params, seed)
    if spec is None:
        spec = EpisodeSpec(
            n_way=episode.n_way,
            k_shot=len(episode.support[0]) if episode.support else 0,
            q_query=len(episode.query[0]) if episode.query else 0,
            test_per_class=len(episode.test[0]) if episode.test else 0,
        )
    return outcome_to_report(outcome, episode_id, setting, spec)


# ---------------------------------------------------------------------------
# parallel episode mapping

_WORKER_CTX: dict = {}


def _init_worker(ctx: dict) -> None:
    _WORKER_CTX.clear()
    _WORKER_CTX.update(ctx)


def _episode_outcome(args: tuple) -> TaskOutcome:
    fs, spec, setting, params, base_seed, index = args
    ep_seed = derive_seed(base_seed, index)
    episode = sample_episode(fs, replace(spec, seed=ep_seed))
    return run_task(fs, episode, setting, params, derive_seed(ep_seed, 1))


def _episode_outcome_worker(index: int) -> TaskOutcome:
    c = _WORKER_CTX
    return _episode_outcome(
        (c["fs"], c["spec"], c["setting"], c["params"], c["base_seed"], index)
    )


def _map_outcomes(
    fs: FeatureSet,
    spec: EpisodeSpec,
    setting: Setting,
    params: EvalParams,
    base_seed: int,
    n_tasks: int,
    jobs: int,
) -> list[TaskOutcome]:
    if jobs <= 1:
        return [
            _episode_outcome((fs, spec, setting, params, base_seed, i))
            for i in range(n_tasks)
        ]
    ctx = dict(fs=fs, spec=spec, setting=setting, params=params, base_seed=base_seed)
    chunk = max(1, n_tasks // (jobs * 8))
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(ctx,)
    ) as ex:
        return list(ex.map(_episode_outcome_worker, range(n_tasks), chunksize=chunk))


# ---------------------------------------------------------------------------
# correlation studies


@dataclass(frozen=True)
class GaugeCorrelation:
    gauge: str
    pearson_signed: float
    pearson_abs: float
    n_tasks: int


@dataclass(frozen=True)
class GridPointResult:
    spec: EpisodeSpec
    correlations: tuple[GaugeCorrelation, ...]
    degenerate: tuple[str, ...]
    reports: tuple[GaugeReport, ...]


@dataclass(frozen=True)
class CorrelationStudy:
    setting: str
    points: tuple[GridPointResult, ...]


def run_correlation_study(
    fs: FeatureSet,
    setting: Setting,
    grid: Sequence[EpisodeSpec],
    n_tasks: int,
    seed: int,
    params: EvalParams | None = None,
    jobs: int = 1,
) -> CorrelationStudy:
    """Per-gauge Pearson correlations with realized performance on a task grid.

    For every grid point, ``n_tasks`` episodes are sampled with derived seeds
    and evaluated; gauges whose values (or whose performance column) have zero
    variance are flagged degenerate at that point instead of reported.
    """
    if not grid:
        raise ValueError("empty grid")
    if n_tasks < 2:
        raise ValueError("need at least 2 tasks per point")
    setting = Setting(setting)
    params = params or EvalParams()
    points = []
    for p_idx, spec in enumerate(grid):
        base_seed = derive_seed(seed, p_idx)
        outcomes = _map_outcomes(fs, spec, setting, params, base_seed, n_tasks, jobs)
        reports = tuple(
            outcome_to_report(o, i, setting, spec) for i, o in enumerate(outcomes)
        )
        perf = np.array([r.performance for r in reports])
        correlations = []
        degenerate = []
        for gauge in GAUGES_BY_SETTING[setting]:
            values = np.array([r.gauge_value(gauge) for r in reports], dtype=np.float64)
            try:
                r_signed = pearson(values, perf)
            except ValueError:
                degenerate.append(gauge)
                continue
            correlations.append(
                GaugeCorrelation(gauge, r_signed, abs(r_signed), len(reports))
            )
        points.append(
            GridPointResult(spec, tuple(correlations), tuple(degenerate), reports)
        )
    return CorrelationStudy(setting.value, tuple(points))


def study_to_csv(study: CorrelationStudy) -> str:
    """Per-point CSV; the trailing column carries the unbalanced fraction."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["setting", "N", "K", "Q", "gauge", "pearson_signed", "pearson_abs", "n_tasks", "p"]
    )
    for point in study.points:
        s = point.spec
        p_str = "" if s.first_class_fraction is None else repr(s.first_class_fraction)
        for corr in point.correlations:
            writer.writerow(
                [
                    study.setting,
                    s.n_way,
                    s.k_shot,
                    s.q_query,
                    corr.gauge,
                    repr(corr.pearson_signed),
                    repr(corr.pearson_abs),
                    corr.n_tasks,
                    p_str,
                ]
            )
    return buf.getvalue()


def write_study_csv(study: CorrelationStudy, path: str | Path) -> None:
    Path(path).write_text(study_to_csv(study), encoding="utf-8")


# ---------------------------------------------------------------------------
# variance attribution


@dataclass(frozen=True)
class VarianceAttribution:
    std_random: float
    fixed_classes_mean_std: float
    fixed_classes_std_of_std: float
    fixed_shots_mean_std: float
    fixed_shots_std_of_std: float
    outer: int
    inner: int


def _supervised_accuracy(fs: FeatureSet, episode: Episode, cfg: TrainConfig) -> float:
    model = train_logreg(
        fs.features[episode.support_rows()].astype(np.float64),
        episode.support_labels(),
        episode.n_way,
        cfg,
    )
    return accuracy(
        model, fs.features[episode.test_rows()].astype(np.float64), episode.test_labels()
    )


def _var_fixed_classes_std(args: tuple) -> float:
    from .episodes import sample_episode_fixed_classes

    fs, spec, cfg, seed, outer_idx, inner = args
    rng = np.random.default_rng(derive_seed(seed, 1, outer_idx) % 2**63)
    class_ids = tuple(
        int(c) for c in rng.choice(fs.num_classes, size=spec.n_way, replace=False)
    )
    accs = np.empty(inner)
    for i in range(inner):
        ep = sample_episode_fixed_classes(
            fs, replace(spec, seed=derive_seed(seed, 1, outer_idx, i)), class_ids
        )
        accs[i] = _supervised_accuracy(fs, ep, cfg)
    return float(np.std(accs, ddof=1))


def _var_fixed_shots_std(args: tuple) -> float:
    from .episodes import sample_episode_fixed_shots

    fs, spec, cfg, seed, outer_idx, inner, pool_size = args
    rng = np.random.default_rng(derive_seed(seed, 2, outer_idx) % 2**63)
    if pool_size is None:
        pool = np.arange(fs.num_classes)
    else:
        pool = rng.choice(fs.num_classes, size=pool_size, replace=False)
    shots = {
        int(c): tuple(
            int(i) for i in rng.permutation(fs.rows_of_class(int(c)))[: spec.k_shot]
        )
        for c in pool
    }
    accs = np.empty(inner)
    for i in range(inner):
        ep = sample_episode_fixed_shots(
            fs, replace(spec, seed=derive_seed(seed, 2, outer_idx, i)), shots
        )
        accs[i] = _supervised_accuracy(fs, ep, cfg)
    return float(np.std(accs, ddof=1))


def _var_random_acc(args: tuple) -> float:
    fs, spec, cfg, seed, idx = args
    ep = sample_episode(fs, replace(spec, seed=derive_seed(seed, 0, idx)))
    return _supervised_accuracy(fs, ep, cfg)


def _parallel(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (jobs * 4))))


def run_variance_attribution(
    fs: FeatureSet,
    spec: EpisodeSpec,
    outer: int = 500,
    inner: int = 500,
    seed: int = 0,
    params: EvalParams | None = None,
    pool_size: int | None = None,
    jobs: int = 1,
) -> VarianceAttribution:
    """Attribute accuracy variance to class choice versus shot choice.

    Three nested protocols: the accuracy std over fully random tasks; the
    mean (and std) of stds over tasks that fix the classes and redraw shots;
    the same with per-class shots fixed and classes redrawn. ``pool_size``
    limits how many classes get pre-assigned shots (default: all).
    """
    if outer < 1 or inner < 2:
        raise ValueError("need outer >= 1 and inner >= 2")
    cfg = (params or EvalParams()).train
    accs = _parallel(
        _var_random_acc, [(fs, spec, cfg, seed, i) for i in range(outer)], jobs
    )
    std_random = float(np.std(np.array(accs), ddof=1)) if outer > 1 else 0.0
    stds_c = np.array(
        _parallel(
            _var_fixed_classes_std,
            [(fs, spec, cfg, seed, o, inner) for o in range(outer)],
            jobs,
        )
    )
    stds_s = np.array(
        _parallel(
            _var_fixed_shots_std,
            [(fs, spec, cfg, seed, o, inner, pool_size) for o in range(outer)],
            jobs,
        )
    )
    return VarianceAttribution(
        std_random=std_random,
        fixed_classes_mean_std=float(stds_c.mean()),
        fixed_classes_std_of_std=float(stds_c.std(ddof=1)) if outer > 1 else 0.0,
        fixed_shots_mean_std=float(stds_s.mean()),
        fixed_shots_std_of_std=float(stds_s.std(ddof=1)) if outer > 1 else 0.0,
        outer=outer,
        inner=inner,
    )


# ---------------------------------------------------------------------------
# ROC threshold prediction


@dataclass(frozen=True)
class RocResult:
    gauge: str
    accuracy_cut: float
    hard_if_high: bool
    thresholds: tuple[float, ...]
    one_minus_specificity: tuple[float, ...]
    sensibility: tuple[float, ...]
    operating_threshold: float
    operating_point: tuple[float, float]
    confusion_percent: tuple[tuple[float, float], tuple[float, float]]
    area: float
    calibration_tasks: tuple[tuple[float, bool], ...]
    holdout_tasks: tuple[tuple[float, bool], ...]


def _gauge_and_perf(
    fs: FeatureSet,
    spec: EpisodeSpec,
    setting: Setting,
    gauge_id: str,
    params: EvalParams,
    base_seed: int,
    n_tasks: int,
    jobs: int,
    accuracy_cut: float,
) -> tuple[np.ndarray, np.ndarray]:
    outcomes = _map_outcomes(fs, spec, setting, params, base_seed, n_tasks, jobs)
    perf = np.array([o.performance for o in outcomes])
    if gauge_id == "oracle_accuracy":
        values = perf.copy()
    elif gauge_id == "oracle_indicator":
        values = (perf >= accuracy_cut).astype(np.float64)
    elif gauge_id == "random":
        values = np.array(
            [
                np.random.default_rng(derive_seed(base_seed, i, 999) % 2**63).random()
                for i in range(n_tasks)
            ]
        )
    else:
        reports = [
            outcome_to_report(o, i, setting, spec) for i, o in enumerate(outcomes)
        ]
        values = np.array([r.gauge_value(gauge_id) for r in reports], dtype=np.float64)
    return values, perf


def _roc_points(
    values: np.ndarray, hard: np.ndarray, hard_if_high: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_hard = int(hard.sum())
    n_easy = int((~hard).sum())
    order = np.argsort(values, kind="stable")
    vs = values[order]
    hs = hard[order].astype(np.int64)
    uniq = np.unique(vs)
    if hard_if_high:
        suffix_hard = np.concatenate([np.cumsum(hs[::-1])[::-1], [0]])
        pos = np.searchsorted(vs, uniq, side="left")
        tp = suffix_hard[pos]
        pred_hard = vs.size - pos
        thresholds = np.concatenate([uniq, [np.inf]])
        tp = np.concatenate([tp, [0]])
        pred_hard = np.concatenate([pred_hard, [0]])
    else:
        prefix_hard = np.concatenate([[0], np.cumsum(hs)])
        pos = np.searchsorted(vs, uniq, side="right")
        tp = prefix_hard[pos]
        pred_hard = pos
        thresholds = np.concatenate([[-np.inf], uniq])
        tp = np.concatenate([[0], tp])
        pred_hard = np.concatenate([[0], pred_hard])
    fp = pred_hard - tp
    sens = tp / n_hard
    one_minus_spec = fp / n_easy
    return thresholds, one_minus_spec, sens


def run_roc_prediction(
    fs_calibrate: FeatureSet,
    fs_holdout: FeatureSet,
    gauge_id: str,
    spec: EpisodeSpec,
    n_tasks: int,
    seed: int,
    accuracy_cut: float = 0.80,
    setting: Setting = Setting.SUPERVISED,
    params: EvalParams | None = None,
    target_sensibility: float = 0.8,
    jobs: int = 1,
) -> RocResult:
    """Calibrate a hard/easy gauge threshold and freeze it on held-out classes.

    Tasks below ``accuracy_cut`` are hard. The ROC sweeps every distinct gauge
    value as a threshold on the calibration tasks; the operating point is the
    sweep point whose sensibility is nearest ``target_sensibility``. That
    frozen threshold is then applied to tasks from the holdout classes and a
    row-normalized percentage confusion matrix is reported. ``gauge_id`` may
    be any gauge column, or the baselines ``oracle_accuracy`` / ``random``.
    """
    if set(fs_calibrate.class_names) & set(fs_holdout.class_names):
        raise ValueError("calibration and holdout class sets must be disjoint")
    setting = Setting(setting)
    params = params or EvalParams()
    cal_values, cal_perf = _gauge_and_perf(
        fs_calibrate, spec, setting, gauge_id, params, derive_seed(seed, 10), n_tasks, jobs,
        accuracy_cut,
    )
    hold_values, hold_perf = _gauge_and_perf(
        fs_holdout, spec, setting, gauge_id, params, derive_seed(seed, 11), n_tasks, jobs,
        accuracy_cut,
    )
    if np.unique(cal_values).size < 2:
        raise ValueError("fewer than 2 distinct gauge values on calibration tasks")
    cal_hard = cal_perf < accuracy_cut
    if cal_hard.all() or (~cal_hard).all():
        raise ValueError(
            "single-class calibration: need both hard and easy tasks at the cut"
        )
    hard_if_high = pearson(cal_values, cal_perf) < 0
    thresholds, oms, sens = _roc_points(cal_values, cal_hard, hard_if_high)
    op_idx = int(np.argmin(np.abs(sens - target_sensibility)))
    op_threshold = float(thresholds[op_idx])

    by_x = np.argsort(oms, kind="stable")
    area = float(np.trapezoid(sens[by_x], oms[by_x]))

    hold_hard = hold_perf < accuracy_cut
    if hold_hard.all() or (~hold_hard).all():
        raise ValueError("holdout tasks are all hard or all easy at the cut")
    if hard_if_high:
        pred_hard = hold_values >= op_threshold
    else:
        pred_hard = hold_values <= op_threshold
    tp = int((hold_hard & pred_hard).sum())
    fn = int((hold_hard & ~pred_hard).sum())
    fp = int((~hold_hard & pred_hard).sum())
    tn = int((~hold_hard & ~pred_hard).sum())
    confusion = (
        (100.0 * tp / (tp + fn), 100.0 * fn / (tp + fn)),
        (100.0 * fp / (fp + tn), 100.0 * tn / (fp + tn)),
    )
    return RocResult(
        gauge=gauge_id,
        accuracy_cut=accuracy_cut,
        hard_if_high=bool(hard_if_high),
        thresholds=tuple(float(t) for t in thresholds),
        one_minus_specificity=tuple(float(v) for v in oms),
        sensibility=tuple(float(v) for v in sens),
        operating_threshold=op_threshold,
        operating_point=(float(oms[op_idx]), float(sens[op_idx])),
        confusion_percent=confusion,
        area=area,
        calibration_tasks=tuple(zip((float(v) for v in cal_values), (bool(h) for h in cal_hard))),
        holdout_tasks=tuple(zip((float(v) for v in hold_values), (bool(h) for h in hold_hard))),
    )


def roc_to_csv(result: RocResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "one_minus_specificity", "sensibility"])
    for t, x, y in zip(result.thresholds, result.one_minus_specificity, result.sensibility):
        writer.writerow([repr(t), repr(x), repr(y)])
    return buf.getvalue()


def confusion_to_text(result: RocResult) -> str:
    (tp, fn), (fp, tn) = result.confusion_percent
    op = ">=" if result.hard_if_high else "<="
    return (
        f"gauge: {result.gauge}\n"
        f"accuracy cut: {result.accuracy_cut}\n"
        f"threshold: {result.operating_threshold!r} (predict hard when gauge {op} threshold)\n"
        "rows: reality (hard, easy); columns: prediction (hard, easy)\n"
        f"hard: {tp:.2f} {fn:.2f}\n"
        f"easy: {fp:.2f} {tn:.2f}\n"
    )


# ---------------------------------------------------------------------------
# accuracy prediction


@dataclass(frozen=True)
class AccuracyPrediction:
    mae: float
    mad_baseline: float
    n_tasks: int
    predicted: tuple[float, ...]
    realized: tuple[float, ...]


def run_accuracy_prediction(
    fs: FeatureSet,
    spec: EpisodeSpec,
    n_tasks: int,
    seed: int,
    params: EvalParams | None = None,
    jobs: int = 1,
) -> AccuracyPrediction:
    """Use mean-max-prob confidence as a predicted accuracy on semi tasks.

    Reports the mean absolute prediction error and, as the naive baseline,
    the mean absolute deviation of realized accuracies from their average.
    """
    if n_tasks < 1:
        raise ValueError("need at least one task")
    params = params or EvalParams()
    outcomes = _map_outcomes(
        fs, spec, Setting.SEMI_SUPERVISED, params, derive_seed(seed, 20), n_tasks, jobs
    )
    predicted = np.array([o.lr_confidence_mean_max_prob for o in outcomes])
    realized = np.array([o.performance for o in outcomes])
    mae = float(np.mean(np.abs(predicted - realized)))
    mad = float(np.mean(np.abs(realized - realized.mean())))
    return AccuracyPrediction(
        mae, mad, n_tasks, tuple(map(float, predicted)), tuple(map(float, realized))
    )


# ---------------------------------------------------------------------------
# eigenvalue-index and k-NN sweeps


@dataclass(frozen=True)
class EigenIndexPoint:
    n_way: int
    r_at_n: float
    best_index: int
    r_at_best: float
    n_tasks: int


def run_eigenindex_sweep(
    fs: FeatureSet,
    setting: Setting,
    way_grid: Sequence[int],
    spec: EpisodeSpec,
    n_tasks: int,
    seed: int,
    params: EvalParams | None = None,
    jobs: int = 1,
) -> tuple[EigenIndexPoint, ...]:
    """Correlate every Laplacian eigenvalue index with performance, per N.

    Reports the absolute correlation at index N alongside the best index and
    its correlation; indices with zero variance across tasks count as 0.
    """
    if not way_grid:
        raise ValueError("empty way grid")
    setting = Setting(setting)
    params = params or EvalParams()
    points = []
    for w_idx, n_way in enumerate(way_grid):
        point_spec = replace(spec, n_way=int(n_way))
        outcomes = _map_outcomes(
            fs, point_spec, setting, params, derive_seed(seed, 30, w_idx), n_tasks, jobs
        )
        perf = np.array([o.performance for o in outcomes])
        spectra = np.stack([o.eigenvalues for o in outcomes])
        n_vertices = spectra.shape[1]
        corr = np.zeros(n_vertices)
        for i in range(n_vertices):
            try:
                corr[i] = abs(pearson(spectra[:, i], perf))
            except ValueError:
                corr[i] = 0.0
        if not corr.any():
            raise ValueError(f"all eigenvalue indices degenerate at N={n_way}")
        best = int(np.argmax(corr))
        points.append(
            EigenIndexPoint(
                n_way=int(n_way),
                r_at_n=float(corr[n_way - 1]),
                best_index=best + 1,
                r_at_best=float(corr[best]),
                n_tasks=n_tasks,
            )
        )
    return tuple(points)


def run_knn_sweep(
    fs: FeatureSet,
    setting: Setting,
    k_grid: Sequence[int],
    spec: EpisodeSpec,
    n_tasks: int,
    seed: int,
    params: EvalParams | None = None,
    jobs: int = 1,
) -> CorrelationStudy:
    """Repeat the correlation study while varying the graph neighbor count."""
    if not k_grid:
        raise ValueError("empty k grid")
    setting = Setting(setting)
    params = params or EvalParams()
    points = []
    # one shared episode stream: across k only the graphs change
    point_seed = derive_seed(seed, 40)
    for k in k_grid:
        k_params = replace(params, diffusion=replace(params.diffusion, k_neighbors=int(k)))
        study = run_correlation_study(
            fs, setting, [spec], n_tasks, point_seed, k_params, jobs
        )
        points.append(study.points[0])
    return CorrelationStudy(setting.value, tuple(points))


def knn_sweep_to_csv(k_grid: Sequence[int], study: CorrelationStudy) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setting", "k", "gauge", "pearson_signed", "pearson_abs", "n_tasks"])
    for k, point in zip(k_grid, study.points):
        for corr in point.correlations:
            writer.writerow(
                [
                    study.setting,
                    int(k),
                    corr.gauge,
                    repr(corr.pearson_signed),
                    repr(corr.pearson_abs),
                    corr.n_tasks,
                ]
            )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# active labeling


@dataclass(frozen=True)
class ActiveLabelingResult:
    policy: str
    budgets: tuple[int, ...]
    mean_accuracy: tuple[float, ...]
    n_tasks: int


POLICY_LOWEST_CONFIDENCE = "lowest_confidence"
POLICY_RANDOM = "random"


def _active_task(args: tuple) -> np.ndarray:
    fs, spec, params, policy, budgets, base_seed, index = args
    ep_seed = derive_seed(base_seed, index)
    episode = sample_episode(fs, replace(spec, seed=ep_seed))
    n_way = episode.n_way
    rows = np.concatenate([episode.support_rows(), episode.query_rows()])
    raw = fs.features[rows].astype(np.float64)
    graph = knn_sparsify(cosine_matrix(raw), params.diffusion.k_neighbors)
    feats = diffuse(raw, graph, params.diffusion)
    n_support = episode.support_rows().size
    sup_feats = feats[:n_support]
    sup_labels = episode.support_labels()
    query_feats = feats[n_support:]
    query_labels = episode.query_labels()
    model = train_logreg(sup_feats, sup_labels, n_way, params.train)
    conf = predict_proba(model, query_feats).max(axis=1)
    if policy == POLICY_LOWEST_CONFIDENCE:
        order = np.argsort(conf, kind="stable")
    elif policy == POLICY_RANDOM:
        order = np.random.default_rng(derive_seed(ep_seed, 2) % 2**63).permutation(
            conf.size
        )
    else:
        raise ValueError(f"unknown policy {policy!r}")
    accs = np.empty(len(budgets))
    for b_idx, budget in enumerate(budgets):
        chosen = order[:budget]
        rest = order[budget:]
        train_feats = np.vstack([sup_feats, query_feats[chosen]])
        train_labels = np.concatenate([sup_labels, query_labels[chosen]])
        model_b = train_logreg(train_feats, train_labels, n_way, params.train)
        preds = np.argmax(predict_proba(model_b, query_feats[rest]), axis=1)
        accs[b_idx] = float(np.mean(preds == query_labels[rest]))
    return accs


def run_active_labeling(
    fs: FeatureSet,
    spec: EpisodeSpec,
    budget_grid: Sequence[int],
    policy: str,
    n_tasks: int,
    seed: int,
    params: EvalParams | None = None,
    jobs: int = 1,
) -> ActiveLabelingResult:
    """Move the least-confident (or random) queries into the support set.

    Per budget b: rank the queries once by the initial classifier's
    per-sample confidence, move b of them (with their true labels) into the
    training set, retrain, and score accuracy on the remaining queries.
    """
    budgets = tuple(int(b) for b in budget_grid)
    total_queries = spec.n_way * spec.q_query
    for b in budgets:
        if b < 0 or b >= total_queries:
            raise ValueError(f"budget {b} leaves no queries to evaluate")
    if policy not in (POLICY_LOWEST_CONFIDENCE, POLICY_RANDOM):
        raise ValueError(f"unknown policy {policy!r}")
    params = params or EvalParams()
    base_seed = derive_seed(seed, 50)
    rows = _parallel(
        _active_task,
        [(fs, spec, params, policy, budgets, base_seed, i) for i in range(n_tasks)],
        jobs,
    )
    stacked = np.stack(rows)
    return ActiveLabelingResult(
        policy=policy,
        budgets=budgets,
        mean_accuracy=tuple(float(v) for v in stacked.mean(axis=0)),
        n_tasks=n_tasks,
    )
