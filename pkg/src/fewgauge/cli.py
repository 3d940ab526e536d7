"""Command-line interface: every experiment protocol behind one entry point.

Each subcommand is a thin adapter around the library: it resolves parameters
(flags win over the optional JSON config file), calls one harness/library
function, writes deterministic output files under --out and prints a one-line
summary. All randomness flows from the mandatory --seed.

Exit codes: 0 success, 2 argument parsing, 3 invalid input or config,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .confusion import (
    bipartite_confusion,
    bipartite_to_dot,
    overlap_edges_text,
    overlap_matrix,
    overlap_to_dot,
)
from .episodes import EpisodeSpec, sample_episode
from .feature_store import (
    FeatureFormatError,
    l2_normalize,
    load_feature_set,
    save_feature_set,
    synth_generate,
)
from .gauges import write_reports_csv
from .harness import (
    EvalParams,
    Setting,
    knn_sweep_to_csv,
    outcome_to_report,
    confusion_to_text,
    roc_to_csv,
    run_accuracy_prediction,
    run_active_labeling,
    run_correlation_study,
    run_eigenindex_sweep,
    run_knn_sweep,
    run_roc_prediction,
    run_variance_attribution,
    study_to_csv,
)
from .learners import TrainConfig
from .simgraph import DiffusionParams
from .svgplot import scatter_svg

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_RUNTIME = 4

_SETTINGS = {
    "supervised": Setting.SUPERVISED,
    "semi": Setting.SEMI_SUPERVISED,
    "semi_supervised": Setting.SEMI_SUPERVISED,
    "unsupervised": Setting.UNSUPERVISED,
}


def _comma_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _comma_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def parse_grid(text: str, default_test: int = 0) -> list[EpisodeSpec]:
    """Parse ``N=5,K=5,Q=30[,T=..][,p=..];N=...`` into episode specs."""
    specs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        fields = {}
        for pair in chunk.split(","):
            key, _, value = pair.partition("=")
            fields[key.strip()] = value.strip()
        try:
            specs.append(
                EpisodeSpec(
                    n_way=int(fields["N"]),
                    k_shot=int(fields.get("K", 0)),
                    q_query=int(fields.get("Q", 0)),
                    test_per_class=int(fields.get("T", default_test)),
                    first_class_fraction=float(fields["p"]) if "p" in fields else None,
                )
            )
        except KeyError as exc:
            raise ValueError(f"grid point {chunk!r} is missing field {exc}") from exc
    if not specs:
        raise ValueError("empty grid")
    return specs


# ---------------------------------------------------------------------------
# option resolution (flags > config file > defaults)

_REQUIRED = object()

_COMMON = {
    "seed": (int, _REQUIRED, "global random seed (mandatory)"),
    "out": (str, _REQUIRED, "output directory"),
    "jobs": (int, 1, "worker processes for episode-level parallelism"),
    "alpha": (float, 0.75, "diffusion self-weight alpha"),
    "kappa": (int, 1, "diffusion power kappa"),
    "k_neighbors": (int, 15, "neighbors kept per row in similarity graphs"),
    "epochs": (int, 50, "logistic regression training epochs"),
    "learning_rate": (float, 0.01, "logistic regression learning rate"),
}

_OPTIONS: dict[str, dict[str, tuple]] = {
    "synth": {
        "classes": (int, 20, "number of classes"),
        "per_class": (int, 600, "samples per class"),
        "dim": (int, 64, "feature dimension"),
        "separation": (str, "1.0", "centroid separation (single value or one per class)"),
        "spread": (float, 0.2, "per-class Gaussian spread"),
        "name": (str, "synthetic", "dataset name recorded in the manifest"),
    },
    "sample": {
        "features": (str, _REQUIRED, "feature file (.fsf1 or .csv)"),
        "way": (int, 5, "classes per task"),
        "shot": (int, 5, "labeled samples per class"),
        "query": (int, 15, "unlabeled samples per class"),
        "test": (int, 50, "test samples per class"),
        "unbalanced_p": (float, None, "first-class query fraction in (0,1)"),
    },
    "gauge": {
        "features": (str, _REQUIRED, "feature file"),
        "setting": (str, "semi", "supervised | semi | unsupervised"),
        "way": (int, 5, ""),
        "shot": (int, 5, ""),
        "query": (int, 30, ""),
        "test": (int, 0, ""),
        "n_tasks": (int, 100, "episodes to evaluate"),
        "plot": (bool, False, "emit gauge-vs-performance SVG scatters"),
    },
    "correlate": {
        "features": (str, _REQUIRED, "feature file"),
        "setting": (str, "semi", ""),
        "grid": (str, _REQUIRED, "grid points, e.g. 'N=5,K=1,Q=30;N=5,K=5,Q=30'"),
        "n_tasks": (int, 1000, "episodes per grid point"),
    },
    "variance": {
        "features": (str, _REQUIRED, "feature file"),
        "way": (int, 5, ""),
        "shot": (int, 5, ""),
        "test": (int, 50, ""),
        "outer": (int, 500, "outer protocol repetitions"),
        "inner": (int, 500, "inner repetitions per outer draw"),
        "pool_size": (int, None, "classes with pre-assigned shots (default all)"),
    },
    "confusion": {
        "features": (str, _REQUIRED, "feature file (novel classes)"),
        "base_features": (str, None, "optional base-class feature file (bipartite mode)"),
        "classes": (str, None, "comma list of class ids (default all)"),
        "edges_per_vertex": (float, 20.0, "edge budget per vertex in the overlap graph"),
        "runs": (int, 5, "community-detection runs averaged per pair"),
        "top_edges": (int, None, "edges kept in the bipartite export"),
    },
    "roc": {
        "features": (str, _REQUIRED, "calibration feature file"),
        "holdout_features": (str, _REQUIRED, "holdout feature file (disjoint classes)"),
        "gauge": (str, "lr_conf_mmp", "gauge column, or oracle_accuracy|oracle_indicator|random"),
        "setting": (str, "supervised", ""),
        "way": (int, 5, ""),
        "shot": (int, 5, ""),
        "query": (int, 0, ""),
        "test": (int, 50, ""),
        "cut": (float, 0.80, "accuracy below this is a hard task"),
        "target_sensibility": (float, 0.8, "operating point target"),
        "n_tasks": (int, 1000, ""),
    },
    "predict-accuracy": {
        "features": (str, _REQUIRED, "feature file"),
        "way": (int, 5, ""),
        "shot": (int, 5, ""),
        "query": (int, 30, ""),
        "n_tasks": (int, 1000, ""),
    },
    "sweep-eigen": {
        "features": (str, _REQUIRED, "feature file"),
        "setting": (str, "unsupervised", ""),
        "ways": (str, "2,3,5,8", "comma list of N values"),
        "shot": (int, 5, ""),
        "query": (int, 35, ""),
        "n_tasks": (int, 500, ""),
    },
    "sweep-knn": {
        "features": (str, _REQUIRED, "feature file"),
        "setting": (str, "semi", ""),
        "ks": (str, "3,5,10,15,20", "comma list of neighbor counts"),
        "way": (int, 5, ""),
        "shot": (int, 5, ""),
        "query": (int, 30, ""),
        "n_tasks": (int, 500, ""),
    },
    "active-label": {
        "features": (str, _REQUIRED, "feature file"),
        "way": (int, 5, ""),
        "shot": (int, 1, ""),
        "query": (int, 50, ""),
        "budgets": (str, "0,25,50,100,150,200", "comma list of labeling budgets"),
        "policy": (str, "lowest_confidence", "lowest_confidence | random"),
        "n_tasks": (int, 1000, ""),
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewgauge",
        description="Estimate few-shot classifier generalization without a validation set.",
    )
    parser.add_argument("--version", action="version", version=f"fewgauge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, options in _OPTIONS.items():
        sp = sub.add_parser(command)
        sp.add_argument("--config", type=str, default=None, help="JSON config file")
        for name, (typ, _, help_text) in {**_COMMON, **options}.items():
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, dest=name, action="store_const", const=True,
                                default=None, help=help_text)
            else:
                sp.add_argument(flag, dest=name, type=typ, default=None, help=help_text)
    return parser


def resolve_options(ns: argparse.Namespace) -> dict:
    """Merge CLI flags, config-file values and defaults; flags win."""
    table = {**_COMMON, **_OPTIONS[ns.command]}
    config = {}
    if ns.config is not None:
        path = Path(ns.config)
        if not path.exists():
            raise ValueError(f"config file not found: {path}")
        try:
            config = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid config file: {exc}") from exc
        if not isinstance(config, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(config) - set(table)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for name, (typ, default, _) in table.items():
        value = getattr(ns, name)
        if value is None and name in config:
            raw = config[name]
            value = raw if typ is bool else typ(raw)
        if value is None:
            if default is _REQUIRED:
                raise ValueError(f"missing required option --{name.replace('_', '-')}")
            value = default
        resolved[name] = value
    return resolved


def _setting(text: str) -> Setting:
    try:
        return _SETTINGS[text]
    except KeyError:
        raise ValueError(
            f"unknown setting {text!r}; expected one of {sorted(_SETTINGS)}"
        ) from None


def _params(opts: dict) -> EvalParams:
    return EvalParams(
        diffusion=DiffusionParams(
            alpha=opts["alpha"], kappa=opts["kappa"], k_neighbors=opts["k_neighbors"]
        ),
        train=TrainConfig(epochs=opts["epochs"], learning_rate=opts["learning_rate"]),
    )


def _load(opts: dict, key: str = "features"):
    return l2_normalize(load_feature_set(opts[key]))


def _outdir(opts: dict) -> Path:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommand handlers (each returns the one-line summary)


def _cmd_synth(opts: dict) -> str:
    sep_values = _comma_floats(opts["separation"])
    separation = sep_values[0] if len(sep_values) == 1 else sep_values
    fs = synth_generate(
        num_classes=opts["classes"],
        per_class=opts["per_class"],
        dim=opts["dim"],
        separation=separation,
        spread=opts["spread"],
        seed=opts["seed"],
    )
    out = _outdir(opts) / "features.fsf1"
    save_feature_set(fs, out, dataset_name=opts["name"], split_name="synthetic")
    return f"synth: wrote {out} ({fs.num_rows} rows, {fs.num_classes} classes, dim {fs.dim})"


def _spec(opts: dict, test_key: str = "test") -> EpisodeSpec:
    return EpisodeSpec(
        n_way=opts["way"],
        k_shot=opts["shot"],
        q_query=opts.get("query", 0),
        test_per_class=opts.get(test_key, 0) or 0,
        first_class_fraction=opts.get("unbalanced_p"),
        seed=opts["seed"],
    )


def _cmd_sample(opts: dict) -> str:
    fs = _load(opts)
    episode = sample_episode(fs, _spec(opts))
    out = _outdir(opts) / "episode.json"
    out.write_text(episode.to_json(), encoding="utf-8")
    return f"sample: wrote {out} (classes {list(episode.class_ids)})"


_PLOT_LABELS = {
    "lr_loss": "LR loss",
    "similarity": "Similarity",
    "db_score": "DB score",
    "nth_egv": "N-th eigenvalue",
    "lr_conf_log": "LR confidence (-log)",
    "lr_conf_mmp": "LR confidence",
}


def _cmd_gauge(opts: dict) -> str:
    from .harness import _map_outcomes  # episode mapping shared with the harness

    fs = _load(opts)
    setting = _setting(opts["setting"])
    spec = _spec(opts)
    outcomes = _map_outcomes(
        fs, spec, setting, _params(opts), opts["seed"], opts["n_tasks"], opts["jobs"]
    )
    reports = [outcome_to_report(o, i, setting, spec) for i, o in enumerate(outcomes)]
    out = _outdir(opts)
    write_reports_csv(reports, out / "reports.csv")
    plotted = 0
    if opts["plot"]:
        ylabel = "ARI" if setting is Setting.UNSUPERVISED else "Accuracy (%)"
        scale = 1.0 if setting is Setting.UNSUPERVISED else 100.0
        for gauge, label in _PLOT_LABELS.items():
            values = [r.gauge_value(gauge) for r in reports]
            if any(v is None for v in values):
                continue
            svg = scatter_svg(
                values, [r.performance * scale for r in reports], label, ylabel
            )
            (out / f"scatter_{gauge}.svg").write_text(svg, encoding="utf-8")
            plotted += 1
    note = f" and {plotted} scatter plots" if plotted else ""
    return f"gauge: wrote {out / 'reports.csv'} ({len(reports)} tasks){note}"


def _cmd_correlate(opts: dict) -> str:
    fs = _load(opts)
    setting = _setting(opts["setting"])
    grid = parse_grid(opts["grid"])
    study = run_correlation_study(
        fs, setting, grid, opts["n_tasks"], opts["seed"], _params(opts), opts["jobs"]
    )
    out = _outdir(opts)
    (out / "points.csv").write_text(study_to_csv(study), encoding="utf-8")
    reports = [r for point in study.points for r in point.reports]
    write_reports_csv(reports, out / "reports.csv")
    n_corr = sum(len(p.correlations) for p in study.points)
    return (
        f"correlate: wrote {out / 'points.csv'} ({len(study.points)} points, "
        f"{n_corr} correlations) and reports.csv ({len(reports)} rows)"
    )


def _cmd_variance(opts: dict) -> str:
    fs = _load(opts)
    spec = EpisodeSpec(
        n_way=opts["way"], k_shot=opts["shot"], q_query=0,
        test_per_class=opts["test"], seed=opts["seed"],
    )
    result = run_variance_attribution(
        fs, spec, opts["outer"], opts["inner"], opts["seed"],
        _params(opts), opts["pool_size"], opts["jobs"],
    )
    out = _outdir(opts) / "variance.csv"
    lines = [
        "std_random,fixed_classes_mean_std,fixed_classes_std_of_std,"
        "fixed_shots_mean_std,fixed_shots_std_of_std,outer,inner",
        f"{result.std_random!r},{result.fixed_classes_mean_std!r},"
        f"{result.fixed_classes_std_of_std!r},{result.fixed_shots_mean_std!r},"
        f"{result.fixed_shots_std_of_std!r},{result.outer},{result.inner}",
    ]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return (
        f"variance: random {result.std_random:.4f}, fixed-classes "
        f"{result.fixed_classes_mean_std:.4f}, fixed-shots "
        f"{result.fixed_shots_mean_std:.4f} -> {out}"
    )


def _cmd_confusion(opts: dict) -> str:
    fs = _load(opts)
    out = _outdir(opts)
    if opts["base_features"]:
        base = _load(opts, "base_features")
        result = bipartite_confusion(
            base, fs, opts["edges_per_vertex"], opts["runs"], opts["seed"],
            opts["top_edges"],
        )
        (out / "bipartite.dot").write_text(bipartite_to_dot(result), encoding="utf-8")
        text = "".join(f"{b} {n} {s:.6f}\n" for b, n, s in result.edges)
        (out / "bipartite.txt").write_text(text, encoding="utf-8")
        return f"confusion: wrote {out / 'bipartite.dot'} ({len(result.edges)} edges)"
    class_ids = _comma_ints(opts["classes"]) if opts["classes"] else None
    matrix = overlap_matrix(
        fs, class_ids, opts["edges_per_vertex"], opts["runs"], opts["seed"]
    )
    n = len(matrix.class_ids)
    rows = ["class_a,class_b,score"]
    for i in range(n):
        for j in range(i + 1, n):
            rows.append(
                f"{matrix.class_names[i]},{matrix.class_names[j]},{matrix.scores[i, j]!r}"
            )
    (out / "overlap.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out / "overlap.dot").write_text(overlap_to_dot(matrix), encoding="utf-8")
    (out / "overlap.txt").write_text(overlap_edges_text(matrix), encoding="utf-8")
    return f"confusion: wrote overlap scores for {n} classes under {out}"


def _cmd_roc(opts: dict) -> str:
    fs_cal = _load(opts)
    fs_hold = _load(opts, "holdout_features")
    spec = _spec(opts)
    result = run_roc_prediction(
        fs_cal, fs_hold, opts["gauge"], spec, opts["n_tasks"], opts["seed"],
        accuracy_cut=opts["cut"], setting=_setting(opts["setting"]),
        params=_params(opts), target_sensibility=opts["target_sensibility"],
        jobs=opts["jobs"],
    )
    out = _outdir(opts)
    (out / "roc.csv").write_text(roc_to_csv(result), encoding="utf-8")
    (out / "confusion.txt").write_text(confusion_to_text(result), encoding="utf-8")
    (tp, fn), (fp, tn) = result.confusion_percent
    return (
        f"roc: gauge {result.gauge}, area {result.area:.3f}, operating point "
        f"({result.operating_point[0]:.3f}, {result.operating_point[1]:.3f}), "
        f"holdout confusion {tp:.0f}/{tn:.0f} -> {out}"
    )


def _cmd_predict_accuracy(opts: dict) -> str:
    fs = _load(opts)
    spec = EpisodeSpec(
        n_way=opts["way"], k_shot=opts["shot"], q_query=opts["query"],
        test_per_class=0, seed=opts["seed"],
    )
    result = run_accuracy_prediction(
        fs, spec, opts["n_tasks"], opts["seed"], _params(opts), opts["jobs"]
    )
    out = _outdir(opts)
    rows = ["task,predicted,realized"]
    rows += [
        f"{i},{p!r},{r!r}"
        for i, (p, r) in enumerate(zip(result.predicted, result.realized))
    ]
    (out / "predictions.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out / "prediction_summary.csv").write_text(
        "mae,mad_baseline,n_tasks\n"
        f"{result.mae!r},{result.mad_baseline!r},{result.n_tasks}\n",
        encoding="utf-8",
    )
    return (
        f"predict-accuracy: mae {result.mae:.4f} vs naive {result.mad_baseline:.4f} "
        f"over {result.n_tasks} tasks -> {out}"
    )


def _cmd_sweep_eigen(opts: dict) -> str:
    fs = _load(opts)
    setting = _setting(opts["setting"])
    spec = EpisodeSpec(
        n_way=max(2, _comma_ints(opts["ways"])[0]),
        k_shot=opts["shot"] if setting is not Setting.UNSUPERVISED else 0,
        q_query=opts["query"],
        test_per_class=0,
        seed=opts["seed"],
    )
    points = run_eigenindex_sweep(
        fs, setting, _comma_ints(opts["ways"]), spec, opts["n_tasks"], opts["seed"],
        _params(opts), opts["jobs"],
    )
    out = _outdir(opts) / "eigen_sweep.csv"
    rows = ["setting,n_way,r_at_n,best_index,r_at_best,n_tasks"]
    rows += [
        f"{setting.value},{p.n_way},{p.r_at_n!r},{p.best_index},{p.r_at_best!r},{p.n_tasks}"
        for p in points
    ]
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return f"sweep-eigen: wrote {out} ({len(points)} ways)"


def _cmd_sweep_knn(opts: dict) -> str:
    fs = _load(opts)
    setting = _setting(opts["setting"])
    k_grid = _comma_ints(opts["ks"])
    spec = EpisodeSpec(
        n_way=opts["way"],
        k_shot=opts["shot"] if setting is not Setting.UNSUPERVISED else 0,
        q_query=opts["query"],
        test_per_class=0,
        seed=opts["seed"],
    )
    study = run_knn_sweep(
        fs, setting, k_grid, spec, opts["n_tasks"], opts["seed"], _params(opts),
        opts["jobs"],
    )
    out = _outdir(opts) / "knn_sweep.csv"
    out.write_text(knn_sweep_to_csv(k_grid, study), encoding="utf-8")
    return f"sweep-knn: wrote {out} ({len(k_grid)} neighbor counts)"


def _cmd_active_label(opts: dict) -> str:
    fs = _load(opts)
    spec = EpisodeSpec(
        n_way=opts["way"], k_shot=opts["shot"], q_query=opts["query"],
        test_per_class=0, seed=opts["seed"],
    )
    result = run_active_labeling(
        fs, spec, _comma_ints(opts["budgets"]), opts["policy"], opts["n_tasks"],
        opts["seed"], _params(opts), opts["jobs"],
    )
    out = _outdir(opts) / "active.csv"
    rows = ["policy,budget,mean_accuracy,n_tasks"]
    rows += [
        f"{result.policy},{b},{acc!r},{result.n_tasks}"
        for b, acc in zip(result.budgets, result.mean_accuracy)
    ]
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return f"active-label: wrote {out} ({len(result.budgets)} budgets, policy {result.policy})"


_HANDLERS = {
    "synth": _cmd_synth,
    "sample": _cmd_sample,
    "gauge": _cmd_gauge,
    "correlate": _cmd_correlate,
    "variance": _cmd_variance,
    "confusion": _cmd_confusion,
    "roc": _cmd_roc,
    "predict-accuracy": _cmd_predict_accuracy,
    "sweep-eigen": _cmd_sweep_eigen,
    "sweep-knn": _cmd_sweep_knn,
    "active-label": _cmd_active_label,
}


def help_json() -> str:
    """Machine-readable description of every subcommand and option."""
    payload = {}
    for command, options in _OPTIONS.items():
        payload[command] = {
            name: {
                "flag": "--" + name.replace("_", "-"),
                "type": typ.__name__,
                "required": default is _REQUIRED,
                "default": None if default is _REQUIRED else default,
                "help": help_text,
            }
            for name, (typ, default, help_text) in {**_COMMON, **options}.items()
        }
    return json.dumps({"version": __version__, "commands": payload}, indent=2) + "\n"


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--help-json" in argv:
        sys.stdout.write(help_json())
        return EXIT_OK
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve_options(ns)
        summary = _HANDLERS[ns.command](opts)
    except (ValueError, FeatureFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
