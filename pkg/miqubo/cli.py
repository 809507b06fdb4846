"""Command-line front end: ``miqubo <command> --seed N [options]``."""
import argparse
import json
import logging
import platform
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from miqubo._version import get_versions
from miqubo.bench import (
    SelectionMatrix,
    cmi_selection_matrix,
    fit_selection_models,
    mi_selection_matrix,
    prefilter_by_mi,
    r2_sweep,
    restrict_table,
    selection_divergence,
)
from miqubo.config import RunConfig, deep_update
from miqubo.data import (
    CONCENTRATIONS,
    Dataset,
    DiscretizedTable,
    EncodedDataset,
    discretize,
    generate_synthetic,
    load_csv,
    one_hot_encode,
    write_csv,
)
from miqubo.exceptions import ConfigError, DataError, UserInputError
from miqubo.infotheory import MiReport, cmi_tensor, explained_variance_ratio, mi_report
from miqubo.plotting import plot_mi_ranking, plot_r2_sweep, plot_sparsity
from miqubo.qubo import build_miqubo, write_qubo
from miqubo.utils import file_digest, measure, read_json, write_frame, write_json

logger = logging.getLogger(__name__)

STAGES = ("mi-rank", "select", "evaluate")

# synthetic presets selectable by name on the command line
SYNTHETIC_PRESETS = {
    "high": dict(n_samples=1000, n_informative=2, n_redundant=0, n_noise=6, mi_concentration="high"),
    "low": dict(n_samples=500, n_informative=6, n_redundant=6, n_noise=8, mi_concentration="low"),
}


@dataclass
class Prepared:
    dataset: Dataset
    encoded: EncodedDataset
    table: DiscretizedTable
    report: MiReport


def load_dataset(config: RunConfig) -> Dataset:
    if config.input is not None:
        schema = {name: "categorical" for name in config.categorical}
        return load_csv(config.input, config.target, schema)
    return generate_synthetic(config.synthetic, config.bins)


def prepare(config: RunConfig) -> Prepared:
    dataset = load_dataset(config)
    encoded = one_hot_encode(dataset)
    if encoded.n_features == 0:
        raise DataError("The dataset has no feature columns")
    table = discretize(encoded, config.bins)
    report = mi_report(table, encoded.feature_names)
    return Prepared(dataset, encoded, table, report)


@measure
def cmd_mi_rank(config: RunConfig, prepared: Prepared) -> List[Path]:
    out = Path(config.output)
    payload = prepared.report.to_dict()
    payload["n_samples"] = prepared.encoded.n_samples
    payload["bins"] = config.bins
    payload["target"] = prepared.encoded.target_name
    try:
        payload["explained_variance_ratio"] = explained_variance_ratio(prepared.encoded).tolist()
    except DataError as error:
        logger.warning(f"Explained variance ratio skipped: {error}")
        payload["explained_variance_ratio"] = None
    return [
        write_json(payload, out / "mi_report.json"),
        write_frame(prepared.report.to_frame(), out / "mi_report.csv"),
        plot_mi_ranking(prepared.report, out / "mi_rank.svg"),
    ]


def compute_selections(config: RunConfig, prepared: Prepared):
    """MI and CMI selection matrices in encoded-column indices."""
    report, table = prepared.report, prepared.table
    columns = tuple(range(table.n_features))
    if config.prefilter is not None:
        columns = prefilter_by_mi(report, config.prefilter)
        table = restrict_table(table, columns)
        logger.info(f"Prefiltered to the {len(columns)} most informative features")
    tensor = cmi_tensor(table, n_jobs=config.n_jobs)
    k_values = config.k_values(len(columns))
    mi_rows = mi_selection_matrix(report, k_values)
    cmi_local, results, failures = cmi_selection_matrix(
        tensor, k_values, config.backend, config.solver_config()
    )
    cmi_rows = SelectionMatrix(
        "CMI",
        {k: tuple(columns[i] for i in row) for k, row in cmi_local.rows.items()},
        tuple(report.feature_names),
    )
    return tensor, mi_rows, cmi_rows, results, failures, columns


@measure
def cmd_select(config: RunConfig, prepared: Prepared) -> List[Path]:
    out = Path(config.output)
    tensor, mi_rows, cmi_rows, results, failures, columns = compute_selections(config, prepared)
    common = SelectionMatrix("MI", {k: mi_rows.rows[k] for k in cmi_rows.k_values})
    divergence = selection_divergence(common, cmi_rows)
    q = build_miqubo(tensor)

    records = []
    for k in mi_rows.k_values:
        result = results.get(k)
        records.append(
            {
                "k": k,
                "mi_indices": " ".join(map(str, mi_rows.rows[k])),
                "cmi_indices": " ".join(map(str, cmi_rows.rows[k])) if k in cmi_rows.rows else "",
                "mi_features": " ".join(mi_rows.names(k)),
                "cmi_features": " ".join(cmi_rows.names(k)) if k in cmi_rows.rows else "",
                "divergence": divergence.get(k, np.nan),
                "objective": result.objective if result else np.nan,
                "infeasible": k in failures,
            }
        )
    selection = {
        "dataset_hash": config.dataset_hash(),
        "backend": config.backend,
        "k_values": mi_rows.k_values,
        "feature_names": list(prepared.report.feature_names),
        "prefilter": list(columns) if config.prefilter is not None else None,
        "selections": {"MI": mi_rows.to_dict()["rows"], "CMI": cmi_rows.to_dict()["rows"]},
        "divergence": {str(k): v for k, v in divergence.items()},
        "objective": {str(k): r.objective for k, r in results.items()},
        "failures": {str(k): message for k, message in failures.items()},
    }
    stats = {str(k): r.result.to_dict(include_timing=False) for k, r in results.items()}
    return [
        write_json(selection, out / "selection.json"),
        write_frame(pd.DataFrame.from_records(records), out / "selection_matrix.csv"),
        write_json(tensor.to_dict(), out / "cmi_tensor.json"),
        write_frame(tensor.to_frame(), out / "cmi_tensor.csv"),
        write_qubo(q, out / "qubo.json"),
        write_qubo(q, out / "qubo.coo.txt"),
        write_json(stats, out / "solver_stats.json"),
        plot_sparsity(q, out / "qubo_sparsity.svg"),
    ]


def load_selections(path: Path, feature_names: Sequence[str], dataset_hash: str) -> List[SelectionMatrix]:
    payload = read_json(path)
    recorded = payload.get("dataset_hash")
    if recorded != dataset_hash:
        raise ConfigError(
            f"{path} was selected on a different dataset "
            f"({str(recorded)[:12]} against {dataset_hash[:12]}); rerun select"
        )
    rows = payload.get("selections")
    if not rows:
        raise DataError(f"{path} holds no selections")
    return [
        SelectionMatrix(method, {int(k): v for k, v in rows[method].items()}, tuple(feature_names))
        for method in ("MI", "CMI")
        if method in rows
    ]


@measure
def cmd_evaluate(config: RunConfig, prepared: Prepared, selection: Optional[Path] = None) -> List[Path]:
    out = Path(config.output)
    names = prepared.report.feature_names
    path = selection or out / "selection.json"
    if path.exists():
        selections = load_selections(path, names, config.dataset_hash())
    else:
        logger.info("No selection file found, computing selections inline")
        _, mi_rows, cmi_rows, _, _, _ = compute_selections(config, prepared)
        selections = [mi_rows, cmi_rows]
    sweep = r2_sweep(
        prepared.encoded,
        selections,
        config.split_config(),
        config.svr,
        n_jobs=config.n_jobs,
    )
    models = fit_selection_models(prepared.encoded, selections, config.svr)
    return [
        write_frame(sweep.to_frame(), out / "r2_sweep.csv"),
        write_json(sweep.to_dict(), out / "r2_sweep.json"),
        write_json([m.to_dict() for m in models], out / "svr_models.json"),
        plot_r2_sweep(sweep, out / "r2_plot.svg"),
    ]


def versions() -> Dict[str, str]:
    import joblib
    import matplotlib
    import scipy
    import sklearn
    import statsmodels

    return {
        "miqubo": get_versions()["version"],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "statsmodels": statsmodels.__version__,
        "joblib": joblib.__version__,
        "matplotlib": matplotlib.__version__,
    }


def write_manifest(config: RunConfig, stages: Dict[str, str], files: List[Path]) -> Path:
    out = Path(config.output)
    inventory = [
        {"path": path.relative_to(out).as_posix(), "sha256": file_digest(path), "bytes": path.stat().st_size}
        for path in sorted(set(files))
        if path.exists()
    ]
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seeds": config.seeds(),
        "versions": versions(),
        "stages": stages,
        "files": inventory,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    return write_json(manifest, out / "manifest.json")


@measure
def cmd_pipeline(config: RunConfig) -> List[Path]:
    """rank, select and evaluate into one run directory with a manifest.

    The manifest is written even when a stage fails, recording how far the
    run got.
    """
    stages = {name: "pending" for name in STAGES}
    files: List[Path] = []
    current = STAGES[0]
    try:
        prepared = prepare(config)
        for current, handler in zip(STAGES, (cmd_mi_rank, cmd_select, cmd_evaluate)):
            files += handler(config, prepared)
            stages[current] = "completed"
    except Exception:
        stages[current] = "failed"
        write_manifest(config, stages, files)
        raise
    files.append(write_manifest(config, stages, files))
    return files


def cmd_synth(config: RunConfig) -> List[Path]:
    if config.synthetic is None:
        raise UserInputError("synth needs a synthetic profile (--synthetic)")
    dataset = generate_synthetic(config.synthetic, config.bins)
    out = Path(config.output)
    return [
        write_csv(dataset, out / "synthetic.csv"),
        write_json(config.synthetic.to_dict(), out / "synthetic_profile.json"),
    ]


def _synthetic_option(value: str):
    if value in CONCENTRATIONS:
        return dict(SYNTHETIC_PRESETS[value])
    if value.lstrip().startswith("{"):
        try:
            return json.loads(value)
        except ValueError as error:
            raise argparse.ArgumentTypeError(f"invalid profile JSON: {error}")
    path = Path(value)
    if not path.exists():
        raise argparse.ArgumentTypeError(f"{value} is neither a preset, JSON nor a file")
    return read_json(path)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--seed", type=int, required=True, help="master seed")
    parser.add_argument("--input", "-i", help="input CSV file")
    parser.add_argument(
        "--synthetic",
        type=_synthetic_option,
        help=f"synthetic profile: one of {CONCENTRATIONS}, inline JSON or a JSON file",
    )
    parser.add_argument("--target", "-t", help="target column name")
    parser.add_argument("--categorical", help="comma-separated categorical columns")
    parser.add_argument("--bins", type=int)
    parser.add_argument("--output", "-o", help="run directory")
    parser.add_argument("--n-jobs", type=int, dest="n_jobs")


def _add_selection(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, help="select exactly k features")
    parser.add_argument("--k-min", type=int, dest="k_min")
    parser.add_argument("--k-max", type=int, dest="k_max")
    parser.add_argument("--backend", choices=("exhaustive", "sa", "tabu", "hybrid"))
    parser.add_argument("--prefilter", type=int, help="keep the M most informative features")


def _add_evaluation(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--splits", type=int, help="number of random train/test splits")
    parser.add_argument("--test-ratio", type=float, dest="test_ratio")
    parser.add_argument("--C", type=float, dest="C")
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--gamma", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="miqubo",
        description="Feature selection by mutual information QUBOs, with SVR evaluation.",
    )
    parser.add_argument("--version", action="version", version=get_versions()["version"])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    rank = commands.add_parser("mi-rank", help="rank features by mutual information")
    _add_common(rank)
    select = commands.add_parser("select", help="MIQUBO selections for a range of k")
    _add_common(select)
    _add_selection(select)
    evaluate = commands.add_parser("evaluate", help="SVR R2 of MI and CMI selections")
    _add_common(evaluate)
    _add_selection(evaluate)
    _add_evaluation(evaluate)
    evaluate.add_argument("--selection", type=Path, help="selection.json to evaluate")
    pipeline = commands.add_parser("pipeline", help="mi-rank, select and evaluate in one run")
    _add_common(pipeline)
    _add_selection(pipeline)
    _add_evaluation(pipeline)
    synth = commands.add_parser("synth", help="write a synthetic dataset as CSV")
    _add_common(synth)
    return parser


def overrides_from(args: argparse.Namespace) -> dict:
    values = vars(args)
    overrides = {
        key: values.get(key)
        for key in ("seed", "input", "synthetic", "target", "bins", "output", "n_jobs",
                    "k_min", "k_max", "backend", "prefilter")
    }
    if values.get("categorical"):
        overrides["categorical"] = [c.strip() for c in values["categorical"].split(",") if c.strip()]
    if values.get("k") is not None:
        overrides["k_min"] = overrides["k_max"] = values["k"]
    overrides["split"] = {"count": values.get("splits"), "test_ratio": values.get("test_ratio")}
    overrides["svr"] = {"C": values.get("C"), "epsilon": values.get("epsilon")}
    if values.get("gamma") is not None:
        overrides["svr"]["kernel"] = {"gamma": values["gamma"]}
    return overrides


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = overrides_from(args)
    if args.config is not None:
        return RunConfig.from_json(args.config, overrides)
    return RunConfig.from_dict(deep_update({}, overrides))


def run(args: argparse.Namespace) -> List[Path]:
    config = resolve_config(args)
    logger.info(f"Run configuration {config.config_hash()[:12]} writing to {config.output}")
    if args.command == "pipeline":
        return cmd_pipeline(config)
    if args.command == "synth":
        return cmd_synth(config)
    prepared = prepare(config)
    if args.command == "mi-rank":
        return cmd_mi_rank(config, prepared)
    if args.command == "select":
        return cmd_select(config, prepared)
    return cmd_evaluate(config, prepared, getattr(args, "selection", None))


def cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    try:
        for path in run(args):
            logger.info(f"Wrote {path}")
    except UserInputError as error:
        logger.error(str(error))
        return 2
    except Exception as error:
        logger.error(f"{type(error).__name__}: {error}")
        logger.debug("Traceback", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(cli())
