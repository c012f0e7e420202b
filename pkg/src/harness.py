"""
Experiment orchestration: the end-to-end GFC pipeline, the naive and
centralized baselines, epsilon sweeps, one-parameter ablations and the
epsilon scaling report.

Every run is a pure function of (config, method, epsilon, seed): the random
streams of each stage are derived from the config's master seed.
"""

import contextlib
import logging
import os
import time
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

import dataset
import experiment_config
import field
import heuristics
import local
import metrics
import privacy
import storable
import topology

logger = logging.getLogger(__name__)

TIMED_STAGES: List[str] = ["client", "field", "topology", "server"]
RESULT_COLUMNS: List[str] = (
    [
        "method",
        "epsilon",
        "seed",
        "ari",
        "nmi",
        "centroid_error",
        "wall_ms",
    ]
    + [f"{stage}_ms" for stage in TIMED_STAGES]
    + [
        "k",
        "delta",
        "alpha",
        "r",
        "n_probes",
        "levels_processed",
        "delta_sensitivity",
        "num_clients",
        "n_clusters",
    ]
    + [f"provenance_{tag}" for tag in topology.PROVENANCE_TAGS]
    + ["error"]
)
METRIC_COLUMNS: List[str] = ["ari", "nmi", "centroid_error"]
ABLATION_KEYS: Dict[str, str] = {
    "alpha": "overrides.alpha",
    "delta": "overrides.delta",
    "k": "overrides.k",
    "clients": "federation.num_clients",
}


class StageError(RuntimeError):
    stage: str

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@contextlib.contextmanager
def pipeline_stage(name: str, timings: Dict[str, float]) -> Iterator[None]:
    """
    Time a stage and tag anything it raises with the stage name.
    """
    start: float = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as ex:
        raise StageError(name, f"{type(ex).__name__}: {ex}") from ex
    finally:
        timings[name] = timings.get(name, 0.0) + (time.perf_counter() - start) * 1000.0


class RunResult(storable.Storable):
    """
    One (method, epsilon, seed) cell. Values hold the result columns; a
    failed cell keeps NaN metrics and the stage-tagged message in "error".
    """

    values: Dict[str, Any]
    config: Optional[experiment_config.ExperimentConfig]

    def __init__(
        self,
        values: Dict[str, Any],
        config: Optional[experiment_config.ExperimentConfig] = None,
    ) -> None:
        super().__init__()
        self.values = {column: values.get(column, np.nan) for column in RESULT_COLUMNS}
        if self.values["error"] is np.nan:
            self.values["error"] = None
        self.config = config

    @classmethod
    def failed(
        cls,
        method: str,
        epsilon: float,
        seed: int,
        error: str,
        config: Optional[experiment_config.ExperimentConfig] = None,
    ) -> "RunResult":
        return cls({"method": method, "epsilon": epsilon, "seed": seed, "error": error}, config)

    @property
    def is_na(self) -> bool:
        return self.values["error"] is not None or bool(np.isnan(self.values["ari"]))

    def __getitem__(self, column: str) -> Any:
        return self.values[column]

    def to_row(self) -> Dict[str, Any]:
        return dict(self.values)

    def _save_dependencies(self, save_dir: str = "./"):
        if self.config is not None:
            self.config.save(save_dir)

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        dict_representation["values"] = self.denumpyify(self.values)
        if self.config is None:
            dict_representation["config"] = None
        elif by_id:
            dict_representation["config"] = self.config.get_id()
        else:
            dict_representation["config"] = self.config.get_dict_representation(by_id=False)
        return dict_representation


def load_dataset(config: experiment_config.ExperimentConfig) -> dataset.Dataset:
    data_settings: Dict[str, Any] = config.data
    if data_settings["source"] == "csv":
        data: dataset.Dataset = dataset.load_csv(
            data_settings["path"], data_settings["label_column"]
        )
    else:
        data = dataset.generate_blobs(
            data_settings["n_clusters"],
            data_settings["points_per_cluster"],
            data_settings["d"],
            data_settings["spread"],
            data_settings["separation"],
            data_settings["seed"],
        )
    return dataset.normalize(data, data_settings["normalize"])


def target_clusters(config: experiment_config.ExperimentConfig, data: dataset.Dataset) -> int:
    """
    n_c: explicit setting, else the number of ground-truth classes, else the
    generator's cluster count.
    """
    if config.settings["n_clusters"] is not None:
        return int(config.settings["n_clusters"])
    if data.n_classes > 0:
        return data.n_classes
    return int(config.data["n_clusters"])


def sensitivity(config: experiment_config.ExperimentConfig, data: dataset.Dataset) -> float:
    value: Any = config.settings["privacy"]["delta_sensitivity"]
    if value == "auto":
        return privacy.max_l1_norm(data.points)
    return float(value)


def connectivity_radius(
    sources: Sequence[local.WeightedCentroid],
    potential_field: field.PotentialField,
    floor_factor: float,
) -> float:
    """
    Percentile radius of the sources, never below floor_factor mean probe
    spacings (floor_factor = 0 disables the floor).
    """
    radius: float = topology.radius_heuristic(sources)
    floor: float = floor_factor * potential_field.probe_spacing()
    if floor > radius:
        logger.debug("Radius %.4g raised to probe-spacing floor %.4g", radius, floor)
        return floor
    return radius


class ClientRound:
    """
    Outcome of the single communication round: shards, uploads and the local
    k that was requested.
    """

    shards: List[dataset.ClientShard]
    uploads: List[local.ClientUpload]
    k: int

    def __init__(
        self, shards: List[dataset.ClientShard], uploads: List[local.ClientUpload], k: int
    ) -> None:
        self.shards = shards
        self.uploads = uploads
        self.k = k

    @property
    def sources(self) -> List[local.WeightedCentroid]:
        return [centroid for upload in self.uploads for centroid in upload.centroids]


def client_round(
    config: experiment_config.ExperimentConfig,
    data: dataset.Dataset,
    epsilon: float,
    seed: int,
    timings: Dict[str, float],
) -> ClientRound:
    """
    Partition, then run every client phase. Streams do not depend on the
    method, so all methods see the same uploads.
    """
    overrides: Dict[str, Any] = config.overrides
    with pipeline_stage("partition", timings):
        spec: dataset.PartitionSpec = dataset.PartitionSpec(
            config.num_clients,
            max(1, data.n_classes or int(config.data["n_clusters"])),
            experiment_config.derive_seed(config.master_seed, epsilon, seed, "partition"),
        )
        shards: List[dataset.ClientShard] = dataset.partition_non_iid(data, spec)

    with pipeline_stage("client", timings):
        params: privacy.PrivacyParams = privacy.PrivacyParams(epsilon, sensitivity(config, data))
        k: int = overrides["k"] if overrides["k"] is not None else heuristics.heuristic_k(data.n)
        streams: List[np.random.SeedSequence] = np.random.SeedSequence(
            experiment_config.derive_seed(config.master_seed, epsilon, seed, "client")
        ).spawn(len(shards))
        uploads: List[local.ClientUpload] = []
        for shard, stream in zip(shards, streams):
            rng: np.random.Generator = np.random.default_rng(stream)
            cfg: local.KMeansConfig = local.KMeansConfig(
                max(1, min(int(k), shard.n)),
                overrides["kmeans_max_iters"],
                overrides["kmeans_tol"],
                int(rng.integers(2**32)),
            )
            centroids: List[local.WeightedCentroid] = local.client_phase(
                shard,
                params,
                cfg,
                sigma_override=overrides["sigma"],
                rng=rng,
                mass_formula=overrides["mass_formula"],
            )
            uploads.append(local.ClientUpload(shard.client_id, centroids))
    logger.debug(
        "%d clients uploaded %d centroids", len(uploads), sum(len(u.centroids) for u in uploads)
    )
    return ClientRound(shards, uploads, int(k))


class GFCServerResult:
    potential_field: field.PotentialField
    tree: topology.MergeTree
    global_centroids: topology.GlobalCentroids
    field_cfg: field.FieldConfig
    filtration_cfg: topology.FiltrationConfig

    def __init__(
        self,
        potential_field: field.PotentialField,
        tree: topology.MergeTree,
        global_centroids: topology.GlobalCentroids,
        field_cfg: field.FieldConfig,
        filtration_cfg: topology.FiltrationConfig,
    ) -> None:
        self.potential_field = potential_field
        self.tree = tree
        self.global_centroids = global_centroids
        self.field_cfg = field_cfg
        self.filtration_cfg = filtration_cfg


def gfc_server(
    config: experiment_config.ExperimentConfig,
    sources: List[local.WeightedCentroid],
    n_clusters: int,
    epsilon: float,
    seed: int,
    timings: Dict[str, float],
) -> GFCServerResult:
    overrides: Dict[str, Any] = config.overrides
    with pipeline_stage("field", timings):
        alpha: float = (
            overrides["alpha"]
            if overrides["alpha"] is not None
            else heuristics.heuristic_alpha(epsilon)
        )
        softening: float = (
            overrides["delta"]
            if overrides["delta"] is not None
            else heuristics.heuristic_softening(epsilon)
        )
        field_cfg: field.FieldConfig = field.FieldConfig(
            alpha,
            softening,
            overrides["p"],
            experiment_config.derive_seed(config.master_seed, epsilon, seed, "field", "gfc"),
        )
        potential_field: field.PotentialField = field.build_field(sources, field_cfg)

    with pipeline_stage("topology", timings):
        radius: float = (
            float(overrides["r"])
            if overrides["r"] is not None
            else connectivity_radius(
                sources, potential_field, overrides["radius_floor_factor"]
            )
        )
        # the level count is alpha * |S|, capped
        filtration_cfg: topology.FiltrationConfig = topology.FiltrationConfig(
            n_clusters,
            radius,
            min(int(overrides["max_levels"]), field_cfg.probe_count(len(sources))),
            overrides["direction"],
        )
        tree, _ = topology.build_merge_tree(potential_field, filtration_cfg)
        global_centroids: topology.GlobalCentroids = topology.extract_centroids(
            tree, potential_field, filtration_cfg
        )
    return GFCServerResult(potential_field, tree, global_centroids, field_cfg, filtration_cfg)


def evaluate(
    data: dataset.Dataset,
    centroids: np.ndarray,
    delta_sensitivity: float,
    values: Dict[str, Any],
) -> None:
    """
    Score the global centroids on the clipped (noise-free) points. Undefined
    metrics stay NaN.
    """
    evaluation_points: np.ndarray = privacy.clip_l1(data.points, delta_sensitivity)
    predicted: np.ndarray = metrics.assign(evaluation_points, centroids)
    if data.labels is None:
        logger.warning("Dataset has no labels, metrics are NA")
        return
    values["ari"] = metrics.ari(data.labels, predicted)
    values["nmi"] = metrics.nmi(data.labels, predicted)
    reference: np.ndarray = dataset.Dataset(evaluation_points, data.labels).label_means()
    if reference.shape[0] == centroids.shape[0]:
        values["centroid_error"] = metrics.centroid_error(centroids, reference)


def _finish(
    config: experiment_config.ExperimentConfig,
    values: Dict[str, Any],
    timings: Dict[str, float],
    start: float,
) -> "RunResult":
    if config.output["timings"]:
        values["wall_ms"] = (time.perf_counter() - start) * 1000.0
        for stage in TIMED_STAGES:
            values[f"{stage}_ms"] = timings.get(stage, np.nan)
    if np.isnan(values.get("ari", np.nan)):
        logger.warning(
            "%s eps=%g seed=%d: ARI undefined, recorded as NA",
            values["method"],
            values["epsilon"],
            values["seed"],
        )
    return RunResult(values, config)


def _prepare(
    config: experiment_config.ExperimentConfig,
    data: Optional[dataset.Dataset],
    timings: Dict[str, float],
) -> Tuple[dataset.Dataset, int, float]:
    with pipeline_stage("data", timings):
        if data is None:
            data = load_dataset(config)
        return data, target_clusters(config, data), sensitivity(config, data)


def run_gfc(
    config: experiment_config.ExperimentConfig,
    epsilon: float,
    seed: int,
    data: Optional[dataset.Dataset] = None,
) -> RunResult:
    start: float = time.perf_counter()
    timings: Dict[str, float] = {}
    data, n_clusters, delta_sensitivity = _prepare(config, data, timings)
    round_: ClientRound = client_round(config, data, epsilon, seed, timings)
    server: GFCServerResult = gfc_server(
        config, round_.sources, n_clusters, epsilon, seed, timings
    )

    values: Dict[str, Any] = {
        "method": "gfc",
        "epsilon": float(epsilon),
        "seed": int(seed),
        "k": round_.k,
        "delta": server.field_cfg.softening,
        "alpha": server.field_cfg.alpha,
        "r": server.filtration_cfg.radius,
        "n_probes": server.potential_field.n_probes,
        "levels_processed": server.tree.levels_processed,
        "delta_sensitivity": delta_sensitivity,
        "num_clients": len(round_.shards),
        "n_clusters": n_clusters,
    }
    for tag, count in server.global_centroids.provenance_counts().items():
        values[f"provenance_{tag}"] = count
    with pipeline_stage("evaluate", timings):
        evaluate(data, server.global_centroids.centroids, delta_sensitivity, values)
    return _finish(config, values, timings, start)


def gfc_artifacts(
    config: experiment_config.ExperimentConfig,
    epsilon: float,
    seed: int,
    data: Optional[dataset.Dataset] = None,
) -> GFCServerResult:
    """
    Field, merge tree and centroids of one GFC run, for export.
    """
    timings: Dict[str, float] = {}
    data, n_clusters, _ = _prepare(config, data, timings)
    round_: ClientRound = client_round(config, data, epsilon, seed, timings)
    return gfc_server(config, round_.sources, n_clusters, epsilon, seed, timings)


def run_baseline_naive(
    config: experiment_config.ExperimentConfig,
    epsilon: float,
    seed: int,
    data: Optional[dataset.Dataset] = None,
) -> RunResult:
    """
    Same client round, then plain k-means with k = n_c over the uploaded
    centroid positions (masses ignored).
    """
    start: float = time.perf_counter()
    timings: Dict[str, float] = {}
    data, n_clusters, delta_sensitivity = _prepare(config, data, timings)
    round_: ClientRound = client_round(config, data, epsilon, seed, timings)

    with pipeline_stage("server", timings):
        positions, _ = field.source_arrays(round_.sources)
        centroids, _ = local.kmeans(
            positions,
            local.KMeansConfig(
                n_clusters,
                config.overrides["kmeans_max_iters"],
                config.overrides["kmeans_tol"],
                experiment_config.derive_seed(config.master_seed, epsilon, seed, "server", "naive"),
            ),
        )

    values: Dict[str, Any] = {
        "method": "naive",
        "epsilon": float(epsilon),
        "seed": int(seed),
        "k": round_.k,
        "delta_sensitivity": delta_sensitivity,
        "num_clients": len(round_.shards),
        "n_clusters": n_clusters,
    }
    with pipeline_stage("evaluate", timings):
        evaluate(data, centroids, delta_sensitivity, values)
    return _finish(config, values, timings, start)


def run_centralized(
    config: experiment_config.ExperimentConfig,
    epsilon: float,
    seed: int,
    data: Optional[dataset.Dataset] = None,
) -> RunResult:
    """
    Non-federated, non-private reference: k-means with k = n_c on the
    evaluation points. Epsilon only selects the random stream.
    """
    start: float = time.perf_counter()
    timings: Dict[str, float] = {}
    data, n_clusters, delta_sensitivity = _prepare(config, data, timings)

    with pipeline_stage("server", timings):
        centroids, _ = local.kmeans(
            privacy.clip_l1(data.points, delta_sensitivity),
            local.KMeansConfig(
                n_clusters,
                config.overrides["kmeans_max_iters"],
                config.overrides["kmeans_tol"],
                experiment_config.derive_seed(
                    config.master_seed, epsilon, seed, "server", "centralized"
                ),
            ),
        )

    values: Dict[str, Any] = {
        "method": "centralized",
        "epsilon": float(epsilon),
        "seed": int(seed),
        "delta_sensitivity": delta_sensitivity,
        "num_clients": 1,
        "n_clusters": n_clusters,
    }
    with pipeline_stage("evaluate", timings):
        evaluate(data, centroids, delta_sensitivity, values)
    return _finish(config, values, timings, start)


RUNNERS: Dict[str, Any] = {
    "gfc": run_gfc,
    "naive": run_baseline_naive,
    "centralized": run_centralized,
}


def run_method(
    config: experiment_config.ExperimentConfig,
    method: str,
    epsilon: float,
    seed: int,
    data: Optional[dataset.Dataset] = None,
) -> RunResult:
    if method not in RUNNERS:
        raise ValueError(f'Method "{method}" is not one of {sorted(RUNNERS)}')
    return RUNNERS[method](config, epsilon, seed, data)


def _run_cell(
    config: experiment_config.ExperimentConfig,
    method: str,
    epsilon: float,
    seed: int,
    data: Optional[dataset.Dataset],
) -> RunResult:
    try:
        return run_method(config, method, epsilon, seed, data)
    except Exception as ex:
        message: str = str(ex) if isinstance(ex, StageError) else f"[run] {type(ex).__name__}: {ex}"
        logger.warning("%s eps=%g seed=%d failed: %s", method, epsilon, seed, message)
        return RunResult.failed(method, epsilon, seed, message, config)


def sort_results(results: List[RunResult]) -> List[RunResult]:
    method_rank: Dict[str, int] = {m: i for i, m in enumerate(experiment_config.METHODS)}
    return sorted(
        results,
        key=lambda r: (method_rank.get(r["method"], len(method_rank)), -r["epsilon"], r["seed"]),
    )


def results_frame(results: List[RunResult]) -> pd.DataFrame:
    return pd.DataFrame([result.to_row() for result in results], columns=RESULT_COLUMNS)


def aggregate_results(
    frame: pd.DataFrame, group_columns: Sequence[str] = ("method", "epsilon"), percent: bool = False
) -> pd.DataFrame:
    """
    Mean and population std per group over the non-NA cells, with the NA
    count. ARI and NMI are multiplied by 100 when percent is set.
    """
    groups: List[str] = list(group_columns)
    scaled: pd.DataFrame = frame.copy()
    if percent:
        scaled[["ari", "nmi"]] = scaled[["ari", "nmi"]] * 100.0
    grouped = scaled.groupby(groups, sort=False)
    table: pd.DataFrame = grouped.size().rename("runs").to_frame()
    for column in METRIC_COLUMNS:
        table[f"{column}_mean"] = grouped[column].mean()
        table[f"{column}_std"] = grouped[column].std(ddof=0)
    table["na_count"] = grouped["ari"].apply(lambda values: int(values.isna().sum()))
    return table.reset_index()


def sweep(
    config: experiment_config.ExperimentConfig,
    data: Optional[dataset.Dataset] = None,
) -> Tuple[List[RunResult], pd.DataFrame]:
    """
    Every method for every (epsilon, seed). Failed cells become NA rows.
    """
    if data is None:
        data = load_dataset(config)
    cells: List[Tuple[str, float, int]] = [
        (method, epsilon, seed)
        for epsilon in config.epsilons
        for seed in config.seeds
        for method in config.methods
    ]
    logger.info("Sweep over %d cells with %d worker(s)", len(cells), config.workers)
    results: List[RunResult] = Parallel(n_jobs=config.workers)(
        delayed(_run_cell)(config, method, epsilon, seed, data)
        for method, epsilon, seed in cells
    )
    results = sort_results(results)
    aggregate: pd.DataFrame = aggregate_results(
        results_frame(results), percent=config.output["percent"]
    )
    logger.info("Sweep done, %d NA cell(s)", sum(result.is_na for result in results))
    return results, aggregate


def ablate(
    config: experiment_config.ExperimentConfig,
    param: str,
    values: Optional[Sequence[Any]] = None,
    data: Optional[dataset.Dataset] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Sweep once per value of one parameter (alpha, delta, k or clients) while
    the others keep their configured or heuristic values.
    """
    if param not in ABLATION_KEYS:
        raise ValueError(f'Ablation parameter "{param}" is not one of {sorted(ABLATION_KEYS)}')
    grid: List[Any] = list(values) if values is not None else config.settings["ablation"][param]
    if not grid:
        raise ValueError(f"No values to ablate for {param}")
    if data is None:
        data = load_dataset(config)

    frames: List[pd.DataFrame] = []
    for value in grid:
        logger.info("Ablation %s=%s", param, value)
        results, _ = sweep(config.updated({ABLATION_KEYS[param]: value}), data)
        frame: pd.DataFrame = results_frame(results)
        frame.insert(0, "value", value)
        frame.insert(0, "param", param)
        frames.append(frame)
    combined: pd.DataFrame = pd.concat(frames, ignore_index=True)
    return combined, aggregate_results(
        combined, ("param", "value", "method", "epsilon"), config.output["percent"]
    )


class ScalingReport(storable.Storable):
    """
    Mean centroid error per epsilon and the log-log regression of the error
    above the noise-free floor against 1/epsilon.
    """

    table: pd.DataFrame
    floor_error: float
    slope: float
    intercept: float
    slope_stderr: float
    ci_low: float
    ci_high: float

    def __init__(
        self,
        table: pd.DataFrame,
        floor_error: float,
        slope: float,
        intercept: float,
        slope_stderr: float,
        ci_low: float,
        ci_high: float,
    ) -> None:
        super().__init__()
        self.table = table
        self.floor_error = floor_error
        self.slope = slope
        self.intercept = intercept
        self.slope_stderr = slope_stderr
        self.ci_low = ci_low
        self.ci_high = ci_high

    def get_dict_representation(self, by_id: bool = True) -> dict:
        dict_representation: dict = super().get_dict_representation(by_id=by_id)
        for key in ("floor_error", "slope", "intercept", "slope_stderr", "ci_low", "ci_high"):
            dict_representation[key] = self.denumpyify(getattr(self, key))
        dict_representation["table"] = self.denumpyify(self.table.to_dict(orient="list"))
        return dict_representation


def _mean_centroid_error(
    config: experiment_config.ExperimentConfig,
    epsilon: float,
    data: dataset.Dataset,
) -> float:
    errors: List[float] = [
        _run_cell(config, "gfc", epsilon, seed, data)["centroid_error"] for seed in config.seeds
    ]
    return float(np.nanmean(errors)) if not np.all(np.isnan(errors)) else float("nan")


def epsilon_scaling_report(
    config: experiment_config.ExperimentConfig,
    epsilons: Optional[Sequence[float]] = None,
    data: Optional[dataset.Dataset] = None,
) -> ScalingReport:
    """
    Regress log(mean centroid error - floor) on log(1/epsilon). The floor is
    the mean error at scaling.floor_epsilon; an O(1/epsilon) error gives a
    slope near 1.
    """
    if epsilons is None:
        epsilons = config.settings["scaling"]["epsilons"]
    grid: List[float] = [float(e) for e in epsilons]
    if len(grid) < 2:
        raise ValueError(f"The scaling regression needs at least 2 epsilons, got {len(grid)}")
    if data is None:
        data = load_dataset(config)

    floor_epsilon: float = float(config.settings["scaling"]["floor_epsilon"])
    floor_error: float = _mean_centroid_error(config, floor_epsilon, data)
    if np.isnan(floor_error):
        raise ValueError("No centroid error at the floor epsilon (labels required)")
    mean_errors: List[float] = [_mean_centroid_error(config, e, data) for e in grid]

    table: pd.DataFrame = pd.DataFrame(
        {
            "epsilon": grid,
            "inverse_epsilon": [1.0 / e for e in grid],
            "mean_centroid_error": mean_errors,
        }
    )
    table["excess_error"] = table["mean_centroid_error"] - floor_error
    usable: pd.DataFrame = table[table["excess_error"] > 0]
    if len(usable) < 2:
        raise ValueError("Fewer than 2 epsilons have an error above the noise-free floor")

    fit: Any = stats.linregress(
        np.log(usable["inverse_epsilon"].to_numpy()), np.log(usable["excess_error"].to_numpy())
    )
    half_width: float = float("nan")
    if len(usable) > 2:
        half_width = float(stats.t.ppf(0.975, len(usable) - 2)) * float(fit.stderr)
    logger.info("Scaling slope %.3f (floor error %.4g)", fit.slope, floor_error)
    return ScalingReport(
        table,
        floor_error,
        float(fit.slope),
        float(fit.intercept),
        float(fit.stderr),
        float(fit.slope) - half_width,
        float(fit.slope) + half_width,
    )


def write_results(
    results: List[RunResult],
    aggregate: pd.DataFrame,
    config: experiment_config.ExperimentConfig,
    output_dir: Optional[str] = None,
) -> Tuple[str, str]:
    """
    Results and aggregate CSVs (NA for missing values), plus one JSON manifest
    per run when enabled.
    """
    directory: str = output_dir or config.output["dir"]
    os.makedirs(directory, exist_ok=True)
    results_path: str = os.path.join(directory, config.output["results_csv"])
    aggregate_path: str = os.path.join(directory, config.output["aggregate_csv"])
    results_frame(results).to_csv(results_path, index=False, na_rep="NA")
    aggregate.to_csv(aggregate_path, index=False, na_rep="NA")
    if config.output["manifests"]:
        manifest_dir: str = os.path.join(directory, "manifests")
        for result in results:
            result.save(manifest_dir)
    logger.info("Wrote %s and %s", results_path, aggregate_path)
    return results_path, aggregate_path
