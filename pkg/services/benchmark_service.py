import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config.settings import settings
from geometry.sampling import NeighborIndex, farthest_point_sampling, random_subset
from geometry.transforms import (
    PointCloud,
    apply_transform,
    invert,
    random_rigid_transform,
    rotation_error,
    translation_error,
)
from geometry.utils import ensure_parent_directory
from pipeline.refinement import DenoiseConfig
from pipeline.registrar import PipelineConfig, Registrar
from services.feature_service import FeatureBackend, FeatureService
from services.icp_service import IcpConfig, icp
from services.evaluation import summarize
from services.shape_generator import add_noise, generate_shape

METHODS = ("coarse", "refined", "icp")
AXES_MODES = {"x": "x", "y": "y", "z": "z", "xyz": "xyz"}
PAIRING_MODES = ("exact", "disjoint")
REPORT_COLUMNS = ["k", "level", "method", "mean_RE", "std_RE", "median_RE", "mean_TE", "std_TE", "median_TE", "n_fail"]


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Large-rotation benchmark protocol.

    Each trial draws a base cloud, takes a random initial sample for source
    and target, reduces each to input_size points by FPS, jitters the source
    and rotates it by exactly one level about the configured axes.
    """
    levels: Tuple[float, ...] = settings.ROTATION_LEVELS
    axes_mode: str = settings.AXES_MODE
    trials: int = settings.TRIALS_PER_LEVEL
    noise_sigma: float = settings.NOISE_SIGMA
    initial_sample: int = settings.INITIAL_SAMPLE
    input_size: int = settings.INPUT_SIZE
    k_sweep: Tuple[int, ...] = (settings.TOP_K,)
    seed: int = settings.SEED
    shape: str = settings.BASE_SHAPE
    base_size: int = settings.BASE_CLOUD_SIZE
    pairing_mode: str = settings.PAIRING_MODE
    methods: Tuple[str, ...] = settings.BENCH_METHODS
    temperature: float = settings.MATCH_TEMPERATURE
    subsample_chain: Tuple[int, ...] = settings.SUBSAMPLE_CHAIN
    denoise_p: int = settings.DENOISE_NEIGHBORS
    denoise_temperature: float = settings.DENOISE_TEMPERATURE
    icp_max_iterations: int = settings.ICP_MAX_ITERATIONS
    workers: int = settings.BENCH_WORKERS

    def __post_init__(self):
        for name in ("levels", "k_sweep", "methods", "subsample_chain"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise sigma must be non-negative, got {self.noise_sigma}")
        if not self.levels:
            raise ValueError("at least one rotation level is required")
        if any(abs(level) > 180 for level in self.levels):
            raise ValueError(f"rotation levels must lie in [-180, 180], got {self.levels}")
        if self.axes_mode not in AXES_MODES:
            raise ValueError(f"axes mode must be one of {sorted(AXES_MODES)}, got '{self.axes_mode}'")
        if self.pairing_mode not in PAIRING_MODES:
            raise ValueError(f"pairing mode must be one of {PAIRING_MODES}, got '{self.pairing_mode}'")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if not self.k_sweep or any(k < 1 for k in self.k_sweep):
            raise ValueError(f"k sweep must hold positive values, got {self.k_sweep}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown experiment settings: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict:
        return {name: list(value) if isinstance(value, tuple) else value for name, value in asdict(self).items()}

    def pipeline_config(self, k: int) -> PipelineConfig:
        return PipelineConfig(
            input_size=self.input_size,
            subsample_chain=self.subsample_chain,
            k=k,
            temperature=self.temperature,
            refine="refined" in self.methods,
            denoise=DenoiseConfig(self.denoise_p, self.denoise_temperature),
        )


@dataclass(frozen=True)
class TrialResult:
    level: float
    method: str
    k: int
    trial: int
    re: float = math.nan
    te: float = math.nan
    residual: float = math.nan
    wall_time: float = 0.0
    failed: bool = False
    error: Optional[str] = None

    def __post_init__(self):
        if not self.failed and (self.re < 0 or self.te < 0):
            raise ValueError("rotation and translation errors must be non-negative")


@dataclass(frozen=True)
class ReportRow:
    level: float
    method: str
    re: Dict[str, float]
    te: Dict[str, float]
    n: int
    n_fail: int


@dataclass(frozen=True)
class ReportBlock:
    k: int
    rows: List[ReportRow]


@dataclass
class BenchmarkReport:
    config: ExperimentConfig
    blocks: List[ReportBlock]
    trials: List[TrialResult] = field(default_factory=list)

    def row(self, level: float, method: str, k: Optional[int] = None) -> ReportRow:
        block = self.blocks[0] if k is None else next(b for b in self.blocks if b.k == k)
        return next(r for r in block.rows if r.level == level and r.method == method)


def pair_nearest_ids(source: PointCloud, target: PointCloud) -> PointCloud:
    """
    Give each target point the id of its nearest source point.

    Disjoint samples share no exact correspondences, so this makes oracle
    descriptors an idealization rather than ground truth.
    """
    distances, nearest = NeighborIndex(source).nearest_many(target.points, 1)
    return PointCloud(target.points, label=target.label, ids=source.ids[nearest[:, 0]])


def _trial_clouds(cfg: ExperimentConfig, level: float, trial_seed: int):
    shape_seed, source_seed, target_seed, noise_seed = (
        int(value) for value in np.random.SeedSequence(trial_seed).generate_state(4)
    )
    base = generate_shape(cfg.shape, cfg.base_size, seed=shape_seed)
    sample = min(cfg.initial_sample, len(base))
    dense = min(cfg.input_size, sample)

    clean_pool = base.subset(random_subset(base, sample, seed=source_seed))
    # noise goes in before FPS
    noisy_pool = add_noise(clean_pool, cfg.noise_sigma, seed=noise_seed)
    picked = farthest_point_sampling(noisy_pool, dense)
    source = noisy_pool.subset(picked)
    if cfg.pairing_mode == "exact":
        target = clean_pool.subset(picked)
    else:
        target_pool = base.subset(random_subset(base, sample, seed=target_seed))
        target = pair_nearest_ids(clean_pool.subset(picked), target_pool.subset(farthest_point_sampling(target_pool, dense)))

    rotation = random_rigid_transform(level, AXES_MODES[cfg.axes_mode], seed=trial_seed, exact=True)
    return apply_transform(rotation, source), target, invert(rotation)


def _score(level, method, k, trial, transform, ground_truth, residual, wall_time) -> TrialResult:
    return TrialResult(
        level=level,
        method=method,
        k=k,
        trial=trial,
        re=rotation_error(ground_truth.rotation, transform.rotation),
        te=translation_error(ground_truth.translation, transform.translation),
        residual=residual,
        wall_time=wall_time,
    )


def _run_trial(cfg: ExperimentConfig, backend: FeatureBackend, service: FeatureService,
               level: float, trial: int, trial_seed: int) -> List[TrialResult]:
    source, target, ground_truth = _trial_clouds(cfg, level, trial_seed)
    outcomes: List[TrialResult] = []

    for k in cfg.k_sweep:
        if "coarse" not in cfg.methods and "refined" not in cfg.methods:
            break
        started = time.perf_counter()
        try:
            result = Registrar(backend, cfg.pipeline_config(k), service).register(source, target)
            error = result.error
        except ValueError as e:
            result, error = None, str(e)
        elapsed = time.perf_counter() - started

        for method in ("coarse", "refined"):
            if method not in cfg.methods:
                continue
            transform = None
            if result is not None and result.success:
                transform = result.coarse if method == "coarse" else result.refined
            if transform is None:
                outcomes.append(TrialResult(level, method, k, trial, wall_time=elapsed, failed=True,
                                            error=error or f"{method} transform unavailable"))
                continue
            residual = result.residual if method == "coarse" else result.refined_residual
            outcomes.append(_score(level, method, k, trial, transform, ground_truth, residual, elapsed))

    if "icp" in cfg.methods:
        started = time.perf_counter()
        try:
            result = icp(source, target, IcpConfig(max_iterations=cfg.icp_max_iterations))
            error = result.error
        except ValueError as e:
            result, error = None, str(e)
        elapsed = time.perf_counter() - started

        for k in cfg.k_sweep:
            if result is None or not result.success:
                outcomes.append(TrialResult(level, "icp", k, trial, wall_time=elapsed, failed=True, error=error))
            else:
                outcomes.append(_score(level, "icp", k, trial, result.coarse, ground_truth, result.residual, elapsed))

    return outcomes


def _aggregate(cfg: ExperimentConfig, trials: Sequence[TrialResult]) -> List[ReportBlock]:
    blocks = []
    for k in cfg.k_sweep:
        rows = []
        for level in cfg.levels:
            for method in cfg.methods:
                selected = [t for t in trials if t.k == k and t.level == level and t.method == method]
                succeeded = [t for t in selected if not t.failed]
                rows.append(ReportRow(
                    level=level,
                    method=method,
                    re=summarize([t.re for t in succeeded]),
                    te=summarize([t.te for t in succeeded]),
                    n=len(selected),
                    n_fail=len(selected) - len(succeeded),
                ))
        blocks.append(ReportBlock(k, rows))
    return blocks


def run_benchmark(cfg: ExperimentConfig, backend: FeatureBackend, methods: Optional[Iterable[str]] = None,
                  feature_service: Optional[FeatureService] = None) -> BenchmarkReport:
    """
    Run every (level, trial) of the protocol for each method and K.

    Trial seeds are the master seed XOR the global trial index, so results
    do not depend on the worker count.

    Args:
        cfg: Benchmark protocol
        backend: Descriptor source for the coarse/refined methods
        methods: Optional override of cfg.methods
        feature_service: Optional service carrying a feature cache

    Returns:
        BenchmarkReport with one block per K and |levels| x |methods| rows each
    """
    if methods is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "methods": list(methods)})
    service = feature_service or FeatureService(backend)

    jobs = []
    for level_index, level in enumerate(cfg.levels):
        for trial in range(cfg.trials):
            global_index = level_index * cfg.trials + trial
            jobs.append((level, trial, cfg.seed ^ global_index))

    def run(job):
        level, trial, trial_seed = job
        return _run_trial(cfg, backend, service, level, trial, trial_seed)

    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        # map keeps submission order, whatever order trials finish in
        batches = list(tqdm(executor.map(run, jobs), total=len(jobs), desc="trials", disable=not settings.VERBOSE))

    trials = [outcome for batch in batches for outcome in batch]
    return BenchmarkReport(cfg, _aggregate(cfg, trials), trials)


def _format(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.{settings.REPORT_PRECISION}f}"


def write_report_csv(report: BenchmarkReport, path: str) -> str:
    """One row per K x level x method; wall times are never written."""
    ensure_parent_directory(path)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for block in report.blocks:
            for row in block.rows:
                writer.writerow([
                    block.k,
                    f"{row.level:g}",
                    row.method,
                    _format(row.re["mean"]), _format(row.re["std"]), _format(row.re["median"]),
                    _format(row.te["mean"]), _format(row.te["std"]), _format(row.te["median"]),
                    row.n_fail,
                ])
    return path


def _json_number(value: float) -> Optional[float]:
    return None if math.isnan(value) else value


def report_to_dict(report: BenchmarkReport) -> Dict:
    return {
        "config": report.config.to_dict(),
        "blocks": [
            {
                "k": block.k,
                "rows": [
                    {
                        "level": row.level,
                        "method": row.method,
                        "re": {name: _json_number(value) for name, value in row.re.items()},
                        "te": {name: _json_number(value) for name, value in row.te.items()},
                        "n": row.n,
                        "n_fail": row.n_fail,
                    }
                    for row in block.rows
                ],
            }
            for block in report.blocks
        ],
    }


def write_report_json(report: BenchmarkReport, path: str) -> str:
    ensure_parent_directory(path)
    with open(path, 'w') as f:
        json.dump(report_to_dict(report), f, indent=2)
        f.write("\n")
    return path


def write_report(report: BenchmarkReport, csv_path: str) -> Tuple[str, str]:
    """CSV report plus its JSON mirror next to it."""
    json_path = os.path.splitext(csv_path)[0] + ".json"
    return write_report_csv(report, csv_path), write_report_json(report, json_path)


def format_report(report: BenchmarkReport) -> str:
    """Console table: mean +/- std of RE and TE per level, one section per K."""
    lines = []
    for block in report.blocks:
        lines.append(f"K={block.k}")
        lines.append(f"{'level':>8} {'method':>8} {'RE (deg)':>20} {'TE':>20} {'fail':>5}")
        for row in block.rows:
            re = f"{row.re['mean']:.3f}±{row.re['std']:.3f}"
            te = f"{row.te['mean']:.4f}±{row.te['std']:.4f}"
            lines.append(f"{row.level:>8g} {row.method:>8} {re:>20} {te:>20} {row.n_fail:>5}")
    return "\n".join(lines)
