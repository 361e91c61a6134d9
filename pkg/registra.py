#!/usr/bin/env python3
"""
Registra
Command-line entry point for coarse-to-fine point-cloud registration,
the ICP baseline, synthetic cloud generation and the rotation benchmark.
"""

import os
import sys
import argparse
from typing import Dict, List, Optional

from config.presets import ICP_PRESET, ORACLE, PRECOMPUTED, PRESETS
from config.settings import settings
from geometry.errors import DegenerateCloudError, DegenerateMatchError
from geometry.transforms import PointCloud, rotation_error, translation_error
from pipeline.refinement import DenoiseConfig
from pipeline.registrar import PipelineConfig, Registrar
from pipeline.results import RegistrationResult
from services.benchmark_service import AXES_MODES
from services.cloud_io import parse_cloud, read_transform, write_cloud, write_json
from services.feature_service import FeatureBackend, FeatureService
from services.matching_service import dump_confidence_csv, dump_confidence_png

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REGISTRATION_FAILED = 2


class UsageError(Exception):
    pass


class RegistrationFailed(Exception):
    pass


class RegistraArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so cli_main owns the exit status."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = RegistraArgumentParser(prog="registra", description="Coarse-to-fine point-cloud registration")
    parser.add_argument('--verbose', action='store_true', help='Print per-stage progress')
    subparsers = parser.add_subparsers(dest='command', required=True)

    reg = subparsers.add_parser('register', help='Register a source cloud onto a target cloud')
    reg.add_argument('source', help='Source cloud (.xyz or ASCII .ply)')
    reg.add_argument('target', help='Target cloud (.xyz or ASCII .ply)')
    reg.add_argument('--backend', default=settings.FEATURE_BACKEND, help='oracle, handcrafted or file:<path>[,<path>]')
    reg.add_argument('--preset', choices=sorted(p for p in PRESETS if "pipeline" in PRESETS[p]), default="default")
    reg.add_argument('--k', type=int, help='Pairs kept by softmax pooling')
    reg.add_argument('--p', type=int, help='Neighbors per denoised point')
    reg.add_argument('--tau', type=float, help='Consensus softmax temperature')
    reg.add_argument('--no-refine', action='store_true', help='Stop after the coarse solve')
    reg.add_argument('--seed', type=int, default=settings.SEED, help='Seed for the oracle backend')
    reg.add_argument('--gt', help='Ground-truth transform JSON; adds RE/TE to the output')
    reg.add_argument('--dump-confidence', help='Write the consensus matrix to a .csv or .png file')
    reg.add_argument('--cache', action='store_true', help='Cache extracted features')
    reg.add_argument('--out', help='Result JSON path')

    bench = subparsers.add_parser('bench', help='Run the large-rotation benchmark')
    source = bench.add_mutually_exclusive_group()
    source.add_argument('--config', help='Experiment JSON file')
    source.add_argument('--experiment', help='Name of a discovered experiment')
    source.add_argument('--list', action='store_true', help='List discovered experiments')
    bench.add_argument('--backend', help='Override the experiment backend (oracle or handcrafted)')
    bench.add_argument('--seed', type=int, help='Override the master seed')
    bench.add_argument('--trials', type=int, help='Override trials per level')
    bench.add_argument('--axes', choices=sorted(AXES_MODES), help='Override the rotation axes (x, y, z or xyz)')
    bench.add_argument('--workers', type=int, help='Override the worker count')
    bench.add_argument('--cache', action='store_true', help='Cache extracted features')
    bench.add_argument('--out', help='Report CSV path; a JSON mirror is written next to it')

    gen = subparsers.add_parser('gen', help='Generate a synthetic cloud')
    gen.add_argument('shape', help='box, blobs, lshape or surface')
    gen.add_argument('n', type=int, help='Number of points')
    gen.add_argument('out', help='Output .xyz or .ply path')
    gen.add_argument('--seed', type=int, default=settings.SEED)
    gen.add_argument('--noise', type=float, default=0.0, help='Gaussian jitter sigma')

    icp_parser = subparsers.add_parser('icp', help='Point-to-point ICP baseline')
    icp_parser.add_argument('source')
    icp_parser.add_argument('target')
    icp_parser.add_argument('--max-iter', type=int, default=ICP_PRESET["icp"]["max_iterations"])
    icp_parser.add_argument('--gt', help='Ground-truth transform JSON; adds RE/TE to the output')
    icp_parser.add_argument('--out', help='Result JSON path')

    cache = subparsers.add_parser('cache', help='Inspect or clear the feature cache')
    cache.add_argument('action', choices=['stats', 'clear'])

    return parser


def _default_output(source: PointCloud, target: PointCloud, suffix: str) -> str:
    return os.path.join(settings.OUTPUT_DIR, f"{source.label or 'source'}_to_{target.label or 'target'}_{suffix}.json")


def _with_ground_truth(data: Dict, result: RegistrationResult, gt_path: Optional[str]) -> Dict:
    if not gt_path or result.transform is None:
        return data
    ground_truth = read_transform(gt_path)
    data["RE"] = rotation_error(ground_truth.rotation, result.transform.rotation)
    data["TE"] = translation_error(ground_truth.translation, result.transform.translation)
    if result.refined is not None:
        data["coarse_RE"] = rotation_error(ground_truth.rotation, result.coarse.rotation)
        data["coarse_TE"] = translation_error(ground_truth.translation, result.coarse.translation)
    return data


def _print_result(result: RegistrationResult, data: Dict, out_path: str):
    print(f"📁 Result: {out_path}")
    if not result.success:
        print(f"❌ Registration failed: {result.error}")
        return
    if result.matches is not None:
        print(f"🎯 Pairs: {result.matches.k}, max confidence {result.max_confidence:.4g}")
    if result.iterations is not None:
        print(f"🔁 Iterations: {result.iterations}")
    print(f"📊 Residual: {result.residual:.6g}")
    if result.refined_residual is not None:
        print(f"📊 Refined residual: {result.refined_residual:.6g}")
    if "RE" in data:
        print(f"📊 RE: {data['RE']:.6g} deg, TE: {data['TE']:.6g}")
    if result.low_confidence:
        print("⚠️  Low confidence: consensus barely exceeds the uniform level, the pose may be wrong")


def run_register(args) -> int:
    source = parse_cloud(args.source)
    target = parse_cloud(args.target)

    backend = FeatureBackend.parse(args.backend, seed=args.seed)
    if backend.kind == ORACLE:
        # files carry no correspondence ids; row order stands in for them
        if source.ids is None:
            source = PointCloud(source.points, label=source.label, ids=range(len(source)))
        if target.ids is None:
            target = PointCloud(target.points, label=target.label, ids=range(len(target)))

    preset = PRESETS[args.preset]
    cfg = PipelineConfig(
        input_size=preset["pipeline"]["input_size"],
        subsample_chain=tuple(preset["pipeline"]["subsample_chain"]),
        k=args.k if args.k is not None else preset["pipeline"]["k"],
        temperature=args.tau if args.tau is not None else preset["pipeline"]["temperature"],
        refine=not args.no_refine,
        denoise=DenoiseConfig(
            p=args.p if args.p is not None else preset["denoise"]["p"],
            temperature=preset["denoise"]["temperature"],
        ),
    )

    feature_service = None
    if args.cache:
        from services.cache_manager import CacheManager
        feature_service = FeatureService(backend, CacheManager(enabled=True))

    registrar = Registrar(backend, cfg, feature_service)
    result = registrar.register(source, target)

    data = _with_ground_truth(result.to_dict(), result, args.gt)
    out_path = args.out or _default_output(source, target, "registration")
    write_json(data, out_path)
    _print_result(result, data, out_path)

    if args.dump_confidence and registrar.last_consensus is not None:
        if args.dump_confidence.lower().endswith(".png"):
            dump_confidence_png(registrar.last_consensus, args.dump_confidence)
        else:
            dump_confidence_csv(registrar.last_consensus, args.dump_confidence)
        print(f"📁 Confidence matrix: {args.dump_confidence}")

    if not result.success:
        raise RegistrationFailed(result.error)
    return EXIT_OK


def run_icp(args) -> int:
    from services.icp_service import IcpConfig, icp

    source = parse_cloud(args.source)
    target = parse_cloud(args.target)
    result = icp(source, target, IcpConfig(
        max_iterations=args.max_iter,
        convergence_tol=ICP_PRESET["icp"]["convergence_tol"],
        max_correspondence_distance=ICP_PRESET["icp"]["max_correspondence_distance"],
    ))

    data = _with_ground_truth(result.to_dict(), result, args.gt)
    out_path = args.out or _default_output(source, target, "icp")
    write_json(data, out_path)
    _print_result(result, data, out_path)

    if not result.success:
        raise RegistrationFailed(result.error)
    return EXIT_OK


def run_gen(args) -> int:
    from services.shape_generator import add_noise, generate_shape

    cloud = add_noise(generate_shape(args.shape, args.n, seed=args.seed), args.noise, seed=args.seed)
    write_cloud(cloud, args.out)
    print(f"✅ Wrote {len(cloud)} {args.shape} points to {args.out}")
    return EXIT_OK


def run_bench(args) -> int:
    from services.benchmark_service import ExperimentConfig, format_report, run_benchmark, write_report
    from services.experiment_manager import ExperimentManager, load_experiment_file

    if args.list:
        experiments = ExperimentManager().get_available_experiments()
        print("\n🧪 Available Experiments:")
        for experiment_id, info in experiments.items():
            print(f"\n📊 {info['name']} ({experiment_id})")
            print(f"   Description: {info['description']}")
            print(f"   Backend: {info['backend']}")
            print(f"   Levels: {info['levels']}, trials per level: {info['trials']}")
        print("\n💡 Usage: python registra.py bench --experiment <experiment_id>")
        return EXIT_OK

    if args.config:
        cfg, backend_spec = load_experiment_file(args.config)
        name = os.path.splitext(os.path.basename(args.config))[0]
    elif args.experiment:
        cfg, backend_spec = ExperimentManager().load_experiment(args.experiment)
        name = args.experiment
    else:
        cfg, backend_spec, name = ExperimentConfig(), settings.FEATURE_BACKEND, "default"

    overrides = {key: value for key, value in (("seed", args.seed), ("trials", args.trials), ("workers", args.workers),
                                               ("axes_mode", args.axes))
                 if value is not None}
    if overrides:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})

    backend = FeatureBackend.parse(args.backend or backend_spec, seed=cfg.seed)
    if backend.kind == PRECOMPUTED:
        raise UsageError("the benchmark generates its own clouds; use the oracle or handcrafted backend")

    feature_service = None
    if args.cache:
        from services.cache_manager import CacheManager
        feature_service = FeatureService(backend, CacheManager(enabled=True))

    print(f"🧪 Benchmark '{name}': {len(cfg.levels)} levels x {cfg.trials} trials, backend {backend.kind}")
    report = run_benchmark(cfg, backend, feature_service=feature_service)

    csv_path, json_path = write_report(report, args.out or os.path.join(settings.OUTPUT_DIR, f"benchmark_{name}.csv"))
    print(format_report(report))
    print(f"📁 Report: {csv_path}")
    print(f"📁 JSON: {json_path}")
    return EXIT_OK


def run_cache(args) -> int:
    from services.cache_manager import CacheManager

    cache_manager = CacheManager(enabled=True)
    if args.action == "clear":
        cache_manager.clear_cache()
        return EXIT_OK

    stats = cache_manager.get_cache_stats()
    print("\n📊 Cache Statistics:")
    print(f"Feature sets cached: {stats['features_cached']}")
    print(f"Cache directory: {stats['cache_dir']}")
    return EXIT_OK


COMMANDS = {
    "register": run_register,
    "bench": run_bench,
    "gen": run_gen,
    "icp": run_icp,
    "cache": run_cache,
}


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    Parse argv and run one subcommand.

    Returns:
        0 on success, 1 on usage or input errors, 2 when registration fails
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    if args.verbose:
        settings.VERBOSE = True

    try:
        settings.validate()
        return COMMANDS[args.command](args)
    except RegistrationFailed:
        return EXIT_REGISTRATION_FAILED
    except (DegenerateCloudError, DegenerateMatchError) as e:
        print(f"❌ Registration failed: {e}", file=sys.stderr)
        return EXIT_REGISTRATION_FAILED
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(cli_main())
