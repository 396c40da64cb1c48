# src/launcher.py
import argparse
import os
import platform
import sys
from importlib import metadata
from typing import Any, Dict, List, Optional

# Add the project's parent directory to Python's path
project_parent = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_parent not in sys.path:
    sys.path.insert(0, project_parent)

from src import __version__
from src.application.evaluation_service import EvaluationService, load_testset
from src.application.ingest_service import IngestService
from src.application.prediction_service import PredictionService
from src.application.probe_service import ProbeService
from src.application.settings import RunConfig, SettingsService
from src.application.training_service import TrainingService, apply_ablation, enable_reference_mode
from src.core.board import parse_fen
from src.core.config import ModelConfig
from src.core.exceptions import (ConfigError, EngineError, SkillMoveError, NonFiniteError)
from src.core.gradcheck import gradient_check
from src.core.models import Tally
from src.infrastructure.checkpoint_store import CheckpointStore
from src.infrastructure.config_store import ConfigStore
from src.infrastructure.engine_cache import CachedEngine, EngineCache
from src.infrastructure.file_manager import FileManager
from src.infrastructure.logger import Logger, setup_logging
from src.infrastructure.report_writer import ReportWriter
from src.infrastructure.uci_engine import EnginePool

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENGINE = 3
EXIT_NUMERIC = 4

RUN_MANIFEST = "run_manifest.json"
ENGINE_CACHE = "engine_cache.jsonl"
VERSIONED_PACKAGES = ("numpy", "torch", "chess", "scikit-learn", "tqdm")


class UsageError(SkillMoveError):
    """Error for bad command lines"""
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration file")
    common.add_argument("--run-dir", help="Directory for the run manifest and log")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="0 = available parallelism")
    common.add_argument("--reference-mode", action="store_true", default=None,
                        help="Deterministic single-threaded execution")
    common.add_argument("--bucket-layout", choices=("table", "embedding"))
    common.add_argument("--log-level")
    common.add_argument("--quiet", action="store_true", help="Disable progress bars")

    parser = _Parser(prog="skillmove", description="Skill-conditioned human move prediction")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ingest = commands.add_parser("ingest", parents=[common], help="PGN -> balanced training shards")
    ingest.add_argument("--pgn", required=True)
    ingest.add_argument("--out", required=True)
    ingest.add_argument("--chunk", type=int)
    ingest.add_argument("--cap", type=int)
    ingest.add_argument("--min-ply", type=int)
    ingest.add_argument("--max-ply", type=int)
    ingest.add_argument("--min-clock", type=int)

    stats = commands.add_parser("balance-stats", parents=[common], help="Skill-combination counts of shards")
    stats.add_argument("--shards", required=True)
    stats.add_argument("--report", required=True)

    train = commands.add_parser("train", parents=[common], help="Train a model on shards")
    train.add_argument("--shards", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--steps", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--ablation", choices=("noatt", "noaux"))
    train.add_argument("--resume", help="Checkpoint directory to continue from")

    evaluate = commands.add_parser("eval", parents=[common], help="Compute evaluation reports")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--testset", required=True)
    evaluate.add_argument("--report", required=True)
    evaluate.add_argument("--engine", help="UCI engine command")
    evaluate.add_argument("--depth", type=int)
    evaluate.add_argument("--cache", help="Engine cache file")
    evaluate.add_argument("--replay", action="store_true", default=None,
                          help="Use only cached engine output")
    evaluate.add_argument("--max-positions", type=int)
    evaluate.add_argument("--compare", help="Second checkpoint for the confidence comparison")

    probe = commands.add_parser("probe", parents=[common], help="Linear concept probes")
    probe.add_argument("--checkpoint", required=True)
    probe.add_argument("--positions", required=True, help="Shards to draw positions from")
    probe.add_argument("--concepts", help="Comma-separated concept names")
    probe.add_argument("--out", required=True, help="Probe report CSV")
    probe.add_argument("--engine", help="UCI engine command for engine concepts")

    predict = commands.add_parser("predict", parents=[common], help="Move distribution for a position")
    predict.add_argument("--checkpoint", required=True)
    predict.add_argument("--fen", required=True)
    predict.add_argument("--active", type=int, required=True)
    predict.add_argument("--opp", type=int, required=True)
    predict.add_argument("--topk", type=int, default=5)

    sweep = commands.add_parser("sweep", parents=[common], help="Move probabilities across skill buckets")
    sweep.add_argument("--checkpoint", required=True)
    sweep.add_argument("--fen", required=True)
    sweep.add_argument("--opp", type=int, help="Fixed opponent bucket; default pairs equal buckets")

    grad = commands.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    grad.add_argument("--coords", type=int, default=40)
    grad.add_argument("--epsilon", type=float, default=1e-4)
    grad.add_argument("--tol", type=float, default=1e-3)

    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    """CLI flags as config overrides; flags left unset are None and ignored"""
    get = lambda name: getattr(args, name, None)
    concepts = get("concepts")
    engine = get("engine")
    return {
        "run": {"seed": get("seed"), "workers": get("workers"), "reference_mode": get("reference_mode"),
                "bucket_layout": get("bucket_layout"), "log_level": get("log_level")},
        "filter": {"min_ply": get("min_ply"), "max_ply": get("max_ply"), "min_clock_seconds": get("min_clock")},
        "balancer": {"chunk_size": get("chunk"), "per_combo_cap": get("cap")},
        "optimizer": {"max_steps": get("steps"), "batch_size": get("batch_size"), "learning_rate": get("lr")},
        "eval": {"engine_path": engine, "depth": get("depth"), "cache_path": get("cache"),
                 "replay": get("replay"), "max_positions": get("max_positions")},
        "probe": {"concepts": [c.strip() for c in concepts.split(",") if c.strip()] if concepts else None},
    }


def worker_count(config: RunConfig) -> int:
    if config.run.reference_mode:
        return 1
    return config.run.workers or os.cpu_count() or 1


def package_versions() -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {"skillmove": __version__, "python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def _run_dir(args: argparse.Namespace) -> Optional[str]:
    if args.run_dir:
        return args.run_dir
    if args.command in ("ingest", "train"):
        return args.out
    if args.command in ("eval", "balance-stats"):
        return args.report
    if args.command == "probe":
        return os.path.dirname(os.path.abspath(args.out))
    return None


def setup_application(args: argparse.Namespace) -> Dict[str, Any]:
    """Load the configuration and build the services shared by every subcommand"""
    file_manager = FileManager()
    settings_service = SettingsService(ConfigStore(args.config))
    config = settings_service.load(_overrides(args))
    run_dir = _run_dir(args)
    if run_dir:
        file_manager.create_directory(run_dir)
    setup_logging(config.run.log_level, run_dir)
    if config.run.reference_mode:
        enable_reference_mode()

    checkpoint_store = CheckpointStore(file_manager)
    return {
        'config': config,
        'run_dir': run_dir,
        'logger': Logger(run_dir or "", "skillmove"),
        'file_manager': file_manager,
        'settings_service': settings_service,
        'checkpoint_store': checkpoint_store,
        'ingest_service': IngestService(file_manager),
        'training_service': TrainingService(file_manager, checkpoint_store),
        'progress': not (args.quiet or config.run.reference_mode),
    }


def write_run_manifest(services: Dict[str, Any], args: argparse.Namespace, argv: List[str]) -> None:
    run_dir = services['run_dir']
    if not run_dir:
        return
    config: RunConfig = services['config']
    services['file_manager'].write_json(os.path.join(run_dir, RUN_MANIFEST), {
        "command": args.command,
        "argv": argv,
        "config_hash": config.config_hash(),
        "seed": config.run.seed,
        "workers": worker_count(config),
        "reference_mode": config.run.reference_mode,
        "versions": package_versions(),
        "config": config.to_dict(),
    })
    services['settings_service'].dump(config, os.path.join(run_dir, "config.ini"))


def _check_layout(config: RunConfig, model) -> None:
    if config.layout.n_buckets != model.config.n_buckets:
        raise ConfigError(f"bucket layout {config.layout.name} has {config.layout.n_buckets} buckets, "
                          f"the checkpoint has {model.config.n_buckets}")


def _engine(config: RunConfig, run_dir: Optional[str], workers: int):
    """CachedEngine over an engine pool (or replay cache), or None when neither is configured"""
    settings = config.eval
    cache_path = settings.cache_path or (os.path.join(run_dir, ENGINE_CACHE) if run_dir else None)
    if settings.replay:
        return CachedEngine(EngineCache(cache_path), None, settings.depth, replay=True), None
    if not settings.engine_path:
        return None, None
    pool = EnginePool(settings.engine_path, min(settings.engine_workers, workers) or 1,
                      settings.depth, settings.engine_timeout)
    return CachedEngine(EngineCache(cache_path), pool, settings.depth), pool


def cmd_ingest(services, args) -> int:
    config: RunConfig = services['config']
    result = services['ingest_service'].ingest(args.pgn, args.out, config.filter, config.balancer,
                                               config.layout, worker_count(config), services['progress'])
    services['logger'].info(f"Wrote {len(result.shards)} shards to {args.out}")
    return EXIT_OK


def cmd_balance_stats(services, args) -> int:
    config: RunConfig = services['config']
    writer = ReportWriter(args.report, services['file_manager'])
    for name, path in services['ingest_service'].balance_stats(args.shards, config.layout, writer).items():
        services['logger'].info(f"{name}: {path}")
    return EXIT_OK


def cmd_train(services, args) -> int:
    config: RunConfig = services['config']
    training = services['training_service']
    tally = Tally()
    examples, sizes = training.load_examples(args.shards, tally)
    dataset, sizes = training.encode(examples, sizes, tally)
    model_config = apply_ablation(config.model, args.ablation)
    result = training.train(dataset, sizes, model_config, config.optimizer, args.out,
                            resume=args.resume, progress=services['progress'])
    services['logger'].info(f"Trained {result.step} steps on {result.examples} examples; "
                            f"checkpoint {result.checkpoint_dir}; {tally.as_dict()}")
    return EXIT_OK


def cmd_eval(services, args) -> int:
    config: RunConfig = services['config']
    store: CheckpointStore = services['checkpoint_store']
    model = store.load_model(args.checkpoint)
    _check_layout(config, model)
    second = store.load_model(args.compare) if args.compare else None
    tally = Tally()
    examples = load_testset(args.testset, config.eval.max_positions, config.seed_for("eval"), tally)
    engine, pool = _engine(config, services['run_dir'], worker_count(config))
    try:
        service = EvaluationService(config.eval, config.layout, ReportWriter(args.report, services['file_manager']),
                                    engine, services['progress'])
        service.tally.merge(tally)
        paths = service.run(model, examples, second)
    finally:
        if pool is not None:
            pool.close()
    services['logger'].info(f"Wrote {len(paths)} reports to {args.report}")
    return EXIT_OK


def cmd_probe(services, args) -> int:
    config: RunConfig = services['config']
    model = services['checkpoint_store'].load_model(args.checkpoint)
    _check_layout(config, model)
    examples = load_testset(args.positions, config.probe.positions, config.probe.seed)
    boards = [parse_fen(example.fen) for example in examples]
    engine, pool = _engine(config, services['run_dir'], worker_count(config))
    try:
        out_dir = os.path.dirname(os.path.abspath(args.out))
        service = ProbeService(config.probe, config.layout, ReportWriter(out_dir, services['file_manager']),
                               engine, services['progress'])
        results = service.run(model, boards)
        path = service.write_report(results, os.path.basename(args.out))
    finally:
        if pool is not None:
            pool.close()
    services['logger'].info(f"Wrote {len(results)} probe results to {path}")
    return EXIT_OK


def _prediction_service(services, args) -> PredictionService:
    model = services['checkpoint_store'].load_model(args.checkpoint)
    return PredictionService(model, services['config'].layout)


def cmd_predict(services, args) -> int:
    service = _prediction_service(services, args)
    prediction = service.predict(args.fen, args.active, args.opp)
    for line in service.format_prediction(prediction, args.topk):
        print(line)
    return EXIT_OK


def cmd_sweep(services, args) -> int:
    service = _prediction_service(services, args)
    for line in service.format_sweep(service.sweep(args.fen, args.opp)):
        print(line)
    return EXIT_OK


def cmd_gradcheck(services, args) -> int:
    config: RunConfig = services['config']
    model_config = config.model if config.model_preset == "toy" else ModelConfig.toy(n_buckets=config.model.n_buckets)
    report = gradient_check(model_config, args.coords, args.epsilon, args.tol, seed=config.seed_for("train"))
    worst = report.worst
    print(f"coordinates {len(report.checks)}  max relative error {report.max_error:.3e}  tolerance {args.tol:g}")
    if worst is not None:
        print(f"worst {worst.path}[{worst.index}] analytic {worst.analytic:.6e} numeric {worst.numeric:.6e}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_NUMERIC


COMMANDS = {
    "ingest": cmd_ingest,
    "balance-stats": cmd_balance_stats,
    "train": cmd_train,
    "eval": cmd_eval,
    "probe": cmd_probe,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, NonFiniteError):
        return EXIT_NUMERIC
    if isinstance(error, EngineError):
        return EXIT_ENGINE
    if isinstance(error, (UsageError, ConfigError)):
        return EXIT_USAGE
    return EXIT_DATA


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    argv = list(sys.argv[1:] if argv is None else argv)
    logger = Logger("", "skillmove")
    try:
        args = build_parser().parse_args(argv)
        services = setup_application(args)
        logger = services['logger']
        config: RunConfig = services['config']
        logger.info(f"skillmove {args.command}: config {config.config_hash()}, seed {config.run.seed}, "
                    f"workers {worker_count(config)}")
        write_run_manifest(services, args, argv)
        return COMMANDS[args.command](services, args)
    except SkillMoveError as e:
        code = exit_code_for(e)
        if code == EXIT_USAGE:
            print(f"skillmove: error: {e}", file=sys.stderr)
        logger.error(f"{type(e).__name__}: {e}")
        return code
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
