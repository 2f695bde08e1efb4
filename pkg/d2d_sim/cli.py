"""
Command-line entry point: `d2dsim {synth,run,sweep,report,validate}`.

Configuration is layered as defaults, scenario, `--config` file, `--set`
overrides and finally the dedicated flags; later layers win. Every command
that writes results also writes a `manifest.yaml` with the config digest,
input and output digests and phase timings.
"""
# Standard library imports
import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

# Third-party imports
import yaml
from pydantic import BaseModel, Field, ValidationError

# Application-specific imports
from config.constants import (
    CONTRIBUTION_FILE, DEFAULT_SCENARIO_NAME, DEFAULT_SLOT_LENGTH_S, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, LOG_FORMAT,
    MANIFEST_FILE, MAPPING_SCHEMES, METRICS_FILE, MIGRATION_NORMALIZATION_MODES, MOBILITY_TRACE_FILE,
    OUTCOME_LOG_FILE, SCENARIO_NAMES, SERIES_FILE, SOCIAL_TRACE_FILE, STRATEGY_IDS, SWEEP_AXES, TABLES_DIR,
    TOOL_NAME
)
from utils.data_handlers import (
    DataLoadError, directory_digests, read_outcome_log, write_frame_csv, write_outcome_log, write_yaml
)
from . import __version__
from .errors import ConfigurationError, D2DSimError, TraceParseError, TraceValidationError, UnknownOptionError
from .metrics import MetricsReport, compute_metrics
from .optimizations import performance_monitor
from .scenarios import ExperimentConfig, load_experiment
from .sweeps import parse_axis_values, prepare_traces, run_experiment, run_sweep
from .synth import generate_traces, write_traces
from .trace_model import parse_mobility_trace, parse_social_trace

logger = logging.getLogger(__name__)


class UsageError(D2DSimError):
    """Raised for flag combinations argparse cannot check."""

    category = "usage"


class RunManifest(BaseModel):
    """Provenance of one command's outputs."""
    tool: str = Field(TOOL_NAME, description="Tool name")
    version: str = Field(__version__, description="Tool version")
    command: str = Field(..., description="Subcommand that produced the outputs")
    config_digest: str = Field(..., description="sha256 of the canonical validated configuration")
    seed: int = Field(..., description="Master seed")
    input_digests: Dict[str, str] = Field(default_factory=dict, description="sha256 per input trace file")
    output_digests: Dict[str, str] = Field(default_factory=dict, description="sha256 per output file")
    started_at: str = Field(..., description="ISO-8601 start time (UTC)")
    finished_at: Optional[str] = Field(None, description="ISO-8601 end time (UTC)")
    timings: Dict[str, float] = Field(default_factory=dict, description="Seconds per timed phase")
    config: Dict[str, Any] = Field(default_factory=dict, description="Validated configuration")

    def write(self, out_dir: str) -> str:
        path = os.path.join(out_dir, MANIFEST_FILE)
        write_yaml(self.model_dump(mode='json'), path)
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


# --- Argument Parsing ---

def _alpha_flag(value: str) -> str:
    if value == "learned":
        return value
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'learned' or a number, got '{value}'")
    if not 0.0 <= number <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {number}")
    return value


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', metavar='PATH', help='YAML key-value file merged over the scenario')
    parser.add_argument('--scenario', choices=SCENARIO_NAMES, help='Scenario preset (default: indoor)')
    parser.add_argument('--seed', type=int, help='Master seed')
    parser.add_argument('--strategy', choices=STRATEGY_IDS, help='Replication strategy')
    parser.add_argument('--mapping', choices=MAPPING_SCHEMES, help='Social-to-mobility user mapping')
    parser.add_argument('--alpha', type=_alpha_flag, help="'learned' or a fixed value in [0, 1]")
    parser.add_argument('--migration-norm', choices=MIGRATION_NORMALIZATION_MODES,
                        help='Normalisation of the migration index')
    parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Dotted configuration override, e.g. sim.peer.cache_capacity=10 (repeatable)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME,
                                     description='Trace-driven D2D replication simulator for social content')
    parser.add_argument('--version', action='version', version=f'{TOOL_NAME} {__version__}')
    parser.add_argument('--log-level', default='WARNING', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    subparsers = parser.add_subparsers(dest='command', required=True)

    synth = subparsers.add_parser('synth', help='Generate synthetic social and mobility traces')
    _add_config_flags(synth)
    synth.add_argument('--out', required=True, metavar='DIR', help='Output directory')

    run = subparsers.add_parser('run', help='Run one simulation')
    _add_config_flags(run)
    run.add_argument('--traces', metavar='DIR', help=f'Directory with {SOCIAL_TRACE_FILE} and {MOBILITY_TRACE_FILE} '
                                                    '(synthesised from the configuration when omitted)')
    run.add_argument('--out', required=True, metavar='DIR', help='Output directory')
    run.add_argument('--dump-tables', action='store_true', help='Dump I, P, A and Q tables')

    sweep = subparsers.add_parser('sweep', help='Run a sensitivity sweep over one axis')
    _add_config_flags(sweep)
    sweep.add_argument('--axis', required=True, choices=SWEEP_AXES, help='Sweep axis')
    sweep.add_argument('--values', help='Comma-separated axis values (bin lower edges for binned axes)')
    sweep.add_argument('--jobs', type=int, help='Parallel sweep points')
    sweep.add_argument('--out', required=True, metavar='DIR', help='Output directory')

    report = subparsers.add_parser('report', help='Recompute metrics from an outcome log')
    report.add_argument('--log', required=True, metavar='PATH', help='Outcome log')
    report.add_argument('--slot-length', type=float, default=DEFAULT_SLOT_LENGTH_S, help='Slot length in seconds')
    report.add_argument('--out', metavar='DIR', help='Also write metrics, series and contribution files here')

    validate = subparsers.add_parser('validate', help='Validate trace files')
    validate.add_argument('--social', metavar='PATH', help='Social trace')
    validate.add_argument('--mobility', metavar='PATH', help='Mobility trace')
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Dotted configuration overrides from `--set` entries and the dedicated flags (flags last)."""
    overrides: Dict[str, Any] = {}
    for entry in getattr(args, 'set', []) or []:
        key, sep, value = entry.partition('=')
        if not sep or not key.strip():
            raise UsageError(f"--set expects KEY=VALUE, got '{entry}'")
        overrides[key.strip()] = yaml.safe_load(value)
    flags = {
        'seed': getattr(args, 'seed', None),
        'sim.strategy': getattr(args, 'strategy', None),
        'mapping': getattr(args, 'mapping', None),
        'sim.alpha': getattr(args, 'alpha', None),
        'sim.migration_norm': getattr(args, 'migration_norm', None),
        'sweep.jobs': getattr(args, 'jobs', None),
    }
    if getattr(args, 'dump_tables', False):
        flags['sim.dump_tables'] = True
    overrides.update({k: v for k, v in flags.items() if v is not None})
    if 'seed' in overrides:
        overrides.setdefault('synth.seed', overrides['seed'])
        overrides.setdefault('sim.seed', overrides['seed'])
    return overrides

# --- End Argument Parsing ---


# --- Commands ---

def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_experiment(scenario=args.scenario or DEFAULT_SCENARIO_NAME, user_config_path=args.config,
                          overrides=flag_overrides(args))
    logger.info(f"Experiment '{cfg.name}', seed {cfg.seed}, strategy {cfg.sim.strategy}, digest {cfg.digest()[:12]}")
    return cfg


def _manifest(command: str, cfg: ExperimentConfig, started_at: str, inputs: Sequence[str],
              outputs: Sequence[str]) -> RunManifest:
    return RunManifest(
        command=command,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        input_digests=directory_digests(inputs),
        output_digests=directory_digests(outputs),
        started_at=started_at,
        finished_at=_now(),
        timings=performance_monitor.get_report()['timings'],
        config=cfg.to_dict(),
    )


def write_metrics(report: MetricsReport, out_dir: str) -> List[str]:
    """metrics.yaml, series.csv and contribution.csv for a report."""
    paths = [os.path.join(out_dir, name) for name in (METRICS_FILE, SERIES_FILE, CONTRIBUTION_FILE)]
    write_yaml(report.summary(), paths[0])
    write_frame_csv(report.series, paths[1])
    write_frame_csv(report.contribution.reset_index(), paths[2])
    return paths


def cmd_synth(args: argparse.Namespace) -> int:
    started_at = _now()
    cfg = _experiment(args)
    social, mobility = generate_traces(cfg.synth)
    outputs = list(write_traces(social, mobility, args.out))
    _manifest('synth', cfg, started_at, [], outputs).write(args.out)
    print(f"wrote {len(social.events)} share events and {len(mobility.events)} associations to {args.out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    started_at = _now()
    performance_monitor.reset()
    cfg = _experiment(args)
    inputs: List[str] = []
    traces = None
    if args.traces:
        inputs = [os.path.join(args.traces, SOCIAL_TRACE_FILE), os.path.join(args.traces, MOBILITY_TRACE_FILE)]
        traces = prepare_traces(cfg, (parse_social_trace(inputs[0]), parse_mobility_trace(inputs[1])))
    tables_dir = os.path.join(args.out, TABLES_DIR) if cfg.sim.dump_tables else None

    result = run_experiment(cfg, traces=traces, tables_dir=tables_dir)
    log_path = os.path.join(args.out, OUTCOME_LOG_FILE)
    write_outcome_log(result.outcomes, log_path)
    outputs = [log_path] + write_metrics(result.metrics, args.out)
    performance_monitor.log_report()
    _manifest('run', cfg, started_at, inputs, outputs).write(args.out)
    print(f"{result.strategy}: D2D fraction {result.metrics.d2d_fraction:.4f} "
          f"({result.metrics.d2d_requests}/{result.metrics.total_requests} requests)")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    started_at = _now()
    performance_monitor.reset()
    cfg = _experiment(args)
    values = None
    if args.values:
        try:
            values = parse_axis_values(args.axis, [v for v in args.values.split(',') if v.strip()])
        except UnknownOptionError:
            raise
        except ValueError as e:
            raise UsageError(str(e)) from e
    result = run_sweep(args.axis, values, cfg, jobs=cfg.sweep.jobs)
    outputs = result.write(args.out, long_format=cfg.sweep.long_format)
    _manifest('sweep', cfg, started_at, [], outputs).write(args.out)
    if args.axis != 'mapping_scheme':
        for strategy in STRATEGY_IDS:
            print(f"{strategy}: spearman rho of D2D fraction vs {args.axis} = {result.trend(strategy):.3f}")
    print(f"wrote {len(result.summary)} summary rows to {outputs[0]}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = compute_metrics(read_outcome_log(args.log), slot_length_s=args.slot_length)
    print(yaml.safe_dump(report.summary(), sort_keys=False, default_flow_style=False), end='')
    if args.out:
        write_metrics(report, args.out)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if not args.social and not args.mobility:
        raise UsageError("validate needs --social and/or --mobility")
    if args.social:
        social = parse_social_trace(args.social)
        print(f"{args.social}: ok ({social.n_users} users, {social.graph.n_edges} edges, "
              f"{len(social.events)} share events, {social.non_friend_reshares} non-friend reshares)")
    if args.mobility:
        mobility = parse_mobility_trace(args.mobility)
        print(f"{args.mobility}: ok ({mobility.n_users} users, {mobility.n_regions} regions, "
              f"{len(mobility.events)} associations)")
    return EXIT_OK


COMMANDS = {
    'synth': cmd_synth,
    'run': cmd_run,
    'sweep': cmd_sweep,
    'report': cmd_report,
    'validate': cmd_validate,
}

# --- End Commands ---


def exit_code_for(error: BaseException) -> int:
    """Exit code of an error: usage 2, trace and configuration validation 3, anything else 1."""
    if isinstance(error, (UnknownOptionError, UsageError)):
        return EXIT_USAGE
    if isinstance(error, (TraceParseError, TraceValidationError, ConfigurationError, DataLoadError, ValidationError)):
        return EXIT_VALIDATION
    return EXIT_FAILURE


def _category(error: BaseException) -> str:
    if isinstance(error, OSError):
        return "io"
    if isinstance(error, DataLoadError):
        return "parse"
    return getattr(error, 'category', 'error')


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line and return the exit code.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])

    Returns:
        0 on success, 2 for usage errors, 3 for validation failures, 1 otherwise
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except (D2DSimError, DataLoadError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"{TOOL_NAME}: error [{_category(e)}]: {e}", file=sys.stderr)
        return exit_code_for(e)
    except ValidationError as e:
        print(f"{TOOL_NAME}: error [config]: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:
        logger.error(f"Unexpected failure in '{args.command}'", exc_info=True)
        print(f"{TOOL_NAME}: error [internal]: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(cli_main())


if __name__ == '__main__':
    main()
