"""
Main entry point for the channel semantics toolkit

    python main.py simulate     --scene scenes/songshanhu.json
    python main.py characterize --trace output/songshanhu.trace --store output/store.jsonl
    python main.py query        --store output/store.jsonl --kind approach
    python main.py validate     output/semantic_map.jsonl

Exit codes: 0 success, 1 pipeline failure, 2 usage or input error.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from config import PipelineConfig
from exceptions import (
    ChannelSemanticsError, ConfigurationError, QueryError, RuleError, SceneError,
    TraceFormatError, UnknownIdError,
)
from logging_config import log_error, progress_enabled, setup_logging
from processors import characterize, prepare_scene, simulate, write_artifacts
from scene_sim import run_scene
from semantic_core import SemanticRecord, read_map, record_to_dict, validate_map
from semantic_store import SemanticQuery, SemanticStore
from semantics_engine import load_label_map, load_rules
from trace_io import read_trace

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

USAGE_ERRORS = (ConfigurationError, SceneError, TraceFormatError, RuleError, UnknownIdError,
                QueryError, FileNotFoundError)

logger = setup_logging()


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='JSON config file (flags override it)')
    parser.add_argument('--log-level', dest='log_level', help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('--output-dir', dest='output_dir', help='Directory for artifacts')
    parser.add_argument('--seed', type=int, help='Clustering seed')


def _add_sounding(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--scene', dest='scene_path', help='Scene document (JSON)')
    parser.add_argument('--carrier', type=float, help='Carrier frequency [Hz]')
    parser.add_argument('--bandwidth', type=float, help='Sounding bandwidth [Hz]')
    parser.add_argument('--n-tones', dest='n_tones', type=int, help='Number of tones')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='chansem',
                                     description='Wireless channel semantics toolkit')
    sub = parser.add_subparsers(dest='command', required=True)

    sim = sub.add_parser('simulate', help='Synthesize a snapshot trace from a scene')
    _add_common(sim)
    _add_sounding(sim)

    char = sub.add_parser('characterize', help='Trace -> semantic map and exports')
    _add_common(char)
    _add_sounding(char)
    char.add_argument('--trace', dest='trace_path', help='Snapshot trace file')
    char.add_argument('--label-map', dest='label_map_path', help='Delay/distance label windows')
    char.add_argument('--rules', dest='rules_path', help='Event rules (default rules/fig6.json)')
    char.add_argument('--store', dest='store_path', help='Also persist the map in this store')
    char.add_argument('--noise-margin-db', dest='noise_margin_db', type=float)
    char.add_argument('--dynamic-range-db', dest='dynamic_range_db', type=float)
    char.add_argument('--no-interpolation', dest='interpolate', action='store_const', const=False)
    char.add_argument('--k', type=int, help='Fixed cluster count per snapshot')
    char.add_argument('--k-max', dest='k_max', type=int, help='Upper bound for automatic K')
    char.add_argument('--restarts', type=int)
    char.add_argument('--gate-ns', dest='gate_ns', type=float)
    char.add_argument('--max-gap', dest='max_gap', type=int)
    char.add_argument('--window', type=int, help='Behavior window [snapshots]')
    char.add_argument('--epsilon', dest='epsilon_ns_s', type=float, help='Static drift bound [ns/s]')
    char.add_argument('--delta', dest='delta_ns_s2', type=float,
                      help='Drift change for accelerate/decelerate [ns/s²]')

    qry = sub.add_parser('query', help='Print stored records as JSON lines')
    qry.add_argument('--store', dest='store_path', required=True)
    qry.add_argument('--log-level', dest='log_level')
    qry.add_argument('--label')
    qry.add_argument('--kind')
    qry.add_argument('--type', dest='record_type', choices=('status', 'behavior', 'event'))
    qry.add_argument('--level', type=int)
    qry.add_argument('--from', dest='t_from', type=float, help='Time interval start [s]')
    qry.add_argument('--to', dest='t_to', type=float, help='Time interval end [s]')
    qry.add_argument('--delay-min-ns', dest='delay_min_ns', type=float)
    qry.add_argument('--delay-max-ns', dest='delay_max_ns', type=float)
    qry.add_argument('--ancestors', nargs='?', const='', default=None, metavar='ID',
                     help='Ancestors of ID (or of the events matching --label)')
    qry.add_argument('--descendants', nargs='?', const='', default=None, metavar='ID',
                     help='Descendants of ID (or of the events matching --label)')
    qry.add_argument('--members', action='store_true',
                     help='Walk into behaviors and statuses, not only sub-events')

    val = sub.add_parser('validate', help='Re-validate an exported semantic map')
    val.add_argument('map_path')
    val.add_argument('--log-level', dest='log_level')
    return parser


_PIPELINE_FLAGS = ('scene_path', 'trace_path', 'label_map_path', 'rules_path', 'output_dir',
                   'store_path', 'seed', 'log_level', 'carrier', 'bandwidth', 'n_tones',
                   'noise_margin_db', 'dynamic_range_db', 'interpolate', 'k', 'k_max',
                   'restarts', 'gate_ns', 'max_gap', 'window', 'epsilon_ns_s', 'delta_ns_s2')


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Environment, then config file, then flags"""
    config = PipelineConfig.from_env()
    if getattr(args, 'config', None):
        config = PipelineConfig.from_file(args.config, base=config)
    flags = {name: getattr(args, name) for name in _PIPELINE_FLAGS if hasattr(args, name)}
    return config.with_overrides(**flags)


def _check(config: PipelineConfig, require_input: bool = True) -> None:
    errors = config.validate(require_input=require_input)
    if errors:
        raise ConfigurationError("Configuration errors: " + ", ".join(errors))


def cmd_simulate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if config.scene_path is None:
        raise ConfigurationError("simulate needs --scene")
    config.trace_path = None
    _check(config)
    trace, path = simulate(config, progress=progress_enabled())
    sounding = trace.sounding
    n_scatterers = len(trace.ground_truth[0]) if trace.ground_truth else 0
    print(f"{path}: {len(trace)} snapshots, {n_scatterers} scatterers, "
          f"{sounding.carrier / 1e9:g} GHz carrier, {sounding.bandwidth / 1e9:g} GHz band, "
          f"{sounding.n_tones} tones")
    return EXIT_OK


def cmd_characterize(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    _check(config)
    progress = progress_enabled()

    if config.trace_path is not None:
        trace = read_trace(config.trace_path)
    else:
        trace = run_scene(prepare_scene(config), progress=progress)

    rules = load_rules(config.rules_path)
    label_map = load_label_map(config.label_map_path) if config.label_map_path else None
    result = characterize(trace, config, rules, label_map, progress=progress)
    paths = write_artifacts(result, Path(config.output_dir))

    counts = result.semantic_map.counts()
    if config.store_path:
        receipt = SemanticStore(config.store_path).store(result.semantic_map)
        logger.info(f"Store receipt: {receipt.counts()} (levels {receipt.event_levels})")
    print(f"{paths['semantic_map']}: {counts['statuses']} statuses, "
          f"{counts['behaviors']} behaviors, {counts['events']} events")
    return EXIT_OK


def _window(lo: Optional[float], hi: Optional[float], scale: float = 1.0):
    if lo is None and hi is None:
        return None
    return (float('-inf') if lo is None else lo * scale,
            float('inf') if hi is None else hi * scale)


def run_query(store: SemanticStore, args: argparse.Namespace) -> List[SemanticRecord]:
    """Apply the query flags; a bare --ancestors/--descendants anchors on --label events"""
    base: Dict = dict(
        time_interval=_window(args.t_from, args.t_to),
        kind=args.kind,
        delay_window=_window(args.delay_min_ns, args.delay_max_ns, 1e-9),
        record_type=args.record_type,
        level=args.level,
        through_members=args.members,
    )
    graph = [(flag, value) for flag, value in
             (('ancestors_of', args.ancestors), ('descendants_of', args.descendants))
             if value is not None]
    anchored = [flag for flag, value in graph if value == '']
    if not anchored:
        return store.query(SemanticQuery(label=args.label,
                                         **dict(graph), **base))

    if args.label is None:
        raise QueryError("--ancestors/--descendants without an ID need --label")
    anchors = store.query(SemanticQuery(label=args.label, record_type='event'))
    explicit = {flag: value for flag, value in graph if value != ''}
    found: Dict[str, SemanticRecord] = {}
    for anchor in anchors:
        q = SemanticQuery(**explicit, **{flag: anchor.id for flag in anchored}, **base)
        for record in store.query(q):
            found[record.id] = record
    return sorted(found.values(), key=lambda r: (r.start_time, r.id))


def cmd_query(args: argparse.Namespace) -> int:
    store = SemanticStore(args.store_path)
    for record in run_query(store, args):
        print(json.dumps(record_to_dict(record)))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    semantic_map = read_map(args.map_path)
    report = validate_map(semantic_map)
    for violation in report.violations:
        print(f"{violation.code}\t{violation.record_id}\t{violation.message}")
    counts = semantic_map.counts()
    if report.ok:
        print(f"{args.map_path}: valid ({counts['statuses']} statuses, "
              f"{counts['behaviors']} behaviors, {counts['events']} events)")
        return EXIT_OK
    logger.error(f"❌ {args.map_path}: {len(report)} violation(s)")
    return EXIT_FAILURE


COMMANDS = {
    'simulate': cmd_simulate,
    'characterize': cmd_characterize,
    'query': cmd_query,
    'validate': cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    if args.log_level:
        setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except USAGE_ERRORS as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE
    except ChannelSemanticsError as e:
        log_error(logger, e, {"command": args.command})
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
