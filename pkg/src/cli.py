"""
Storage Sizing CLI - argparse front end binding every engine to scenario files

Each subcommand reads a scenario JSON, runs one engine and writes CSV or
JSON to stdout (or --output). Status lines go to stderr, the run itself is
recorded under the results directory.

Exit codes: 0 ok, 1 engine error (class named on stderr), 2 usage error.
"""

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from colorama import Fore, Style, init

import closed_forms
import economics
import effective_demand as ed
import simulator
import sizing
import spectral_solver
from config import Settings, get_settings
from errors import DomainError, ScenarioError, SizingError
from run_log import RunLog, to_serializable
from scenario_loader import (
    UNIT_MODES,
    epsilon_of,
    grid_power_of,
    load_scenario,
    population_of,
    sim_config_of,
    storage_of,
    storage_scale_of,
    unit_mode,
)
from source_model import Population, build_generator_multi
from sweep import SweepPipeline, build_grid

init()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ENGINE_ERROR = 1
EXIT_USAGE = 2

EXAMPLES = """
Examples:
    python main.py size --input scenarios/single_class_350.json
    python main.py capacity --input scenarios/capacity_200.json --format json
    python main.py effdemand --input scenarios/four_class_toy.json
    python main.py admit --input scenarios/two_class.json --region
    python main.py simulate --input scenarios/single_user_oracle.json --format json
    python main.py economics --input scenarios/economics_lambda_025.json
    python main.py sweep --input scenarios/sweep_population.json --output sweep.csv
"""


@dataclass
class CommandOutput:
    rows: List[Dict[str, Any]]  # CSV view
    data: Any  # JSON view


@dataclass
class RunContext:
    settings: Settings
    run_log: RunLog
    quiet: bool


def status(message: str, color: str = Fore.CYAN, quiet: bool = False) -> None:
    """Coloured status line on stderr"""
    if not quiet:
        sys.stderr.write(f"{color}{message}{Style.RESET_ALL}\n")


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per operation"""
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Shared energy-storage sizing - exact, asymptotic and simulated",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EXAMPLES,
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", required=True, help="Scenario JSON file")
    common.add_argument("--output", "-o", help="Output file. Default: stdout")
    common.add_argument(
        "--format", choices=["csv", "json"], default="csv", help="Output format. Default: csv"
    )
    common.add_argument(
        "--engine",
        choices=[e.value for e in sizing.Engine],
        help="Sizing engine. Default: scenario 'engine', else spectral when the model fits",
    )
    common.add_argument(
        "--units", choices=UNIT_MODES, help="Unit mode. Default: scenario 'units', else normalized"
    )
    common.add_argument(
        "--results-dir", help="Directory for run logs and archived outputs (env STORAGE_SIZING_RESULTS_DIR)"
    )
    common.add_argument("--quiet", "-q", action="store_true", help="Only warnings on stderr")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging on stderr")

    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    size = commands.add_parser("size", parents=[common], help="Smallest storage meeting the outage target")
    size.add_argument(
        "--diagnostics",
        action="store_true",
        help="Add solver diagnostics and the large-population comparison (JSON only)",
    )
    size.add_argument(
        "--outage-measure",
        choices=[m.value for m in sizing.OutageMeasure],
        help="Outage event to size against. Default: scenario 'outage_measure', else deficit",
    )
    commands.add_parser("capacity", parents=[common], help="Smallest grid power for a given storage")
    commands.add_parser("effdemand", parents=[common], help="Per-class effective demand")
    admit = commands.add_parser("admit", parents=[common], help="Admission decision for a population")
    admit.add_argument("--region", action="store_true", help="Emit the 2-class admission staircase")
    simulate = commands.add_parser("simulate", parents=[common], help="Monte Carlo survivor estimates")
    simulate.add_argument("--seed", type=int, help="Override the scenario seed")
    simulate.add_argument("--replications", type=int, help="Override the replication count")
    econ = commands.add_parser("economics", parents=[common], help="Per-user monthly cost table")
    econ.add_argument(
        "--sizer", choices=sorted(economics.SIZERS), help="Storage sizer for the shared case"
    )
    commands.add_parser("sweep", parents=[common], help="Sizing over a parameter grid")
    return parser


def configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    logging.captureWarnings(True)


def _counts(pop: Population) -> str:
    return ";".join(str(n) for n in pop.counts)


def _engine(args: argparse.Namespace, document: Dict, pop: Population) -> sizing.Engine:
    name = args.engine or document.get("engine")
    if name is None:
        return sizing.default_engine_for(pop)
    try:
        return sizing.Engine(name)
    except ValueError:
        raise ScenarioError(f"unknown engine '{name}'", field="engine")


def _measure(args: argparse.Namespace, document: Dict) -> sizing.OutageMeasure:
    name = args.outage_measure or document.get("outage_measure", sizing.OutageMeasure.DEFICIT.value)
    try:
        return sizing.OutageMeasure(name)
    except ValueError:
        raise ScenarioError(f"unknown outage measure '{name}'", field="outage_measure")


def cmd_size(args, document: Dict, context: RunContext) -> CommandOutput:
    """Smallest storage meeting the outage target"""
    pop = population_of(document, unit_mode(document, args.units))
    grid_power = grid_power_of(document, pop)
    eps = epsilon_of(document)
    engine = _engine(args, document, pop)
    measure = _measure(args, document)

    result = sizing.epsilon_outage_capacity(pop, grid_power, eps, engine, measure)
    row = {
        "N": _counts(pop),
        "C": grid_power,
        "epsilon": eps,
        "B": result.storage,
        "engine": result.engine.value,
        "measure": result.measure.value,
        "achieved": result.achieved,
        "iterations": result.iterations,
        "bracket": result.bracket,
        "converged": result.converged,
    }
    scale = storage_scale_of(document)
    if scale is not None:
        row["B_kwh"] = result.storage * scale
    if "support_duration" in document:
        row["peak_savings"] = sizing.peak_savings(
            pop, grid_power, eps, float(document["support_duration"]), engine
        )
    for note in result.notes:
        status(note, Fore.YELLOW, context.quiet)

    data = {"row": row, "result": result}
    if args.diagnostics:
        data.update(_diagnostics(pop, grid_power, result.storage))
    return CommandOutput(rows=[row], data=data)


def _diagnostics(pop: Population, grid_power: float, storage: float) -> Dict:
    sol = spectral_solver.solve(build_generator_multi(pop), grid_power)
    out: Dict[str, Any] = {"diagnostics": sol.diagnostics.to_dict()}
    if pop.n_classes != 1:
        return out
    consumer = pop.classes[0]
    levels = np.linspace(0.0, 2.0 * max(storage, 1.0), 9)
    exact = spectral_solver.survivor_curve(sol, levels)
    normalized = levels * consumer.mu / consumer.peak_demand
    try:
        params = closed_forms.asymptotic_params_for(pop, grid_power)
        out["asymptotic_comparison"] = closed_forms.asymptotic_comparison(params, normalized, exact)
    except (DomainError, SizingError) as e:
        out["asymptotic_comparison"] = []
        out["asymptotic_error"] = f"{type(e).__name__}: {e}"
    return out


def cmd_capacity(args, document: Dict, context: RunContext) -> CommandOutput:
    """Smallest grid power meeting the outage target with a fixed storage"""
    pop = population_of(document, unit_mode(document, args.units))
    storage = storage_of(document)
    eps = epsilon_of(document)
    engine = _engine(args, document, pop)

    result = sizing.min_grid_power(pop, storage, eps, engine)
    row = {
        "N": _counts(pop),
        "B": storage,
        "epsilon": eps,
        "C": result.grid_power,
        "C_per_user": result.grid_power / sum(pop.counts),
        "engine": result.engine.value,
        "achieved": result.achieved,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    return CommandOutput(rows=[row], data={"row": row, "result": result})


def cmd_effdemand(args, document: Dict, context: RunContext) -> CommandOutput:
    """Per-class effective demand table"""
    pop = population_of(document, unit_mode(document, args.units))
    decay = ed.DecayParameter(epsilon=epsilon_of(document), storage=storage_of(document))
    rows = ed.effective_demand_table(pop, decay)
    for row in rows:
        row["zeta"] = decay.zeta
    data = {
        "zeta": decay.zeta,
        "xi": decay.xi,
        "classes": rows,
        "effective_load": ed.effective_load(pop, decay),
    }
    return CommandOutput(rows=rows, data=data)


def cmd_admit(args, document: Dict, context: RunContext) -> CommandOutput:
    """Effective-demand admission decision, or the two-class region with --region"""
    pop = population_of(document, unit_mode(document, args.units))
    grid_power = grid_power_of(document, pop)
    storage = storage_of(document)
    eps = epsilon_of(document)

    if args.region:
        region = ed.admission_region(pop.classes, grid_power, storage, eps)
        rows = [{"N1": n_1, "N2_max": n_2} for n_1, n_2 in region]
        return CommandOutput(rows=rows, data={"region": rows})

    decision = ed.admissible(pop, grid_power, storage, eps)
    row = {
        "N": _counts(pop),
        "C": grid_power,
        "B": storage,
        "epsilon": eps,
        "admit": decision.admit,
        "load": decision.load,
        "margin": decision.margin,
        "strict_admit": decision.strict_admit,
    }
    return CommandOutput(rows=[row], data={"row": row})


def cmd_simulate(args, document: Dict, context: RunContext) -> CommandOutput:
    """Monte Carlo survivor estimates with standard errors"""
    pop = population_of(document, unit_mode(document, args.units))
    grid_power = grid_power_of(document, pop)
    config, levels = sim_config_of(document, pop, grid_power)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if overrides:
        config = dataclasses.replace(config, **overrides)

    start = time.time()
    summary = simulator.simulate(config, levels)
    logger.info(
        "%d replications, %d events in %.1fs", summary.replications, summary.events, time.time() - start
    )
    rows = [
        {
            "level": s.level,
            "estimate": s.estimate,
            "std_error": s.std_error,
            "replications": s.replications,
        }
        for s in summary.survivor
    ]
    return CommandOutput(rows=rows, data=summary.to_dict())


def cmd_economics(args, document: Dict, context: RunContext) -> CommandOutput:
    """Per-user monthly cost table and breakeven population"""
    block = document.get("economics")
    if not isinstance(block, dict):
        raise ScenarioError("missing economics block", field="economics")
    scenario = economics.EconScenario.from_dict(block)
    book = economics.load_tariff_book(document.get("tariff_book"))
    sizer_name = args.sizer or block.get("sizer", "effective_demand")
    if sizer_name not in economics.SIZERS:
        raise ScenarioError(f"unknown sizer '{sizer_name}'", field="economics.sizer")
    sizer = economics.SIZERS[sizer_name]

    n_values = [int(n) for n in block.get("n_values", range(1, 51))]
    rows = economics.cost_table(scenario, book, sizer, n_values)
    data: Dict[str, Any] = {"scenario": scenario, "sizer": sizer_name, "rows": rows}
    if block.get("breakeven", True):
        breakeven = economics.breakeven_population(
            scenario, book, sizer, cap=int(block.get("breakeven_cap", economics.BREAKEVEN_CAP))
        )
        data["breakeven"] = dataclasses.asdict(breakeven)
        if breakeven.found:
            status(f"breakeven at {breakeven.n_users} users", Fore.GREEN, context.quiet)
        else:
            status(f"no breakeven below {breakeven.cap} users", Fore.YELLOW, context.quiet)
    return CommandOutput(rows=rows, data=data)


def cmd_sweep(args, document: Dict, context: RunContext) -> CommandOutput:
    block = document.get("sweep")
    if not isinstance(block, dict):
        raise ScenarioError("missing sweep block", field="sweep")
    pop = population_of(document, unit_mode(document, args.units))
    points = build_grid(pop, block, document.get("epsilon"))
    engine = _engine(args, document, pop)

    def progress(done: int, total: int, point) -> None:
        logger.debug("sweep point %d/%d done (#%d)", done, total, point.index)

    pipeline = SweepPipeline(pop, engine, context.run_log)
    rows = pipeline.execute(points, max_workers=context.settings.workers, progress_callback=progress)
    return CommandOutput(rows=rows, data={"rows": rows})


HANDLERS: Dict[str, Callable[..., CommandOutput]] = {
    "size": cmd_size,
    "capacity": cmd_capacity,
    "effdemand": cmd_effdemand,
    "admit": cmd_admit,
    "simulate": cmd_simulate,
    "economics": cmd_economics,
    "sweep": cmd_sweep,
}


def format_value(value: Any) -> str:
    """Fixed 10-significant-digit floats so CSV output is reproducible"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def to_csv(rows: Sequence[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    headers = list(rows[0].keys()) if rows else []
    writer.writerow(headers)
    for row in rows:
        writer.writerow([format_value(row.get(h)) for h in headers])
    return buffer.getvalue()


def to_json(data: Any) -> str:
    return json.dumps(to_serializable(data), indent=2) + "\n"


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse, dispatch, emit; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    configure_logging(args)
    try:
        settings = get_settings()
        run_log = RunLog(args.results_dir or settings.results_dir)
        session_id = run_log.start_session(
            f"{args.command} {args.input}",
            {"command": args.command, "input": args.input, "format": args.format, "engine": args.engine},
        )
    except (SizingError, OSError) as e:
        status(f"{type(e).__name__}: {e}", Fore.RED)
        return EXIT_ENGINE_ERROR

    context = RunContext(settings=settings, run_log=run_log, quiet=args.quiet)
    status(f"{args.command}: {args.input}", quiet=args.quiet)

    try:
        document = load_scenario(args.input)
        output = HANDLERS[args.command](args, document, context)
    except SizingError as e:
        run_log.log_error(type(e).__name__, str(e), {"command": args.command, "input": args.input})
        run_log.complete_session(session_id, status="failed")
        status(f"{type(e).__name__}: {e}", Fore.RED)
        return EXIT_ENGINE_ERROR

    text = to_csv(output.rows) if args.format == "csv" else to_json(output.data)
    if args.output:
        try:
            with open(args.output, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        except OSError as e:
            run_log.log_error(type(e).__name__, str(e), {"command": args.command, "output": args.output})
            run_log.complete_session(session_id, status="failed")
            status(f"{type(e).__name__}: {e}", Fore.RED)
            return EXIT_ENGINE_ERROR
        status(f"wrote {args.output}", Fore.GREEN, args.quiet)
    else:
        sys.stdout.write(text)

    run_log.archive(session_id, f"{args.command}.{args.format}", text)
    run_log.log_operation("COMPLETE", f"{args.command} {args.input} -> {args.output or 'stdout'}")
    run_log.complete_session(session_id)
    return EXIT_OK
