"""CLI presentation layer using Rich for console output."""

import argparse
import json
import math
import sys
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any, NoReturn, Optional

from rich.console import Console
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskProgressColumn,
    TextColumn,
    TimeElapsedColumn,
)
from rich.table import Table

from gemrec import __version__
from gemrec.application.container import Container
from gemrec.application.use_cases.audit import AuditSuite
from gemrec.application.use_cases.data_generation import DataGenerationSummary
from gemrec.application.use_cases.decode import decode_request
from gemrec.application.use_cases.training import TrainingSummary
from gemrec.domain.exceptions import AuditFailureError, GemRecError, ValidationError
from gemrec.domain.models import AuditReport, MetricsRow, ShockRow
from gemrec.domain.models import Progress as UseCaseProgress
from gemrec.infrastructure.config import PRESETS, RunConfig, load_run_config
from gemrec.infrastructure.logging import bind_run_context, configure_logging, get_logger

console = Console()
logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_AUDIT_FAILURE = 2

# CLI dest -> RunConfig field
OVERRIDE_FIELDS = (
    "seed",
    "out_dir",
    "log_level",
    "log_file",
    "n_items",
    "n_users",
    "depth",
    "codebook_size",
    "sponsored_fraction",
    "p",
    "r",
    "order",
    "alpha",
    "lambda_grid",
    "lambda_value",
    "lambda_slot",
    "lambda_item",
    "beam_width",
    "flag_mode",
    "trie_constrained",
    "eval_users",
    "shock_fraction",
    "shock_multiplier",
    "audit_instances",
    "audit_contexts",
    "audit_oracle_models",
)


def _common_options() -> argparse.ArgumentParser:
    """Global flags, accepted before or after the subcommand."""
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", dest="config_file", type=Path, help="JSON config file")
    common.add_argument("--seed", type=int, help="Global seed (default: 0)")
    common.add_argument("--out", dest="out_dir", type=Path, help="Artifact directory")
    common.add_argument("--preset", choices=sorted(PRESETS), help="Policy preset (default: main)")
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (default: WARNING)",
    )
    common.add_argument("--log-file", type=Path, help="Path to log file (optional)")
    return common


def _add_decoding_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--beam", dest="beam_width", type=int, help="Beam width K")
    parser.add_argument("--lambda-slot", type=float, help="Slot-level lambda override")
    parser.add_argument("--lambda-item", type=float, help="Item-level lambda override")
    parser.add_argument(
        "--no-trie",
        dest="trie_constrained",
        action="store_false",
        help="Decode over the full level-legal vocabulary",
    )


def create_parser() -> argparse.ArgumentParser:
    """Create CLI argument parser."""
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="gemrec",
        description="Bid-aware generative recommendation: simulate, train, decode and audit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
        epilog="""
Examples:
  # Synthesize the marketplace and train the scorer
  gemrec gen-data --out runs/main
  gemrec train --out runs/main

  # Sweep lambda and run the bid-shock experiment
  gemrec sweep --out runs/main --lambda-grid 0,1,5
  gemrec shock --out runs/main

  # Decode one request and run the mechanism audits
  gemrec decode request.json --out runs/main --flag-mode force_ad
  gemrec audit --out runs/main
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = commands.add_parser("gen-data", parents=[common], help="Synthesize items and logs")
    gen.add_argument("--n-items", type=int, help="Catalog size")
    gen.add_argument("--n-users", type=int, help="Number of users")
    gen.add_argument("--depth", type=int, help="Semantic ID depth D")
    gen.add_argument("--codebook-size", type=int, help="Codebook size C")
    gen.add_argument("--sponsored-fraction", type=float, help="Share of sponsored items")
    gen.add_argument("--p", type=float, help="Base ad acceptance rate")
    gen.add_argument("--r", type=float, help="Ad fatigue recovery rate")

    train = commands.add_parser("train", parents=[common], help="Train the scorer")
    train.add_argument("--order", type=int, help="Back-off context length m")
    train.add_argument("--alpha", type=float, help="Smoothing constant")

    decode = commands.add_parser("decode", parents=[common], help="Decode one request")
    decode.add_argument("request", type=Path, help="Decode request JSON file ('-' for stdin)")
    decode.add_argument("--lambda", dest="lambda_value", type=float, help="Lambda")
    decode.add_argument(
        "--flag-mode", choices=["sample", "force_org", "force_ad"], help="Flag commitment"
    )
    _add_decoding_options(decode)

    sweep = commands.add_parser("sweep", parents=[common], help="Run the lambda sweep")
    sweep.add_argument("--lambda-grid", help="Comma-separated lambda values")
    sweep.add_argument("--eval-users", type=int, help="Cap on evaluated users")
    _add_decoding_options(sweep)

    shock = commands.add_parser("shock", parents=[common], help="Run the bid-shock experiment")
    shock.add_argument("--lambda-grid", help="Comma-separated lambda values")
    shock.add_argument("--eval-users", type=int, help="Cap on evaluated users")
    shock.add_argument("--shock-fraction", type=float, help="Share of sponsored items shocked")
    shock.add_argument("--shock-multiplier", type=float, help="Bid multiplier")
    _add_decoding_options(shock)

    audit = commands.add_parser("audit", parents=[common], help="Run the mechanism audits")
    audit.add_argument("--instances", dest="audit_instances", type=int, help="Toy instances")
    audit.add_argument("--contexts", dest="audit_contexts", type=int, help="Contexts per instance")
    audit.add_argument(
        "--oracle-models", dest="audit_oracle_models", type=int, help="Beam-oracle models"
    )
    audit.add_argument(
        "--toy-only", action="store_true", help="Skip checks on trained artifacts"
    )

    for sub in (decode, sweep, shock):
        sub.set_defaults(trie_constrained=None)
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Resolve the run configuration from parsed arguments."""
    overrides = {name: getattr(args, name, None) for name in OVERRIDE_FIELDS}
    return load_run_config(
        preset=getattr(args, "preset", None),
        config_file=getattr(args, "config_file", None),
        overrides=overrides,
    )


def _fmt(value: Optional[float], digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    return f"{value:.{digits}f}"


@contextmanager
def progress_display(label: str) -> Iterator[Callable[[UseCaseProgress], None]]:
    """Rich progress bar fed by a use-case progress callback."""
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    ) as progress_bar:
        task = progress_bar.add_task(f"[cyan]{label}...", total=None)

        def progress_callback(prog: UseCaseProgress) -> None:
            """Update progress bar."""
            if prog.total > 0:
                progress_bar.update(
                    task,
                    total=prog.total,
                    completed=prog.completed,
                    description=f"[cyan]{label}: {prog.phase}",
                )

        yield progress_callback


def display_generation(summary: DataGenerationSummary) -> None:
    table = Table(title="Synthetic Marketplace", show_header=True, header_style="bold magenta")
    table.add_column("Metric", style="cyan", no_wrap=True)
    table.add_column("Value", style="green")
    table.add_row("Items", str(summary.n_items))
    table.add_row("Sponsored Items", str(summary.n_sponsored))
    table.add_row("Users", str(summary.n_users))
    table.add_row("Logged Interactions", str(summary.n_events))
    table.add_row("Logged Ads", str(summary.n_ads))
    table.add_row("Train Ad %", f"{100 * summary.ad_fraction:.2f}%")
    table.add_row("Quantization Error", _fmt(summary.quantization_error))
    table.add_row("Max Disambiguator", str(summary.max_disambiguator))
    console.print(table)


def display_training(summary: TrainingSummary) -> None:
    table = Table(title="Scorer Training", show_header=True, header_style="bold magenta")
    table.add_column("Metric", style="cyan", no_wrap=True)
    table.add_column("Value", style="green")
    table.add_row("Training Streams", str(summary.n_streams))
    table.add_row("Context Tables", str(summary.n_contexts))
    table.add_row("Train Ad %", f"{100 * summary.train_ad_fraction:.2f}%")
    table.add_row("Train NLL", _fmt(summary.train_nll))
    table.add_row("Held-out NLL", _fmt(summary.heldout_nll))
    table.add_row("Baseline Held-out NLL", _fmt(summary.baseline_heldout_nll))
    console.print(table)


def display_metrics(title: str, rows: Sequence[MetricsRow]) -> None:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    for column in ("lambda", "ad_rate", "revenue", "ndcg10", "o_ndcg10", "ad_ndcg10", "validity"):
        table.add_column(column, style="cyan" if column == "lambda" else "green")
    for row in rows:
        table.add_row(
            _fmt(row.lam, 2),
            _fmt(row.ad_rate),
            _fmt(row.revenue, 2),
            _fmt(row.ndcg10),
            _fmt(row.o_ndcg10),
            _fmt(row.ad_ndcg10),
            _fmt(row.validity),
        )
    console.print(table)


def display_shock(rows: Sequence[ShockRow]) -> None:
    table = Table(title="Bid Shock", show_header=True, header_style="bold magenta")
    for column in ShockRow.COLUMNS[:-1]:
        table.add_column(column, style="cyan" if column == "lambda" else "green")
    for row in rows:
        uplift = "NA" if row.uplift is None else f"{row.uplift:.2f}x"
        share = "NA" if row.hv_share is None else f"{100 * row.hv_share:.1f}%"
        table.add_row(_fmt(row.lam, 2), _fmt(row.ad_rate), _fmt(row.revenue, 2), uplift, share)
    console.print(table)


def display_audit(report: AuditReport) -> None:
    table = Table(title="Mechanism Audit", show_header=True, header_style="bold magenta")
    table.add_column("Check", style="cyan", no_wrap=True)
    table.add_column("Result")
    table.add_column("Cases", justify="right")
    table.add_column("Failures", justify="right")
    for check in report.checks:
        result = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        failures = check.notes.get("failures_total", len(check.failures))
        table.add_row(check.name, result, str(check.cases), str(failures))
    console.print(table)


def run_gen_data(container: Container) -> int:
    with progress_display("Generating marketplace") as callback:
        container.progress_callback = callback
        summary = container.data_generator.execute()
    container.config.write_resolved(container.config.data_dir)
    console.print("\n[bold green]✓ Data generation completed![/bold green]\n")
    display_generation(summary)
    return EXIT_OK


def run_train(container: Container) -> int:
    summary = container.trainer.execute()
    container.config.write_resolved(container.config.model_dir)
    console.print("\n[bold green]✓ Training completed![/bold green]\n")
    display_training(summary)
    return EXIT_OK


def _read_request(path: Path) -> dict[str, Any]:
    try:
        text = sys.stdin.read() if str(path) == "-" else path.read_text(encoding="utf-8")
        document = json.loads(text)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"Cannot read decode request: {e}", path=str(path)) from e
    if not isinstance(document, dict):
        raise ValidationError("Decode request must be a JSON object", path=str(path))
    return document


def run_decode(container: Container, request_path: Path) -> int:
    document = _read_request(request_path)
    result = decode_request(container.decoder, document, container.config.decode_config())
    sys.stdout.write(json.dumps(result.to_response(), sort_keys=True) + "\n")
    return EXIT_OK


def run_sweep(container: Container) -> int:
    with progress_display("Sweeping lambda") as callback:
        container.progress_callback = callback
        result = container.evaluator.sweep()
    container.config.write_resolved(container.config.report_dir)
    console.print("\n[bold green]✓ Sweep completed![/bold green]\n")
    display_metrics("Lambda Sweep", result.rows)
    display_metrics("Unmodulated Reference", [result.reference])
    if result.baseline is not None:
        display_metrics("Ad-free Baseline (strict)", [result.baseline])
    return EXIT_OK


def run_shock(container: Container) -> int:
    cfg = container.config
    with progress_display("Bid shock") as callback:
        container.progress_callback = callback
        outcome = container.evaluator.shock(
            container.inventory,
            fraction=cfg.shock_fraction,
            multiplier=cfg.shock_multiplier,
            shock_seed=container.shock_seed,
        )
    cfg.write_resolved(cfg.report_dir)
    console.print(
        f"\n[bold green]✓ Shock completed![/bold green] {len(outcome.shocked)} items shocked\n"
    )
    display_shock(outcome.rows)
    return EXIT_OK


def run_audit(container: Container, toy_only: bool = False) -> int:
    with progress_display("Auditing") as callback:
        container.progress_callback = callback
        suite = container.make_audit_suite(include_trained=not toy_only)
        if not toy_only and suite.artifacts is None:
            console.print(
                "[yellow]⚠ No trained model found; auditing toy instances only[/yellow]"
            )
        report = suite.execute()
    container.config.write_resolved(container.config.report_dir)
    display_audit(report)
    AuditSuite.ensure_passed(report)
    console.print("\n[bold green]✓ All audits passed![/bold green]")
    return EXIT_OK


def dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    """
    Run one subcommand.

    Returns:
        Exit code (0 success, 1 input error, 2 audit failure)
    """
    try:
        container = Container(config)
        if args.command == "gen-data":
            return run_gen_data(container)
        if args.command == "train":
            return run_train(container)
        if args.command == "decode":
            return run_decode(container, args.request)
        if args.command == "sweep":
            return run_sweep(container)
        if args.command == "shock":
            return run_shock(container)
        return run_audit(container, toy_only=getattr(args, "toy_only", False))

    except AuditFailureError as e:
        console.print(f"\n[bold red]✗ Audit failed:[/bold red] {', '.join(e.context['checks'])}")
        logger.error("Audit failed", context=e.context)
        return EXIT_AUDIT_FAILURE

    except GemRecError as e:
        console.print(f"\n[bold red]✗ Error:[/bold red] {e.message}", style="red")

        advice = e.context.get("advice")
        if advice:
            console.print(f"\n[bold yellow]💡 Suggestion:[/bold yellow] {advice}")

        logger.error("Command failed", command=args.command, error=e.message, context=e.context)
        return EXIT_INPUT_ERROR

    except KeyboardInterrupt:
        console.print("\n[yellow]⚠ Interrupted by user[/yellow]")
        logger.info("Interrupted by user")
        return EXIT_INPUT_ERROR


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, resolve configuration and run; returns the exit code."""
    parser = create_parser()
    args = parser.parse_args(argv)

    try:
        config = build_config(args)
    except GemRecError as e:
        console.print(f"[bold red]✗ Configuration error:[/bold red] {e.message}", style="red")
        return EXIT_INPUT_ERROR

    configure_logging(
        log_level=config.log_level,
        log_file=config.log_file,
        json_logs=config.json_logs,
    )
    bind_run_context(args.command, config.seed, config.preset)
    logger.info("Resolved configuration", **config.resolved())

    if args.command != "decode":
        console.print(f"\n[bold cyan]gemrec v{__version__}[/bold cyan] {args.command}\n")
    return dispatch(args, config)


def main() -> NoReturn:
    """Main CLI entry point."""
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
