"""
forum-moblo command line.

Exit codes: 0 success, 1 failed oracle validation, 2 configuration error,
3 divergence, 4 capability mismatch.
"""

import logging
from pathlib import Path
from typing import Annotated, Callable, Optional

import typer
from rich import box
from rich.console import Console
from rich.table import Table

from forum_moblo.harness.compare import compare_methods, expand_compare_configs
from forum_moblo.harness.complexity import benchmark_complexity
from forum_moblo.harness.config.settings import configure_logging, get_settings
from forum_moblo.harness.experiment import (
    BenchmarkOptions,
    build_problem,
    load_experiment_config,
    run_experiment,
)
from forum_moblo.harness.outputs import config_sha256, write_summary_json, write_table_csv
from forum_moblo.shared.errors import CapabilityError, ConfigurationError, DivergenceError, StructuralError
from forum_moblo.shared.validation import validate_problem

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_CAPABILITY = 4

app = typer.Typer(
    name="forum-moblo",
    help="First-order multi-objective bi-level optimization experiments",
    add_completion=False,
    rich_markup_mode="rich",
)

console = Console()

ConfigArg = Annotated[Path, typer.Argument(help="Path to the experiment JSON document")]
OutDirOpt = Annotated[Optional[Path], typer.Option("--out-dir", "-o", help="Output directory (default from settings)")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", "-s", min=0, help="Override the seed list with one seed")]
QuietOpt = Annotated[bool, typer.Option("--quiet", "-q", help="Only log warnings and errors")]


def _guarded(action: Callable[[], int]) -> int:
    """Run ``action`` and map forum_moblo errors onto exit codes."""
    try:
        return action()
    except (ConfigurationError, StructuralError) as exc:
        console.print(f"[bold red]Configuration error:[/bold red] {exc}")
        return EXIT_CONFIG
    except DivergenceError as exc:
        console.print(f"[bold red]Diverged:[/bold red] {exc}")
        return EXIT_DIVERGENCE
    except CapabilityError as exc:
        console.print(f"[bold red]Capability mismatch:[/bold red] {exc}")
        return EXIT_CAPABILITY


def _prepare(config_file: Path, out_dir: Optional[Path], quiet: bool):
    settings = get_settings()
    configure_logging(settings, quiet=quiet or settings.quiet)
    target = out_dir if out_dir is not None else Path(settings.out_dir)
    return settings, load_experiment_config(config_file), target


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4e}"
    return str(value)


@app.command()
def run(config_file: ConfigArg, out_dir: OutDirOpt = None, seed: SeedOpt = None, quiet: QuietOpt = False):
    """Run an experiment and write trace CSVs plus a summary JSON"""

    def action() -> int:
        settings, config, target = _prepare(config_file, out_dir, quiet)
        summary = run_experiment(config, target, seed=seed, workers=settings.workers)
        table = Table(title=f"[bold cyan]{config.name}[/bold cyan]", box=box.ROUNDED, header_style="bold magenta")
        for column in ("seed", "init", "verdict", "E", "K", "q", "trace"):
            table.add_column(column)
        for entry in summary["runs"]:
            final = entry["final"]
            table.add_row(
                str(entry["seed"]),
                entry["initialization"],
                entry["verdict"],
                _fmt(final["optimality_gap"]),
                _fmt(final["kkt_residual"]),
                _fmt(final["q"]),
                entry["trace_file"],
            )
        console.print(table)
        console.print(f"[dim]Summary:[/dim] {summary['summary_file']}")
        return EXIT_OK

    raise typer.Exit(code=_guarded(action))


@app.command("bench-complexity")
def bench_complexity(config_file: ConfigArg, out_dir: OutDirOpt = None, seed: SeedOpt = None, quiet: QuietOpt = False):
    """Measure per-iteration time and workspace across T and p"""

    def action() -> int:
        _, config, target = _prepare(config_file, out_dir, quiet)
        config = config.with_seed(seed)
        options = config.benchmark or BenchmarkOptions()
        run_seed = config.resolved_seeds()[0]
        report = benchmark_complexity(
            T_values=options.T_values,
            p_values=options.p_values,
            methods=options.methods,
            n=options.n,
            m=options.m,
            seed=run_seed,
            mu=options.mu,
            eta=options.eta,
            rho=options.rho,
            warmup=options.warmup,
            timed=options.timed,
        )
        config_data = config.model_dump(mode="json")
        provenance = {"config_sha256": config_sha256(config_data), "seed": run_seed}
        prefix = config.outputs.prefix or config.name
        write_table_csv(target / f"{prefix}__complexity.csv", report.frame(), provenance)
        write_summary_json(target / f"{prefix}__complexity_slopes.json", {**provenance, "config": config_data, "slopes": report.slopes_dict()})

        table = Table(title="[bold cyan]Complexity[/bold cyan]", box=box.ROUNDED, header_style="bold magenta")
        for column in ("method", "p", "T", "ms/iter", "peak floats"):
            table.add_column(column)
        for row in report.rows:
            table.add_row(row.method, str(row.p), str(row.T), f"{row.mean_time_s * 1e3:.3f}", str(row.peak_workspace_floats))
        console.print(table)
        return EXIT_OK

    raise typer.Exit(code=_guarded(action))


@app.command()
def compare(config_file: ConfigArg, out_dir: OutDirOpt = None, seed: SeedOpt = None, quiet: QuietOpt = False):
    """Run every method in the compare section and write one table"""

    def action() -> int:
        _, config, target = _prepare(config_file, out_dir, quiet)
        config = config.with_seed(seed)
        configs = expand_compare_configs(config)
        frame = compare_methods(configs, threshold=config.compare.threshold, metric=config.compare.metric, seed=seed)
        config_data = config.model_dump(mode="json")
        run_seed = config.resolved_seeds()[0]
        write_table_csv(
            target / f"{config.outputs.prefix or config.name}__comparison.csv",
            frame,
            {"config_sha256": config_sha256(config_data), "seed": run_seed},
        )
        table = Table(title="[bold cyan]Comparison[/bold cyan]", box=box.ROUNDED, header_style="bold magenta")
        for column in frame.columns:
            table.add_column(column)
        for record in frame.to_dict(orient="records"):
            table.add_row(*(_fmt(record[c]) for c in frame.columns))
        console.print(table)
        return EXIT_OK

    raise typer.Exit(code=_guarded(action))


@app.command()
def validate(config_file: ConfigArg, out_dir: OutDirOpt = None, seed: SeedOpt = None, quiet: QuietOpt = False):
    """Check the configured problem's oracles against finite differences"""

    def action() -> int:
        _, config, target = _prepare(config_file, out_dir, quiet)
        run_seed = seed if seed is not None else config.resolved_seeds()[0]
        problem, _ = build_problem(config.problem, run_seed)
        report = validate_problem(problem, seed=run_seed)
        write_summary_json(
            target / f"{config.outputs.prefix or config.name}__validation.json",
            {"config_sha256": config_sha256(config.model_dump(mode="json")), **report.as_dict()},
        )
        table = Table(title=f"[bold cyan]Validation: {problem.name}[/bold cyan]", box=box.ROUNDED, header_style="bold magenta")
        table.add_column("check", style="cyan")
        table.add_column("max error")
        table.add_column("result")
        for check in report.checks:
            table.add_row(check.name, f"{check.max_error:.3e}", "[green]pass[/green]" if check.passed else "[red]FAIL[/red]")
        console.print(table)
        return EXIT_OK if report.passed else EXIT_VALIDATION_FAILED

    raise typer.Exit(code=_guarded(action))


def main():
    app()


if __name__ == "__main__":
    main()
