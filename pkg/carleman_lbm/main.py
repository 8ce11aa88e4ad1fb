#!/usr/bin/env python3
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

import typer
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from carleman_lbm.config import EXPERIMENTS, ExperimentConfig, default_config, load_config
from carleman_lbm.errors import CapacityError, CarlemanLBMError, ConfigError, NumericalError
from carleman_lbm.experiments import COLUMNS, ExperimentOutcome, plan_points, run_experiment

logger = logging.getLogger("carleman_lbm")

console = Console()
app = typer.Typer(help="Carleman-linearized lattice Boltzmann studies: errors, conditioning and quantum cost.")

# Rows shown in the console table; the CSV always holds all of them
MAX_TABLE_ROWS = 25


def setup_logging(level: int = logging.INFO, log_dir: Path = Path("logs")) -> Path:
    """Log to a timestamped file under ``log_dir`` and to the console."""
    log_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file = log_dir / f"carleman_lbm_{timestamp}.log"

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(),
        ],
        force=True,
    )
    logger.setLevel(level)
    logger.info(f"Logging initialized. Writing to {log_file}")
    return log_file


def _parse_level(log_level: str) -> int:
    numeric_level = getattr(logging, log_level.upper(), None)
    if not isinstance(numeric_level, int):
        console.print(f"[red]Invalid log level: {log_level}")
        raise typer.Exit(2)
    return numeric_level


def _load(experiment: str, config_path: Optional[Path]) -> ExperimentConfig:
    if config_path is None:
        return default_config(experiment)
    config = load_config(config_path)
    if config.experiment != experiment:
        raise ConfigError(f"{config_path} configures '{config.experiment}', not '{experiment}'")
    return config


def _format(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def display_outcome(outcome: ExperimentOutcome) -> None:
    columns = COLUMNS[outcome.experiment]
    table = Table(title=f"{outcome.experiment} ({len(outcome.rows)} rows)")
    for column in columns:
        table.add_column(column, justify="right")
    for row in outcome.rows[:MAX_TABLE_ROWS]:
        table.add_row(*(_format(row.get(column)) for column in columns))
    console.print(table)
    if len(outcome.rows) > MAX_TABLE_ROWS:
        console.print(f"[dim]... {len(outcome.rows) - MAX_TABLE_ROWS} more rows in results.csv[/dim]")
    if outcome.summary:
        console.print("\n[bold green]Summary:[/bold green]")
        console.print_json(json.dumps(outcome.summary))
    if outcome.resumed:
        console.print(f"[cyan]{outcome.resumed} points reused from an earlier run[/cyan]")
    console.print(f"\n[bold]Artifacts written to: [link={outcome.out_dir}]{outcome.out_dir}[/link][/bold]")


def run(
    experiment: str,
    config_path: Optional[Path],
    out: Path,
    workers: Optional[int],
    max_mem: Optional[int],
    seed: Optional[int],
    log_level: str,
) -> ExperimentOutcome:
    """
    Load (or default) the configuration, apply CLI overrides and run the sweep.

    Library errors map to exit codes: 2 configuration or parameters,
    3 memory capacity, 4 numerical failure, 1 anything unexpected.
    """
    level = _parse_level(log_level)
    out = out / experiment
    setup_logging(level, out / "logs")

    try:
        config = _load(experiment, config_path)
        overrides = {
            key: value for key, value in
            (("workers", workers), ("max_mem", max_mem), ("seed", seed)) if value is not None
        }
        if overrides:
            config = ExperimentConfig(**{**config.model_dump(), **overrides})
        logger.info(f"Running {experiment} with {len(plan_points(config))} points on {config.workers} workers")

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
            TimeElapsedColumn(),
        ) as progress:
            task = progress.add_task(f"[cyan]{experiment}...", total=len(plan_points(config)))

            def advance(key: str) -> None:
                progress.update(task, advance=1, description=f"[cyan]{experiment} {key}")

            outcome = run_experiment(config, out, on_point=advance)
    except ConfigError as e:
        logger.error(str(e))
        console.print(f"[red]Configuration error: {e}")
        raise typer.Exit(e.exit_code)
    except CapacityError as e:
        logger.error(str(e))
        console.print(f"[red]Capacity exceeded: {e}")
        console.print("[yellow]Raise --max-mem or shrink the sweep (Re, N_C).[/yellow]")
        raise typer.Exit(e.exit_code)
    except NumericalError as e:
        logger.error(str(e))
        console.print(f"[red]Numerical failure: {e}")
        raise typer.Exit(e.exit_code)
    except CarlemanLBMError as e:
        logger.error(str(e))
        console.print(f"[red]Error: {e}")
        raise typer.Exit(e.exit_code)
    except ValueError as e:
        logger.error(f"Invalid override: {e}")
        console.print(f"[red]Invalid option: {e}")
        raise typer.Exit(2)
    except Exception as e:
        logger.exception(f"Unexpected failure in {experiment}")
        console.print(f"[red]Unexpected error: {e}")
        raise typer.Exit(1)

    display_outcome(outcome)
    return outcome


CONFIG_OPTION = typer.Option(None, "--config", help="JSON experiment configuration (defaults built in)")
OUT_OPTION = typer.Option(Path("out"), "--out", help="Output directory; each experiment writes to a subdirectory")
WORKERS_OPTION = typer.Option(None, "--workers", help="Sweep points run in parallel")
MAX_MEM_OPTION = typer.Option(None, "--max-mem", help="Memory cap in bytes for dense and Carleman objects")
SEED_OPTION = typer.Option(None, "--seed", help="Seed for Lanczos start vectors")
LOG_LEVEL_OPTION = typer.Option("INFO", help="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)")


def _register(name: str, doc: str) -> None:
    def command(
        config: Optional[Path] = CONFIG_OPTION,
        out: Path = OUT_OPTION,
        workers: Optional[int] = WORKERS_OPTION,
        max_mem: Optional[int] = MAX_MEM_OPTION,
        seed: Optional[int] = SEED_OPTION,
        log_level: str = LOG_LEVEL_OPTION,
    ) -> None:
        run(name, config, out, workers, max_mem, seed, log_level)

    command.__doc__ = doc
    app.command(name)(command)


_register("params-table", "Simulation parameters and Carleman/system dimensions for each (Re, N_C).")
_register("carleman-error", "Truncation error of the Carleman evolution against the direct LBE, with error-model fits.")
_register("threshold-scan", "Reynolds number above which N_C = 2 is worse than N_C = 1.")
_register("condition-scaling", "Lanczos condition numbers of the time-block systems and their power-law fit in Re.")
_register("be-ratio", "Block-encoding prefactor ratio against ||A|| and its exponential fit in N_C.")
_register("cost-report", "Qubit counts, query bounds, success probabilities and classical comparison.")
_register("gate-budget", "Full and simplified T-gate counts per query to the block-encoded system.")
_register("drag-demo", "Momentum-exchange drag on flat walls from the direct and the Carleman evolution.")


@app.command("init-config")
def init_config(
    experiment: str = typer.Argument(..., help=f"One of: {', '.join(EXPERIMENTS)}"),
    output: Path = typer.Option(Path("config.json"), help="Where to write the configuration"),
) -> None:
    """Write the built-in default configuration of an experiment as an editable JSON file."""
    try:
        config = default_config(experiment)
    except ConfigError as e:
        console.print(f"[red]{e}")
        raise typer.Exit(e.exit_code)
    output.write_text(json.dumps(config.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
    console.print(f"[green]Wrote {experiment} configuration to {output}")


if __name__ == "__main__":
    app()
