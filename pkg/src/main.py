#!/usr/bin/env python3
"""
Resilience simulator - command line entry point

    python src/main.py run --script builtin --seed 0 --out ./out
    python src/main.py validate --script scenarios/rollout.json
"""

import asyncio
import logging
import sys
from typing import Optional

import click

from cli.colors import Colors
from cli.summary import render_summary
from config import MINUTE_MS, AppConfig
from core.tcp_bridge import TcpMirror, run_mirrored
from exceptions.sim_exceptions import ScriptValidationError, SimulationError
from harness.engine import Simulation
from harness.report import write_run
from harness.scenario import load_script

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_INVALID_SCRIPT = 2


def _fail(message: str, code: int, debug: bool = False) -> None:
    click.echo(Colors.error(message), err=True)
    if debug and code == EXIT_FAILURE:
        raise
    sys.exit(code)


@click.group()
@click.option("--debug", is_flag=True, help="Verbose logging and tracebacks.")
@click.pass_context
def cli(ctx: click.Context, debug: bool) -> None:
    """Deterministic simulation of microservice resilience patterns."""
    ctx.obj = {"debug": debug}
    if debug:
        logging.getLogger().setLevel(logging.DEBUG)


@cli.command()
@click.option("--script", "script_path", default="builtin", show_default=True,
              help="Scenario JSON file, or 'builtin' for the three failure scenarios.")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--out", "out_dir", default="./out", show_default=True, type=click.Path(file_okay=False))
@click.option("--time-scale", default=0.0, show_default=True, type=click.FloatRange(min=0.0),
              help="Wall seconds per simulated second; 0 fast-forwards.")
@click.option("--fleet-size", default=40, show_default=True, type=click.IntRange(min=1))
@click.option("--crash-mode/--graceful", default=True, show_default=True,
              help="Whether scripted stops crash or deregister.")
@click.option("--boot-config", type=click.Path(exists=True, dir_okay=False),
              help="JSON file of {'service.key': value} properties.")
@click.option("--csv/--no-csv", "write_csv", default=True, show_default=True, help="Also write cycles.csv.")
@click.option("--mirror-port", type=click.IntRange(min=0, max=65535),
              help="Mirror broker traffic to TCP clients on this port while running.")
@click.pass_context
def run(ctx: click.Context, script_path: str, seed: int, out_dir: str, time_scale: float, fleet_size: int,
        crash_mode: bool, boot_config: Optional[str], write_csv: bool, mirror_port: Optional[int]) -> None:
    """Replay a scenario and write report.json, registry.json, trace.jsonl and cycles.csv."""
    debug = ctx.obj["debug"]
    config = AppConfig(DEBUG=debug, SEED=seed, TIME_SCALE=time_scale, FLEET_SIZE=fleet_size,
                       CRASH_MODE=crash_mode, OUT_DIR=out_dir, BOOT_CONFIG_PATH=boot_config,
                       WRITE_CSV=write_csv)
    try:
        script = load_script(script_path)
        simulation = Simulation(script, config)
        if mirror_port is None:
            result = simulation.run()
        else:
            mirror = TcpMirror(port=mirror_port).bind(simulation.broker)
            result = asyncio.run(run_mirrored(simulation.run, mirror))
        files = write_run(result, config.OUT_DIR, config.WRITE_CSV)
    except ScriptValidationError as e:
        logger.error(f"Invalid script: {e}")
        _fail(f"Invalid script: {e}", EXIT_INVALID_SCRIPT)
    except SimulationError as e:
        logger.error(f"Run failed: {e}")
        _fail(f"Run failed: {e}", EXIT_FAILURE, debug)
    except KeyboardInterrupt:
        logger.warning("Run interrupted by user")
        _fail("Run interrupted by user", EXIT_FAILURE)
    except Exception as e:
        logger.critical(f"Fatal error: {e}", exc_info=True)
        _fail(f"Fatal error: {e}", EXIT_FAILURE, debug)
    else:
        click.echo(render_summary(result.report, files))


@cli.command()
@click.option("--script", "script_path", required=True, help="Scenario JSON file or 'builtin'.")
@click.option("--backservers", default=4, show_default=True, type=click.IntRange(min=1))
@click.option("--fleet-size", default=40, show_default=True, type=click.IntRange(min=1))
def validate(script_path: str, backservers: int, fleet_size: int) -> None:
    """Check a scenario script without running it."""
    try:
        config = AppConfig(FLEET_SIZE=fleet_size)
        config.services.backserver_count = backservers
        simulation = Simulation(load_script(script_path), config)
        simulation.script.validate(simulation.known_instances(), simulation.fleet.rovers)
    except ScriptValidationError as e:
        _fail(f"Invalid script: {e}", EXIT_INVALID_SCRIPT)
    except SimulationError as e:
        _fail(f"Cannot validate: {e}", EXIT_FAILURE)
    else:
        script = simulation.script
        click.echo(Colors.success(f"{script.name}: {len(script.events)} events over "
                                  f"{script.duration // MINUTE_MS} min - OK"))


def main() -> None:
    """Application entry point"""
    cli(prog_name="resilience-sim")


if __name__ == '__main__':
    main()
