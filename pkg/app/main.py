"""
UNIF command-line application
Part-union neural implicit surfaces: generate synthetic scans, train,
reconstruct, animate and evaluate
"""
import sys
from typing import Annotated, Optional

import click
import typer
from loguru import logger

from app.cli.commands import animate, eval as eval_cmd, generate, reconstruct, train
from app.cli.common import EXIT_USER_ERROR
from app.core.config import settings
from app.core.logging import setup_logging


def create_app() -> typer.Typer:
    """Factory function để tạo typer application"""
    cli = typer.Typer(
        name="unif",
        help=(
            "Union of per-bone neural SDFs with adjacent part seaming.\n"
            "Defaults: lr 1e-3 x0.3 at epochs 1000/2000/3000, 5000 epochs, 4 frames per batch, "
            "lambda unit/lim/sec/perim = 0.1/1/0.01/0.001, smooth union beta 200, "
            "5000 surface + 5000 local + 5000 global samples per frame."
        ),
        no_args_is_help=True,
        add_completion=False,
        pretty_exceptions_enable=False,
    )

    @cli.callback()
    def _root(
        log_level: Annotated[Optional[str], typer.Option(help="DEBUG, INFO, WARNING, ERROR")] = None,
    ) -> None:
        setup_logging(level=log_level)
        logger.debug(f"unif {settings.version} ({settings.app_env})")

    # Subcommands
    cli.command("generate")(generate.generate)
    cli.command("train")(train.train)
    cli.command("reconstruct")(reconstruct.reconstruct)
    cli.command("animate")(animate.animate)
    cli.command("eval")(eval_cmd.evaluate)
    return cli


app = create_app()


def main() -> None:
    """Entry point; flag parsing errors count as user errors"""
    try:
        code = app(standalone_mode=False)
    except click.exceptions.Abort:
        code = EXIT_USER_ERROR
    except click.exceptions.ClickException as e:
        e.show()
        code = EXIT_USER_ERROR
    sys.exit(code or 0)


if __name__ == "__main__":
    main()
