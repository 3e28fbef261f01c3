"""
    Command line interface triggered by main
"""
import sys
import logging

import click

# config file interface
from ..config import load_config, DEFAULT_CONFIG_FILE, OUTPUT_DIR_KEY

# import api funcs
from .api import template as template_api
from .api import gen_data as gen_data_api
from .api import run as run_api
from .api import evaluate as evaluate_api
from .api import diag as diag_api
from .api import grid as grid_api
from .api import autotest as autotest_api


def _load(config_path, out):
    """
        Loads the experiment config and resolves the output directory
    """
    config = load_config(config_path)
    return config, out if out is not None else config[OUTPUT_DIR_KEY]


@click.group()
@click.option('--verbose', is_flag=True, help='Debug logging')
def cli(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s %(message)s'
    )


@click.command()
@click.option('--out-path', type=str, default=None, help=f'Path of the template config file, defaults to {DEFAULT_CONFIG_FILE}')
def template(out_path=None):
    """
        Writes a template experiment config with the full method roster
    """
    template_api(out_path)


@click.command()
@click.option('--config', 'config_path', type=str, default=None, help='Path to the JSON experiment config')
@click.option('--out', type=str, default=None, help='Output directory, defaults to output_dir in the config')
@click.option('--jobs', type=int, default=1, help='Ignored, data generation runs in one process')
@click.option('--seed-offset', type=int, default=0, help='Added to the data seed')
def gen_data(config_path, out, jobs=1, seed_offset=0):
    """
        Collects expert demonstrations, trains the copycat and writes the APE tables
    """
    config, out = _load(config_path, out)
    gen_data_api(config, out, seed_offset=seed_offset)


@click.command()
@click.option('--config', 'config_path', type=str, default=None, help='Path to the JSON experiment config')
@click.option('--out', type=str, default=None, help='Output directory, defaults to output_dir in the config')
@click.option('--jobs', type=int, default=1, help='Number of worker processes')
@click.option('--seed-offset', type=int, default=0, help='Added to every seed')
@click.option('--method', 'methods', type=str, multiple=True, help='Restrict to these methods (repeatable)')
def run(config_path, out, jobs=1, seed_offset=0, methods=()):
    """
        Trains every method for every seed, evaluates them and aggregates the results
    """
    config, out = _load(config_path, out)
    n_failed = run_api(config, out, jobs=jobs, seed_offset=seed_offset, methods=list(methods))
    sys.exit(1 if n_failed else 0)


@click.command(name='eval')
@click.option('--config', 'config_path', type=str, default=None, help='Path to the JSON experiment config')
@click.option('--out', type=str, default=None, help='Output directory, defaults to output_dir in the config')
@click.option('--jobs', type=int, default=1, help='Number of worker processes')
@click.option('--seed-offset', type=int, default=0, help='Added to every seed')
@click.option('--method', 'methods', type=str, multiple=True, help='Restrict to these methods (repeatable)')
def evaluate(config_path, out, jobs=1, seed_offset=0, methods=()):
    """
        Re-evaluates the stored policies of a previous run
    """
    config, out = _load(config_path, out)
    n_failed = evaluate_api(config, out, jobs=jobs, seed_offset=seed_offset, methods=list(methods))
    sys.exit(1 if n_failed else 0)


@click.command()
@click.option('--config', 'config_path', type=str, default=None, help='Path to the JSON experiment config')
@click.option('--out', type=str, default=None, help='Output directory, defaults to output_dir in the config')
@click.option('--jobs', type=int, default=1, help='Ignored, diagnostics run in one process')
@click.option('--seed-offset', type=int, default=0, help='Added to the first seed')
@click.option('--method', 'method_name', type=str, default='BC-OH', help='Policy whose errors are compared with APE')
def diag(config_path, out, jobs=1, seed_offset=0, method_name='BC-OH'):
    """
        Copycat-condition verdict, APE histogram and per-step trace
    """
    config, out = _load(config_path, out)
    diag_api(config, out, method_name=method_name, seed_offset=seed_offset)


@click.command()
@click.option('--config', 'config_path', type=str, default=None, help='Path to the JSON experiment config')
@click.option('--out', type=str, default=None, help='Output directory, defaults to output_dir in the config')
@click.option('--jobs', type=int, default=1, help='Number of worker processes')
@click.option('--seed-offset', type=int, default=0, help='Added to every grid seed')
def grid(config_path, out, jobs=1, seed_offset=0):
    """
        Sweeps softmax temperatures and step thresholds / weights
    """
    config, out = _load(config_path, out)
    n_failed = grid_api(config, out, jobs=jobs, seed_offset=seed_offset)
    sys.exit(1 if n_failed else 0)


@click.command()
@click.option('--module-name', type=str, help='If only one module, state the name here')
def autotest(module_name=None):
    """
        Runs unit tests
    """
    n_failed = autotest_api(module_name=module_name)
    sys.exit(1 if n_failed else 0)


# add commands
cli.add_command(template)
cli.add_command(gen_data)
cli.add_command(run)
cli.add_command(evaluate)
cli.add_command(diag)
cli.add_command(grid)
cli.add_command(autotest)


if __name__ == "__main__":

    # run app
    cli()
