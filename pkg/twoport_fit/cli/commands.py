"""
Command-line interface for two-port circuit design.
"""
import functools
import logging
import sys
from typing import Callable, List, Optional

import click
from tabulate import tabulate

from twoport_fit import __version__
from twoport_fit.circuit.components import Configuration
from twoport_fit.circuit.enumeration import count_table, enumerate_canonical, raw_space_size
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.dataset.generator import DatasetGenerator
from twoport_fit.dataset.records import SplitSpec
from twoport_fit.diffsim.refine import Refiner
from twoport_fit.exceptions import (
    CapacityError, IntegrityError, InvalidInputError, NumericalError, PredictionError, TwoPortError
)
from twoport_fit.search.ga import GeneticSearch, write_history
from twoport_fit.simulation.export import load_spectrum, save_spectrum, to_bytes, write_csv
from twoport_fit.simulation.simulator import FrequencyGrid, Spectrum, Termination, simulate
from twoport_fit.utils.common import resolve_threads, setup_logger


EXIT_INVALID_INPUT = 2
EXIT_NUMERICAL = 3

# Create a ConfigManager instance
config_manager = None


def initialize_config(config_file: Optional[str] = None) -> None:
    """
    Initialize the configuration manager.

    Args:
        config_file: Path to the configuration file.
    """
    global config_manager
    config_manager = ConfigManager(config_file)


def handle_errors(command: Callable) -> Callable:
    """
    Turn library errors into a red message and the matching exit code.
    """
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (InvalidInputError, IntegrityError, CapacityError) as e:
            click.echo(click.style(f"Error: {e}", fg='red'), err=True)
            sys.exit(EXIT_INVALID_INPUT)
        except (NumericalError, PredictionError) as e:
            click.echo(click.style(f"Error: {e}", fg='red'), err=True)
            sys.exit(EXIT_NUMERICAL)
        except TwoPortError as e:
            click.echo(click.style(f"Error: {e}", fg='red'), err=True)
            sys.exit(1)
    return wrapper


def _grid_from_config() -> FrequencyGrid:
    return FrequencyGrid.log_spaced(
        config_manager.getint('SIMULATION', 'points', fallback=512),
        config_manager.getfloat('SIMULATION', 'f_min', fallback=1.0),
        config_manager.getfloat('SIMULATION', 'f_max', fallback=1e6),
    )


def _termination(text: Optional[str]) -> Termination:
    if text:
        return Termination.parse(text)
    return Termination.parse(config_manager.get('SIMULATION', 'termination', fallback='load:1'))


def _threads() -> int:
    ctx = click.get_current_context()
    return resolve_threads(ctx.obj.get('threads') if ctx.obj else None, config_manager)


def _load_target(path: str, term: Optional[str]) -> Spectrum:
    # Binary files carry their own termination; --term only applies to CSV targets
    return load_spectrum(path, _termination(term))


@click.group()
@click.option(
    '--config', '-c',
    type=click.Path(exists=False),
    help='Path to the configuration file.'
)
@click.option(
    '--threads', '-j',
    type=int,
    default=None,
    help='Worker threads (default: all cores). TPF_THREADS overrides this.'
)
@click.option(
    '--verbose', '-v',
    is_flag=True,
    help='Log debug messages.'
)
@click.version_option(version=__version__)
@click.pass_context
def cli(ctx: click.Context, config: str, threads: Optional[int], verbose: bool) -> None:
    """
    Two-port linear analog circuit design from a target spectrum.

    Counts and enumerates canonical circuits, simulates them, fits component
    values with a differentiable simulator, searches with a genetic
    algorithm, and trains and evaluates a hypernetwork decoder.
    """
    initialize_config(config)
    ctx.ensure_object(dict)
    ctx.obj['threads'] = threads

    level_name = 'DEBUG' if verbose else config_manager.get('LOGGING', 'level', fallback='INFO')
    setup_logger('', config_manager.get('LOGGING', 'log_file', fallback='') or None,
                 getattr(logging, level_name.upper(), logging.INFO))


@cli.command('count')
@click.argument('n', type=int)
@click.option('--nc', type=int, default=3, show_default=True, help='Number of component types.')
@click.option('--nv', type=int, default=5, show_default=True, help='Number of values per type.')
@click.option('--upto', is_flag=True, help='Print the table for every length from 0 to N.')
@handle_errors
def count(n: int, nc: int, nv: int, upto: bool) -> None:
    """
    Number of canonical configurations of length N.
    """
    coefficients = count_table(n, nc, nv)
    if not upto:
        click.echo(coefficients[n])
        return

    rows = [[k, coefficients[k], raw_space_size(k, nc, nv)] for k in range(n + 1)]
    click.echo(tabulate(rows, headers=['Length', 'Canonical', 'All chains'], tablefmt='grid'))


@cli.command('enumerate')
@click.argument('n', type=int)
@click.option('--nc', type=int, default=3, show_default=True, help='Number of component types.')
@click.option('--nv', type=int, default=5, show_default=True, help='Number of values per type.')
@click.option('--cap', type=int, default=1_000_000, show_default=True, help='Refuse to list more configurations.')
@handle_errors
def enumerate_command(n: int, nc: int, nv: int, cap: int) -> None:
    """
    List every canonical configuration of length N, one literal per line.
    """
    for config in enumerate_canonical(n, nc, nv, cap=cap):
        click.echo(config.to_literal())


@cli.command('simulate')
@click.option('--config', 'literal', required=True, help='Configuration literal, e.g. "S:R:1;P:C:1m".')
@click.option('--term', help='Termination: load:<ohms> or open.')
@click.option('--out', 'fmt', type=click.Choice(['csv', 'bin']), default='csv', show_default=True,
              help='Output format.')
@click.option('--output', '-o', type=click.Path(), help='Output file (default: standard output).')
@handle_errors
def simulate_command(literal: str, term: Optional[str], fmt: str, output: Optional[str]) -> None:
    """
    Simulate a configuration and write its spectrum.
    """
    config = Configuration.parse(literal)
    spectrum = simulate(config, _grid_from_config(), _termination(term), threads=_threads())

    if output:
        save_spectrum(spectrum, output, fmt)
        click.echo(click.style(f"Spectrum written to {output}", fg='green'), err=True)
    elif fmt == 'csv':
        write_csv(spectrum, click.get_text_stream('stdout'))
    else:
        click.get_binary_stream('stdout').write(to_bytes(spectrum))


@cli.command('refine')
@click.option('--config', 'literal', required=True, help='Starting configuration literal.')
@click.option('--target', required=True, type=click.Path(exists=True), help='Target spectrum file.')
@click.option('--term', help='Termination for CSV targets: load:<ohms> or open.')
@click.option('--max-iters', type=int, help='Maximum Adam steps.')
@click.option('--output', '-o', type=click.Path(), help='Write the JSON report to this file.')
@handle_errors
def refine_command(literal: str, target: str, term: Optional[str], max_iters: Optional[int],
                   output: Optional[str]) -> None:
    """
    Fit the values of a configuration to a target spectrum.
    """
    spectrum = _load_target(target, term)
    result = Refiner(config_manager).refine(Configuration.parse(literal), spectrum, max_iters=max_iters)
    report = result.to_json()
    if output:
        with open(output, 'w', encoding='utf-8') as f:
            f.write(report + '\n')
    click.echo(report)


@cli.command('ga')
@click.option('--target', required=True, type=click.Path(exists=True), help='Target spectrum file.')
@click.option('--term', help='Termination for CSV targets: load:<ohms> or open.')
@click.option('--generations', type=int, help='Number of generations.')
@click.option('--pop', type=int, help='Population size.')
@click.option('--elites', type=int, help='Elites kept per generation.')
@click.option('--mutation', type=float, help='Mutation probability.')
@click.option('--seed', type=int, default=0, show_default=True, help='Random seed.')
@click.option('--history', type=click.Path(), default='ga_history.csv', show_default=True,
              help='Per-generation best loss CSV.')
@click.option('--refine', is_flag=True, help='Refine the winner with the differentiable simulator.')
@handle_errors
def ga_command(target: str, term: Optional[str], generations: Optional[int], pop: Optional[int],
               elites: Optional[int], mutation: Optional[float], seed: int, history: str, refine: bool) -> None:
    """
    Search for a configuration with a genetic algorithm.
    """
    spectrum = _load_target(target, term)
    search = GeneticSearch(config_manager)
    params = search.params(generations=generations, population=pop, elites=elites, mutation_prob=mutation)
    result = search.run(spectrum, params, seed=seed, threads=_threads(), refine=refine)

    write_history(result.history, history)
    click.echo(result.best.config.to_literal())
    click.echo(f"loss {result.best.cached_loss:.6e}", err=True)
    if result.refinement is not None:
        click.echo(result.refinement.candidate.to_configuration().to_literal())
        click.echo(result.refinement.to_json(), err=True)


@cli.command('gen-dataset')
@click.option('--spec', 'split_spec', default='standard', show_default=True,
              help="Split composition: 'standard', 'reduced', 'config' or an INI file with a [DATASET] section.")
@click.option('--seed', type=int, default=0, show_default=True, help='Random seed.')
@click.option('--out', 'out_dir', required=True, type=click.Path(), help='Output directory.')
@click.option('--term', help='Termination: load:<ohms> or open.')
@handle_errors
def gen_dataset(split_spec: str, seed: int, out_dir: str, term: Optional[str]) -> None:
    """
    Generate the train, validation and test splits.
    """
    spec = SplitSpec.parse(split_spec, config_manager)
    termination = Termination.parse(term) if term else None
    manifest = DatasetGenerator(config_manager).generate(spec, out_dir, seed, termination, threads=_threads())

    rows = [[split, info['count'], info['retries']] for split, info in manifest['splits'].items()]
    click.echo(tabulate(rows, headers=['Split', 'Records', 'Redraws'], tablefmt='grid'))


@cli.command('train')
@click.option('--dataset', required=True, type=click.Path(exists=True), help='Dataset directory.')
@click.option('--mode', type=click.Choice(['hyper-full', 'hyper-gru-only', 'vanilla']), help='Model mode.')
@click.option('--out', 'model_path', default='model.tpfm', show_default=True, type=click.Path(),
              help='Checkpoint file.')
@click.option('--epochs', type=int, help='Number of epochs.')
@click.option('--seed', type=int, default=0, show_default=True, help='Random seed.')
@click.option('--log', 'log_path', type=click.Path(), help='JSON-Lines training log.')
@handle_errors
def train_command(dataset: str, mode: Optional[str], model_path: str, epochs: Optional[int], seed: int,
                  log_path: Optional[str]) -> None:
    """
    Train the hypernetwork decoder on a generated dataset.
    """
    import torch
    from twoport_fit.model.trainer import Trainer

    torch.set_num_threads(_threads())
    result = Trainer(config_manager).train(dataset, model_path, mode, seed, epochs, log_path)
    click.echo(click.style(
        f"Model saved to {model_path} (best epoch {result.best_epoch}, "
        f"validation partial loss {result.best_val_partial:.6f})", fg='green'
    ))


@cli.command('predict')
@click.option('--model', 'model_path', required=True, type=click.Path(exists=True), help='Checkpoint file.')
@click.option('--spectrum', required=True, type=click.Path(exists=True), help='Target spectrum file.')
@click.option('--term', help='Termination for CSV targets: load:<ohms> or open.')
@click.option('--refine', is_flag=True, help='Refine decoded values with the differentiable simulator.')
@handle_errors
def predict_command(model_path: str, spectrum: str, term: Optional[str], refine: bool) -> None:
    """
    Predict the configuration behind a spectrum.
    """
    from twoport_fit.model.predictor import Predictor

    target = _load_target(spectrum, term)
    prediction = Predictor.from_checkpoint(model_path, config_manager).predict(target, refine)
    click.echo(prediction.config.to_literal())
    if prediction.refinement is not None:
        click.echo(prediction.refinement.to_json(), err=True)


@cli.command('eval')
@click.option('--predictor', 'predictor_kind', type=click.Choice(['model', 'ga']), default='model',
              show_default=True, help='Score a trained model or the genetic search.')
@click.option('--model', 'model_path', type=click.Path(exists=True), help='Checkpoint file (model predictor).')
@click.option('--dataset', required=True, type=click.Path(exists=True), help='Dataset directory.')
@click.option('--split', type=click.Choice(['train', 'val', 'test']), default='test', show_default=True)
@click.option('--refine', is_flag=True, help='Refine and re-quantize every prediction.')
@click.option('--positional', is_flag=True, help='Compare raw sequences instead of canonical forms.')
@click.option('--limit', type=int, help='Evaluate only the first N records.')
@click.option('--seed', type=int, default=0, show_default=True, help='Random seed of the genetic search.')
@click.option('--out', 'out_csv', default='results.csv', show_default=True, type=click.Path(),
              help='Result table CSV.')
@handle_errors
def eval_command(predictor_kind: str, model_path: Optional[str], dataset: str, split: str, refine: bool,
                 positional: bool, limit: Optional[int], seed: int, out_csv: str) -> None:
    """
    Per-length accuracy of a trained model or the genetic search on a dataset split.
    """
    from twoport_fit.dataset.storage import load_split, manifest_grid, read_manifest
    from twoport_fit.evaluation.metrics import evaluate, limit_records

    manifest = read_manifest(dataset)
    grid = manifest_grid(manifest)
    records = limit_records(load_split(dataset, split), limit)

    if predictor_kind == 'ga':
        search = GeneticSearch(config_manager)
        params = search.params(n_c=manifest.get('n_c'), n_v=manifest.get('n_v'))

        def predict_record(record) -> Configuration:
            return search.predict(record.target(grid), params, seed, refine)
    else:
        from twoport_fit.model.predictor import Predictor

        if not model_path:
            raise InvalidInputError("--model is required with the model predictor")
        predictor = Predictor.from_checkpoint(model_path, config_manager)

        def predict_record(record) -> Configuration:
            return predictor.predict(record.target(grid), refine).config

    table = evaluate(predict_record, records, positional, threads=_threads())
    table.to_csv(out_csv)
    click.echo(table.format())
    click.echo(click.style(f"Results written to {out_csv}", fg='green'), err=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the command line and return its exit code.

    Args:
        argv: Arguments without the program name, sys.argv[1:] when omitted.
    """
    try:
        rv = cli.main(args=argv, prog_name='twoport-fit', standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except SystemExit as e:
        if e.code is None:
            return 0
        return e.code if isinstance(e.code, int) else 1
    return rv if isinstance(rv, int) else 0


if __name__ == '__main__':
    sys.exit(main())
