import argparse
import logging
import sys

from config.config import (EXIT_ALIGNMENT, EXIT_DIVERGENCE, EXIT_EMPTY, EXIT_FAILURE, EXIT_INPUT, EXIT_OK)
from core.datamodel import Dataset, load_dataset
from core.errors import (AlignmentError, ConfigError, DivergenceError, EmptyDataset, InvariantError,
                         ParseError, ShapeError, TooFewFrames)
from utils.manifest import RunManifest
from utils.reports import write_report


class BaseCommand:
    """Base command with the shared error handling and output helpers"""
    name = ''
    help = ''

    def __init__(self, cli):
        self.cli = cli
        self.logger = logging.getLogger('polyplab')

    def configure(self, parser: argparse.ArgumentParser):
        pass

    def run(self, args: argparse.Namespace) -> int:
        raise NotImplementedError

    def invoke(self, args: argparse.Namespace) -> int:
        """Run the command and translate failures into exit codes"""
        try:
            return self.run(args)
        except (EmptyDataset, TooFewFrames) as e:
            self.logger.error(str(e))
            return EXIT_EMPTY
        except AlignmentError as e:
            self.logger.error(f"Frame alignment failed: {e}")
            return EXIT_ALIGNMENT
        except DivergenceError as e:
            self.logger.error(f"Training diverged: {e}")
            return EXIT_DIVERGENCE
        except (ParseError, InvariantError, ConfigError, ShapeError) as e:
            self.logger.error(f"Invalid input: {e}")
            return EXIT_INPUT
        except OSError as e:
            self.logger.error(f"Cannot read input: {e}")
            return EXIT_INPUT
        except Exception as e:
            self.logger.error(f"Error in {self.name}: {e}", exc_info=True)
            return EXIT_FAILURE

    def load_nonempty(self, path: str) -> Dataset:
        d = load_dataset(path)
        if not d.frames:
            raise EmptyDataset(f"{path}: no frames")
        return d

    def manifest(self, args: argparse.Namespace, inputs=(), seed=None, **extra) -> RunManifest:
        config = {k: v for k, v in sorted(vars(args).items()) if k not in ('handler', 'command')}
        config.update(extra)
        manifest = RunManifest(self.name, config, seed=seed)
        for path in inputs:
            manifest.add_input(path)
        return manifest

    def emit(self, text: str, args: argparse.Namespace, report_name: str, manifest: RunManifest) -> int:
        """Print the report; with --out-dir also write it and its manifest"""
        sys.stdout.write(text)
        out_dir = getattr(args, 'out_dir', None)
        if out_dir:
            path = write_report(text, out_dir, report_name)
            manifest.add_output(path)
            manifest.write(out_dir)
            self.logger.info(f"Wrote report to {path}")
        return EXIT_OK


def add_output_options(parser: argparse.ArgumentParser):
    parser.add_argument('--format', choices=('markdown', 'csv'), default='markdown')
    parser.add_argument('--out-dir', default=None, help='also write the report and manifest.json here')


def report_extension(fmt: str) -> str:
    return 'csv' if fmt == 'csv' else 'md'


def check_fraction(name: str, value: float) -> float:
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value
