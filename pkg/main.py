import argparse
import importlib
import logging
import os
import sys

from dotenv import load_dotenv

from config.config import EXIT_INPUT, TOOL_VERSION
from utils.logging import setup_logging

COMMANDS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'commands')

logger = logging.getLogger('polyplab')


class CommandLine:
    """Subcommand tree; commands register themselves through setup(cli)"""

    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog='polyplab',
            description='Polyp detection under endoscopic artifacts: evaluation, analysis and toy multi-task training',
        )
        self.parser.add_argument('--version', action='version', version=f'%(prog)s {TOOL_VERSION}')
        self.subparsers = self.parser.add_subparsers(dest='command', metavar='COMMAND')
        self.subparsers.required = True
        self.commands = {}

    def add_command(self, command):
        parser = self.subparsers.add_parser(command.name, help=command.help, description=command.__doc__)
        command.configure(parser)
        parser.set_defaults(handler=command)
        self.commands[command.name] = command

    def load_extensions(self):
        for filename in sorted(os.listdir(COMMANDS_DIR)):
            if filename.endswith('.py') and filename not in ('__init__.py', 'base.py'):
                module = importlib.import_module(f'commands.{filename[:-3]}')
                module.setup(self)
                logger.debug(f"Loaded extension: {filename[:-3]}")

    def run(self, argv=None) -> int:
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_INPUT if e.code else 0
        logger.debug(f"Running {args.command}")
        return args.handler.invoke(args)


def build_cli() -> CommandLine:
    cli = CommandLine()
    cli.load_extensions()
    return cli


def run(argv=None) -> int:
    return build_cli().run(argv)


def main():
    load_dotenv()
    debug = os.getenv('DEBUG', 'FALSE').upper() == 'TRUE'
    setup_logging(debug)
    sys.exit(run())


if __name__ == '__main__':
    main()
