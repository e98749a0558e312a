import sys
from functools import partial

from django.core.management.base import BaseCommand, CommandError

from routing.exceptions import ConfigError, HqtsError, InstanceError


def _usage_error(parser, message):
    """Ошибки разбора аргументов завершаются кодом 1, а не 2 (код 2 - ошибка экземпляра)"""
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(1, f"{parser.prog}: error: {message}\n")
    raise CommandError(f"Error: {message}", returncode=1)


class HqtsCommand(BaseCommand):
    """
    Базовая команда решателя.

    Наследники реализуют run(); исключения решателя переводятся в коды
    выхода: 1 - использование и конфигурация, 2 - экземпляр, 3 - сбой
    во время работы.
    """

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(_usage_error, parser)
        return parser

    def add_config_arguments(self, parser):
        parser.add_argument('--config', help='Файл конфигурации key=value')
        parser.add_argument('--preset', choices=['desk', 'full'], help='Профиль лимита времени')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--time-limit', dest='time_limit_seconds', type=float, help='Лимит времени, секунды')
        parser.add_argument('--max-iterations', dest='max_iterations', type=int)
        parser.add_argument('--fleet', type=int, help='Размер парка (по умолчанию BKS + 1)')
        parser.add_argument('--sampler', choices=['sa', 'remote', 'brute'])
        parser.add_argument('--tenure', type=int)

    def cli_values(self, options, keys):
        return {key: options.get(key) for key in keys}

    def handle(self, *args, **options):
        try:
            return self.run(*args, **options)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        except InstanceError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except (HqtsError, OSError) as exc:
            raise CommandError(str(exc), returncode=3) from exc

    def run(self, *args, **options):
        raise NotImplementedError('subclasses of HqtsCommand must provide a run() method')
