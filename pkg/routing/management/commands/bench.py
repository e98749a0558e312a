import json
from dataclasses import asdict
from pathlib import Path

from django.db import transaction

from routing import conf
from routing.bench import emit_deviation_summary, published_report, run_benchmark
from routing.exceptions import InstanceError
from routing.management.base import HqtsCommand
from routing.models import BenchmarkRun, InstanceResult

CONFIG_KEYS = [
    'sampler', 'seed', 'time_limit_seconds', 'max_iterations', 'fleet', 'tenure', 'repetitions', 'workers',
    'output_dir',
]
INSTANCE_SUFFIXES = ('.vrp', '.txt')


def collect_instance_paths(targets):
    """Файлы как есть; из каталогов берутся *.vrp и *.txt по алфавиту"""
    paths = []
    for target in targets:
        path = Path(target)
        if path.is_dir():
            paths.extend(sorted(p for p in path.iterdir() if p.suffix.lower() in INSTANCE_SUFFIXES))
        elif path.is_file():
            paths.append(path)
        else:
            raise InstanceError(f"путь не найден: {target}")
    return paths


class Command(HqtsCommand):
    help = 'Прогнать бенчмарк по набору экземпляров и построить отчеты'

    def add_arguments(self, parser):
        parser.add_argument('targets', nargs='*', help='Файлы экземпляров или каталоги с ними')
        parser.add_argument(
            '--variant', action='append', dest='variants', choices=['ts', 'ts_so', 'cw', 'clarke_wright'],
            help='Вариант алгоритма (можно указать несколько раз)',
        )
        parser.add_argument('--reps', dest='repetitions', type=int, help='Повторов на экземпляр')
        parser.add_argument('--workers', type=int, help='Размер пула процессов')
        parser.add_argument('--out', dest='output_dir', help='Каталог для отчетов')
        parser.add_argument('--save', action='store_true', help='Сохранить результаты в базу данных')
        parser.add_argument(
            '--published', action='store_true', help='Добавить в сводку опубликованные результаты для сравнения',
        )
        self.add_config_arguments(parser)

    def run(self, *args, **options):
        paths = collect_instance_paths(options['targets'])
        variants = options.get('variants') or [None]
        reports = []
        for variant in variants:
            values = self.cli_values(options, CONFIG_KEYS)
            values['variant'] = variant
            cleaned = conf.resolve_config(values, config_path=options.get('config'), preset=options.get('preset'))
            base_dir = Path(cleaned['output_dir'])
            config = conf.run_config(cleaned, paths, output_dir=base_dir / cleaned['variant'])

            self.stdout.write(
                f"Вариант {config.variant}: {len(paths)} экземпляров, {config.repetitions} повторов"
            )
            report = run_benchmark(config)
            reports.append(report)
            for row in report.rows:
                if row.error:
                    self.stdout.write(self.style.ERROR(f'✗ {row.name}: {row.error}'))
                else:
                    deviation = '-' if row.deviation is None else f'{row.deviation:.2f}%'
                    self.stdout.write(
                        f'✓ {row.name}: {row.distance:.2f} (отклонение {deviation}, машин {row.vehicles_used}, '
                        f'seed {row.best_seed})'
                    )
            if options.get('save'):
                run = self.save_report(report, config)
                self.stdout.write(f'Сохранено в базе: запуск #{run.pk}')

        if options.get('published'):
            reports.extend(published_report(r.variant) for r in list(reports))
        summary = emit_deviation_summary(reports, base_dir)
        for variant, mean in summary.means.items():
            if mean is not None:
                self.stdout.write(f'Среднее отклонение {variant}: {mean:.2f}%')
        self.stdout.write(self.style.SUCCESS(f'Отчеты записаны в {base_dir}'))

    @transaction.atomic
    def save_report(self, report, config):
        run = BenchmarkRun.objects.create(
            variant=config.variant,
            sampler=config.sampler,
            repetitions=config.repetitions,
            seed=config.seed,
            time_limit_seconds=config.search.time_limit_seconds,
            config=json.loads(json.dumps(asdict(config), default=str)),
        )
        InstanceResult.objects.bulk_create([
            InstanceResult(
                run=run,
                instance_name=row.name,
                size=row.size,
                bks=row.bks,
                distance=row.distance,
                deviation=row.deviation,
                vehicles_initial=row.vehicles_initial,
                vehicles_used=row.vehicles_used,
                wallclock_seconds=row.wallclock_seconds,
                best_seed=row.best_seed,
                stop_reason=row.stop_reason,
                crossings=row.crossings,
                error=row.error,
            )
            for row in report.rows
        ])
        return run
