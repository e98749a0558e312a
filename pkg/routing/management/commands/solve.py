from pathlib import Path

from routing import conf
from routing.bench import solve_instance, write_run_outputs
from routing.instance import load_instance
from routing.management.base import HqtsCommand
from routing.plotting import render_routes_svg
from routing.solution import check_feasibility

CONFIG_KEYS = [
    'variant', 'sampler', 'seed', 'time_limit_seconds', 'max_iterations', 'fleet', 'tenure', 'output_dir',
]


class Command(HqtsCommand):
    help = 'Решить один экземпляр CVRP (TS, TS с осцилляцией или Кларк-Райт)'

    def add_arguments(self, parser):
        parser.add_argument('instance', help='Файл экземпляра (TSPLIB/CVRPLIB)')
        parser.add_argument('--variant', choices=['ts', 'ts_so', 'cw', 'clarke_wright'])
        parser.add_argument('--out', dest='output_dir', help='Каталог для результатов')
        parser.add_argument('--svg', action='store_true', help='Сохранить рисунок маршрутов рядом с решением')
        self.add_config_arguments(parser)

    def run(self, *args, **options):
        cleaned = conf.resolve_config(
            self.cli_values(options, CONFIG_KEYS), config_path=options.get('config'), preset=options.get('preset'),
        )
        instance = load_instance(options['instance'])
        config = conf.run_config(cleaned, [options['instance']])
        self.stdout.write(
            f"{instance.name}: {instance.num_customers} клиентов, Q = {instance.capacity:g}, вариант {config.variant}"
        )

        outcome = solve_instance(instance, config, config.seed)
        solution_path = write_run_outputs(outcome, instance, config.variant, config.output_dir)
        report = check_feasibility(outcome.solution, instance)

        if options.get('svg') and instance.has_coordinates:
            svg_path = Path(solution_path).with_suffix('.svg')
            svg_path.write_text(render_routes_svg(outcome.solution, instance), encoding='utf-8')
            self.stdout.write(f'Рисунок: {svg_path}')

        message = (
            f"Стоимость {outcome.solution.total_cost:.2f}, машин {outcome.solution.vehicles_used}, "
            f"остановка: {outcome.stats.stop_reason}, время {outcome.wallclock_seconds:.1f} с"
        )
        if report.feasible:
            self.stdout.write(self.style.SUCCESS(message))
        else:
            self.stdout.write(self.style.WARNING(f"{message} (решение недопустимо)"))
        self.stdout.write(f'Решение: {solution_path}')
