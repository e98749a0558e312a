import json
from pathlib import Path

from routing.exceptions import InstanceError
from routing.instance import load_instance
from routing.management.base import HqtsCommand
from routing.plotting import count_crossings, render_routes_png, render_routes_svg
from routing.solution import solution_from_document


class Command(HqtsCommand):
    help = 'Нарисовать маршруты решения (SVG, по желанию PNG)'

    def add_arguments(self, parser):
        parser.add_argument('solution', help='JSON-документ решения')
        parser.add_argument('instance', help='Файл экземпляра')
        parser.add_argument('--out', help='Путь к SVG (по умолчанию рядом с решением)')
        parser.add_argument('--png', help='Дополнительно сохранить PNG по этому пути')

    def run(self, *args, **options):
        instance = load_instance(options['instance'])
        solution_path = Path(options['solution'])
        try:
            document = json.loads(solution_path.read_text(encoding='utf-8'))
        except ValueError as exc:
            raise InstanceError(f"{solution_path}: некорректный JSON: {exc}") from exc
        solution = solution_from_document(document, instance)

        svg_path = Path(options.get('out') or solution_path.with_suffix('.svg'))
        svg_path.write_text(render_routes_svg(solution, instance), encoding='utf-8')
        self.stdout.write(self.style.SUCCESS(f'✓ SVG: {svg_path}'))
        if options.get('png'):
            render_routes_png(solution, instance, options['png'])
            self.stdout.write(self.style.SUCCESS(f"✓ PNG: {options['png']}"))
        self.stdout.write(
            f'Маршрутов {solution.vehicles_used}, стоимость {solution.total_cost:.2f}, '
            f'пересечений {count_crossings(solution, instance)}'
        )
