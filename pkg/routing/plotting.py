"""
Визуализация маршрутов: SVG через шаблон Django, PNG через Pillow и
подсчет пересечений ребер маршрутов.
"""
import colorsys
from typing import List, Sequence, Tuple

from django.template.loader import render_to_string
from PIL import Image, ImageDraw

from .exceptions import PlotError
from .instance import CvrpInstance
from .solution import Solution

MARGIN = 0.05
PALETTE = [
    '#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd',
    '#8c564b', '#e377c2', '#17becf', '#bcbd22', '#7f7f7f',
]

Point = Tuple[float, float]


def route_color(index: int) -> str:
    if index < len(PALETTE):
        return PALETTE[index]
    # Золотое сечение по оттенку дает различимые цвета для больших парков
    hue = (index * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.85)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def _require_coordinates(instance: CvrpInstance) -> None:
    if not instance.has_coordinates:
        raise PlotError(
            f"у экземпляра {instance.name} нет координат (матрица расстояний задана явно), график построить нельзя"
        )


def route_loops(solution: Solution, instance: CvrpInstance) -> List[List[Point]]:
    """Замкнутые ломаные депо -> остановки -> депо для непустых маршрутов"""
    locations = instance.locations
    depot = (locations[0].x, locations[0].y)
    loops = []
    for route in solution.routes:
        if route.stops:
            loops.append([depot] + [(locations[s].x, locations[s].y) for s in route.stops] + [depot])
    return loops


def bounding_box(instance: CvrpInstance) -> Tuple[float, float, float, float]:
    """(min_x, min_y, max_x, max_y) с полем 5% по каждой оси"""
    xs = [loc.x for loc in instance.locations]
    ys = [loc.y for loc in instance.locations]
    min_x, max_x, min_y, max_y = min(xs), max(xs), min(ys), max(ys)
    pad_x = (max_x - min_x) * MARGIN or 1.0
    pad_y = (max_y - min_y) * MARGIN or 1.0
    return min_x - pad_x, min_y - pad_y, max_x + pad_x, max_y + pad_y


def render_routes_svg(solution: Solution, instance: CvrpInstance) -> str:
    """
    SVG-документ: депо - черный квадрат, каждый маршрут - замкнутая
    ломаная своего цвета. Ось y перевернута, чтобы север был сверху.
    """
    _require_coordinates(instance)
    min_x, min_y, max_x, max_y = bounding_box(instance)
    span = max(max_x - min_x, max_y - min_y)
    depot = instance.locations[0]

    routes = []
    stops = []
    for index, loop in enumerate(route_loops(solution, instance)):
        routes.append({
            'index': index,
            'color': route_color(index),
            'points': ' '.join(f"{x:g},{-y:g}" for x, y in loop),
        })
        stops.extend({'x': f"{x:g}", 'y': f"{-y:g}"} for x, y in loop[1:-1])

    depot_size = span * 0.02
    context = {
        'title': f"{instance.name}: {solution.total_cost:.2f}",
        'view_box': f"{min_x:g} {-max_y:g} {max_x - min_x:g} {max_y - min_y:g}",
        'width': 800,
        'height': max(1, round(800 * (max_y - min_y) / (max_x - min_x))),
        'stroke': f"{span * 0.004:g}",
        'stop_radius': f"{span * 0.006:g}",
        'routes': routes,
        'stops': stops,
        'depot': {'x': f"{depot.x - depot_size / 2:g}", 'y': f"{-depot.y - depot_size / 2:g}", 'size': f"{depot_size:g}"},
    }
    return render_to_string('routing/routes.svg', context)


def render_routes_png(solution: Solution, instance: CvrpInstance, path, size: int = 800) -> None:
    """Тот же рисунок растром (Pillow)"""
    _require_coordinates(instance)
    min_x, min_y, max_x, max_y = bounding_box(instance)
    scale = size / max(max_x - min_x, max_y - min_y)
    width = max(1, round((max_x - min_x) * scale))
    height = max(1, round((max_y - min_y) * scale))

    def to_pixels(point: Point) -> Point:
        return (point[0] - min_x) * scale, (max_y - point[1]) * scale

    image = Image.new('RGB', (width, height), 'white')
    draw = ImageDraw.Draw(image)
    for index, loop in enumerate(route_loops(solution, instance)):
        pixels = [to_pixels(p) for p in loop]
        draw.line(pixels, fill=route_color(index), width=2)
        for x, y in pixels[1:-1]:
            draw.ellipse((x - 3, y - 3, x + 3, y + 3), fill='#333333')
    dx, dy = to_pixels((instance.locations[0].x, instance.locations[0].y))
    draw.rectangle((dx - 6, dy - 6, dx + 6, dy + 6), fill='black')
    image.save(path, format='PNG')


# ============================================================================
# ПЕРЕСЕЧЕНИЯ
# ============================================================================

def _orientation(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """Собственное пересечение: отрезки пересекаются во внутренней точке обоих"""
    if {p1, p2} & {q1, q2}:
        return False
    d1 = _orientation(q1, q2, p1)
    d2 = _orientation(q1, q2, p2)
    d3 = _orientation(p1, p2, q1)
    d4 = _orientation(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def route_segments(solution: Solution, instance: CvrpInstance) -> List[Tuple[Point, Point]]:
    segments = []
    for loop in route_loops(solution, instance):
        segments.extend(zip(loop, loop[1:]))
    return segments


def count_crossings(solution: Solution, instance: CvrpInstance) -> int:
    """Число пар ребер (внутри маршрутов и между ними), пересекающихся собственным образом"""
    _require_coordinates(instance)
    segments: Sequence[Tuple[Point, Point]] = route_segments(solution, instance)
    crossings = 0
    for i in range(len(segments)):
        p1, p2 = segments[i]
        for j in range(i + 1, len(segments)):
            if segments_cross(p1, p2, *segments[j]):
                crossings += 1
    return crossings
