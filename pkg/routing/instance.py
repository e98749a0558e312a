"""
Экземпляры CVRP: разбор файлов в TSPLIB-подобной грамматике, матрица
стоимостей, списки ближайших соседей и реестр лучших известных решений.
"""
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import InstanceError, InstanceParseError, InstanceValidationError

logger = logging.getLogger(__name__)


class InstanceFormat(str, Enum):
    COORD = 'coord'
    EXPLICIT_MATRIX = 'explicit_matrix'


@dataclass(frozen=True)
class Location:
    """Локация: депо (id 0) или клиент"""
    id: int
    x: Optional[float]
    y: Optional[float]
    demand: float

    @property
    def has_coordinates(self) -> bool:
        return self.x is not None and self.y is not None


@dataclass(frozen=True)
class BestKnown:
    """Лучшее известное решение: суммарная длина и число машин"""
    distance: float
    vehicles: Optional[int] = None


# Реестр BKS для набора CMT (расстояние, число машин в BKS)
BKS_REGISTRY: Dict[str, BestKnown] = {
    'CMT1': BestKnown(524.61, 5),
    'CMT2': BestKnown(835.26, 10),
    'CMT3': BestKnown(826.14, 8),
    'CMT4': BestKnown(1028.42, 12),
    'CMT5': BestKnown(1291.29, 17),
    'CMT11': BestKnown(1042.12, 7),
    'CMT12': BestKnown(819.56, 10),
}


def registry_key(name: str) -> str:
    """Нормализует имя экземпляра: 'cmt 1', 'CMT-1', 'vrpnc1' -> 'CMT1'"""
    key = re.sub(r'[\s_\-.]+', '', name).upper()
    if key.startswith('VRPNC'):
        key = 'CMT' + key[len('VRPNC'):]
    return key


def lookup_bks(name: str) -> Optional[BestKnown]:
    return BKS_REGISTRY.get(registry_key(name))


class CostMatrix:
    """
    Симметричная матрица стоимостей с нулевой диагональю.

    Хранит массив numpy только для чтения; экземпляр неизменяем и может
    разделяться между потоками.
    """

    def __init__(self, entries):
        array = np.array(entries, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise InstanceValidationError(f"матрица стоимостей должна быть квадратной, получено {array.shape}")
        if not np.all(np.isfinite(array)):
            raise InstanceValidationError("матрица стоимостей содержит бесконечные или NaN значения")
        if np.any(array < 0):
            raise InstanceValidationError("матрица стоимостей содержит отрицательные значения")
        if np.any(np.diag(array) != 0):
            raise InstanceValidationError("диагональ матрицы стоимостей должна быть нулевой")
        asymmetric = np.argwhere(array != array.T)
        if len(asymmetric):
            i, j = asymmetric[0]
            raise InstanceValidationError(
                f"матрица стоимостей несимметрична: c({i},{j})={array[i, j]} != c({j},{i})={array[j, i]}"
            )
        array.setflags(write=False)
        self._entries = array
        # Списки Python быстрее numpy при поэлементном доступе во внутренних циклах
        self._rows = array.tolist()

    @property
    def n(self) -> int:
        return self._entries.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def rows(self) -> List[List[float]]:
        return self._rows

    def __call__(self, i: int, j: int) -> float:
        return float(self._entries[i, j])

    def max_cost(self, nodes: Optional[Sequence[int]] = None) -> float:
        """Максимальная стоимость ребра (по всем узлам или по подмножеству)"""
        if nodes is None:
            return float(self._entries.max())
        idx = np.asarray(nodes, dtype=int)
        return float(self._entries[np.ix_(idx, idx)].max())

    def tour_cost(self, nodes: Sequence[int]) -> float:
        """Стоимость замкнутого цикла по узлам в заданном порядке"""
        if len(nodes) < 2:
            return 0.0
        seq = np.asarray(list(nodes) + [nodes[0]], dtype=int)
        return float(self._entries[seq[:-1], seq[1:]].sum())

    def __eq__(self, other):
        return isinstance(other, CostMatrix) and np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash(self._entries.tobytes())

    def __repr__(self):
        return f"CostMatrix(n={self.n})"


@dataclass(frozen=True)
class CvrpInstance:
    """Задача CVRP. Депо всегда имеет внутренний id 0."""
    name: str
    locations: Tuple[Location, ...]
    costs: CostMatrix
    capacity: float
    fleet_size: int
    bks: Optional[BestKnown] = None
    file_ids: Tuple[int, ...] = ()
    format: InstanceFormat = InstanceFormat.COORD

    def __post_init__(self):
        if not self.file_ids:
            object.__setattr__(self, 'file_ids', tuple(range(len(self.locations))))
        if len(self.locations) != self.costs.n:
            raise InstanceValidationError(
                f"число локаций ({len(self.locations)}) не совпадает с размером матрицы ({self.costs.n})"
            )
        if len(self.locations) < 1:
            raise InstanceValidationError("экземпляр не содержит депо")
        if self.capacity <= 0:
            raise InstanceValidationError(f"вместимость должна быть положительной: {self.capacity}")
        if self.fleet_size < 1:
            raise InstanceValidationError(f"размер парка должен быть положительным: {self.fleet_size}")
        for index, location in enumerate(self.locations):
            if location.id != index:
                raise InstanceValidationError(f"id локаций должны быть плотными 0..n, на позиции {index} id {location.id}")
            if location.demand < 0:
                raise InstanceValidationError(f"отрицательный спрос у локации {index}")
        if self.locations[0].demand != 0:
            raise InstanceValidationError("спрос депо должен быть нулевым")
        for location in self.locations[1:]:
            if location.demand > self.capacity:
                raise InstanceValidationError(
                    f"спрос клиента {self.file_id(location.id)} ({location.demand}) превышает вместимость {self.capacity}"
                )
        demands = np.array([loc.demand for loc in self.locations], dtype=float)
        demands.setflags(write=False)
        object.__setattr__(self, '_demands', demands)

    @property
    def n(self) -> int:
        """Число локаций, включая депо"""
        return len(self.locations)

    @property
    def num_customers(self) -> int:
        return len(self.locations) - 1

    @property
    def customers(self) -> range:
        return range(1, len(self.locations))

    @property
    def demands(self) -> np.ndarray:
        return self._demands

    def demand(self, location_id: int) -> float:
        return float(self._demands[location_id])

    @property
    def total_demand(self) -> float:
        return float(self._demands.sum())

    @property
    def min_vehicles(self) -> int:
        return max(1, math.ceil(self.total_demand / self.capacity - 1e-9))

    @property
    def has_coordinates(self) -> bool:
        return all(loc.has_coordinates for loc in self.locations)

    def file_id(self, location_id: int) -> int:
        return self.file_ids[location_id]

    def internal_id(self, file_id: int) -> int:
        try:
            return self.file_ids.index(file_id)
        except ValueError:
            raise InstanceError(f"в экземпляре {self.name} нет узла с id {file_id}") from None

    def default_fleet(self) -> int:
        """Парк для поиска: машин в BKS + 1, иначе ceil(спрос / Q) + 1"""
        if self.bks is not None and self.bks.vehicles:
            return self.bks.vehicles + 1
        return self.min_vehicles + 1

    def neighbor_count(self) -> int:
        """K для списков соседей: число машин в BKS, иначе минимальный парк"""
        if self.bks is not None and self.bks.vehicles:
            return self.bks.vehicles
        return self.min_vehicles


@dataclass(frozen=True)
class NeighborLists:
    """K ближайших клиентов для каждой локации (без депо и без самой локации)"""
    k: int
    lists: Tuple[Tuple[int, ...], ...]
    _sets: Tuple[FrozenSet[int], ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self._sets:
            object.__setattr__(self, '_sets', tuple(frozenset(lst) for lst in self.lists))

    def __getitem__(self, location_id: int) -> Tuple[int, ...]:
        return self.lists[location_id]

    def __len__(self):
        return len(self.lists)

    def is_neighbor(self, location_id: int, other: int) -> bool:
        return other in self._sets[location_id]

    def any_neighbor_in(self, location_id: int, stops: Iterable[int], exclude: Optional[int] = None) -> bool:
        neighbors = self._sets[location_id]
        return any(stop in neighbors for stop in stops if stop != exclude)


def euclidean_costs(locations: Sequence[Location]) -> CostMatrix:
    """Евклидовы расстояния без округления"""
    missing = [loc.id for loc in locations if not loc.has_coordinates]
    if missing:
        raise InstanceError(f"у локаций {missing[:10]} нет координат")
    coords = np.array([[loc.x, loc.y] for loc in locations], dtype=float)
    dx = coords[:, 0][:, None] - coords[:, 0][None, :]
    dy = coords[:, 1][:, None] - coords[:, 1][None, :]
    return CostMatrix(np.sqrt(dx * dx + dy * dy))


def nearest_neighbors(instance: CvrpInstance, k: int) -> NeighborLists:
    """
    Списки ближайших соседей по стоимости (равенство - по возрастанию id).

    k ограничивается числом доступных клиентов.
    """
    if k < 1:
        raise ValueError(f"k должно быть >= 1, получено {k}")
    entries = instance.costs.entries
    customers = np.arange(1, instance.n)
    lists = []
    for location in range(instance.n):
        candidates = customers[customers != location]
        row = entries[location, candidates]
        order = np.lexsort((candidates, row))
        lists.append(tuple(int(c) for c in candidates[order][:k]))
    return NeighborLists(k=k, lists=tuple(lists))


# ============================================================================
# РАЗБОР ФАЙЛОВ
# ============================================================================

_HEADER_KEYS = {
    'NAME', 'TYPE', 'COMMENT', 'DIMENSION', 'CAPACITY', 'VEHICLES', 'BEST_KNOWN',
    'EDGE_WEIGHT_TYPE', 'EDGE_WEIGHT_FORMAT', 'DISPLAY_DATA_TYPE',
}
_SECTIONS = {'NODE_COORD_SECTION', 'DEMAND_SECTION', 'EDGE_WEIGHT_SECTION', 'DEPOT_SECTION'}


def _split_keyword(line: str) -> Tuple[str, str]:
    if ':' in line:
        key, value = line.split(':', 1)
    else:
        parts = line.split(None, 1)
        key, value = parts[0], parts[1] if len(parts) > 1 else ''
    return key.strip().upper(), value.strip()


def _number(token: str, line: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise InstanceParseError(f"ожидалось число ({what}), получено {token!r}", line) from None


def _integer(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise InstanceParseError(f"ожидалось целое ({what}), получено {token!r}", line) from None


def parse_instance(text, format: Optional[InstanceFormat] = None) -> CvrpInstance:
    """
    Разбирает экземпляр из строки или текстового потока.

    Поддерживаются EUC_2D (координаты) и EXPLICIT/FULL_MATRIX. Депо
    переносится на внутренний id 0, соответствие с id файла сохраняется.
    """
    if not isinstance(text, str):
        text = text.read()
    header: Dict[str, str] = {}
    header_lines: Dict[str, int] = {}
    coords: Dict[int, Tuple[float, float]] = {}
    demands: Dict[int, float] = {}
    weights: List[float] = []
    section_lines: Dict[str, int] = {}
    last_line = 0
    depots: List[int] = []
    section = None
    depot_closed = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        last_line = line_no
        line = raw.strip()
        if not line:
            continue
        first = line.split()[0].rstrip(':').upper()
        if first == 'EOF':
            break
        if first in _SECTIONS:
            section = first
            section_lines[section] = line_no
            continue
        key, value = _split_keyword(line)
        if key in _HEADER_KEYS and (section is None or not _looks_numeric(line)):
            if section is not None and key != 'COMMENT':
                section = None
            header[key] = value
            header_lines[key] = line_no
            continue
        tokens = line.split()
        if section == 'NODE_COORD_SECTION':
            if len(tokens) != 3:
                raise InstanceParseError(f"строка NODE_COORD_SECTION должна иметь вид 'id x y': {line!r}", line_no)
            node = _integer(tokens[0], line_no, 'id узла')
            if node in coords:
                raise InstanceParseError(f"повторный узел {node} в NODE_COORD_SECTION", line_no)
            coords[node] = (_number(tokens[1], line_no, 'x'), _number(tokens[2], line_no, 'y'))
        elif section == 'DEMAND_SECTION':
            if len(tokens) != 2:
                raise InstanceParseError(f"строка DEMAND_SECTION должна иметь вид 'id demand': {line!r}", line_no)
            node = _integer(tokens[0], line_no, 'id узла')
            if node in demands:
                raise InstanceParseError(f"повторный узел {node} в DEMAND_SECTION", line_no)
            demands[node] = _number(tokens[1], line_no, 'спрос')
        elif section == 'EDGE_WEIGHT_SECTION':
            weights.extend(_number(tok, line_no, 'вес ребра') for tok in tokens)
        elif section == 'DEPOT_SECTION':
            for tok in tokens:
                node = _integer(tok, line_no, 'id депо')
                if node == -1:
                    depot_closed = True
                elif depot_closed:
                    raise InstanceParseError("данные после завершающего -1 в DEPOT_SECTION", line_no)
                else:
                    depots.append(node)
        else:
            raise InstanceParseError(f"неизвестное ключевое слово или данные вне секции: {line!r}", line_no)

    return _build_instance(header, header_lines, section_lines, last_line or None, coords, demands, weights, depots,
                           format)


def _looks_numeric(line: str) -> bool:
    try:
        float(line.split()[0])
        return True
    except ValueError:
        return False


def _build_instance(header, header_lines, section_lines, last_line, coords, demands, weights, depots, format):
    """Ошибки без своей строки указывают на заголовок секции или на конец файла"""
    for required in ('DIMENSION', 'CAPACITY'):
        if required not in header:
            raise InstanceParseError(f"не задан обязательный ключ {required}", last_line)
    problem_type = header.get('TYPE', 'CVRP').upper()
    if problem_type != 'CVRP':
        raise InstanceParseError(f"поддерживается только TYPE CVRP, получено {problem_type}", header_lines.get('TYPE'))
    dimension = _integer(header['DIMENSION'], header_lines['DIMENSION'], 'DIMENSION')
    if dimension < 2:
        raise InstanceParseError(f"DIMENSION должно быть не меньше 2 (депо и клиент), получено {dimension}",
                                 header_lines['DIMENSION'])
    capacity = _number(header['CAPACITY'], header_lines['CAPACITY'], 'CAPACITY')

    weight_type = header.get('EDGE_WEIGHT_TYPE', 'EUC_2D').upper()
    if weight_type == 'EUC_2D':
        detected = InstanceFormat.COORD
    elif weight_type == 'EXPLICIT':
        detected = InstanceFormat.EXPLICIT_MATRIX
        weight_format = header.get('EDGE_WEIGHT_FORMAT', 'FULL_MATRIX').upper()
        if weight_format != 'FULL_MATRIX':
            raise InstanceParseError(
                f"поддерживается только EDGE_WEIGHT_FORMAT FULL_MATRIX, получено {weight_format}",
                header_lines.get('EDGE_WEIGHT_FORMAT'),
            )
    else:
        raise InstanceParseError(f"неподдерживаемый EDGE_WEIGHT_TYPE {weight_type}", header_lines.get('EDGE_WEIGHT_TYPE'))
    if format is not None and InstanceFormat(format) != detected:
        raise InstanceParseError(f"ожидался формат {InstanceFormat(format).value}, файл описывает {detected.value}",
                                 header_lines.get('EDGE_WEIGHT_TYPE', last_line))

    if len(demands) != dimension:
        raise InstanceParseError(f"DEMAND_SECTION содержит {len(demands)} узлов, ожидалось {dimension}",
                                 section_lines.get('DEMAND_SECTION', last_line))
    file_order = sorted(demands)
    if detected is InstanceFormat.COORD and set(coords) != set(demands):
        raise InstanceParseError("множества узлов NODE_COORD_SECTION и DEMAND_SECTION различаются",
                                 section_lines.get('NODE_COORD_SECTION', last_line))
    if detected is InstanceFormat.EXPLICIT_MATRIX and coords and set(coords) != set(demands):
        raise InstanceParseError("множества узлов NODE_COORD_SECTION и DEMAND_SECTION различаются",
                                 section_lines.get('NODE_COORD_SECTION', last_line))

    if len(depots) > 1:
        raise InstanceValidationError(f"поддерживается одно депо, задано {len(depots)}")
    depot = depots[0] if depots else file_order[0]
    if depot not in demands:
        raise InstanceParseError(f"депо {depot} отсутствует среди узлов", section_lines.get('DEPOT_SECTION', last_line))

    # Депо - внутренний id 0, клиенты - по возрастанию id файла
    file_ids = tuple([depot] + [node for node in file_order if node != depot])
    locations = []
    for internal, node in enumerate(file_ids):
        x, y = coords.get(node, (None, None))
        locations.append(Location(id=internal, x=x, y=y, demand=demands[node]))

    if detected is InstanceFormat.COORD:
        costs = euclidean_costs(locations)
    else:
        if len(weights) != dimension * dimension:
            raise InstanceParseError(
                f"EDGE_WEIGHT_SECTION содержит {len(weights)} значений, ожидалось {dimension * dimension}",
                section_lines.get('EDGE_WEIGHT_SECTION', last_line),
            )
        matrix = np.array(weights, dtype=float).reshape(dimension, dimension)
        position = {node: index for index, node in enumerate(file_order)}
        perm = [position[node] for node in file_ids]
        costs = CostMatrix(matrix[np.ix_(perm, perm)])

    name = header.get('NAME', 'unnamed')
    bks = lookup_bks(name)
    if 'BEST_KNOWN' in header:
        bks = _parse_best_known(header['BEST_KNOWN'], header_lines['BEST_KNOWN'], bks)
    vehicles = header.get('VEHICLES')
    if vehicles is not None:
        fleet_size = _integer(vehicles, header_lines['VEHICLES'], 'VEHICLES')
    elif bks is not None and bks.vehicles:
        fleet_size = bks.vehicles
    else:
        fleet_size = max(1, math.ceil(sum(demands.values()) / capacity - 1e-9))
    if bks is not None and bks.vehicles is None:
        bks = BestKnown(bks.distance, fleet_size)

    return CvrpInstance(
        name=name,
        locations=tuple(locations),
        costs=costs,
        capacity=capacity,
        fleet_size=fleet_size,
        bks=bks,
        file_ids=file_ids,
        format=detected,
    )


def _parse_best_known(value: str, line: int, registry: Optional[BestKnown]) -> BestKnown:
    tokens = value.split()
    if not tokens or len(tokens) > 2:
        raise InstanceParseError(f"BEST_KNOWN должен иметь вид '<длина> [<машин>]': {value!r}", line)
    distance = _number(tokens[0], line, 'BEST_KNOWN')
    if len(tokens) == 2:
        vehicles = _integer(tokens[1], line, 'BEST_KNOWN машин')
    else:
        vehicles = registry.vehicles if registry is not None else None
    return BestKnown(distance, vehicles)


def load_instance(path, format: Optional[InstanceFormat] = None) -> CvrpInstance:
    """Читает экземпляр из файла"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise InstanceError(f"не удалось прочитать {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        line = exc.object[:exc.start].count(b'\n') + 1
        raise InstanceParseError(f"{path}: файл не в кодировке UTF-8 (байт {exc.start})", line) from exc
    instance = parse_instance(text, format)
    logger.debug("Загружен экземпляр %s: %d клиентов, Q=%s", instance.name, instance.num_customers, instance.capacity)
    return instance


def serialize_instance(instance: CvrpInstance) -> str:
    """Записывает экземпляр обратно в грамматику (пространство id файла)"""
    lines = [
        f"NAME : {instance.name}",
        "TYPE : CVRP",
        f"DIMENSION : {instance.n}",
        f"CAPACITY : {_fmt(instance.capacity)}",
        f"VEHICLES : {instance.fleet_size}",
    ]
    if instance.bks is not None:
        best = _fmt(instance.bks.distance)
        lines.append(f"BEST_KNOWN : {best} {instance.bks.vehicles}" if instance.bks.vehicles else f"BEST_KNOWN : {best}")
    order = sorted(range(instance.n), key=instance.file_id)
    if instance.format is InstanceFormat.COORD:
        lines.append("EDGE_WEIGHT_TYPE : EUC_2D")
        lines.append("NODE_COORD_SECTION")
        for internal in order:
            loc = instance.locations[internal]
            lines.append(f"{instance.file_id(internal)} {_fmt(loc.x)} {_fmt(loc.y)}")
    else:
        lines.append("EDGE_WEIGHT_TYPE : EXPLICIT")
        lines.append("EDGE_WEIGHT_FORMAT : FULL_MATRIX")
        if instance.has_coordinates:
            lines.append("NODE_COORD_SECTION")
            for internal in order:
                loc = instance.locations[internal]
                lines.append(f"{instance.file_id(internal)} {_fmt(loc.x)} {_fmt(loc.y)}")
        lines.append("EDGE_WEIGHT_SECTION")
        for i in order:
            lines.append(' '.join(_fmt(instance.costs(i, j)) for j in order))
    lines.append("DEMAND_SECTION")
    for internal in order:
        lines.append(f"{instance.file_id(internal)} {_fmt(instance.locations[internal].demand)}")
    lines.extend(["DEPOT_SECTION", str(instance.file_id(0)), "-1", "EOF"])
    return '\n'.join(lines) + '\n'


def _fmt(value: float) -> str:
    # repr дает кратчайшую строку, восстанавливающую double бит-в-бит
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))
