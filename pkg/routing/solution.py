"""
Модель решения: маршруты, стоимость, проверка допустимости, мера
недопустимости и применение ходов локального поиска.

Депо в маршрутах не хранится: каждый маршрут неявно начинается и
заканчивается в депо (id 0), поэтому подциклы невозможны по построению.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .exceptions import InstanceError, StaleMoveError
from .instance import CostMatrix, CvrpInstance


def route_cost(stops: Sequence[int], costs: CostMatrix) -> float:
    """c(0,s1) + sum c(si,si+1) + c(sk,0); пустой маршрут стоит 0"""
    if not stops:
        return 0.0
    c = costs.rows
    total = c[0][stops[0]]
    for a, b in zip(stops, stops[1:]):
        total += c[a][b]
    return total + c[stops[-1]][0]


@dataclass(frozen=True)
class Route:
    """Маршрут одной машины с кешированными загрузкой и стоимостью"""
    stops: Tuple[int, ...]
    load: float
    cost: float

    @classmethod
    def build(cls, stops: Iterable[int], instance: CvrpInstance) -> 'Route':
        stops = tuple(int(s) for s in stops)
        load = float(sum(instance.demands[s] for s in stops))
        return cls(stops=stops, load=load, cost=route_cost(stops, instance.costs))

    @classmethod
    def empty(cls) -> 'Route':
        return cls(stops=(), load=0.0, cost=0.0)

    def __len__(self):
        return len(self.stops)

    @property
    def is_empty(self) -> bool:
        return not self.stops

    def excess(self, capacity: float) -> float:
        return max(0.0, self.load - capacity)


@dataclass(frozen=True)
class Solution:
    """
    Решение: ровно K маршрутов (пустые допускаются).

    feasible отражает только вместимость; покрытие проверяет
    check_feasibility.
    fleet_limit - парк, заданный построителю, если решению разрешено
    занимать больше слотов (Кларк-Райт); check_feasibility сверяет с ним.
    """
    routes: Tuple[Route, ...]
    capacity: float
    fleet_limit: Optional[int] = None
    total_cost: float = field(init=False)
    feasible: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'routes', tuple(self.routes))
        object.__setattr__(self, 'total_cost', sum(route.cost for route in self.routes))
        object.__setattr__(self, 'feasible', all(route.load <= self.capacity for route in self.routes))

    @classmethod
    def from_stop_lists(cls, stop_lists: Iterable[Iterable[int]], instance: CvrpInstance,
                        fleet: Optional[int] = None, fleet_limit: Optional[int] = None) -> 'Solution':
        """Собирает решение из списков остановок, дополняя пустыми маршрутами до fleet"""
        routes = [Route.build(stops, instance) for stops in stop_lists]
        if fleet is not None:
            routes.extend(Route.empty() for _ in range(fleet - len(routes)))
        return cls(routes=tuple(routes), capacity=instance.capacity, fleet_limit=fleet_limit)

    @property
    def fleet(self) -> int:
        return len(self.routes)

    @property
    def vehicles_used(self) -> int:
        return sum(1 for route in self.routes if route.stops)

    @property
    def infeasibility(self) -> float:
        return sum(route.excess(self.capacity) for route in self.routes)

    def stop_lists(self) -> List[List[int]]:
        return [list(route.stops) for route in self.routes]

    def recomputed_cost(self, instance: CvrpInstance) -> float:
        return sum(route_cost(route.stops, instance.costs) for route in self.routes)


def solution_cost(solution: Solution, instance: CvrpInstance) -> float:
    """Суммарная длина всех маршрутов"""
    return solution.recomputed_cost(instance)


def infeasibility_measure(solution: Solution, instance: CvrpInstance) -> float:
    """Сумма превышений вместимости по маршрутам; 0 на допустимых решениях"""
    return sum(max(0.0, route.load - instance.capacity) for route in solution.routes)


# ============================================================================
# ДОПУСТИМОСТЬ
# ============================================================================

class ViolationKind(str, Enum):
    COVERAGE = 'coverage'
    CAPACITY = 'capacity'
    FLEET = 'fleet'


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str
    route: Optional[int] = None
    customer: Optional[int] = None


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violations: Tuple[Violation, ...]

    def of_kind(self, kind: ViolationKind) -> Tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.kind == kind)


def check_feasibility(solution: Solution, instance: CvrpInstance,
                      fleet: Optional[int] = None) -> FeasibilityReport:
    """
    Проверяет покрытие, вместимость и размер парка.

    Нарушения возвращаются как данные. fleet по умолчанию - fleet_limit
    решения, а если он не задан - число слотов маршрутов.
    """
    violations: List[Violation] = []
    seen: Dict[int, int] = {}
    for r, route in enumerate(solution.routes):
        for stop in route.stops:
            if stop == 0 or not 0 < stop < instance.n:
                violations.append(Violation(ViolationKind.COVERAGE, f"маршрут {r} содержит недопустимый узел {stop}", r, stop))
                continue
            if stop in seen:
                violations.append(Violation(
                    ViolationKind.COVERAGE,
                    f"клиент {instance.file_id(stop)} посещается маршрутами {seen[stop]} и {r}", r, stop,
                ))
            else:
                seen[stop] = r
        load = sum(instance.demands[s] for s in route.stops if 0 < s < instance.n)
        if load > instance.capacity:
            violations.append(Violation(
                ViolationKind.CAPACITY, f"загрузка маршрута {r} = {load:g} > Q = {instance.capacity:g}", r,
            ))
    for customer in instance.customers:
        if customer not in seen:
            violations.append(Violation(
                ViolationKind.COVERAGE, f"клиент {instance.file_id(customer)} не посещается", customer=customer,
            ))
    if fleet is not None:
        limit = fleet
    else:
        limit = solution.fleet if solution.fleet_limit is None else solution.fleet_limit
    if solution.vehicles_used > limit:
        violations.append(Violation(
            ViolationKind.FLEET, f"используется {solution.vehicles_used} машин при парке {limit}",
        ))
    return FeasibilityReport(feasible=not violations, violations=tuple(violations))


# ============================================================================
# ХОДЫ
# ============================================================================

class MoveKind(str, Enum):
    RELOCATE = 'relocate_10'
    INTRA_SWAP = 'intraswap_01'
    INTER_SWAP = 'interswap_11'


@dataclass(frozen=True)
class Move:
    """
    Один шаг локального поиска.

    RELOCATE: customer уходит из origin_route[origin_pos] в dest_route на
    позицию вставки dest_pos. INTRA_SWAP: customer (origin_pos) и partner
    (dest_pos) меняются местами внутри маршрута. INTER_SWAP: customer и
    partner меняются местами между маршрутами, каждый занимает позицию
    другого.
    """
    kind: MoveKind
    customer: int
    origin_route: int
    origin_pos: int
    dest_route: int
    dest_pos: int
    partner: Optional[int] = None
    delta_cost: float = 0.0
    delta_infeasibility: float = 0.0
    feasible_after: bool = True

    @property
    def actors(self) -> Tuple[int, ...]:
        if self.partner is None:
            return (self.customer,)
        return (self.customer, self.partner)

    def sort_key(self) -> Tuple[float, int, int, int, int]:
        return (self.delta_cost, self.customer, self.origin_route, self.dest_route, self.dest_pos)

    def displaced(self) -> Tuple[Tuple[int, int], ...]:
        """Пары (клиент, маршрут, который он покидает)"""
        if self.kind is MoveKind.RELOCATE:
            return ((self.customer, self.origin_route),)
        if self.kind is MoveKind.INTRA_SWAP:
            return ((self.customer, self.origin_route), (self.partner, self.origin_route))
        return ((self.customer, self.origin_route), (self.partner, self.dest_route))

    def arrivals(self) -> Tuple[Tuple[int, int], ...]:
        """Пары (клиент, маршрут, в который он попадает)"""
        if self.kind is MoveKind.RELOCATE:
            return ((self.customer, self.dest_route),)
        if self.kind is MoveKind.INTRA_SWAP:
            return ((self.customer, self.origin_route), (self.partner, self.origin_route))
        return ((self.customer, self.dest_route), (self.partner, self.origin_route))

    def inverse(self) -> 'Move':
        """Ход, возвращающий решение в исходное состояние"""
        if self.kind is MoveKind.RELOCATE:
            return Move(
                kind=self.kind, customer=self.customer,
                origin_route=self.dest_route, origin_pos=self.dest_pos,
                dest_route=self.origin_route, dest_pos=self.origin_pos,
                delta_cost=-self.delta_cost, delta_infeasibility=-self.delta_infeasibility,
            )
        return Move(
            kind=self.kind, customer=self.partner,
            origin_route=self.origin_route, origin_pos=self.origin_pos,
            dest_route=self.dest_route, dest_pos=self.dest_pos, partner=self.customer,
            delta_cost=-self.delta_cost, delta_infeasibility=-self.delta_infeasibility,
        )


def removal_delta(stops: Sequence[int], pos: int, c) -> float:
    prev = stops[pos - 1] if pos > 0 else 0
    nxt = stops[pos + 1] if pos + 1 < len(stops) else 0
    node = stops[pos]
    return c[prev][nxt] - c[prev][node] - c[node][nxt]


def insertion_delta(stops: Sequence[int], pos: int, customer: int, c) -> float:
    prev = stops[pos - 1] if pos > 0 else 0
    nxt = stops[pos] if pos < len(stops) else 0
    return c[prev][customer] + c[customer][nxt] - c[prev][nxt]


def replacement_delta(stops: Sequence[int], pos: int, customer: int, c) -> float:
    prev = stops[pos - 1] if pos > 0 else 0
    nxt = stops[pos + 1] if pos + 1 < len(stops) else 0
    node = stops[pos]
    return c[prev][customer] + c[customer][nxt] - c[prev][node] - c[node][nxt]


def cheapest_insertion(stops: Sequence[int], customer: int, c) -> Tuple[int, float]:
    """Позиция вставки с минимальным приростом стоимости (при равенстве - меньшая позиция)"""
    best_pos, best_delta = 0, None
    prev = 0
    for pos in range(len(stops) + 1):
        nxt = stops[pos] if pos < len(stops) else 0
        delta = c[prev][customer] + c[customer][nxt] - c[prev][nxt]
        if best_delta is None or delta < best_delta:
            best_pos, best_delta = pos, delta
        prev = nxt
    return best_pos, best_delta


def intra_swap_delta(stops: Sequence[int], p: int, q: int, c) -> float:
    if p > q:
        p, q = q, p
    if q == p + 1:
        prev = stops[p - 1] if p > 0 else 0
        nxt = stops[q + 1] if q + 1 < len(stops) else 0
        a, b = stops[p], stops[q]
        return c[prev][b] + c[b][a] + c[a][nxt] - c[prev][a] - c[a][b] - c[b][nxt]
    a, b = stops[p], stops[q]
    return replacement_delta(stops, p, b, c) + replacement_delta(stops, q, a, c)


def _infeasibility_change(capacity: float, pairs: Iterable[Tuple[float, float]]) -> float:
    """Изменение меры недопустимости по парам (старая загрузка, новая загрузка)"""
    return sum(max(0.0, new - capacity) - max(0.0, old - capacity) for old, new in pairs)


def relocate_move(solution: Solution, instance: CvrpInstance, origin_route: int, origin_pos: int,
                  dest_route: int, dest_pos: Optional[int] = None) -> Move:
    """Ход (1,0); без dest_pos выбирается позиция дешевейшей вставки"""
    c = instance.costs.rows
    origin = solution.routes[origin_route]
    dest = solution.routes[dest_route]
    customer = origin.stops[origin_pos]
    if dest_pos is None:
        dest_pos, ins = cheapest_insertion(dest.stops, customer, c)
    else:
        ins = insertion_delta(dest.stops, dest_pos, customer, c)
    demand = instance.demands[customer]
    new_origin_load = origin.load - demand
    new_dest_load = dest.load + demand
    return Move(
        kind=MoveKind.RELOCATE, customer=customer,
        origin_route=origin_route, origin_pos=origin_pos,
        dest_route=dest_route, dest_pos=dest_pos,
        delta_cost=removal_delta(origin.stops, origin_pos, c) + ins,
        delta_infeasibility=_infeasibility_change(
            solution.capacity, ((origin.load, new_origin_load), (dest.load, new_dest_load))),
        feasible_after=_feasible_after(solution, {origin_route: new_origin_load, dest_route: new_dest_load}),
    )


def intra_swap_move(solution: Solution, instance: CvrpInstance, route_index: int, p: int, q: int) -> Move:
    """Ход (0,1): перестановка двух остановок внутри маршрута"""
    route = solution.routes[route_index]
    return Move(
        kind=MoveKind.INTRA_SWAP, customer=route.stops[p],
        origin_route=route_index, origin_pos=p,
        dest_route=route_index, dest_pos=q, partner=route.stops[q],
        delta_cost=intra_swap_delta(route.stops, p, q, instance.costs.rows),
        delta_infeasibility=0.0,
        feasible_after=solution.feasible,
    )


def inter_swap_move(solution: Solution, instance: CvrpInstance, origin_route: int, origin_pos: int,
                    dest_route: int, dest_pos: int) -> Move:
    """Ход (1,1): обмен клиентами между маршрутами с сохранением позиций"""
    c = instance.costs.rows
    origin = solution.routes[origin_route]
    dest = solution.routes[dest_route]
    a = origin.stops[origin_pos]
    b = dest.stops[dest_pos]
    shift = instance.demands[b] - instance.demands[a]
    new_origin_load = origin.load + shift
    new_dest_load = dest.load - shift
    return Move(
        kind=MoveKind.INTER_SWAP, customer=a,
        origin_route=origin_route, origin_pos=origin_pos,
        dest_route=dest_route, dest_pos=dest_pos, partner=b,
        delta_cost=replacement_delta(origin.stops, origin_pos, b, c) + replacement_delta(dest.stops, dest_pos, a, c),
        delta_infeasibility=_infeasibility_change(
            solution.capacity, ((origin.load, new_origin_load), (dest.load, new_dest_load))),
        feasible_after=_feasible_after(solution, {origin_route: new_origin_load, dest_route: new_dest_load}),
    )


def _feasible_after(solution: Solution, new_loads: Dict[int, float]) -> bool:
    for index, route in enumerate(solution.routes):
        load = new_loads.get(index, route.load)
        if load > solution.capacity:
            return False
    return True


def apply_move(solution: Solution, move: Move, instance: CvrpInstance) -> Solution:
    """
    Возвращает новое решение после хода.

    Загрузки и стоимости затронутых маршрутов обновляются приращениями.
    """
    routes = list(solution.routes)
    c = instance.costs.rows
    try:
        origin = routes[move.origin_route]
        dest = routes[move.dest_route]
    except IndexError:
        raise StaleMoveError(f"ход ссылается на несуществующий маршрут: {move}") from None
    _expect(origin, move.origin_pos, move.customer, move)

    if move.kind is MoveKind.RELOCATE:
        if move.origin_route == move.dest_route:
            raise StaleMoveError(f"перемещение (1,0) внутри одного маршрута: {move}")
        if not 0 <= move.dest_pos <= len(dest.stops):
            raise StaleMoveError(f"позиция вставки {move.dest_pos} вне маршрута {move.dest_route}")
        demand = float(instance.demands[move.customer])
        origin_stops = origin.stops[:move.origin_pos] + origin.stops[move.origin_pos + 1:]
        dest_stops = dest.stops[:move.dest_pos] + (move.customer,) + dest.stops[move.dest_pos:]
        routes[move.origin_route] = Route(
            origin_stops, origin.load - demand,
            origin.cost + removal_delta(origin.stops, move.origin_pos, c) if origin_stops else 0.0,
        )
        routes[move.dest_route] = Route(
            dest_stops, dest.load + demand,
            dest.cost + insertion_delta(dest.stops, move.dest_pos, move.customer, c),
        )
    elif move.kind is MoveKind.INTRA_SWAP:
        if move.origin_route != move.dest_route:
            raise StaleMoveError(f"перестановка (0,1) между разными маршрутами: {move}")
        _expect(origin, move.dest_pos, move.partner, move)
        stops = list(origin.stops)
        stops[move.origin_pos], stops[move.dest_pos] = stops[move.dest_pos], stops[move.origin_pos]
        routes[move.origin_route] = Route(
            tuple(stops), origin.load,
            origin.cost + intra_swap_delta(origin.stops, move.origin_pos, move.dest_pos, c),
        )
    else:
        if move.origin_route == move.dest_route:
            raise StaleMoveError(f"обмен (1,1) внутри одного маршрута: {move}")
        _expect(dest, move.dest_pos, move.partner, move)
        a, b = move.customer, move.partner
        shift = float(instance.demands[b] - instance.demands[a])
        origin_stops = origin.stops[:move.origin_pos] + (b,) + origin.stops[move.origin_pos + 1:]
        dest_stops = dest.stops[:move.dest_pos] + (a,) + dest.stops[move.dest_pos + 1:]
        routes[move.origin_route] = Route(
            origin_stops, origin.load + shift,
            origin.cost + replacement_delta(origin.stops, move.origin_pos, b, c),
        )
        routes[move.dest_route] = Route(
            dest_stops, dest.load - shift,
            dest.cost + replacement_delta(dest.stops, move.dest_pos, a, c),
        )
    return Solution(routes=tuple(routes), capacity=solution.capacity, fleet_limit=solution.fleet_limit)


def _expect(route: Route, pos: int, customer: Optional[int], move: Move) -> None:
    if customer is None or not 0 <= pos < len(route.stops) or route.stops[pos] != customer:
        raise StaleMoveError(f"клиент {customer} больше не стоит на позиции {pos}: {move}")


# ============================================================================
# ДОКУМЕНТ РЕШЕНИЯ (JSON)
# ============================================================================

def solution_to_document(solution: Solution, instance: CvrpInstance, seed: Optional[int] = None,
                         wallclock_seconds: Optional[float] = None) -> dict:
    """
    Машиночитаемое представление решения в пространстве id файла.

    wallclock_seconds включается только если передан: CLI пишет его в
    отдельный файл метаданных, чтобы документ был детерминированным.
    """
    document = {
        'instance_name': instance.name,
        'total_cost': solution.total_cost,
        'vehicles_used': solution.vehicles_used,
        'feasible': check_feasibility(solution, instance).feasible,
        'seed': seed,
        'routes': [[instance.file_id(s) for s in route.stops] for route in solution.routes if route.stops],
    }
    if wallclock_seconds is not None:
        document['wallclock_seconds'] = wallclock_seconds
    return document


def solution_from_document(document: dict, instance: CvrpInstance, fleet: Optional[int] = None) -> Solution:
    """Восстанавливает решение из документа (маршруты пересчитываются заново)"""
    try:
        stop_lists = [[instance.internal_id(int(f)) for f in route] for route in document['routes']]
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"некорректный документ решения: {exc}") from exc
    if fleet is None:
        fleet = len(stop_lists)
    return Solution.from_stop_lists(stop_lists, instance, fleet=max(fleet, len(stop_lists)))
