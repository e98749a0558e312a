"""
Построение начальных решений: конструктор с посевом по соседям и
параллельный алгоритм сбережений Кларка-Райта (базовая линия).
"""
import logging
from typing import Dict, List, Optional

import numpy as np

from .exceptions import ConstructionError
from .instance import CvrpInstance, NeighborLists
from .solution import Route, Solution, cheapest_insertion

logger = logging.getLogger(__name__)


def build_seeded_solution(instance: CvrpInstance, neighbors: NeighborLists, fleet: int,
                          rng_seed: Optional[int] = 0) -> Solution:
    """
    Стартовое решение для табу-поиска.

    Посевы - самые удаленные от депо клиенты, не входящие в списки соседей
    уже выбранных посевов. Остальные клиенты идут по убыванию спроса и
    вставляются (дешевейшей вставкой) только в маршрут, где уже есть их
    сосед; если такого маршрута с запасом вместимости нет - в любой маршрут
    с запасом.
    """
    if fleet < max(1, instance.min_vehicles):
        raise ConstructionError(
            f"парк {fleet} меньше минимально необходимого {instance.min_vehicles} для {instance.name}"
        )
    rng = np.random.default_rng(rng_seed)
    c = instance.costs.rows
    customers = list(instance.customers)
    # Равные расстояния до депо упорядочиваются детерминированно по seed
    tiebreak = rng.permutation(len(customers))
    by_distance = sorted(customers, key=lambda cust: (-c[0][cust], tiebreak[cust - 1]))

    stops: List[List[int]] = [[] for _ in range(fleet)]
    loads = [0.0] * fleet
    seeds: List[int] = []
    for customer in by_distance:
        if len(seeds) == fleet:
            break
        if any(neighbors.is_neighbor(seed, customer) for seed in seeds):
            continue
        stops[len(seeds)].append(customer)
        loads[len(seeds)] += float(instance.demands[customer])
        seeds.append(customer)
    logger.debug("Посевы для %s: %s", instance.name, [instance.file_id(s) for s in seeds])

    placed = set(seeds)
    remaining = sorted((cust for cust in customers if cust not in placed),
                       key=lambda cust: (-instance.demands[cust], cust))
    for customer in remaining:
        demand = float(instance.demands[customer])
        with_space = [r for r in range(fleet) if loads[r] + demand <= instance.capacity]
        if not with_space:
            raise ConstructionError(
                f"клиента {instance.file_id(customer)} (спрос {demand:g}) некуда поместить при парке {fleet}"
            )
        with_neighbor = [r for r in with_space if neighbors.any_neighbor_in(customer, stops[r])]
        candidates = with_neighbor or with_space
        best = min(candidates, key=lambda r: (cheapest_insertion(stops[r], customer, c)[1], r))
        pos, _ = cheapest_insertion(stops[best], customer, c)
        stops[best].insert(pos, customer)
        loads[best] += demand

    solution = Solution(routes=tuple(Route.build(s, instance) for s in stops), capacity=instance.capacity)
    logger.info(
        "Начальное решение %s: стоимость %.2f, машин %d из %d",
        instance.name, solution.total_cost, solution.vehicles_used, fleet,
    )
    return solution


def saving(instance: CvrpInstance, i: int, j: int) -> float:
    """s(i,j) = c(0,i) + c(0,j) - c(i,j)"""
    c = instance.costs.rows
    return c[0][i] + c[0][j] - c[i][j]


def clarke_wright(instance: CvrpInstance, fleet: Optional[int] = None) -> Solution:
    """
    Параллельный алгоритм сбережений.

    Объединяются только концы разных маршрутов при соблюдении
    вместимости. Положительные сбережения применяются всегда; если после
    них маршрутов больше парка K, слияния продолжаются по неположительным
    сбережениям, пока маршрутов больше K. Если уложиться в K не удалось,
    решение возвращается с нарушением парка (см. check_feasibility).
    """
    limit = fleet or instance.fleet_size
    customers = list(instance.customers)
    routes: Dict[int, List[int]] = {cust: [cust] for cust in customers}
    route_of = {cust: cust for cust in customers}
    loads = {cust: float(instance.demands[cust]) for cust in customers}

    savings = sorted(
        ((saving(instance, i, j), i, j) for idx, i in enumerate(customers) for j in customers[idx + 1:]),
        key=lambda item: (-item[0], item[1], item[2]),
    )
    for value, i, j in savings:
        if value <= 0 and len(routes) <= limit:
            break
        ri, rj = route_of[i], route_of[j]
        if ri == rj:
            continue
        if loads[ri] + loads[rj] > instance.capacity:
            continue
        left, right = routes[ri], routes[rj]
        # Сливать можно только через концы маршрутов
        if i not in (left[0], left[-1]) or j not in (right[0], right[-1]):
            continue
        if left[-1] != i:
            left = left[::-1]
        if right[0] != j:
            right = right[::-1]
        merged = left + right
        routes[ri] = merged
        loads[ri] += loads.pop(rj)
        del routes[rj]
        for cust in right:
            route_of[cust] = ri

    ordered = sorted(routes.values(), key=min)
    if len(ordered) > limit:
        logger.warning(
            "Кларк-Райт для %s: %d маршрутов при парке %d", instance.name, len(ordered), limit,
        )
    solution = Solution.from_stop_lists(ordered, instance, fleet=max(limit, len(ordered)), fleet_limit=limit)
    logger.info("Кларк-Райт %s: стоимость %.2f, машин %d", instance.name, solution.total_cost, solution.vehicles_used)
    return solution
