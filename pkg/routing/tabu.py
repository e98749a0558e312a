"""
Табу-поиск HQTS: окрестность из ходов (1,0), (0,1), (1,1), табу-список
с критерием стремления, выбор кандидата с стратегической осцилляцией и
без нее, интенсификация/диверсификация, редкое пересеквенирование
лучшего решения и критерии остановки.
"""
import csv
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .construct import build_seeded_solution
from .exceptions import EmptyNeighborhoodError, HqtsError, SearchInvariantError
from .instance import CvrpInstance, NeighborLists, nearest_neighbors
from .solution import (
    Move, Route, Solution, ViolationKind, apply_move, check_feasibility, inter_swap_move,
    intra_swap_move, relocate_move,
)

logger = logging.getLogger(__name__)

IMPROVEMENT_EPS = 1e-9
COVERAGE_CHECK_EVERY = 100


class Phase(str, Enum):
    FEASIBLE = 'feasible'
    INFEASIBLE = 'infeasible'


class Stage(str, Enum):
    """Этапы цикла интенсификации/диверсификации"""
    NORMAL = 'normal'
    DIVERSIFY = 'diversify'
    INTENSIFIED = 'intensified'


class StopReason(str, Enum):
    NON_IMPROVE = 'non_improve'
    TIME_LIMIT = 'time_limit'
    MAX_ITERATIONS = 'max_iterations'
    STALLED = 'stalled'


@dataclass(frozen=True)
class SearchParams:
    tenure: int = 15
    x_low: float = 0.6
    x_high: float = 1.1
    non_improve_stop: int = 5000
    time_limit_seconds: float = 3600.0
    resequence_trigger: int = 1000
    so_enabled: bool = True
    rng_seed: int = 0
    fleet: Optional[int] = None
    max_iterations: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.x_low <= self.x_high:
            raise ValueError(f"нужно 0 < x_low <= x_high, получено {self.x_low}, {self.x_high}")
        for name in ('tenure', 'non_improve_stop', 'resequence_trigger'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} должно быть положительным")
        if self.time_limit_seconds <= 0:
            raise ValueError("time_limit_seconds должно быть положительным")
        if self.fleet is not None and self.fleet < 1:
            raise ValueError("fleet должно быть положительным")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations не может быть отрицательным")


class TabuList:
    """
    Атрибут (клиент, маршрут, который он покинул) -> итерация истечения.

    Атрибут табуирован на итерации t, пока expiry > t. Ход табуирован,
    если хотя бы один его участник возвращается в табуированный маршрут.
    """

    def __init__(self):
        self._expiry: Dict[Tuple[int, int], int] = {}

    def mark(self, customer: int, route: int, expiry: int) -> None:
        self._expiry[(customer, route)] = expiry

    def is_tabu(self, customer: int, route: int, iteration: int) -> bool:
        return self._expiry.get((customer, route), -1) > iteration

    def move_is_tabu(self, move: Move, iteration: int) -> bool:
        return any(self.is_tabu(customer, route, iteration) for customer, route in move.arrivals())

    def expiry(self, customer: int, route: int) -> Optional[int]:
        return self._expiry.get((customer, route))

    def purge(self, iteration: int) -> None:
        self._expiry = {key: value for key, value in self._expiry.items() if value > iteration}

    def __len__(self):
        return len(self._expiry)


@dataclass
class SearchState:
    current: Solution
    global_best: Solution
    neighbor_k: int
    base_k: int
    num_customers: int
    iteration: int = 0
    since_best: int = 0
    diversified: bool = False
    phase: Phase = Phase.FEASIBLE
    stage: Stage = Stage.NORMAL
    stage_counter: int = 0
    threshold: int = 1


@dataclass(frozen=True)
class TrajectoryPoint:
    iteration: int
    current_cost: float
    best_cost: float
    feasible: bool
    phase: str


@dataclass
class SearchStats:
    iterations: int = 0
    resequence_calls: int = 0
    resequence_improvements: int = 0
    sampler_calls: int = 0
    cache_hits: int = 0
    sampler_fallbacks: int = 0
    wallclock_seconds: float = 0.0
    stop_reason: Optional[str] = None
    initial_vehicles: int = 0
    initial_cost: float = 0.0
    trajectory: List[TrajectoryPoint] = field(default_factory=list)


@dataclass(frozen=True)
class Selection:
    selected: Move
    new_best: Optional[Solution] = None


@dataclass
class SearchResult:
    best: Solution
    stats: SearchStats


# ============================================================================
# ОКРЕСТНОСТЬ
# ============================================================================

def _neighbor_counts(solution: Solution, neighbors: NeighborLists) -> Dict[Tuple[int, int], int]:
    """(клиент, маршрут) -> сколько соседей клиента стоит в маршруте"""
    route_of = {stop: r for r, route in enumerate(solution.routes) for stop in route.stops}
    counts: Dict[Tuple[int, int], int] = {}
    for customer in route_of:
        for other in neighbors[customer]:
            r = route_of.get(other)
            if r is not None:
                counts[(customer, r)] = counts.get((customer, r), 0) + 1
    return counts


def generate_neighborhood(state: SearchState, instance: CvrpInstance, neighbors: NeighborLists,
                          params: SearchParams) -> List[Move]:
    """
    Все ходы (1,0), (0,1) и (1,1) текущего решения.

    (1,0): маршрут назначения должен содержать соседа клиента, позиция -
    дешевейшая вставка. (1,1): каждый входящий клиент должен иметь соседа
    в новом маршруте, не считая партнера по обмену. (0,1) отключены при
    диверсификации. Без осцилляции остаются только ходы, сохраняющие
    допустимость.
    """
    solution = state.current
    routes = solution.routes
    counts = _neighbor_counts(solution, neighbors)
    moves: List[Move] = []

    for r_o, origin in enumerate(routes):
        for p, a in enumerate(origin.stops):
            for r_d, dest in enumerate(routes):
                if r_d == r_o or not dest.stops or not counts.get((a, r_d)):
                    continue
                moves.append(relocate_move(solution, instance, r_o, p, r_d))

    if not state.diversified:
        for r, route in enumerate(routes):
            for p in range(len(route.stops)):
                for q in range(p + 1, len(route.stops)):
                    moves.append(intra_swap_move(solution, instance, r, p, q))

    for r_o, origin in enumerate(routes):
        for r_d in range(r_o + 1, len(routes)):
            dest = routes[r_d]
            for p, a in enumerate(origin.stops):
                a_in_dest = counts.get((a, r_d), 0)
                if not a_in_dest:
                    continue
                for q, b in enumerate(dest.stops):
                    if a_in_dest - neighbors.is_neighbor(a, b) < 1:
                        continue
                    if counts.get((b, r_o), 0) - neighbors.is_neighbor(b, a) < 1:
                        continue
                    moves.append(inter_swap_move(solution, instance, r_o, p, r_d, q))

    if not params.so_enabled:
        moves = [move for move in moves if move.feasible_after]
    if not moves:
        raise EmptyNeighborhoodError(f"итерация {state.iteration}: окрестность пуста")
    return moves


# ============================================================================
# ВЫБОР КАНДИДАТА
# ============================================================================

def _resulting_infeasibility(state: SearchState, move: Move) -> float:
    return max(0.0, state.current.infeasibility + move.delta_infeasibility)


def _beats_best(state: SearchState, move: Move) -> bool:
    return move.feasible_after and (
        state.current.total_cost + move.delta_cost < state.global_best.total_cost - IMPROVEMENT_EPS
    )


def select_candidate_basic(state: SearchState, moves: Sequence[Move], tabu: TabuList,
                           instance: CvrpInstance) -> Move:
    """
    Лучший не табуированный ход; табуированный ход берется, только если
    он дает новый глобальный рекорд (стремление). Если табуированы все и
    никто не стремится, берется лучший ход вообще.
    """
    aspirants = [move for move in moves if move.feasible_after and _beats_best(state, move)]
    if aspirants:
        return min(aspirants, key=Move.sort_key)
    allowed = [move for move in moves if not tabu.move_is_tabu(move, state.iteration)]
    feasible = [move for move in allowed if move.feasible_after]
    pool = feasible or allowed or list(moves)
    return min(pool, key=Move.sort_key)


def select_candidate_so(state: SearchState, moves: Sequence[Move], tabu: TabuList,
                        instance: CvrpInstance) -> Selection:
    """
    Выбор со стратегической осцилляцией.

    Если предыдущее решение допустимо, лучшие не табуированные допустимый
    (sbfs) и недопустимый (sbis) кандидаты сравниваются по стоимости.
    Если недопустимо - по мере недопустимости, при равенстве по стоимости.
    Допустимый кандидат дешевле глобального рекорда запоминается как cbs
    независимо от табу и возвращается в new_best.
    """
    new_best = None
    record_breakers = [move for move in moves if _beats_best(state, move)]
    if record_breakers:
        cbs = min(record_breakers, key=Move.sort_key)
        new_best = apply_move(state.current, cbs, instance)

    allowed = [move for move in moves if not tabu.move_is_tabu(move, state.iteration)]
    feasible_pool = [move for move in allowed if move.feasible_after]
    infeasible_pool = [move for move in allowed if not move.feasible_after]

    if state.current.feasible:
        key = Move.sort_key
    else:
        def key(move):
            return (_resulting_infeasibility(state, move),) + move.sort_key()

    best = [min(pool, key=key) for pool in (feasible_pool, infeasible_pool) if pool]
    if not best:
        best = [min(moves, key=key)]
    return Selection(selected=min(best, key=key), new_best=new_best)


def update_tabu(tabu: TabuList, selected: Move, iteration: int, params: SearchParams) -> TabuList:
    """Каждый вытесненный ходом клиент получает (клиент, исходный маршрут) до iteration + tenure"""
    tabu.purge(iteration)
    for customer, route in selected.displaced():
        tabu.mark(customer, route, iteration + params.tenure)
    return tabu


# ============================================================================
# ИНТЕНСИФИКАЦИЯ / ДИВЕРСИФИКАЦИЯ И ПЕРЕСЕКВЕНИРОВАНИЕ
# ============================================================================

def draw_threshold(num_customers: int, params: SearchParams, rng: np.random.Generator) -> int:
    """X равномерно из [x_low * |V|, x_high * |V|] по целым"""
    low = max(1, math.ceil(params.x_low * num_customers))
    high = max(low, math.floor(params.x_high * num_customers))
    return int(rng.integers(low, high + 1))


def _enter_stage(state: SearchState, stage: Stage, params: SearchParams, rng: np.random.Generator) -> None:
    state.stage = stage
    state.stage_counter = 0
    state.threshold = draw_threshold(state.num_customers, params, rng)


def start_diversification(state: SearchState, params: SearchParams, rng: np.random.Generator) -> None:
    state.diversified = True
    state.neighbor_k = 2 * state.base_k
    _enter_stage(state, Stage.DIVERSIFY, params, rng)
    logger.info("Итерация %d: диверсификация (k=%d, без ходов (0,1))", state.iteration, state.neighbor_k)


def intensify_diversify(state: SearchState, params: SearchParams, rng: np.random.Generator) -> SearchState:
    """
    Продвигает цикл этапов после X итераций без улучшения на каждом:
    обычный -> диверсификация -> интенсификация -> обычный.

    Улучшение рекорда (since_best == 0) обнуляет счетчик этапа, не меняя
    сам этап. При осцилляции интенсификация не переносит поиск на рекорд.
    """
    if state.since_best == 0:
        state.stage_counter = 0
        return state
    state.stage_counter += 1
    if state.stage_counter < state.threshold:
        return state

    if state.stage is Stage.NORMAL:
        start_diversification(state, params, rng)
    elif state.stage is Stage.DIVERSIFY:
        if not params.so_enabled:
            state.current = state.global_best
            state.phase = Phase.FEASIBLE
        _enter_stage(state, Stage.INTENSIFIED, params, rng)
        logger.info("Итерация %d: интенсификация", state.iteration)
    else:
        state.diversified = False
        state.neighbor_k = state.base_k
        _enter_stage(state, Stage.NORMAL, params, rng)
        logger.debug("Итерация %d: возврат к k=%d", state.iteration, state.neighbor_k)
    return state


def maybe_resequence(state: SearchState, resequencer: Optional[Callable[[Route], Route]], params: SearchParams,
                     stats: Optional[SearchStats] = None) -> SearchState:
    """
    Каждые resequence_trigger итераций без улучшения пересеквенирует все
    непустые маршруты рекорда. Если сумма улучшилась, рекорд и текущее
    решение заменяются, since_best обнуляется.
    """
    if resequencer is None or state.since_best <= 0 or state.since_best % params.resequence_trigger:
        return state
    best = state.global_best
    routes = []
    for index, route in enumerate(best.routes):
        if route.is_empty:
            routes.append(route)
            continue
        if stats is not None:
            stats.resequence_calls += 1
        try:
            routes.append(resequencer(route))
        except HqtsError as exc:
            logger.warning("Маршрут %d оставлен без изменений: %s", index, exc)
            routes.append(route)
    candidate = Solution(routes=tuple(routes), capacity=best.capacity)
    if candidate.total_cost < best.total_cost - IMPROVEMENT_EPS:
        logger.info(
            "Итерация %d: пересеквенирование %.2f -> %.2f", state.iteration, best.total_cost, candidate.total_cost,
        )
        if stats is not None:
            stats.resequence_improvements += 1
        state.global_best = candidate
        state.current = candidate
        state.phase = Phase.FEASIBLE
        state.since_best = 0
    return state


# ============================================================================
# ОСНОВНОЙ ЦИКЛ
# ============================================================================

def _check_coverage(solution: Solution, instance: CvrpInstance, iteration: int) -> None:
    report = check_feasibility(solution, instance)
    coverage = report.of_kind(ViolationKind.COVERAGE)
    if coverage:
        raise SearchInvariantError(f"итерация {iteration}: нарушено покрытие: {coverage[0].detail}")


def run_search(instance: CvrpInstance, params: SearchParams, constructor=build_seeded_solution,
               resequencer: Optional[Callable[[Route], Route]] = None) -> SearchResult:
    """
    HQTS: стартовое решение, локальный поиск, обновление табу-списка,
    интенсификация/диверсификация и редкое пересеквенирование.

    Останавливается после non_improve_stop итераций без улучшения, по
    лимиту времени, по max_iterations или если окрестность пуста даже при
    диверсификации.
    """
    started = time.monotonic()
    fleet = params.fleet or instance.default_fleet()
    base_k = max(1, instance.neighbor_count())
    neighbor_lists = {k: nearest_neighbors(instance, k) for k in (base_k, 2 * base_k)}
    rng = np.random.default_rng(params.rng_seed)

    initial = constructor(instance, neighbor_lists[base_k], fleet, params.rng_seed)
    if not check_feasibility(initial, instance).feasible:
        raise SearchInvariantError(f"стартовое решение для {instance.name} недопустимо")
    stats = SearchStats(initial_vehicles=initial.vehicles_used, initial_cost=initial.total_cost)
    state = SearchState(
        current=initial, global_best=initial, neighbor_k=base_k, base_k=base_k,
        num_customers=instance.num_customers,
        threshold=draw_threshold(instance.num_customers, params, rng),
    )
    tabu = TabuList()
    logger.info(
        "Поиск %s: парк %d, k=%d, осцилляция %s, стартовая стоимость %.2f",
        instance.name, fleet, base_k, 'вкл' if params.so_enabled else 'выкл', initial.total_cost,
    )

    while True:
        if params.max_iterations is not None and state.iteration >= params.max_iterations:
            stats.stop_reason = StopReason.MAX_ITERATIONS.value
            break
        if state.since_best >= params.non_improve_stop:
            stats.stop_reason = StopReason.NON_IMPROVE.value
            break
        if time.monotonic() - started >= params.time_limit_seconds:
            stats.stop_reason = StopReason.TIME_LIMIT.value
            break

        try:
            moves = generate_neighborhood(state, instance, neighbor_lists[state.neighbor_k], params)
        except EmptyNeighborhoodError:
            if state.diversified:
                stats.stop_reason = StopReason.STALLED.value
                break
            start_diversification(state, params, rng)
            continue

        if params.so_enabled:
            selection = select_candidate_so(state, moves, tabu, instance)
        else:
            selection = Selection(selected=select_candidate_basic(state, moves, tabu, instance))
        move = selection.selected

        state.current = apply_move(state.current, move, instance)
        update_tabu(tabu, move, state.iteration, params)
        state.iteration += 1

        candidates = [s for s in (selection.new_best, state.current) if s is not None and s.feasible]
        best_candidate = min(candidates, key=lambda s: s.total_cost, default=None)
        if best_candidate is not None and \
                best_candidate.total_cost < state.global_best.total_cost - IMPROVEMENT_EPS:
            state.global_best = best_candidate
            state.since_best = 0
            logger.debug("Итерация %d: новый рекорд %.2f", state.iteration, best_candidate.total_cost)
        else:
            state.since_best += 1
        state.phase = Phase.FEASIBLE if state.current.feasible else Phase.INFEASIBLE

        intensify_diversify(state, params, rng)
        maybe_resequence(state, resequencer, params, stats)

        if state.iteration % COVERAGE_CHECK_EVERY == 0:
            _check_coverage(state.current, instance, state.iteration)
        stats.trajectory.append(TrajectoryPoint(
            iteration=state.iteration, current_cost=state.current.total_cost,
            best_cost=state.global_best.total_cost, feasible=state.current.feasible, phase=state.phase.value,
        ))

    best = state.global_best
    if not check_feasibility(best, instance).feasible:
        raise SearchInvariantError(f"рекорд для {instance.name} недопустим")
    stats.iterations = state.iteration
    stats.wallclock_seconds = time.monotonic() - started
    resequence_stats = getattr(resequencer, 'stats', None)
    if resequence_stats is not None:
        stats.sampler_calls = resequence_stats.solver_calls
        stats.sampler_fallbacks = resequence_stats.fallbacks
    cache = getattr(resequencer, 'cache', None)
    if cache is not None:
        stats.cache_hits = cache.hits
    logger.info(
        "Поиск %s завершен (%s): %d итераций, стоимость %.2f, машин %d",
        instance.name, stats.stop_reason, stats.iterations, best.total_cost, best.vehicles_used,
    )
    return SearchResult(best=best, stats=stats)


def write_trajectory_csv(stats: SearchStats, path) -> None:
    """iteration, current_cost, best_cost, feasible, phase"""
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['iteration', 'current_cost', 'best_cost', 'feasible', 'phase'])
        for point in stats.trajectory:
            writer.writerow([
                point.iteration, f"{point.current_cost:.6f}", f"{point.best_cost:.6f}",
                int(point.feasible), point.phase,
            ])
