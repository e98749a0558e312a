"""
Решение QUBO и пересеквенирование маршрутов.

simulated_anneal - классический заменитель квантового отжигателя
(метрополис по одиночным переворотам, геометрическое расписание beta).
brute_force_tsp - точный оракул для маршрутов до 10 остановок.
resequence_route/Resequencer - лестница кеш -> сэмплер -> перебор ->
исходный порядок; результат никогда не хуже входа.
"""
import itertools
import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import requests
from numba import njit

from .exceptions import PermutationError, QuboError, RemoteSamplerError, SamplerError
from .instance import CostMatrix
from .qubo import EncodingParams, Qubo, build_tsp_qubo, decode_assignment, qubo_energy
from .solution import Route, route_cost

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10
ENERGY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class AnnealParams:
    """
    Параметры отжига. beta_initial/beta_final задаются парой; None -
    диапазон выводится из коэффициентов задачи (default_beta_range).
    """
    num_reads: int = 32
    sweeps_per_read: int = 1000
    beta_initial: Optional[float] = None
    beta_final: Optional[float] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_reads < 1 or self.sweeps_per_read < 1:
            raise SamplerError(
                f"num_reads и sweeps_per_read должны быть >= 1: {self.num_reads}, {self.sweeps_per_read}"
            )
        if (self.beta_initial is None) != (self.beta_final is None):
            raise SamplerError("beta_initial и beta_final задаются только вместе")
        if self.beta_initial is not None and not 0 < self.beta_initial < self.beta_final:
            raise SamplerError(
                f"нужно 0 < beta_initial < beta_final, получено {self.beta_initial} -> {self.beta_final}"
            )

    def betas(self, default_range: Optional[Tuple[float, float]] = None) -> np.ndarray:
        if self.beta_initial is not None:
            beta_range = (self.beta_initial, self.beta_final)
        elif default_range is not None:
            beta_range = default_range
        else:
            raise SamplerError("диапазон beta не задан и не выведен из задачи")
        return np.geomspace(beta_range[0], beta_range[1], num=self.sweeps_per_read)


@dataclass(frozen=True)
class Sample:
    assignment: Tuple[int, ...]
    energy: float
    occurrences: int = 1


# ============================================================================
# ИМИТАЦИЯ ОТЖИГА
# ============================================================================

# Нижняя граница наименьшего изменения энергии (в единицах max |q|)
MIN_ENERGY_GAP = 1e-3
IMPROVEMENT_EPS = 1e-12
MAX_DESCENT_PASSES = 100


@njit(cache=True)
def _flip(i, state, field, indptr, indices, weights):
    """Переворачивает x_i и обновляет поля соседей; возвращает изменение энергии"""
    if state[i] == 0:
        delta = field[i]
        sign = 1.0
    else:
        delta = -field[i]
        sign = -1.0
    state[i] = 1 - state[i]
    for k in range(indptr[i], indptr[i + 1]):
        field[indices[k]] += sign * weights[k]
    return delta


@njit(cache=True)
def _swap_columns(u, v, grid, state, field, indptr, indices, weights):
    """Меняет местами столбцы u и v сетки grid x grid; перестановочный штраф не меняется"""
    delta = 0.0
    for row in range(grid):
        a = row * grid + u
        b = row * grid + v
        if state[a] != state[b]:
            delta += _flip(a, state, field, indptr, indices, weights)
            delta += _flip(b, state, field, indptr, indices, weights)
    return delta


@njit(cache=True)
def _reverse_columns(u, v, grid, state, field, indptr, indices, weights):
    """Разворачивает столбцы u..v (u < v); обратная операция - тот же вызов"""
    delta = 0.0
    for p in range((v - u + 1) // 2):
        delta += _swap_columns(u + p, v - p, grid, state, field, indptr, indices, weights)
    return delta


@njit(cache=True)
def _column_move(kind, u, v, grid, state, field, indptr, indices, weights):
    if kind == 0:
        return _swap_columns(u, v, grid, state, field, indptr, indices, weights)
    return _reverse_columns(u, v, grid, state, field, indptr, indices, weights)


@njit(cache=True)
def _descend(state, field, indptr, indices, weights, grid):
    """Спуск при нулевой температуре: только улучшающие ходы до локального минимума"""
    n = state.shape[0]
    for _ in range(MAX_DESCENT_PASSES):
        improved = False
        for i in range(n):
            delta = field[i] if state[i] == 0 else -field[i]
            if delta < -IMPROVEMENT_EPS:
                _flip(i, state, field, indptr, indices, weights)
                improved = True
        for kind in range(2):
            for u in range(grid):
                for v in range(u + 1, grid):
                    delta = _column_move(kind, u, v, grid, state, field, indptr, indices, weights)
                    if delta < -IMPROVEMENT_EPS:
                        improved = True
                    else:
                        _column_move(kind, u, v, grid, state, field, indptr, indices, weights)
        if not improved:
            break


@njit(cache=True)
def _anneal_read(linear, indptr, indices, weights, betas, grid, seed):
    np.random.seed(seed)
    n = linear.shape[0]
    state = np.zeros(n, dtype=np.int8)
    for i in range(n):
        if np.random.random() < 0.5:
            state[i] = 1
    # field[i] - изменение энергии при переводе x_i из 0 в 1
    field = linear.copy()
    for i in range(n):
        if state[i] == 1:
            for k in range(indptr[i], indptr[i + 1]):
                field[indices[k]] += weights[k]
    for beta in betas:
        for i in range(n):
            delta = field[i] if state[i] == 0 else -field[i]
            if delta <= 0.0 or np.random.random() < np.exp(-beta * delta):
                _flip(i, state, field, indptr, indices, weights)
        if grid > 1:
            for _ in range(grid):
                u = np.random.randint(0, grid)
                v = np.random.randint(0, grid)
                if u == v:
                    continue
                if u > v:
                    u, v = v, u
                kind = 0 if np.random.random() < 0.5 else 1
                delta = _column_move(kind, u, v, grid, state, field, indptr, indices, weights)
                if delta > 0.0 and np.random.random() >= np.exp(-beta * delta):
                    _column_move(kind, u, v, grid, state, field, indptr, indices, weights)
    _descend(state, field, indptr, indices, weights, grid)
    return state


def _sparse_problem(qubo: Qubo) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Линейные коэффициенты и симметричная CSR-смежность, нормированные на max |q|"""
    scale = qubo.max_abs_coefficient() or 1.0
    rows, cols, values = qubo.arrays()
    values = values / scale
    linear = np.zeros(qubo.num_vars)
    diagonal = rows == cols
    np.add.at(linear, rows[diagonal], values[diagonal])
    off = ~diagonal
    src = np.concatenate([rows[off], cols[off]])
    dst = np.concatenate([cols[off], rows[off]])
    w = np.concatenate([values[off], values[off]])
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.zeros(qubo.num_vars + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return linear, indptr, dst.astype(np.int64), w


def default_beta_range(linear: np.ndarray, indptr: np.ndarray, weights: np.ndarray) -> Tuple[float, float]:
    """
    Диапазон beta из коэффициентов задачи.

    Горячий конец: наибольшее изменение энергии одного переворота
    принимается с вероятностью 1/2. Холодный: наименьший ненулевой
    коэффициент (не меньше MIN_ENERGY_GAP) - с вероятностью 1/100.
    """
    row_sums = np.abs(linear).copy()
    np.add.at(row_sums, np.repeat(np.arange(linear.shape[0]), np.diff(indptr)), np.abs(weights))
    max_delta = float(row_sums.max()) if row_sums.size else 0.0
    magnitudes = np.abs(np.concatenate([linear, weights]))
    magnitudes = magnitudes[magnitudes > 0]
    if max_delta <= 0 or magnitudes.size == 0:
        return 0.1, 1.0
    min_delta = max(float(magnitudes.min()), MIN_ENERGY_GAP)
    hot = math.log(2) / max_delta
    cold = math.log(100) / min_delta
    return hot, max(cold, 2 * hot)


def grid_size(num_vars: int) -> int:
    """Сторона one-hot сетки для QUBO на n^2 переменных, иначе 0"""
    side = math.isqrt(num_vars)
    return side if side > 1 and side * side == num_vars else 0


def read_seed(rng_seed: int, read_index: int) -> int:
    return int(np.random.SeedSequence([int(rng_seed), int(read_index)]).generate_state(1)[0])


def collect_samples(qubo: Qubo, assignments) -> List[Sample]:
    """Дедупликация и сортировка по (энергия, присваивание)"""
    counts: Dict[Tuple[int, ...], int] = {}
    for assignment in assignments:
        key = tuple(int(v) for v in assignment)
        counts[key] = counts.get(key, 0) + 1
    samples = [Sample(assignment=key, energy=qubo_energy(qubo, key), occurrences=count)
               for key, count in counts.items()]
    samples.sort(key=lambda s: (s.energy, s.assignment))
    return samples


def simulated_anneal(qubo: Qubo, params: AnnealParams) -> List[Sample]:
    """
    num_reads независимых цепочек Метрополиса.

    Расписание beta применяется к QUBO, нормированному так, что
    наибольший по модулю коэффициент равен 1; энергии считаются по
    исходному QUBO. Кроме одиночных переворотов на QUBO из n^2
    переменных делаются обмен и разворот столбцов сетки n x n (точное
    изменение энергии, штраф перестановки сохраняется). Каждое чтение
    заканчивается спуском до локального минимума и получает собственный
    seed из (rng_seed, номер чтения), поэтому результат воспроизводим.
    """
    if qubo.num_vars < 1:
        raise QuboError("для отжига нужна хотя бы одна переменная")
    linear, indptr, indices, weights = _sparse_problem(qubo)
    betas = params.betas(default_beta_range(linear, indptr, weights))
    grid = grid_size(qubo.num_vars)
    reads = [
        _anneal_read(linear, indptr, indices, weights, betas, grid, read_seed(params.rng_seed, index))
        for index in range(params.num_reads)
    ]
    return collect_samples(qubo, reads)


# ============================================================================
# ТОЧНЫЙ ПЕРЕБОР
# ============================================================================

def brute_force_tsp(route_nodes: Sequence[int], costs: CostMatrix) -> Tuple[List[int], float]:
    """
    Точный минимальный цикл; первый узел (депо) закреплен.

    При равной стоимости выигрывает лексикографически меньший порядок.
    """
    depot, stops = route_nodes[0], sorted(int(s) for s in route_nodes[1:])
    if len(stops) > BRUTE_FORCE_LIMIT:
        raise SamplerError(f"перебор ограничен {BRUTE_FORCE_LIMIT} остановками, получено {len(stops)}")
    if not stops:
        return [], 0.0
    c = costs.rows
    best_order, best_cost = None, math.inf
    for order in itertools.permutations(stops):
        total = c[depot][order[0]] + c[order[-1]][depot]
        for a, b in zip(order, order[1:]):
            total += c[a][b]
        if total < best_cost - 1e-9:
            best_order, best_cost = order, total
    return list(best_order), best_cost


# ============================================================================
# КЕШ И ПЕРЕСЕКВЕНИРОВАНИЕ
# ============================================================================

@dataclass(frozen=True)
class CachedRoute:
    order: Tuple[int, ...]
    cost: float


class ResequenceCache:
    """
    Словарь уже оптимизированных маршрутов.

    Ключ - отсортированный набор остановок: от порядка результат не
    зависит. Запись под блокировкой, повторное вычисление одного ключа
    допустимо (последняя запись побеждает).
    """

    def __init__(self):
        self._entries: Dict[Tuple[int, ...], CachedRoute] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(stops: Sequence[int]) -> Tuple[int, ...]:
        return tuple(sorted(int(s) for s in stops))

    def get(self, stops: Sequence[int]) -> Optional[CachedRoute]:
        entry = self._entries.get(self.key(stops))
        with self._lock:
            if entry is None:
                self.misses += 1
            else:
                self.hits += 1
        return entry

    def put(self, order: Sequence[int], cost: float) -> None:
        entry = CachedRoute(order=tuple(int(s) for s in order), cost=float(cost))
        with self._lock:
            self._entries[self.key(order)] = entry

    def __len__(self):
        return len(self._entries)


@dataclass
class ResequenceStats:
    solver_calls: int = 0
    fallbacks: int = 0
    remote_failures: int = 0
    improvements: int = 0


Solver = Callable[[Qubo], List[Sample]]


def _decode_best(samples: List[Sample], encoding) -> Optional[List[int]]:
    for sample in samples:
        try:
            return decode_assignment(encoding, sample.assignment)
        except PermutationError:
            continue
    return None


def resequence_route(route: Route, costs: CostMatrix, cache: ResequenceCache, solver: Optional[Solver],
                     encoding_params: EncodingParams = EncodingParams(),
                     stats: Optional[ResequenceStats] = None) -> Route:
    """
    Переупорядочивает остановки маршрута.

    solver=None означает точный перебор вместо QUBO. Новый порядок
    принимается, только если он не дороже исходного.
    """
    stats = stats if stats is not None else ResequenceStats()
    stops = list(route.stops)
    if len(stops) <= 2:
        return route
    input_cost = route_cost(stops, costs)

    cached = cache.get(stops)
    if cached is not None:
        if cached.cost <= input_cost:
            return Route(stops=cached.order, load=route.load, cost=cached.cost)
        cache.put(stops, input_cost)
        return route

    order = None
    if solver is not None:
        qubo, encoding = build_tsp_qubo([0] + stops, costs, encoding_params.penalty_a, encoding_params.penalty_b)
        stats.solver_calls += 1
        order = _decode_best(solver(qubo), encoding)
        if order is None:
            stats.fallbacks += 1
            logger.warning("Ни один сэмпл не декодируется в перестановку для маршрута из %d остановок", len(stops))
    if order is None and len(stops) <= BRUTE_FORCE_LIMIT:
        order, _ = brute_force_tsp([0] + stops, costs)
    if order is None:
        order = stops

    new_cost = route_cost(order, costs)
    if new_cost <= input_cost:
        if new_cost < input_cost - 1e-9:
            stats.improvements += 1
        cache.put(order, new_cost)
        return Route(stops=tuple(order), load=route.load, cost=new_cost)
    cache.put(stops, input_cost)
    return route


# ============================================================================
# УДАЛЕННЫЙ СЭМПЛЕР
# ============================================================================

def remote_sample(qubo: Qubo, endpoint: str, params: AnnealParams, timeout: float = 30.0) -> List[Sample]:
    """
    POST {num_vars, linear, quadratic, offset, num_reads} -> {samples: [...]}.

    Энергии ответа пересчитываются локально; расхождение больше 1e-6
    отклоняет весь ответ.
    """
    if not endpoint:
        raise RemoteSamplerError("адрес удаленного сэмплера не задан (HQTS_SAMPLER_URL)")
    payload = qubo.to_wire()
    payload['num_reads'] = params.num_reads
    try:
        response = requests.post(endpoint, json=payload, timeout=timeout)
        response.raise_for_status()
        body = response.json()
    except requests.RequestException as exc:
        raise RemoteSamplerError(f"удаленный сэмплер недоступен: {exc}") from exc
    except ValueError as exc:
        raise RemoteSamplerError(f"ответ сэмплера не является JSON: {exc}") from exc

    try:
        raw_samples = body['samples']
        samples = []
        for raw in raw_samples:
            assignment = tuple(int(v) for v in raw['assignment'])
            reported = float(raw['energy'])
            occurrences = int(raw.get('occurrences', 1))
            actual = qubo_energy(qubo, assignment)
            if abs(actual - reported) > ENERGY_TOLERANCE:
                raise RemoteSamplerError(
                    f"энергия сэмпла {reported} не совпадает с пересчитанной {actual}"
                )
            samples.append(Sample(assignment=assignment, energy=actual, occurrences=occurrences))
    except (KeyError, TypeError, ValueError, QuboError) as exc:
        raise RemoteSamplerError(f"некорректный ответ сэмплера: {exc}") from exc
    samples.sort(key=lambda s: (s.energy, s.assignment))
    return samples


class Resequencer:
    """
    Кеш, сэмплер и счетчики для пересеквенирования маршрутов одного
    экземпляра. solver: 'sa', 'remote' (при сбое - отжиг) или 'brute'.
    """

    SOLVERS = ('sa', 'remote', 'brute')

    def __init__(self, costs: CostMatrix, solver: str = 'sa', anneal: Optional[AnnealParams] = None,
                 encoding: Optional[EncodingParams] = None, endpoint: Optional[str] = None,
                 timeout: float = 30.0, cache: Optional[ResequenceCache] = None):
        if solver not in self.SOLVERS:
            raise SamplerError(f"неизвестный сэмплер {solver!r}, ожидается один из {self.SOLVERS}")
        self.costs = costs
        self.solver = solver
        self.anneal = anneal or AnnealParams()
        self.encoding = encoding or EncodingParams()
        self.endpoint = endpoint
        self.timeout = timeout
        self.cache = cache if cache is not None else ResequenceCache()
        self.stats = ResequenceStats()

    def sample(self, qubo: Qubo) -> List[Sample]:
        if self.solver == 'remote':
            try:
                return remote_sample(qubo, self.endpoint, self.anneal, timeout=self.timeout)
            except RemoteSamplerError as exc:
                self.stats.remote_failures += 1
                logger.warning("Удаленный сэмплер отклонен, используется отжиг: %s", exc)
        return simulated_anneal(qubo, self.anneal)

    def __call__(self, route: Route) -> Route:
        solver = None if self.solver == 'brute' else self.sample
        return resequence_route(route, self.costs, self.cache, solver, self.encoding, self.stats)
