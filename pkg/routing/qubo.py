"""
QUBO для пересеквенирования маршрута (задача коммивояжера на депо и
остановках маршрута) в кодировке гамильтонова цикла.

Переменная x[i, u] = 1 означает, что узел i посещается u-м по счету.
H = H_A + H_B, где H_A = A * sum_i (1 - sum_u x[i,u])^2 + A * sum_u (1 - sum_i x[i,u])^2
штрафует нарушения перестановки, а H_B = B * sum_{i!=j} c(i,j) * sum_u x[i,u] x[j,u+1]
равна стоимости цикла (позиции циклические: N+1 == 1). Граф полный,
поэтому слагаемое для отсутствующих ребер не нужно.
"""
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import PermutationError, QuboError
from .instance import CostMatrix


@dataclass(frozen=True)
class Qubo:
    """Верхнетреугольная карта коэффициентов (i <= j) и константа"""
    num_vars: int
    coefficients: Dict[Tuple[int, int], float]
    offset: float = 0.0
    _arrays: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.num_vars < 0:
            raise QuboError(f"число переменных не может быть отрицательным: {self.num_vars}")
        for (i, j) in self.coefficients:
            if i > j:
                raise QuboError(f"ключ ({i}, {j}) нарушает порядок i <= j")
            if i < 0 or j >= self.num_vars:
                raise QuboError(f"ключ ({i}, {j}) вне диапазона 0..{self.num_vars - 1}")

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, cols, values) в порядке сортировки ключей"""
        if self._arrays is None:
            keys = sorted(self.coefficients)
            rows = np.array([k[0] for k in keys], dtype=np.int64)
            cols = np.array([k[1] for k in keys], dtype=np.int64)
            values = np.array([self.coefficients[k] for k in keys], dtype=float)
            object.__setattr__(self, '_arrays', (rows, cols, values))
        return self._arrays

    def dense(self) -> Tuple[np.ndarray, np.ndarray]:
        """Линейные коэффициенты и симметричная матрица связей с нулевой диагональю"""
        rows, cols, values = self.arrays()
        linear = np.zeros(self.num_vars)
        coupling = np.zeros((self.num_vars, self.num_vars))
        diagonal = rows == cols
        np.add.at(linear, rows[diagonal], values[diagonal])
        off = ~diagonal
        np.add.at(coupling, (rows[off], cols[off]), values[off])
        np.add.at(coupling, (cols[off], rows[off]), values[off])
        return linear, coupling

    def max_abs_coefficient(self) -> float:
        if not self.coefficients:
            return 0.0
        return max(abs(v) for v in self.coefficients.values())

    def to_wire(self) -> dict:
        """Представление для удаленного сэмплера"""
        linear = {}
        quadratic = {}
        for (i, j), value in sorted(self.coefficients.items()):
            if i == j:
                linear[str(i)] = value
            else:
                quadratic[f"{i},{j}"] = value
        return {'num_vars': self.num_vars, 'linear': linear, 'quadratic': quadratic, 'offset': self.offset}

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), sort_keys=True)

    @classmethod
    def from_wire(cls, payload: dict) -> 'Qubo':
        try:
            coefficients = {(int(i), int(i)): float(v) for i, v in payload.get('linear', {}).items()}
            for key, value in payload.get('quadratic', {}).items():
                i, j = (int(part) for part in key.split(','))
                if i > j:
                    i, j = j, i
                coefficients[(i, j)] = coefficients.get((i, j), 0.0) + float(value)
            return cls(num_vars=int(payload['num_vars']), coefficients=coefficients,
                       offset=float(payload.get('offset', 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise QuboError(f"некорректное представление QUBO: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> 'Qubo':
        return cls.from_wire(json.loads(text))


@dataclass(frozen=True)
class EncodingParams:
    """Штрафы кодировки: A (None - 2 * max c по узлам маршрута) и B"""
    penalty_a: Optional[float] = None
    penalty_b: float = 1.0


@dataclass(frozen=True)
class RouteEncoding:
    """Соответствие (слот узла, позиция) <-> индекс переменной"""
    nodes: Tuple[int, ...]
    penalty_a: float
    penalty_b: float

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def num_vars(self) -> int:
        return self.N * self.N

    def var_index(self, slot: int, position: int) -> int:
        """Позиции нумеруются с 1 и замыкаются: N+1 == 1"""
        n = self.N
        position = (position - 1) % n + 1
        return slot * n + (position - 1)


def default_penalty_a(route_nodes: Sequence[int], costs: CostMatrix) -> float:
    largest = costs.max_cost(route_nodes)
    # Совпадающие точки дают нулевые стоимости; штраф все равно должен быть положительным
    return 2.0 * largest if largest > 0 else 1.0


def build_tsp_qubo(route_nodes: Sequence[int], costs: CostMatrix, penalty_a: Optional[float] = None,
                   penalty_b: float = 1.0) -> Tuple[Qubo, RouteEncoding]:
    """
    Строит QUBO цикла по узлам route_nodes (депо первым).

    Возвращает QUBO на N^2 переменных и кодировку. Константа 2AN хранится
    в offset, поэтому энергия любой перестановки равна B * стоимость цикла.
    """
    nodes = tuple(int(node) for node in route_nodes)
    n = len(nodes)
    if n < 2:
        raise QuboError(f"для цикла нужно минимум 2 узла, получено {n}")
    if len(set(nodes)) != n:
        raise QuboError(f"узлы маршрута должны быть различны: {nodes}")
    a = default_penalty_a(nodes, costs) if penalty_a is None else float(penalty_a)
    if a <= 0:
        raise QuboError(f"штраф A должен быть положительным, получено {a}")
    b = float(penalty_b)
    if b < 0:
        raise QuboError(f"вес B не может быть отрицательным, получено {b}")

    encoding = RouteEncoding(nodes=nodes, penalty_a=a, penalty_b=b)
    coefficients: Dict[Tuple[int, int], float] = {}

    def add(i: int, j: int, value: float) -> None:
        key = (i, j) if i <= j else (j, i)
        coefficients[key] = coefficients.get(key, 0.0) + value

    # H_A: (1 - sum x)^2 = 1 - sum x + 2 sum_{a<b} x_a x_b для каждой строки и каждого столбца
    for slot in range(n):
        for u in range(1, n + 1):
            add(encoding.var_index(slot, u), encoding.var_index(slot, u), -2.0 * a)
    for slot in range(n):
        for u in range(1, n + 1):
            for v in range(u + 1, n + 1):
                add(encoding.var_index(slot, u), encoding.var_index(slot, v), 2.0 * a)
    for u in range(1, n + 1):
        for i in range(n):
            for j in range(i + 1, n):
                add(encoding.var_index(i, u), encoding.var_index(j, u), 2.0 * a)

    # H_B: ребро из позиции u в позицию u+1
    rows = costs.rows
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            weight = b * rows[nodes[i]][nodes[j]]
            if weight == 0:
                continue
            for u in range(1, n + 1):
                add(encoding.var_index(i, u), encoding.var_index(j, u + 1), weight)

    qubo = Qubo(num_vars=n * n, coefficients=coefficients, offset=2.0 * a * n)
    return qubo, encoding


def qubo_energy(qubo: Qubo, assignment: Sequence[int]) -> float:
    """offset + sum q_ii x_i + sum_{i<j} q_ij x_i x_j"""
    x = np.asarray(assignment, dtype=float).ravel()
    if x.shape[0] != qubo.num_vars:
        raise QuboError(f"длина присваивания {x.shape[0]} не совпадает с числом переменных {qubo.num_vars}")
    if np.any((x != 0) & (x != 1)):
        raise QuboError("присваивание должно состоять из 0 и 1")
    if not qubo.coefficients:
        return float(qubo.offset)
    rows, cols, values = qubo.arrays()
    return float(qubo.offset + np.sum(values * x[rows] * x[cols]))


def decode_assignment(encoding: RouteEncoding, assignment: Sequence[int]) -> List[int]:
    """
    Переводит матрицу перестановки в порядок остановок.

    Цикл поворачивается так, чтобы депо (первый узел кодировки) стояло
    первым, затем депо отбрасывается.
    """
    n = encoding.N
    x = np.asarray(assignment, dtype=int).ravel()
    if x.shape[0] != n * n:
        raise QuboError(f"длина присваивания {x.shape[0]} не равна N^2 = {n * n}")
    matrix = x.reshape(n, n)
    bad_rows = [int(i) for i in np.flatnonzero(matrix.sum(axis=1) != 1)]
    bad_columns = [int(u) + 1 for u in np.flatnonzero(matrix.sum(axis=0) != 1)]
    if bad_rows or bad_columns:
        raise PermutationError(bad_rows, bad_columns)
    slot_at = [int(s) for s in np.argmax(matrix, axis=0)]
    start = slot_at.index(0)
    cycle = slot_at[start:] + slot_at[:start]
    return [encoding.nodes[slot] for slot in cycle[1:]]


def encode_tour(encoding: RouteEncoding, stop_order: Sequence[int]) -> np.ndarray:
    """Присваивание для порядка остановок (депо на позиции 1)"""
    tour = [encoding.nodes[0]] + [int(s) for s in stop_order]
    if sorted(tour) != sorted(encoding.nodes):
        raise QuboError(f"порядок {list(stop_order)} не является перестановкой остановок {encoding.nodes[1:]}")
    slot_of = {node: slot for slot, node in enumerate(encoding.nodes)}
    x = np.zeros(encoding.num_vars, dtype=np.int8)
    for position, node in enumerate(tour, start=1):
        x[encoding.var_index(slot_of[node], position)] = 1
    return x
