import csv
import io
import itertools
import json
import math
import os
import tempfile
from pathlib import Path
from unittest import mock, skipUnless

import numpy as np
import requests
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from . import conf
from .bench import (
    REPORT_COLUMNS, BenchReport, InstanceRow, RunConfig, deviation, emit_deviation_summary,
    published_report, run_benchmark,
)
from .construct import build_seeded_solution, clarke_wright, saving
from .exceptions import (
    ConfigError, ConstructionError, EmptyNeighborhoodError, InstanceError, InstanceParseError,
    InstanceValidationError, PermutationError, PlotError, QuboError, RemoteSamplerError, SamplerError,
    StaleMoveError,
)
from .forms import RunConfigForm
from .instance import (
    CostMatrix, CvrpInstance, InstanceFormat, Location, euclidean_costs, load_instance, lookup_bks,
    nearest_neighbors, parse_instance, registry_key, serialize_instance,
)
from .models import BenchmarkRun, InstanceResult
from .plotting import count_crossings, render_routes_png, render_routes_svg, segments_cross
from .qubo import (
    Qubo, build_tsp_qubo, decode_assignment, encode_tour, qubo_energy,
)
from .sampler import (
    AnnealParams, Resequencer, ResequenceCache, ResequenceStats, Sample, _decode_best, _reverse_columns,
    _sparse_problem, _swap_columns, brute_force_tsp, default_beta_range, remote_sample, resequence_route,
    simulated_anneal,
)
from .solution import (
    Move, MoveKind, Route, Solution, ViolationKind, apply_move, check_feasibility, inter_swap_move,
    infeasibility_measure, intra_swap_move, relocate_move, route_cost, solution_cost, solution_from_document,
    solution_to_document,
)
from .tabu import (
    Phase, SearchParams, SearchState, SearchStats, Stage, TabuList, TrajectoryPoint, draw_threshold,
    generate_neighborhood, intensify_diversify, maybe_resequence, run_search, select_candidate_basic,
    select_candidate_so, update_tabu, write_trajectory_csv,
)


TINY_VRP = """NAME : tiny6
TYPE : CVRP
DIMENSION : 7
CAPACITY : 10
EDGE_WEIGHT_TYPE : EUC_2D
NODE_COORD_SECTION
1 0 0
2 0 10
3 10 10
4 10 0
5 -10 0
6 -10 -10
7 0 -10
DEMAND_SECTION
1 0
2 4
3 4
4 4
5 3
6 3
7 3
DEPOT_SECTION
1
-1
EOF
"""

MATRIX_VRP = """NAME : m3
TYPE : CVRP
DIMENSION : 3
CAPACITY : 5
EDGE_WEIGHT_TYPE : EXPLICIT
EDGE_WEIGHT_FORMAT : FULL_MATRIX
EDGE_WEIGHT_SECTION
0 4 5
4 0 3
5 3 0
DEMAND_SECTION
1 2
2 0
3 2
DEPOT_SECTION
2
-1
EOF
"""

RUN_BENCHMARKS = os.environ.get('HQTS_RUN_BENCHMARKS') == '1'


def make_instance(points, demands, capacity, name='generated', fleet_size=None):
    """Экземпляр из координат; первая точка - депо"""
    locations = tuple(
        Location(id=index, x=float(x), y=float(y), demand=float(demand))
        for index, ((x, y), demand) in enumerate(zip(points, demands))
    )
    if fleet_size is None:
        fleet_size = max(1, math.ceil(sum(demands) / capacity))
    return CvrpInstance(
        name=name, locations=locations, costs=euclidean_costs(locations),
        capacity=float(capacity), fleet_size=fleet_size,
    )


def random_instance(seed, customers=6, capacity=10):
    rng = np.random.default_rng(seed)
    points = [(50, 50)] + [tuple(p) for p in rng.integers(0, 101, size=(customers, 2))]
    demands = [0] + [int(d) for d in rng.integers(1, 6, size=customers)]
    return make_instance(points, demands, capacity, name=f'random{seed}')


def tiny_instance():
    return parse_instance(TINY_VRP)


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        for index in range(len(partition)):
            yield partition[:index] + [[first] + partition[index]] + partition[index + 1:]
        yield [[first]] + partition


def exact_cvrp_cost(instance, fleet):
    """Точный оптимум перебором разбиений (для экземпляров до 7 клиентов)"""
    block_cost = {}
    best = math.inf
    for partition in set_partitions(list(instance.customers)):
        if len(partition) > fleet:
            continue
        if any(sum(instance.demand(c) for c in block) > instance.capacity for block in partition):
            continue
        total = 0.0
        for block in partition:
            key = frozenset(block)
            if key not in block_cost:
                block_cost[key] = brute_force_tsp([0] + block, instance.costs)[1]
            total += block_cost[key]
        best = min(best, total)
    return best


def plain_solution(stops, load, cost, capacity=10.0):
    """Решение из одного маршрута с заданными загрузкой и стоимостью"""
    return Solution(routes=(Route(tuple(stops), float(load), float(cost)),), capacity=capacity)


def search_state(current, global_best=None, k=1, customers=6):
    return SearchState(
        current=current, global_best=global_best or current, neighbor_k=k, base_k=k, num_customers=customers,
    )


# ============================================================================
# ЭКЗЕМПЛЯРЫ - РАЗБОР И ПРОВЕРКИ
# ============================================================================

class InstanceParseTest(SimpleTestCase):
    """Тесты разбора файлов экземпляров"""

    def test_parse_coordinates(self):
        """Тест разбора экземпляра с координатами"""
        instance = tiny_instance()
        self.assertEqual(instance.name, 'tiny6')
        self.assertEqual(instance.n, 7)
        self.assertEqual(instance.num_customers, 6)
        self.assertEqual(instance.capacity, 10)
        self.assertEqual(instance.format, InstanceFormat.COORD)
        self.assertEqual(instance.file_ids, (1, 2, 3, 4, 5, 6, 7))
        self.assertAlmostEqual(instance.costs(0, 1), 10.0)
        self.assertAlmostEqual(instance.costs(1, 2), 10.0)
        self.assertAlmostEqual(instance.costs(2, 5), math.hypot(20, 10))
        self.assertEqual(instance.total_demand, 21)

    def test_fleet_defaults_without_vehicles(self):
        """Тест парка по умолчанию без VEHICLES и без BKS"""
        instance = tiny_instance()
        self.assertIsNone(instance.bks)
        self.assertEqual(instance.min_vehicles, 3)
        self.assertEqual(instance.fleet_size, 3)
        self.assertEqual(instance.default_fleet(), 4)
        self.assertEqual(instance.neighbor_count(), 3)

    def test_depot_moved_to_internal_zero(self):
        """Тест переноса депо на внутренний id 0"""
        instance = parse_instance(MATRIX_VRP)
        self.assertEqual(instance.file_ids, (2, 1, 3))
        self.assertEqual(instance.demand(0), 0)
        self.assertEqual(instance.internal_id(3), 2)
        self.assertEqual(instance.costs(0, 1), 4)
        self.assertEqual(instance.costs(0, 2), 3)
        self.assertEqual(instance.costs(1, 2), 5)
        self.assertEqual(instance.format, InstanceFormat.EXPLICIT_MATRIX)
        self.assertFalse(instance.has_coordinates)

    def test_parse_from_stream(self):
        """Тест разбора из текстового потока"""
        instance = parse_instance(io.StringIO(TINY_VRP))
        self.assertEqual(instance.num_customers, 6)

    def test_bad_number_reports_line(self):
        """Тест номера строки в ошибке разбора"""
        text = TINY_VRP.replace('2 0 10', '2 zero 10')
        with self.assertRaises(InstanceParseError) as ctx:
            parse_instance(text)
        self.assertEqual(ctx.exception.line, 8)
        self.assertIn('строка 8', str(ctx.exception))

    def test_missing_capacity(self):
        """Тест отсутствия обязательного ключа CAPACITY: строка конца файла"""
        with self.assertRaises(InstanceParseError) as ctx:
            parse_instance(TINY_VRP.replace('CAPACITY : 10\n', ''))
        self.assertEqual(ctx.exception.line, 24)

    def test_demand_section_size(self):
        """Тест неполной DEMAND_SECTION: строка заголовка секции"""
        with self.assertRaises(InstanceParseError) as ctx:
            parse_instance(TINY_VRP.replace('7 3\nDEPOT_SECTION', 'DEPOT_SECTION'))
        self.assertEqual(ctx.exception.line, 14)

    def test_node_sets_differ(self):
        """Тест несовпадения узлов координат и спроса"""
        with self.assertRaises(InstanceParseError) as ctx:
            parse_instance(TINY_VRP.replace('7 0 -10', '8 0 -10'))
        self.assertEqual(ctx.exception.line, 6)

    def test_unknown_depot(self):
        """Тест депо вне списка узлов"""
        with self.assertRaises(InstanceParseError) as ctx:
            parse_instance(TINY_VRP.replace('DEPOT_SECTION\n1\n', 'DEPOT_SECTION\n9\n'))
        self.assertEqual(ctx.exception.line, 22)

    def test_too_small_dimension(self):
        """Тест экземпляра без клиентов"""
        with self.assertRaises(InstanceParseError) as ctx:
            parse_instance("NAME : solo\nDIMENSION : 1\nCAPACITY : 5\nNODE_COORD_SECTION\n1 0 0\n"
                           "DEMAND_SECTION\n1 0\nEOF\n")
        self.assertEqual(ctx.exception.line, 2)

    def test_non_utf8_file(self):
        """Тест файла не в UTF-8: ошибка экземпляра с номером строки"""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'garbled.vrp'
            path.write_bytes(b'NAME : garbled\n\xff\xfe\n')
            with self.assertRaises(InstanceParseError) as ctx:
                load_instance(path)
        self.assertEqual(ctx.exception.line, 2)
        self.assertIsInstance(ctx.exception, InstanceError)

    def test_asymmetric_matrix(self):
        """Тест отклонения несимметричной матрицы"""
        with self.assertRaises(InstanceValidationError):
            parse_instance(MATRIX_VRP.replace('0 4 5\n', '0 4 6\n'))

    def test_demand_above_capacity(self):
        """Тест отклонения клиента со спросом больше вместимости"""
        with self.assertRaises(InstanceValidationError):
            parse_instance(TINY_VRP.replace('3 4\n4 4', '3 11\n4 4'))

    def test_unknown_keyword(self):
        """Тест неизвестного ключевого слова"""
        with self.assertRaises(InstanceParseError):
            parse_instance(TINY_VRP.replace('TYPE : CVRP', 'TYPE : CVRP\nFOO BAR'))

    def test_format_mismatch(self):
        """Тест явного формата, не совпадающего с файлом"""
        with self.assertRaises(InstanceParseError) as ctx:
            parse_instance(TINY_VRP, format=InstanceFormat.EXPLICIT_MATRIX)
        self.assertEqual(ctx.exception.line, 5)

    def test_serialize_and_parse_again(self):
        """Тест записи экземпляра обратно в грамматику"""
        for text in (TINY_VRP, MATRIX_VRP):
            instance = parse_instance(text)
            again = parse_instance(serialize_instance(instance))
            self.assertEqual(again.costs, instance.costs)
            self.assertEqual(again.file_ids, instance.file_ids)
            self.assertTrue(np.array_equal(again.demands, instance.demands))
            self.assertEqual(again.capacity, instance.capacity)

    def test_registry(self):
        """Тест реестра лучших известных решений"""
        self.assertEqual(registry_key('vrpnc1'), 'CMT1')
        self.assertEqual(registry_key('cmt-12'), 'CMT12')
        self.assertEqual(lookup_bks('CMT1').distance, 524.61)
        self.assertEqual(lookup_bks('CMT1').vehicles, 5)
        self.assertIsNone(lookup_bks('tiny6'))

    def test_load_cmt1(self):
        """Тест загрузки CMT1 из каталога данных"""
        instance = load_instance(settings.HQTS_DATA_DIR / 'CMT1.vrp')
        self.assertEqual(instance.num_customers, 50)
        self.assertEqual(instance.capacity, 160)
        self.assertEqual(instance.total_demand, 777)
        self.assertEqual(instance.bks.distance, 524.61)
        self.assertEqual(instance.fleet_size, 5)
        self.assertEqual(instance.default_fleet(), 6)
        self.assertEqual(instance.neighbor_count(), 5)

    def test_load_missing_file(self):
        """Тест отсутствующего файла"""
        with self.assertRaises(InstanceError):
            load_instance('/nonexistent/instance.vrp')


class NeighborListTest(SimpleTestCase):
    """Тесты списков ближайших соседей"""

    def test_neighbors_sorted_with_id_tiebreak(self):
        """Тест порядка соседей и разрешения равенства по id"""
        instance = tiny_instance()
        neighbors = nearest_neighbors(instance, 3)
        # Клиент 4 (-10, 0): 5 на расстоянии 10, затем 1 и 6 на равном расстоянии
        self.assertEqual(neighbors[4], (5, 1, 6))
        self.assertNotIn(0, neighbors[4])
        self.assertNotIn(4, neighbors[4])

    def test_k_truncated_to_available(self):
        """Тест ограничения k числом клиентов"""
        instance = tiny_instance()
        neighbors = nearest_neighbors(instance, 50)
        self.assertEqual(len(neighbors[1]), 5)
        self.assertEqual(len(neighbors[0]), 6)

    def test_invalid_k(self):
        """Тест недопустимого k"""
        with self.assertRaises(ValueError):
            nearest_neighbors(tiny_instance(), 0)

    def test_any_neighbor_excluding_partner(self):
        """Тест проверки соседа в маршруте с исключением партнера"""
        neighbors = nearest_neighbors(tiny_instance(), 1)
        partner = neighbors[1][0]
        self.assertTrue(neighbors.any_neighbor_in(1, [partner, 6]))
        self.assertFalse(neighbors.any_neighbor_in(1, [partner, 6], exclude=partner))


# ============================================================================
# РЕШЕНИЯ И ХОДЫ
# ============================================================================

class SolutionTest(SimpleTestCase):
    """Тесты модели решения"""

    def setUp(self):
        self.instance = tiny_instance()

    def test_route_cost(self):
        """Тест стоимости маршрута"""
        c = self.instance.costs
        self.assertEqual(route_cost([], c), 0.0)
        self.assertAlmostEqual(route_cost([1], c), 2 * c(0, 1))
        self.assertAlmostEqual(route_cost([1, 2, 3], c), 40.0)

    def test_solution_totals(self):
        """Тест суммарной стоимости, загрузки и числа машин"""
        solution = Solution.from_stop_lists([[1, 2], [3], [4, 5, 6]], self.instance, fleet=4)
        self.assertEqual(solution.fleet, 4)
        self.assertEqual(solution.vehicles_used, 3)
        self.assertAlmostEqual(solution.total_cost, solution.recomputed_cost(self.instance))
        self.assertEqual(solution.routes[2].load, 9)
        self.assertTrue(solution.feasible)
        self.assertEqual(solution.infeasibility, 0.0)

    def test_cost_and_infeasibility_measure(self):
        """Тест пересчета стоимости и меры недопустимости"""
        feasible = Solution.from_stop_lists([[1, 2], [3, 4], [5, 6]], self.instance)
        self.assertAlmostEqual(solution_cost(feasible, self.instance), feasible.total_cost, places=9)
        self.assertEqual(infeasibility_measure(feasible, self.instance), 0.0)

        overloaded = Solution.from_stop_lists([[1, 2, 3], [4, 5, 6]], self.instance)
        heavier = Solution.from_stop_lists([[1, 2, 3, 4], [5, 6]], self.instance)
        self.assertEqual(infeasibility_measure(overloaded, self.instance), 2.0)
        self.assertEqual(infeasibility_measure(heavier, self.instance), 5.0)
        self.assertEqual(infeasibility_measure(heavier, self.instance), heavier.infeasibility)

    def test_reversed_route_costs_the_same(self):
        """Тест: обход маршрута в обратную сторону стоит столько же"""
        instance = random_instance(11, customers=9)
        rng = np.random.default_rng(5)
        for _ in range(50):
            order = [int(s) for s in rng.permutation(list(instance.customers))[:int(rng.integers(1, 10))]]
            self.assertAlmostEqual(route_cost(order[::-1], instance.costs), route_cost(order, instance.costs), places=9)

    def test_euclidean_triangle_inequality(self):
        """Тест неравенства треугольника для евклидовой матрицы"""
        rng = np.random.default_rng(17)
        points = rng.uniform(-100, 100, size=(25, 2))
        locations = [Location(id=i, x=float(x), y=float(y), demand=0.0) for i, (x, y) in enumerate(points)]
        c = euclidean_costs(locations).entries
        through = c[:, :, None] + c[None, :, :]
        self.assertTrue(np.all(c[:, None, :] <= through + 1e-9))

    def test_feasibility_violations(self):
        """Тест нарушений покрытия и вместимости"""
        solution = Solution.from_stop_lists([[1, 2, 3], [4, 4]], self.instance)
        report = check_feasibility(solution, self.instance)
        self.assertFalse(report.feasible)
        self.assertEqual(len(report.of_kind(ViolationKind.CAPACITY)), 1)
        coverage = report.of_kind(ViolationKind.COVERAGE)
        self.assertEqual({v.customer for v in coverage}, {4, 5, 6})
        self.assertEqual(solution.infeasibility, 2.0)

    def test_fleet_violation(self):
        """Тест превышения парка"""
        solution = Solution.from_stop_lists([[1, 2], [3, 4], [5, 6]], self.instance)
        report = check_feasibility(solution, self.instance, fleet=2)
        self.assertEqual(len(report.of_kind(ViolationKind.FLEET)), 1)

    def test_document(self):
        """Тест документа решения в пространстве id файла"""
        solution = Solution.from_stop_lists([[1, 2], [3, 4], [5, 6]], self.instance, fleet=4)
        document = solution_to_document(solution, self.instance, seed=7)
        self.assertEqual(document['routes'], [[2, 3], [4, 5], [6, 7]])
        self.assertTrue(document['feasible'])
        self.assertEqual(document['seed'], 7)
        self.assertNotIn('wallclock_seconds', document)
        restored = solution_from_document(json.loads(json.dumps(document)), self.instance)
        self.assertAlmostEqual(restored.total_cost, solution.total_cost)
        self.assertEqual(restored.vehicles_used, 3)


class MoveTest(SimpleTestCase):
    """Тесты ходов и их применения"""

    def setUp(self):
        self.instance = tiny_instance()
        self.solution = Solution.from_stop_lists([[1, 6], [2, 4], [3, 5]], self.instance, fleet=4)

    def assertConsistent(self, before, move, after):
        self.assertAlmostEqual(after.total_cost, before.total_cost + move.delta_cost, places=9)
        self.assertAlmostEqual(after.total_cost, after.recomputed_cost(self.instance), places=9)
        self.assertAlmostEqual(after.infeasibility, before.infeasibility + move.delta_infeasibility, places=9)
        self.assertEqual(after.feasible, move.feasible_after)
        coverage = check_feasibility(after, self.instance).of_kind(ViolationKind.COVERAGE)
        self.assertEqual(coverage, ())

    def test_relocate(self):
        """Тест перемещения (1,0) с дешевейшей вставкой"""
        move = relocate_move(self.solution, self.instance, 0, 1, 2)
        self.assertEqual(move.kind, MoveKind.RELOCATE)
        self.assertEqual(move.customer, 6)
        after = apply_move(self.solution, move, self.instance)
        self.assertConsistent(self.solution, move, after)
        self.assertEqual(after.routes[0].stops, (1,))
        self.assertIn(6, after.routes[2].stops)

    def test_relocate_empties_route(self):
        """Тест перемещения последнего клиента маршрута"""
        solution = Solution.from_stop_lists([[1], [2, 3]], self.instance)
        move = relocate_move(solution, self.instance, 0, 0, 1)
        after = apply_move(solution, move, self.instance)
        self.assertTrue(after.routes[0].is_empty)
        self.assertEqual(after.routes[0].cost, 0.0)
        self.assertEqual(after.vehicles_used, 1)

    def test_intra_swap(self):
        """Тест перестановки (0,1) соседних и несоседних остановок"""
        solution = Solution.from_stop_lists([[1, 3, 2, 4], [5, 6]], self.instance)
        for p, q in ((0, 1), (1, 2), (0, 3), (0, 2)):
            move = intra_swap_move(solution, self.instance, 0, p, q)
            after = apply_move(solution, move, self.instance)
            self.assertConsistent(solution, move, after)

    def test_inter_swap(self):
        """Тест обмена (1,1) между маршрутами"""
        move = inter_swap_move(self.solution, self.instance, 1, 1, 2, 0)
        self.assertEqual((move.customer, move.partner), (4, 3))
        after = apply_move(self.solution, move, self.instance)
        self.assertConsistent(self.solution, move, after)
        self.assertEqual(after.routes[1].stops, (2, 3))
        self.assertEqual(after.routes[2].stops, (4, 5))
        self.assertLess(move.delta_cost, -20)

    def test_inverse_restores_solution(self):
        """Тест обратного хода"""
        moves = [
            relocate_move(self.solution, self.instance, 0, 1, 2),
            intra_swap_move(self.solution, self.instance, 1, 0, 1),
            inter_swap_move(self.solution, self.instance, 1, 1, 2, 0),
        ]
        for move in moves:
            after = apply_move(self.solution, move, self.instance)
            restored = apply_move(after, move.inverse(), self.instance)
            self.assertEqual(restored.stop_lists(), self.solution.stop_lists())
            self.assertAlmostEqual(restored.total_cost, self.solution.total_cost, places=9)

    def test_incremental_cost_over_random_moves(self):
        """Тест: стоимость по приращениям совпадает с пересчетом на 1000 случайных ходах"""
        instance = random_instance(23, customers=12, capacity=15)
        customers = list(instance.customers)
        solution = Solution.from_stop_lists([customers[i::4] for i in range(4)], instance)
        rng = np.random.default_rng(8)
        tracked = solution.total_cost
        applied = 0
        while applied < 1000:
            loaded = [r for r, route in enumerate(solution.routes) if route.stops]
            kind = int(rng.integers(3))
            if kind == 0:
                origin = int(rng.choice(loaded))
                dest = int(rng.choice([r for r in range(len(solution.routes)) if r != origin]))
                pos = int(rng.integers(len(solution.routes[origin].stops)))
                move = relocate_move(solution, instance, origin, pos, dest)
            elif kind == 1:
                long_routes = [r for r in loaded if len(solution.routes[r].stops) >= 2]
                if not long_routes:
                    continue
                route = int(rng.choice(long_routes))
                p, q = (int(v) for v in rng.choice(len(solution.routes[route].stops), size=2, replace=False))
                move = intra_swap_move(solution, instance, route, p, q)
            else:
                if len(loaded) < 2:
                    continue
                origin, dest = (int(v) for v in rng.choice(loaded, size=2, replace=False))
                move = inter_swap_move(
                    solution, instance, origin, int(rng.integers(len(solution.routes[origin].stops))),
                    dest, int(rng.integers(len(solution.routes[dest].stops))),
                )
            solution = apply_move(solution, move, instance)
            tracked += move.delta_cost
            applied += 1
            recomputed = solution_cost(solution, instance)
            tolerance = 1e-9 * max(1.0, recomputed)
            self.assertLessEqual(abs(solution.total_cost - recomputed), tolerance)
            self.assertLessEqual(abs(tracked - recomputed), tolerance * applied)
            self.assertAlmostEqual(solution.infeasibility, infeasibility_measure(solution, instance), places=9)

    def test_infeasible_move_flags(self):
        """Тест флага допустимости после хода"""
        move = relocate_move(self.solution, self.instance, 0, 0, 1)
        self.assertFalse(move.feasible_after)
        self.assertAlmostEqual(move.delta_infeasibility, 1.0)

    def test_stale_move(self):
        """Тест хода, ссылающегося на устаревшую позицию"""
        move = relocate_move(self.solution, self.instance, 0, 1, 2)
        after = apply_move(self.solution, move, self.instance)
        with self.assertRaises(StaleMoveError):
            apply_move(after, move, self.instance)

    def test_displaced_and_arrivals(self):
        """Тест атрибутов табу хода"""
        move = inter_swap_move(self.solution, self.instance, 1, 1, 2, 0)
        self.assertEqual(move.displaced(), ((4, 1), (3, 2)))
        self.assertEqual(move.arrivals(), ((4, 2), (3, 1)))


# ============================================================================
# НАЧАЛЬНЫЕ РЕШЕНИЯ
# ============================================================================

class ConstructionTest(SimpleTestCase):
    """Тесты построителей начальных решений"""

    def test_seeded_solution_covers_everything(self):
        """Тест покрытия и допустимости стартового решения"""
        instance = tiny_instance()
        neighbors = nearest_neighbors(instance, instance.neighbor_count())
        solution = build_seeded_solution(instance, neighbors, 4, rng_seed=3)
        self.assertEqual(solution.fleet, 4)
        self.assertTrue(check_feasibility(solution, instance).feasible)

    def test_seeded_solution_deterministic(self):
        """Тест воспроизводимости при одном seed"""
        instance = random_instance(11, customers=7)
        neighbors = nearest_neighbors(instance, 2)
        first = build_seeded_solution(instance, neighbors, instance.default_fleet(), rng_seed=5)
        second = build_seeded_solution(instance, neighbors, instance.default_fleet(), rng_seed=5)
        self.assertEqual(first.stop_lists(), second.stop_lists())

    def test_fleet_too_small(self):
        """Тест ошибки при парке меньше минимального"""
        instance = tiny_instance()
        with self.assertRaises(ConstructionError):
            build_seeded_solution(instance, nearest_neighbors(instance, 3), 2)

    def test_saving(self):
        """Тест величины сбережения"""
        instance = tiny_instance()
        self.assertAlmostEqual(saving(instance, 1, 2), 10 + math.hypot(10, 10) - 10)

    def test_clarke_wright_merges(self):
        """Тест слияния близких клиентов в один маршрут"""
        instance = make_instance([(0, 0), (10, 0), (11, 0), (-10, 0)], [0, 1, 1, 1], 2)
        solution = clarke_wright(instance, fleet=2)
        self.assertEqual(solution.vehicles_used, 2)
        self.assertIn((1, 2), {tuple(sorted(route.stops)) for route in solution.routes})
        self.assertTrue(check_feasibility(solution, instance).feasible)

    def test_clarke_wright_fleet_overflow_flagged(self):
        """Тест: превышение заданного парка отмечается нарушением"""
        instance = tiny_instance()
        solution = clarke_wright(instance, fleet=2)
        self.assertGreaterEqual(solution.vehicles_used, 3)
        self.assertEqual(solution.fleet_limit, 2)
        report = check_feasibility(solution, instance)
        self.assertFalse(report.feasible)
        self.assertEqual(len(report.of_kind(ViolationKind.FLEET)), 1)
        self.assertFalse(solution_to_document(solution, instance)['feasible'])
        self.assertTrue(check_feasibility(solution, instance, fleet=solution.vehicles_used).feasible)

    def test_clarke_wright_cmt1(self):
        """Тест Кларка-Райта на CMT1 (около 585)"""
        instance = load_instance(settings.HQTS_DATA_DIR / 'CMT1.vrp')
        solution = clarke_wright(instance, instance.default_fleet())
        self.assertGreaterEqual(solution.total_cost, 585 * 0.97)
        self.assertLessEqual(solution.total_cost, 585 * 1.03)
        self.assertEqual(check_feasibility(solution, instance).of_kind(ViolationKind.COVERAGE), ())
        self.assertEqual(check_feasibility(solution, instance).of_kind(ViolationKind.CAPACITY), ())


# ============================================================================
# QUBO
# ============================================================================

class QuboTest(SimpleTestCase):
    """Тесты построения QUBO и декодирования"""

    def setUp(self):
        # Единичный квадрат: депо и три остановки, оптимальный цикл 4.0
        self.square = make_instance([(0, 0), (0, 1), (1, 1), (1, 0)], [0, 1, 1, 1], 10)

    def test_variable_count(self):
        """Тест числа переменных N^2 и константы 2AN"""
        qubo, encoding = build_tsp_qubo([0, 1, 2, 3], self.square.costs)
        self.assertEqual(qubo.num_vars, 16)
        self.assertEqual(encoding.N, 4)
        self.assertAlmostEqual(encoding.penalty_a, 2 * math.sqrt(2))
        self.assertAlmostEqual(qubo.offset, 2 * encoding.penalty_a * 4)
        self.assertTrue(all(i <= j for i, j in qubo.coefficients))

    def test_energy_of_permutation_equals_tour_cost(self):
        """Тест равенства энергии перестановки стоимости цикла"""
        instance = random_instance(4, customers=6)
        stops = list(instance.customers)
        qubo, encoding = build_tsp_qubo([0] + stops, instance.costs)
        rng = np.random.default_rng(0)
        for _ in range(200):
            order = [int(s) for s in rng.permutation(stops)]
            energy = qubo_energy(qubo, encode_tour(encoding, order))
            cost = route_cost(order, instance.costs)
            self.assertLessEqual(abs(energy - cost), 1e-9 * max(1.0, cost))

    def test_penalty_b_scales_cost(self):
        """Тест масштабирования стоимости весом B"""
        qubo, encoding = build_tsp_qubo([0, 1, 2, 3], self.square.costs, penalty_b=2.0)
        self.assertAlmostEqual(qubo_energy(qubo, encode_tour(encoding, [1, 2, 3])), 8.0)

    def test_energy_matches_naive_sum(self):
        """Тест энергии произвольного присваивания против прямого суммирования"""
        qubo, _ = build_tsp_qubo([0, 1, 2, 3], self.square.costs)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.integers(0, 2, size=16)
            naive = qubo.offset + sum(value * x[i] * x[j] for (i, j), value in qubo.coefficients.items())
            self.assertAlmostEqual(qubo_energy(qubo, x), naive, places=9)

    def test_ground_state_is_optimal_tour(self):
        """Тест основного состояния: полный перебор 2^16 присваиваний"""
        qubo, encoding = build_tsp_qubo([0, 1, 2, 3], self.square.costs)
        linear, coupling = qubo.dense()
        states = ((np.arange(2 ** 16)[:, None] >> np.arange(16)) & 1).astype(float)
        energies = qubo.offset + states @ linear + 0.5 * np.sum((states @ coupling) * states, axis=1)
        self.assertAlmostEqual(float(energies.min()), 4.0, places=9)
        for index in np.flatnonzero(np.isclose(energies, energies.min())):
            order = decode_assignment(encoding, states[index].astype(int))
            self.assertAlmostEqual(route_cost(order, self.square.costs), 4.0)

    def test_ground_state_matches_brute_force(self):
        """Тест минимума энергии по перестановкам против точного перебора"""
        for seed in range(3):
            instance = random_instance(seed, customers=5)
            stops = list(instance.customers)
            qubo, encoding = build_tsp_qubo([0] + stops, instance.costs)
            best = min(qubo_energy(qubo, encode_tour(encoding, list(p))) for p in itertools.permutations(stops))
            self.assertAlmostEqual(best, brute_force_tsp([0] + stops, instance.costs)[1], places=7)

    def test_all_zero_assignment(self):
        """Тест энергии нулевого присваивания"""
        qubo, _ = build_tsp_qubo([0, 1, 2, 3], self.square.costs)
        self.assertAlmostEqual(qubo_energy(qubo, np.zeros(16)), qubo.offset)

    def test_decode_identity(self):
        """Тест декодирования тождественной перестановки"""
        _, encoding = build_tsp_qubo([0, 5, 7], random_instance(1, customers=7).costs)
        x = np.eye(3, dtype=int).ravel()
        self.assertEqual(decode_assignment(encoding, x), [5, 7])

    def test_decode_rotates_depot_first(self):
        """Тест поворота цикла: депо не на первой позиции"""
        _, encoding = build_tsp_qubo([0, 1, 2, 3], self.square.costs)
        x = np.zeros(16, dtype=int)
        for slot, position in ((2, 1), (3, 2), (0, 3), (1, 4)):
            x[encoding.var_index(slot, position)] = 1
        self.assertEqual(decode_assignment(encoding, x), [1, 2, 3])

    def test_decode_rejects_non_permutation(self):
        """Тест ошибки для присваивания, не являющегося перестановкой"""
        _, encoding = build_tsp_qubo([0, 1, 2], self.square.costs)
        x = np.eye(3, dtype=int)
        x[0, 1] = 1
        with self.assertRaises(PermutationError) as ctx:
            decode_assignment(encoding, x.ravel())
        self.assertEqual(ctx.exception.bad_rows, (0,))
        self.assertEqual(ctx.exception.bad_columns, (2,))

    def test_invalid_parameters(self):
        """Тест недопустимых параметров кодировки"""
        with self.assertRaises(QuboError):
            build_tsp_qubo([0], self.square.costs)
        with self.assertRaises(QuboError):
            build_tsp_qubo([0, 1, 2], self.square.costs, penalty_a=0)
        with self.assertRaises(QuboError):
            build_tsp_qubo([0, 1, 2], self.square.costs, penalty_b=-1)
        with self.assertRaises(QuboError):
            Qubo(num_vars=2, coefficients={(1, 0): 1.0})
        with self.assertRaises(QuboError):
            qubo_energy(Qubo(num_vars=2, coefficients={}), [1, 0, 1])

    def test_zero_costs_default_penalty(self):
        """Тест штрафа по умолчанию при совпадающих точках"""
        instance = make_instance([(0, 0), (0, 0), (0, 0)], [0, 1, 1], 5)
        _, encoding = build_tsp_qubo([0, 1, 2], instance.costs)
        self.assertEqual(encoding.penalty_a, 1.0)

    def test_json_representation(self):
        """Тест представления QUBO для удаленного сэмплера"""
        qubo, _ = build_tsp_qubo([0, 1, 2, 3], self.square.costs)
        restored = Qubo.from_json(qubo.to_json())
        self.assertEqual(restored.num_vars, qubo.num_vars)
        self.assertEqual(restored.offset, qubo.offset)
        self.assertEqual(restored.coefficients, qubo.coefficients)


# ============================================================================
# СЭМПЛЕРЫ И ПЕРЕСЕКВЕНИРОВАНИЕ
# ============================================================================

FAST_ANNEAL = AnnealParams(num_reads=8, sweeps_per_read=200)


class AnnealTest(SimpleTestCase):
    """Тесты имитации отжига"""

    def test_single_variable(self):
        """Тест QUBO из одной переменной с отрицательным коэффициентом"""
        samples = simulated_anneal(Qubo(num_vars=1, coefficients={(0, 0): -1.0}), AnnealParams())
        self.assertEqual(samples[0].assignment, (1,))
        self.assertEqual(samples[0].energy, -1.0)

    def test_zero_qubo(self):
        """Тест QUBO без коэффициентов"""
        samples = simulated_anneal(Qubo(num_vars=3, coefficients={}), FAST_ANNEAL)
        self.assertTrue(all(sample.energy == 0.0 for sample in samples))

    def test_empty_qubo_rejected(self):
        """Тест QUBO без переменных"""
        with self.assertRaises(QuboError):
            simulated_anneal(Qubo(num_vars=0, coefficients={}), FAST_ANNEAL)

    def test_samples_sorted_and_counted(self):
        """Тест сортировки, дедупликации и числа вхождений"""
        qubo, _ = build_tsp_qubo([0, 1, 2, 3], random_instance(2, customers=3).costs)
        samples = simulated_anneal(qubo, FAST_ANNEAL)
        keys = [(s.energy, s.assignment) for s in samples]
        self.assertEqual(keys, sorted(keys))
        self.assertEqual(len({s.assignment for s in samples}), len(samples))
        self.assertEqual(sum(s.occurrences for s in samples), FAST_ANNEAL.num_reads)

    def test_deterministic(self):
        """Тест воспроизводимости при одном seed"""
        qubo, _ = build_tsp_qubo([0, 1, 2, 3, 4], random_instance(3, customers=4).costs)
        first = simulated_anneal(qubo, AnnealParams(num_reads=6, sweeps_per_read=300, rng_seed=9))
        second = simulated_anneal(qubo, AnnealParams(num_reads=6, sweeps_per_read=300, rng_seed=9))
        self.assertEqual(first, second)

    def test_finds_optimal_short_routes(self):
        """Тест оптимального порядка для маршрутов из трех остановок"""
        for seed in range(10):
            instance = random_instance(100 + seed, customers=3)
            nodes = [0, 1, 2, 3]
            qubo, encoding = build_tsp_qubo(nodes, instance.costs)
            samples = simulated_anneal(qubo, AnnealParams(rng_seed=seed))
            order = decode_assignment(encoding, samples[0].assignment)
            self.assertAlmostEqual(
                route_cost(order, instance.costs), brute_force_tsp(nodes, instance.costs)[1], places=9,
            )

    def test_mostly_optimal_four_stop_routes(self):
        """Тест маршрутов из четырех остановок: оптимум в большинстве попыток"""
        hits = 0
        for seed in range(10):
            instance = random_instance(200 + seed, customers=4)
            nodes = [0, 1, 2, 3, 4]
            qubo, encoding = build_tsp_qubo(nodes, instance.costs)
            samples = simulated_anneal(qubo, AnnealParams(rng_seed=seed))
            try:
                order = decode_assignment(encoding, samples[0].assignment)
            except PermutationError:
                continue
            if route_cost(order, instance.costs) <= brute_force_tsp(nodes, instance.costs)[1] + 1e-9:
                hits += 1
        self.assertGreaterEqual(hits, 8)

    def test_seven_stop_routes_optimal(self):
        """Тест маршрутов из семи остановок: оптимум не менее чем в 90 из 100 случаев"""
        hits = invalid = 0
        for seed in range(100):
            instance = random_instance(700 + seed, customers=7)
            nodes = list(range(8))
            qubo, encoding = build_tsp_qubo(nodes, instance.costs)
            samples = simulated_anneal(qubo, AnnealParams(rng_seed=seed))
            order = _decode_best(samples, encoding)
            if order is None:
                invalid += 1
                continue
            if route_cost(order, instance.costs) <= brute_force_tsp(nodes, instance.costs)[1] + 1e-9:
                hits += 1
        self.assertEqual(invalid, 0)
        self.assertGreaterEqual(hits, 90)

    def test_column_moves_keep_energy_exact(self):
        """Тест обмена и разворота столбцов: поля и энергия совпадают с прямым пересчетом"""
        instance = random_instance(31, customers=4)
        qubo, encoding = build_tsp_qubo([0, 1, 2, 3, 4], instance.costs)
        linear, indptr, indices, weights = _sparse_problem(qubo)
        scale = qubo.max_abs_coefficient()
        state = encode_tour(encoding, [1, 2, 3, 4]).astype(np.int8)
        field = linear.copy()
        for i in np.flatnonzero(state):
            field[indices[indptr[i]:indptr[i + 1]]] += weights[indptr[i]:indptr[i + 1]]
        before = qubo_energy(qubo, state)

        delta = _reverse_columns(1, 4, encoding.N, state, field, indptr, indices, weights)
        self.assertEqual(decode_assignment(encoding, state), [4, 3, 2, 1])
        self.assertAlmostEqual(qubo_energy(qubo, state), before + delta * scale, places=9)
        delta = _swap_columns(0, 2, encoding.N, state, field, indptr, indices, weights)
        after_swap = qubo_energy(qubo, state)
        self.assertAlmostEqual(after_swap - before, route_cost(decode_assignment(encoding, state), instance.costs)
                               - route_cost([1, 2, 3, 4], instance.costs), places=9)
        _swap_columns(0, 2, encoding.N, state, field, indptr, indices, weights)
        self.assertAlmostEqual(qubo_energy(qubo, state) + delta * scale, after_swap, places=9)

    def test_default_beta_range(self):
        """Тест диапазона beta, выведенного из коэффициентов"""
        qubo, _ = build_tsp_qubo([0, 1, 2, 3], random_instance(4, customers=3).costs)
        linear, indptr, _, weights = _sparse_problem(qubo)
        hot, cold = default_beta_range(linear, indptr, weights)
        self.assertGreater(hot, 0)
        self.assertGreater(cold, hot)
        self.assertEqual(default_beta_range(np.zeros(3), np.zeros(4, dtype=np.int64), np.zeros(0)), (0.1, 1.0))
        betas = AnnealParams(sweeps_per_read=7).betas((hot, cold))
        self.assertAlmostEqual(betas[0], hot)
        self.assertAlmostEqual(betas[-1], cold)

    def test_invalid_params(self):
        """Тест проверки параметров отжига"""
        with self.assertRaises(SamplerError):
            AnnealParams(num_reads=0)
        with self.assertRaises(SamplerError):
            AnnealParams(beta_initial=5.0, beta_final=1.0)
        with self.assertRaises(SamplerError):
            AnnealParams(beta_initial=0.5)
        with self.assertRaises(SamplerError):
            AnnealParams().betas()
        betas = AnnealParams(sweeps_per_read=5, beta_initial=0.1, beta_final=10.0).betas((1.0, 2.0))
        self.assertEqual(len(betas), 5)
        self.assertAlmostEqual(betas[0], 0.1)
        self.assertAlmostEqual(betas[-1], 10.0)


class BruteForceTest(SimpleTestCase):
    """Тесты точного перебора"""

    def setUp(self):
        self.square = make_instance([(0, 0), (0, 1), (1, 1), (1, 0)], [0, 1, 1, 1], 10)

    def test_single_stop(self):
        """Тест маршрута из одной остановки"""
        order, cost = brute_force_tsp([0, 2], self.square.costs)
        self.assertEqual(order, [2])
        self.assertAlmostEqual(cost, 2 * math.sqrt(2))

    def test_two_stops_lexicographic(self):
        """Тест лексикографического выбора при равной стоимости"""
        order, _ = brute_force_tsp([0, 3, 1], self.square.costs)
        self.assertEqual(order, [1, 3])

    def test_unit_square(self):
        """Тест единичного квадрата"""
        order, cost = brute_force_tsp([0, 2, 3, 1], self.square.costs)
        self.assertAlmostEqual(cost, 4.0)
        self.assertEqual(order, [1, 2, 3])

    def test_empty_route(self):
        """Тест маршрута без остановок"""
        self.assertEqual(brute_force_tsp([0], self.square.costs), ([], 0.0))

    def test_limit(self):
        """Тест ограничения на число остановок"""
        instance = random_instance(5, customers=11, capacity=100)
        with self.assertRaises(SamplerError):
            brute_force_tsp([0] + list(instance.customers), instance.costs)


class CountingSolver:
    """Обертка над отжигом, считающая вызовы"""

    def __init__(self, result=None):
        self.calls = 0
        self.result = result

    def __call__(self, qubo):
        self.calls += 1
        if self.result is not None:
            return self.result
        return simulated_anneal(qubo, AnnealParams(num_reads=16, sweeps_per_read=500))


class ResequenceTest(SimpleTestCase):
    """Тесты пересеквенирования маршрутов"""

    def setUp(self):
        self.instance = make_instance(
            [(0, 0), (0, 10), (10, 10), (10, 0), (5, 12)], [0, 1, 1, 1, 1], 10,
        )
        self.bad_route = Route.build([1, 3, 2], self.instance)

    def test_short_route_unchanged(self):
        """Тест маршрутов до двух остановок"""
        solver = CountingSolver()
        route = Route.build([2, 1], self.instance)
        result = resequence_route(route, self.instance.costs, ResequenceCache(), solver)
        self.assertIs(result, route)
        self.assertEqual(solver.calls, 0)

    def test_improves_route(self):
        """Тест улучшения плохого порядка"""
        stats = ResequenceStats()
        result = resequence_route(self.bad_route, self.instance.costs, ResequenceCache(), CountingSolver(), stats=stats)
        self.assertAlmostEqual(result.cost, 40.0)
        self.assertAlmostEqual(result.cost, route_cost(result.stops, self.instance.costs))
        self.assertEqual(result.load, self.bad_route.load)
        self.assertEqual(stats.solver_calls, 1)
        self.assertEqual(stats.improvements, 1)

    def test_cache_hit_skips_solver(self):
        """Тест повторного маршрута: решатель не вызывается"""
        cache = ResequenceCache()
        solver = CountingSolver()
        resequence_route(self.bad_route, self.instance.costs, cache, solver)
        again = resequence_route(Route.build([2, 1, 3], self.instance), self.instance.costs, cache, solver)
        self.assertEqual(solver.calls, 1)
        self.assertEqual(cache.hits, 1)
        self.assertAlmostEqual(again.cost, 40.0)
        cached = cache.get([3, 2, 1])
        self.assertAlmostEqual(cached.cost, route_cost(cached.order, self.instance.costs))

    def test_never_worse_than_input(self):
        """Тест: решатель предлагает худший порядок, маршрут не меняется"""
        stops = [1, 2, 3]
        qubo, encoding = build_tsp_qubo([0] + stops, self.instance.costs)
        worse = encode_tour(encoding, [1, 3, 2])
        solver = CountingSolver([Sample(tuple(int(v) for v in worse), qubo_energy(qubo, worse))])
        route = Route.build(stops, self.instance)
        result = resequence_route(route, self.instance.costs, ResequenceCache(), solver)
        self.assertIs(result, route)

    def test_fallback_to_brute_force(self):
        """Тест перехода на перебор, если сэмплы не декодируются"""
        stats = ResequenceStats()
        solver = CountingSolver([Sample((0,) * 16, 0.0)])
        with self.assertLogs('routing.sampler', level='WARNING'):
            result = resequence_route(self.bad_route, self.instance.costs, ResequenceCache(), solver, stats=stats)
        self.assertEqual(stats.fallbacks, 1)
        self.assertAlmostEqual(result.cost, 40.0)

    def test_brute_resequencer(self):
        """Тест пересеквенирования перебором без QUBO"""
        resequencer = Resequencer(self.instance.costs, solver='brute')
        result = resequencer(Route.build([4, 3, 1, 2], self.instance))
        optimum = brute_force_tsp([0, 1, 2, 3, 4], self.instance.costs)[1]
        self.assertAlmostEqual(result.cost, optimum)
        self.assertEqual(resequencer.stats.solver_calls, 0)

    def test_unknown_solver(self):
        """Тест неизвестного сэмплера"""
        with self.assertRaises(SamplerError):
            Resequencer(self.instance.costs, solver='qpu')


class RemoteSamplerTest(SimpleTestCase):
    """Тесты удаленного сэмплера (HTTP подменяется)"""

    ENDPOINT = 'http://sampler.test/sample'

    def setUp(self):
        self.instance = make_instance([(0, 0), (0, 10), (10, 10), (10, 0)], [0, 1, 1, 1], 10)
        self.qubo, self.encoding = build_tsp_qubo([0, 1, 2, 3], self.instance.costs)
        self.assignment = [int(v) for v in encode_tour(self.encoding, [1, 2, 3])]

    def respond(self, mock_post, energy):
        mock_post.return_value.json.return_value = {
            'samples': [{'assignment': self.assignment, 'energy': energy, 'occurrences': 3}],
        }

    @mock.patch('routing.sampler.requests.post')
    def test_valid_response(self, mock_post):
        """Тест корректного ответа"""
        self.respond(mock_post, 40.0)
        samples = remote_sample(self.qubo, self.ENDPOINT, AnnealParams(num_reads=5))
        self.assertEqual(len(samples), 1)
        self.assertAlmostEqual(samples[0].energy, 40.0)
        self.assertEqual(samples[0].occurrences, 3)
        payload = mock_post.call_args.kwargs['json']
        self.assertEqual(payload['num_reads'], 5)
        self.assertEqual(payload['num_vars'], 16)

    @mock.patch('routing.sampler.requests.post')
    def test_energy_mismatch(self, mock_post):
        """Тест отклонения ответа с неверной энергией"""
        self.respond(mock_post, 39.0)
        with self.assertRaises(RemoteSamplerError):
            remote_sample(self.qubo, self.ENDPOINT, FAST_ANNEAL)

    @mock.patch('routing.sampler.requests.post')
    def test_network_failure(self, mock_post):
        """Тест сетевой ошибки"""
        mock_post.side_effect = requests.ConnectionError('down')
        with self.assertRaises(RemoteSamplerError):
            remote_sample(self.qubo, self.ENDPOINT, FAST_ANNEAL)

    def test_missing_endpoint(self):
        """Тест отсутствующего адреса"""
        with self.assertRaises(RemoteSamplerError):
            remote_sample(self.qubo, '', FAST_ANNEAL)

    @mock.patch('routing.sampler.requests.post')
    def test_resequencer_falls_back_to_anneal(self, mock_post):
        """Тест перехода на локальный отжиг при сбое"""
        mock_post.side_effect = requests.Timeout('slow')
        resequencer = Resequencer(
            self.instance.costs, solver='remote', endpoint=self.ENDPOINT,
            anneal=AnnealParams(num_reads=16, sweeps_per_read=500),
        )
        route = Route.build([1, 3, 2], self.instance)
        with self.assertLogs('routing.sampler', level='WARNING'):
            result = resequencer(route)
        self.assertEqual(resequencer.stats.remote_failures, 1)
        self.assertLessEqual(result.cost, route.cost)


# ============================================================================
# ТАБУ-ПОИСК
# ============================================================================

class NeighborhoodTest(SimpleTestCase):
    """Тесты генерации окрестности"""

    def test_single_route_intra_swaps_only(self):
        """Тест: один маршрут из трех остановок дает три перестановки (0,1)"""
        instance = make_instance([(0, 0), (1, 0), (2, 0), (3, 0)], [0, 1, 1, 1], 10)
        state = search_state(Solution.from_stop_lists([[1, 2, 3]], instance), customers=3)
        moves = generate_neighborhood(state, instance, nearest_neighbors(instance, 1), SearchParams())
        self.assertEqual(len(moves), 3)
        self.assertTrue(all(move.kind is MoveKind.INTRA_SWAP for move in moves))

    def test_two_customers_relocations(self):
        """Тест двух клиентов в разных маршрутах: только перемещения"""
        instance = make_instance([(0, 0), (1, 0), (0, 1)], [0, 1, 1], 10)
        state = search_state(Solution.from_stop_lists([[1], [2]], instance), customers=2)
        moves = generate_neighborhood(state, instance, nearest_neighbors(instance, 1), SearchParams())
        self.assertEqual(sorted((m.kind, m.customer) for m in moves), [
            (MoveKind.RELOCATE, 1), (MoveKind.RELOCATE, 2),
        ])

    def test_relocate_needs_neighbor_in_destination(self):
        """Тест ограничения по соседям для перемещений"""
        instance = tiny_instance()
        solution = Solution.from_stop_lists([[1, 6], [2, 4], [3, 5]], instance, fleet=4)
        neighbors = nearest_neighbors(instance, 2)
        moves = generate_neighborhood(search_state(solution, k=2), instance, neighbors, SearchParams())
        for move in moves:
            if move.kind is MoveKind.RELOCATE:
                dest = solution.routes[move.dest_route].stops
                self.assertTrue(neighbors.any_neighbor_in(move.customer, dest))
                self.assertTrue(dest)

    def test_diversification_drops_intra_swaps(self):
        """Тест отключения (0,1) при диверсификации"""
        instance = tiny_instance()
        solution = Solution.from_stop_lists([[1, 6], [2, 4], [3, 5]], instance, fleet=4)
        state = search_state(solution, k=3)
        state.diversified = True
        moves = generate_neighborhood(state, instance, nearest_neighbors(instance, 3), SearchParams())
        self.assertFalse(any(move.kind is MoveKind.INTRA_SWAP for move in moves))

    def test_feasible_only_without_oscillation(self):
        """Тест фильтра допустимости без стратегической осцилляции"""
        instance = tiny_instance()
        solution = Solution.from_stop_lists([[1, 6], [2, 4], [3, 5]], instance, fleet=4)
        neighbors = nearest_neighbors(instance, 3)
        with_so = generate_neighborhood(search_state(solution, k=3), instance, neighbors, SearchParams())
        without = generate_neighborhood(
            search_state(solution, k=3), instance, neighbors, SearchParams(so_enabled=False),
        )
        self.assertTrue(any(not move.feasible_after for move in with_so))
        self.assertTrue(all(move.feasible_after for move in without))
        self.assertLess(len(without), len(with_so))

    def test_deltas_match_recomputation(self):
        """Тест приращений стоимости всех ходов окрестности"""
        instance = tiny_instance()
        solution = Solution.from_stop_lists([[1, 6], [2, 4], [3, 5]], instance, fleet=4)
        moves = generate_neighborhood(search_state(solution, k=3), instance, nearest_neighbors(instance, 3),
                                      SearchParams())
        for move in moves:
            after = apply_move(solution, move, instance)
            self.assertAlmostEqual(after.recomputed_cost(instance), solution.total_cost + move.delta_cost, places=9)

    def test_empty_neighborhood(self):
        """Тест пустой окрестности"""
        instance = make_instance([(0, 0), (3, 4)], [0, 1], 5)
        state = search_state(Solution.from_stop_lists([[1], []], instance), customers=1)
        with self.assertRaises(EmptyNeighborhoodError):
            generate_neighborhood(state, instance, nearest_neighbors(instance, 1), SearchParams())


def relocate(customer, dest_route, delta, feasible=True, delta_infeasibility=0.0):
    return Move(
        kind=MoveKind.RELOCATE, customer=customer, origin_route=0, origin_pos=0, dest_route=dest_route,
        dest_pos=0, delta_cost=delta, delta_infeasibility=delta_infeasibility, feasible_after=feasible,
    )


class SelectionTest(SimpleTestCase):
    """Тесты выбора кандидата"""

    def setUp(self):
        self.instance = tiny_instance()
        self.current = plain_solution([1, 2], 5, 100)

    def test_basic_best_delta(self):
        """Тест выбора хода с наименьшим приращением"""
        state = search_state(self.current, global_best=plain_solution([1, 2], 5, 90))
        moves = [relocate(3, 1, -1.0), relocate(4, 1, -3.0)]
        self.assertEqual(select_candidate_basic(state, moves, TabuList(), self.instance).customer, 4)

    def test_basic_tie_break_by_customer(self):
        """Тест разрешения равенства по id клиента"""
        state = search_state(self.current)
        moves = [relocate(5, 1, 1.0), relocate(2, 1, 1.0)]
        self.assertEqual(select_candidate_basic(state, moves, TabuList(), self.instance).customer, 2)

    def test_basic_aspiration(self):
        """Тест стремления: табуированный ход с новым рекордом"""
        state = search_state(self.current)
        tabu = TabuList()
        tabu.mark(3, 1, 10)
        moves = [relocate(3, 1, -2.0), relocate(4, 2, 1.0)]
        self.assertEqual(select_candidate_basic(state, moves, tabu, self.instance).customer, 3)

    def test_basic_tabu_without_aspiration(self):
        """Тест: табуированный ход без рекорда отклоняется"""
        state = search_state(self.current)
        tabu = TabuList()
        tabu.mark(3, 1, 10)
        moves = [relocate(3, 1, 0.5), relocate(4, 2, 1.0)]
        self.assertEqual(select_candidate_basic(state, moves, tabu, self.instance).customer, 4)

    def test_basic_all_tabu(self):
        """Тест: все ходы табуированы, берется лучший вообще"""
        state = search_state(self.current)
        tabu = TabuList()
        tabu.mark(3, 1, 10)
        tabu.mark(4, 1, 10)
        moves = [relocate(3, 1, 2.0), relocate(4, 1, 1.0)]
        self.assertEqual(select_candidate_basic(state, moves, tabu, self.instance).customer, 4)

    def test_so_feasible_previous_compares_cost(self):
        """Тест осцилляции: после допустимого решения сравнивается стоимость"""
        state = search_state(self.current, global_best=plain_solution([1, 2], 5, 50))
        moves = [relocate(1, 1, 0.0), relocate(2, 1, -10.0, feasible=False, delta_infeasibility=3.0)]
        selection = select_candidate_so(state, moves, TabuList(), self.instance)
        self.assertEqual(selection.selected.customer, 2)
        self.assertIsNone(selection.new_best)

    def test_so_infeasible_previous_compares_infeasibility(self):
        """Тест осцилляции: после недопустимого решения сравнивается недопустимость"""
        current = plain_solution([1, 2], 15, 100)
        self.assertEqual(current.infeasibility, 5.0)
        state = search_state(current, global_best=plain_solution([1, 2], 5, 50))
        moves = [
            relocate(1, 1, 5.0, feasible=True, delta_infeasibility=-5.0),
            relocate(2, 1, -10.0, feasible=False, delta_infeasibility=-2.0),
        ]
        selection = select_candidate_so(state, moves, TabuList(), self.instance)
        self.assertEqual(selection.selected.customer, 1)

    def test_so_keeps_tabu_record_as_new_best(self):
        """Тест: табуированный рекорд запоминается, но не выбирается"""
        instance = self.instance
        solution = Solution.from_stop_lists([[1, 6], [2, 4], [3, 5]], instance, fleet=4)
        state = search_state(solution, k=3)
        moves = generate_neighborhood(state, instance, nearest_neighbors(instance, 3), SearchParams())
        record_breakers = [m for m in moves if m.feasible_after and m.delta_cost < -1e-9]
        self.assertTrue(record_breakers)
        cbs = min(record_breakers, key=Move.sort_key)
        tabu = TabuList()
        for customer, route in cbs.arrivals():
            tabu.mark(customer, route, 10)
        selection = select_candidate_so(state, moves, tabu, instance)
        self.assertIsNotNone(selection.new_best)
        self.assertAlmostEqual(selection.new_best.total_cost, solution.total_cost + cbs.delta_cost, places=9)
        self.assertNotEqual(selection.selected, cbs)
        self.assertFalse(tabu.move_is_tabu(selection.selected, 0))


class TabuListTest(SimpleTestCase):
    """Тесты табу-списка"""

    def test_expiry(self):
        """Тест срока табу: tenure 10 на итерации 5 истекает на 15"""
        tabu = TabuList()
        move = Move(kind=MoveKind.RELOCATE, customer=7, origin_route=2, origin_pos=0, dest_route=0, dest_pos=0)
        update_tabu(tabu, move, 5, SearchParams(tenure=10))
        self.assertEqual(tabu.expiry(7, 2), 15)
        back = Move(kind=MoveKind.RELOCATE, customer=7, origin_route=0, origin_pos=0, dest_route=2, dest_pos=0)
        self.assertTrue(tabu.move_is_tabu(back, 14))
        self.assertFalse(tabu.move_is_tabu(back, 15))

    def test_swap_marks_both(self):
        """Тест: обмен табуирует обоих клиентов"""
        tabu = TabuList()
        move = Move(kind=MoveKind.INTER_SWAP, customer=3, origin_route=0, origin_pos=0,
                    dest_route=1, dest_pos=0, partner=8)
        update_tabu(tabu, move, 0, SearchParams(tenure=4))
        self.assertTrue(tabu.is_tabu(3, 0, 3))
        self.assertTrue(tabu.is_tabu(8, 1, 3))
        self.assertFalse(tabu.is_tabu(3, 1, 0))

    def test_purge(self):
        """Тест удаления истекших атрибутов"""
        tabu = TabuList()
        tabu.mark(1, 0, 3)
        tabu.mark(2, 0, 30)
        tabu.purge(10)
        self.assertEqual(len(tabu), 1)
        self.assertIsNone(tabu.expiry(1, 0))


class IntensifyDiversifyTest(SimpleTestCase):
    """Тесты цикла интенсификации и диверсификации"""

    def setUp(self):
        self.current = plain_solution([1, 2], 5, 100)
        self.best = plain_solution([2, 1], 5, 90)

    def advance(self, state, params, rng):
        state.threshold = 1
        intensify_diversify(state, params, rng)

    def test_threshold_range(self):
        """Тест диапазона X для 50 клиентов"""
        rng = np.random.default_rng(0)
        draws = [draw_threshold(50, SearchParams(), rng) for _ in range(2000)]
        self.assertEqual(min(draws), 30)
        self.assertEqual(max(draws), 55)

    def test_cycle(self):
        """Тест переходов обычный -> диверсификация -> интенсификация -> обычный"""
        params = SearchParams(so_enabled=False)
        rng = np.random.default_rng(0)
        state = SearchState(current=self.current, global_best=self.best, neighbor_k=3, base_k=3, num_customers=10)
        state.since_best = 1
        state.threshold = 2
        intensify_diversify(state, params, rng)
        self.assertIs(state.stage, Stage.NORMAL)
        intensify_diversify(state, params, rng)
        self.assertIs(state.stage, Stage.DIVERSIFY)
        self.assertTrue(state.diversified)
        self.assertEqual(state.neighbor_k, 6)
        self.assertGreaterEqual(state.threshold, 6)
        self.assertLessEqual(state.threshold, 11)

        self.advance(state, params, rng)
        self.assertIs(state.stage, Stage.INTENSIFIED)
        self.assertIs(state.current, self.best)

        self.advance(state, params, rng)
        self.assertIs(state.stage, Stage.NORMAL)
        self.assertFalse(state.diversified)
        self.assertEqual(state.neighbor_k, 3)

    def test_oscillation_skips_restore(self):
        """Тест: при осцилляции интенсификация не возвращает рекорд"""
        params = SearchParams(so_enabled=True)
        rng = np.random.default_rng(0)
        state = SearchState(current=self.current, global_best=self.best, neighbor_k=3, base_k=3, num_customers=10)
        state.since_best = 1
        self.advance(state, params, rng)
        self.advance(state, params, rng)
        self.assertIs(state.stage, Stage.INTENSIFIED)
        self.assertIs(state.current, self.current)

    def test_improvement_resets_counter(self):
        """Тест сброса счетчика этапа при улучшении"""
        params = SearchParams()
        rng = np.random.default_rng(0)
        state = SearchState(current=self.current, global_best=self.best, neighbor_k=3, base_k=3, num_customers=10)
        state.since_best = 1
        state.threshold = 5
        for _ in range(3):
            intensify_diversify(state, params, rng)
        self.assertEqual(state.stage_counter, 3)
        state.since_best = 0
        intensify_diversify(state, params, rng)
        self.assertEqual(state.stage_counter, 0)
        self.assertIs(state.stage, Stage.NORMAL)


class FakeResequencer:
    """Возвращает маршрут без изменений и считает вызовы"""

    def __init__(self):
        self.calls = 0

    def __call__(self, route):
        self.calls += 1
        return route


class ResequenceTriggerTest(SimpleTestCase):
    """Тесты редкого пересеквенирования рекорда"""

    def setUp(self):
        self.instance = make_instance(
            [(0, 0), (0, 10), (10, 10), (10, 0), (-5, -5)], [0, 1, 1, 1, 1], 10,
        )

    def test_trigger_interval(self):
        """Тест срабатывания на 1000 итерациях без улучшения, но не на 999"""
        best = Solution.from_stop_lists([[1, 2], [4], []], self.instance)
        params = SearchParams(resequence_trigger=1000)
        resequencer = FakeResequencer()
        state = search_state(best)
        state.since_best = 999
        maybe_resequence(state, resequencer, params)
        self.assertEqual(resequencer.calls, 0)
        state.since_best = 1000
        stats = SearchStats()
        maybe_resequence(state, resequencer, params, stats)
        self.assertEqual(resequencer.calls, 2)
        self.assertEqual(stats.resequence_calls, 2)
        self.assertEqual(state.since_best, 1000)

    def test_improvement_replaces_best(self):
        """Тест замены рекорда после улучшения порядка"""
        best = Solution.from_stop_lists([[1, 3, 2], [4]], self.instance)
        state = search_state(best)
        state.since_best = 50
        state.phase = Phase.INFEASIBLE
        stats = SearchStats()
        maybe_resequence(state, Resequencer(self.instance.costs, solver='brute'), SearchParams(resequence_trigger=50),
                         stats)
        self.assertAlmostEqual(state.global_best.routes[0].cost, 40.0)
        self.assertIs(state.current, state.global_best)
        self.assertEqual(state.since_best, 0)
        self.assertIs(state.phase, Phase.FEASIBLE)
        self.assertEqual(stats.resequence_improvements, 1)

    def test_failing_route_kept(self):
        """Тест: ошибка сэмплера оставляет маршрут как есть"""
        def failing(route):
            raise SamplerError('нет ответа')

        best = Solution.from_stop_lists([[1, 3, 2]], self.instance)
        state = search_state(best)
        state.since_best = 10
        with self.assertLogs('routing.tabu', level='WARNING'):
            maybe_resequence(state, failing, SearchParams(resequence_trigger=10))
        self.assertIs(state.global_best, best)


class RunSearchTest(SimpleTestCase):
    """Тесты основного цикла поиска"""

    def test_single_customer(self):
        """Тест экземпляра из одного клиента: маршрут туда и обратно"""
        instance = make_instance([(0, 0), (3, 4)], [0, 1], 5)
        result = run_search(instance, SearchParams())
        self.assertAlmostEqual(result.best.total_cost, 10.0)
        self.assertEqual(result.best.vehicles_used, 1)
        self.assertEqual(result.stats.stop_reason, 'stalled')
        self.assertEqual(result.stats.iterations, 0)

    def test_tiny_instance(self):
        """Тест поиска на маленьком экземпляре с осцилляцией и без"""
        instance = tiny_instance()
        for so_enabled in (True, False):
            params = SearchParams(so_enabled=so_enabled, max_iterations=150, non_improve_stop=100)
            result = run_search(instance, params)
            self.assertTrue(check_feasibility(result.best, instance).feasible)
            self.assertLessEqual(result.best.total_cost, result.stats.initial_cost + 1e-9)
            self.assertLessEqual(result.stats.iterations, 150)
            self.assertEqual(len(result.stats.trajectory), result.stats.iterations)
            self.assertIn(result.stats.stop_reason, ('max_iterations', 'non_improve', 'stalled'))

    def test_trajectory_best_non_increasing(self):
        """Тест монотонности рекорда на траектории"""
        result = run_search(random_instance(7, customers=7), SearchParams(max_iterations=200))
        best_costs = [point.best_cost for point in result.stats.trajectory]
        self.assertTrue(all(b <= a + 1e-9 for a, b in zip(best_costs, best_costs[1:])))
        self.assertAlmostEqual(best_costs[-1], result.best.total_cost)

    def test_never_below_optimum(self):
        """Тест: результат не лучше точного оптимума и допустим"""
        for seed in range(4):
            instance = random_instance(seed, customers=6)
            params = SearchParams(rng_seed=seed, max_iterations=300, non_improve_stop=150)
            result = run_search(instance, params)
            optimum = exact_cvrp_cost(instance, instance.default_fleet())
            self.assertGreaterEqual(result.best.total_cost, optimum - 1e-6)
            self.assertTrue(check_feasibility(result.best, instance).feasible)

    def test_deterministic(self):
        """Тест воспроизводимости при одном seed"""
        instance = random_instance(21, customers=7)
        params = SearchParams(rng_seed=3, max_iterations=120)
        first = run_search(instance, params)
        second = run_search(instance, params)
        self.assertEqual(first.best.stop_lists(), second.best.stop_lists())
        self.assertEqual(first.best.total_cost, second.best.total_cost)

    def test_resequencing_during_search(self):
        """Тест вызовов пересеквенирования в ходе поиска"""
        instance = random_instance(8, customers=7)
        resequencer = Resequencer(instance.costs, solver='brute')
        params = SearchParams(resequence_trigger=20, non_improve_stop=60)
        result = run_search(instance, params, resequencer=resequencer)
        self.assertEqual(result.stats.stop_reason, 'non_improve')
        self.assertGreater(result.stats.resequence_calls, 0)
        self.assertEqual(result.stats.sampler_calls, 0)

    def test_invalid_params(self):
        """Тест проверки параметров поиска"""
        with self.assertRaises(ValueError):
            SearchParams(x_low=1.2, x_high=1.1)
        with self.assertRaises(ValueError):
            SearchParams(tenure=0)

    def test_write_trajectory(self):
        """Тест записи траектории в CSV"""
        stats = SearchStats(trajectory=[
            TrajectoryPoint(1, 120.0, 110.0, True, 'feasible'),
            TrajectoryPoint(2, 130.5, 110.0, False, 'infeasible'),
        ])
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'trajectory.csv'
            write_trajectory_csv(stats, path)
            rows = list(csv.reader(path.read_text(encoding='utf-8').splitlines()))
        self.assertEqual(rows[0], ['iteration', 'current_cost', 'best_cost', 'feasible', 'phase'])
        self.assertEqual(rows[2], ['2', '130.500000', '110.000000', '0', 'infeasible'])


# ============================================================================
# ВИЗУАЛИЗАЦИЯ
# ============================================================================

class PlottingTest(SimpleTestCase):
    """Тесты рисования маршрутов"""

    def setUp(self):
        self.instance = make_instance([(0, 0), (2, 2), (2, 0), (0, 2)], [0, 1, 1, 1], 10)

    def test_svg_route_per_vehicle(self):
        """Тест: по одной ломаной на непустой маршрут"""
        solution = Solution.from_stop_lists([[1], [2, 3], []], self.instance)
        svg = render_routes_svg(solution, self.instance)
        self.assertTrue(svg.startswith('<?xml'))
        self.assertEqual(svg.count('<polyline'), 2)
        self.assertEqual(svg.count('class="stop"'), 3)
        self.assertEqual(svg.count('class="depot"'), 1)

    def test_svg_single_customer_loop(self):
        """Тест ломаной депо -> клиент -> депо"""
        instance = make_instance([(0, 0), (3, 4)], [0, 1], 5)
        svg = render_routes_svg(Solution.from_stop_lists([[1]], instance), instance)
        points = svg.split('points="')[1].split('"')[0].split()
        self.assertEqual(len(points), 3)
        self.assertEqual(points[1], '3,-4')

    def test_svg_depot_only(self):
        """Тест экземпляра без клиентов"""
        instance = CvrpInstance(
            name='empty', locations=(Location(0, 0.0, 0.0, 0.0),), costs=CostMatrix([[0.0]]),
            capacity=1.0, fleet_size=1,
        )
        svg = render_routes_svg(Solution.from_stop_lists([], instance, fleet=1), instance)
        self.assertEqual(svg.count('<polyline'), 0)
        self.assertIn('class="depot"', svg)

    def test_no_coordinates(self):
        """Тест экземпляра с явной матрицей"""
        instance = parse_instance(MATRIX_VRP)
        solution = Solution.from_stop_lists([[1, 2]], instance)
        with self.assertRaises(PlotError):
            render_routes_svg(solution, instance)
        with self.assertRaises(PlotError):
            count_crossings(solution, instance)

    def test_crossings(self):
        """Тест подсчета пересечений"""
        crossing = Solution.from_stop_lists([[1, 2, 3]], self.instance)
        square = Solution.from_stop_lists([[2, 1, 3]], self.instance)
        self.assertEqual(count_crossings(crossing, self.instance), 1)
        self.assertEqual(count_crossings(square, self.instance), 0)

    def test_shared_endpoint_not_crossing(self):
        """Тест: общий конец не считается пересечением"""
        self.assertFalse(segments_cross((0, 0), (1, 1), (1, 1), (2, 0)))
        self.assertTrue(segments_cross((0, 0), (2, 2), (0, 2), (2, 0)))

    def test_png(self):
        """Тест растрового рисунка"""
        solution = Solution.from_stop_lists([[1, 2, 3]], self.instance)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'routes.png'
            render_routes_png(solution, self.instance, path, size=200)
            self.assertEqual(path.read_bytes()[:8], b'\x89PNG\r\n\x1a\n')


# ============================================================================
# КОНФИГУРАЦИЯ
# ============================================================================

class ConfigTest(SimpleTestCase):
    """Тесты сборки конфигурации"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write_config(self, text):
        path = Path(self.tmp.name) / 'run.conf'
        path.write_text(text, encoding='utf-8')
        return path

    def test_defaults(self):
        """Тест значений по умолчанию"""
        cleaned = conf.resolve_config()
        self.assertEqual(cleaned['variant'], 'ts_so')
        self.assertEqual(cleaned['tenure'], 15)
        self.assertIsNone(cleaned['fleet'])
        params = conf.search_params(cleaned)
        self.assertTrue(params.so_enabled)
        self.assertEqual(params.non_improve_stop, 5000)

    def test_precedence(self):
        """Тест приоритета: CLI > файл > settings"""
        path = self.write_config("# профиль\ntenure = 20\nseed = 5\n\nvariant = ts\n")
        cleaned = conf.resolve_config({'seed': 9, 'tenure': None}, config_path=path)
        self.assertEqual(cleaned['tenure'], 20)
        self.assertEqual(cleaned['seed'], 9)
        self.assertEqual(cleaned['x_low'], 0.6)
        self.assertFalse(conf.search_params(cleaned).so_enabled)

    def test_preset(self):
        """Тест профиля лимита времени"""
        cleaned = conf.resolve_config(preset='desk')
        self.assertEqual(cleaned['time_limit_seconds'], 600.0)
        with self.assertRaises(ConfigError):
            conf.resolve_config(preset='weekend')

    def test_variant_alias(self):
        """Тест сокращения cw"""
        self.assertEqual(conf.resolve_config({'variant': 'cw'})['variant'], 'clarke_wright')

    def test_unknown_key(self):
        """Тест неизвестного параметра в файле"""
        path = self.write_config("tenure = 10\ntabu_length = 3\n")
        with self.assertRaises(ConfigError) as ctx:
            conf.resolve_config(config_path=path)
        self.assertIn('строка 2', str(ctx.exception))

    def test_missing_equals(self):
        """Тест строки без знака равенства"""
        with self.assertRaises(ConfigError):
            conf.parse_config_text("tenure 10\n")

    def test_invalid_values(self):
        """Тест несогласованных значений"""
        with self.assertRaises(ConfigError):
            conf.resolve_config({'x_low': 1.5, 'x_high': 1.1})
        with self.assertRaises(ConfigError):
            conf.resolve_config({'tenure': 0})

    @override_settings(HQTS_SAMPLER_URL=None)
    def test_remote_without_url(self):
        """Тест удаленного сэмплера без адреса"""
        with self.assertRaises(ConfigError):
            conf.resolve_config({'sampler': 'remote'})

    @override_settings(HQTS_SAMPLER_URL='http://sampler.test/sample')
    def test_run_config(self):
        """Тест полной конфигурации запуска"""
        cleaned = conf.resolve_config({'sampler': 'remote', 'repetitions': 2, 'seed': 4})
        config = conf.run_config(cleaned, ['a.vrp'], output_dir=self.tmp.name)
        self.assertEqual(config.endpoint, 'http://sampler.test/sample')
        self.assertEqual(config.seeds(), [4, 5])
        self.assertEqual(config.anneal.rng_seed, 4)
        self.assertEqual(config.instance_paths, (Path('a.vrp'),))


class RunConfigFormTest(SimpleTestCase):
    """Тесты формы конфигурации"""

    def form(self, **overrides):
        data = dict(settings.HQTS)
        data.update(overrides)
        return RunConfigForm(data=data)

    def test_valid_defaults(self):
        """Тест корректных значений по умолчанию"""
        self.assertTrue(self.form().is_valid())

    def test_beta_order(self):
        """Тест порядка beta"""
        form = self.form(beta_initial=5.0, beta_final=1.0)
        self.assertFalse(form.is_valid())
        self.assertIn('beta_initial', form.error_text())

    def test_penalty_a_positive(self):
        """Тест положительности штрафа A"""
        form = self.form(penalty_a=-1)
        self.assertFalse(form.is_valid())
        self.assertIn('penalty_a', form.errors)

    def test_unknown_variant(self):
        """Тест неизвестного варианта"""
        self.assertFalse(self.form(variant='genetic').is_valid())


# ============================================================================
# БЕНЧМАРК И ОТЧЕТЫ
# ============================================================================

class DeviationTest(SimpleTestCase):
    """Тесты отклонений от BKS"""

    def test_deviation(self):
        """Тест отклонения 537 от 524.61"""
        self.assertAlmostEqual(deviation(537, 524.61), 2.36, delta=0.05)
        self.assertIsNone(deviation(537, None))
        self.assertIsNone(deviation(None, 524.61))

    def test_summary_mean(self):
        """Тест среднего отклонения и пустого значения без BKS"""
        report = BenchReport('ts', [
            InstanceRow('A', bks=100, distance=110),
            InstanceRow('B', bks=100, distance=121),
            InstanceRow('X1', distance=50),
        ])
        with tempfile.TemporaryDirectory() as tmp:
            summary = emit_deviation_summary([report], tmp)
            rows = list(csv.reader((Path(tmp) / 'deviation_summary.csv').read_text(encoding='utf-8').splitlines()))
            means = list(csv.reader((Path(tmp) / 'deviation_means.csv').read_text(encoding='utf-8').splitlines()))
        self.assertAlmostEqual(summary.means['ts'], 15.5)
        self.assertEqual(rows[1], ['A', 'ts', '110.0000', '10.00'])
        self.assertEqual(rows[3], ['X1', 'ts', '50.0000', ''])
        self.assertEqual(means[1], ['ts', '15.50', '2'])

    def test_published_means(self):
        """Тест опубликованных результатов"""
        self.assertAlmostEqual(published_report('ts_so').mean_deviation(), 4.72, delta=0.05)
        cw = published_report('clarke_wright')
        self.assertAlmostEqual(cw.rows[0].deviation, 11.51, delta=0.01)

    def test_published_initial_vehicles(self):
        """Тест числа машин начального решения в опубликованных строках"""
        initial = {row.name: row.vehicles_initial for row in published_report('ts_so').rows}
        self.assertEqual(initial['CMT1'], 6)
        self.assertEqual(initial['CMT12'], 11)
        self.assertTrue(all(row.vehicles_initial is None for row in published_report('clarke_wright').rows))
        with tempfile.TemporaryDirectory() as tmp:
            published_report('ts').write(tmp)
            rows = list(csv.DictReader((Path(tmp) / 'report.csv').read_text(encoding='utf-8').splitlines()))
        self.assertEqual(rows[0]['vehicles_initial'], '6')


class BenchmarkRunnerTest(SimpleTestCase):
    """Тесты прогона бенчмарка"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.instance_path = self.root / 'tiny6.vrp'
        self.instance_path.write_text(TINY_VRP, encoding='utf-8')

    def config(self, output, **overrides):
        values = dict(
            instance_paths=(self.instance_path,), variant='ts',
            search=SearchParams(max_iterations=40, non_improve_stop=30),
            anneal=AnnealParams(num_reads=4, sweeps_per_read=100), repetitions=2,
            output_dir=self.root / output,
        )
        values.update(overrides)
        return RunConfig(**values)

    def test_empty_benchmark(self):
        """Тест бенчмарка без экземпляров"""
        report = run_benchmark(self.config('empty', instance_paths=()))
        self.assertEqual(report.rows, [])
        text = (self.root / 'empty' / 'report.csv').read_text(encoding='utf-8')
        self.assertEqual(text.strip(), ','.join(REPORT_COLUMNS))

    def test_best_of_repetitions(self):
        """Тест выбора лучшего запуска и файлов результатов"""
        report = run_benchmark(self.config('ts'))
        self.assertEqual(len(report.rows), 1)
        row = report.rows[0]
        self.assertEqual(row.name, 'tiny6')
        self.assertIn(row.best_seed, (0, 1))
        self.assertIsNone(row.deviation)
        solution_path = self.root / 'ts' / f'tiny6_ts_seed{row.best_seed}.json'
        document = json.loads(solution_path.read_text(encoding='utf-8'))
        self.assertAlmostEqual(document['total_cost'], row.distance)
        self.assertEqual(document['variant'], 'ts')
        restored = solution_from_document(document, parse_instance(TINY_VRP))
        self.assertAlmostEqual(restored.total_cost, row.distance, places=6)
        self.assertTrue((self.root / 'ts' / 'tiny6_ts_seed0.meta.json').exists())
        self.assertTrue((self.root / 'ts' / 'tiny6_ts_seed0.trajectory.csv').exists())

    def test_reports_are_deterministic(self):
        """Тест побайтовой воспроизводимости отчета и решений"""
        run_benchmark(self.config('first'))
        run_benchmark(self.config('second'))
        for name in ('report.csv', 'tiny6_ts_seed0.json', 'tiny6_ts_seed1.json'):
            self.assertEqual(
                (self.root / 'first' / name).read_bytes(), (self.root / 'second' / name).read_bytes(), name,
            )

    def test_broken_instance_does_not_stop_others(self):
        """Тест: ошибка одного экземпляра попадает в отчет"""
        broken = self.root / 'broken.vrp'
        broken.write_text("NAME : broken\nDIMENSION : x\n", encoding='utf-8')
        with self.assertLogs('routing.bench', level='ERROR'):
            report = run_benchmark(self.config('mixed', instance_paths=(self.instance_path, broken), repetitions=1))
        self.assertEqual([row.name for row in report.rows], ['broken', 'tiny6'])
        self.assertTrue(report.rows[0].error)
        self.assertIsNotNone(report.rows[1].distance)

    def test_non_utf8_instance_reported(self):
        """Тест: файл не в UTF-8 дает строку с ошибкой, остальные решаются"""
        garbled = self.root / 'garbled.vrp'
        garbled.write_bytes(b'NAME : garbled\n\xff\xfe\n')
        with self.assertLogs('routing.bench', level='ERROR'):
            report = run_benchmark(self.config('encoding', instance_paths=(self.instance_path, garbled), repetitions=1))
        self.assertEqual([row.name for row in report.rows], ['garbled', 'tiny6'])
        self.assertIn('UTF-8', report.rows[0].error)
        self.assertIsNotNone(report.rows[1].distance)

    def test_clarke_wright_fleet_violation_reported(self):
        """Тест: решение Кларка-Райта сверх парка попадает в отчет с пометкой"""
        report = run_benchmark(self.config(
            'cw_small', variant='clarke_wright', repetitions=1,
            search=SearchParams(max_iterations=40, non_improve_stop=30, fleet=2),
        ))
        row = report.rows[0]
        self.assertIsNotNone(row.distance)
        self.assertTrue(row.error.startswith('недопустимо'))
        document = json.loads((self.root / 'cw_small' / 'tiny6_clarke_wright_seed0.json').read_text(encoding='utf-8'))
        self.assertFalse(document['feasible'])

    def test_clarke_wright_variant(self):
        """Тест варианта Кларка-Райта"""
        report = run_benchmark(self.config('cw', variant='clarke_wright', repetitions=1))
        self.assertEqual(report.rows[0].stop_reason, 'construction')
        self.assertTrue(report.rows[0].vehicles_used >= 3)


# ============================================================================
# МОДЕЛИ
# ============================================================================

class BenchmarkModelTest(TestCase):
    """Тесты моделей результатов бенчмарка"""

    def test_mean_deviation(self):
        """Тест среднего отклонения запуска"""
        run = BenchmarkRun.objects.create(variant='ts_so', sampler='sa', repetitions=3, time_limit_seconds=600)
        InstanceResult.objects.create(run=run, instance_name='CMT1', distance=537, deviation=2.36)
        InstanceResult.objects.create(run=run, instance_name='CMT2', distance=890, deviation=6.55)
        InstanceResult.objects.create(run=run, instance_name='X', error='ошибка разбора')
        self.assertAlmostEqual(run.mean_deviation(), 4.455)
        self.assertEqual([r.instance_name for r in run.results.all()], ['CMT1', 'CMT2', 'X'])

    def test_str_representation(self):
        """Тест строкового представления результата"""
        run = BenchmarkRun.objects.create(variant='ts', sampler='sa', repetitions=1, time_limit_seconds=60)
        ok = InstanceResult.objects.create(run=run, instance_name='CMT1', distance=537.123)
        failed = InstanceResult.objects.create(run=run, instance_name='CMT2', error='нет файла')
        self.assertEqual(str(ok), 'CMT1: 537.12')
        self.assertEqual(str(failed), 'CMT2: ошибка')
        self.assertTrue(ok.succeeded)
        self.assertFalse(failed.succeeded)
        self.assertIsNone(BenchmarkRun.objects.create(
            variant='ts', sampler='sa', repetitions=1, time_limit_seconds=60).mean_deviation())


# ============================================================================
# КОМАНДЫ
# ============================================================================

class CommandTest(TestCase):
    """Тесты management-команд solve, bench и plot"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.instance_path = self.root / 'tiny6.vrp'
        self.instance_path.write_text(TINY_VRP, encoding='utf-8')
        self.matrix_path = self.root / 'm3.vrp'
        self.matrix_path.write_text(MATRIX_VRP, encoding='utf-8')

    def call(self, *args):
        out = io.StringIO()
        call_command(*args, stdout=out, stderr=io.StringIO())
        return out.getvalue()

    def test_solve_clarke_wright(self):
        """Тест решения вариантом cw"""
        output = self.call('solve', str(self.instance_path), '--variant', 'cw', '--out', str(self.root), '--svg')
        self.assertIn('Стоимость', output)
        document = json.loads((self.root / 'tiny6_clarke_wright_seed0.json').read_text(encoding='utf-8'))
        self.assertTrue(document['feasible'])
        self.assertTrue((self.root / 'tiny6_clarke_wright_seed0.svg').exists())

    def test_solve_tabu(self):
        """Тест решения табу-поиском с лимитом итераций"""
        self.call('solve', str(self.instance_path), '--variant', 'ts', '--max-iterations', '25',
                  '--seed', '2', '--out', str(self.root))
        document = json.loads((self.root / 'tiny6_ts_seed2.json').read_text(encoding='utf-8'))
        self.assertEqual(document['seed'], 2)
        self.assertEqual(document['stop_reason'], 'max_iterations')
        meta = json.loads((self.root / 'tiny6_ts_seed2.meta.json').read_text(encoding='utf-8'))
        self.assertEqual(meta['iterations'], 25)

    def test_usage_error_exit_code(self):
        """Тест кода 1 для неверного аргумента"""
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', str(self.instance_path), '--variant', 'genetic')
        self.assertEqual(ctx.exception.returncode, 1)

    def test_config_error_exit_code(self):
        """Тест кода 1 для ошибки конфигурации"""
        config = self.root / 'bad.conf'
        config.write_text("tabu_length = 3\n", encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', str(self.instance_path), '--config', str(config), '--out', str(self.root))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_instance_error_exit_code(self):
        """Тест кода 2 для отсутствующего экземпляра"""
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', str(self.root / 'missing.vrp'), '--out', str(self.root))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_non_utf8_instance_exit_code(self):
        """Тест кода 2 для файла не в UTF-8"""
        garbled = self.root / 'garbled.vrp'
        garbled.write_bytes(b'NAME : garbled\n\xff\xfe\n')
        with self.assertRaises(CommandError) as ctx:
            self.call('solve', str(garbled), '--out', str(self.root))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_runtime_error_exit_code(self):
        """Тест кода 3: рисунок экземпляра без координат"""
        solution_path = self.root / 'm3.json'
        solution_path.write_text(json.dumps({'routes': [[1, 3]]}), encoding='utf-8')
        with self.assertRaises(CommandError) as ctx:
            self.call('plot', str(solution_path), str(self.matrix_path))
        self.assertEqual(ctx.exception.returncode, 3)

    def test_plot(self):
        """Тест рисования сохраненного решения"""
        self.call('solve', str(self.instance_path), '--variant', 'cw', '--out', str(self.root))
        solution_path = self.root / 'tiny6_clarke_wright_seed0.json'
        svg_path = self.root / 'routes.svg'
        png_path = self.root / 'routes.png'
        output = self.call('plot', str(solution_path), str(self.instance_path), '--out', str(svg_path),
                           '--png', str(png_path))
        self.assertIn('пересечений', output)
        self.assertIn('<polyline', svg_path.read_text(encoding='utf-8'))
        self.assertTrue(png_path.exists())

    def test_bench_save(self):
        """Тест бенчмарка с сохранением в базу"""
        output = self.call('bench', str(self.root), '--variant', 'cw', '--reps', '1', '--out', str(self.root / 'out'),
                           '--save', '--published')
        self.assertIn('Сохранено в базе', output)
        run = BenchmarkRun.objects.get()
        self.assertEqual(run.variant, 'clarke_wright')
        self.assertEqual(sorted(run.results.values_list('instance_name', flat=True)), ['m3', 'tiny6'])
        self.assertTrue((self.root / 'out' / 'clarke_wright' / 'report.csv').exists())
        self.assertTrue((self.root / 'out' / 'deviation_means.csv').exists())

    def test_bench_missing_target(self):
        """Тест кода 2 для несуществующего каталога"""
        with self.assertRaises(CommandError) as ctx:
            self.call('bench', str(self.root / 'nowhere'), '--out', str(self.root / 'out'))
        self.assertEqual(ctx.exception.returncode, 2)


# ============================================================================
# ДЛИТЕЛЬНЫЕ БЕНЧМАРКИ (HQTS_RUN_BENCHMARKS=1)
# ============================================================================

@skipUnless(RUN_BENCHMARKS, 'длительные бенчмарки включаются переменной HQTS_RUN_BENCHMARKS=1')
class LongBenchmarkTest(SimpleTestCase):
    """
    Проверки качества на полном лимите времени.

    Файлы CMT берутся из HQTS_DATA_DIR; если файла нет, тест пропускается.
    """

    def cmt_instance(self, name):
        path = settings.HQTS_DATA_DIR / f'{name}.vrp'
        if not path.exists():
            self.skipTest(f'нет файла {path}')
        return load_instance(path)

    def best_cost(self, instance, so_enabled=True, seeds=3, time_limit=600.0):
        best = math.inf
        for seed in range(seeds):
            params = SearchParams(rng_seed=seed, time_limit_seconds=time_limit, so_enabled=so_enabled)
            resequencer = Resequencer(instance.costs, anneal=AnnealParams(rng_seed=seed))
            result = run_search(instance, params, resequencer=resequencer)
            self.assertTrue(check_feasibility(result.best, instance).feasible)
            best = min(best, result.best.total_cost)
        return best

    def test_cmt1_with_oscillation(self):
        """Тест CMT1: лучшее из трех запусков по 10 минут не хуже BKS + 3%"""
        self.assertLessEqual(self.best_cost(self.cmt_instance('CMT1')), 540.35)

    def test_cmt2_with_oscillation(self):
        """Тест CMT2: лучшее из трех запусков по 10 минут не длиннее 902"""
        self.assertLessEqual(self.best_cost(self.cmt_instance('CMT2')), 902)

    def test_oscillation_not_worse_than_plain_tabu(self):
        """Тест CMT1-CMT3: среднее отклонение TS-SO не больше, чем у TS"""
        instances = [self.cmt_instance(name) for name in ('CMT1', 'CMT2', 'CMT3')]
        means = {}
        for so_enabled in (False, True):
            deviations = [deviation(self.best_cost(instance, so_enabled), instance.bks.distance) for instance in instances]
            means[so_enabled] = sum(deviations) / len(deviations)
        self.assertLessEqual(means[True], means[False])

    def test_cmt1_cache_hits(self):
        """Тест CMT1: повторные наборы остановок берутся из кэша без вызова сэмплера"""
        instance = self.cmt_instance('CMT1')
        resequencer = Resequencer(instance.costs, anneal=AnnealParams(rng_seed=0))
        result = run_search(instance, SearchParams(rng_seed=0, time_limit_seconds=600.0), resequencer=resequencer)
        self.assertGreater(result.stats.cache_hits, 0)
        self.assertEqual(result.stats.cache_hits, resequencer.cache.hits)
        self.assertLessEqual(result.stats.sampler_calls, resequencer.cache.misses)

    def test_large_instances_smoke(self):
        """Тест CMT4 и CMT5: запуск завершается допустимым решением"""
        for name in ('CMT4', 'CMT5'):
            with self.subTest(name=name):
                instance = self.cmt_instance(name)
                cost = self.best_cost(instance, seeds=1)
                self.assertTrue(math.isfinite(cost))

    def test_small_instances_near_optimum(self):
        """Тест малых экземпляров: в пределах 5% от оптимума в 18 из 20"""
        hits = 0
        for seed in range(20):
            instance = random_instance(1000 + seed, customers=7)
            result = run_search(instance, SearchParams(rng_seed=seed, non_improve_stop=2000))
            if result.best.total_cost <= 1.05 * exact_cvrp_cost(instance, instance.default_fleet()):
                hits += 1
        self.assertGreaterEqual(hits, 18)
