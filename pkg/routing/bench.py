"""
Бенчмарк: прогон вариантов (TS, TS + осцилляция, Кларк-Райт) по набору
экземпляров с несколькими seed, отчеты CSV и сводка отклонений от BKS.
"""
import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from joblib import Parallel, delayed

from .construct import clarke_wright
from .exceptions import HqtsError
from .instance import CvrpInstance, load_instance, lookup_bks
from .plotting import count_crossings
from .qubo import EncodingParams
from .sampler import AnnealParams, Resequencer
from .solution import Solution, check_feasibility, solution_to_document
from .tabu import SearchParams, SearchStats, run_search, write_trajectory_csv

logger = logging.getLogger(__name__)

VARIANTS = ('ts', 'ts_so', 'clarke_wright')
SAMPLERS = Resequencer.SOLVERS

REPORT_COLUMNS = [
    'instance', 'size', 'bks', 'distance', 'deviation', 'vehicles_initial', 'vehicles_used',
    'best_seed', 'stop_reason', 'crossings', 'error',
]

# Опубликованные длины лучших решений (CMT, лучшее из трех запусков)
PUBLISHED_RESULTS: Dict[str, Dict[str, float]] = {
    'ts': {
        'CMT1': 537, 'CMT2': 890, 'CMT3': 938, 'CMT4': 1254, 'CMT5': 1554, 'CMT11': 1425, 'CMT12': 850,
    },
    'ts_so': {
        'CMT1': 524.61, 'CMT2': 856, 'CMT3': 876, 'CMT4': 1094, 'CMT5': 1442, 'CMT11': 1096, 'CMT12': 829,
    },
    'clarke_wright': {
        'CMT1': 585, 'CMT2': 900, 'CMT3': 886, 'CMT4': 1204, 'CMT5': 1540, 'CMT12': 877,
    },
}

# Машин в начальном решении TS и TS-SO при парке BKS + 1
PUBLISHED_INITIAL_VEHICLES = {
    'CMT1': 6, 'CMT2': 11, 'CMT3': 9, 'CMT4': 13, 'CMT5': 18, 'CMT11': 8, 'CMT12': 11,
}


@dataclass(frozen=True)
class RunConfig:
    instance_paths: Tuple[Path, ...] = ()
    variant: str = 'ts_so'
    search: SearchParams = SearchParams()
    sampler: str = 'sa'
    anneal: AnnealParams = AnnealParams()
    encoding: EncodingParams = EncodingParams()
    repetitions: int = 3
    seed: int = 0
    output_dir: Path = Path('results')
    workers: int = 1
    endpoint: Optional[str] = None
    remote_timeout: float = 30.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"неизвестный вариант {self.variant!r}, ожидается один из {VARIANTS}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"неизвестный сэмплер {self.sampler!r}, ожидается один из {SAMPLERS}")
        if self.repetitions < 1:
            raise ValueError("repetitions должно быть >= 1")
        if self.workers < 1:
            raise ValueError("workers должно быть >= 1")

    def seeds(self) -> List[int]:
        return [self.seed + r for r in range(self.repetitions)]


def deviation(distance: Optional[float], bks: Optional[float]) -> Optional[float]:
    """(distance - bks) / bks * 100; None, если что-то неизвестно"""
    if distance is None or not bks:
        return None
    return (distance - bks) / bks * 100.0


# ============================================================================
# ОДИН ЗАПУСК
# ============================================================================

@dataclass
class RunOutcome:
    solution: Solution
    stats: SearchStats
    seed: int
    wallclock_seconds: float


def solve_instance(instance: CvrpInstance, config: RunConfig, seed: int) -> RunOutcome:
    """Один запуск выбранного варианта с заданным seed"""
    started = time.monotonic()
    if config.variant == 'clarke_wright':
        solution = clarke_wright(instance, config.search.fleet or instance.default_fleet())
        stats = SearchStats(
            initial_vehicles=solution.vehicles_used, initial_cost=solution.total_cost, stop_reason='construction',
        )
    else:
        params = replace(config.search, so_enabled=config.variant == 'ts_so', rng_seed=seed)
        resequencer = Resequencer(
            instance.costs, solver=config.sampler, anneal=replace(config.anneal, rng_seed=seed),
            encoding=config.encoding, endpoint=config.endpoint, timeout=config.remote_timeout,
        )
        result = run_search(instance, params, resequencer=resequencer)
        solution, stats = result.best, result.stats
    wallclock = time.monotonic() - started
    stats.wallclock_seconds = wallclock
    return RunOutcome(solution=solution, stats=stats, seed=seed, wallclock_seconds=wallclock)


def run_file_stem(instance: CvrpInstance, variant: str, seed: int) -> str:
    return f"{instance.name}_{variant}_seed{seed}"


def write_run_outputs(outcome: RunOutcome, instance: CvrpInstance, variant: str, output_dir) -> Path:
    """
    Документ решения (детерминированный), файл метаданных со временем
    работы и траектория поиска. Возвращает путь к документу решения.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    stem = run_file_stem(instance, variant, outcome.seed)
    document = solution_to_document(outcome.solution, instance, seed=outcome.seed)
    document['variant'] = variant
    document['stop_reason'] = outcome.stats.stop_reason
    solution_path = output_dir / f"{stem}.json"
    solution_path.write_text(json.dumps(document, indent=2, ensure_ascii=False) + '\n', encoding='utf-8')
    meta = {
        'wallclock_seconds': outcome.wallclock_seconds,
        'iterations': outcome.stats.iterations,
        'resequence_calls': outcome.stats.resequence_calls,
        'resequence_improvements': outcome.stats.resequence_improvements,
        'sampler_calls': outcome.stats.sampler_calls,
        'cache_hits': outcome.stats.cache_hits,
        'sampler_fallbacks': outcome.stats.sampler_fallbacks,
        'finished_at': datetime.now(timezone.utc).isoformat(),
    }
    (output_dir / f"{stem}.meta.json").write_text(json.dumps(meta, indent=2) + '\n', encoding='utf-8')
    if outcome.stats.trajectory:
        write_trajectory_csv(outcome.stats, output_dir / f"{stem}.trajectory.csv")
    return solution_path


@dataclass
class RunRecord:
    """Итог одного (экземпляр, seed) для сборки отчета"""
    path: str
    seed: int
    name: str = ''
    size: int = 0
    bks: Optional[float] = None
    distance: Optional[float] = None
    feasible: bool = False
    vehicles_initial: Optional[int] = None
    vehicles_used: Optional[int] = None
    wallclock_seconds: Optional[float] = None
    stop_reason: str = ''
    crossings: Optional[int] = None
    violations: str = ''
    error: str = ''


def _run_one(path: Path, config: RunConfig, seed: int) -> RunRecord:
    record = RunRecord(path=str(path), seed=seed, name=Path(path).stem)
    try:
        instance = load_instance(path)
        record.name = instance.name
        record.size = instance.num_customers
        record.bks = instance.bks.distance if instance.bks else None
        outcome = solve_instance(instance, config, seed)
        write_run_outputs(outcome, instance, config.variant, config.output_dir)
    except HqtsError as exc:
        logger.error("Экземпляр %s, seed %d: %s", record.name, seed, exc)
        record.error = str(exc)
        return record
    solution = outcome.solution
    record.distance = solution.total_cost
    report = check_feasibility(solution, instance)
    record.feasible = report.feasible
    record.violations = '; '.join(v.detail for v in report.violations)
    record.vehicles_initial = outcome.stats.initial_vehicles
    record.vehicles_used = solution.vehicles_used
    record.wallclock_seconds = outcome.wallclock_seconds
    record.stop_reason = outcome.stats.stop_reason or ''
    record.crossings = count_crossings(solution, instance) if instance.has_coordinates else None
    return record


# ============================================================================
# ОТЧЕТ
# ============================================================================

@dataclass
class InstanceRow:
    name: str
    size: int = 0
    bks: Optional[float] = None
    distance: Optional[float] = None
    deviation: Optional[float] = None
    vehicles_initial: Optional[int] = None
    vehicles_used: Optional[int] = None
    wallclock_seconds: Optional[float] = None
    best_seed: Optional[int] = None
    stop_reason: str = ''
    crossings: Optional[int] = None
    error: str = ''

    def csv_values(self) -> List[str]:
        def fmt(value, spec=''):
            return '' if value is None else format(value, spec)
        return [
            self.name, fmt(self.size), fmt(self.bks, 'g'), fmt(self.distance, '.4f'), fmt(self.deviation, '.2f'),
            fmt(self.vehicles_initial), fmt(self.vehicles_used), fmt(self.best_seed), self.stop_reason,
            fmt(self.crossings), self.error,
        ]


@dataclass
class BenchReport:
    variant: str
    rows: List[InstanceRow] = field(default_factory=list)

    def csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow(row.csv_values())
        return buffer.getvalue()

    def write(self, output_dir) -> Path:
        """report.csv без времени и report_meta.json со временем работы"""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        path = output_dir / 'report.csv'
        path.write_text(self.csv_text(), encoding='utf-8')
        meta = {
            'variant': self.variant,
            'generated_at': datetime.now(timezone.utc).isoformat(),
            'wallclock_seconds': {row.name: row.wallclock_seconds for row in self.rows},
        }
        (output_dir / 'report_meta.json').write_text(json.dumps(meta, indent=2) + '\n', encoding='utf-8')
        return path

    def mean_deviation(self) -> Optional[float]:
        values = [row.deviation for row in self.rows if row.deviation is not None]
        return sum(values) / len(values) if values else None


def _best_row(records: Sequence[RunRecord]) -> InstanceRow:
    """
    Лучший допустимый запуск. Если допустимых нет, берется лучший из
    решенных, а нарушения попадают в столбец error.
    """
    first = records[0]
    solved = [r for r in records if r.distance is not None]
    if not solved:
        errors = [r.error for r in records if r.error] or ['нет решения ни в одном запуске']
        return InstanceRow(name=first.name, size=first.size, bks=first.bks, error=errors[0])
    feasible = [r for r in solved if r.feasible]
    best = min(feasible or solved, key=lambda r: (r.distance, r.seed))
    return InstanceRow(
        name=best.name, size=best.size, bks=best.bks, distance=best.distance,
        deviation=deviation(best.distance, best.bks),
        vehicles_initial=best.vehicles_initial, vehicles_used=best.vehicles_used,
        wallclock_seconds=best.wallclock_seconds, best_seed=best.seed,
        stop_reason=best.stop_reason, crossings=best.crossings,
        error='' if best.feasible else f"недопустимо: {best.violations}",
    )


def run_benchmark(config: RunConfig) -> BenchReport:
    """
    Прогоняет каждый экземпляр repetitions раз (seed, seed+1, ...) в пуле
    joblib и оставляет лучший допустимый результат. Ошибка экземпляра
    попадает в отчет, остальные экземпляры продолжают считаться.
    """
    tasks = [(Path(path), seed) for path in config.instance_paths for seed in config.seeds()]
    logger.info(
        "Бенчмарк %s: %d экземпляров x %d повторов, воркеров %d",
        config.variant, len(config.instance_paths), config.repetitions, config.workers,
    )
    records: List[RunRecord] = Parallel(n_jobs=config.workers)(
        delayed(_run_one)(path, config, seed) for path, seed in tasks
    ) if tasks else []

    by_path: Dict[str, List[RunRecord]] = {}
    for record in records:
        by_path.setdefault(record.path, []).append(record)
    rows = sorted((_best_row(group) for group in by_path.values()), key=lambda row: row.name)
    report = BenchReport(variant=config.variant, rows=rows)
    report.write(config.output_dir)
    return report


def published_report(variant: str) -> BenchReport:
    """Отчет из опубликованных длин для сравнения в сводке"""
    rows = []
    for name, distance in sorted(PUBLISHED_RESULTS[variant].items()):
        bks = lookup_bks(name)
        rows.append(InstanceRow(
            name=name, bks=bks.distance if bks else None, distance=distance,
            deviation=deviation(distance, bks.distance if bks else None),
            vehicles_initial=None if variant == 'clarke_wright' else PUBLISHED_INITIAL_VEHICLES.get(name),
        ))
    return BenchReport(variant=f"published_{variant}", rows=rows)


# ============================================================================
# СВОДКА ОТКЛОНЕНИЙ
# ============================================================================

@dataclass
class DeviationSummary:
    rows: List[Tuple[str, str, Optional[float], Optional[float]]]
    means: Dict[str, Optional[float]]


def emit_deviation_summary(reports: Sequence[BenchReport], output_dir=None) -> DeviationSummary:
    """
    Отклонения по экземплярам и среднее по каждому варианту.

    Пишет deviation_summary.csv (instance, variant, distance, deviation) и
    deviation_means.csv (variant, mean_deviation, instances). Строка без
    BKS выводится с пустым отклонением и в среднее не входит.
    """
    rows = []
    means: Dict[str, Optional[float]] = {}
    for report in reports:
        for row in report.rows:
            bks = row.bks
            if bks is None:
                known = lookup_bks(row.name)
                bks = known.distance if known else None
            rows.append((row.name, report.variant, row.distance, deviation(row.distance, bks)))
        values = [dev for name, variant, _, dev in rows if variant == report.variant and dev is not None]
        means[report.variant] = sum(values) / len(values) if values else None

    if output_dir is not None:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        with open(output_dir / 'deviation_summary.csv', 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(['instance', 'variant', 'distance', 'deviation'])
            for name, variant, distance, dev in rows:
                writer.writerow([
                    name, variant, '' if distance is None else f"{distance:.4f}",
                    '' if dev is None else f"{dev:.2f}",
                ])
        with open(output_dir / 'deviation_means.csv', 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(['variant', 'mean_deviation', 'instances'])
            for variant, mean in means.items():
                count = sum(1 for _, v, _, dev in rows if v == variant and dev is not None)
                writer.writerow([variant, '' if mean is None else f"{mean:.2f}", count])
    return DeviationSummary(rows=rows, means=means)
