"""
Сборка конфигурации запуска.

Приоритет: флаги CLI > файл key=value > профиль > settings.HQTS. Итог проверяется
формой RunConfigForm и превращается в неизменяемые dataclass'ы, которые
принимают модули решателя (сами они настройки Django не читают).
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional

from django.conf import settings

from .bench import RunConfig
from .exceptions import ConfigError
from .forms import RunConfigForm
from .qubo import EncodingParams
from .sampler import AnnealParams
from .tabu import SearchParams

logger = logging.getLogger(__name__)

VARIANT_ALIASES = {'cw': 'clarke_wright'}


def parse_config_text(text: str) -> Dict[str, str]:
    """Плоский формат key=value; '#' начинает комментарий, пустые строки пропускаются"""
    values = {}
    known = set(settings.HQTS)
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"строка {number}: ожидается key=value, получено {raw.strip()!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in known:
            raise ConfigError(f"строка {number}: неизвестный параметр {key!r}")
        values[key] = value
    return values


def load_config_file(path) -> Dict[str, str]:
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f"не удалось прочитать файл конфигурации {path}: {exc}") from exc
    return parse_config_text(text)


def resolve_config(cli_values: Optional[Dict[str, object]] = None, config_path=None,
                   preset: Optional[str] = None) -> dict:
    """
    Сливает источники и проверяет результат формой.

    Значения None во флагах CLI означают "не задано". Пустая строка в
    файле конфигурации сбрасывает необязательный параметр в None.
    """
    merged: Dict[str, object] = dict(settings.HQTS)
    if preset:
        try:
            merged.update(settings.HQTS_PRESETS[preset])
        except KeyError:
            raise ConfigError(f"неизвестный профиль {preset!r}, доступны: {sorted(settings.HQTS_PRESETS)}") from None
    if config_path:
        merged.update(load_config_file(config_path))
    for key, value in (cli_values or {}).items():
        if value is not None:
            merged[key] = value
    merged['variant'] = VARIANT_ALIASES.get(merged.get('variant'), merged.get('variant'))

    form = RunConfigForm(data=merged, sampler_url=settings.HQTS_SAMPLER_URL)
    if not form.is_valid():
        raise ConfigError(f"некорректная конфигурация: {form.error_text()}")
    logger.debug("Конфигурация: %s", form.cleaned_data)
    return form.cleaned_data


def search_params(cleaned: dict, so_enabled: Optional[bool] = None) -> SearchParams:
    if so_enabled is None:
        so_enabled = cleaned['variant'] == 'ts_so'
    return SearchParams(
        tenure=cleaned['tenure'],
        x_low=cleaned['x_low'],
        x_high=cleaned['x_high'],
        non_improve_stop=cleaned['non_improve_stop'],
        time_limit_seconds=cleaned['time_limit_seconds'],
        resequence_trigger=cleaned['resequence_trigger'],
        so_enabled=so_enabled,
        rng_seed=cleaned['seed'],
        fleet=cleaned['fleet'],
        max_iterations=cleaned['max_iterations'],
    )


def anneal_params(cleaned: dict) -> AnnealParams:
    return AnnealParams(
        num_reads=cleaned['num_reads'],
        sweeps_per_read=cleaned['sweeps_per_read'],
        beta_initial=cleaned['beta_initial'],
        beta_final=cleaned['beta_final'],
        rng_seed=cleaned['seed'],
    )


def encoding_params(cleaned: dict) -> EncodingParams:
    return EncodingParams(penalty_a=cleaned['penalty_a'], penalty_b=cleaned['penalty_b'])


def run_config(cleaned: dict, instance_paths: Iterable, output_dir=None) -> RunConfig:
    """Полная конфигурация для run_benchmark"""
    return RunConfig(
        instance_paths=tuple(Path(p) for p in instance_paths),
        variant=cleaned['variant'],
        search=search_params(cleaned),
        sampler=cleaned['sampler'],
        anneal=anneal_params(cleaned),
        encoding=encoding_params(cleaned),
        repetitions=cleaned['repetitions'],
        seed=cleaned['seed'],
        output_dir=Path(output_dir or cleaned['output_dir']),
        workers=cleaned['workers'],
        endpoint=settings.HQTS_SAMPLER_URL,
        remote_timeout=cleaned['remote_timeout'],
    )
