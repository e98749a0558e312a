"""
Django settings for hqts_manager project.

Проект не обслуживает HTTP: Django используется как каркас для
management-команд (solve, bench, plot), валидации конфигурации формами,
хранения результатов бенчмарков и запуска тестов.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('HQTS_SECRET_KEY', 'django-insecure-hqts-local-solver-key')

DEBUG = os.environ.get('HQTS_DEBUG', '0') == '1'

ALLOWED_HOSTS = ['localhost', '127.0.0.1']


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes', # Система типов контента
    'routing',                     # Решатель CVRP (HQTS) и бенчмарки
]


TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,  # SVG-шаблон маршрутов лежит в routing/templates
        'OPTIONS': {},
    },
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',  # SQLite для хранения результатов бенчмарков
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization

LANGUAGE_CODE = 'ru'

TIME_ZONE = 'Europe/Moscow'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Параметры решателя по умолчанию.
# Порядок приоритета: флаги CLI > файл конфигурации (key=value) > эти значения.
HQTS = {
    # Табу-поиск
    'variant': 'ts_so',             # ts | ts_so | clarke_wright
    'tenure': 15,                   # Срок табу (итераций)
    'x_low': 0.6,                   # Нижняя граница X = x_low * |V|
    'x_high': 1.1,                  # Верхняя граница X = x_high * |V|
    'non_improve_stop': 5000,       # Остановка после N итераций без улучшения
    'time_limit_seconds': 3600.0,   # Лимит времени одного запуска
    'resequence_trigger': 1000,     # Пересеквенирование каждые N итераций без улучшения
    'max_iterations': None,         # Жесткий лимит итераций (None - без лимита)
    'fleet': None,                  # None - BKS + 1 либо ceil(спрос / Q) + 1

    # Сэмплер QUBO
    'sampler': 'sa',                # sa | remote | brute
    'num_reads': 32,
    'sweeps_per_read': 1000,
    'beta_initial': None,           # None - диапазон beta из коэффициентов QUBO
    'beta_final': None,
    'penalty_a': None,              # None - 2 * max(c) по узлам маршрута
    'penalty_b': 1.0,
    'remote_timeout': 30.0,         # Таймаут удаленного сэмплера, секунды

    # Бенчмарк
    'seed': 0,
    'repetitions': 3,
    'workers': 1,                   # Размер пула процессов для повторов
    'output_dir': 'results',
}

# Профиль "desk" для бенчмарков: 10 минут вместо часа
HQTS_PRESETS = {
    'desk': {'time_limit_seconds': 600.0},
    'full': {'time_limit_seconds': 3600.0},
}

# Адрес удаленного сэмплера берется только из окружения
HQTS_SAMPLER_URL = os.environ.get('HQTS_SAMPLER_URL')

# Каталог с файлами экземпляров CMT
HQTS_DATA_DIR = BASE_DIR / 'data' / 'cmt'


# Логирование решателя
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'INFO',
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'hqts.log',
            'formatter': 'verbose',
        },
        'console': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'routing': {
            'handlers': ['file', 'console'],
            'level': os.environ.get('HQTS_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
