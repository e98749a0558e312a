# Generated by Django 5.2.7 on 2026-10-19 10:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='BenchmarkRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('variant', models.CharField(choices=[('ts', 'TS'), ('ts_so', 'TS + стратегическая осцилляция'), ('clarke_wright', 'Кларк-Райт')], max_length=20, verbose_name='Вариант алгоритма')),
                ('sampler', models.CharField(choices=[('sa', 'Имитация отжига'), ('remote', 'Удаленный сэмплер'), ('brute', 'Полный перебор')], max_length=20, verbose_name='Сэмплер')),
                ('repetitions', models.PositiveIntegerField(verbose_name='Повторов на экземпляр')),
                ('seed', models.IntegerField(default=0, verbose_name='Базовый seed')),
                ('time_limit_seconds', models.FloatField(verbose_name='Лимит времени, с')),
                ('config', models.JSONField(blank=True, default=dict, verbose_name='Конфигурация')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Дата запуска')),
            ],
            options={
                'verbose_name': 'Запуск бенчмарка',
                'verbose_name_plural': 'Запуски бенчмарков',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='InstanceResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('instance_name', models.CharField(max_length=100, verbose_name='Экземпляр')),
                ('size', models.PositiveIntegerField(default=0, verbose_name='Число клиентов')),
                ('bks', models.FloatField(blank=True, null=True, verbose_name='BKS')),
                ('distance', models.FloatField(blank=True, null=True, verbose_name='Лучшая длина')),
                ('deviation', models.FloatField(blank=True, null=True, verbose_name='Отклонение, %')),
                ('vehicles_initial', models.PositiveIntegerField(blank=True, null=True, verbose_name='Машин в начальном решении')),
                ('vehicles_used', models.PositiveIntegerField(blank=True, null=True, verbose_name='Машин использовано')),
                ('wallclock_seconds', models.FloatField(blank=True, null=True, verbose_name='Время, с')),
                ('best_seed', models.IntegerField(blank=True, null=True, verbose_name='Seed лучшего запуска')),
                ('stop_reason', models.CharField(blank=True, max_length=20, verbose_name='Причина остановки')),
                ('crossings', models.PositiveIntegerField(blank=True, null=True, verbose_name='Пересечений маршрутов')),
                ('error', models.TextField(blank=True, verbose_name='Ошибка')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='results', to='routing.benchmarkrun', verbose_name='Запуск')),
            ],
            options={
                'verbose_name': 'Результат экземпляра',
                'verbose_name_plural': 'Результаты экземпляров',
                'ordering': ['instance_name'],
                'unique_together': {('run', 'instance_name')},
            },
        ),
    ]
