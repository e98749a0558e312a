from django.db import models


class BenchmarkRun(models.Model):
    """Один запуск бенчмарка (команда bench --save)"""
    VARIANT_CHOICES = [
        ('ts', 'TS'),
        ('ts_so', 'TS + стратегическая осцилляция'),
        ('clarke_wright', 'Кларк-Райт'),
    ]
    SAMPLER_CHOICES = [
        ('sa', 'Имитация отжига'),
        ('remote', 'Удаленный сэмплер'),
        ('brute', 'Полный перебор'),
    ]

    variant = models.CharField(max_length=20, choices=VARIANT_CHOICES, verbose_name="Вариант алгоритма")
    sampler = models.CharField(max_length=20, choices=SAMPLER_CHOICES, verbose_name="Сэмплер")
    repetitions = models.PositiveIntegerField(verbose_name="Повторов на экземпляр")
    seed = models.IntegerField(default=0, verbose_name="Базовый seed")
    time_limit_seconds = models.FloatField(verbose_name="Лимит времени, с")
    config = models.JSONField(default=dict, blank=True, verbose_name="Конфигурация")
    created_at = models.DateTimeField(auto_now_add=True, verbose_name="Дата запуска")

    class Meta:
        verbose_name = "Запуск бенчмарка"
        verbose_name_plural = "Запуски бенчмарков"
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.get_variant_display()} ({self.repetitions} повт.) {self.created_at:%Y-%m-%d %H:%M}"

    def mean_deviation(self):
        """Среднее отклонение от BKS по экземплярам, где оно известно"""
        values = [r.deviation for r in self.results.all() if r.deviation is not None]
        if not values:
            return None
        return sum(values) / len(values)


class InstanceResult(models.Model):
    """Лучший результат по одному экземпляру в рамках запуска"""
    run = models.ForeignKey(BenchmarkRun, on_delete=models.CASCADE, related_name='results', verbose_name="Запуск")
    instance_name = models.CharField(max_length=100, verbose_name="Экземпляр")
    size = models.PositiveIntegerField(default=0, verbose_name="Число клиентов")
    bks = models.FloatField(null=True, blank=True, verbose_name="BKS")
    distance = models.FloatField(null=True, blank=True, verbose_name="Лучшая длина")
    deviation = models.FloatField(null=True, blank=True, verbose_name="Отклонение, %")
    vehicles_initial = models.PositiveIntegerField(null=True, blank=True, verbose_name="Машин в начальном решении")
    vehicles_used = models.PositiveIntegerField(null=True, blank=True, verbose_name="Машин использовано")
    wallclock_seconds = models.FloatField(null=True, blank=True, verbose_name="Время, с")
    best_seed = models.IntegerField(null=True, blank=True, verbose_name="Seed лучшего запуска")
    stop_reason = models.CharField(max_length=20, blank=True, verbose_name="Причина остановки")
    crossings = models.PositiveIntegerField(null=True, blank=True, verbose_name="Пересечений маршрутов")
    error = models.TextField(blank=True, verbose_name="Ошибка")

    class Meta:
        verbose_name = "Результат экземпляра"
        verbose_name_plural = "Результаты экземпляров"
        ordering = ['instance_name']
        unique_together = ['run', 'instance_name']

    def __str__(self):
        if self.distance is None:
            return f"{self.instance_name}: ошибка"
        return f"{self.instance_name}: {self.distance:.2f}"

    @property
    def succeeded(self):
        return not self.error
