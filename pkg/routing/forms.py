from django import forms
from django.core.exceptions import ValidationError


class RunConfigForm(forms.Form):
    """
    Проверка объединенной конфигурации запуска.

    На вход подается словарь после слияния settings.HQTS, файла
    конфигурации и флагов CLI; значения могут быть строками из файла.
    """

    variant = forms.ChoiceField(choices=[
        ('ts', 'TS'),
        ('ts_so', 'TS + стратегическая осцилляция'),
        ('clarke_wright', 'Кларк-Райт'),
    ])
    sampler = forms.ChoiceField(choices=[
        ('sa', 'Имитация отжига'),
        ('remote', 'Удаленный сэмплер'),
        ('brute', 'Полный перебор'),
    ])

    # Табу-поиск
    tenure = forms.IntegerField(min_value=1)
    x_low = forms.FloatField(min_value=0.0)
    x_high = forms.FloatField(min_value=0.0)
    non_improve_stop = forms.IntegerField(min_value=1)
    time_limit_seconds = forms.FloatField(min_value=0.001)
    resequence_trigger = forms.IntegerField(min_value=1)
    max_iterations = forms.IntegerField(min_value=0, required=False)
    fleet = forms.IntegerField(min_value=1, required=False)

    # Сэмплер
    num_reads = forms.IntegerField(min_value=1)
    sweeps_per_read = forms.IntegerField(min_value=1)
    beta_initial = forms.FloatField(required=False)
    beta_final = forms.FloatField(required=False)
    penalty_a = forms.FloatField(required=False)
    penalty_b = forms.FloatField(min_value=0.0)
    remote_timeout = forms.FloatField(min_value=0.001)

    # Бенчмарк
    seed = forms.IntegerField()
    repetitions = forms.IntegerField(min_value=1)
    workers = forms.IntegerField(min_value=1)
    output_dir = forms.CharField(max_length=500)

    def __init__(self, *args, sampler_url=None, **kwargs):
        self.sampler_url = sampler_url
        super().__init__(*args, **kwargs)

    def clean_penalty_a(self):
        penalty_a = self.cleaned_data.get('penalty_a')
        if penalty_a is not None and penalty_a <= 0:
            raise ValidationError("Штраф A должен быть положительным.")
        return penalty_a

    def clean(self):
        """Согласованность параметров между собой"""
        cleaned_data = super().clean()
        x_low = cleaned_data.get('x_low')
        x_high = cleaned_data.get('x_high')
        if x_low is not None and x_high is not None and not 0 < x_low <= x_high:
            raise ValidationError("Нужно 0 < x_low <= x_high.")

        beta_initial = cleaned_data.get('beta_initial')
        beta_final = cleaned_data.get('beta_final')
        if (beta_initial is None) != (beta_final is None):
            raise ValidationError("beta_initial и beta_final задаются вместе или не задаются вовсе.")
        if beta_initial is not None and not 0 < beta_initial < beta_final:
            raise ValidationError("Нужно 0 < beta_initial < beta_final.")

        if cleaned_data.get('sampler') == 'remote' and not self.sampler_url:
            raise ValidationError("Для сэмплера remote задайте адрес в переменной окружения HQTS_SAMPLER_URL.")
        return cleaned_data

    def error_text(self):
        """Ошибки формы одной строкой для сообщения CLI"""
        parts = []
        for field, errors in self.errors.items():
            prefix = '' if field == '__all__' else f"{field}: "
            parts.extend(prefix + str(error) for error in errors)
        return '; '.join(parts)
