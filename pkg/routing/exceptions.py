"""
Исключения решателя HQTS.

Все ошибки библиотеки наследуются от HqtsError; management-команды
переводят их в CommandError с соответствующим кодом выхода.
"""


class HqtsError(Exception):
    """Базовая ошибка решателя"""


class ConfigError(HqtsError):
    """Некорректная конфигурация запуска (код выхода 1)"""


class InstanceError(HqtsError):
    """Ошибка экземпляра задачи (код выхода 2)"""


class InstanceParseError(InstanceError):
    """Нарушение грамматики файла экземпляра"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"строка {line}: {message}"
        super().__init__(message)


class InstanceValidationError(InstanceError):
    """Экземпляр разобран, но не проходит проверки (асимметрия, спрос > Q)"""


class StaleMoveError(HqtsError):
    """Ход ссылается на клиента, которого уже нет на записанной позиции"""


class ConstructionError(HqtsError):
    """Построитель не смог разместить всех клиентов при заданном парке"""


class EmptyNeighborhoodError(HqtsError):
    """Окрестность текущего решения пуста"""


class SearchInvariantError(HqtsError):
    """Нарушен инвариант поиска (покрытие клиентов, допустимость рекорда)"""


class QuboError(HqtsError):
    """Некорректные параметры QUBO или присваивания"""


class PermutationError(QuboError):
    """Присваивание не является матрицей перестановки"""

    def __init__(self, bad_rows, bad_columns):
        self.bad_rows = tuple(bad_rows)
        self.bad_columns = tuple(bad_columns)
        super().__init__(
            f"присваивание не является перестановкой: строки {list(self.bad_rows)}, "
            f"позиции {list(self.bad_columns)}"
        )


class SamplerError(HqtsError):
    """Ошибка сэмплера QUBO"""


class RemoteSamplerError(SamplerError):
    """Сбой сети, некорректный ответ или несовпадение энергий удаленного сэмплера"""


class PlotError(HqtsError):
    """Маршруты нельзя нарисовать (нет координат)"""
