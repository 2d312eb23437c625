# Единицы: внутри всё в рад/с и секундах, наружу (CLI/CSV/конфиг): величины,
# делённые на 2π, в МГц/ГГц, как в статье (γ/2π, ω/2π).
import math

TWO_PI = 2.0 * math.pi

MHZ = TWO_PI * 1e6   # рад/с на 1 МГц (частота или скорость распада /2π)
GHZ = TWO_PI * 1e9
NS = 1e-9
US = 1e-6


def mhz(value: float) -> float:
    return value * MHZ


def ghz(value: float) -> float:
    return value * GHZ


def ns(value: float) -> float:
    return value * NS


def us(value: float) -> float:
    return value * US


def to_mhz(rate):
    return rate / MHZ


def to_ghz(omega):
    return omega / GHZ


def to_ns(seconds):
    return seconds / NS
