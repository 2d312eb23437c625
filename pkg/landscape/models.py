# models.py
# Таблиц нет: здесь доменные типы ландшафта связи (frozen dataclasses) и
# служебные исключения сервиса. Все частоты/скорости: в рад/с, время: в с.
from __future__ import annotations

from dataclasses import dataclass, field

from django.core.exceptions import ValidationError

from .units import TWO_PI, to_ghz, to_mhz


# Служебные исключения для сервиса
class OutOfBand(ValidationError):
    """Частота вне полосы, где задана линия внутренних потерь."""

    def __init__(self, message: str):
        super().__init__(message, code="domain")


class InsufficientSamples(ValidationError):
    def __init__(self, message: str):
        super().__init__(message, code="insufficient_samples")


@dataclass(frozen=True)
class IdtModel:
    """
    sinc²-модель связи одного IDT: γ(ω) = γ_peak · sinc²(N·π·(ω − ω_c)/ω_c).
    gamma_peak: «лишняя» скорость распада в центре полосы IDT.
    """
    gamma_peak: float
    omega_center: float
    n_pairs: int

    def __post_init__(self):
        if self.gamma_peak < 0:
            raise ValidationError("gamma_peak must be >= 0", code="domain")
        if self.omega_center <= 0:
            raise ValidationError("omega_center must be > 0", code="domain")
        if int(self.n_pairs) != self.n_pairs or self.n_pairs < 1:
            raise ValidationError("n_pairs must be a positive integer", code="domain")


@dataclass(frozen=True)
class IntrinsicLossLine:
    """
    γ_in(ω) = c0 + c1·ω, линейно растущие потери в полосе [ω_lo, ω_hi].
    Функция линейная, поэтому неотрицательность проверяем на краях полосы.
    """
    c0: float
    c1: float
    band: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.band
        if not (0 < lo < hi):
            raise ValidationError(
                f"validity band must satisfy 0 < lo < hi, got [{to_ghz(lo):.6g}, {to_ghz(hi):.6g}] GHz",
                code="domain",
            )
        for edge in (lo, hi):
            if self.c0 + self.c1 * edge < 0:
                raise ValidationError(
                    f"gamma_in is negative at {to_ghz(edge):.6g} GHz "
                    f"({to_mhz(self.c0 + self.c1 * edge):.6g} MHz)",
                    code="domain",
                )

    def contains(self, omega: float) -> bool:
        lo, hi = self.band
        return lo <= omega <= hi


@dataclass(frozen=True)
class CouplingLandscape:
    """
    Полная модель γ_e(ω) = γ_in(ω) + γ(ω)·[1 + β·cos(ωT)].
    beta: амплитудное пропускание между точками связи, delay_T: задержка.
    """
    idt: IdtModel
    loss: IntrinsicLossLine
    beta: float
    delay_T: float

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ValidationError("beta out of [0,1]", code="domain")
        if self.delay_T <= 0:
            raise ValidationError("delay_T must be > 0", code="domain")

    @property
    def band(self) -> tuple[float, float]:
        return self.loss.band

    @property
    def modulation_period(self) -> float:
        """Период модуляции γ_e по угловой частоте, 2π/T."""
        return TWO_PI / self.delay_T


@dataclass(frozen=True)
class RateDecomposition:
    """γ_e(ω) по слагаемым: γ_in, γ и интерференционный член γ·β·cos(ωT)."""
    omega: float
    intrinsic: float
    idt: float
    interference: float

    @property
    def total(self) -> float:
        return self.intrinsic + self.idt + self.interference

    def as_mhz(self) -> dict[str, float]:
        return {
            "qubit_ghz": to_ghz(self.omega),
            "gamma_in_mhz": to_mhz(self.intrinsic),
            "gamma_idt_mhz": to_mhz(self.idt),
            "interference_mhz": to_mhz(self.interference),
            "gamma_eff_mhz": to_mhz(self.total),
        }


@dataclass(frozen=True)
class FitReport:
    """
    Итог подгонки уравнения γ_e(ω) к измерениям.

    parameters/std_errors: в единицах ключей конфига (МГц, нс, ...).
    contributions: раздельно γ_in и вклад IDT на краях выборки:
    при малых частотах (1.5 ГГц) они сопоставимы, не считаем, что один доминирует.
    """
    parameters: dict[str, float]
    std_errors: dict[str, float]
    residual_norm: float
    iterations: int
    converged: bool
    delay_identifiable: bool
    phase_offset: float
    phase_residual: float
    n_samples: int
    contributions: list[dict[str, float]] = field(default_factory=list)
    messages: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "parameters": dict(self.parameters),
            "std_errors": dict(self.std_errors),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "delay_identifiable": self.delay_identifiable,
            "phase_offset": self.phase_offset,
            "phase_residual": self.phase_residual,
            "n_samples": self.n_samples,
            "contributions": [dict(c) for c in self.contributions],
            "messages": list(self.messages),
        }
