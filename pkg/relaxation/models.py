# models.py
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from landscape.models import CouplingLandscape
from landscape.services import decompose


class SolverTag(models.TextChoices):
    SERIES = "series", "Analytic backflow series"
    DDE = "dde", "Delay equation, method of steps"
    MODE_ORACLE = "mode_oracle", "Discretized waveguide continuum"


class RateConvention(models.TextChoices):
    # κ = γ/2: ранний распад населённости идёт со скоростью γ_in + γ
    AMPLITUDE_HALF_RATES = "amplitude_half_rates", "Amplitude rates γ/2"
    # κ = γ: буквальная запись ряда, ранний распад 2(γ_in + γ)
    POPULATION_RATES = "population_rates", "Population rates γ"


# Служебные исключения для сервиса
class SolverConfigError(ValidationError):
    def __init__(self, message: str):
        super().__init__(message, code="configuration")


@dataclass(frozen=True)
class RelaxationParams:
    """
    Набор (ω_q, γ, γ_in, β, T) для всех трёх решателей релаксации.
    Скорости: в рад/с, T: в с.
    """
    omega_q: float
    gamma: float
    gamma_in: float
    beta: float
    delay_T: float

    def __post_init__(self):
        if self.gamma < 0 or self.gamma_in < 0:
            raise ValidationError("rates must be >= 0", code="domain")
        if not (0.0 <= self.beta <= 1.0):
            raise ValidationError("beta out of [0,1]", code="domain")
        if self.delay_T <= 0:
            raise ValidationError("delay_T must be > 0", code="domain")

    @property
    def gamma_t(self) -> float:
        """γT: ≪ 1: марковский режим, ~0.5: сильно немарковский."""
        return self.gamma * self.delay_T

    def amplitude_rates(self, convention: str = RateConvention.AMPLITUDE_HALF_RATES) -> tuple[float, float]:
        """(κ, κ_in): скорости затухания амплитуды в выбранной конвенции."""
        if convention == RateConvention.AMPLITUDE_HALF_RATES:
            return self.gamma / 2.0, self.gamma_in / 2.0
        if convention == RateConvention.POPULATION_RATES:
            return self.gamma, self.gamma_in
        raise ValidationError(f"unknown rate convention: {convention}", code="configuration")

    @classmethod
    def from_landscape(cls, land: CouplingLandscape, omega_q: float) -> "RelaxationParams":
        parts = decompose(land, omega_q)
        return cls(
            omega_q=omega_q,
            gamma=parts.idt,
            gamma_in=max(parts.intrinsic, 0.0),
            beta=land.beta,
            delay_T=land.delay_T,
        )


@dataclass(frozen=True)
class RelaxationTrace:
    times: np.ndarray
    pe: np.ndarray
    solver_tag: str
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.times.shape != self.pe.shape:
            raise ValidationError("times and pe must have the same length", code="domain")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("times must be strictly increasing", code="domain")
        if self.pe.size and (self.pe.min() < -1e-12 or self.pe.max() > 1 + 1e-12):
            raise ValidationError("pe outside [0, 1]", code="domain")
        if self.solver_tag not in SolverTag.values:
            raise ValidationError(f"unknown solver tag: {self.solver_tag}", code="domain")
