# models.py
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from stateops.services import project_physical
from stateops.models import DensityMatrix2


class GeneratorForm(models.TextChoices):
    # один когерентный оператор скачка: для плоского спектра это √γ_e·σ₋
    FULL = "full", "Full (non-secular) generator"
    SECULAR = "secular", "Secular dressed-state dissipators"


# Служебные исключения для сервиса
class NoUniqueSteadyState(ValidationError):
    def __init__(self, message: str):
        super().__init__(message, code="degenerate")


@dataclass(frozen=True)
class DriveSpec:
    """
    Накачка с частотой Раби Ω и расстройкой Δ = ω_d − ω_q (знак фиксирован:
    Δ > 0: накачка выше кубита). Во вращающейся системе
        H = −(Δ/2)·σ_z + (Ω/2)·σ_x,  |0⟩ = возбуждённое.
    """
    rabi_omega: float
    detuning: float
    duration: float
    qubit_omega: float

    def __post_init__(self):
        if self.rabi_omega < 0:
            raise ValidationError("rabi_omega must be >= 0", code="domain")
        if self.duration < 0:
            raise ValidationError("duration must be >= 0", code="domain")

    @property
    def generalized_rabi(self) -> float:
        return math.hypot(self.rabi_omega, self.detuning)

    @property
    def drive_omega(self) -> float:
        return self.qubit_omega + self.detuning

    @property
    def mixing_theta(self) -> float:
        """cos θ = Δ/Ω_R, sin θ = Ω/Ω_R; θ ∈ [0, π]."""
        return math.atan2(self.rabi_omega, self.detuning)

    def hamiltonian(self) -> np.ndarray:
        d, o = self.detuning, self.rabi_omega
        return np.array([[-d / 2, o / 2], [o / 2, d / 2]], dtype=complex)


@dataclass(frozen=True)
class DressedRates:
    """
    Скорости распада одетых состояний (рад/с):
      rate_minus: излучение на ω_d − Ω_R, |−⟩ → |+⟩, вес cos⁴(θ/2);
      rate_plus : излучение на ω_d + Ω_R, |+⟩ → |−⟩, вес sin⁴(θ/2);
      rate_phi  : несущая ω_d, дефазировка одетого базиса, вес sin²θ/4.
    extra_dephasing: чистая дефазировка кубита сверх ландшафта (по умолчанию 0).
    """
    rate_minus: float
    rate_plus: float
    rate_phi: float
    mixing_theta: float
    extra_dephasing: float = 0.0

    def __post_init__(self):
        for name in ("rate_minus", "rate_plus", "rate_phi", "extra_dephasing"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0", code="domain")
        if not (0.0 <= self.mixing_theta <= math.pi):
            raise ValidationError("mixing_theta out of [0, pi]", code="domain")

    @property
    def total(self) -> float:
        return self.rate_minus + self.rate_plus + self.rate_phi + self.extra_dephasing


@dataclass(frozen=True)
class Trajectory:
    """Матрицы плотности (N, 2, 2) в моменты times, без проекции."""
    times: np.ndarray
    states: np.ndarray

    def pe(self) -> np.ndarray:
        return self.states[:, 0, 0].real

    def traces(self) -> np.ndarray:
        return np.trace(self.states, axis1=1, axis2=2).real

    def min_eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.states + np.conj(np.swapaxes(self.states, 1, 2)))
        return np.linalg.eigvalsh(herm)[:, 0]

    def final(self) -> DensityMatrix2:
        return project_physical(self.states[-1])
