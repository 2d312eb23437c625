# models.py
"""
Двухуровневая система. Соглашения (ими пользуются все модули):

    базис          |0⟩ = возбуждённое (e), |1⟩ = основное (g)
    ρ00            населённость возбуждённого состояния P_e
    rz = ⟨σ_z⟩     ρ00 − ρ11        (+1: возбуждено)
    rx = ⟨σ_x⟩     2·Re ρ01
    ry = ⟨σ_y⟩     −2·Im ρ01        (σ_y = [[0, −i], [i, 0]] в этом базисе)
    σ₋             |g⟩⟨e| = [[0, 0], [1, 0]]
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError

TRACE_TOL = 1e-12
HERMITIAN_TOL = 1e-12
POSITIVITY_TOL = 1e-12


class InvalidState(ValidationError):
    def __init__(self, message: str):
        super().__init__(message, code="domain")


@dataclass(frozen=True)
class DensityMatrix2:
    rho00: complex
    rho01: complex
    rho10: complex
    rho11: complex

    def __post_init__(self):
        if abs(self.rho10 - np.conj(self.rho01)) > HERMITIAN_TOL:
            raise InvalidState("density matrix is not Hermitian")
        if abs(self.rho00.imag) > HERMITIAN_TOL or abs(self.rho11.imag) > HERMITIAN_TOL:
            raise InvalidState("density matrix diagonal must be real")
        trace = (self.rho00 + self.rho11).real
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidState(f"trace {trace!r} differs from 1")
        if self.eigenvalues().min() < -POSITIVITY_TOL:
            raise InvalidState("density matrix has a negative eigenvalue")

    @classmethod
    def from_array(cls, arr) -> "DensityMatrix2":
        m = np.asarray(arr, dtype=complex).reshape(2, 2)
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))

    def as_array(self) -> np.ndarray:
        return np.array([[self.rho00, self.rho01], [self.rho10, self.rho11]], dtype=complex)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.as_array())

    @property
    def pe(self) -> float:
        return float(self.rho00.real)


@dataclass(frozen=True)
class BlochVector:
    rx: float
    ry: float
    rz: float

    def __post_init__(self):
        for name in ("rx", "ry", "rz"):
            if abs(getattr(self, name)) > 1 + POSITIVITY_TOL:
                raise InvalidState(f"{name} outside [-1, 1]")
        if self.norm2() > 1 + POSITIVITY_TOL:
            raise InvalidState("Bloch vector outside the unit ball")

    def norm2(self) -> float:
        return self.rx ** 2 + self.ry ** 2 + self.rz ** 2

    def as_tuple(self) -> tuple[float, float, float]:
        return self.rx, self.ry, self.rz


@dataclass(frozen=True)
class TomographyResult:
    """
    Линейная инверсия по частотам исходов. Оценка может выйти за единичный
    шар, поэтому хранится как есть; physical(): ближайший допустимый вектор.
    """
    estimate: tuple[float, float, float]
    std_errors: tuple[float, float, float]
    shots: int
    seed: int

    def physical(self) -> BlochVector:
        r = np.array(self.estimate)
        norm = float(np.linalg.norm(r))
        if norm > 1.0:
            r = r / norm
        return BlochVector(*(float(v) for v in r))
