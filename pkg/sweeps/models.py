# models.py
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from landscape.units import ghz, mhz, ns


class Preset(models.TextChoices):
    FIG2B = "fig2b", "Effective relaxation rate versus qubit frequency"
    FIG2C = "fig2c", "Excitation decay at four qubit frequencies"
    FIG3B = "fig3b", "Steady-state P_e versus Rabi frequency"
    FIG3D = "fig3d", "Weak-drive steady-state P_e versus qubit frequency"
    FIG3F = "fig3f", "Strong-drive steady-state P_e versus qubit frequency"
    FIG4I = "fig4i", "Steady-state purity versus Rabi frequency"


class Quantity(models.TextChoices):
    GAMMA_EFF = "gamma_eff", "Effective decay rate"
    PE_TRACE = "pe_trace", "Relaxation trace"
    STEADY_STATE = "steady_state", "Driven steady state"
    MAP = "map", "Coherence and purity map"


# Имя оси несёт единицу; перевод в рад/с или с
AXIS_UNITS = {
    "qubit_ghz": ("ghz", ghz),
    "omega_mhz": ("mhz", mhz),
    "delta_mhz": ("mhz", mhz),
    "t_ns": ("ns", ns),
}


class ConfigError(ValidationError):
    """Набор ошибок конфига сразу, каждая: с путём ключа."""

    def __init__(self, errors: Dict[str, list[str]]):
        self.errors = errors
        lines = [f"{key}: {msg}" for key, msgs in sorted(errors.items()) for msg in msgs]
        super().__init__(lines, code="configuration")


@dataclass(frozen=True)
class GridAxis:
    name: str
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if self.name not in AXIS_UNITS:
            raise ValidationError(f"unknown axis {self.name!r}", code="configuration")
        if self.count < 1:
            raise ValidationError("axis count must be >= 1", code="configuration")
        if self.start > self.stop:
            raise ValidationError("axis start must be <= stop", code="configuration")

    @property
    def unit(self) -> str:
        return AXIS_UNITS[self.name][0]

    def values(self) -> np.ndarray:
        """Значения в единицах оси; одна точка: start."""
        return np.linspace(self.start, self.stop, self.count)

    def si_values(self) -> np.ndarray:
        return AXIS_UNITS[self.name][1](self.values())


@dataclass(frozen=True)
class SweepGrid:
    axes: tuple[GridAxis, ...]
    results: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, matrix in self.results.items():
            if np.shape(matrix) != self.shape:
                raise ValidationError(
                    f"result {name!r} has shape {np.shape(matrix)}, grid is {self.shape}", code="configuration"
                )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(axis.count for axis in self.axes)

    def axis(self, name: str) -> GridAxis:
        for axis in self.axes:
            if axis.name == name:
                return axis
        raise ValidationError(f"grid has no axis {name!r}", code="configuration")

    def with_results(self, results: Dict[str, np.ndarray]) -> "SweepGrid":
        return SweepGrid(axes=self.axes, results={**self.results, **results})


@dataclass(frozen=True)
class RunConfig:
    """
    Проверенный конфиг: секции landscape/solver/drive/sweep в единицах ключей
    (МГц, ГГц, нс, мкс), все значения по умолчанию уже подставлены.
    """
    landscape: Dict[str, Any]
    solver: Dict[str, Any]
    drive: Dict[str, Any]
    sweep: Dict[str, Any]

    def sections(self) -> Dict[str, Dict[str, Any]]:
        return {"landscape": self.landscape, "solver": self.solver, "drive": self.drive, "sweep": self.sweep}

    def flat(self) -> Dict[str, Any]:
        return {f"{section}.{key}": value for section, keys in self.sections().items() for key, value in keys.items()}

    def config_hash(self) -> str:
        payload = json.dumps(self.flat(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def si_echo(self) -> Dict[str, Any]:
        """Тот же конфиг в СИ: *_mhz, *_ghz → рад/с, *_ns/*_us → с."""
        out: Dict[str, Any] = {}
        for key, value in self.flat().items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                continue
            if key.endswith("_mhz"):
                out[key[: -len("_mhz")] + "_rad_s"] = mhz(value)
            elif key.endswith("_ghz"):
                out[key[: -len("_ghz")] + "_rad_s"] = ghz(value)
            elif key.endswith("_ns"):
                out[key[: -len("_ns")] + "_s"] = value / 1e9
            elif key.endswith("_us"):
                out[key[: -len("_us")] + "_s"] = value / 1e6
        return out

    def axes(self) -> tuple[GridAxis, ...]:
        axes = []
        for prefix in ("x", "y"):
            name = self.sweep.get(f"{prefix}.name") or ""
            if name:
                axes.append(GridAxis(
                    name=name,
                    start=float(self.sweep[f"{prefix}.start"]),
                    stop=float(self.sweep[f"{prefix}.stop"]),
                    count=int(self.sweep[f"{prefix}.count"]),
                ))
        return tuple(axes)


@dataclass(frozen=True)
class RunOutcome:
    """Что записал прогон: файлы по порядку и число замаскированных ячеек по файлу."""
    files: tuple = ()
    masked: Dict[str, int] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def masked_total(self) -> int:
        return sum(self.masked.values())
