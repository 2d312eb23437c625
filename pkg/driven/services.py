# services.py
# Накачиваемый гигантский атом в марковском приближении с частотно-зависимой
# диссипацией: одетые скорости из ландшафта γ_e(ω), лиувиллиан 4×4,
# стационарное состояние, эволюция и карты когерентности/чистоты.
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np
from django.core.exceptions import ValidationError
from scipy import linalg

from landscape.models import CouplingLandscape
from landscape.services import gamma_eff
from landscape.units import to_mhz, to_ns
from relaxation.models import SolverConfigError
from stateops.models import DensityMatrix2
from stateops.services import bloch_from_rho, project_physical, purity, sample_tomography
from sweeps.models import SweepGrid

from .models import DressedRates, DriveSpec, GeneratorForm, NoUniqueSteadyState, Trajectory

logger = logging.getLogger(__name__)

# шаг RK4: по умолчанию 0.005/max(Ω_R, Γ), предел 0.01/max(Ω_R, Γ)
DT_FACTOR = 0.005
DT_LIMIT_FACTOR = 0.01
NULLSPACE_TOL = 1e-9

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
IDENTITY = np.eye(2, dtype=complex)


# ---------- замкнутые формулы ----------

def steady_pe_resonant(omega_rabi: float, gamma_e: float) -> float:
    """P_e = Ω²/(2Ω² + γ_e²): резонансная накачка, плоский спектр."""
    if omega_rabi == 0 and gamma_e == 0:
        raise ValidationError("omega_rabi and gamma_e are both zero", code="degenerate")
    return omega_rabi ** 2 / (2 * omega_rabi ** 2 + gamma_e ** 2)


def weak_drive_pe(omega_rabi: float, gamma_e: float) -> float:
    """P_e ≈ Ω²/γ_e², годится при Ω ≤ γ_e/3."""
    if gamma_e == 0:
        raise ValidationError("gamma_e must be > 0", code="domain")
    if omega_rabi > gamma_e / 3:
        logger.warning(
            "weak-drive formula used outside its range: Omega/gamma_e = %.3g > 1/3", omega_rabi / gamma_e
        )
    return (omega_rabi / gamma_e) ** 2


def generalized_rabi(drive: DriveSpec) -> float:
    return drive.generalized_rabi


# ---------- одетые скорости ----------

def _dressed_rates(drive: DriveSpec, spectrum: Callable[[float], float], extra_dephasing: float) -> DressedRates:
    theta = drive.mixing_theta
    omega_r = drive.generalized_rabi
    w_d = drive.drive_omega
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return DressedRates(
        rate_minus=spectrum(w_d - omega_r) * c ** 4,
        rate_plus=spectrum(w_d + omega_r) * s ** 4,
        rate_phi=spectrum(w_d) * math.sin(theta) ** 2 / 4,
        mixing_theta=theta,
        extra_dephasing=extra_dephasing,
    )


def dressed_rates(drive: DriveSpec, land: CouplingLandscape, *, extra_dephasing: float = 0.0) -> DressedRates:
    """γ_e, взятая на трёх частотах триплета Моллоу, с секулярными весами."""
    return _dressed_rates(drive, lambda w: float(gamma_eff(land, w)), extra_dephasing)


def flat_dressed_rates(drive: DriveSpec, gamma_e: float, *, extra_dephasing: float = 0.0) -> DressedRates:
    """Те же веса при γ_e, не зависящей от частоты."""
    return _dressed_rates(drive, lambda w: gamma_e, extra_dephasing)


def dressed_imbalance(rates: DressedRates) -> float:
    """P₊ − P₋ из балансного уравнения в одетом базисе: (Γ₋ − Γ₊)/(Γ₋ + Γ₊)."""
    den = rates.rate_minus + rates.rate_plus
    if den == 0:
        raise ValidationError("sideband rates are both zero", code="degenerate")
    return (rates.rate_minus - rates.rate_plus) / den


def dressed_basis(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """|+⟩ (энергия +Ω_R/2) и |−⟩ в базисе (e, g)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([s, c], dtype=complex), np.array([-c, s], dtype=complex)


def dressed_populations(rho: DensityMatrix2, drive: DriveSpec) -> tuple[float, float]:
    plus, minus = dressed_basis(drive.mixing_theta)
    m = rho.as_array()
    return float(np.real(plus.conj() @ m @ plus)), float(np.real(minus.conj() @ m @ minus))


# ---------- лиувиллиан ----------

def _jump_operators(rates: DressedRates, form: str) -> list[np.ndarray]:
    plus, minus = dressed_basis(rates.mixing_theta)
    up = np.outer(plus, minus.conj())      # |+⟩⟨−|
    down = np.outer(minus, plus.conj())    # |−⟩⟨+|
    sz_dressed = np.outer(plus, plus.conj()) - np.outer(minus, minus.conj())
    parts = [
        math.sqrt(rates.rate_plus) * down,
        -math.sqrt(rates.rate_minus) * up,
        math.sqrt(rates.rate_phi) * sz_dressed,
    ]
    if form == GeneratorForm.FULL:
        ops = [parts[0] + parts[1] + parts[2]]
    elif form == GeneratorForm.SECULAR:
        ops = parts
    else:
        raise ValidationError(f"unknown generator form: {form}", code="configuration")
    if rates.extra_dephasing > 0:
        # D[√(γ_φ/2)·σ_z] гасит когерентность со скоростью γ_φ
        ops.append(math.sqrt(rates.extra_dephasing / 2) * SIGMA_Z)
    return ops


def liouvillian(drive: DriveSpec, rates: DressedRates, *, form: str = GeneratorForm.FULL) -> np.ndarray:
    """
    Супероператор 4×4 для vec(ρ) построчно: vec(AρB) = (A ⊗ Bᵀ)·vec(ρ).
    L = −i(H⊗I − I⊗Hᵀ) + Σ_k [L_k⊗L_k* − ½ L_k†L_k⊗I − ½ I⊗(L_k†L_k)ᵀ].
    """
    if not math.isclose(rates.mixing_theta, drive.mixing_theta, abs_tol=1e-12):
        raise ValidationError("rates were computed for a different drive", code="domain")
    h = drive.hamiltonian()
    out = -1j * (np.kron(h, IDENTITY) - np.kron(IDENTITY, h.T))
    for op in _jump_operators(rates, form):
        ld = op.conj().T @ op
        out += np.kron(op, op.conj()) - 0.5 * np.kron(ld, IDENTITY) - 0.5 * np.kron(IDENTITY, ld.T)
    return out


def steady_state(drive: DriveSpec, rates: DressedRates, *, form: str = GeneratorForm.FULL) -> DensityMatrix2:
    """
    Нуль-вектор лиувиллиана через собственное разложение. Если почти нулевых
    собственных значений два и больше: стационар не единственный, отказываем.
    """
    if rates.total == 0:
        raise NoUniqueSteadyState("all dissipation rates are zero: no unique steady state")
    L = liouvillian(drive, rates, form=form)
    scale = np.linalg.norm(L)
    values, vectors = linalg.eig(L)
    order = np.argsort(np.abs(values))
    if abs(values[order[0]]) > NULLSPACE_TOL * scale:
        raise NoUniqueSteadyState(
            f"smallest Liouvillian eigenvalue {abs(values[order[0]]):.3e} is not zero"
        )
    if abs(values[order[1]]) < NULLSPACE_TOL * scale:
        raise NoUniqueSteadyState("Liouvillian has a degenerate null space")
    rho = vectors[:, order[0]].reshape(2, 2)
    return project_physical(rho / np.trace(rho))


def steady_state_residual(drive: DriveSpec, rates: DressedRates, rho: DensityMatrix2, *, form: str = GeneratorForm.FULL) -> float:
    """‖L[ρ]‖/‖L‖."""
    L = liouvillian(drive, rates, form=form)
    return float(np.linalg.norm(L @ rho.as_array().reshape(4)) / np.linalg.norm(L))


# ---------- эволюция ----------

def default_dt(drive: DriveSpec, rates: DressedRates) -> float:
    scale = max(drive.generalized_rabi, rates.total)
    if scale == 0:
        raise SolverConfigError("drive and dissipation are both zero: nothing to integrate")
    return DT_FACTOR / scale


def _propagator(L: np.ndarray, h: float) -> np.ndarray:
    """Один шаг RK4 для линейной системы: I + hL + (hL)²/2 + (hL)³/6 + (hL)⁴/24."""
    a = h * L
    a2 = a @ a
    a3 = a2 @ a
    return np.eye(4, dtype=complex) + a + a2 / 2 + a3 / 6 + a3 @ a / 24


def lindblad_evolve(
    rho0: DensityMatrix2,
    drive: DriveSpec,
    rates: DressedRates,
    dt: float | None = None,
    *,
    form: str = GeneratorForm.FULL,
    samples: int | None = None,
) -> Trajectory:
    """
    RK4 с фиксированным шагом до drive.duration. samples: число равноотстоящих
    точек записи (с 0 и duration), шаг тогда подгоняется под интервал записи.
    Без samples пишется каждый шаг.
    """
    scale = max(drive.generalized_rabi, rates.total)
    step = default_dt(drive, rates) if dt is None else dt
    limit = DT_LIMIT_FACTOR / scale if scale > 0 else math.inf
    if step <= 0 or step > limit:
        raise SolverConfigError(
            f"dt = {to_ns(step):.6g} ns exceeds the stability bound {to_ns(limit):.6g} ns "
            f"(0.01/max(Omega_R, total rate))"
        )
    L = liouvillian(drive, rates, form=form)
    state = rho0.as_array().reshape(4)
    duration = drive.duration

    if samples is None:
        n_steps = int(math.ceil(duration / step * (1 - 1e-12))) if duration > 0 else 0
        h = duration / n_steps if n_steps else 0.0
        record_every, n_records = 1, n_steps + 1
    else:
        if samples < 2:
            raise SolverConfigError("samples must be >= 2")
        interval = duration / (samples - 1)
        record_every = max(1, int(math.ceil(interval / step * (1 - 1e-12)))) if interval > 0 else 1
        h = interval / record_every
        n_steps = record_every * (samples - 1)
        n_records = samples

    P = _propagator(L, h)
    states = np.empty((n_records, 4), dtype=complex)
    states[0] = state
    for k in range(1, n_steps + 1):
        state = P @ state
        if k % record_every == 0:
            states[k // record_every] = state
    times = np.linspace(0.0, duration, n_records)
    return Trajectory(times=times, states=states.reshape(n_records, 2, 2))


def evolve_pe_at(rho0: DensityMatrix2, drive: DriveSpec, rates: DressedRates, samples: int, *, form: str = GeneratorForm.FULL) -> Trajectory:
    """P_e(t) на samples равноотстоящих точках длительности накачки."""
    return lindblad_evolve(rho0, drive, rates, form=form, samples=samples)


def modulation_amplitude(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    return float((arr.max() - arr.min()) / 2)


# ---------- карты ----------

MAP_QUANTITIES = ("sx", "sy", "sz", "pe", "purity")


def _map_cell(
    omega: float,
    delta: float,
    qubit_omega: float,
    land: CouplingLandscape,
    form: str,
    extra_dephasing: float,
    shots: int,
    seed: int,
) -> tuple[dict[str, float], str]:
    try:
        drive = DriveSpec(rabi_omega=omega, detuning=delta, duration=0.0, qubit_omega=qubit_omega)
        rates = dressed_rates(drive, land, extra_dephasing=extra_dephasing)
        rho = steady_state(drive, rates, form=form)
    except ValidationError as exc:
        return {}, exc.code or "error"
    r = bloch_from_rho(rho)
    row = {"sx": r.rx, "sy": r.ry, "sz": r.rz, "pe": rho.pe, "purity": purity(rho)}
    if shots > 0:
        tomo = sample_tomography(rho, shots, seed).physical()
        row["sx_tomo"] = tomo.rx
        row["purity_tomo"] = (1 + tomo.norm2()) / 2
    return row, ""


def map_coherence_purity(
    grid: SweepGrid,
    qubit_omega: float,
    land: CouplingLandscape,
    *,
    form: str = GeneratorForm.FULL,
    extra_dephasing: float = 0.0,
    threads: int = 1,
    shots: int = 0,
    seed: int = 0,
) -> SweepGrid:
    """
    Для каждой точки (Ω, Δ): одетые скорости → стационар → ⟨σ⟩ и чистота.
    Ошибки точки не прерывают карту: ячейка маскируется кодом ошибки.
    Точки считаются параллельно, но пишутся по индексу сетки.
    """
    axis_names = tuple(axis.name for axis in grid.axes)
    if axis_names not in (("omega_mhz",), ("omega_mhz", "delta_mhz")):
        raise ValidationError(f"map grid axes must be (omega_mhz[, delta_mhz]), got {axis_names}", code="configuration")
    omegas = grid.axes[0].si_values()
    deltas = grid.axes[1].si_values() if len(grid.axes) > 1 else np.zeros(1)
    shape = (omegas.size, deltas.size)
    cells = [(i, j) for i in range(shape[0]) for j in range(shape[1])]

    def run(cell):
        i, j = cell
        return _map_cell(
            float(omegas[i]), float(deltas[j]), qubit_omega, land, form, extra_dephasing,
            shots, seed + i * shape[1] + j,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(cell) for cell in cells]

    names = MAP_QUANTITIES + (("sx_tomo", "purity_tomo") if shots > 0 else ())
    results = {name: np.full(shape, np.nan) for name in names}
    mask = np.full(shape, "", dtype=object)
    for (i, j), (row, reason) in zip(cells, outcomes):
        if reason:
            mask[i, j] = reason
            continue
        for name in names:
            results[name][i, j] = row[name]
    masked = int(np.count_nonzero(mask != ""))
    if masked:
        logger.warning("map: %d of %d cells masked", masked, mask.size)

    grid_shape = grid.shape
    out = {name: values.reshape(grid_shape) for name, values in results.items()}
    out["mask_reason"] = mask.reshape(grid_shape)
    return grid.with_results(out)


def purity_period(omegas_mhz: np.ndarray, values: np.ndarray, lo: float = 6.0, hi: float = 10.0) -> float:
    """
    Период колебаний кривой по Ω: сдвиг в [lo, hi] МГц с наилучшей
    автокорреляцией (после вычитания линейного тренда).
    """
    x = np.asarray(omegas_mhz, dtype=float)
    y = np.asarray(values, dtype=float)
    y = y - np.polyval(np.polyfit(x, y, 1), x)
    step = x[1] - x[0]
    best_shift, best_score = float("nan"), -math.inf
    for k in range(max(1, int(round(lo / step))), int(round(hi / step)) + 1):
        a, b = y[:-k], y[k:]
        score = float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))
        if score > best_score:
            best_shift, best_score = k * step, score
    return best_shift


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    x = np.asarray(a, dtype=float) - np.mean(a)
    y = np.asarray(b, dtype=float) - np.mean(b)
    return float(np.dot(x, y) / math.sqrt(np.dot(x, x) * np.dot(y, y)))


def rate_summary(rates: DressedRates) -> dict[str, float]:
    return {
        "rate_minus_mhz": to_mhz(rates.rate_minus),
        "rate_plus_mhz": to_mhz(rates.rate_plus),
        "rate_phi_mhz": to_mhz(rates.rate_phi),
        "mixing_theta": rates.mixing_theta,
    }
