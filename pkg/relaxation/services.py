# services.py
# Релаксация невозбуждаемого гигантского атома тремя независимыми способами:
# аналитический ряд обратного потока, уравнение с запаздыванием (метод шагов)
# и «грубая сила»: дискретный континуум мод волновода.
#
# Все три решателя работают в системе отсчёта, вращающейся на ω_q:
#   ȧ(t) = −(κ_in + κ)·a(t) − κβ·e^{iφ}·a(t − T)·Θ(t − T),  φ = ω_q·T mod 2π.
# |a|² от системы отсчёта не зависит.
from __future__ import annotations

import cmath
import logging
import math
from typing import Iterable, Sequence, Tuple

import numpy as np
import tablib
from django.core.exceptions import ValidationError

from landscape.services import phase_mod
from landscape.units import to_ns

from .models import RateConvention, RelaxationParams, RelaxationTrace, SolverConfigError, SolverTag

logger = logging.getLogger(__name__)

DEFAULT_CONVENTION = RateConvention.AMPLITUDE_HALF_RATES

# RK4 на чисто мнимой оси устойчив при |λh| < 2√2, берём с запасом
RK4_STABILITY_LIMIT = 2.5


# ==========================================================
# Аналитический ряд
# ==========================================================

def _series_rotating(times: np.ndarray, kappa: float, kappa_in: float, beta: float, phi: float, T: float) -> np.ndarray:
    """
    ã(t) = Σ_{n ≤ ⌊t/T⌋} (−κβe^{iφ}(t−nT))ⁿ/n! · e^{−K(t−nT)},  K = κ + κ_in.
    Члены с n ≥ 1 считаем через логарифм модуля: при t ≫ T (κβt)ⁿ и n!
    по отдельности переполняются. При t = nT член n обращается в ноль.
    """
    K = kappa + kappa_in
    acc = np.exp(-K * times).astype(complex)
    if kappa * beta == 0.0 or times.size == 0:
        return acc
    log_kb = math.log(kappa * beta)
    n_max = int(math.floor(times.max() / T))
    for n in range(1, n_max + 1):
        s = times - n * T
        mask = s > 0
        if not mask.any():
            break
        sm = s[mask]
        log_mag = n * (log_kb + np.log(sm)) - math.lgamma(n + 1) - K * sm
        acc[mask] += np.exp(log_mag) * cmath.exp(1j * n * (math.pi + phi))
    return acc


def amplitude_series(p: RelaxationParams, t: float, rate_convention: str = DEFAULT_CONVENTION) -> complex:
    """Амплитуда возбуждённого состояния в лабораторной системе (с фазой e^{−iω_q t})."""
    if t < 0:
        raise ValidationError("t must be >= 0", code="domain")
    kappa, kappa_in = p.amplitude_rates(rate_convention)
    phi = phase_mod(p.omega_q, p.delay_T)
    rotating = complex(_series_rotating(np.array([float(t)]), kappa, kappa_in, p.beta, phi, p.delay_T)[0])
    if t == 0:
        return rotating
    return rotating * cmath.exp(-1j * phase_mod(p.omega_q, t))


def _check_times(times) -> np.ndarray:
    ts = np.asarray(times, dtype=float)
    if ts.size and ts.min() < 0:
        raise ValidationError("times must be >= 0", code="domain")
    if ts.size > 1 and np.any(np.diff(ts) <= 0):
        raise ValidationError("times must be strictly increasing", code="domain")
    return ts


def pe_series(p: RelaxationParams, times: Sequence[float], rate_convention: str = DEFAULT_CONVENTION) -> RelaxationTrace:
    ts = _check_times(times)
    kappa, kappa_in = p.amplitude_rates(rate_convention)
    phi = phase_mod(p.omega_q, p.delay_T)
    amp = _series_rotating(ts, kappa, kappa_in, p.beta, phi, p.delay_T)
    return RelaxationTrace(times=ts, pe=np.clip(np.abs(amp) ** 2, 0.0, 1.0), solver_tag=SolverTag.SERIES)


# ==========================================================
# Уравнение с запаздыванием, метод шагов
# ==========================================================

def _step_count(T: float, dt: float) -> Tuple[int, float]:
    """Сколько шагов RK4 укладывается в T; шаг округляем вниз до T/M."""
    m = max(1, int(math.ceil(T / dt * (1 - 1e-12))))
    return m, T / m


def dde_integrate(
    p: RelaxationParams,
    t_max: float,
    dt: float,
    rate_convention: str = DEFAULT_CONVENTION,
) -> RelaxationTrace:
    """
    RK4 с фиксированным шагом h = T/M: узлы сетки ложатся ровно на t = nT,
    и запаздывающий аргумент попадает в узел истории k − M.

    Для каждого шага храним значения на концах и односторонние производные
    (правую в начале, левую в конце), середину истории берём из кубического
    эрмитова интерполянта своего шага. До t = 0 история нулевая, включая
    правый конец отрезка, поэтому скачок Θ(t − T) приходится на границу шага.
    """
    if dt <= 0:
        raise SolverConfigError(f"dt must be > 0, got {dt!r}")
    if dt > p.delay_T:
        raise SolverConfigError(
            f"dt = {to_ns(dt):.6g} ns exceeds the delay T = {to_ns(p.delay_T):.6g} ns"
        )
    if t_max < 0:
        raise ValidationError("t_max must be >= 0", code="domain")

    M, h = _step_count(p.delay_T, dt)
    notes: list[str] = []
    if not math.isclose(h, dt, rel_tol=1e-12):
        msg = f"dt adjusted from {to_ns(dt):.6g} ns to {to_ns(h):.6g} ns (T/dt = {M})"
        notes.append(msg)
        logger.info(msg)

    kappa, kappa_in = p.amplitude_rates(rate_convention)
    K = kappa + kappa_in
    c = kappa * p.beta * cmath.exp(1j * phase_mod(p.omega_q, p.delay_T))
    n_steps = int(math.ceil(t_max / h * (1 - 1e-12))) if t_max > 0 else 0

    y = [0j] * (n_steps + 1)
    d_right = [0j] * (n_steps + 1)   # производная в начале шага k
    d_left = [0j] * (n_steps + 1)    # производная в конце шага k − 1
    y[0] = 1 + 0j

    def delayed(k: int) -> Tuple[complex, complex, complex]:
        """a(t − T) в начале, середине и конце шага k: отрезок истории j = k − M."""
        j = k - M
        if j < 0:
            return 0j, 0j, 0j
        y0, y1 = y[j], y[j + 1]
        mid = 0.5 * (y0 + y1) + h * (d_right[j] - d_left[j + 1]) / 8.0
        return y0, mid, y1

    for k in range(n_steps):
        z0, zm, z1 = delayed(k)
        yk = y[k]
        k1 = -K * yk - c * z0
        k2 = -K * (yk + 0.5 * h * k1) - c * zm
        k3 = -K * (yk + 0.5 * h * k2) - c * zm
        k4 = -K * (yk + h * k3) - c * z1
        y_next = yk + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        d_right[k] = k1
        d_left[k + 1] = -K * y_next - c * z1
        y[k + 1] = y_next

    times = h * np.arange(n_steps + 1)
    pe = np.clip(np.abs(np.array(y)) ** 2, 0.0, 1.0)
    return RelaxationTrace(times=times, pe=pe, solver_tag=SolverTag.DDE, notes=tuple(notes))


# ==========================================================
# Дискретный континуум мод
# ==========================================================

def mode_oracle(
    p: RelaxationParams,
    n_modes: int,
    bandwidth: float,
    t_max: float,
    dt: float,
    rate_convention: str = DEFAULT_CONVENTION,
) -> RelaxationTrace:
    """
    Кубит, связанный в точках x = 0 и x = L с n_modes правыми и n_modes
    левыми модами с линейной дисперсией. Уравнения в одновозбуждённом секторе:
        ȧ   = −κ_in·a − i Σ g_k c_k
        ċ_k = −(iδ_k + η)·c_k − i g_k*·a
    g_k = g(1 + e^{±iθ_k}), θ_k = φ + δ_k T, g² = κ δω/(4π).
    Потери на пути между точками: затухание мод η = −ln β / T, тогда
    запаздывающий член ядра несёт ровно β. При β = 0 связь одноточечная g√2.
    """
    if n_modes < 100:
        raise SolverConfigError(f"n_modes must be >= 100, got {n_modes}")
    if dt <= 0:
        raise SolverConfigError(f"dt must be > 0, got {dt!r}")
    if t_max < 0:
        raise ValidationError("t_max must be >= 0", code="domain")
    total = p.gamma + p.gamma_in
    if bandwidth < 20 * total:
        raise SolverConfigError(
            f"bandwidth {bandwidth:.6g} rad/s must cover at least 20*(gamma_in+gamma) = {20 * total:.6g} rad/s"
        )
    recurrence = 2 * math.pi * n_modes / bandwidth
    if recurrence < t_max:
        raise SolverConfigError(
            f"recurrence time {to_ns(recurrence):.6g} ns is shorter than t_max = {to_ns(t_max):.6g} ns; "
            f"increase n_modes"
        )

    kappa, kappa_in = p.amplitude_rates(rate_convention)
    T = p.delay_T
    d_omega = bandwidth / n_modes
    delta = (np.arange(n_modes) - (n_modes - 1) / 2.0) * d_omega
    g = math.sqrt(kappa * d_omega / (4 * math.pi))

    if p.beta > 0:
        eta = -math.log(p.beta) / T
        theta = phase_mod(p.omega_q, T) + delta * T
        couplings = np.concatenate([g * (1 + np.exp(1j * theta)), g * (1 + np.exp(-1j * theta))])
    else:
        eta = 0.0
        couplings = np.full(2 * n_modes, g * math.sqrt(2.0), dtype=complex)
    decay = np.concatenate([1j * delta + eta, 1j * delta + eta])
    couplings_conj = couplings.conj()

    if dt * (bandwidth / 2 + eta) > RK4_STABILITY_LIMIT:
        raise SolverConfigError(
            f"dt = {to_ns(dt):.6g} ns too large for bandwidth; need dt*(bandwidth/2+eta) <= {RK4_STABILITY_LIMIT}"
        )

    def rhs(a: complex, c: np.ndarray) -> Tuple[complex, np.ndarray]:
        da = -kappa_in * a - 1j * complex(couplings @ c)
        dc = -decay * c - 1j * couplings_conj * a
        return da, dc

    n_steps = int(math.ceil(t_max / dt * (1 - 1e-12))) if t_max > 0 else 0
    a = 1 + 0j
    c = np.zeros(2 * n_modes, dtype=complex)
    pe = np.empty(n_steps + 1)
    pe[0] = 1.0
    for k in range(n_steps):
        a1, c1 = rhs(a, c)
        a2, c2 = rhs(a + 0.5 * dt * a1, c + 0.5 * dt * c1)
        a3, c3 = rhs(a + 0.5 * dt * a2, c + 0.5 * dt * c2)
        a4, c4 = rhs(a + dt * a3, c + dt * c3)
        a = a + dt * (a1 + 2 * a2 + 2 * a3 + a4) / 6.0
        c = c + dt * (c1 + 2 * c2 + 2 * c3 + c4) / 6.0
        pe[k + 1] = abs(a) ** 2

    logger.debug("mode oracle: %d modes per direction, %d steps", n_modes, n_steps)
    times = dt * np.arange(n_steps + 1)
    return RelaxationTrace(times=times, pe=np.clip(pe, 0.0, 1.0), solver_tag=SolverTag.MODE_ORACLE)


# ==========================================================
# Эффективная скорость
# ==========================================================

def effective_rate(trace: RelaxationTrace, window: Tuple[float, float], *, delay_T: float | None = None) -> float:
    """Наклон ln P_e(t) в окне МНК, со знаком минус (скорость населённости)."""
    t_lo, t_hi = window
    if t_lo >= t_hi or t_lo < trace.times[0] or t_hi > trace.times[-1] * (1 + 1e-12):
        raise ValidationError(
            f"window [{to_ns(t_lo):.6g}, {to_ns(t_hi):.6g}] ns outside trace", code="domain"
        )
    mask = (trace.times >= t_lo) & (trace.times <= t_hi)
    if mask.sum() < 5:
        raise ValidationError("window too short: need at least 5 samples", code="insufficient_samples")
    pe = trace.pe[mask]
    if pe.min() <= 1e-14:
        raise ValidationError("pe underflow in window", code="degenerate")
    if delay_T is not None and t_lo < 3 * delay_T:
        logger.warning("effective rate window starts at %.3g T, before 3T", t_lo / delay_T)
    slope, _ = np.polyfit(trace.times[mask], np.log(pe), 1)
    return float(-slope)


def markov_rate(p: RelaxationParams) -> float:
    """γ_in + γ(1 + β cos ω_q T): марковский предел при γT → 0."""
    return p.gamma_in + p.gamma * (1 + p.beta * math.cos(phase_mod(p.omega_q, p.delay_T)))


def rate_deviation(trace: RelaxationTrace, p: RelaxationParams, window: Tuple[float, float]) -> dict:
    """Отклонение измеренной скорости от марковской; при γT ~ 0.5 его только фиксируем."""
    measured = effective_rate(trace, window, delay_T=p.delay_T)
    markov = markov_rate(p)
    return {
        "gamma_t": p.gamma_t,
        "phase": phase_mod(p.omega_q, p.delay_T),
        "effective_rate": measured,
        "markov_rate": markov,
        "relative_deviation": (measured - markov) / markov if markov else float("nan"),
    }


# ==========================================================
# CSV
# ==========================================================

TRACE_HEADERS = ("t_ns", "pe", "solver")


def trace_dataset(traces: Iterable[RelaxationTrace]) -> tablib.Dataset:
    """Кривые подряд в одну таблицу t_ns,pe,solver; 17 значащих цифр."""
    data = tablib.Dataset(headers=list(TRACE_HEADERS))
    for trace in traces:
        for t, pe in zip(trace.times, trace.pe):
            data.append((f"{to_ns(float(t)):.17g}", f"{float(pe):.17g}", str(trace.solver_tag)))
    return data
