# services.py
# Ландшафт связи гигантского атома: γ_e(ω) = γ_in(ω) + γ(ω)·[1 + β·cos(ωT)],
# огибающие, фактор Парселла, редукция фазы и подгонка модели к измерениям.
from __future__ import annotations

import logging
import math
from typing import Any, Dict, Iterable, Tuple

import mpmath
import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from scipy.optimize import least_squares

from .models import (
    CouplingLandscape,
    FitReport,
    IdtModel,
    InsufficientSamples,
    IntrinsicLossLine,
    OutOfBand,
    RateDecomposition,
)
from .units import TWO_PI, US, ghz, mhz, ns, to_ghz, to_mhz, to_ns

logger = logging.getLogger(__name__)

# =======================================================
# Конфиг подгонки (можно переопределить в settings.GIANT_ATOM_FIT)
# =======================================================
FIT_DEFAULTS = {
    "MAX_NFEV": 500,
    "XTOL": 1e-10,
    "PHASE_SEEDS": 8,
    "MIN_SAMPLES": 6,
    "BETA_IDENTIFIABLE": 1e-3,
}

FIT_CONFIG: Dict[str, Any] = {**FIT_DEFAULTS, **getattr(settings, "GIANT_ATOM_FIT", {})}

# Ключи секции landscape.* и их перевод во внутренние единицы
LANDSCAPE_KEYS = (
    "gamma_peak_mhz",
    "omega_center_ghz",
    "n_pairs",
    "beta",
    "delay_t_ns",
    "gamma_in_c0_mhz",
    "gamma_in_slope",
    "band_lo_ghz",
    "band_hi_ghz",
)


# ---------- конфиг ↔ модель ----------

def landscape_defaults() -> Dict[str, Any]:
    return dict(settings.GIANT_ATOM["landscape"])


def landscape_from_config(section: Dict[str, Any] | None = None) -> CouplingLandscape:
    """Плоская секция landscape.* (МГц/ГГц/нс) → CouplingLandscape в рад/с и с."""
    cfg = {**landscape_defaults(), **(section or {})}
    idt = IdtModel(
        gamma_peak=mhz(float(cfg["gamma_peak_mhz"])),
        omega_center=ghz(float(cfg["omega_center_ghz"])),
        n_pairs=int(cfg["n_pairs"]),
    )
    loss = IntrinsicLossLine(
        c0=mhz(float(cfg["gamma_in_c0_mhz"])),
        c1=float(cfg["gamma_in_slope"]),
        band=(ghz(float(cfg["band_lo_ghz"])), ghz(float(cfg["band_hi_ghz"]))),
    )
    return CouplingLandscape(
        idt=idt,
        loss=loss,
        beta=float(cfg["beta"]),
        delay_T=ns(float(cfg["delay_t_ns"])),
    )


def landscape_to_config(land: CouplingLandscape) -> Dict[str, Any]:
    lo, hi = land.band
    return {
        "gamma_peak_mhz": to_mhz(land.idt.gamma_peak),
        "omega_center_ghz": to_ghz(land.idt.omega_center),
        "n_pairs": land.idt.n_pairs,
        "beta": land.beta,
        "delay_t_ns": to_ns(land.delay_T),
        "gamma_in_c0_mhz": to_mhz(land.loss.c0),
        "gamma_in_slope": land.loss.c1,
        "band_lo_ghz": to_ghz(lo),
        "band_hi_ghz": to_ghz(hi),
    }


# ---------- вспомогательное ----------

def _scalar_or_array(values: np.ndarray, like):
    return float(values) if np.ndim(like) == 0 else values


def _check_band(land: CouplingLandscape, omega: np.ndarray) -> None:
    lo, hi = land.band
    bad = omega[(omega < lo) | (omega > hi)]
    if bad.size:
        raise OutOfBand(
            f"frequency {to_ghz(float(bad.flat[0])):.6g} GHz outside validity band "
            f"[{to_ghz(lo):.6g}, {to_ghz(hi):.6g}] GHz"
        )


# ---------- операции ----------

def gamma_idt(model: IdtModel, omega):
    """
    γ(ω) = γ_peak · sinc²(N·π·(ω − ω_c)/ω_c).
    np.sinc нормированный (sin(πx)/(πx)), поэтому π внутри аргумента не пишем.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValidationError("omega must be > 0", code="domain")
    x = model.n_pairs * (w - model.omega_center) / model.omega_center
    return _scalar_or_array(model.gamma_peak * np.sinc(x) ** 2, omega)


def intrinsic_loss(loss: IntrinsicLossLine, omega):
    w = np.asarray(omega, dtype=float)
    return _scalar_or_array(loss.c0 + loss.c1 * w, omega)


def gamma_eff(land: CouplingLandscape, omega):
    """Уравнение γ_e(ω) целиком; ω вне полосы γ_in → OutOfBand."""
    w = np.asarray(omega, dtype=float)
    _check_band(land, w)
    g = np.asarray(gamma_idt(land.idt, w))
    g_in = land.loss.c0 + land.loss.c1 * w
    value = g_in + g * (1.0 + land.beta * np.cos(w * land.delay_T))
    return _scalar_or_array(np.maximum(value, 0.0), omega)


def envelopes(land: CouplingLandscape, omega) -> Tuple[Any, Any]:
    """(γ_in + γ(1−β), γ_in + γ(1+β)): нижняя и верхняя огибающие γ_e."""
    w = np.asarray(omega, dtype=float)
    _check_band(land, w)
    g = np.asarray(gamma_idt(land.idt, w))
    g_in = land.loss.c0 + land.loss.c1 * w
    lower = g_in + g * (1.0 - land.beta)
    upper = g_in + g * (1.0 + land.beta)
    return _scalar_or_array(lower, omega), _scalar_or_array(upper, omega)


def decompose(land: CouplingLandscape, omega: float) -> RateDecomposition:
    _check_band(land, np.asarray(omega, dtype=float))
    g = gamma_idt(land.idt, omega)
    return RateDecomposition(
        omega=float(omega),
        intrinsic=float(intrinsic_loss(land.loss, omega)),
        idt=g,
        interference=g * land.beta * math.cos(omega * land.delay_T),
    )


def purcell_factor(land: CouplingLandscape, omega_on: float, omega_off: float) -> float:
    den = gamma_eff(land, omega_off)
    if den <= 0:
        raise ValidationError(
            f"gamma_eff vanishes at {to_ghz(omega_off):.6g} GHz, Purcell factor undefined",
            code="degenerate",
        )
    return gamma_eff(land, omega_on) / den


def modulation_period(land: CouplingLandscape) -> float:
    return land.modulation_period


def interference_extrema(land: CouplingLandscape, omega: float) -> Tuple[float, float]:
    """
    Ближайшие к ω частоты конструктивной (cos ωT = 1) и деструктивной
    (cos ωT = −1) интерференции.
    """
    cycles = omega * land.delay_T / TWO_PI
    constructive = round(cycles) * TWO_PI / land.delay_T
    destructive = (math.floor(cycles) + 0.5) * TWO_PI / land.delay_T
    return constructive, destructive


def phase_mod(omega: float, T: float) -> float:
    """
    ωT mod 2π в [0, 2π). При ωT ~ 10⁴…10⁶ рад остаток считаем в mpmath
    с 40 значащими цифрами: float-произведение теряет младшие разряды.
    """
    if T <= 0:
        raise ValidationError("T must be > 0", code="domain")
    with mpmath.workdps(40):
        x = mpmath.mpf(omega) * mpmath.mpf(T)
        two_pi = 2 * mpmath.pi
        reduced = float(x - two_pi * mpmath.floor(x / two_pi))
    return 0.0 if reduced >= TWO_PI else reduced


def _wrap(phase: float) -> float:
    """Фаза в (−π, π]."""
    wrapped = math.remainder(phase, TWO_PI)
    return math.pi if wrapped == -math.pi else wrapped


# ==========================================================
# Подгонка уравнения γ_e(ω)
# ==========================================================

PARAM_NAMES = ("gamma_peak_mhz", "beta", "delay_t_ns", "phase_offset", "gamma_in_ref_mhz", "gamma_in_slope")


def fit_landscape(
    samples: Iterable[Tuple[float, float]],
    init: CouplingLandscape,
    *,
    max_nfev: int | None = None,
) -> Tuple[CouplingLandscape, FitReport]:
    """
    МНК-подгонка (γ_peak, β, T, γ_in) к выборке (ω, γ_e), всё в рад/с.

    Внутри работаем в МГц и мкс. Аргумент косинуса параметризуем как
    ψ + 2π(f − f_ref)T, f_ref: центр выборки: иначе фаза ωT ~ 10³ рад
    делает поверхность невязки непроходимой по T. ψ стартует с восьми
    точек по окружности, берём лучший результат Левенберга–Марквардта.
    Центр полосы IDT и число пар не подгоняются.
    """
    pairs = [(float(w), float(g)) for w, g in samples]
    if len(pairs) < FIT_CONFIG["MIN_SAMPLES"]:
        raise InsufficientSamples(
            f"need at least {FIT_CONFIG['MIN_SAMPLES']} samples, got {len(pairs)}"
        )
    omega = np.array([w for w, _ in pairs])
    gamma = np.array([g for _, g in pairs])
    span = float(omega.max() - omega.min())
    if span < init.modulation_period:
        raise InsufficientSamples(
            f"samples span {to_mhz(span):.4g} MHz, need at least one modulation period "
            f"({to_mhz(init.modulation_period):.4g} MHz)"
        )
    _check_band(init, omega)

    f = to_mhz(omega)
    y = to_mhz(gamma)
    f_ref = float(f.mean())
    df = f - f_ref
    fc = to_mhz(init.idt.omega_center)
    env = np.sinc(init.idt.n_pairs * (f - fc) / fc) ** 2

    def residuals(p):
        gp, beta, T, psi, g_ref, c1 = p
        arg = psi + TWO_PI * df * T
        return g_ref + c1 * df + gp * env * (1.0 + beta * np.cos(arg)) - y

    def jacobian(p):
        gp, beta, T, psi, g_ref, c1 = p
        arg = psi + TWO_PI * df * T
        cos, sin = np.cos(arg), np.sin(arg)
        return np.column_stack([
            env * (1.0 + beta * cos),
            gp * env * cos,
            -gp * env * beta * sin * TWO_PI * df,
            -gp * env * beta * sin,
            np.ones_like(df),
            df,
        ])

    omega_ref = mhz(f_ref)
    psi0 = phase_mod(omega_ref, init.delay_T)
    g_ref0 = to_mhz(init.loss.c0) + init.loss.c1 * f_ref
    n_seeds = int(FIT_CONFIG["PHASE_SEEDS"])
    cap = int(max_nfev or FIT_CONFIG["MAX_NFEV"])

    best = None
    for k in range(n_seeds):
        p0 = np.array([
            to_mhz(init.idt.gamma_peak),
            init.beta,
            init.delay_T / US,
            psi0 + TWO_PI * k / n_seeds,
            g_ref0,
            init.loss.c1,
        ])
        sol = least_squares(
            residuals,
            p0,
            jac=jacobian,
            method="lm",
            x_scale="jac",
            xtol=FIT_CONFIG["XTOL"],
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=cap,
        )
        logger.debug("fit seed %d: cost=%.3e nfev=%d status=%d", k, sol.cost, sol.nfev, sol.status)
        if best is None or sol.cost < best.cost:
            best = sol

    gp, beta, T, psi, g_ref, c1 = (float(v) for v in best.x)
    messages: list[str] = []

    # β < 0 эквивалентно сдвигу фазы на π, T < 0: смене знака фазы
    if beta < 0:
        beta, psi = -beta, psi + math.pi
    if T < 0:
        T, psi = -T, -psi
    if beta > 1.0:
        messages.append(f"fitted beta {beta:.6g} exceeds 1, clipped")
        beta = 1.0
    psi = psi % TWO_PI

    converged = best.status > 0
    if not converged:
        messages.append(f"no convergence after {best.nfev} evaluations, last iterate reported")
        logger.warning("landscape fit did not converge (nfev=%d)", best.nfev)

    delay_identifiable = beta >= FIT_CONFIG["BETA_IDENTIFIABLE"] and T > 0
    T_s = T * US if T > 0 else init.delay_T
    phase_residual = _wrap(psi - phase_mod(omega_ref, T_s))
    if delay_identifiable:
        # подтягиваем T так, чтобы ω_ref·T ≡ ψ: сдвиг не больше π/ω_ref
        T_s += phase_residual / omega_ref
    else:
        messages.append("beta ~ 0: delay T is not identifiable from these samples")
        logger.warning("landscape fit: beta=%.3g, delay T unidentifiable", beta)

    fitted = CouplingLandscape(
        idt=IdtModel(gamma_peak=mhz(gp), omega_center=init.idt.omega_center, n_pairs=init.idt.n_pairs),
        loss=IntrinsicLossLine(c0=mhz(g_ref - c1 * f_ref), c1=c1, band=init.loss.band),
        beta=beta,
        delay_T=T_s,
    )

    m, n = best.jac.shape
    dof = max(m - n, 1)
    cov = np.linalg.pinv(best.jac.T @ best.jac) * (2.0 * best.cost / dof)
    sigma = np.sqrt(np.abs(np.diag(cov)))
    std_errors = dict(zip(PARAM_NAMES, (float(s) for s in sigma)))
    std_errors["delay_t_ns"] *= 1e3

    parameters = {
        "gamma_peak_mhz": gp,
        "beta": beta,
        "delay_t_ns": to_ns(T_s),
        "phase_offset": psi,
        "gamma_in_ref_mhz": g_ref,
        "gamma_in_slope": c1,
        "gamma_in_c0_mhz": g_ref - c1 * f_ref,
        "f_ref_ghz": f_ref / 1e3,
        "modulation_period_mhz": 1.0 / (T_s / US),
    }

    # γ_in и хвост IDT на краях выборки раздельно
    contributions = [
        decompose(fitted, float(w)).as_mhz() for w in (omega.min(), omega.max())
    ]

    report = FitReport(
        parameters=parameters,
        std_errors=std_errors,
        residual_norm=float(np.linalg.norm(best.fun)),
        iterations=int(best.nfev),
        converged=converged,
        delay_identifiable=delay_identifiable,
        phase_offset=psi,
        phase_residual=phase_residual,
        n_samples=len(pairs),
        contributions=contributions,
        messages=messages,
    )
    logger.info(
        "landscape fit: beta=%.4f T=%.3f ns period=%.4f MHz residual=%.3e",
        beta, to_ns(T_s), parameters["modulation_period_mhz"], report.residual_norm,
    )
    return fitted, report
