# services.py
from __future__ import annotations

import numpy as np

from .models import BlochVector, DensityMatrix2, InvalidState, TomographyResult

RHO_HEADERS = ("rho00_re", "rho00_im", "rho01_re", "rho01_im", "rho10_re", "rho10_im", "rho11_re", "rho11_im")


def bloch_from_rho(rho: DensityMatrix2) -> BlochVector:
    return BlochVector(
        rx=float(2.0 * rho.rho01.real),
        ry=float(-2.0 * rho.rho01.imag),
        rz=float((rho.rho00 - rho.rho11).real),
    )


def rho_from_bloch(r: BlochVector) -> DensityMatrix2:
    rho01 = complex(r.rx, -r.ry) / 2.0
    return DensityMatrix2(
        rho00=complex((1.0 + r.rz) / 2.0),
        rho01=rho01,
        rho10=rho01.conjugate(),
        rho11=complex((1.0 - r.rz) / 2.0),
    )


def expectations(rho: DensityMatrix2) -> dict[str, float]:
    r = bloch_from_rho(rho)
    return {"sx": r.rx, "sy": r.ry, "sz": r.rz}


def purity(rho: DensityMatrix2) -> float:
    """Tr ρ² = (1 + |r|²)/2."""
    m = rho.as_array()
    return float(np.real(np.trace(m @ m)))


def project_physical(arr) -> DensityMatrix2:
    """
    Ближайшая допустимая матрица: эрмитизация, отрицательные собственные
    значения в ноль, нормировка следа.
    """
    m = np.asarray(arr, dtype=complex).reshape(2, 2)
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise InvalidState("matrix has no positive part to project onto")
    w = w / w.sum()
    out = (v * w) @ v.conj().T
    out = 0.5 * (out + out.conj().T)
    # диагональ строго вещественная, след ровно 1
    d0 = float(out[0, 0].real)
    return DensityMatrix2(complex(d0), complex(out[0, 1]), complex(out[0, 1]).conjugate(), complex(1.0 - d0))


def random_density_matrix(rng: np.random.Generator) -> DensityMatrix2:
    """Случайное смешанное состояние (ансамбль Жинибра 2×2)."""
    g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return project_physical(g @ g.conj().T)


def sample_tomography(rho: DensityMatrix2, shots: int, seed: int) -> TomographyResult:
    """
    По каждой оси shots бернуллиевских исходов с p = (1 + r_i)/2.
    Генератор: PCG64 с явным seed: одинаковый seed → одинаковый результат.
    """
    if shots < 1:
        raise InvalidState(f"shots must be >= 1, got {shots}")
    rng = np.random.Generator(np.random.PCG64(seed))
    r = bloch_from_rho(rho).as_tuple()
    estimate, errors = [], []
    for component in r:
        p = min(max((1.0 + component) / 2.0, 0.0), 1.0)
        hits = int(np.count_nonzero(rng.random(shots) < p))
        p_hat = hits / shots
        estimate.append(2.0 * p_hat - 1.0)
        errors.append(2.0 * float(np.sqrt(p_hat * (1.0 - p_hat) / shots)))
    return TomographyResult(estimate=tuple(estimate), std_errors=tuple(errors), shots=shots, seed=seed)


def rho_csv_row(rho: DensityMatrix2) -> tuple[str, ...]:
    values = []
    for entry in (rho.rho00, rho.rho01, rho.rho10, rho.rho11):
        values += [f"{entry.real:.17g}", f"{entry.imag:.17g}"]
    return tuple(values)
