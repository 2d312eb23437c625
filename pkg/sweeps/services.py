# services.py
# Конфиг прогона (YAML с точечными ключами), свипы по сетке и пресеты
# рисунков. Все файлы пишет один поток после того, как посчитаны все точки.
from __future__ import annotations

import copy
import itertools
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Sequence

import django
import mpmath
import numpy as np
import scipy
import tablib
import yaml
from django.conf import settings
from django.core.exceptions import ValidationError

from driven.models import DriveSpec, GeneratorForm
from driven.services import (
    dressed_rates,
    evolve_pe_at,
    flat_dressed_rates,
    map_coherence_purity,
    modulation_amplitude,
    pearson,
    purity_period,
    steady_pe_resonant,
    steady_state,
)
from landscape.models import CouplingLandscape
from landscape.services import decompose, gamma_eff, interference_extrema, landscape_from_config, phase_mod
from landscape.units import ghz, mhz, ns, to_ghz, to_mhz, to_ns, us
from relaxation.models import RelaxationParams, RelaxationTrace, SolverTag
from relaxation.services import (
    TRACE_HEADERS,
    dde_integrate,
    effective_rate,
    markov_rate,
    mode_oracle,
    pe_series,
    trace_dataset,
)
from stateops.models import DensityMatrix2
from stateops.services import RHO_HEADERS, bloch_from_rho, purity, rho_csv_row

from .models import ConfigError, GridAxis, Preset, Quantity, RunConfig, RunOutcome, SweepGrid
from .serializers import SECTION_SERIALIZERS

logger = logging.getLogger(__name__)

# =======================================================
# Параметры пресетов (можно переопределить в settings.GIANT_ATOM_PRESETS)
# =======================================================
PRESET_DEFAULTS = {
    "FIG2B_QUBIT_GHZ": (4.80, 4.98, 721),
    "FIG2B_TRACE_SPAN_T": 10.0,
    "FIG2B_TRACE_POINTS": 401,
    "FIG2B_WINDOW_T": (3.0, 8.0),
    "FIG2C_QUBITS_GHZ": (4.8887, 4.8894, 4.8899, 4.8904),
    "FIG3_QUBIT_GHZ": 4.279,
    "FIG3B_OMEGA_MHZ": (0.0, 5.0, 201),
    "FIG3B_DYNAMICS_OMEGA_MHZ": (0.2, 0.5, 1.0, 2.5),
    "FIG3_QUBIT_SPAN_GHZ": (4.275, 4.283, 81),
    "FIG3D_OMEGA_MHZ": 0.2,
    "FIG3F_OMEGA_MHZ": 2.5,
    "FIG4I_QUBITS_GHZ": (4.891, 4.887),
    "FIG4I_DELTA_MHZ": -5.0,
    "FIG4I_OMEGA_MHZ": (0.0, 60.0, 241),
    "FIG4I_PERIOD_FROM_MHZ": 20.0,
    "FIG4I_HIGH_OMEGA_MHZ": 10.0,
}

PRESETS: Dict[str, Any] = {**PRESET_DEFAULTS, **getattr(settings, "GIANT_ATOM_PRESETS", {})}

# Версии численных схем: меняются, когда меняется результат при том же конфиге
SOLVER_VERSIONS = {
    "series": "1",
    "dde": "1",
    "mode_oracle": "1",
    "lindblad": "1",
    "landscape_fit": "1",
}

UNIT_SUFFIXES = ("_mhz", "_ghz", "_ns", "_us")
DOCUMENT_KEY = "<document>"

GAMMA_HEADERS = ("qubit_ghz", "gamma_eff_mhz", "gamma_in_mhz", "gamma_idt_mhz", "interference_mhz", "mask_reason")
MAP_HEADERS = ("omega_mhz", "delta_mhz", "sx", "sy", "sz", "pe", "purity")
STATE_HEADERS = ("pe", "sx", "sy", "sz", "purity")

GROUND = DensityMatrix2(0j, 0j, 0j, 1 + 0j)


# ==========================================================
# Разбор конфига
# ==========================================================

def default_flat() -> Dict[str, Any]:
    """Дефолты из settings.GIANT_ATOM как плоские ключи section.key."""
    return {
        f"{section}.{key}": copy.deepcopy(value)
        for section, keys in settings.GIANT_ATOM.items()
        for key, value in keys.items()
    }


def _flatten(node: Mapping, prefix: str, out: Dict[str, Any]) -> None:
    for key, value in node.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, Mapping):
            _flatten(value, path, out)
        else:
            out[path] = value


def parse_config_text(text: str | None) -> Dict[str, Any]:
    """YAML → плоский словарь; вложенные секции превращаются в точечные ключи."""
    try:
        doc = yaml.safe_load(text) if text else None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
        raise ConfigError({DOCUMENT_KEY: [f"syntax error at {where}: {problem}"]})
    if doc is None:
        return {}
    if not isinstance(doc, Mapping):
        raise ConfigError({DOCUMENT_KEY: ["top level must be a mapping of dotted keys"]})
    flat: Dict[str, Any] = {}
    _flatten(doc, "", flat)
    return flat


def env_overrides(environ: Mapping[str, str]) -> tuple[Dict[str, Any], Dict[str, List[str]]]:
    """GIANT_ATOM__LANDSCAPE__BETA=0.5 → {"landscape.beta": 0.5}; значения: YAML-скаляры."""
    prefix = settings.GIANT_ATOM_ENV_PREFIX
    values: Dict[str, Any] = {}
    errors: Dict[str, List[str]] = {}
    for name in sorted(environ):
        if not name.startswith(prefix):
            continue
        key = ".".join(part.lower() for part in name[len(prefix):].split("__"))
        try:
            values[key] = yaml.safe_load(environ[name])
        except yaml.YAMLError:
            errors.setdefault(key, []).append(f"cannot parse value of environment variable {name}")
    return values, errors


def _stem(key: str) -> str:
    for suffix in UNIT_SUFFIXES:
        if key.endswith(suffix):
            return key[: -len(suffix)]
    return key


def _unknown_key_message(key: str, known: Iterable[str]) -> str:
    stem = _stem(key)
    for candidate in sorted(known):
        if _stem(candidate) == stem:
            return f"unit mismatch: expected {candidate!r}"
    return "unknown key"


def _collect_errors(prefix: str, detail: Any, out: Dict[str, List[str]]) -> None:
    """Ошибки DRF (вложенные dict/list) → {путь ключа: [сообщения]}."""
    if isinstance(detail, Mapping):
        for key, value in detail.items():
            path = prefix if key == "non_field_errors" else f"{prefix}.{key}"
            _collect_errors(path, value, out)
    elif isinstance(detail, (list, tuple)):
        for item in detail:
            if isinstance(item, (Mapping, list, tuple)):
                _collect_errors(prefix, item, out)
            else:
                out.setdefault(prefix, []).append(str(item))
    else:
        out.setdefault(prefix, []).append(str(detail))


def _section_payload(section: str, merged: Dict[str, Any]) -> Dict[str, Any]:
    keys = {key[len(section) + 1:]: value for key, value in merged.items() if key.startswith(section + ".")}
    if section != "sweep":
        return keys
    payload: Dict[str, Any] = {}
    for key, value in keys.items():
        head, _, tail = key.partition(".")
        if tail:
            payload.setdefault(head, {})[tail] = value
        else:
            payload[key] = value
    return payload


def _section_values(validated: Mapping[str, Any]) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for key, value in validated.items():
        if isinstance(value, Mapping):
            for sub, sub_value in value.items():
                values[f"{key}.{sub}"] = sub_value
        elif isinstance(value, list):
            values[key] = [str(v) for v in value]
        else:
            values[key] = value
    return values


def validate_flat(flat: Mapping[str, Any], extra_errors: Mapping[str, List[str]] | None = None) -> RunConfig:
    """Строгая проверка плоского конфига: все ошибки сразу, с путями ключей."""
    known = default_flat()
    errors: Dict[str, List[str]] = {key: list(msgs) for key, msgs in (extra_errors or {}).items()}
    for key in sorted(flat):
        if key not in known:
            errors.setdefault(key, []).append(_unknown_key_message(key, known))

    merged = {**known, **{key: value for key, value in flat.items() if key in known}}
    sections: Dict[str, Dict[str, Any]] = {}
    for section, serializer_class in SECTION_SERIALIZERS.items():
        serializer = serializer_class(data=_section_payload(section, merged))
        if serializer.is_valid():
            sections[section] = _section_values(serializer.validated_data)
        else:
            _collect_errors(section, serializer.errors, errors)

    if "landscape" in sections:
        try:
            landscape_from_config(sections["landscape"])
        except ValidationError as exc:
            errors.setdefault("landscape", []).extend(exc.messages)

    if errors:
        raise ConfigError(errors)
    return RunConfig(**sections)


def validate_config(text: str | None, environ: Mapping[str, str] | None = None) -> RunConfig:
    """Текст конфига + переопределения из окружения → RunConfig или ConfigError."""
    flat = parse_config_text(text)
    env_values, env_errors = env_overrides(os.environ if environ is None else environ)
    flat.update(env_values)
    cfg = validate_flat(flat, env_errors)
    logger.debug("config ok: %s", cfg.config_hash())
    return cfg


def with_overrides(cfg: RunConfig, **sections: Dict[str, Any]) -> RunConfig:
    """Копия конфига с заменёнными ключами секций (значения уже в единицах ключей)."""
    changes = {name: {**getattr(cfg, name), **values} for name, values in sections.items()}
    return replace(cfg, **changes)


# ==========================================================
# Общие детали прогона
# ==========================================================

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return f"{float(value):.17g}"


def _nan_row(n: int) -> tuple[str, ...]:
    return ("nan",) * n


def generator_form(cfg: RunConfig) -> str:
    return GeneratorForm.SECULAR if cfg.solver["secular"] else GeneratorForm.FULL


def drive_from_config(cfg: RunConfig, **overrides: float) -> DriveSpec:
    """Секция drive.* (с заменами осей сетки) → DriveSpec в рад/с и с."""
    d = {**cfg.drive, **overrides}
    return DriveSpec(
        rabi_omega=mhz(float(d["omega_mhz"])),
        detuning=mhz(float(d["delta_mhz"])),
        duration=us(float(d["duration_us"])),
        qubit_omega=ghz(float(d["qubit_ghz"])),
    )


def _parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Точки считаются в пуле, результаты возвращаются в порядке items."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_csv(path: Path, data: tablib.Dataset, comments: Iterable[str] = ()) -> Path:
    header = "".join(f"# {line}\n" for line in comments)
    _write_text(path, header + data.export("csv", lineterminator="\n"))
    return path


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    return path


def versions() -> Dict[str, Any]:
    return {
        "solvers": dict(SOLVER_VERSIONS),
        "django": django.get_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
    }


def run_metadata(cfg: RunConfig, **extra: Any) -> Dict[str, Any]:
    """Хэш конфига, сам конфиг в единицах ключей и в СИ, версии решателей."""
    return {
        "config_hash": cfg.config_hash(),
        "config": cfg.flat(),
        "config_si": cfg.si_echo(),
        "versions": versions(),
        **extra,
    }


def relax_trace(cfg: RunConfig, land: CouplingLandscape, qubit_omega: float, times: np.ndarray | None = None) -> RelaxationTrace:
    """P_e(t) выбранным решателем до solver.t_max_ns; times годятся только для ряда."""
    s = cfg.solver
    p = RelaxationParams.from_landscape(land, qubit_omega)
    t_max, dt, convention = ns(s["t_max_ns"]), ns(s["dt_ns"]), s["convention"]
    if s["relax_solver"] == SolverTag.DDE:
        return dde_integrate(p, t_max, dt, convention)
    if s["relax_solver"] == SolverTag.MODE_ORACLE:
        return mode_oracle(p, s["n_modes"], mhz(s["bandwidth_mhz"]), t_max, dt, convention)
    if times is None:
        steps = max(1, int(math.ceil(t_max / dt * (1 - 1e-12))))
        times = np.linspace(0.0, t_max, steps + 1)
    return pe_series(p, times, convention)


# ==========================================================
# Свип по сетке
# ==========================================================

# какие оси понимает каждая величина
QUANTITY_AXES = {
    Quantity.GAMMA_EFF: (("qubit_ghz",),),
    Quantity.PE_TRACE: ((), ("qubit_ghz",), ("t_ns",), ("qubit_ghz", "t_ns")),
    Quantity.STEADY_STATE: tuple(
        combo
        for n in range(3)
        for combo in itertools.permutations(("qubit_ghz", "omega_mhz", "delta_mhz"), n)
    ),
    Quantity.MAP: (("omega_mhz",), ("omega_mhz", "delta_mhz")),
}


def check_plan(cfg: RunConfig) -> None:
    """Всё, что можно проверить до счёта: оси под каждую величину и шаг решателя."""
    errors: Dict[str, List[str]] = {}
    names = tuple(axis.name for axis in cfg.axes())
    for quantity in cfg.sweep["quantities"]:
        if names not in QUANTITY_AXES[quantity]:
            allowed = " or ".join(repr(combo) for combo in QUANTITY_AXES[quantity] if combo) or "no axes"
            errors.setdefault("sweep.x.name", []).append(f"{quantity} needs axes {allowed}, got {names!r}")
        if quantity == Quantity.PE_TRACE:
            solver = cfg.solver["relax_solver"]
            if "t_ns" in names and solver != SolverTag.SERIES:
                errors.setdefault("solver.relax_solver", []).append("t_ns axis needs the series solver")
            if solver == SolverTag.DDE and cfg.solver["dt_ns"] > cfg.landscape["delay_t_ns"]:
                errors.setdefault("solver.dt_ns", []).append("dt exceeds the delay T")
    if errors:
        raise ConfigError(errors)


def gamma_eff_table(cfg: RunConfig, land: CouplingLandscape, axis: GridAxis) -> tuple[tablib.Dataset, int]:
    data = tablib.Dataset(headers=list(GAMMA_HEADERS))
    masked = 0
    for q in axis.values():
        omega = ghz(float(q))
        try:
            parts = decompose(land, omega)
            total = gamma_eff(land, omega)
        except ValidationError as exc:
            data.append((_fmt(q),) + _nan_row(4) + (exc.code or "error",))
            masked += 1
            continue
        data.append((
            _fmt(q),
            _fmt(to_mhz(total)),
            _fmt(to_mhz(parts.intrinsic)),
            _fmt(to_mhz(parts.idt)),
            _fmt(to_mhz(parts.interference)),
            "",
        ))
    return data, masked


def pe_trace_table(cfg: RunConfig, land: CouplingLandscape, threads: int) -> tuple[tablib.Dataset, list[str], int]:
    axes = {axis.name: axis for axis in cfg.axes()}
    qubits = axes["qubit_ghz"].values() if "qubit_ghz" in axes else np.array([cfg.drive["qubit_ghz"]])
    times = axes["t_ns"].si_values() if "t_ns" in axes else None

    def run(q):
        try:
            return relax_trace(cfg, land, ghz(float(q)), times), ""
        except ValidationError as exc:
            if exc.code != "domain":
                raise
            return None, exc.code

    outcomes = _parallel_map(run, list(qubits), threads)
    comments, column, traces = [], [], []
    for q, (trace, reason) in zip(qubits, outcomes):
        if trace is None:
            comments.append(f"masked qubit_ghz={_fmt(q)}: {reason}")
            continue
        comments.extend(f"qubit_ghz={_fmt(q)}: {note}" for note in trace.notes)
        traces.append(trace)
        column.extend([_fmt(q)] * trace.times.size)
    data = trace_dataset(traces)
    if column:
        data.insert_col(0, col=column, header="qubit_ghz")
    else:
        data = tablib.Dataset(headers=["qubit_ghz", *TRACE_HEADERS])
    return data, comments, len(qubits) - len(traces)


def _state_row(rho: DensityMatrix2) -> tuple[str, ...]:
    r = bloch_from_rho(rho)
    return tuple(_fmt(v) for v in (rho.pe, r.rx, r.ry, r.rz, purity(rho))) + rho_csv_row(rho)


def steady_state_table(cfg: RunConfig, land: CouplingLandscape, threads: int) -> tuple[tablib.Dataset, int]:
    axes = cfg.axes()
    names = [axis.name for axis in axes]
    cells = list(itertools.product(*(axis.values() for axis in axes)))
    form = generator_form(cfg)
    extra = mhz(cfg.solver["extra_dephasing_mhz"])

    def run(cell):
        try:
            drive = drive_from_config(cfg, **{name: float(v) for name, v in zip(names, cell)})
            rates = dressed_rates(drive, land, extra_dephasing=extra)
            return _state_row(steady_state(drive, rates, form=form)), ""
        except ValidationError as exc:
            return _nan_row(len(STATE_HEADERS) + len(RHO_HEADERS)), exc.code or "error"

    data = tablib.Dataset(headers=[*names, *STATE_HEADERS, *RHO_HEADERS, "mask_reason"])
    masked = 0
    for cell, (row, reason) in zip(cells, _parallel_map(run, cells, threads)):
        masked += bool(reason)
        data.append(tuple(_fmt(v) for v in cell) + row + (reason,))
    return data, masked


def map_table(
    grid: SweepGrid,
    qubit_ghz: float,
    land: CouplingLandscape,
    cfg: RunConfig,
    threads: int,
    *,
    delta_mhz: float = 0.0,
    lead: Sequence[str] = (),
) -> tuple[tablib.Dataset, SweepGrid, int]:
    """Карта ⟨σ⟩/чистоты в строках по индексу сетки (Ω внешний, Δ внутренний)."""
    out = map_coherence_purity(
        grid,
        ghz(qubit_ghz),
        land,
        form=generator_form(cfg),
        extra_dephasing=mhz(cfg.solver["extra_dephasing_mhz"]),
        threads=threads,
        shots=cfg.solver["shots"],
        seed=cfg.solver["seed"],
    )
    tomo = ("sx_tomo", "purity_tomo") if "sx_tomo" in out.results else ()
    lead_headers = ["qubit_ghz"] if lead else []
    data = tablib.Dataset(headers=[*lead_headers, *MAP_HEADERS, *tomo, "mask_reason"])
    omegas = out.axes[0].values()
    deltas = out.axes[1].values() if len(out.axes) > 1 else np.array([delta_mhz])
    shape = (omegas.size, deltas.size)
    results = {name: np.reshape(values, shape) for name, values in out.results.items()}
    for i, j in itertools.product(range(shape[0]), range(shape[1])):
        values = [results[name][i, j] for name in MAP_HEADERS[2:] + tomo]
        data.append((*lead, _fmt(omegas[i]), _fmt(deltas[j]), *(_fmt(v) for v in values), results["mask_reason"][i, j]))
    masked = int(np.count_nonzero(results["mask_reason"] != ""))
    return data, out, masked


def _grid_comments(cfg: RunConfig, grid: SweepGrid, qubit_ghz: float) -> list[str]:
    lines = [f"qubit_ghz={_fmt(qubit_ghz)} generator={generator_form(cfg)}"]
    for label, axis in zip("xy", grid.axes):
        lines.append(f"{label}: {axis.name} {_fmt(axis.start)}..{_fmt(axis.stop)} count={axis.count}")
    return lines


def run_sweep(cfg: RunConfig, out_dir: Path | str, *, threads: int | None = None) -> RunOutcome:
    """
    Считает sweep.quantities на сетке sweep.x/sweep.y и пишет <quantity>.csv
    и sweep.meta.json. Ошибки конфига: до записи первого файла.
    """
    check_plan(cfg)
    threads = threads or cfg.solver["threads"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    land = landscape_from_config(cfg.landscape)
    axes = cfg.axes()
    files: list[Path] = []
    masked: Dict[str, int] = {}

    for quantity in cfg.sweep["quantities"]:
        path = out / f"{quantity}.csv"
        if quantity == Quantity.GAMMA_EFF:
            data, count = gamma_eff_table(cfg, land, axes[0])
            write_csv(path, data)
        elif quantity == Quantity.PE_TRACE:
            data, comments, count = pe_trace_table(cfg, land, threads)
            write_csv(path, data, comments)
        elif quantity == Quantity.STEADY_STATE:
            data, count = steady_state_table(cfg, land, threads)
            write_csv(path, data, [f"generator={generator_form(cfg)}"])
        else:
            grid = SweepGrid(axes=axes)
            data, _, count = map_table(grid, cfg.drive["qubit_ghz"], land, cfg, threads)
            write_csv(path, data, _grid_comments(cfg, grid, cfg.drive["qubit_ghz"]) + [f"masked cells: {count}"])
        files.append(path)
        masked[path.name] = count
        if count:
            logger.warning("%s: %d masked points", path.name, count)

    meta_path = write_json(out / "sweep.meta.json", run_metadata(cfg, masked=masked))
    files.append(meta_path)
    return RunOutcome(files=tuple(files), masked=masked)


# ==========================================================
# Пресеты рисунков
# ==========================================================

def _linspace(bounds: Sequence[float]) -> np.ndarray:
    lo, hi, count = bounds
    return np.linspace(float(lo), float(hi), int(count))


def _dynamics_rows(cfg: RunConfig, land: CouplingLandscape, cases: Sequence[tuple[str, DriveSpec]], header: str) -> tablib.Dataset:
    """P_e(t) из основного состояния на time_samples точках длительности накачки."""
    data = tablib.Dataset(headers=[header, "t_ns", "pe"])
    form = generator_form(cfg)
    extra = mhz(cfg.solver["extra_dephasing_mhz"])
    for label, drive in cases:
        rates = dressed_rates(drive, land, extra_dephasing=extra)
        traj = evolve_pe_at(GROUND, drive, rates, cfg.solver["time_samples"], form=form)
        for t, pe in zip(traj.times, traj.pe()):
            data.append((label, _fmt(to_ns(float(t))), _fmt(pe)))
    return data


def _fig2b(cfg: RunConfig, land: CouplingLandscape, threads: int) -> Dict[str, Any]:
    T = land.delay_T
    a, b = PRESETS["FIG2B_WINDOW_T"]
    times = np.linspace(0.0, PRESETS["FIG2B_TRACE_SPAN_T"] * T, int(PRESETS["FIG2B_TRACE_POINTS"]))
    qubits = _linspace(PRESETS["FIG2B_QUBIT_GHZ"])
    convention = cfg.solver["convention"]

    def run(q):
        omega = ghz(float(q))
        p = RelaxationParams.from_landscape(land, omega)
        trace = pe_series(p, times, convention)
        return gamma_eff(land, omega), effective_rate(trace, (a * T, b * T), delay_T=T), markov_rate(p)

    data = tablib.Dataset(headers=["qubit_ghz", "gamma_eff_mhz", "effective_rate_mhz", "markov_rate_mhz"])
    for q, values in zip(qubits, _parallel_map(run, list(qubits), threads)):
        data.append((_fmt(q), *(_fmt(to_mhz(v)) for v in values)))
    g = np.array([float(v) for v in data["gamma_eff_mhz"]])
    return {
        "data": data,
        "meta": {
            "modulation_period_mhz": to_mhz(land.modulation_period),
            "gamma_eff_max_over_min": float(g.max() / g.min()),
            "rate_window_t": [a, b],
        },
    }


def _fig2c(cfg: RunConfig, land: CouplingLandscape, threads: int) -> Dict[str, Any]:
    qubits = [float(q) for q in PRESETS["FIG2C_QUBITS_GHZ"]]
    traces = _parallel_map(lambda q: relax_trace(cfg, land, ghz(q)), qubits, threads)
    data = trace_dataset(traces)
    data.insert_col(0, col=[_fmt(q) for q, trace in zip(qubits, traces) for _ in range(trace.times.size)], header="qubit_ghz")
    info = []
    for q in qubits:
        p = RelaxationParams.from_landscape(land, ghz(q))
        phase = phase_mod(p.omega_q, p.delay_T)
        info.append({
            "qubit_ghz": q,
            "phase": phase,
            "phase_over_pi": phase / math.pi,
            "gamma_t": p.gamma_t,
            "gamma_eff_mhz": to_mhz(gamma_eff(land, p.omega_q)),
        })
    notes = [f"qubit_ghz={_fmt(q)}: {note}" for q, trace in zip(qubits, traces) for note in trace.notes]
    return {"data": data, "comments": notes, "meta": {"traces": info, "solver": cfg.solver["relax_solver"]}}


def _fig3b(cfg: RunConfig, land: CouplingLandscape, threads: int) -> Dict[str, Any]:
    """P_e(Ω) при Δ = 0: «замороженный» γ_e (полный генератор) и ландшафт с частотной зависимостью."""
    qubit = float(PRESETS["FIG3_QUBIT_GHZ"])
    g_e = gamma_eff(land, ghz(qubit))
    extra = mhz(cfg.solver["extra_dephasing_mhz"])
    form = generator_form(cfg)
    omegas = _linspace(PRESETS["FIG3B_OMEGA_MHZ"])

    def run(omega_mhz):
        drive = drive_from_config(cfg, qubit_ghz=qubit, omega_mhz=float(omega_mhz), delta_mhz=0.0)
        frozen = steady_state(drive, flat_dressed_rates(drive, g_e), form=GeneratorForm.FULL)
        resolved = steady_state(drive, dressed_rates(drive, land, extra_dephasing=extra), form=form)
        return steady_pe_resonant(drive.rabi_omega, g_e), frozen.pe, resolved.pe, purity(resolved)

    data = tablib.Dataset(headers=["omega_mhz", "pe_closed_form", "pe_frozen", "pe_landscape", "purity_landscape"])
    rows = _parallel_map(run, list(omegas), threads)
    for omega_mhz, values in zip(omegas, rows):
        data.append((_fmt(omega_mhz), *(_fmt(v) for v in values)))
    cases = [
        (_fmt(o), drive_from_config(cfg, qubit_ghz=qubit, omega_mhz=float(o), delta_mhz=0.0))
        for o in PRESETS["FIG3B_DYNAMICS_OMEGA_MHZ"]
    ]
    return {
        "data": data,
        "dynamics": _dynamics_rows(cfg, land, cases, "omega_mhz"),
        "meta": {
            "qubit_ghz": qubit,
            "gamma_eff_mhz": to_mhz(g_e),
            "max_closed_form_deviation": max(abs(r[0] - r[1]) for r in rows),
        },
    }


def _fig3_qubit_sweep(cfg: RunConfig, land: CouplingLandscape, threads: int, omega_mhz: float) -> Dict[str, Any]:
    """Резонансная накачка с фиксированной Ω, частота кубита: по периоду ландшафта."""
    qubits = _linspace(PRESETS["FIG3_QUBIT_SPAN_GHZ"])
    extra = mhz(cfg.solver["extra_dephasing_mhz"])
    form = generator_form(cfg)

    def run(q):
        drive = drive_from_config(cfg, qubit_ghz=float(q), omega_mhz=omega_mhz, delta_mhz=0.0)
        g_e = gamma_eff(land, drive.qubit_omega)
        rho = steady_state(drive, dressed_rates(drive, land, extra_dephasing=extra), form=form)
        return g_e, rho.pe, steady_pe_resonant(drive.rabi_omega, g_e), purity(rho)

    data = tablib.Dataset(headers=["qubit_ghz", "gamma_eff_mhz", "pe", "pe_closed_form", "purity"])
    rows = _parallel_map(run, list(qubits), threads)
    for q, (g_e, pe, closed, pur) in zip(qubits, rows):
        data.append((_fmt(q), _fmt(to_mhz(g_e)), _fmt(pe), _fmt(closed), _fmt(pur)))

    constructive, destructive = interference_extrema(land, ghz(float(PRESETS["FIG3_QUBIT_GHZ"])))
    cases = [
        (_fmt(to_ghz(w)), drive_from_config(cfg, qubit_ghz=to_ghz(w), omega_mhz=omega_mhz, delta_mhz=0.0))
        for w in (constructive, destructive)
    ]
    pe = [row[1] for row in rows]
    return {
        "data": data,
        "dynamics": _dynamics_rows(cfg, land, cases, "qubit_ghz"),
        "meta": {
            "omega_mhz": omega_mhz,
            "pe_mean": float(np.mean(pe)),
            "pe_modulation_amplitude": modulation_amplitude(pe),
        },
    }


def _fig3d(cfg: RunConfig, land: CouplingLandscape, threads: int) -> Dict[str, Any]:
    return _fig3_qubit_sweep(cfg, land, threads, float(PRESETS["FIG3D_OMEGA_MHZ"]))


def _fig3f(cfg: RunConfig, land: CouplingLandscape, threads: int) -> Dict[str, Any]:
    return _fig3_qubit_sweep(cfg, land, threads, float(PRESETS["FIG3F_OMEGA_MHZ"]))


def _fig4i(cfg: RunConfig, land: CouplingLandscape, threads: int) -> Dict[str, Any]:
    """Чистота стационара от Ω при Δ = −5 МГц на двух частотах кубита."""
    lo, hi, count = PRESETS["FIG4I_OMEGA_MHZ"]
    delta = float(PRESETS["FIG4I_DELTA_MHZ"])
    grid = SweepGrid(axes=(GridAxis("omega_mhz", float(lo), float(hi), int(count)), GridAxis("delta_mhz", delta, delta, 1)))
    data = None
    curves, masked = {}, 0
    for q in PRESETS["FIG4I_QUBITS_GHZ"]:
        part, out, count_masked = map_table(grid, float(q), land, cfg, threads, lead=(_fmt(q),))
        masked += count_masked
        curves[float(q)] = out.results["purity"][:, 0]
        if data is None:
            data = part
        else:
            for i in range(part.height):
                data.append(part[i])

    omegas = grid.axes[0].values()
    window = omegas >= float(PRESETS["FIG4I_PERIOD_FROM_MHZ"])
    high = omegas >= float(PRESETS["FIG4I_HIGH_OMEGA_MHZ"])
    first, second = (curves[float(q)] for q in PRESETS["FIG4I_QUBITS_GHZ"])
    return {
        "data": data,
        "masked": masked,
        "meta": {
            "delta_mhz": delta,
            "purity_period_mhz": {
                _fmt(q): purity_period(omegas[window], curve[window]) for q, curve in curves.items()
            },
            "purity_max_high_omega": {_fmt(q): float(np.nanmax(curve[high])) for q, curve in curves.items()},
            "pearson": pearson(first[window], second[window]),
        },
    }


PRESET_RUNNERS: Dict[str, Callable[[RunConfig, CouplingLandscape, int], Dict[str, Any]]] = {
    Preset.FIG2B: _fig2b,
    Preset.FIG2C: _fig2c,
    Preset.FIG3B: _fig3b,
    Preset.FIG3D: _fig3d,
    Preset.FIG3F: _fig3f,
    Preset.FIG4I: _fig4i,
}


def run_preset(name: str, cfg: RunConfig, out_dir: Path | str, *, threads: int | None = None) -> RunOutcome:
    """<name>.csv + <name>.meta.json (+ <name>_dynamics.csv для рисунков 3)."""
    if name not in PRESET_RUNNERS:
        raise ConfigError({"sweep.preset": [f"unknown preset {name!r}; choose from {', '.join(Preset.values)}"]})
    threads = threads or cfg.solver["threads"]
    land = landscape_from_config(cfg.landscape)
    logger.info("preset %s: start", name)
    result = PRESET_RUNNERS[name](cfg, land, threads)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_csv(out / f"{name}.csv", result["data"], result.get("comments", ()))]
    if "dynamics" in result:
        files.append(write_csv(out / f"{name}_dynamics.csv", result["dynamics"]))
    masked = {f"{name}.csv": result.get("masked", 0)}
    meta = run_metadata(cfg, preset=name, masked=masked, results=result["meta"])
    files.append(write_json(out / f"{name}.meta.json", meta))
    logger.info("preset %s: %d files", name, len(files))
    return RunOutcome(files=tuple(files), masked=masked, summary=result["meta"])
