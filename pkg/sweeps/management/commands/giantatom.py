# coding: utf-8
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict

import tablib
from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError, CommandParser

from landscape.services import fit_landscape, landscape_from_config, landscape_to_config
from landscape.units import ghz, mhz
from sweeps.models import ConfigError, Preset, Quantity, RunConfig, RunOutcome
from sweeps.services import run_metadata, run_preset, run_sweep, validate_config, with_overrides, write_json

# =======================================================
# Конфиг по умолчанию (можно переопределить в settings.GIANT_ATOM_CLI)
# =======================================================
DEFAULTS = {
    "OUT_DIR": "out",
    "VERBOSE_BY_DEFAULT": True,
    "FIT_FILE": "fit.json",
}

CONFIG: Dict[str, Any] = {**DEFAULTS, **getattr(settings, "GIANT_ATOM_CLI", {})}

# глагол → величина свипа
VERB_QUANTITIES = {
    "landscape": Quantity.GAMMA_EFF,
    "relax": Quantity.PE_TRACE,
    "driven": Quantity.STEADY_STATE,
    "map": Quantity.MAP,
}
VERBS = (*VERB_QUANTITIES, "fit", "preset", "validate")

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


# =======================================================
# ЛОГГЕР
# =======================================================
class Log:
    def __init__(self, cmd, enabled: bool):
        self.cmd = cmd
        self.enabled = bool(enabled)

    def info(self, msg: str):
        if self.enabled:
            self.cmd.stdout.write(msg)

    def note(self, msg: str):
        if self.enabled:
            self.cmd.stdout.write(self.cmd.style.NOTICE(msg))

    def ok(self, msg: str):
        if self.enabled:
            self.cmd.stdout.write(self.cmd.style.SUCCESS(msg))

    def warn(self, msg: str):
        if self.enabled:
            self.cmd.stderr.write(self.cmd.style.WARNING(msg))

    def err(self, msg: str):
        self.cmd.stderr.write(self.cmd.style.ERROR(msg))


# =======================================================
# КОМАНДА
# =======================================================
class Command(BaseCommand):
    help = (
        "Симулятор гигантского атома на ПАВ-волноводе: ландшафт γ_e(ω), релаксация, "
        "накачка, карты чистоты, подгонка и пресеты рисунков. Пишет CSV и meta.json."
    )

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("verb", choices=VERBS, help="landscape|relax|driven|map|fit|preset|validate")
        parser.add_argument("target", nargs="?", help="Имя пресета для preset")
        parser.add_argument("--config", type=str, help="YAML-конфиг с точечными ключами")
        parser.add_argument("--out", type=str, help="Каталог для CSV и meta.json")
        parser.add_argument("--seed", type=int, help="Сид (переопределяет solver.seed)")
        parser.add_argument("--threads", type=int, help="Потоков на сетку (на результат не влияет)")
        parser.add_argument("--samples", type=str, help="CSV qubit_ghz,gamma_eff_mhz для fit")
        parser.add_argument("--verbose", action="store_true", help="Подробные логи")
        parser.add_argument("--quiet", action="store_true", help="Минимум логов")

    def handle(self, *args, **options):
        verbose = CONFIG["VERBOSE_BY_DEFAULT"]
        if options.get("verbose"):
            verbose = True
        if options.get("quiet"):
            verbose = False
        log = Log(self, verbose)

        verb = options["verb"]
        cfg = self._load_config(options, log)
        if verb == "validate":
            log.ok(f"Конфиг в порядке, hash {cfg.config_hash()}")
            if options.get("verbose"):
                for key, value in sorted(cfg.flat().items()):
                    log.info(f"  {key} = {value!r}")
            return

        out_dir = Path(options.get("out") or CONFIG["OUT_DIR"])
        threads = options.get("threads")
        if threads is not None and threads < 1:
            raise CommandError("--threads must be >= 1", returncode=EXIT_CONFIG)

        try:
            if verb == "preset":
                outcome = self._preset(options.get("target"), cfg, out_dir, threads, log)
            elif verb == "fit":
                outcome = self._fit(options.get("samples"), cfg, out_dir, log)
            else:
                cfg = with_overrides(cfg, sweep={"quantities": [str(VERB_QUANTITIES[verb])]})
                log.note(f"{verb}: {cfg.sweep['quantities'][0]} → {out_dir}")
                outcome = run_sweep(cfg, out_dir, threads=threads)
        except ConfigError as exc:
            self._config_failed(exc, log)
        except ValidationError as exc:
            for message in exc.messages:
                log.err(f"[{exc.code or 'error'}] {message}")
            raise CommandError(f"{verb} failed", returncode=EXIT_RUNTIME)

        for name, count in sorted(outcome.masked.items()):
            if count:
                log.warn(f"{name}: замаскировано точек: {count}")
        log.ok(f"Готово. Файлов: {len(outcome.files)}, каталог: {out_dir}")

    # ---------- конфиг ----------

    def _load_config(self, options, log: Log) -> RunConfig:
        text = ""
        path = options.get("config")
        if path:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise CommandError(f"cannot read config {path}: {exc}", returncode=EXIT_CONFIG)
        try:
            cfg = validate_config(text)
        except ConfigError as exc:
            self._config_failed(exc, log)
        if options.get("seed") is not None:
            if options["seed"] < 0:
                raise CommandError("--seed must be >= 0", returncode=EXIT_CONFIG)
            cfg = with_overrides(cfg, solver={"seed": options["seed"]})
        return cfg

    def _config_failed(self, exc: ConfigError, log: Log):
        for key, messages in sorted(exc.errors.items()):
            for message in messages:
                log.err(f"{key}: {message}")
        raise CommandError(f"invalid config: {len(exc.errors)} key(s) with errors", returncode=EXIT_CONFIG)

    # ---------- глаголы ----------

    def _preset(self, name: str | None, cfg: RunConfig, out_dir: Path, threads, log: Log):
        name = name or cfg.sweep["preset"]
        if name not in Preset.values:
            raise CommandError(
                f"unknown preset {name!r}; choose from {', '.join(Preset.values)}", returncode=EXIT_CONFIG
            )
        log.note(f"preset {name}: {Preset(name).label}")
        outcome = run_preset(name, cfg, out_dir, threads=threads)
        for key, value in sorted(outcome.summary.items()):
            log.info(f"  {key}: {json.dumps(value, sort_keys=True)}")
        return outcome

    def _fit(self, samples_path: str | None, cfg: RunConfig, out_dir: Path, log: Log):
        if not samples_path:
            raise CommandError("fit needs --samples <csv>", returncode=EXIT_CONFIG)
        try:
            text = Path(samples_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CommandError(f"cannot read samples {samples_path}: {exc}", returncode=EXIT_CONFIG)
        body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
        data = tablib.Dataset().load(body, format="csv")
        missing = {"qubit_ghz", "gamma_eff_mhz"} - set(data.headers or ())
        if missing:
            raise CommandError(f"samples CSV lacks columns: {', '.join(sorted(missing))}", returncode=EXIT_CONFIG)

        samples = []
        for q, g in zip(data["qubit_ghz"], data["gamma_eff_mhz"]):
            value = float(g)
            if value == value:  # пропуск nan из замаскированных строк
                samples.append((ghz(float(q)), mhz(value)))
        log.note(f"fit: {len(samples)} точек из {samples_path}")

        init = landscape_from_config(cfg.landscape)
        fitted, report = fit_landscape(samples, init)
        for message in report.messages:
            log.warn(message)
        if not report.delay_identifiable:
            log.warn("T не определяется по выборке: β ≈ 0")

        out_dir.mkdir(parents=True, exist_ok=True)
        path = write_json(
            out_dir / CONFIG["FIT_FILE"],
            run_metadata(cfg, report=report.as_dict(), landscape=landscape_to_config(fitted)),
        )
        return RunOutcome(files=(path,), summary=report.as_dict())
