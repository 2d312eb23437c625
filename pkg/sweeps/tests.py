import csv
import json
import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from landscape.services import gamma_eff, landscape_from_config
from landscape.units import ghz, ns, to_mhz
from relaxation.models import RelaxationParams

from .models import ConfigError, GridAxis, SweepGrid
from .services import PRESET_RUNNERS, check_plan, run_preset, run_sweep, validate_config, with_overrides

ONE_POINT = """
sweep.x.start: 4.891
sweep.x.stop: 4.891
sweep.x.count: 1
"""

STEADY_GRID = """
sweep:
  quantities: [steady_state]
  x: {name: omega_mhz, start: 0.0, stop: 5.0, count: 6}
  y: {name: delta_mhz, start: -4.0, stop: 4.0, count: 3}
"""


def read_rows(path: Path) -> list[dict]:
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def config(text: str = "", **env):
    return validate_config(text, environ=env)


class TempDirMixin:
    def make_dir(self) -> Path:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        return Path(tmp.name)


# ---------- модели ----------

class GridTests(SimpleTestCase):
    def test_single_point_axis(self):
        axis = GridAxis("qubit_ghz", 4.891, 4.891, 1)
        self.assertEqual(list(axis.values()), [4.891])
        self.assertAlmostEqual(axis.si_values()[0], ghz(4.891))

    def test_axis_invariants(self):
        with self.assertRaises(ValidationError):
            GridAxis("qubit_ghz", 4.9, 4.8, 3)
        with self.assertRaises(ValidationError):
            GridAxis("qubit_ghz", 4.8, 4.9, 0)
        with self.assertRaises(ValidationError):
            GridAxis("qubit_mhz", 4.8, 4.9, 2)

    def test_result_shape_checked(self):
        grid = SweepGrid(axes=(GridAxis("omega_mhz", 0, 1, 3), GridAxis("delta_mhz", 0, 1, 2)))
        self.assertEqual(grid.shape, (3, 2))
        with self.assertRaises(ValidationError):
            grid.with_results({"pe": np.zeros((2, 3))})


# ---------- конфиг ----------

class ValidateConfigTests(SimpleTestCase):
    def test_empty_document_gives_defaults(self):
        cfg = config("")
        self.assertEqual(cfg.landscape["beta"], 0.78)
        self.assertEqual(cfg.landscape["delay_t_ns"], 125.0)
        self.assertEqual(cfg.sweep["quantities"], ["gamma_eff"])
        self.assertEqual(cfg.drive["duration_us"], 3.8)
        land = landscape_from_config(cfg.landscape)
        self.assertAlmostEqual(land.delay_T, ns(125.0))

    def test_beta_out_of_range(self):
        with self.assertRaises(ConfigError) as ctx:
            config("landscape.beta: 1.5")
        self.assertEqual(ctx.exception.errors["landscape.beta"], ["beta out of [0,1]"])
        self.assertEqual(ctx.exception.code, "configuration")

    def test_delay_echoed_in_si(self):
        cfg = config("landscape.delay_t_ns: 125")
        self.assertEqual(cfg.si_echo()["landscape.delay_t_s"], 1.25e-07)
        self.assertEqual(cfg.flat()["landscape.delay_t_ns"], 125.0)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError) as ctx:
            config("landscape.betta: 0.5")
        self.assertEqual(ctx.exception.errors["landscape.betta"], ["unknown key"])

    def test_unit_mismatch(self):
        with self.assertRaises(ConfigError) as ctx:
            config("landscape.delay_t_us: 0.125")
        message = ctx.exception.errors["landscape.delay_t_us"][0]
        self.assertTrue(message.startswith("unit mismatch"))
        self.assertIn("landscape.delay_t_ns", message)

    def test_all_errors_reported_together(self):
        with self.assertRaises(ConfigError) as ctx:
            config("landscape.beta: 1.5\nsolver.dt_ns: -1\nsweep.x.count: 0\nfoo.bar: 1\n")
        self.assertEqual(
            set(ctx.exception.errors),
            {"landscape.beta", "solver.dt_ns", "sweep.x.count", "foo.bar"},
        )

    def test_syntax_error_has_position(self):
        with self.assertRaises(ConfigError) as ctx:
            config("landscape.beta: 0.5\nsolver.seed: 1: 2\n")
        message = ctx.exception.errors["<document>"][0]
        self.assertIn("line 2", message)
        self.assertIn("column", message)

    def test_nested_sections_are_flattened(self):
        cfg = config("landscape:\n  beta: 0.5\nsweep:\n  x:\n    count: 11\n")
        self.assertEqual(cfg.landscape["beta"], 0.5)
        self.assertEqual(cfg.sweep["x.count"], 11)

    def test_unknown_quantity_path(self):
        with self.assertRaises(ConfigError) as ctx:
            config("sweep.quantities: [gamma_eff, nope]")
        self.assertIn("sweep.quantities.1", ctx.exception.errors)

    def test_top_level_must_be_mapping(self):
        with self.assertRaises(ConfigError):
            config("- 1\n- 2\n")

    def test_negative_loss_at_band_edge(self):
        with self.assertRaises(ConfigError) as ctx:
            config("landscape.gamma_in_c0_mhz: -1.0")
        self.assertIn("landscape", ctx.exception.errors)

    def test_environment_override(self):
        cfg = config("landscape.beta: 0.3", GIANT_ATOM__LANDSCAPE__BETA="0.5", GIANT_ATOM__SWEEP__X__COUNT="5")
        self.assertEqual(cfg.landscape["beta"], 0.5)
        self.assertEqual(cfg.sweep["x.count"], 5)

    def test_environment_keys_are_strict(self):
        with self.assertRaises(ConfigError) as ctx:
            config("", GIANT_ATOM__LANDSCAPE__BOGUS="1")
        self.assertIn("landscape.bogus", ctx.exception.errors)

    def test_hash_tracks_values(self):
        self.assertEqual(config("").config_hash(), config("landscape.beta: 0.78").config_hash())
        self.assertNotEqual(config("").config_hash(), config("landscape.beta: 0.5").config_hash())

    def test_plan_rejects_axes_mismatch(self):
        cfg = config("sweep.quantities: [map]")
        with self.assertRaises(ConfigError) as ctx:
            check_plan(cfg)
        self.assertIn("sweep.x.name", ctx.exception.errors)

    def test_plan_rejects_time_axis_for_dde(self):
        cfg = config(
            "solver.relax_solver: dde\nsweep.quantities: [pe_trace]\n"
            "sweep.x: {name: t_ns, start: 0, stop: 100, count: 5}\n"
        )
        with self.assertRaises(ConfigError) as ctx:
            check_plan(cfg)
        self.assertIn("solver.relax_solver", ctx.exception.errors)


# ---------- свипы ----------

class RunSweepTests(TempDirMixin, SimpleTestCase):
    def test_one_point_gamma_eff_matches_landscape(self):
        cfg = config(ONE_POINT)
        out = self.make_dir()
        run_sweep(cfg, out)
        rows = read_rows(out / "gamma_eff.csv")
        self.assertEqual(len(rows), 1)
        expected = to_mhz(gamma_eff(landscape_from_config(cfg.landscape), ghz(4.891)))
        self.assertEqual(rows[0]["gamma_eff_mhz"], f"{expected:.17g}")
        self.assertEqual(rows[0]["mask_reason"], "")

    def test_gamma_eff_oscillates_with_delay_period(self):
        cfg = config("sweep.x: {name: qubit_ghz, start: 4.88, stop: 4.90, count: 1001}")
        out = self.make_dir()
        run_sweep(cfg, out)
        rows = read_rows(out / "gamma_eff.csv")
        f = np.array([float(r["qubit_ghz"]) for r in rows]) * 1e3
        g = np.array([float(r["gamma_eff_mhz"]) for r in rows])
        peaks = f[1:-1][(g[1:-1] > g[:-2]) & (g[1:-1] > g[2:])]
        self.assertAlmostEqual(float(np.mean(np.diff(peaks))), 8.0, delta=0.1)
        self.assertGreaterEqual(g.max() / g.min(), 4.0)

    def test_out_of_band_points_masked(self):
        cfg = config("sweep.x: {name: qubit_ghz, start: 5.4, stop: 5.6, count: 3}")
        out = self.make_dir()
        outcome = run_sweep(cfg, out)
        rows = read_rows(out / "gamma_eff.csv")
        self.assertEqual([r["mask_reason"] for r in rows], ["", "", "domain"])
        self.assertEqual(rows[-1]["gamma_eff_mhz"], "nan")
        self.assertEqual(outcome.masked["gamma_eff.csv"], 1)

    def test_config_error_writes_nothing(self):
        cfg = config("sweep.quantities: [gamma_eff, map]")
        out = self.make_dir()
        with self.assertRaises(ConfigError):
            run_sweep(cfg, out)
        self.assertEqual(list(out.iterdir()), [])

    def test_thread_count_does_not_change_bytes(self):
        cfg = config(STEADY_GRID)
        a, b = self.make_dir(), self.make_dir()
        run_sweep(cfg, a, threads=1)
        run_sweep(cfg, b, threads=8)
        for name in ("steady_state.csv", "sweep.meta.json"):
            self.assertEqual((a / name).read_bytes(), (b / name).read_bytes())
        self.assertEqual(len(read_rows(a / "steady_state.csv")), 18)

    def test_steady_state_columns(self):
        out = self.make_dir()
        run_sweep(config(STEADY_GRID), out)
        row = read_rows(out / "steady_state.csv")[0]
        self.assertEqual(float(row["omega_mhz"]), 0.0)
        self.assertAlmostEqual(float(row["pe"]), 0.0, places=9)
        self.assertAlmostEqual(float(row["purity"]), 1.0, places=9)
        self.assertIn("rho01_re", row)

    def test_map_with_masked_cells(self):
        cfg = config(
            "drive.qubit_ghz: 5.48\nsweep.quantities: [map]\n"
            "sweep.x: {name: omega_mhz, start: 0, stop: 40, count: 5}\n"
            "sweep.y: {name: delta_mhz, start: 0, stop: 0, count: 1}\n"
        )
        out = self.make_dir()
        outcome = run_sweep(cfg, out)
        text = (out / "map.csv").read_text(encoding="utf-8")
        self.assertTrue(text.startswith("# qubit_ghz=5.48"))
        rows = read_rows(out / "map.csv")
        self.assertEqual(list(rows[0])[:8], ["omega_mhz", "delta_mhz", "sx", "sy", "sz", "pe", "purity", "mask_reason"])
        self.assertEqual(rows[-1]["mask_reason"], "domain")
        self.assertGreater(outcome.masked_total, 0)

    def test_pe_trace_per_qubit_frequency(self):
        cfg = config(
            "solver.relax_solver: dde\nsolver.t_max_ns: 250\nsweep.quantities: [pe_trace]\n"
            "sweep.x: {name: qubit_ghz, start: 4.8887, stop: 4.8904, count: 2}\n"
        )
        out = self.make_dir()
        run_sweep(cfg, out)
        rows = read_rows(out / "pe_trace.csv")
        self.assertEqual(list(rows[0]), ["qubit_ghz", "t_ns", "pe", "solver"])
        self.assertEqual({r["solver"] for r in rows}, {"dde"})
        self.assertEqual(len({r["qubit_ghz"] for r in rows}), 2)
        self.assertEqual(float(rows[0]["pe"]), 1.0)

    def test_pe_trace_on_time_axis(self):
        cfg = config("sweep.quantities: [pe_trace]\nsweep.x: {name: t_ns, start: 0, stop: 100, count: 11}\n")
        out = self.make_dir()
        run_sweep(cfg, out)
        rows = read_rows(out / "pe_trace.csv")
        self.assertEqual(len(rows), 11)
        p = RelaxationParams.from_landscape(landscape_from_config(cfg.landscape), ghz(cfg.drive["qubit_ghz"]))
        for row in rows:
            t = ns(float(row["t_ns"]))
            self.assertAlmostEqual(float(row["pe"]), math.exp(-(p.gamma + p.gamma_in) * t), places=10)

    def test_rerun_is_byte_identical(self):
        cfg = config(ONE_POINT)
        a, b = self.make_dir(), self.make_dir()
        run_sweep(cfg, a)
        run_sweep(cfg, b)
        self.assertEqual((a / "gamma_eff.csv").read_bytes(), (b / "gamma_eff.csv").read_bytes())
        meta = json.loads((a / "sweep.meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["config_hash"], cfg.config_hash())
        self.assertEqual(meta["config_si"]["landscape.delay_t_s"], 1.25e-07)
        self.assertIn("series", meta["versions"]["solvers"])


# ---------- пресеты ----------

class PresetTests(TempDirMixin, SimpleTestCase):
    def test_unknown_preset(self):
        with self.assertRaises(ConfigError):
            run_preset("fig9z", config(""), self.make_dir())

    def test_fig2b(self):
        out = self.make_dir()
        outcome = run_preset("fig2b", config(""), out)
        self.assertAlmostEqual(outcome.summary["modulation_period_mhz"], 8.0, places=9)
        self.assertGreaterEqual(outcome.summary["gamma_eff_max_over_min"], 4.0)
        rows = read_rows(out / "fig2b.csv")
        self.assertEqual(len(rows), 721)
        for row in rows:
            self.assertGreater(float(row["effective_rate_mhz"]), 0.0)

    def test_fig2c_early_decay_is_single_exponential(self):
        cfg = config("")
        out = self.make_dir()
        outcome = run_preset("fig2c", cfg, out)
        self.assertEqual(len(outcome.summary["traces"]), 4)
        land = landscape_from_config(cfg.landscape)
        rows = read_rows(out / "fig2c.csv")
        for q in (4.8887, 4.8894, 4.8899, 4.8904):
            p = RelaxationParams.from_landscape(land, ghz(q))
            early = [r for r in rows if float(r["qubit_ghz"]) == q and float(r["t_ns"]) < 125.0]
            self.assertGreater(len(early), 100)
            for r in early[::50]:
                t = ns(float(r["t_ns"]))
                self.assertAlmostEqual(float(r["pe"]), math.exp(-(p.gamma + p.gamma_in) * t), places=10)
        meta = json.loads((out / "fig2c.meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["preset"], "fig2c")
        self.assertTrue(all(0 <= t["phase"] < 2 * math.pi for t in meta["results"]["traces"]))

    def test_fig3b_matches_closed_form(self):
        out = self.make_dir()
        run_preset("fig3b", config(""), out)
        rows = read_rows(out / "fig3b.csv")
        for row in rows:
            self.assertLess(abs(float(row["pe_frozen"]) - float(row["pe_closed_form"])), 1e-8)
        dynamics = read_rows(out / "fig3b_dynamics.csv")
        self.assertEqual(len(dynamics), 4 * 256)
        self.assertEqual(float(dynamics[0]["pe"]), 0.0)

    def test_fig3d_weak_drive_tracks_gamma_eff(self):
        cfg = config("")
        out = self.make_dir()
        weak = run_preset("fig3d", cfg, out)
        rows = read_rows(out / "fig3d.csv")
        self.assertEqual(len(rows), 81)
        for row in rows:
            self.assertLess(abs(float(row["pe"]) - float(row["pe_closed_form"])), 0.02, row["qubit_ghz"])
        strong = run_preset("fig3f", cfg, self.make_dir())
        self.assertGreater(
            weak.summary["pe_modulation_amplitude"], 10 * strong.summary["pe_modulation_amplitude"]
        )
        meta = json.loads((out / "fig3d.meta.json").read_text(encoding="utf-8"))
        self.assertAlmostEqual(
            meta["results"]["pe_modulation_amplitude"], weak.summary["pe_modulation_amplitude"], places=12
        )

    def test_every_preset_ignores_thread_count(self):
        cfg = config("")
        for name in PRESET_RUNNERS:
            with self.subTest(preset=str(name)):
                a, b = self.make_dir(), self.make_dir()
                first = run_preset(name, cfg, a, threads=1)
                run_preset(name, cfg, b, threads=8)
                self.assertEqual(sorted(p.name for p in a.iterdir()), sorted(p.name for p in b.iterdir()))
                for path in first.files:
                    self.assertEqual(path.read_bytes(), (b / path.name).read_bytes(), path.name)

    def test_fig3f_saturates(self):
        out = self.make_dir()
        outcome = run_preset("fig3f", config(""), out)
        self.assertAlmostEqual(outcome.summary["pe_mean"], 0.5, delta=0.02)
        self.assertLessEqual(outcome.summary["pe_modulation_amplitude"], 0.01)
        self.assertTrue((out / "fig3f_dynamics.csv").exists())

    def test_fig4i_is_deterministic_and_anti_synchronized(self):
        cfg = config("")
        a, b = self.make_dir(), self.make_dir()
        outcome = run_preset("fig4i", cfg, a, threads=1)
        run_preset("fig4i", cfg, b, threads=8)
        for name in ("fig4i.csv", "fig4i.meta.json"):
            self.assertEqual((a / name).read_bytes(), (b / name).read_bytes())
        self.assertLess(outcome.summary["pearson"], 0.0)
        first_period = list(outcome.summary["purity_period_mhz"].values())[0]
        self.assertAlmostEqual(first_period, 8.0, delta=0.5)
        self.assertGreaterEqual(max(outcome.summary["purity_max_high_omega"].values()), 0.7)


# ---------- команда ----------

class CommandTests(TempDirMixin, SimpleTestCase):
    def call(self, *args, **options):
        stdout, stderr = StringIO(), StringIO()
        call_command("giantatom", *args, stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue(), stderr.getvalue()

    def write_config(self, text: str) -> str:
        path = self.make_dir() / "run.yaml"
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_validate_ok(self):
        stdout, _ = self.call("validate", config=self.write_config("landscape.beta: 0.5"))
        self.assertIn(config("landscape.beta: 0.5").config_hash(), stdout)

    def test_validate_reports_key_paths(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("validate", config=self.write_config("landscape.beta: 1.5\nlandscape.betta: 1\n"))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_landscape_verb(self):
        out = self.make_dir()
        self.call("landscape", config=self.write_config(ONE_POINT), out=str(out), quiet=True)
        self.assertEqual(len(read_rows(out / "gamma_eff.csv")), 1)
        meta = json.loads((out / "sweep.meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["config"]["sweep.quantities"], ["gamma_eff"])

    def test_map_verb_needs_omega_axis(self):
        out = self.make_dir()
        with self.assertRaises(CommandError) as ctx:
            self.call("map", out=str(out), quiet=True)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertEqual(list(out.iterdir()), [])

    def test_driven_verb_threads(self):
        path = self.write_config(STEADY_GRID)
        a, b = self.make_dir(), self.make_dir()
        self.call("driven", config=path, out=str(a), threads=1, quiet=True)
        self.call("driven", config=path, out=str(b), threads=8, quiet=True)
        self.assertEqual((a / "steady_state.csv").read_bytes(), (b / "steady_state.csv").read_bytes())

    def test_seed_flag_enters_config(self):
        out = self.make_dir()
        self.call("landscape", config=self.write_config(ONE_POINT), out=str(out), seed=7, quiet=True)
        meta = json.loads((out / "sweep.meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["config"]["solver.seed"], 7)

    def test_unknown_preset(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("preset", "fig9z", out=str(self.make_dir()), quiet=True)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_preset_writes_sidecar(self):
        out = self.make_dir()
        self.call("preset", "fig3d", out=str(out), quiet=True)
        meta = json.loads((out / "fig3d.meta.json").read_text(encoding="utf-8"))
        self.assertEqual(meta["preset"], "fig3d")
        self.assertEqual(meta["config_si"]["landscape.delay_t_s"], 1.25e-07)
        self.assertEqual(meta["results"]["omega_mhz"], 0.2)

    def test_fit_round_trip(self):
        out = self.make_dir()
        sweep = "sweep.x: {name: qubit_ghz, start: 2.0, stop: 5.4, count: 6000}\n"
        self.call("landscape", config=self.write_config(sweep), out=str(out), quiet=True)
        self.call("fit", samples=str(out / "gamma_eff.csv"), out=str(out), quiet=True)
        result = json.loads((out / "fit.json").read_text(encoding="utf-8"))
        self.assertTrue(result["report"]["converged"])
        self.assertAlmostEqual(result["landscape"]["beta"], 0.78, delta=1e-3)
        self.assertAlmostEqual(result["landscape"]["delay_t_ns"], 125.0, delta=0.1)

    def test_fit_needs_samples(self):
        with self.assertRaises(CommandError):
            self.call("fit", out=str(self.make_dir()), quiet=True)

    def test_with_overrides_keeps_original(self):
        cfg = config("")
        changed = with_overrides(cfg, solver={"seed": 9})
        self.assertEqual(cfg.solver["seed"], 42)
        self.assertEqual(changed.solver["seed"], 9)
