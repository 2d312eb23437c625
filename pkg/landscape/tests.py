import math

import mpmath
import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .models import CouplingLandscape, IdtModel, IntrinsicLossLine
from .services import (
    decompose,
    envelopes,
    fit_landscape,
    gamma_eff,
    gamma_idt,
    interference_extrema,
    landscape_from_config,
    landscape_to_config,
    modulation_period,
    phase_mod,
    purcell_factor,
)
from .units import TWO_PI, ghz, mhz, ns, to_mhz


def flat_landscape(gamma_mhz=1.0, gamma_in_mhz=0.07, beta=0.78, center_ghz=4.892, delay_ns=125.0):
    """Ландшафт, который вычисляем ровно в центре IDT: там γ = γ_peak."""
    return CouplingLandscape(
        idt=IdtModel(gamma_peak=mhz(gamma_mhz), omega_center=ghz(center_ghz), n_pairs=5),
        loss=IntrinsicLossLine(c0=mhz(gamma_in_mhz), c1=0.0, band=(ghz(1.5), ghz(5.5))),
        beta=beta,
        delay_T=ns(delay_ns),
    )


class IdtModelTests(SimpleTestCase):
    def setUp(self):
        self.idt = IdtModel(gamma_peak=mhz(10.8), omega_center=ghz(5.0), n_pairs=5)

    def test_peak_at_center(self):
        self.assertAlmostEqual(to_mhz(gamma_idt(self.idt, ghz(5.0))), 10.8, places=12)

    def test_first_null(self):
        value = gamma_idt(self.idt, ghz(5.0) * (1 + 1 / 5))
        self.assertLess(value, 1e-20 * self.idt.gamma_peak)

    def test_symmetric_around_center(self):
        for delta in (mhz(1.0), mhz(170.0), ghz(0.9)):
            self.assertAlmostEqual(
                gamma_idt(self.idt, ghz(5.0) + delta) / gamma_idt(self.idt, ghz(5.0) - delta), 1.0, places=12
            )

    def test_non_positive_omega_is_domain_error(self):
        with self.assertRaises(ValidationError) as ctx:
            gamma_idt(self.idt, 0.0)
        self.assertEqual(ctx.exception.code, "domain")

    def test_invalid_fields_rejected(self):
        with self.assertRaises(ValidationError):
            IdtModel(gamma_peak=-1.0, omega_center=ghz(5.0), n_pairs=5)
        with self.assertRaises(ValidationError):
            IdtModel(gamma_peak=1.0, omega_center=ghz(5.0), n_pairs=0)


class GammaEffTests(SimpleTestCase):
    def setUp(self):
        self.land = landscape_from_config()

    def test_beta_zero_drops_interference(self):
        land = flat_landscape(beta=0.0)
        w = ghz(4.892)
        self.assertAlmostEqual(to_mhz(gamma_eff(land, w)), 1.07, places=10)

    def test_destructive_point(self):
        # 4.892 ГГц · 125 нс = 611.5 периодов, cos ωT = −1
        self.assertAlmostEqual(to_mhz(gamma_eff(flat_landscape(), ghz(4.892))), 0.29, places=9)

    def test_default_landscape_maximum_near_4_912(self):
        self.assertAlmostEqual(to_mhz(gamma_eff(self.land, ghz(4.912))), 1.11, delta=0.01)

    def test_out_of_band_names_band(self):
        with self.assertRaises(ValidationError) as ctx:
            gamma_eff(self.land, ghz(6.0))
        self.assertEqual(ctx.exception.code, "domain")
        self.assertIn("validity band", ctx.exception.message)
        self.assertIn("5.5", ctx.exception.message)

    def test_never_below_intrinsic(self):
        w = np.linspace(ghz(1.5), ghz(5.5), 20001)
        g_in = self.land.loss.c0 + self.land.loss.c1 * w
        self.assertTrue(np.all(gamma_eff(self.land, w) >= g_in * (1 - 1e-12)))

    def test_bounded_by_envelopes(self):
        rng = np.random.default_rng(7)
        w = rng.uniform(ghz(1.5), ghz(5.5), 10_000)
        lower, upper = envelopes(self.land, w)
        value = gamma_eff(self.land, w)
        self.assertTrue(np.all(lower <= value * (1 + 1e-12)))
        self.assertTrue(np.all(value <= upper * (1 + 1e-12)))

    def test_lossless_full_reflection_is_non_negative(self):
        # β = 1, γ_in = 0: в точке cos ωT = −1 остаётся только округление
        value = gamma_eff(flat_landscape(gamma_in_mhz=0.0, beta=1.0), ghz(4.892))
        self.assertGreaterEqual(value, 0.0)
        self.assertAlmostEqual(to_mhz(value), 0.0, places=9)

    def test_envelope_values(self):
        lower, upper = envelopes(flat_landscape(), ghz(4.892))
        self.assertAlmostEqual(to_mhz(lower), 0.29, places=10)
        self.assertAlmostEqual(to_mhz(upper), 1.85, places=10)

    def test_envelopes_collapse_for_beta_extremes(self):
        lower, upper = envelopes(flat_landscape(beta=0.0), ghz(4.892))
        self.assertAlmostEqual(lower, upper)
        lower, _ = envelopes(flat_landscape(beta=1.0), ghz(4.892))
        self.assertAlmostEqual(to_mhz(lower), 0.07, places=10)

    def test_interference_factor_periodic(self):
        period = modulation_period(self.land)
        for w in (ghz(2.1), ghz(4.8887), ghz(5.3)):
            a = decompose(self.land, w)
            b = decompose(self.land, w + period)
            self.assertAlmostEqual(a.interference / a.idt, b.interference / b.idt, places=9)

    def test_modulation_period_is_8_mhz(self):
        self.assertAlmostEqual(to_mhz(modulation_period(self.land)), 8.0, places=12)

    def test_four_fold_contrast_around_4_89(self):
        w = np.linspace(ghz(4.885), ghz(4.895), 1001)
        values = gamma_eff(self.land, w)
        self.assertGreaterEqual(values.max() / values.min(), 4.0)

    def test_extrema_helpers(self):
        constructive, destructive = interference_extrema(self.land, ghz(4.8895))
        self.assertAlmostEqual(math.cos(constructive * self.land.delay_T), 1.0, places=9)
        self.assertAlmostEqual(math.cos(destructive * self.land.delay_T), -1.0, places=9)
        self.assertLessEqual(abs(constructive - ghz(4.8895)), self.land.modulation_period / 2)

    def test_decompose_sums_to_gamma_eff(self):
        parts = decompose(self.land, ghz(1.526))
        self.assertAlmostEqual(parts.total / gamma_eff(self.land, ghz(1.526)), 1.0, places=12)
        self.assertGreater(parts.intrinsic, 0)
        self.assertGreater(parts.idt, 0)


class PurcellTests(SimpleTestCase):
    def test_exceeds_forty_between_anchor_frequencies(self):
        land = landscape_from_config()
        self.assertGreater(purcell_factor(land, ghz(4.912), ghz(1.526)), 40)

    def test_same_frequency_is_one(self):
        land = landscape_from_config()
        self.assertAlmostEqual(purcell_factor(land, ghz(4.9), ghz(4.9)), 1.0)

    def test_flat_landscape_is_one(self):
        land = flat_landscape(beta=0.0)
        self.assertAlmostEqual(purcell_factor(land, ghz(4.892), ghz(4.892)), 1.0)

    def test_zero_denominator(self):
        land = flat_landscape(gamma_in_mhz=0.0, beta=1.0)
        with self.assertRaises(ValidationError) as ctx:
            purcell_factor(land, ghz(4.888), ghz(4.892))
        self.assertEqual(ctx.exception.code, "degenerate")


class PhaseModTests(SimpleTestCase):
    def test_full_turn(self):
        p = phase_mod(mhz(8.0), ns(125.0))
        self.assertLess(min(p, TWO_PI - p), 1e-12)

    def test_half_turn(self):
        self.assertAlmostEqual(phase_mod(mhz(4.0), ns(125.0)), math.pi, places=12)

    def test_step_between_neighbour_frequencies(self):
        a = phase_mod(ghz(4.8887), ns(125.0))
        b = phase_mod(ghz(4.8894), ns(125.0))
        step = (b - a) % TWO_PI
        self.assertAlmostEqual(step / math.pi, 0.175, places=6)
        self.assertLess(abs(step / math.pi - 0.180), 0.01)

    def test_against_extended_precision(self):
        rng = np.random.default_rng(11)
        T = ns(125.0)
        for omega in rng.uniform(1.0, 1e6 / T, 200):
            with mpmath.workdps(60):
                x = mpmath.mpf(float(omega)) * mpmath.mpf(T)
                ref = float(x - 2 * mpmath.pi * mpmath.floor(x / (2 * mpmath.pi)))
            got = phase_mod(float(omega), T)
            diff = abs(got - ref)
            self.assertLess(min(diff, TWO_PI - diff), 1e-9)

    def test_non_positive_delay(self):
        with self.assertRaises(ValidationError):
            phase_mod(1.0, 0.0)


class LandscapeConfigTests(SimpleTestCase):
    def test_defaults_round_trip(self):
        cfg = landscape_to_config(landscape_from_config())
        self.assertAlmostEqual(cfg["delay_t_ns"], 125.0, places=9)
        self.assertAlmostEqual(cfg["beta"], 0.78)
        self.assertAlmostEqual(cfg["gamma_peak_mhz"], 0.6, places=12)
        self.assertAlmostEqual(cfg["band_hi_ghz"], 5.5, places=12)

    def test_beta_out_of_range(self):
        with self.assertRaisesMessage(ValidationError, "beta out of [0,1]"):
            landscape_from_config({"beta": 1.5})

    def test_negative_intrinsic_loss_rejected(self):
        with self.assertRaises(ValidationError):
            landscape_from_config({"gamma_in_c0_mhz": -1.0})


class FitLandscapeTests(SimpleTestCase):
    def setUp(self):
        self.truth = landscape_from_config()

    def _samples(self, land, lo_ghz, hi_ghz, count, noise_mhz=0.0):
        w = np.linspace(ghz(lo_ghz), ghz(hi_ghz), count)
        g = gamma_eff(land, w)
        if noise_mhz:
            g = g + mhz(noise_mhz) * np.random.default_rng(3).normal(size=count)
        return list(zip(w, g))

    def test_noiseless_round_trip(self):
        init = landscape_from_config({
            "gamma_peak_mhz": 0.55,
            "beta": 0.7,
            "delay_t_ns": 125.0002,
            "gamma_in_c0_mhz": -0.003,
            "gamma_in_slope": 1.4e-5,
        })
        fitted, report = fit_landscape(self._samples(self.truth, 2.0, 5.4, 6000), init)
        self.assertTrue(report.converged)
        expected = landscape_to_config(self.truth)
        got = landscape_to_config(fitted)
        for key in ("gamma_peak_mhz", "beta", "delay_t_ns", "gamma_in_c0_mhz", "gamma_in_slope"):
            self.assertLess(abs(got[key] / expected[key] - 1), 1e-6, key)
        self.assertTrue(report.delay_identifiable)
        self.assertLess(abs(report.phase_residual), 1e-6)

    def test_modulation_period_from_noisy_data(self):
        init = landscape_from_config({"delay_t_ns": 123.0, "beta": 0.6})
        fitted, report = fit_landscape(self._samples(self.truth, 4.87, 4.91, 161, noise_mhz=0.002), init)
        self.assertAlmostEqual(to_mhz(modulation_period(fitted)), 8.0, delta=0.1)
        self.assertAlmostEqual(report.parameters["modulation_period_mhz"], 8.0, delta=0.1)
        self.assertEqual(len(report.contributions), 2)
        for part in report.contributions:
            self.assertIn("gamma_in_mhz", part)
            self.assertIn("gamma_idt_mhz", part)

    def test_beta_zero_flags_delay(self):
        flat = landscape_from_config({"beta": 0.0})
        _, report = fit_landscape(self._samples(flat, 4.87, 4.91, 161), landscape_from_config())
        self.assertLess(report.parameters["beta"], 1e-3)
        self.assertFalse(report.delay_identifiable)
        self.assertTrue(report.messages)

    def test_too_few_samples(self):
        with self.assertRaises(ValidationError) as ctx:
            fit_landscape(self._samples(self.truth, 4.87, 4.91, 5), self.truth)
        self.assertEqual(ctx.exception.code, "insufficient_samples")

    def test_span_shorter_than_period(self):
        with self.assertRaises(ValidationError) as ctx:
            fit_landscape(self._samples(self.truth, 4.890, 4.894, 20), self.truth)
        self.assertEqual(ctx.exception.code, "insufficient_samples")
