import cmath
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from landscape.services import gamma_idt, landscape_from_config, phase_mod
from landscape.units import ghz, ns

from .models import RateConvention, RelaxationParams, RelaxationTrace, SolverTag
from .services import (
    amplitude_series,
    dde_integrate,
    effective_rate,
    markov_rate,
    mode_oracle,
    pe_series,
    rate_deviation,
    trace_dataset,
)

T = ns(125.0)
PHASES = (0.0, 0.164 * math.pi, 0.344 * math.pi, 0.484 * math.pi, 0.601 * math.pi, math.pi)


def make_params(gamma_t=0.5, phase=0.0, beta=0.78, gamma_in_t=0.0):
    # 4.888 ГГц · 125 нс: целое число периодов, фаза задаётся сдвигом ω_q
    return RelaxationParams(
        omega_q=ghz(4.888) + phase / T,
        gamma=gamma_t / T,
        gamma_in=gamma_in_t / T,
        beta=beta,
        delay_T=T,
    )


class RelaxationParamsTests(SimpleTestCase):
    def test_phase_helper(self):
        self.assertAlmostEqual(phase_mod(make_params(phase=0.164 * math.pi).omega_q, T), 0.164 * math.pi, places=9)

    def test_from_landscape(self):
        land = landscape_from_config()
        p = RelaxationParams.from_landscape(land, ghz(4.89))
        self.assertAlmostEqual(p.gamma, gamma_idt(land.idt, ghz(4.89)))
        self.assertAlmostEqual(p.gamma_t, 0.45, delta=0.05)
        self.assertEqual(p.beta, 0.78)

    def test_invalid(self):
        with self.assertRaises(ValidationError):
            RelaxationParams(omega_q=1.0, gamma=-1.0, gamma_in=0.0, beta=0.5, delay_T=T)
        with self.assertRaises(ValidationError):
            RelaxationParams(omega_q=1.0, gamma=1.0, gamma_in=0.0, beta=0.5, delay_T=0.0)

    def test_trace_rejects_mismatched_lengths(self):
        with self.assertRaises(ValidationError):
            RelaxationTrace(times=np.arange(3.0), pe=np.ones(2), solver_tag=SolverTag.SERIES)


class SeriesTests(SimpleTestCase):
    def test_initial_amplitude(self):
        self.assertEqual(amplitude_series(make_params(), 0.0), 1 + 0j)

    def test_beta_zero_is_pure_phasor(self):
        p = make_params(beta=0.0, gamma_in_t=0.02)
        K = (p.gamma + p.gamma_in) / 2
        for t in (0.3 * T, 2.5 * T, 7 * T):
            expected = cmath.exp(-1j * phase_mod(p.omega_q, t)) * math.exp(-K * t)
            self.assertLess(abs(amplitude_series(p, t) - expected), 1e-14)

    def test_negative_time(self):
        with self.assertRaises(ValidationError) as ctx:
            amplitude_series(make_params(), -1e-9)
        self.assertEqual(ctx.exception.code, "domain")

    def test_exponential_before_delay(self):
        p = make_params(gamma_in_t=0.01, phase=0.3)
        times = np.linspace(0, 0.999 * T, 50)
        trace = pe_series(p, times)
        expected = np.exp(-(p.gamma + p.gamma_in) * times)
        self.assertLess(np.max(np.abs(trace.pe - expected)), 1e-14)
        self.assertEqual(trace.pe[0], 1.0)

    def test_population_convention_doubles_early_rate(self):
        p = make_params(gamma_t=0.2)
        trace = pe_series(p, [0.5 * T], rate_convention=RateConvention.POPULATION_RATES)
        self.assertAlmostEqual(trace.pe[0], math.exp(-2 * p.gamma * 0.5 * T), places=14)

    def test_constructive_phase_accelerates_decay(self):
        p = make_params(phase=0.164 * math.pi)
        pe = pe_series(p, [2 * T]).pe[0]
        self.assertLess(pe, math.exp(-p.gamma * 2 * T))

    def test_destructive_phase_suppresses_decay(self):
        p = make_params(phase=math.pi)
        pe = pe_series(p, [5 * T]).pe[0]
        self.assertGreater(pe, math.exp(-p.gamma * 5 * T))

    def test_interference_direction_against_beta_zero(self):
        ref = pe_series(make_params(beta=0.0), [5 * T]).pe[0]
        self.assertLess(pe_series(make_params(phase=0.0), [5 * T]).pe[0], ref)
        self.assertGreater(pe_series(make_params(phase=math.pi), [5 * T]).pe[0], ref)

    def test_continuous_across_delay_boundaries(self):
        p = make_params(phase=0.484 * math.pi)
        for n in (1, 2, 3):
            trace = pe_series(p, [n * T * (1 - 1e-10), n * T, n * T * (1 + 1e-10)])
            self.assertLess(np.ptp(trace.pe), 1e-9)

    def test_bounded(self):
        trace = pe_series(make_params(phase=math.pi, beta=1.0), np.linspace(0, 200 * T, 4001))
        self.assertTrue(np.all(trace.pe >= 0))
        self.assertTrue(np.all(trace.pe <= 1 + 1e-12))

    def test_unsorted_times_rejected(self):
        with self.assertRaises(ValidationError):
            pe_series(make_params(), [2 * T, T])


class DdeTests(SimpleTestCase):
    def test_matches_series_on_phase_grid(self):
        for gamma_t in (0.05, 0.2, 0.5):
            for phase in PHASES:
                p = make_params(gamma_t=gamma_t, phase=phase, gamma_in_t=0.01)
                dde = dde_integrate(p, 10 * T, T / 1000)
                series = pe_series(p, dde.times)
                self.assertLess(np.max(np.abs(dde.pe - series.pe)), 1e-8, (gamma_t, phase))

    def test_amplitude_modulus_at_three_delays(self):
        p = make_params(gamma_t=0.5, phase=0.164 * math.pi)
        dde = dde_integrate(p, 3 * T, T / 1000)
        self.assertLess(abs(math.sqrt(dde.pe[-1]) - abs(amplitude_series(p, 3 * T))), 1e-10)

    def test_beta_zero_is_exponential(self):
        p = make_params(beta=0.0, gamma_in_t=0.05)
        dde = dde_integrate(p, 10 * T, T / 1000)
        expected = np.exp(-(p.gamma + p.gamma_in) * dde.times)
        self.assertLess(np.max(np.abs(dde.pe - expected)), 1e-10)

    def test_causality_before_delay(self):
        for beta in (0.0, 0.5, 1.0):
            for phase in (0.0, 0.601 * math.pi, math.pi):
                with self.subTest(beta=beta, phase=phase):
                    p = make_params(beta=beta, phase=phase)
                    dde = dde_integrate(p, T, T / 1000)
                    early = dde.times < T
                    expected = np.exp(-p.gamma * dde.times[early])
                    self.assertLess(np.max(np.abs(dde.pe[early] - expected)), 1e-10)

    def test_fourth_order_convergence(self):
        p = make_params(gamma_t=0.5, phase=0.0)
        errors = []
        for m in (20, 40):
            dde = dde_integrate(p, 10 * T, T / m)
            errors.append(np.max(np.abs(dde.pe - pe_series(p, dde.times).pe)))
        self.assertGreaterEqual(errors[0] / errors[1], 8.0)

    def test_step_is_rounded_down_to_divide_delay(self):
        dde = dde_integrate(make_params(), 2 * T, T / 999.5)
        self.assertTrue(dde.notes)
        self.assertAlmostEqual(dde.times[1], T / 1000, places=20)
        self.assertAlmostEqual(dde.times[-1], 2 * T, places=18)

    def test_step_larger_than_delay(self):
        with self.assertRaises(ValidationError) as ctx:
            dde_integrate(make_params(), 10 * T, 2 * T)
        self.assertEqual(ctx.exception.code, "configuration")

    def test_negative_t_max(self):
        with self.assertRaises(ValidationError) as ctx:
            dde_integrate(make_params(), -T, T / 10)
        self.assertEqual(ctx.exception.code, "domain")


class ModeOracleTests(SimpleTestCase):
    def test_matches_series_on_phase_grid(self):
        for gamma_t in (0.05, 0.2, 0.5):
            for phase in PHASES[:5]:
                with self.subTest(gamma_t=gamma_t, phase=phase):
                    p = make_params(gamma_t=gamma_t, phase=phase)
                    trace = mode_oracle(p, 4000, 800 / T, 6 * T, T / 2000)
                    series = pe_series(p, trace.times)
                    self.assertLess(np.max(np.abs(trace.pe - series.pe)), 1e-3)

    def test_causality_before_delay(self):
        for beta in (0.0, 0.5, 1.0):
            for phase in (0.0, 0.484 * math.pi, math.pi):
                with self.subTest(beta=beta, phase=phase):
                    p = make_params(gamma_t=0.5, phase=phase, beta=beta)
                    trace = mode_oracle(p, 2000, 400 / T, 1.5 * T, T / 2000)
                    early = trace.times < T
                    expected = np.exp(-p.gamma * trace.times[early])
                    self.assertLess(np.max(np.abs(trace.pe[early] - expected)), 1e-3)

    def test_error_shrinks_as_modes_double(self):
        p = make_params(gamma_t=0.2, phase=0.344 * math.pi)
        errors = []
        for n in (1000, 2000, 4000):
            # δω фиксирован, полоса растёт вместе с числом мод
            trace = mode_oracle(p, n, n * 0.2 / T, 3 * T, T / 2000)
            errors.append(np.max(np.abs(trace.pe - pe_series(p, trace.times).pe)))
        self.assertGreater(errors[0], errors[1])
        self.assertGreater(errors[1], errors[2])

    def test_no_idt_coupling_gives_intrinsic_exponential(self):
        p = make_params(gamma_t=0.0, gamma_in_t=0.2)
        for n in (200, 400):
            trace = mode_oracle(p, n, 100 / T, 2 * T, T / 2000)
            self.assertLess(np.max(np.abs(trace.pe - np.exp(-p.gamma_in * trace.times))), 1e-9)

    def test_too_few_modes(self):
        with self.assertRaises(ValidationError) as ctx:
            mode_oracle(make_params(), 50, 800 / T, T, T / 2000)
        self.assertEqual(ctx.exception.code, "configuration")

    def test_bandwidth_too_narrow(self):
        with self.assertRaisesMessage(ValidationError, "bandwidth"):
            mode_oracle(make_params(gamma_t=0.5), 4000, 5 / T, T, T / 2000)

    def test_recurrence_shorter_than_t_max(self):
        with self.assertRaisesMessage(ValidationError, "recurrence"):
            mode_oracle(make_params(), 100, 800 / T, 6 * T, T / 2000)


class EffectiveRateTests(SimpleTestCase):
    def test_exact_exponential(self):
        times = np.linspace(0, 40 * T, 400)
        rate = 0.3 / T
        trace = RelaxationTrace(times=times, pe=np.exp(-rate * times), solver_tag=SolverTag.SERIES)
        self.assertAlmostEqual(effective_rate(trace, (5 * T, 35 * T)) / rate, 1.0, places=10)

    def test_markov_limit_matches_decay_rate_formula(self):
        times = np.linspace(0, 50 * T, 2001)
        for phase in np.linspace(0, 2 * math.pi, 50, endpoint=False):
            p = make_params(gamma_t=0.05, phase=float(phase), beta=0.5, gamma_in_t=0.0005)
            rate = effective_rate(pe_series(p, times), (5 * T, 50 * T), delay_T=T)
            self.assertLess(abs(rate / markov_rate(p) - 1), 0.02, phase)

    def test_strongly_non_markovian_deviation_is_recorded(self):
        p = make_params(gamma_t=0.5, phase=0.164 * math.pi, gamma_in_t=0.01)
        trace = pe_series(p, np.linspace(0, 30 * T, 1201))
        row = rate_deviation(trace, p, (5 * T, 30 * T))
        self.assertAlmostEqual(row["gamma_t"], 0.5)
        self.assertTrue(math.isfinite(row["relative_deviation"]))
        self.assertGreater(row["effective_rate"], 0)

    def test_window_too_short(self):
        trace = pe_series(make_params(), np.linspace(0, 10 * T, 11))
        with self.assertRaises(ValidationError) as ctx:
            effective_rate(trace, (5 * T, 7 * T))
        self.assertEqual(ctx.exception.code, "insufficient_samples")

    def test_underflow(self):
        times = np.linspace(0, 10 * T, 100)
        trace = RelaxationTrace(times=times, pe=np.exp(-100 / T * times), solver_tag=SolverTag.SERIES)
        with self.assertRaises(ValidationError) as ctx:
            effective_rate(trace, (5 * T, 10 * T))
        self.assertEqual(ctx.exception.code, "degenerate")


class TraceCsvTests(SimpleTestCase):
    def test_header_and_formatting(self):
        trace = pe_series(make_params(), [0.0, T])
        text = trace_dataset([trace]).export("csv")
        lines = text.splitlines()
        self.assertEqual(lines[0], "t_ns,pe,solver")
        self.assertEqual(lines[1], "0,1,series")
        t_ns, pe, solver = lines[2].split(",")
        self.assertAlmostEqual(float(t_ns), 125.0, places=9)
        self.assertEqual(solver, "series")
        self.assertEqual(repr(float(pe)), repr(float(trace.pe[1])))
