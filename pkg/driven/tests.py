import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from landscape.models import CouplingLandscape, IdtModel, IntrinsicLossLine
from landscape.services import gamma_eff, landscape_from_config
from landscape.units import ghz, mhz, ns, us
from stateops.models import DensityMatrix2
from stateops.services import bloch_from_rho, purity
from sweeps.models import GridAxis, SweepGrid

from .models import DressedRates, DriveSpec, GeneratorForm
from .services import (
    _dressed_rates,
    dressed_imbalance,
    dressed_populations,
    dressed_rates,
    evolve_pe_at,
    flat_dressed_rates,
    liouvillian,
    lindblad_evolve,
    map_coherence_purity,
    modulation_amplitude,
    pearson,
    purity_period,
    steady_pe_resonant,
    steady_state,
    steady_state_residual,
    weak_drive_pe,
)

GROUND = DensityMatrix2(0j, 0j, 0j, 1 + 0j)
GAMMA = mhz(1.0)


def drive(omega_mhz=1.0, delta_mhz=0.0, duration=0.0, qubit_ghz=4.891):
    return DriveSpec(rabi_omega=mhz(omega_mhz), detuning=mhz(delta_mhz), duration=duration, qubit_omega=ghz(qubit_ghz))


class ClosedFormTests(SimpleTestCase):
    def test_saturation(self):
        self.assertAlmostEqual(steady_pe_resonant(1e6 * GAMMA, GAMMA), 0.5, places=12)

    def test_equal_rabi_and_decay(self):
        self.assertAlmostEqual(steady_pe_resonant(GAMMA, GAMMA), 1 / 3)

    def test_no_drive(self):
        self.assertEqual(steady_pe_resonant(0.0, GAMMA), 0.0)
        self.assertEqual(weak_drive_pe(0.0, GAMMA), 0.0)

    def test_degenerate(self):
        with self.assertRaises(ValidationError) as ctx:
            steady_pe_resonant(0.0, 0.0)
        self.assertEqual(ctx.exception.code, "degenerate")
        with self.assertRaises(ValidationError):
            weak_drive_pe(1.0, 0.0)

    def test_weak_drive_value(self):
        self.assertAlmostEqual(weak_drive_pe(mhz(0.2), mhz(2.0)), 0.01, places=14)

    def test_weak_drive_limit(self):
        ratio = weak_drive_pe(1e-3 * GAMMA, GAMMA) / steady_pe_resonant(1e-3 * GAMMA, GAMMA)
        self.assertLess(abs(ratio - 1), 3e-6)


class DressedRatesTests(SimpleTestCase):
    def test_equal_weights_on_resonance(self):
        rates = flat_dressed_rates(drive(delta_mhz=0.0), GAMMA)
        self.assertAlmostEqual(rates.mixing_theta, math.pi / 2)
        for value in (rates.rate_minus, rates.rate_plus, rates.rate_phi):
            self.assertAlmostEqual(value / GAMMA, 0.25, places=14)

    def test_symmetric_landscape_balances_sidebands(self):
        land = CouplingLandscape(
            idt=IdtModel(gamma_peak=mhz(1.0), omega_center=ghz(4.891), n_pairs=5),
            loss=IntrinsicLossLine(c0=mhz(0.07), c1=0.0, band=(ghz(1.5), ghz(5.5))),
            beta=0.0,
            delay_T=ns(125.0),
        )
        rates = dressed_rates(drive(omega_mhz=3.0), land)
        self.assertAlmostEqual(rates.rate_plus / rates.rate_minus, 1.0, places=12)

    def test_sideband_ratio_period(self):
        land = landscape_from_config()
        omegas = np.arange(10.0, 60.0, 0.1)
        ratio = [
            (lambda r: r.rate_plus / r.rate_minus)(dressed_rates(drive(omega_mhz=o, qubit_ghz=4.889), land))
            for o in omegas
        ]
        self.assertAlmostEqual(purity_period(omegas, np.log(ratio)), 8.0, delta=0.3)

    def test_sideband_out_of_band(self):
        with self.assertRaises(ValidationError) as ctx:
            dressed_rates(drive(omega_mhz=20.0, qubit_ghz=5.49), landscape_from_config())
        self.assertEqual(ctx.exception.code, "domain")
        self.assertIn("5.51", ctx.exception.message)

    def test_mirrored_slope_swaps_sidebands(self):
        d = drive(omega_mhz=5.0)
        w_d = d.drive_omega
        rising = _dressed_rates(d, lambda w: GAMMA * (1 + 0.02 * (w - w_d) / mhz(1.0)), 0.0)
        falling = _dressed_rates(d, lambda w: GAMMA * (1 - 0.02 * (w - w_d) / mhz(1.0)), 0.0)
        self.assertAlmostEqual(rising.rate_plus, falling.rate_minus)
        self.assertAlmostEqual(rising.rate_minus, falling.rate_plus)
        self.assertAlmostEqual(dressed_imbalance(rising), -dressed_imbalance(falling), places=14)
        self.assertNotEqual(dressed_imbalance(rising), 0.0)


class SteadyStateTests(SimpleTestCase):
    def test_closed_form_on_resonance(self):
        for ratio in np.logspace(-2, 2, 50):
            d = drive(omega_mhz=float(ratio))
            rates = flat_dressed_rates(d, GAMMA)
            rho = steady_state(d, rates)
            self.assertLess(abs(rho.pe - steady_pe_resonant(d.rabi_omega, GAMMA)), 1e-8, ratio)
            self.assertLess(steady_state_residual(d, rates, rho), 1e-9)

    def test_resonance_fluorescence_coherence(self):
        d = drive(omega_mhz=0.7)
        rho = steady_state(d, flat_dressed_rates(d, GAMMA))
        r = bloch_from_rho(rho)
        omega = d.rabi_omega
        self.assertLess(abs(r.rx), 1e-9)
        self.assertAlmostEqual(r.ry, 2 * GAMMA * omega / (2 * omega ** 2 + GAMMA ** 2), places=8)

    def test_no_drive_relaxes_to_ground(self):
        for delta in (0.0, -2.0, 3.0):
            d = drive(omega_mhz=0.0, delta_mhz=delta)
            rho = steady_state(d, flat_dressed_rates(d, GAMMA))
            self.assertAlmostEqual(rho.pe, 0.0, places=12)
            self.assertAlmostEqual(purity(rho), 1.0, places=12)

    def test_agrees_with_long_time_evolution(self):
        d = drive(omega_mhz=0.7)
        rates = flat_dressed_rates(d, GAMMA)
        long = DriveSpec(d.rabi_omega, d.detuning, 50 / min(rates.rate_minus, rates.rate_plus, rates.rate_phi), d.qubit_omega)
        final = lindblad_evolve(GROUND, long, rates).states[-1]
        self.assertLess(np.max(np.abs(final - steady_state(d, rates).as_array())), 1e-7)

    def test_unbalanced_secular_rates(self):
        d = drive(omega_mhz=4.0, delta_mhz=-3.0)
        rates = DressedRates(rate_minus=mhz(0.01), rate_plus=mhz(0.004), rate_phi=0.0, mixing_theta=d.mixing_theta)
        p_plus, p_minus = dressed_populations(steady_state(d, rates, form=GeneratorForm.SECULAR), d)
        self.assertAlmostEqual(p_plus - p_minus, dressed_imbalance(rates), places=10)

        rho = steady_state(d, rates)
        p_plus, p_minus = dressed_populations(rho, d)
        self.assertAlmostEqual(p_plus - p_minus, dressed_imbalance(rates), delta=1e-2)
        self.assertGreater(abs(bloch_from_rho(rho).rx), 0.1)

    def test_swapped_rates_flip_coherence(self):
        d = drive(omega_mhz=5.0)
        a = DressedRates(rate_minus=mhz(0.02), rate_plus=mhz(0.005), rate_phi=0.0, mixing_theta=d.mixing_theta)
        b = DressedRates(rate_minus=mhz(0.005), rate_plus=mhz(0.02), rate_phi=0.0, mixing_theta=d.mixing_theta)
        for form in (GeneratorForm.FULL, GeneratorForm.SECULAR):
            sx_a = bloch_from_rho(steady_state(d, a, form=form)).rx
            sx_b = bloch_from_rho(steady_state(d, b, form=form)).rx
            self.assertLess(sx_a * sx_b, 0)
        sx_a = bloch_from_rho(steady_state(d, a, form=GeneratorForm.SECULAR)).rx
        sx_b = bloch_from_rho(steady_state(d, b, form=GeneratorForm.SECULAR)).rx
        self.assertAlmostEqual(sx_a, -sx_b, places=10)

    def test_no_dissipation(self):
        d = drive()
        with self.assertRaises(ValidationError) as ctx:
            steady_state(d, DressedRates(0.0, 0.0, 0.0, d.mixing_theta))
        self.assertEqual(ctx.exception.code, "degenerate")

    def test_degenerate_null_space_refused(self):
        d = drive(omega_mhz=2.0)
        rates = DressedRates(0.0, 0.0, mhz(0.1), d.mixing_theta)
        with self.assertRaises(ValidationError) as ctx:
            steady_state(d, rates, form=GeneratorForm.SECULAR)
        self.assertEqual(ctx.exception.code, "degenerate")

    def test_extra_dephasing_lowers_purity(self):
        d = drive(omega_mhz=5.0, delta_mhz=-5.0)
        land = landscape_from_config()
        clean = steady_state(d, dressed_rates(d, land))
        noisy = steady_state(d, dressed_rates(d, land, extra_dephasing=mhz(0.5)))
        self.assertLess(purity(noisy), purity(clean))


class EvolutionTests(SimpleTestCase):
    def test_pi_pulse(self):
        d = DriveSpec(rabi_omega=mhz(1.0), detuning=0.0, duration=math.pi / mhz(1.0), qubit_omega=ghz(4.891))
        traj = lindblad_evolve(GROUND, d, DressedRates(0.0, 0.0, 0.0, d.mixing_theta))
        self.assertAlmostEqual(traj.pe()[-1], 1.0, places=9)

    def test_liouvillian_preserves_trace(self):
        d = drive(omega_mhz=3.0, delta_mhz=-2.0)
        L = liouvillian(d, dressed_rates(d, landscape_from_config(), extra_dephasing=mhz(0.1)))
        self.assertLess(np.max(np.abs(np.array([1, 0, 0, 1]) @ L)), 1e-9 * np.linalg.norm(L))

    def test_random_trajectories_stay_physical(self):
        rng = np.random.default_rng(2024)
        for _ in range(10_000):
            omega, delta = mhz(rng.uniform(0, 5)), mhz(rng.uniform(-5, 5))
            theta = math.atan2(omega, delta)
            rates = DressedRates(*(mhz(v) for v in rng.uniform(0, 1, 3)), mixing_theta=theta)
            scale = max(math.hypot(omega, delta), rates.total)
            d = DriveSpec(omega, delta, 0.5 / scale, ghz(4.891))
            g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            m = g @ g.conj().T
            m /= np.trace(m).real
            rho0 = DensityMatrix2(complex(m[0, 0].real), complex(m[0, 1]), complex(m[0, 1]).conjugate(), complex(1 - m[0, 0].real))
            form = GeneratorForm.SECULAR if rng.random() < 0.5 else GeneratorForm.FULL
            traj = lindblad_evolve(rho0, d, rates, form=form)
            self.assertLess(np.max(np.abs(traj.traces() - 1)), 1e-10)
            self.assertGreaterEqual(traj.min_eigenvalues().min(), -1e-10)
            p = np.real(np.einsum("nij,nji->n", traj.states, traj.states))
            self.assertTrue(np.all((p >= 0.5 - 1e-10) & (p <= 1 + 1e-10)))

    def test_step_too_large(self):
        d = drive(omega_mhz=1.0, duration=us(1.0))
        rates = flat_dressed_rates(d, GAMMA)
        with self.assertRaisesMessage(ValidationError, "stability bound"):
            lindblad_evolve(GROUND, d, rates, dt=1.0 / GAMMA)

    def test_sampled_dynamics(self):
        d = drive(omega_mhz=0.2, duration=us(3.8), qubit_ghz=4.888)
        rates = dressed_rates(d, landscape_from_config())
        traj = evolve_pe_at(GROUND, d, rates, 256)
        self.assertEqual(traj.times.size, 256)
        self.assertAlmostEqual(traj.times[-1], us(3.8))
        self.assertAlmostEqual(traj.pe()[-1], steady_state(d, rates).pe, places=6)


class MapTests(SimpleTestCase):
    def setUp(self):
        self.land = landscape_from_config()

    def _grid(self, omegas, deltas):
        return SweepGrid(axes=(
            GridAxis("omega_mhz", omegas[0], omegas[1], omegas[2]),
            GridAxis("delta_mhz", deltas[0], deltas[1], deltas[2]),
        ))

    def test_zero_drive_column_is_pure(self):
        out = map_coherence_purity(self._grid((0.0, 10.0, 3), (-20.0, 20.0, 5)), ghz(4.891), self.land)
        self.assertTrue(np.allclose(out.results["purity"][0], 1.0, atol=1e-10))
        self.assertEqual(out.results["purity"].shape, (3, 5))

    def test_thread_count_does_not_change_results(self):
        grid = self._grid((0.0, 30.0, 7), (-10.0, 10.0, 5))
        a = map_coherence_purity(grid, ghz(4.891), self.land, threads=1)
        b = map_coherence_purity(grid, ghz(4.891), self.land, threads=4)
        for name in ("sx", "purity", "pe"):
            self.assertTrue(np.array_equal(a.results[name], b.results[name], equal_nan=True))

    def test_out_of_band_cells_masked(self):
        out = map_coherence_purity(self._grid((0.0, 40.0, 5), (0.0, 0.0, 1)), ghz(5.48), self.land)
        reasons = list(out.results["mask_reason"][:, 0])
        self.assertEqual(reasons[0], "")
        self.assertEqual(reasons[-1], "domain")
        self.assertTrue(math.isnan(out.results["purity"][-1, 0]))

    def test_tomography_columns(self):
        out = map_coherence_purity(self._grid((5.0, 10.0, 2), (0.0, 0.0, 1)), ghz(4.891), self.land, shots=500, seed=42)
        self.assertIn("purity_tomo", out.results)
        self.assertTrue(np.all(np.abs(out.results["sx_tomo"] - out.results["sx"]) < 0.2))

    def test_weak_drive_matches_formula(self):
        qubit = ghz(4.888)
        g_e = gamma_eff(self.land, qubit)
        out = map_coherence_purity(
            SweepGrid(axes=(GridAxis("omega_mhz", 0.001, g_e / mhz(1.0) / 10, 5),)), qubit, self.land
        )
        for omega, pe in zip(out.axis("omega_mhz").si_values(), out.results["pe"]):
            self.assertLess(abs(pe / weak_drive_pe(omega, g_e) - 1), 0.03)

    def test_purity_oscillates_and_anti_synchronizes(self):
        omegas = np.arange(0.0, 60.0 + 1e-9, 0.25)
        grid = SweepGrid(axes=(GridAxis("omega_mhz", 0.0, 60.0, omegas.size), GridAxis("delta_mhz", -5.0, -5.0, 1)))
        a = map_coherence_purity(grid, ghz(4.891), self.land).results["purity"][:, 0]
        b = map_coherence_purity(grid, ghz(4.887), self.land).results["purity"][:, 0]
        window = omegas >= 20.0
        self.assertAlmostEqual(purity_period(omegas[window], a[window]), 8.0, delta=0.5)
        self.assertLess(pearson(a[window], b[window]), 0.0)
        self.assertGreaterEqual(a[omegas >= 10.0].max(), 0.7)

    def test_strong_drive_saturates(self):
        qubits = np.linspace(4.275, 4.283, 81)
        pe = []
        for q in qubits:
            d = drive(omega_mhz=2.5, qubit_ghz=float(q))
            pe.append(steady_state(d, dressed_rates(d, self.land)).pe)
        self.assertTrue(np.all(np.abs(np.array(pe) - 0.5) < 0.02))
        self.assertLessEqual(modulation_amplitude(pe), 0.01)

    def test_wrong_axes(self):
        grid = SweepGrid(axes=(GridAxis("qubit_ghz", 4.8, 4.9, 3),))
        with self.assertRaises(ValidationError):
            map_coherence_purity(grid, ghz(4.891), self.land)
