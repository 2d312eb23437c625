import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .models import BlochVector, DensityMatrix2
from .services import (
    RHO_HEADERS,
    bloch_from_rho,
    expectations,
    project_physical,
    purity,
    random_density_matrix,
    rho_csv_row,
    rho_from_bloch,
    sample_tomography,
)

MIXED = DensityMatrix2(0.5 + 0j, 0j, 0j, 0.5 + 0j)
PLUS_X = DensityMatrix2(0.5 + 0j, 0.5 + 0j, 0.5 + 0j, 0.5 + 0j)
EXCITED = DensityMatrix2(1 + 0j, 0j, 0j, 0j)


class BlochTests(SimpleTestCase):
    def test_mixed_state_is_origin(self):
        self.assertEqual(bloch_from_rho(MIXED).as_tuple(), (0.0, 0.0, 0.0))

    def test_plus_x(self):
        self.assertEqual(bloch_from_rho(PLUS_X).as_tuple(), (1.0, 0.0, 0.0))

    def test_excited_is_north_pole(self):
        self.assertEqual(bloch_from_rho(EXCITED).rz, 1.0)

    def test_sigma_y_sign(self):
        # |+y⟩ = (|0⟩ + i|1⟩)/√2: ρ01 = −i/2
        rho = DensityMatrix2(0.5 + 0j, -0.5j, 0.5j, 0.5 + 0j)
        self.assertAlmostEqual(expectations(rho)["sy"], 1.0)

    def test_round_trip_random_states(self):
        rng = np.random.default_rng(42)
        for _ in range(10_000):
            rho = random_density_matrix(rng)
            back = rho_from_bloch(bloch_from_rho(rho))
            self.assertLess(np.max(np.abs(back.as_array() - rho.as_array())), 1e-14)
            self.assertGreaterEqual(rho.eigenvalues().min(), -1e-10)

    def test_invalid_state_rejected(self):
        with self.assertRaises(ValidationError):
            DensityMatrix2(0.7 + 0j, 0j, 0j, 0.7 + 0j)
        with self.assertRaises(ValidationError):
            DensityMatrix2(0.5 + 0j, 0.6 + 0j, 0.6 + 0j, 0.5 + 0j)
        with self.assertRaises(ValidationError):
            BlochVector(0.8, 0.8, 0.0)


class PurityTests(SimpleTestCase):
    def test_mixed(self):
        self.assertAlmostEqual(purity(MIXED), 0.5)

    def test_pure_states(self):
        for rho in (PLUS_X, EXCITED, rho_from_bloch(BlochVector(0.6, 0.0, 0.8))):
            self.assertAlmostEqual(purity(rho), 1.0, places=14)

    def test_matches_bloch_length(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            r = bloch_from_rho(random_density_matrix(rng))
            value = purity(rho_from_bloch(r))
            self.assertAlmostEqual(value, (1 + r.norm2()) / 2, places=14)
            self.assertGreaterEqual(value, 0.5 - 1e-12)
            self.assertLessEqual(value, 1 + 1e-12)


class ProjectionTests(SimpleTestCase):
    def test_negative_eigenvalue_clipped(self):
        rho = project_physical([[1.05, 0.0], [0.0, -0.05]])
        self.assertAlmostEqual(rho.pe, 1.0)
        self.assertGreaterEqual(rho.eigenvalues().min(), -1e-10)

    def test_valid_state_unchanged(self):
        rho = project_physical(PLUS_X.as_array())
        self.assertLess(np.max(np.abs(rho.as_array() - PLUS_X.as_array())), 1e-14)


class TomographyTests(SimpleTestCase):
    def test_pure_z_is_exact(self):
        result = sample_tomography(EXCITED, 17, seed=3)
        self.assertEqual(result.estimate[2], 1.0)
        self.assertEqual(result.std_errors[2], 0.0)

    def test_seed_determinism(self):
        a = sample_tomography(PLUS_X, 1000, seed=42)
        b = sample_tomography(PLUS_X, 1000, seed=42)
        self.assertEqual(a, b)
        self.assertNotEqual(sample_tomography(MIXED, 1000, seed=42), sample_tomography(MIXED, 1000, seed=43))

    def test_error_scales_as_inverse_sqrt_shots(self):
        rho = rho_from_bloch(BlochVector(0.3, -0.2, 0.5))
        r = np.array(bloch_from_rho(rho).as_tuple())

        def rms_error(shots):
            errs = [np.array(sample_tomography(rho, shots, seed=s).estimate) - r for s in range(20)]
            return math.sqrt(np.mean(np.square(errs)))

        ratio = rms_error(1_000) / rms_error(100_000)
        self.assertGreater(ratio, 10 / 3)
        self.assertLess(ratio, 30)

    def test_zero_shots(self):
        with self.assertRaises(ValidationError) as ctx:
            sample_tomography(MIXED, 0, seed=1)
        self.assertEqual(ctx.exception.code, "domain")

    def test_physical_estimate_inside_ball(self):
        result = sample_tomography(PLUS_X, 50, seed=9)
        self.assertLessEqual(result.physical().norm2(), 1 + 1e-12)


class CsvRowTests(SimpleTestCase):
    def test_eight_fields(self):
        row = rho_csv_row(PLUS_X)
        self.assertEqual(len(row), len(RHO_HEADERS))
        self.assertEqual(row[:4], ("0.5", "0", "0.5", "0"))
