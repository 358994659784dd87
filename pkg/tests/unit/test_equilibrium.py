"""Unit tests for profile polynomials, J_GS and the current discrepancy."""

import math

import numpy as np
import pytest

from equinest.equilibrium import (
    CurrentDensityField,
    ProfileCoeffs,
    current_discrepancy,
    eval_f,
    eval_fprime,
    eval_pprime,
    eval_pressure,
    gs_current_density,
)
from equinest.exceptions import GeometryMismatchError, ValidationError
from equinest.inference import EquilibriumState
from equinest.magnetostatics import MU0, Beam, BeamGrid

N_CASES = 1000


def _state(profile: ProfileCoeffs, psi_gamma: float) -> EquilibriumState:
    return EquilibriumState(
        beam_currents=np.zeros(1), profile=profile, psi_gamma=psi_gamma, sigma_star_sq=1.0
    )


def _random_profiles(rng: np.random.Generator, n: int) -> list[ProfileCoeffs]:
    p = rng.uniform(-1.0, 1.0, size=(n, 4))
    f = rng.uniform(-1.0, 1.0, size=(n, 3))
    fb = rng.uniform(-2.0, 2.0, size=n)
    return [
        ProfileCoeffs(
            p_c=tuple(p[i]),  # type: ignore[arg-type]
            f_c=tuple(f[i]),  # type: ignore[arg-type]
            f_boundary=float(fb[i]),
        )
        for i in range(n)
    ]


class TestProfileCoeffs:
    """Tests for ProfileCoeffs."""

    def test_defaults_are_zero(self) -> None:
        """The default profile carries no current."""
        coeffs = ProfileCoeffs()
        assert coeffs.p_c == (0.0, 0.0, 0.0, 0.0)
        assert coeffs.f_c == (0.0, 0.0, 0.0)

    def test_wrong_lengths_raise(self) -> None:
        """Exactly four p_c and three f_c are required."""
        with pytest.raises(ValidationError, match="Expected 4 p_c and 3 f_c"):
            ProfileCoeffs(p_c=(1.0, 2.0), f_c=(0.0, 0.0, 0.0))  # type: ignore[arg-type]

    def test_non_finite_raises(self) -> None:
        """NaN coefficients are rejected."""
        with pytest.raises(ValidationError, match="finite"):
            ProfileCoeffs(f_boundary=math.nan)

    def test_scaled_pressure(self) -> None:
        """Only the pressure coefficients are scaled."""
        coeffs = ProfileCoeffs(p_c=(1.0, 2.0, 0.0, -1.0), f_c=(3.0, 0.0, 0.0), f_boundary=4.0)
        scaled = coeffs.scaled_pressure(2.0)
        assert scaled.p_c == (2.0, 4.0, 0.0, -2.0)
        assert scaled.f_c == coeffs.f_c
        assert scaled.f_boundary == 4.0

    def test_dict_round_trip(self) -> None:
        """Serialization preserves the coefficients."""
        coeffs = ProfileCoeffs(p_c=(1.0, 2.0, 3.0, 4.0), f_c=(5.0, 6.0, 7.0), f_boundary=8.0)
        assert ProfileCoeffs.from_dict(coeffs.to_dict()) == coeffs


class TestProfilePolynomials:
    """Tests for the profile evaluators."""

    def test_pprime_polynomial(self) -> None:
        """p′ is the ascending-power polynomial."""
        coeffs = ProfileCoeffs(p_c=(1.0, 2.0, 3.0, 4.0))
        assert float(eval_pprime(coeffs, 2.0)) == pytest.approx(1 + 4 + 12 + 32)

    def test_f_reference_example(self) -> None:
        """f = f(ψ_γ) + f_c1 (ψ - ψ_γ)."""
        coeffs = ProfileCoeffs(f_c=(1.0, 0.0, 0.0), f_boundary=2.0)
        assert float(eval_f(coeffs, 0.0, 3.0)) == pytest.approx(5.0)

    def test_pressure_vanishes_at_boundary(self) -> None:
        """p(ψ_γ) = 0 for 1000 random profiles and boundaries."""
        rng = np.random.default_rng(101)
        psi_gamma = rng.uniform(-2.0, 2.0, N_CASES)
        for coeffs, pg in zip(_random_profiles(rng, N_CASES), psi_gamma, strict=True):
            assert float(eval_pressure(coeffs, pg, pg)) == pytest.approx(0.0, abs=1e-12)

    def test_f_equals_boundary_value_at_boundary(self) -> None:
        """f(ψ_γ) = f_boundary for 1000 random profiles."""
        rng = np.random.default_rng(102)
        psi_gamma = rng.uniform(-2.0, 2.0, N_CASES)
        for coeffs, pg in zip(_random_profiles(rng, N_CASES), psi_gamma, strict=True):
            assert float(eval_f(coeffs, pg, pg)) == pytest.approx(coeffs.f_boundary, abs=1e-12)

    def test_fprime_is_derivative_of_f(self) -> None:
        """f′ matches central differences of f for 1000 random cases."""
        rng = np.random.default_rng(103)
        h = 1e-5
        psi = rng.uniform(-1.0, 1.0, N_CASES)
        psi_gamma = rng.uniform(-1.0, 1.0, N_CASES)
        for coeffs, x, pg in zip(_random_profiles(rng, N_CASES), psi, psi_gamma, strict=True):
            numeric = (eval_f(coeffs, pg, x + h) - eval_f(coeffs, pg, x - h)) / (2 * h)
            assert float(eval_fprime(coeffs, x)) == pytest.approx(float(numeric), abs=1e-7)

    def test_pressure_derivative_is_pprime(self) -> None:
        """dp/dψ = p′ for 1000 random cases."""
        rng = np.random.default_rng(104)
        h = 1e-5
        psi = rng.uniform(-1.0, 1.0, N_CASES)
        psi_gamma = rng.uniform(-1.0, 1.0, N_CASES)
        for coeffs, x, pg in zip(_random_profiles(rng, N_CASES), psi, psi_gamma, strict=True):
            numeric = (eval_pressure(coeffs, pg, x + h) - eval_pressure(coeffs, pg, x - h)) / (
                2 * h
            )
            assert float(eval_pprime(coeffs, x)) == pytest.approx(float(numeric), abs=1e-7)

    def test_vectorized(self) -> None:
        """Evaluators broadcast over arrays."""
        coeffs = ProfileCoeffs(p_c=(1.0, 1.0, 0.0, 0.0), f_c=(1.0, 1.0, 0.0), f_boundary=1.0)
        psi = np.linspace(-1.0, 1.0, 7)
        assert eval_pprime(coeffs, psi).shape == (7,)
        assert eval_f(coeffs, 0.2, psi).shape == (7,)
        assert eval_fprime(coeffs, psi).shape == (7,)
        assert eval_pressure(coeffs, 0.2, psi).shape == (7,)


class TestGSCurrentDensity:
    """Tests for gs_current_density."""

    @pytest.fixture
    def unit_grid(self) -> BeamGrid:
        return BeamGrid([Beam(r_center=1.0, z_center=0.0, width=0.1, height=0.1)])

    def test_pressure_term_reference(self, unit_grid: BeamGrid) -> None:
        """R = 1, ψ = ψ_γ + 1, p′ = 1 and f′ = 0 give J = 2π."""
        state = _state(ProfileCoeffs(p_c=(1.0, 0.0, 0.0, 0.0)), 0.5)
        j = gs_current_density(state, [1.5], unit_grid)
        assert j.values[0] == pytest.approx(2.0 * math.pi)

    def test_ff_term(self, unit_grid: BeamGrid) -> None:
        """J = μ0/(2πR)·f·f′ without pressure."""
        state = _state(ProfileCoeffs(f_c=(2.0, 0.0, 0.0), f_boundary=3.0), 0.0)
        j = gs_current_density(state, [0.5], unit_grid)
        assert j.values[0] == pytest.approx(MU0 / (2.0 * math.pi) * 4.0 * 2.0)

    def test_zero_outside_boundary(self, unit_grid: BeamGrid) -> None:
        """J_GS vanishes where ψ < ψ_γ."""
        state = _state(ProfileCoeffs(p_c=(1.0, 0.0, 0.0, 0.0)), 0.5)
        assert gs_current_density(state, [0.4], unit_grid).values[0] == 0.0

    def test_uses_raw_flux(self, unit_grid: BeamGrid) -> None:
        """Shifting ψ and ψ_γ together changes J when p′ depends on ψ."""
        profile = ProfileCoeffs(p_c=(1.0, 1.0, 0.0, 0.0))
        a = gs_current_density(_state(profile, 0.0), [1.0], unit_grid).values[0]
        b = gs_current_density(_state(profile, 1.0), [2.0], unit_grid).values[0]
        assert a != pytest.approx(b)


class TestCurrentDensityField:
    """Tests for CurrentDensityField."""

    def test_currents_round_trip(self) -> None:
        """from_currents and currents invert each other."""
        grid = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 2, 2)
        field = CurrentDensityField.from_currents([1.0, 2.0, 3.0, 4.0], grid)
        np.testing.assert_allclose(field.values, np.array([1.0, 2.0, 3.0, 4.0]) / 0.25)
        assert field.total() == pytest.approx(10.0)

    def test_shape_mismatch_raises(self) -> None:
        """One value per beam."""
        grid = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 2, 2)
        with pytest.raises(ValueError, match="Expected 4"):
            CurrentDensityField([1.0], grid)


class TestCurrentDiscrepancy:
    """Tests for current_discrepancy."""

    @pytest.fixture
    def grids(self) -> tuple[BeamGrid, BeamGrid]:
        coarse = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 2, 2)
        return coarse, coarse.refine(2, 2)

    def test_known_value(self, grids: tuple[BeamGrid, BeamGrid]) -> None:
        """A uniform J against J_GS zero in half the children."""
        coarse, dense = grids
        j = CurrentDensityField(np.full(4, 8.0), coarse)
        gs_values = np.tile([8.0, 8.0, 0.0, 0.0], 4)
        delta_i, delta_j = current_discrepancy(j, CurrentDensityField(gs_values, dense), coarse)
        # two children of area 1/16 each, mismatch 8
        np.testing.assert_allclose(delta_i, np.full(4, 2 * 8.0 / 16))
        np.testing.assert_allclose(delta_j.values, delta_i / coarse.areas)

    def test_equal_fields_have_zero_discrepancy(self, grids: tuple[BeamGrid, BeamGrid]) -> None:
        """ΔI = 0 when J_GS equals J in every child."""
        coarse, dense = grids
        values = np.array([1.0, -2.0, 3.0, 0.5])
        j = CurrentDensityField(values, coarse)
        gs = CurrentDensityField(np.repeat(values, 4), dense)
        delta_i, _ = current_discrepancy(j, gs, coarse)
        np.testing.assert_array_equal(delta_i, 0.0)

    def test_properties_over_random_fields(self, grids: tuple[BeamGrid, BeamGrid]) -> None:
        """Nonnegative, symmetric under J_GS -> 2J - J_GS, triangle inequality: 1000 cases."""
        coarse, dense = grids
        parent = np.repeat(np.arange(4), 4)
        rng = np.random.default_rng(105)
        for _ in range(N_CASES):
            j_vals = rng.normal(size=4)
            a_vals, b_vals = rng.normal(size=16), rng.normal(size=16)
            j = CurrentDensityField(j_vals, coarse)
            da, _ = current_discrepancy(j, CurrentDensityField(a_vals, dense), coarse, parent)
            db, _ = current_discrepancy(j, CurrentDensityField(b_vals, dense), coarse, parent)
            mirrored = CurrentDensityField(2.0 * j_vals[parent] - a_vals, dense)
            dm, _ = current_discrepancy(j, mirrored, coarse, parent)
            gap = np.bincount(parent, weights=np.abs(a_vals - b_vals) * dense.areas, minlength=4)
            assert np.all(da >= 0)
            np.testing.assert_allclose(dm, da, rtol=1e-12, atol=1e-15)
            assert np.all(da <= db + gap + 1e-12)

    def test_mismatched_grids_raise(self) -> None:
        """Dense beams must nest in the inference grid."""
        coarse = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 2, 2)
        shifted = BeamGrid.rectangular((0.6, 1.6), (-0.5, 0.5), 4, 4)
        j = CurrentDensityField(np.zeros(4), coarse)
        with pytest.raises(GeometryMismatchError):
            current_discrepancy(j, CurrentDensityField(np.zeros(16), shifted), coarse)
