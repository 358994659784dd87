"""Unit tests for beam geometry and Biot-Savart kernels."""

import math

import numpy as np
import pytest

from equinest.exceptions import GeometryError, GeometryMismatchError, SingularEvaluationError
from equinest.magnetostatics import (
    MU0,
    Beam,
    BeamGrid,
    BeamRole,
    FieldPoint,
    KernelMethod,
    QuadratureSettings,
    Quantity,
    ResponseOperator,
    build_field_responses,
    build_response,
    field_response,
    flux_response,
    loop_field,
    loop_flux,
    nest_index,
    self_flux_response,
)


def _brute_force_flux(a: float, zc: float, r: float, z: float, nodes: int = 1_000_000) -> float:
    """ψ = (μ0 a r / 2) ∮ cos φ / |x - x'| dφ by a plain trapezoid sum."""
    phi = np.linspace(0.0, 2.0 * np.pi, nodes, endpoint=False)
    dist = np.sqrt(a**2 + r**2 + (z - zc) ** 2 - 2.0 * a * r * np.cos(phi))
    return float(0.5 * MU0 * a * r * np.sum(np.cos(phi) / dist) * (2.0 * np.pi / nodes))


def _brute_force_field(
    a: float, zc: float, r: float, z: float, nodes: int = 1_000_000
) -> tuple[float, float]:
    """(B_R, B_Z) = (μ0 / 4π) ∮ dl × (x - x') / |x - x'|³ by a plain trapezoid sum."""
    phi = np.linspace(0.0, 2.0 * np.pi, nodes, endpoint=False)
    dist = np.sqrt(a**2 + r**2 + (z - zc) ** 2 - 2.0 * a * r * np.cos(phi))
    weight = MU0 / (4.0 * np.pi) * a * (2.0 * np.pi / nodes) / dist**3
    b_r = np.sum(weight * (z - zc) * np.cos(phi))
    b_z = np.sum(weight * (a - r * np.cos(phi)))
    return float(b_r), float(b_z)


@pytest.fixture
def beam() -> Beam:
    return Beam(r_center=1.0, z_center=0.0, width=0.1, height=0.1)


class TestBeam:
    """Tests for Beam validation and geometry."""

    def test_area_and_extents(self, beam: Beam) -> None:
        """Area and edges follow from center and extents."""
        assert beam.area == pytest.approx(0.01)
        assert beam.r_min == pytest.approx(0.95)
        assert beam.r_max == pytest.approx(1.05)
        assert beam.z_min == pytest.approx(-0.05)
        assert beam.z_max == pytest.approx(0.05)

    @pytest.mark.parametrize(
        ("width", "height"), [(0.0, 0.1), (0.1, 0.0), (-0.1, 0.1), (0.1, -1.0)]
    )
    def test_non_positive_extent_raises(self, width: float, height: float) -> None:
        """Non-positive width or height is rejected."""
        with pytest.raises(GeometryError, match="positive"):
            Beam(r_center=1.0, z_center=0.0, width=width, height=height)

    def test_crossing_axis_raises(self) -> None:
        """A beam reaching R <= 0 is rejected."""
        with pytest.raises(GeometryError, match="symmetry axis"):
            Beam(r_center=0.05, z_center=0.0, width=0.1, height=0.1)

    def test_non_finite_raises(self) -> None:
        """NaN geometry is rejected."""
        with pytest.raises(GeometryError, match="finite"):
            Beam(r_center=math.nan, z_center=0.0, width=0.1, height=0.1)

    def test_sub_filaments_are_midpoints(self, beam: Beam) -> None:
        """A 2x2 split puts filaments at quarter offsets, r varying fastest."""
        rs, zs = beam.sub_filaments(2, 2)
        np.testing.assert_allclose(rs, [0.975, 1.025, 0.975, 1.025])
        np.testing.assert_allclose(zs, [-0.025, -0.025, 0.025, 0.025])

    def test_refine_preserves_area(self, beam: Beam) -> None:
        """Children tile the parent."""
        children = beam.refine(3, 2)
        assert len(children) == 6
        assert sum(c.area for c in children) == pytest.approx(beam.area)


class TestFieldPoint:
    """Tests for FieldPoint validation."""

    def test_negative_radius_raises(self) -> None:
        """R < 0 is outside the poloidal half plane."""
        with pytest.raises(GeometryError, match=">= 0"):
            FieldPoint(-0.1, 0.0)

    def test_axis_allowed(self) -> None:
        """R = 0 is a valid evaluation point."""
        assert FieldPoint(0.0, 1.0).r == 0.0


class TestQuadratureSettings:
    """Tests for QuadratureSettings."""

    def test_defaults(self) -> None:
        """Default is a 4x4 elliptic split."""
        quad = QuadratureSettings()
        assert quad.n_sub == 16
        assert quad.method is KernelMethod.ELLIPTIC

    def test_zero_order_raises(self) -> None:
        """Orders below one are rejected."""
        with pytest.raises(GeometryError, match="Quadrature orders"):
            QuadratureSettings(n_r=0)

    def test_from_dict_accepts_method_string(self) -> None:
        """The method is parsed from its string name."""
        quad = QuadratureSettings.from_dict({"n_r": 2, "method": "azimuthal"})
        assert quad.n_r == 2
        assert quad.n_z == 4
        assert quad.method is KernelMethod.AZIMUTHAL
        assert QuadratureSettings.from_dict(quad.to_dict()) == quad


class TestLoopKernels:
    """Tests for the filament flux and field kernels."""

    def test_flux_vanishes_on_axis(self) -> None:
        """ψ(0, Z) = 0 for any filament."""
        psi = loop_flux(1.0, 0.3, 0.0, -0.2)
        assert float(psi) == pytest.approx(0.0, abs=1e-18)

    def test_flux_response_vanishes_on_axis(self, beam: Beam) -> None:
        """The beam response on the axis is zero too."""
        assert flux_response(beam, FieldPoint(0.0, 0.4)) == pytest.approx(0.0, abs=1e-18)

    def test_field_on_axis_matches_closed_form(self) -> None:
        """B_Z at the center of a unit loop is μ0 / 2 per ampere."""
        b_r, b_z = loop_field(1.0, 0.0, 0.0, 0.0)
        assert float(b_z) == pytest.approx(MU0 / 2.0, rel=1e-9)
        assert float(b_r) == 0.0

    def test_axial_field_off_plane(self) -> None:
        """On the axis B_Z = μ0 a² / (2 (a² + z²)^{3/2})."""
        _, b_z = loop_field(0.8, 0.1, 0.0, 0.7)
        expected = MU0 * 0.8**2 / (2.0 * (0.8**2 + 0.6**2) ** 1.5)
        assert float(b_z) == pytest.approx(expected, rel=1e-9)

    def test_radial_field_vanishes_on_filament_plane(self) -> None:
        """B_R = 0 at Z = Z_filament."""
        b_r, _ = loop_field(1.0, 0.2, 0.5, 0.2)
        assert float(b_r) == 0.0

    def test_flux_matches_brute_force_at_reference_point(self) -> None:
        """Unit loop at the origin, point (0.5, 0)."""
        expected = _brute_force_flux(1.0, 0.0, 0.5, 0.0)
        assert float(loop_flux(1.0, 0.0, 0.5, 0.0)) == pytest.approx(expected, rel=1e-10)

    def test_flux_matches_brute_force_at_random_points(self) -> None:
        """Twenty random external points agree with the azimuthal oracle."""
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 20:
            r, z = rng.uniform(0.2, 2.0), rng.uniform(-1.0, 1.0)
            if math.hypot(r - 1.0, z) < 0.1:
                continue
            expected = _brute_force_flux(1.0, 0.0, r, z)
            assert float(loop_flux(1.0, 0.0, r, z)) == pytest.approx(expected, rel=1e-10)
            checked += 1

    def test_field_matches_brute_force_at_random_points(self) -> None:
        """B_R and B_Z at twenty random external points agree with the Biot-Savart oracle."""
        rng = np.random.default_rng(12)
        checked = 0
        while checked < 20:
            r, z = rng.uniform(0.2, 2.0), rng.uniform(-1.0, 1.0)
            if math.hypot(r - 1.0, z - 0.1) < 0.1:
                continue
            expected_r, expected_z = _brute_force_field(1.0, 0.1, r, z)
            b_r, b_z = loop_field(1.0, 0.1, r, z)
            assert float(b_r) == pytest.approx(expected_r, rel=1e-9, abs=1e-16)
            assert float(b_z) == pytest.approx(expected_z, rel=1e-9, abs=1e-16)
            checked += 1

    def test_flux_reflection_symmetry(self) -> None:
        """Mirroring filament and point in Z leaves ψ unchanged."""
        rng = np.random.default_rng(3)
        a, zc = rng.uniform(0.5, 1.5, 200), rng.uniform(-1, 1, 200)
        r, z = rng.uniform(0.1, 2.0, 200), rng.uniform(-1, 1, 200)
        np.testing.assert_allclose(loop_flux(a, zc, r, z), loop_flux(a, -zc, r, -z), rtol=1e-12)

    def test_field_is_flux_gradient(self) -> None:
        """B_R = -(1/2πR) ∂ψ/∂Z and B_Z = (1/2πR) ∂ψ/∂R by central differences."""
        rng = np.random.default_rng(5)
        h = 1e-5
        for _ in range(20):
            r, z = rng.uniform(0.3, 1.8), rng.uniform(-0.8, 0.8)
            if math.hypot(r - 1.0, z - 0.1) < 0.1:
                continue
            b_r, b_z = loop_field(1.0, 0.1, r, z)
            dpsi_dz = (loop_flux(1.0, 0.1, r, z + h) - loop_flux(1.0, 0.1, r, z - h)) / (2 * h)
            dpsi_dr = (loop_flux(1.0, 0.1, r + h, z) - loop_flux(1.0, 0.1, r - h, z)) / (2 * h)
            assert float(b_r) == pytest.approx(-dpsi_dz / (2 * np.pi * r), rel=1e-6, abs=1e-14)
            assert float(b_z) == pytest.approx(dpsi_dr / (2 * np.pi * r), rel=1e-6, abs=1e-14)

    def test_azimuthal_matches_elliptic(self) -> None:
        """The two kernels agree away from the filament."""
        rng = np.random.default_rng(8)
        r, z = rng.uniform(0.2, 2.0, 100), rng.uniform(-1.0, 1.0, 100)
        far = np.hypot(r - 1.0, z) > 0.1
        r, z = r[far], z[far]
        elliptic = loop_flux(1.0, 0.0, r, z)
        azimuthal = loop_flux(1.0, 0.0, r, z, method=KernelMethod.AZIMUTHAL, order=512)
        np.testing.assert_allclose(azimuthal, elliptic, rtol=1e-8)
        b_e = loop_field(1.0, 0.0, r, z)
        b_a = loop_field(1.0, 0.0, r, z, method=KernelMethod.AZIMUTHAL, order=512)
        np.testing.assert_allclose(b_a[0], b_e[0], rtol=1e-8, atol=1e-15)
        np.testing.assert_allclose(b_a[1], b_e[1], rtol=1e-8, atol=1e-15)


class TestBeamResponses:
    """Tests for single-beam responses."""

    def test_single_filament_beam_equals_loop(self) -> None:
        """A 1x1 split is the filament at the beam center."""
        beam = Beam(r_center=1.2, z_center=0.1, width=0.2, height=0.2)
        quad = QuadratureSettings(n_r=1, n_z=1)
        pt = FieldPoint(0.6, -0.3)
        assert flux_response(beam, pt, quad) == pytest.approx(
            float(loop_flux(1.2, 0.1, 0.6, -0.3)), rel=1e-14
        )

    def test_coincident_point_raises(self, beam: Beam) -> None:
        """A point on a sub-filament is singular."""
        rs, zs = beam.sub_filaments(4, 4)
        with pytest.raises(SingularEvaluationError):
            flux_response(beam, FieldPoint(float(rs[5]), float(zs[5])))
        with pytest.raises(SingularEvaluationError):
            field_response(beam, FieldPoint(float(rs[5]), float(zs[5])))

    def test_self_flux_is_finite_and_positive(self, beam: Beam) -> None:
        """Odd splits put a filament at the center; the self term keeps ψ finite."""
        psi = self_flux_response(beam, QuadratureSettings(n_r=3, n_z=3))
        assert math.isfinite(psi)
        assert psi > 0

    def test_refinement_converges_at_second_order(self) -> None:
        """Doubling the split shrinks the change by about four."""
        beam = Beam(r_center=1.0, z_center=0.0, width=0.2, height=0.2)
        pt = FieldPoint(1.5, 0.3)
        values = [
            flux_response(beam, pt, QuadratureSettings(n_r=n, n_z=n)) for n in (2, 4, 8)
        ]
        ratio = (values[1] - values[0]) / (values[2] - values[1])
        assert 3.5 < ratio < 4.5


class TestBeamGrid:
    """Tests for BeamGrid."""

    def test_rectangular_order_is_z_major(self) -> None:
        """Beams run along r first, then step in z."""
        grid = BeamGrid.rectangular((0.5, 1.5), (-1.0, 1.0), 2, 3)
        assert len(grid) == 6
        np.testing.assert_allclose(grid.r_centers, [0.75, 1.25] * 3)
        np.testing.assert_allclose(grid.z_centers, [-2 / 3, -2 / 3, 0, 0, 2 / 3, 2 / 3])

    def test_label_count_mismatch_raises(self, beam: Beam) -> None:
        """Labels must match beams one to one."""
        with pytest.raises(GeometryError, match="labels"):
            BeamGrid([beam], [BeamRole.PLASMA, BeamRole.COIL])

    def test_overlapping_plasma_beams_raise(self) -> None:
        """Plasma beams must not overlap."""
        a = Beam(r_center=1.0, z_center=0.0, width=0.2, height=0.2)
        b = Beam(r_center=1.1, z_center=0.05, width=0.2, height=0.2)
        with pytest.raises(GeometryError, match="overlap"):
            BeamGrid([a, b])

    def test_overlapping_conductors_allowed(self) -> None:
        """Only plasma beams are checked for overlap."""
        a = Beam(r_center=1.0, z_center=0.0, width=0.2, height=0.2)
        grid = BeamGrid([a, a], [BeamRole.COIL, BeamRole.PASSIVE])
        assert len(grid) == 2

    def test_touching_beams_allowed(self) -> None:
        """Shared edges are not overlaps."""
        grid = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 4, 4)
        assert len(grid.indices(BeamRole.PLASMA)) == 16

    def test_select_and_indices(self, beam: Beam) -> None:
        """Role selection keeps canonical order."""
        coil = Beam(r_center=2.0, z_center=1.0, width=0.1, height=0.1)
        grid = BeamGrid([coil, beam, coil], [BeamRole.COIL, BeamRole.PLASMA, BeamRole.PASSIVE])
        np.testing.assert_array_equal(grid.indices(BeamRole.PLASMA), [1])
        np.testing.assert_array_equal(grid.indices(BeamRole.COIL, BeamRole.PASSIVE), [0, 2])
        assert grid.select(BeamRole.PASSIVE).labels == (BeamRole.PASSIVE,)

    def test_refine_keeps_children_contiguous(self) -> None:
        """Children of beam i occupy rows 4i..4i+3 and tile it."""
        grid = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 2, 2)
        dense = grid.refine(2, 2)
        assert len(dense) == 16
        parent = nest_index(dense, grid)
        np.testing.assert_array_equal(parent, np.repeat(np.arange(4), 4))
        np.testing.assert_allclose(np.bincount(parent, weights=dense.areas), grid.areas)

    def test_to_lattice_shape(self) -> None:
        """Per-beam values map to an (n_z, n_r) array."""
        grid = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 3, 2)
        lattice = grid.to_lattice(np.arange(6.0))
        assert lattice.shape == (2, 3)
        np.testing.assert_array_equal(lattice, [[0, 1, 2], [3, 4, 5]])

    def test_lattice_rejects_ragged_grid(self, beam: Beam) -> None:
        """Centers that do not fill a lattice are rejected."""
        other = Beam(r_center=1.5, z_center=0.5, width=0.1, height=0.1)
        with pytest.raises(GeometryError, match="lattice"):
            BeamGrid([beam, other]).lattice()


class TestNestIndex:
    """Tests for nest_index."""

    def test_straddling_beam_raises(self) -> None:
        """A dense beam across two inference beams is a mismatch."""
        coarse = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 2, 1)
        straddle = BeamGrid([Beam(r_center=1.0, z_center=0.0, width=0.2, height=0.2)])
        with pytest.raises(GeometryMismatchError, match="expected exactly 1"):
            nest_index(straddle, coarse)

    def test_outside_beam_raises(self) -> None:
        """A dense beam outside every inference beam is a mismatch."""
        coarse = BeamGrid.rectangular((0.5, 1.5), (-0.5, 0.5), 2, 1)
        outside = BeamGrid([Beam(r_center=2.0, z_center=0.0, width=0.1, height=0.1)])
        with pytest.raises(GeometryMismatchError):
            nest_index(outside, coarse)


class TestBuildResponse:
    """Tests for operator assembly."""

    @pytest.fixture
    def grid(self) -> BeamGrid:
        return BeamGrid.rectangular((0.6, 1.4), (-0.4, 0.4), 2, 2)

    @pytest.fixture
    def points(self) -> list[FieldPoint]:
        return [FieldPoint(0.3, 0.7), FieldPoint(1.8, -0.2), FieldPoint(1.0, 0.9)]

    def test_shape_and_columns_match_single_responses(
        self, grid: BeamGrid, points: list[FieldPoint]
    ) -> None:
        """Entry (j, i) is the response at point j to beam i."""
        quad = QuadratureSettings(n_r=2, n_z=2)
        op = build_response(grid, points, Quantity.PSI, quad)
        assert op.shape == (3, 4)
        for j, pt in enumerate(points):
            for i, beam in enumerate(grid):
                assert op.matrix[j, i] == pytest.approx(flux_response(beam, pt, quad), rel=1e-12)

    def test_superposition(self, grid: BeamGrid, points: list[FieldPoint]) -> None:
        """Responses are linear in the beam currents."""
        op = build_response(grid, points, "b_z")
        rng = np.random.default_rng(2)
        i1, i2 = rng.normal(size=4), rng.normal(size=4)
        np.testing.assert_allclose(op @ (2.0 * i1 + i2), 2.0 * (op @ i1) + op @ i2, rtol=1e-12)

    def test_column_order_independent(self, grid: BeamGrid, points: list[FieldPoint]) -> None:
        """Permuting beams permutes columns bit for bit."""
        perm = [2, 0, 3, 1]
        shuffled = BeamGrid([grid[i] for i in perm])
        a = build_response(grid, points, "psi").matrix
        b = build_response(shuffled, points, "psi").matrix
        assert np.array_equal(a[:, perm], b)

    def test_field_responses_match_single_builds(
        self, grid: BeamGrid, points: list[FieldPoint]
    ) -> None:
        """The one-pass builder equals three separate builds."""
        psi, b_r, b_z = build_field_responses(grid, points)
        assert np.array_equal(psi.matrix, build_response(grid, points, "psi").matrix)
        assert np.array_equal(b_r.matrix, build_response(grid, points, "b_r").matrix)
        assert np.array_equal(b_z.matrix, build_response(grid, points, "b_z").matrix)
        assert b_z.quantity is Quantity.B_Z

    def test_singular_point_reports_indices(self, grid: BeamGrid) -> None:
        """Coincidence is reported with point and beam index."""
        rs, zs = grid[3].sub_filaments(4, 4)
        pts = [FieldPoint(0.3, 0.7), FieldPoint(float(rs[0]), float(zs[0]))]
        with pytest.raises(SingularEvaluationError) as excinfo:
            build_response(grid, pts, "psi")
        assert excinfo.value.point_index == 1
        assert excinfo.value.beam_index == 3

    def test_self_field_handles_coincidence(self, grid: BeamGrid) -> None:
        """Under the self-field convention the coincident entry is finite."""
        quad = QuadratureSettings(n_r=3, n_z=3)
        centers = [FieldPoint(b.r_center, b.z_center) for b in grid]
        op = build_response(grid, centers, "psi", quad, self_field=True)
        assert np.all(np.isfinite(op.matrix))
        for i, beam in enumerate(grid):
            assert op.matrix[i, i] == pytest.approx(self_flux_response(beam, quad), rel=1e-12)

    def test_non_finite_matrix_rejected(self) -> None:
        """ResponseOperator refuses NaN entries."""
        with pytest.raises(GeometryError, match="non-finite"):
            ResponseOperator(
                matrix=np.array([[np.nan]]), quantity=Quantity.PSI, quadrature=QuadratureSettings()
            )
