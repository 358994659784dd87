"""Shared pytest fixtures and configuration."""

import math

import numpy as np
import pytest

from equinest.diagnostics import DiagnosticSet
from equinest.equilibrium import ProfileCoeffs
from equinest.inference import EquilibriumState
from equinest.machine import Machine, MachineGeometry
from equinest.magnetostatics import QuadratureSettings
from equinest.sampler import BoxPosterior
from equinest.synthetic import (
    DESK_PROFILE,
    SyntheticMachineSpec,
    TruthRecord,
    build_synthetic_machine,
    generate_gs_truth,
)

TINY_TARGET_CURRENT = 1.0e5


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add --run-slow option for calibration and paired synthetic experiments."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run slow calibration and desk-scale round-trip tests",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    """Skip slow tests unless --run-slow is passed."""
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="Need --run-slow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def tiny_spec(**overrides: object) -> SyntheticMachineSpec:
    """A 3x4-beam machine with a handful of channels; operators build in well under a second."""
    values: dict[str, object] = {
        "name": "tiny",
        "plasma_r": (0.7, 1.3),
        "plasma_z": (-0.4, 0.4),
        "n_r": 3,
        "n_z": 4,
        "coils": ((1.7, 0.5, 0.1, 0.1), (1.7, -0.5, 0.1, 0.1)),
        "coil_currents": (-5.0e3, -5.0e3),
        "passives": ((1.6, 0.0, 0.04, 0.2),),
        "pickup_wall": (0.5, 1.5, -0.6, 0.6),
        "n_pickup_positions": 8,
        "fluxloop_wall": (0.45, 1.55, -0.65, 0.65),
        "n_fluxloops": 6,
        "mse_r": (0.75, 1.25),
        "n_mse": 5,
        "quadrature": QuadratureSettings(n_r=2, n_z=2),
    }
    values.update(overrides)
    return SyntheticMachineSpec(**values)  # type: ignore[arg-type]


@pytest.fixture(scope="session")
def tiny_bench() -> tuple[MachineGeometry, DiagnosticSet]:
    """Geometry and zero-observation channel template of the tiny machine."""
    return build_synthetic_machine(tiny_spec())


@pytest.fixture(scope="session")
def tiny_machine(tiny_bench: tuple[MachineGeometry, DiagnosticSet]) -> Machine:
    """Tiny machine with operators, built without a cache."""
    geometry, template = tiny_bench
    return Machine.build(geometry, template.layout())


@pytest.fixture(scope="session")
def tiny_template(tiny_bench: tuple[MachineGeometry, DiagnosticSet]) -> DiagnosticSet:
    return tiny_bench[1]


@pytest.fixture(scope="session")
def tiny_truth(tiny_machine: Machine) -> TruthRecord:
    """Force-balance ground truth on the tiny machine."""
    return generate_gs_truth(
        tiny_machine,
        DESK_PROFILE,
        TINY_TARGET_CURRENT,
        tol=1.0e-5,
        max_iterations=500,
        conductor_currents=tiny_spec().conductor_currents,
    )


@pytest.fixture
def simple_state(tiny_machine: Machine) -> EquilibriumState:
    """A hand-made state: uniform beam currents and a flat profile."""
    return EquilibriumState(
        beam_currents=np.full(tiny_machine.n_plasma, 50.0),
        profile=ProfileCoeffs(
            p_c=(1.0, 0.0, 0.0, 0.0), f_c=(0.0, 0.0, 0.0), f_boundary=tiny_machine.f_boundary
        ),
        psi_gamma=0.0,
        sigma_star_sq=1.0,
        biases=np.zeros(tiny_machine.layout.n_bias),
        passive_currents=np.zeros(tiny_machine.n_conductors),
    )


@pytest.fixture
def gaussian_posterior() -> BoxPosterior:
    """Normalized 2-D standard Gaussian on [-5, 5]²; ln Z ≈ ln(1/100)."""
    return BoxPosterior(
        [-5.0, -5.0],
        [5.0, 5.0],
        lambda x: float(-0.5 * np.dot(x, x) - math.log(2.0 * math.pi)),
    )


@pytest.fixture
def narrow_gaussian_posterior() -> BoxPosterior:
    """Normalized Gaussian with σ = 0.01 at the center of the unit square; ln Z ≈ 0."""
    sigma = 0.01
    center = np.array([0.5, 0.5])
    log_norm = math.log(2.0 * math.pi * sigma**2)
    return BoxPosterior(
        [0.0, 0.0],
        [1.0, 1.0],
        lambda x: float(-0.5 * np.sum((x - center) ** 2) / sigma**2 - log_norm),
    )


@pytest.fixture
def constant_posterior() -> BoxPosterior:
    """Constant likelihood ln L = -3.7 on the unit square."""
    return BoxPosterior([0.0, 0.0], [1.0, 1.0], lambda x: -3.7)
