"""Integration test fixtures: the tiny synthetic bench written to disk."""

from pathlib import Path
from typing import Any

import numpy as np
import pytest
import yaml

from equinest.diagnostics import DiagnosticSet
from equinest.equilibrium import ProfileCoeffs
from equinest.inference import EquilibriumState
from equinest.machine import MachineGeometry
from equinest.synthetic import TruthRecord, synthesize_data

NOISE_SEED = 3

# Small enough for a run to finish in about a minute on the tiny machine.
FAST_RUN = {
    "sizeSamplePool": 20,
    "numEvidenceSamples": 12,
    "numABIFailures": 50,
    "numMCMCJumps": 12,
}


def _around(values: Any, *, frac: float = 0.1, floor: float = 1.0) -> list[float]:
    """Bounds covering ``values`` with a margin."""
    lo, hi = float(np.min(values)), float(np.max(values))
    pad = frac * max(hi - lo, abs(lo), abs(hi)) + floor
    return [lo - pad, hi + pad]


def tight_priors(state: EquilibriumState) -> dict[str, Any]:
    """Prior bounds hugging a known state, to keep the prior-to-posterior entropy small."""
    profile: ProfileCoeffs = state.profile
    return {
        "beam_current": _around(state.beam_currents),
        "conductor_current": _around(state.passive_currents),
        "p_c": [_around(c) for c in profile.p_c],
        "f_c": [_around(c) for c in profile.f_c],
        "psi_gamma": _around(state.psi_gamma, floor=1e-3),
        "bias": [-0.01, 0.01],
    }


@pytest.fixture(scope="session")
def bench_dir(
    tmp_path_factory: pytest.TempPathFactory,
    tiny_bench: tuple[MachineGeometry, DiagnosticSet],
    tiny_truth: TruthRecord,
) -> Path:
    """Directory holding machine.json, diagnostics.json and truth.json of the tiny bench."""
    root = tmp_path_factory.mktemp("bench")
    geometry, template = tiny_bench
    geometry.to_file(root / "machine.json")
    synthesize_data(tiny_truth, template, NOISE_SEED).to_file(root / "diagnostics.json")
    tiny_truth.to_file(root / "truth.json")
    return root


def write_run_config(path: Path, bench_dir: Path, truth: TruthRecord, **extra: Any) -> Path:
    """Write a run config for the tiny bench; ``extra`` entries replace top-level sections."""
    raw: dict[str, Any] = {
        "paths": {
            "machine": str(bench_dir / "machine.json"),
            "diagnostics": str(bench_dir / "diagnostics.json"),
            "truth": str(bench_dir / "truth.json"),
            "output_dir": str(path.parent / "run"),
        },
        "run": dict(FAST_RUN),
        "seeding": {"enabled": False},
        "priors": tight_priors(truth.state),
        "seed": 3,
        "posterior_samples": 40,
        "report": {"psi_norm_points": 11, "q_levels": 3},
    }
    raw.update(extra)
    path.write_text(yaml.safe_dump(raw, sort_keys=False), encoding="utf-8")
    return path


@pytest.fixture
def run_config(tmp_path: Path, bench_dir: Path, tiny_truth: TruthRecord) -> Path:
    """Run config of the tiny bench writing to ``tmp_path/run``."""
    return write_run_config(tmp_path / "run.yaml", bench_dir, tiny_truth)
