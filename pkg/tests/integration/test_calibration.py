"""
Many-seed calibrations and the paired desk-scale round trip.

These are slow; run them with ``pytest --run-slow``.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from equinest.config import RunConfig
from equinest.reconstruction import InferenceOutcome, Reconstruction
from equinest.sampler import BoxPosterior, RunParams, run_nested

pytestmark = [pytest.mark.integration, pytest.mark.slow]

SEEDS = range(50)


def _params(pool: int) -> RunParams:
    return RunParams(
        size_sample_pool=pool, num_evidence_samples=12, num_abi_failures=1000, num_mcmc_jumps=20
    )


class TestEvidenceCalibration:
    """Evidence estimates over many seeds."""

    def test_error_within_three_sigma(self, narrow_gaussian_posterior: BoxPosterior) -> None:
        """|ln Z - 0| <= 3·√(H/m) in at least 95% of runs for a σ = 0.01 Gaussian."""
        hits = 0
        for seed in SEEDS:
            run = run_nested(narrow_gaussian_posterior, _params(150), seed, count=10)
            tolerance = 3.0 * math.sqrt(run.evidence.entropy / 150)
            hits += abs(run.evidence.log_evidence_mean) <= tolerance
        assert hits >= 48

    def test_doubling_pool_shrinks_spread(self, gaussian_posterior: BoxPosterior) -> None:
        """The seed-to-seed spread of ln Z falls by about √2 when m doubles."""
        spreads = []
        for pool in (50, 100):
            values = [
                run_nested(gaussian_posterior, _params(pool), seed, count=10)
                .evidence.log_evidence_mean
                for seed in SEEDS
            ]
            spreads.append(float(np.std(values, ddof=1)))
        assert 1.15 <= spreads[0] / spreads[1] <= 1.75


def _desk_run(root: Path, blob: dict[str, float] | None) -> InferenceOutcome:
    """Synthesize desk data (optionally perturbed) into ``root`` and infer on it."""
    config = RunConfig.from_mapping(
        {
            "paths": {
                "machine": "machine.json",
                "diagnostics": "diagnostics.json",
                "truth": "truth.json",
                "output_dir": "run",
            },
            "run": {"sizeSamplePool": 50, "numEvidenceSamples": 12, "workers": 4},
            "seed": 11,
            "synthetic": {"preset": "desk", "blob": blob},
        },
        base_dir=root,
    )
    with Reconstruction(config, cache_path=root.parent / "ops.db") as rec:
        rec.synthesize()
        return rec.infer()


class TestPairedRoundTrip:
    """GS-consistent against blob-perturbed desk data, same config and seed."""

    def test_force_balance_mismatch_detected(self, tmp_path: Path) -> None:
        """Perturbed data need a much larger σ*² and lose evidence."""
        consistent = _desk_run(tmp_path / "consistent", None)
        # 10% of the default 450 kA target current.
        perturbed = _desk_run(
            tmp_path / "perturbed", {"r": 1.15, "z": 0.2, "radius": 0.1, "amplitude": 4.5e4}
        )

        c, p = consistent.report, perturbed.report
        assert p.scalars["sigma_star_sq"].mean >= 5.0 * c.scalars["sigma_star_sq"].mean
        assert c.delta_j_mean.mean() < 0.05 * c.j_mean.max()

        gap = c.evidence.log_evidence_mean - p.evidence.log_evidence_mean
        spread = math.hypot(c.evidence.log_evidence_2sigma, p.evidence.log_evidence_2sigma)
        assert gap > 3.0 * spread
