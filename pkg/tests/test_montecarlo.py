import os

import numpy as np
import pytest

from rpurn.model import ModelParams
from rpurn.montecarlo import (
    ReplicationPlan,
    empirical_covariance,
    ks_distance,
    run_replications,
    verify_beta_gt1,
    verify_clt,
    verify_edge_laws,
    write_replicates_csv,
)
from rpurn.simulate import simulate_trajectory


def params(alpha=1.0, beta=0.5, b0=(0.5, 0.5), B0=(1.0, 1.0), **kw):
    return ModelParams(alpha=alpha, beta=beta, b0=b0, B0=B0, **kw)


def plan(n_steps=200, replicates=16, master_seed=5, **kw):
    return ReplicationPlan(params=params(**kw), n_steps=n_steps, replicates=replicates, master_seed=master_seed)


class TestRunReplications:
    def test_deterministic(self):
        rec1 = run_replications(plan(), snapshot_steps=[100], record_final_psi=True)
        rec2 = run_replications(plan(), snapshot_steps=[100], record_final_psi=True)
        assert np.array_equal(rec1.counts, rec2.counts)
        assert np.array_equal(rec1.snapshots[100], rec2.snapshots[100])
        assert np.array_equal(rec1.final_psi, rec2.final_psi)

    def test_record_count_and_distinct_streams(self):
        rec = run_replications(plan(replicates=24))
        assert rec.counts.shape == (24, 2)
        assert rec.counts.sum() == 24 * 200
        # replicate streams produce pairwise-distinct draw sequences
        sequences = {
            tuple(simulate_trajectory(params(), 200, seed=(5, r)).draws) for r in range(24)
        }
        assert len(sequences) == 24

    def test_matches_single_trajectory_engine(self):
        p = params(alpha=0.7, beta=0.3, b0=(1, 2), B0=(0.5, 0.5))
        rec = run_replications(
            ReplicationPlan(params=p, n_steps=123, replicates=5, master_seed=42),
            snapshot_steps=[60],
            record_final_psi=True,
        )
        for r in range(5):
            traj = simulate_trajectory(p, 123, seed=(42, r), record_psi=True)
            assert np.array_equal(np.bincount(traj.draws - 1, minlength=2), rec.counts[r])
            assert np.array_equal(traj.psi_path[60], rec.snapshots[60][r])
            assert np.array_equal(traj.psi_path[123], rec.final_psi[r])

    def test_thread_count_does_not_change_results(self):
        baseline = None
        for threads in ("1", "3"):
            os.environ["RP_URN_THREADS"] = threads
            try:
                rec = run_replications(plan(replicates=40))
            finally:
                del os.environ["RP_URN_THREADS"]
            if baseline is None:
                baseline = rec.counts
            else:
                assert np.array_equal(baseline, rec.counts)

    def test_invalid_snapshot_steps(self):
        with pytest.raises(ValueError, match="snapshot"):
            run_replications(plan(n_steps=10), snapshot_steps=[11])

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            ReplicationPlan(params=params(), n_steps=0, replicates=4, master_seed=0)
        with pytest.raises(ValueError):
            ReplicationPlan(params=params(), n_steps=5, replicates=1, master_seed=0)


class TestEmpiricalCovariance:
    def test_hand_value(self):
        cov = empirical_covariance([(1.0, 0.0), (0.0, 1.0)])
        assert np.allclose(cov, [[0.5, -0.5], [-0.5, 0.5]])

    def test_identical_vectors(self):
        cov = empirical_covariance([(2.0, 3.0)] * 5)
        assert np.allclose(cov, 0.0)

    def test_symmetric_psd(self):
        rng = np.random.default_rng(1)
        samples = rng.normal(size=(40, 3))
        cov = empirical_covariance(samples)
        assert np.allclose(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() >= -1e-12

    def test_needs_two(self):
        with pytest.raises(ValueError):
            empirical_covariance([(1.0, 2.0)])


class TestKsDistance:
    def test_hand_value_uniform(self):
        assert ks_distance([0.25, 0.75], lambda x: min(max(x, 0.0), 1.0)) == pytest.approx(0.25)

    def test_single_sample_at_median(self):
        assert ks_distance([0.5], lambda x: min(max(x, 0.0), 1.0)) == pytest.approx(0.5)

    def test_glivenko_cantelli_direction(self):
        rng = np.random.default_rng(8)
        n = 2000
        samples = rng.random(n)
        d = ks_distance(samples, lambda x: min(max(x, 0.0), 1.0))
        assert d < 1.36 / np.sqrt(n)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ks_distance([], lambda x: x)

    def test_non_monotone_cdf_rejected(self):
        with pytest.raises(ValueError, match="monotone"):
            ks_distance([0.1, 0.2, 0.3], lambda x: -x)


class TestVerifyClt:
    def test_small_scale_report(self):
        report = verify_clt(
            ReplicationPlan(params=params(), n_steps=2000, replicates=300, master_seed=3),
            cov_tolerance=0.35,
            ks_tolerance=0.12,
        )
        names = [c.name for c in report.checks]
        assert names == ["empirical-mean-clt-covariance", "chi-squared-gamma-limit"]
        assert report.passed
        payload = report.to_dict()
        assert payload["checks"][0]["tolerance"] == 0.35

    def test_low_power_flagged(self):
        report = verify_clt(
            ReplicationPlan(params=params(), n_steps=500, replicates=2, master_seed=3),
            cov_tolerance=1e9,
            ks_tolerance=1.0,
        )
        assert any("low power" in w for w in report.warnings)

    def test_wrong_regime(self):
        with pytest.raises(ValueError):
            verify_clt(ReplicationPlan(params=params(beta=2.0), n_steps=10, replicates=4, master_seed=0))


class TestVerifyBetaGt1:
    def test_checks_present_and_pass(self):
        p = params(beta=2.0)
        report = verify_beta_gt1(
            ReplicationPlan(params=p, n_steps=300, replicates=400, master_seed=9)
        )
        names = {c.name for c in report.checks}
        assert names == {"predictive-mean-geometric-decay", "conditional-clt-standard-normal"}

    def test_mild_growth_is_flat(self):
        # beta barely above 1: the psi path flattens; the scaled-gap medians
        # stay below the closed-form bound on a late grid
        p = params(beta=1.05)
        report = verify_beta_gt1(
            ReplicationPlan(params=p, n_steps=100, replicates=200, master_seed=9),
            decay_grid=(200, 300, 400),
        )
        decay = next(c for c in report.checks if c.name == "predictive-mean-geometric-decay")
        assert decay.passed

    def test_absorption_only_regime(self):
        p = params(beta=0.6, b0=(0, 0), B0=(1, 1), allow_zero_intrinsic=True)
        report = verify_beta_gt1(
            ReplicationPlan(params=p, n_steps=50, replicates=500, master_seed=9),
            absorption_steps=200,
        )
        assert [c.name for c in report.checks] == ["vertex-absorption-law"]

    def test_wrong_regime(self):
        with pytest.raises(ValueError, match="regime"):
            verify_beta_gt1(ReplicationPlan(params=params(beta=0.5), n_steps=10, replicates=4, master_seed=0))


class TestVerifyEdgeLaws:
    def test_constant_draws(self):
        p = params(beta=0.0, b0=(0, 0), B0=(1, 3), allow_zero_intrinsic=True)
        report = verify_edge_laws(ReplicationPlan(params=p, n_steps=40, replicates=300, master_seed=2))
        check = report.checks[0]
        assert check.name == "constant-draw-sequence"
        assert check.passed

    def test_alpha_zero_limits(self):
        p = params(alpha=0.0, beta=0.4, b0=(1, 3), B0=(3, 1))
        report = verify_edge_laws(ReplicationPlan(params=p, n_steps=800, replicates=500, master_seed=2))
        check = report.checks[0]
        assert check.name == "independent-draw-limit"
        assert check.passed
        assert np.allclose(check.target, [0.25, 0.75])

    def test_wrong_regime(self):
        with pytest.raises(ValueError, match="edge regime"):
            verify_edge_laws(plan())


class TestReplicateCsv:
    def test_structure(self, tmp_path):
        rec = run_replications(plan(replicates=6))
        path = tmp_path / "reps.csv"
        write_replicates_csv(rec, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "replicate,count_1,count_2,mean_1,mean_2,chi_squared"
        assert len(lines) == 7
