import numpy as np
import pytest

from qdip import (MeasurementRecord, SchemaError, alpha_convexity, cost_j,
                  hessian_j, local_identify, measure_records, noise_study)

from oracles import fd_hessian_j


@pytest.fixture(scope="module")
def ladder_setup(ladder3, ladder_sets):
    spec, dipole = ladder3
    controls = ladder_sets[0.02]
    records = measure_records(spec, dipole, controls)
    return spec, dipole, controls, records


class TestCost:
    def test_zero_at_truth(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        assert cost_j(spec, dipole, controls, records) == 0.0

    def test_single_offset_squares(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        shifted = [MeasurementRecord(records[0].control_id,
                                     records[0].p_measured + 0.1),
                   records[1]]
        assert cost_j(spec, dipole, controls, shifted) == pytest.approx(0.01)

    def test_record_ids_name_the_pairs(self, ladder_setup):
        _, _, _, records = ladder_setup
        assert [r.control_id for r in records] == ["pair-1-2", "pair-2-3"]

    def test_length_mismatch_rejected(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        with pytest.raises(SchemaError):
            cost_j(spec, dipole, controls, records[:1])


class TestHessian:
    def test_symmetric_positive_semidefinite(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        h = hessian_j(spec, dipole, controls)
        np.testing.assert_allclose(h, h.T, atol=1e-14)
        assert np.linalg.eigvalsh(h)[0] >= 0.0

    def test_matches_finite_difference_hessian(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        h = hessian_j(spec, dipole, controls)
        h_fd = fd_hessian_j(spec, dipole, controls, records)
        scale = np.max(np.abs(h))
        assert np.max(np.abs(h - h_fd)) / scale < 2e-2

    def test_quadratic_model_of_cost(self, ladder_setup):
        # J vanishes at the truth, so J(mu + d) = d^T H d to second order
        spec, dipole, controls, records = ladder_setup
        h = hessian_j(spec, dipole, controls)
        rng = np.random.default_rng(21)
        for _ in range(3):
            d = rng.normal(size=len(dipole.support))
            d *= 1e-4 / np.linalg.norm(d)
            moved = dipole.with_support_entries(dipole.support_values() + d)
            j = cost_j(spec, moved, controls, records)
            assert j == pytest.approx(d @ h @ d, rel=0.05)


class TestAlphaConvexity:
    def test_reports_smallest_eigenvalue(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        report = alpha_convexity(spec, dipole, controls)
        h = hessian_j(spec, dipole, controls)
        assert report.alpha_hat == pytest.approx(np.linalg.eigvalsh(h)[0])
        assert report.xi == pytest.approx(0.02)
        assert report.certified is None and report.xi_needed is None

    def test_certification_against_target(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        passing = alpha_convexity(spec, dipole, controls, alpha_target=100.0)
        assert passing.certified is True
        failing = alpha_convexity(spec, dipole, controls, alpha_target=1e6)
        assert failing.certified is False
        # the 1/(4 xi^2) scaling says how much stronger xi must get
        assert failing.xi_needed == pytest.approx(
            0.02 * np.sqrt(failing.alpha_hat / 1e6))

    def test_empty_control_set(self, ladder3):
        spec, dipole = ladder3
        report = alpha_convexity(spec, dipole, [])
        assert report.alpha_hat == 0.0


class TestLocalIdentify:
    def test_zero_iterations_at_truth(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        result = local_identify(spec, controls, records, dipole)
        assert result.converged
        assert result.iterations == 0
        assert result.cost == 0.0
        assert result.grad_norm <= 1e-10

    def test_recovers_from_perturbed_start(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        rng = np.random.default_rng(5)
        delta = rng.normal(size=len(dipole.support))
        delta *= 1e-3 / np.linalg.norm(delta)
        start = dipole.with_support_entries(dipole.support_values() + delta)
        result = local_identify(spec, controls, records, start)
        assert result.converged
        err = np.array(result.mu_hat.support_values()) - dipole.support_values()
        assert np.max(np.abs(err)) < 1e-7
        assert result.mu_hat.support == dipole.support

    def test_off_support_entries_stay_zero(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        start = dipole.with_support_entries(
            dipole.support_values() + np.array([1e-3, -1e-3]))
        result = local_identify(spec, controls, records, start)
        assert result.mu_hat.matrix[0, 2] == 0.0
        assert result.mu_hat.matrix[2, 0] == 0.0

    def test_empty_inputs_rejected(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        with pytest.raises(SchemaError):
            local_identify(spec, [], [], dipole)
        with pytest.raises(SchemaError):
            local_identify(spec, controls, records[:1], dipole)


class TestMeasureRecords:
    def test_noise_free_is_deterministic(self, ladder_setup):
        spec, dipole, controls, records = ladder_setup
        again = measure_records(spec, dipole, controls)
        assert [r.p_measured for r in again] == [r.p_measured for r in records]

    def test_noise_reproducible_per_seed(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        a = measure_records(spec, dipole, controls, variance=1e-4, seed=[9, 0])
        b = measure_records(spec, dipole, controls, variance=1e-4, seed=[9, 0])
        c = measure_records(spec, dipole, controls, variance=1e-4, seed=[9, 1])
        assert [r.p_measured for r in a] == [r.p_measured for r in b]
        assert [r.p_measured for r in a] != [r.p_measured for r in c]

    def test_noise_magnitude_recorded(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        recs = measure_records(spec, dipole, controls, variance=1e-4, seed=3)
        assert all(r.variance == 1e-4 for r in recs)
        assert all(r.seed == 3 for r in recs)

    def test_negative_variance_rejected(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        with pytest.raises(SchemaError):
            measure_records(spec, dipole, controls, variance=-1.0)


class TestNoiseStudy:
    def test_errors_track_predicted_radius(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        study = noise_study(spec, dipole, controls, [1e-6], trials=6, seed=17)
        row = study.rows[0]
        assert row.trials == 6
        assert row.nonconverged == 0
        assert row.errors.shape == (6,)
        assert row.predicted_radius == pytest.approx(
            np.sqrt(1e-6 / study.alpha_hat))
        # each recovered point should sit within a few predicted radii
        assert np.all(row.errors <= 3.0 * row.predicted_radius)
        assert row.rms_error <= 3.0 * row.predicted_radius

    def test_input_validation(self, ladder_setup):
        spec, dipole, controls, _ = ladder_setup
        with pytest.raises(SchemaError):
            noise_study(spec, dipole, controls, [1e-6], trials=0, seed=1)
        with pytest.raises(SchemaError):
            noise_study(spec, dipole, controls, [-1e-6], trials=2, seed=1)
