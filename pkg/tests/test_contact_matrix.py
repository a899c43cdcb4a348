import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from txnepi import contact_matrix as cm
from txnepi.dp_core import BudgetLedger
from txnepi.errors import (
    DegenerateInputError,
    DimensionError,
    ParameterError,
)

HUGE_EPS = 1e12

# desk instance: 4 cities x 10 categories of plausible count magnitudes
DESK_COUNTS = {
    "Medellin": np.array([120.0, 340, 90, 410, 260, 700, 150, 80, 520, 310]),
    "Bogota DC": np.array([400.0, 900, 310, 1200, 800, 2100, 420, 260, 1500, 900]),
    "Brasilia": np.array([260.0, 610, 200, 820, 540, 1400, 300, 170, 1000, 620]),
    "Santiago": np.array([300.0, 700, 240, 930, 610, 1600, 330, 200, 1150, 700]),
}


class TestAgeCounts:
    def test_identity(self):
        c = np.array([3.0, 5.0, 7.0])
        assert np.array_equal(cm.age_counts(np.eye(3), c), c)

    def test_zeros(self):
        d = np.full((2, 3), 1 / 2)
        assert np.array_equal(cm.age_counts(d, np.zeros(3)), np.zeros(2))

    def test_hand_multiply(self):
        d = np.array([[0.5, 1.0], [0.5, 0.0]])
        assert np.array_equal(cm.age_counts(d, np.array([4.0, 2.0])), np.array([4.0, 2.0]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cm.age_counts(np.eye(3), np.ones(4))

    def test_negative_counts_rejected(self):
        with pytest.raises(ParameterError):
            cm.age_counts(np.eye(2), np.array([1.0, -1.0]))


class TestProportionateMixing:
    def test_symmetric_case(self):
        assert np.array_equal(
            cm.proportionate_mixing(np.array([2.0, 2.0])), np.ones((2, 2))
        )

    def test_absorbing_zero(self):
        m = cm.proportionate_mixing(np.array([1.0, 0.0]))
        assert np.array_equal(m, np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInputError):
            cm.proportionate_mixing(np.zeros(3))

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(
            float,
            st.integers(min_value=1, max_value=6),
            elements=st.floats(min_value=0, max_value=1e4),
        ).filter(lambda n: n.sum() > 0)
    )
    def test_conserves_mass(self, n):
        m = cm.proportionate_mixing(n)
        assert m.sum() == pytest.approx(n.sum(), rel=1e-9)
        assert np.array_equal(m, m.T)


class TestSymmetrize:
    def test_identity_for_unit_mixing(self):
        m = np.array([[1.0, 2.0], [2.0, 5.0]])
        assert np.array_equal(cm.symmetrize(m, np.ones(2)), m)

    def test_hand_example(self):
        c = cm.symmetrize(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([2.0, 1.0]))
        assert np.array_equal(c, np.array([[2.0, 3.5], [3.5, 4.0]]))

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = rng.random((4, 4)) * 10
            mix = rng.random(4) + 0.1
            c = cm.symmetrize(m, mix)
            assert np.array_equal(c, c.T)

    def test_nonpositive_mixing_rejected(self):
        with pytest.raises(ParameterError):
            cm.symmetrize(np.eye(2), np.array([1.0, 0.0]))


class TestSimplexProject:
    def test_idempotent_on_simplex(self):
        v = np.array([0.2, 0.5, 0.3])
        assert np.allclose(cm.simplex_project(v), v)

    def test_threshold_example(self):
        assert np.allclose(cm.simplex_project(np.array([2.0, 0.0])), [1.0, 0.0])

    def test_constant_maps_to_uniform(self):
        for a in (2, 5, 9):
            out = cm.simplex_project(np.full(a, 3.7))
            assert np.allclose(out, 1.0 / a)

    def test_non_finite_rejected(self):
        with pytest.raises(ParameterError):
            cm.simplex_project(np.array([np.nan, 0.0]))

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(
            float,
            st.integers(min_value=1, max_value=8),
            elements=st.floats(min_value=-10, max_value=10),
        )
    )
    def test_output_on_simplex_and_is_nearest(self, v):
        proj = cm.simplex_project(v)
        assert np.all(proj >= 0)
        assert proj.sum() == pytest.approx(1.0, abs=1e-9)
        rng = np.random.default_rng(0)
        for _ in range(10):
            other = rng.dirichlet(np.ones(len(v)))
            assert np.linalg.norm(proj - v) <= np.linalg.norm(other - v) + 1e-9


def _pipeline_oracle(d, counts, mixing):
    """Independent composition of the published stages."""
    matrices = [cm.proportionate_mixing(cm.age_counts(d, c)) for c in counts.values()]
    national = sum(matrices) / len(matrices)
    sym = cm.symmetrize(national, mixing)
    return sym / sym.sum()


class TestEstimate:
    def _table(self, desk_table):
        return desk_table

    def test_noise_free_matches_pipeline_oracle(self, desk_table):
        categories = sorted(desk_table["merch_category"].unique())
        a = 5
        d = cm.random_consumption(a, len(categories), np.random.default_rng(8))
        mixing = np.ones(a)
        result = cm.estimate(
            desk_table, d, mixing, ["Medellin"], HUGE_EPS, np.random.default_rng(0),
            categories=categories,
        )
        exact = {"Medellin": cm.category_counts(desk_table, "Medellin", categories)}
        oracle = _pipeline_oracle(d, exact, mixing)
        assert np.allclose(result.matrix, oracle, rtol=1e-9, atol=1e-12)

    def test_output_symmetric_and_non_negative(self, desk_table):
        categories = sorted(desk_table["merch_category"].unique())
        d = cm.random_consumption(5, len(categories), np.random.default_rng(1))
        result = cm.estimate(
            desk_table, d, None, ["Medellin", "Bogota DC", "Santiago"], 0.5,
            np.random.default_rng(2), categories=categories,
        )
        assert np.array_equal(result.matrix, result.matrix.T)
        assert np.all(result.matrix >= 0)

    def test_normalized_to_unit_sum(self, desk_table):
        categories = sorted(desk_table["merch_category"].unique())
        d = cm.random_consumption(5, len(categories), np.random.default_rng(1))
        result = cm.estimate(
            desk_table, d, None, ["Medellin"], 1.0, np.random.default_rng(2),
            categories=categories,
        )
        assert result.matrix.sum() == pytest.approx(1.0, abs=1e-9)

    def test_ledger_charged_per_city(self, desk_table):
        categories = sorted(desk_table["merch_category"].unique())
        d = cm.random_consumption(5, len(categories), np.random.default_rng(1))
        ledger = BudgetLedger(2.0)
        cm.estimate(
            desk_table, d, None, ["Medellin", "Bogota DC"], 1.0,
            np.random.default_rng(2), ledger=ledger, categories=categories,
        )
        assert [label for label, _ in ledger.charges] == [
            "contact:Medellin", "contact:Bogota DC",
        ]

    def test_no_transactions_anywhere_is_degenerate(self, desk_table):
        empty = desk_table.iloc[0:0]
        d = cm.random_consumption(5, 3, np.random.default_rng(1))
        with pytest.raises(DegenerateInputError):
            cm.estimate(
                empty, d, None, ["Medellin"], 1.0, np.random.default_rng(0),
                categories=["a", "b", "c"],
            )

    def test_column_sum_validation(self, desk_table):
        bad = np.full((5, 10), 0.3)
        with pytest.raises(ParameterError):
            cm.estimate(desk_table, bad, None, ["Medellin"], 1.0, np.random.default_rng(0))


class TestTrainD:
    def _target(self, seed=11, a=5):
        k = len(next(iter(DESK_COUNTS.values())))
        d_star = cm.random_consumption(a, k, np.random.default_rng(seed))
        c_gt = cm.contact_from_counts(d_star, DESK_COUNTS)
        return d_star, c_gt

    def test_fixed_point_terminates_immediately(self):
        d_star, c_gt = self._target()
        result = cm.train_d(DESK_COUNTS, c_gt, init_d=d_star)
        assert result.converged
        assert result.loss < 1e-12
        assert len(result.history) == 1  # no gradient step taken

    def test_accepted_losses_non_increasing(self):
        _, c_gt = self._target()
        init = cm.random_consumption(5, 10, np.random.default_rng(3))
        hyper = cm.TrainingHyperparams(max_iterations=60)
        result = cm.train_d(DESK_COUNTS, c_gt, init_d=init, hyper=hyper)
        losses = [loss for _, loss, _ in result.history]
        assert all(b <= a for a, b in zip(losses, losses[1:]))

    def test_synthetic_recovery_reaches_small_loss(self):
        _, c_gt = self._target(seed=21)
        hyper = cm.TrainingHyperparams(max_iterations=2000, loss_tolerance=1e-9, seed=4)
        result = cm.train_d(DESK_COUNTS, c_gt, hyper=hyper)
        assert result.loss < 1e-3
        assert cm.validate_consumption(result.d) is not None  # still column-stochastic

    def test_gradient_fd_self_consistency(self):
        # central difference at eps vs 2*eps agrees to 1e-4 relative on a probe
        _, c_gt = self._target(seed=31)
        d = cm.random_consumption(5, 10, np.random.default_rng(9))

        def loss_fn(candidate):
            diff = cm.contact_from_counts(candidate, DESK_COUNTS) - c_gt
            return float(np.sum(diff * diff))

        g1 = cm.fd_gradient(loss_fn, d, 1e-6)
        g2 = cm.fd_gradient(loss_fn, d, 2e-6)
        probe = np.unravel_index(np.argmax(np.abs(g1)), g1.shape)
        assert g2[probe] == pytest.approx(g1[probe], rel=1e-4)

    def test_asymmetric_target_rejected(self):
        bad = np.array([[0.5, 0.1], [0.2, 0.2]])
        with pytest.raises(ParameterError):
            cm.train_d({"x": np.ones(3)}, bad)

    def test_non_square_target_rejected(self):
        with pytest.raises(DimensionError):
            cm.train_d({"x": np.ones(3)}, np.ones((2, 3)))


class TestMatrixCsv:
    def test_round_trip(self, tmp_path):
        m = np.array([[0.25, 0.75], [0.5, 0.5]])
        path = tmp_path / "m.csv"
        cm.write_matrix_csv(m, path)
        assert np.allclose(cm.read_matrix_csv(path), m)

    def test_training_log(self, tmp_path):
        _, c_gt = TestTrainD()._target(seed=2)
        hyper = cm.TrainingHyperparams(max_iterations=5)
        result = cm.train_d(DESK_COUNTS, c_gt, hyper=hyper)
        path = tmp_path / "log.csv"
        cm.write_training_log(result, path)
        header = path.read_text().splitlines()[0]
        assert header == "iteration,loss,step"
