import numpy as np
import pytest

from priormix.core.errors import ConfigError
from priormix.learning import model as mlp
from priormix.learning.bags import make_bags
from priormix.learning.model import MlpModel, backward, ce_loss_matrix, forward
from priormix.learning.objectives import (
    BatchSlice,
    Objective,
    ObjectiveContext,
    PrrConfig,
    biased_proportion,
    evaluate,
    partial_risk_table,
    proportion_loss,
    u_correct,
    u_flood,
    u_prr,
    unbiased_risk,
)
from priormix.learning.prior_algebra import (
    ClassPriorMatrix,
    TestPriors,
    WeightMatrix,
    compute_weights,
    nonsquare_theta,
    symmetric_theta,
)
from priormix.utils.dataset_io import make_gaussian_dataset


def _linear(W, b=None):
    W = np.asarray(W, dtype=np.float64)
    b = np.zeros(W.shape[1]) if b is None else np.asarray(b, dtype=np.float64)
    return MlpModel(layer_dims=W.shape, weights=(W,), biases=(b,))


@pytest.fixture
def pure_bags(gaussian4):
    return make_bags(gaussian4, ClassPriorMatrix(np.eye(4)), 100, rng_seed=0)


@pytest.fixture
def random_batch(rng):
    """Three bags of 5, 6 and 5 samples in 4-D."""
    return BatchSlice(tuple(rng.normal(size=(n, 4)) for n in (5, 6, 5)))


@pytest.fixture
def theta3():
    return symmetric_theta(0.4, 0.2, 3)


class TestUnbiasedRisk:
    def test_pure_bags_give_balanced_supervised_risk(self, gaussian4, pure_bags):
        model = mlp.init((2, 16, 4), rng_seed=1)
        W = compute_weights(pure_bags.theta, TestPriors.uniform(4))
        result = unbiased_risk(BatchSlice.from_bags(pure_bags), W, model)
        ce = ce_loss_matrix(forward(model, gaussian4.features))
        expected = np.mean([ce[gaussian4.class_indices(k), k - 1].mean() for k in range(1, 5)])
        assert result.value == pytest.approx(expected, rel=1e-12)
        assert result.surrogate_value == result.value

    def test_single_sample_bags_by_hand(self):
        theta = ClassPriorMatrix([[0.8, 0.2], [0.2, 0.8]])
        W = compute_weights(theta, TestPriors([0.5, 0.5]))
        model = _linear(np.eye(2))
        batch = BatchSlice((np.array([[2.0, 0.0]]), np.array([[0.0, 1.0]])))

        # bag 1 logits (2, 0), bag 2 logits (0, 1)
        ce1 = [np.log(1 + np.exp(-2.0)), np.log(1 + np.exp(2.0))]
        ce2 = [np.log(1 + np.exp(1.0)), np.log(1 + np.exp(-1.0))]
        expected = (2 / 3 * ce1[0] - 1 / 6 * ce1[1]) + (-1 / 6 * ce2[0] + 2 / 3 * ce2[1])
        assert unbiased_risk(batch, W, model).value == pytest.approx(expected, rel=1e-12)

    def test_upstream_spreads_weights_over_bag_rows(self, random_batch, theta3, small_model):
        W = compute_weights(theta3, TestPriors.uniform(3))
        upstream = unbiased_risk(random_batch, W, small_model).upstream
        assert upstream.shape == (16, 3)
        np.testing.assert_allclose(upstream[:5], np.tile(W.entries[0] / 5, (5, 1)))
        np.testing.assert_allclose(upstream[5:11], np.tile(W.entries[1] / 6, (6, 1)))


class TestPrr:
    def test_alpha_one_is_unbiased(self, random_batch, theta3, small_model):
        W = compute_weights(theta3, TestPriors.uniform(3))
        base = unbiased_risk(random_batch, W, small_model)
        prr = u_prr(random_batch, W, theta3, PrrConfig.from_weights(1.0, 2.0, W), small_model)
        assert prr.value == base.value
        np.testing.assert_array_equal(prr.upstream, base.upstream)

    def test_zero_trade_off(self, random_batch, theta3, small_model):
        W = compute_weights(theta3, TestPriors.uniform(3))
        base = unbiased_risk(random_batch, W, small_model)
        cfg = PrrConfig(alpha=0.3, s_ga=1.0, lam=np.zeros((3, 3)))
        prr = u_prr(random_batch, W, theta3, cfg, small_model)
        assert prr.value == pytest.approx(0.3 * base.value)
        np.testing.assert_allclose(prr.upstream, 0.3 * base.upstream)

    def test_partial_risks_at_flood_level(self):
        theta = ClassPriorMatrix(np.eye(2))
        W = compute_weights(theta, TestPriors.uniform(2))
        model = _linear(np.eye(2))
        # bag 1 predicted as class 1, bag 2 as class 2: zero-one partial risks equal 1 - theta
        batch = BatchSlice((np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])))
        table = partial_risk_table(batch, model, theta)
        np.testing.assert_array_equal(table.zero_one, table.flood_levels)

        cfg = PrrConfig.from_weights(0.5, 5.0, W)
        result = u_prr(batch, W, theta, cfg, model)
        base = unbiased_risk(batch, W, model)
        assert result.value == pytest.approx(0.5 * base.value)
        # every term takes the descent branch at its kink
        np.testing.assert_allclose(result.upstream, 0.5 * base.upstream + 0.5 * np.abs(W.entries))

    def test_ascent_branch_scaled_by_s_ga(self):
        theta = ClassPriorMatrix(np.eye(2))
        W = compute_weights(theta, TestPriors.uniform(2))
        model = _linear(np.eye(2))
        # both bags predicted as their own class with two samples, one mispredicted in bag 1
        batch = BatchSlice((np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.0, 1.0]])))
        table = partial_risk_table(batch, model, theta)
        np.testing.assert_allclose(table.zero_one[0], [0.5, 0.5])

        cfg = PrrConfig.from_weights(0.5, 5.0, W)
        result = u_prr(batch, W, theta, cfg, model)
        lam = np.abs(W.entries)
        # bag 1 class 2 sits below its level (0.5 < 1): gradient ascent with weight s_ga
        branch = np.array([[1.0, -5.0], [1.0, 1.0]])
        expected_reg = np.vstack([np.tile(lam[0] * branch[0] / 2, (2, 1)), lam[1] * branch[1]])
        base = unbiased_risk(batch, W, model)
        np.testing.assert_allclose(result.upstream, 0.5 * base.upstream + 0.5 * expected_reg)
        expected_value = 0.5 * base.value + 0.5 * float(np.sum(lam * np.abs(table.zero_one - table.flood_levels)))
        assert result.value == pytest.approx(expected_value)

    def test_invalid_alpha(self):
        with pytest.raises(ConfigError):
            PrrConfig(alpha=1.5, s_ga=1.0, lam=np.zeros((2, 2)))


class TestFlood:
    def test_above_level_descends(self, random_batch, theta3, small_model):
        W = compute_weights(theta3, TestPriors.uniform(3))
        base = unbiased_risk(random_batch, W, small_model)
        flooded = u_flood(random_batch, W, small_model, b=base.value - 0.2)
        assert flooded.value == base.value
        np.testing.assert_array_equal(flooded.upstream, base.upstream)

    def test_below_level_ascends(self, random_batch, theta3, small_model):
        W = compute_weights(theta3, TestPriors.uniform(3))
        base = unbiased_risk(random_batch, W, small_model)
        b = base.value + 0.3
        flooded = u_flood(random_batch, W, small_model, b=b)
        assert flooded.value == pytest.approx(base.value + 0.6)
        np.testing.assert_allclose(flooded.upstream, -base.upstream)

    def test_zero_level_with_positive_risk(self, random_batch, theta3, small_model):
        W = compute_weights(theta3, TestPriors.uniform(3))
        base = unbiased_risk(random_batch, W, small_model)
        assert base.value >= 0
        assert u_flood(random_batch, W, small_model, b=0.0).value == base.value


class TestCorrect:
    def test_non_negative_class_sums_match_unbiased(self, pure_bags):
        model = mlp.init((2, 16, 4), rng_seed=1)
        W = compute_weights(pure_bags.theta, TestPriors.uniform(4))
        batch = BatchSlice.from_bags(pure_bags)
        corrected = u_correct(batch, W, model)
        base = unbiased_risk(batch, W, model)
        assert corrected.value == pytest.approx(base.value)
        np.testing.assert_allclose(corrected.upstream, base.upstream)

    def test_negative_class_sum_raises_value(self, random_batch, small_model):
        W = WeightMatrix([[1.0, -1.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 1.0]])
        corrected = u_correct(random_batch, W, small_model)
        base = unbiased_risk(random_batch, W, small_model)
        assert corrected.value > base.value


class TestBiasedAndProportion:
    def test_symmetric_pseudo_labels(self, random_batch, small_model):
        theta = symmetric_theta(0.4, 0.2, 3)
        np.testing.assert_array_equal(theta.dominant_classes(), [0, 1, 2])
        result = biased_proportion(random_batch, theta, small_model)
        ce = ce_loss_matrix(forward(small_model, random_batch.stacked))
        expected = (ce[:5, 0].mean() + ce[5:11, 1].mean() + ce[11:, 2].mean()) / 3
        assert result.value == pytest.approx(expected)

    def test_uniform_row_maps_to_first_class(self):
        theta = ClassPriorMatrix([[0.5, 0.5], [0.2, 0.8]])
        np.testing.assert_array_equal(theta.dominant_classes(), [0, 1])

    def test_matching_proportions_reach_entropy(self):
        theta = ClassPriorMatrix([[0.7, 0.3], [0.2, 0.8]])
        model = _linear(np.eye(2))
        # softmax(log theta_m) = theta_m
        batch = BatchSlice(tuple(np.tile(np.log(row), (3, 1)) for row in theta.entries))
        entropy = -np.sum(theta.entries * np.log(theta.entries))
        assert proportion_loss(batch, theta, model).value == pytest.approx(entropy)

    def test_uniform_prediction_on_pure_bags(self):
        theta = ClassPriorMatrix(np.eye(2))
        batch = BatchSlice((np.zeros((2, 2)), np.zeros((3, 2))))
        value = proportion_loss(batch, theta, _linear(np.zeros((2, 2)))).value
        assert value == pytest.approx(2 * np.log(2.0))


class TestGradients:
    @pytest.mark.parametrize("objective,flood_b", [
        (Objective.UNBIASED, 0.0),
        (Objective.BIASED, 0.0),
        (Objective.PROP, 0.0),
        (Objective.U_CORRECT, 0.0),
        (Objective.U_STOP, 0.0),
        (Objective.U_FLOOD, 0.0),
        (Objective.U_FLOOD, 50.0),
        (Objective.U_PRR, 0.0),
    ])
    def test_upstream_matches_finite_differences(self, objective, flood_b, random_batch, theta3,
                                                 small_model, rng, finite_difference,
                                                 grad_relative_error):
        model = small_model.with_parameters(
            [p + rng.normal(scale=0.3, size=p.shape) for p in small_model.parameters()])
        W = compute_weights(theta3, TestPriors([0.2, 0.3, 0.5]))
        ctx = ObjectiveContext(weights=W, theta=theta3,
                               prr=PrrConfig.from_weights(0.5, 2.0, W), flood_b=flood_b)

        result = evaluate(objective, random_batch, model, ctx)
        analytic = backward(model, random_batch.stacked, result.upstream).parameters()
        numeric = finite_difference(
            lambda m: evaluate(objective, random_batch, m, ctx).surrogate_value, model)
        assert grad_relative_error(analytic, numeric) < 1e-4


def test_zero_one_partial_risks_track_priors():
    # class 1 centred at +5, class 2 at -5; the threshold at 0 is Bayes-optimal
    source = make_gaussian_dataset(2000, 2, 1, separation=5.0, rng_seed=4)
    bayes = _linear([[1.0, -1.0]])
    theta = nonsquare_theta(2, rng_seed=8)
    bags = make_bags(source, theta, 500, rng_seed=6)
    table = partial_risk_table(BatchSlice.from_bags(bags), bayes, theta)
    assert np.all(np.abs(table.zero_one - (1.0 - theta.entries)) <= 2.0 / np.sqrt(500))


def test_unknown_objective():
    with pytest.raises(ValueError):
        Objective("nnpu")
