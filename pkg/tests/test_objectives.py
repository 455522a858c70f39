import math

import numpy as np
import pytest

import oracles
from phqfusion.errors import DataError, DimensionError
from phqfusion.numeric import Parameter, grad_check
from phqfusion.objectives import (
    accuracy,
    ccc_loss,
    ccc_metric,
    classification_metrics,
    cross_entropy,
    macro_f1,
    mae,
    regression_metrics,
    rmse,
    screen_label,
    severity_bins,
)


# -- concordance -----------------------------------------------------------------------

def test_ccc_loss_perfect_agreement():
    loss, stats = ccc_loss([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert abs(float(loss.data) - oracles.CCC_LOSS_PERFECT) <= 1e-9
    assert stats.r == pytest.approx(1.0)


def test_ccc_loss_reversed():
    loss, _ = ccc_loss([3.0, 2.0, 1.0], [1.0, 2.0, 3.0])
    assert abs(float(loss.data) - oracles.CCC_LOSS_REVERSED) <= 1e-9


def test_ccc_loss_constant_prediction():
    loss, stats = ccc_loss([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert abs(float(loss.data) - oracles.CCC_LOSS_CONSTANT_PRED) <= 1e-9
    assert stats.s_p == 0.0


def test_ccc_metric_penalises_mean_shift():
    assert abs(ccc_metric([2.0, 3.0, 4.0], [1.0, 2.0, 3.0]) - oracles.CCC_SHIFTED) <= 1e-12


def test_ccc_constant_equal_batch_stays_finite():
    loss, stats = ccc_loss([5.0, 5.0], [5.0, 5.0])
    assert math.isfinite(float(loss.data))
    assert stats.ccc == 0.0


def test_ccc_needs_two_samples():
    with pytest.raises(DataError, match="fewer than two samples"):
        ccc_loss([1.0], [1.0])
    with pytest.raises(DataError):
        ccc_metric([1.0], [2.0])


def test_ccc_length_mismatch():
    with pytest.raises(DimensionError):
        ccc_loss([1.0, 2.0, 3.0], [1.0, 2.0])


def test_ccc_loss_and_metric_agree(rng):
    p, t = rng.normal(size=20), rng.normal(size=20)
    loss, stats = ccc_loss(p, t)
    assert 1.0 - float(loss.data) == pytest.approx(ccc_metric(p, t), abs=1e-12)
    assert stats.ccc == pytest.approx(ccc_metric(p, t), abs=1e-12)


def test_ccc_loss_gradient(rng):
    p = Parameter(rng.normal(size=6), name="pred")
    t = rng.normal(size=6)
    report = grad_check(lambda: ccc_loss(p, t)[0], params=[p])
    assert report.passed, report


# -- cross entropy ---------------------------------------------------------------------

def test_cross_entropy_uniform_logits():
    assert float(cross_entropy(np.zeros((1, 5)), [2]).data) == pytest.approx(oracles.CE_UNIFORM_5, abs=1e-12)


def test_cross_entropy_confident_correct_is_near_zero():
    assert float(cross_entropy(np.array([[30.0, 0.0]]), [0]).data) < 1e-12


def test_cross_entropy_label_out_of_range():
    with pytest.raises(DataError):
        cross_entropy(np.zeros((1, 2)), [2])
    with pytest.raises(DataError):
        cross_entropy(np.zeros((1, 2)), [-1])


def test_cross_entropy_shape_errors():
    with pytest.raises(DimensionError):
        cross_entropy(np.zeros(5), [0])
    with pytest.raises(DimensionError):
        cross_entropy(np.zeros((2, 5)), [0])


def test_cross_entropy_gradient(rng):
    z = Parameter(rng.normal(size=(4, 5)), name="logits")
    report = grad_check(lambda: cross_entropy(z, [0, 4, 2, 2]), params=[z])
    assert report.passed, report


# -- regression and classification metrics ----------------------------------------------

def test_mae_and_rmse_examples():
    assert mae([0.0, 2.0], [1.0, 3.0]) == oracles.MAE_0_2_VS_1_3
    assert rmse([0.0, 2.0], [1.0, 3.0]) == oracles.RMSE_0_2_VS_1_3
    assert rmse([0.0, 0.0], [0.0, 2.0]) == pytest.approx(math.sqrt(2.0))


def test_metrics_need_samples_and_matching_lengths():
    with pytest.raises(DataError):
        mae([], [])
    with pytest.raises(DimensionError):
        rmse([1.0], [1.0, 2.0])


def test_regression_metrics_keys(rng):
    assert set(regression_metrics(rng.normal(size=5), rng.normal(size=5))) == {"ccc", "mae", "rmse"}


def test_macro_f1_perfect_and_mixed():
    assert macro_f1([0, 1, 1, 0], [0, 1, 1, 0], 2) == 1.0
    # class 0: tp 1 fp 0 fn 1 -> 2/3; class 1: tp 2 fp 1 fn 0 -> 4/5
    assert macro_f1([0, 1, 1, 1], [0, 0, 1, 1], 2) == pytest.approx((2 / 3 + 4 / 5) / 2)


def test_macro_f1_warns_on_absent_class():
    with pytest.warns(UserWarning, match="absent"):
        macro_f1([0, 1], [0, 1], 5)


def test_classification_metrics_is_quiet(recwarn):
    out = classification_metrics([0, 1], [0, 1], 5)
    assert out["accuracy"] == 1.0
    assert not recwarn.list


def test_accuracy():
    assert accuracy([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5


# -- label derivation -------------------------------------------------------------------

@pytest.mark.parametrize("score, band", sorted(oracles.SEVERITY_TABLE.items()))
def test_severity_bins_table(score, band):
    assert severity_bins(score) == band


def test_severity_bins_fractional_scores():
    assert severity_bins(12.4) == oracles.SEVERITY_12_4
    assert severity_bins(3.0) == oracles.SEVERITY_3_0
    assert severity_bins(4.999) == 0


def test_severity_bins_range():
    assert severity_bins(27, "phq9") == 4
    with pytest.raises(DataError):
        severity_bins(25, "phq8")
    with pytest.raises(DataError):
        severity_bins(-0.5)
    with pytest.raises(DataError):
        severity_bins(3, "bdi")


def test_severity_bins_monotone():
    scores = np.linspace(0, 24, 2401)
    bands = [severity_bins(s) for s in scores]
    assert all(a <= b for a, b in zip(bands, bands[1:]))


def test_screen_label_cutoff():
    assert [screen_label(s) for s in (0, 9, 9.99, 10, 24)] == [0, 0, 0, 1, 1]


# -- properties -------------------------------------------------------------------------

def test_ccc_properties_over_random_trials():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        n = int(rng.integers(2, 12))
        p, t = rng.normal(size=n), rng.normal(size=n)
        c = ccc_metric(p, t)
        assert -1.0 - 1e-12 <= c <= 1.0 + 1e-12
        assert c == pytest.approx(ccc_metric(t, p), abs=1e-12)
        a, b = rng.uniform(0.1, 5.0), rng.normal()
        assert ccc_metric(a * p + b, a * t + b) == pytest.approx(c, abs=1e-9)
        assert mae(p, t) <= rmse(p, t) + 1e-12
