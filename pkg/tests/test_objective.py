import numpy as np
import pytest

from tfmeta import objective as O
from tfmeta import tensor as T
from tfmeta.errors import ContractError, DimensionError
from tfmeta.gradcheck import check_function


def test_align_loss_zero_at_equal():
    z = T.constant(np.random.default_rng(0).standard_normal((4, 6)))
    assert O.align_loss(z, z).item() <= 1e-12


def test_align_loss_orthogonal_rows_is_two():
    zt = T.constant([[1.0, 0.0], [0.0, 1.0]])
    zf = T.constant([[0.0, 1.0], [1.0, 0.0]])
    assert abs(O.align_loss(zt, zf).item() - 2.0) <= 1e-9


def test_align_loss_scale_invariant():
    rng = np.random.default_rng(1)
    zt = T.constant(rng.standard_normal((5, 8)))
    zf_arr = rng.standard_normal((5, 8))
    base = O.align_loss(zt, T.constant(zf_arr)).item()
    scaled = O.align_loss(zt, T.constant(3.7 * zf_arr)).item()
    assert abs(base - scaled) <= 1e-9


def test_align_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        O.align_loss(T.constant(np.zeros((2, 3))), T.constant(np.zeros((2, 4))))


def test_align_loss_stop_target_blocks_time_gradient():
    rng = np.random.default_rng(2)
    zt = T.parameter(rng.standard_normal((3, 4)))
    zf = T.parameter(rng.standard_normal((3, 4)))
    loss = O.align_loss(zt, zf, stop_target=True)
    T.backward(loss)
    assert zt.grad is None
    assert zf.grad is not None


def test_align_loss_gradcheck():
    rng = np.random.default_rng(3)
    zt = T.parameter(rng.standard_normal((4, 5)))
    zf = T.parameter(rng.standard_normal((4, 5)))
    assert check_function(lambda: O.align_loss(zt, zf), [zt, zf]) <= 1e-4


def test_cls_loss_uniform_logits():
    loss = O.cls_loss(T.constant(np.zeros((5, 3))), [0, 1, 2, 0, 1])
    assert abs(loss.item() - np.log(3.0)) <= 1e-12


def test_cls_loss_confident_correct_is_small():
    logits = np.full((2, 3), -50.0)
    logits[0, 1] = 50.0
    logits[1, 0] = 50.0
    assert O.cls_loss(T.constant(logits), [1, 0]).item() <= 1e-12


def test_cls_loss_gradcheck():
    rng = np.random.default_rng(4)
    logits = T.parameter(rng.standard_normal((6, 4)))
    labels = rng.integers(0, 4, size=6)
    assert check_function(lambda: O.cls_loss(logits, labels), [logits]) <= 1e-4


def _orthogonal_design():
    # exactly decorrelated, zero-mean, unit-variance columns
    return np.array(
        [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]], dtype=float
    )


def test_cross_corr_identity_is_zero():
    z = T.constant(_orthogonal_design())
    assert O.cross_corr_loss(z, z).item() <= 1e-9


def test_cross_corr_anticorrelated_diagonal():
    z = _orthogonal_design()
    loss = O.cross_corr_loss(T.constant(z), T.constant(-z))
    # each of the 2 diagonal entries contributes (1 - (-1))^2 = 4
    assert abs(loss.item() - 8.0) <= 1e-8


def test_cross_corr_duplicate_columns_penalized():
    col = np.array([1.0, -1.0, 2.0, -2.0])
    z = np.stack([col, col], axis=1)
    loss = O.cross_corr_loss(T.constant(z), T.constant(z))
    assert loss.item() > 1e-3  # off-diagonal redundancy detected


def test_cross_corr_small_batch_rejected():
    z = T.constant(np.ones((1, 3)))
    with pytest.raises(ContractError):
        O.cross_corr_loss(z, z)


def test_cross_corr_gradcheck():
    rng = np.random.default_rng(5)
    za = T.parameter(rng.standard_normal((6, 3)))
    zb = T.parameter(rng.standard_normal((6, 3)))
    assert check_function(lambda: O.cross_corr_loss(za, zb), [za, zb]) <= 1e-4


def test_final_loss_zero_parts():
    w = O.LossWeights()
    parts = [T.constant(0.0)] * 4
    assert O.final_loss(*parts, w).item() == 0.0


def test_final_loss_weighted_sum():
    w = O.LossWeights(cls_time=1.0, cls_freq=1.0, meta=1.0)
    loss = O.final_loss(
        T.constant(0.5), T.constant(0.2), T.constant(0.2), T.constant(0.1), w
    )
    assert abs(loss.item() - 1.0) <= 1e-12


def test_final_loss_meta_weight_scales_gradient():
    theta = T.parameter([2.0])

    def run(meta_weight):
        theta.zero_grad()
        w = O.LossWeights(meta=meta_weight)
        meta_part = T.scale(T.reduce_sum(T.mul(theta, theta)), 0.5)
        loss = O.final_loss(
            T.constant(0.0), T.constant(0.0), T.constant(0.0), meta_part, w
        )
        T.backward(loss)
        return theta.grad.copy()

    g1 = run(1.0)
    g2 = run(2.0)
    np.testing.assert_allclose(g2, 2.0 * g1, atol=1e-9)


def test_losses_nonnegative():
    rng = np.random.default_rng(6)
    for _ in range(5):
        zt = T.constant(rng.standard_normal((4, 3)))
        zf = T.constant(rng.standard_normal((4, 3)))
        assert O.align_loss(zt, zf).item() >= 0.0
        assert O.cross_corr_loss(zt, zf).item() >= 0.0


def test_weights_validation():
    with pytest.raises(ContractError):
        O.LossWeights(cls_time=-1.0)
    with pytest.raises(ContractError):
        O.LossWeights(meta=float("nan"))
