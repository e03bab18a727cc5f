import numpy as np
import pytest

from tfmeta import meta
from tfmeta import tensor as T
from tfmeta.datapipe import WindowDataset
from tfmeta.errors import CapacityError, ContractError, NumericError


def toy_dataset(per_class=4, n_classes=3, width=1):
    """Windows of class c hold the constant value c."""
    windows = np.repeat(np.arange(n_classes, dtype=float), per_class)[:, None]
    windows = np.tile(windows, (1, width))
    labels = np.repeat(np.arange(n_classes), per_class)
    return WindowDataset(windows, labels, 1.0)


def quadratic_loss(params, x, y):
    # 0.5 * mean((theta - x)^2): convex pull of theta toward the batch values
    diff = T.sub(T.broadcast_to(params["theta"], (len(x), 1)), T.Tensor(x[:, :1]))
    return T.scale(T.mean(T.mul(diff, diff)), 0.5)


def pure_quadratic(params, x, y):
    return T.scale(T.reduce_sum(T.mul(params["theta"], params["theta"])), 0.5)


def linear_loss(params, x, y):
    return T.reduce_sum(T.mul(params["theta"], T.Tensor([2.0, -3.0])))


def one_task():
    z = np.zeros((1, 1))
    return meta.EpisodeTask(z, np.zeros(1, int), z, np.zeros(1, int))


# ---------------------------------------------------------------------------
# task sampling


def test_sample_tasks_contract():
    ds = toy_dataset(per_class=2)
    tasks = meta.sample_tasks(ds, n_way=3, k_shot=1, n_query=1, count=4, seed=0)
    assert len(tasks) == 4
    for t in tasks:
        assert t.support_x.shape == (3, 1) and t.query_x.shape == (3, 1)
        assert sorted(t.support_y) == [0, 1, 2]
        assert sorted(t.query_y) == [0, 1, 2]
        # disjoint: any support/query pair from one class differs by draw
        assert set(t.class_map.values()) == {0, 1, 2}  # bijection onto episode labels
        assert len(t.class_map) == 3


def test_sample_tasks_deterministic():
    ds = toy_dataset(per_class=5)
    a = meta.sample_tasks(ds, 3, 2, 2, count=3, seed=42)
    b = meta.sample_tasks(ds, 3, 2, 2, count=3, seed=42)
    for ta, tb in zip(a, b):
        np.testing.assert_array_equal(ta.support_x, tb.support_x)
        np.testing.assert_array_equal(ta.query_x, tb.query_x)
        assert ta.class_map == tb.class_map


def test_sample_tasks_support_query_disjoint():
    rng = np.random.default_rng(0)
    windows = rng.standard_normal((30, 4))
    labels = np.repeat(np.arange(3), 10)
    ds = WindowDataset(windows, labels, 1.0)
    for t in meta.sample_tasks(ds, 3, 2, 3, count=10, seed=1):
        sup = {tuple(row) for row in t.support_x}
        qry = {tuple(row) for row in t.query_x}
        assert not sup & qry


def test_sample_tasks_capacity_errors():
    ds = toy_dataset(per_class=2, n_classes=2)
    with pytest.raises(CapacityError):
        meta.sample_tasks(ds, n_way=3, k_shot=1, n_query=1, count=1, seed=0)
    with pytest.raises(CapacityError) as exc:
        meta.sample_tasks(ds, n_way=2, k_shot=2, n_query=1, count=1, seed=0)
    assert "class 0" in str(exc.value)


def test_sample_tasks_class_frequencies():
    ds = toy_dataset(per_class=3, n_classes=6)
    counts = np.zeros(6)
    for t in meta.sample_tasks(ds, n_way=3, k_shot=1, n_query=1, count=1000, seed=7):
        for c in t.class_map:
            counts[c] += 1
    freq = counts / 1000.0
    np.testing.assert_allclose(freq, 0.5, atol=0.05)  # n_way / n_classes = 1/2


# ---------------------------------------------------------------------------
# inner adaptation


def test_inner_adapt_quadratic_one_step():
    params = T.ParamSet({"theta": T.parameter([1.0, 2.0])})
    cfg = meta.MetaConfig(inner_lr=0.1, inner_steps=1)
    adapted = meta.inner_adapt(params, (np.zeros((1, 1)), np.zeros(1)), cfg, pure_quadratic)
    np.testing.assert_allclose(adapted["theta"].data, [0.9, 1.8], atol=1e-12)
    np.testing.assert_allclose(params["theta"].data, [1.0, 2.0])  # untouched


def test_inner_adapt_two_steps():
    params = T.ParamSet({"theta": T.parameter([1.0])})
    cfg = meta.MetaConfig(inner_lr=0.1, inner_steps=2)
    adapted = meta.inner_adapt(params, (np.zeros((1, 1)), np.zeros(1)), cfg, pure_quadratic)
    np.testing.assert_allclose(adapted["theta"].data, [0.81], atol=1e-12)


def test_inner_adapt_zero_lr_is_noop():
    params = T.ParamSet({"theta": T.parameter([1.0, -2.0])})
    cfg = meta.MetaConfig(inner_lr=0.0)
    adapted = meta.inner_adapt(params, (np.zeros((1, 1)), np.zeros(1)), cfg, pure_quadratic)
    np.testing.assert_array_equal(adapted["theta"].data, [1.0, -2.0])


def test_inner_adapt_empty_support_rejected():
    params = T.ParamSet({"theta": T.parameter([1.0])})
    cfg = meta.MetaConfig()
    with pytest.raises(ContractError):
        meta.inner_adapt(params, (np.zeros((0, 1)), np.zeros(0)), cfg, pure_quadratic)


def test_inner_adapt_nonfinite_reports_parameter():
    params = T.ParamSet({"theta": T.parameter([np.inf])})
    cfg = meta.MetaConfig()
    with pytest.raises(NumericError) as exc:
        meta.inner_adapt(params, (np.zeros((1, 1)), np.zeros(1)), cfg, pure_quadratic)
    assert "theta" in str(exc.value)


# ---------------------------------------------------------------------------
# outer updates (closed-form oracles)


def test_outer_update_first_order_oracle():
    params = T.ParamSet({"theta": T.parameter([1.0])})
    cfg = meta.MetaConfig(inner_lr=0.1, outer_lr=0.5, order="first")
    meta.outer_update(params, [one_task()], cfg, pure_quadratic)
    np.testing.assert_allclose(params["theta"].data, [0.55], atol=1e-9)


def test_outer_update_second_order_oracle():
    params = T.ParamSet({"theta": T.parameter([1.0])})
    cfg = meta.MetaConfig(inner_lr=0.1, outer_lr=0.5, order="second")
    meta.outer_update(params, [one_task()], cfg, pure_quadratic)
    np.testing.assert_allclose(params["theta"].data, [0.595], atol=1e-9)


def test_outer_update_zero_beta_is_noop():
    params = T.ParamSet({"theta": T.parameter([1.0])})
    cfg = meta.MetaConfig(inner_lr=0.1, outer_lr=0.0)
    meta.outer_update(params, [one_task()], cfg, pure_quadratic)
    np.testing.assert_array_equal(params["theta"].data, [1.0])


def test_first_and_second_order_agree_on_linear_loss():
    results = {}
    for order in ("first", "second"):
        params = T.ParamSet({"theta": T.parameter([1.0, 1.0])})
        cfg = meta.MetaConfig(inner_lr=0.1, outer_lr=0.5, order=order)
        meta.outer_update(params, [one_task()], cfg, linear_loss)
        results[order] = params["theta"].data.copy()
    np.testing.assert_allclose(results["first"], results["second"], atol=1e-12)


# ---------------------------------------------------------------------------
# meta training loop


def test_meta_train_zero_iterations():
    params = T.ParamSet({"theta": T.parameter([5.0])})
    cfg = meta.MetaConfig(n_way=3, k_shot=1, n_query=1)
    history = meta.meta_train(toy_dataset(), params, cfg, 0, quadratic_loss)
    assert history == []
    np.testing.assert_array_equal(params["theta"].data, [5.0])


def test_meta_train_quadratic_family_loss_decreases():
    params = T.ParamSet({"theta": T.parameter([5.0])})
    cfg = meta.MetaConfig(
        inner_lr=0.1, outer_lr=0.01, n_way=3, k_shot=1, n_query=1, tasks_per_batch=2
    )
    history = meta.meta_train(toy_dataset(), params, cfg, 10, quadratic_loss, seed=0)
    losses = [h["query_loss"] for h in history]
    assert len(losses) == 10
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_meta_train_history_length_and_accuracy_hook():
    params = T.ParamSet({"theta": T.parameter([0.5])})
    cfg = meta.MetaConfig(inner_lr=0.05, outer_lr=0.01, n_way=3, k_shot=1, n_query=1)

    def count_correct(p, x, y):
        return int(len(y))  # stub predictor: everything correct

    history = meta.meta_train(
        toy_dataset(), params, cfg, 4, quadratic_loss, seed=1, count_correct=count_correct
    )
    assert len(history) == 4
    assert all(h["query_accuracy"] == 1.0 for h in history)


def test_meta_config_validation():
    with pytest.raises(ContractError):
        meta.MetaConfig(order="third")
    with pytest.raises(ContractError):
        meta.MetaConfig(inner_steps=0)
    with pytest.raises(ContractError):
        meta.MetaConfig(inner_lr=-0.1)
